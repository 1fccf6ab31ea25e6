#pragma once

// Reverse-mode automatic differentiation over scalars.
//
// A Tape is an append-only list of nodes. Each node stores its forward value
// and the local partial derivative with respect to each parent. Parents always
// precede children, so a single reverse sweep propagates adjoints.
//
// Subgradient conventions (pinned by tests):
//   max0(x) at x == 0 -> partial 0
//   min(a, b) at a == b -> gradient routed to a

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace dualsrc::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kMax0,
  kMin,
  kMax,
  kExp,
  kLog,
  kTanh,
  kSoftplus,
  kSquare,
  kDot,
  kSum,
  kCustom,
};

std::string_view op_name(Op op);

class Tape;

// Handle to a tape node. Cheap to copy; only valid while its tape is alive and
// has not been cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  double value() const;
  std::uint32_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  Tape() { begin_.push_back(0); }

  Var leaf(double value);
  // Creates one leaf per entry; ids are contiguous.
  std::vector<Var> leaves(std::span<const double> values);

  // Node with explicit local partials; `parents` and `partials` must align.
  Var push(Op op, double value, std::span<const std::uint32_t> parents,
           std::span<const double> partials);
  Var push1(Op op, double value, std::uint32_t p, double dp);
  Var push2(Op op, double value, std::uint32_t a, double da, std::uint32_t b,
            double db);

  double value(std::uint32_t id) const { return values_[id]; }
  std::size_t size() const { return values_.size(); }
  std::size_t edge_count() const { return parent_.size(); }

  // Sets adjoint(output) = 1 (all others 0) and sweeps.
  void backward(Var output);
  // Sweeps using whatever adjoints were seeded with `seed`.
  void backward_seeded();
  void zero_adjoints();
  void seed(Var v, double adj);
  double adjoint(Var v) const { return adj_[v.id()]; }
  double adjoint(std::uint32_t id) const { return adj_[id]; }
  // Adjoints of a contiguous id range [first, first + n).
  void copy_adjoints(std::uint32_t first, std::span<double> out) const;

  Op op(std::uint32_t id) const { return op_[id]; }
  std::span<const std::uint32_t> parents(std::uint32_t id) const;
  std::span<const double> partials(std::uint32_t id) const;

  void clear();
  void reserve(std::size_t nodes, std::size_t edges);

 private:
  Var finish(Op op, double value);

  std::vector<double> values_;
  std::vector<double> adj_;
  std::vector<Op> op_;
  std::vector<std::uint32_t> begin_;
  std::vector<std::uint32_t> parent_;
  std::vector<double> partial_;
};

inline double Var::value() const { return tape_->value(id_); }

Var operator+(Var a, Var b);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator-(Var a);
Var operator*(Var a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
inline Var& operator+=(Var& a, Var b) { return a = a + b; }
inline Var& operator+=(Var& a, double b) { return a = a + b; }
inline Var& operator-=(Var& a, Var b) { return a = a - b; }

Var max0(Var x);
Var min(Var a, Var b);
Var min(Var a, double b);
Var min(double a, Var b);
Var max(Var a, Var b);
Var max(Var a, double b);
Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var softplus(Var x);
Var square(Var x);
Var sum(std::span<const Var> xs);
Var dot(std::span<const Var> a, std::span<const Var> b);
Var dot(std::span<const double> w, std::span<const Var> x);
// bias + w.x as a single node.
Var affine(std::span<const Var> w, std::span<const Var> x, Var bias);
Var affine(std::span<const double> w, std::span<const Var> x, double bias);

// Double overloads so templated model code compiles for both scalar types.
double max0(double x);
double softplus(double x);
double square(double x);
double sum(std::span<const double> xs);
double dot(std::span<const double> a, std::span<const double> b);
double affine(std::span<const double> w, std::span<const double> x,
              double bias);
inline double value_of(double x) { return x; }
inline double value_of(Var x) { return x.value(); }

// Numerically stable sigmoid, the derivative of softplus.
double sigmoid(double x);

}  // namespace dualsrc::ad
