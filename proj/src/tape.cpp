#include "dualsrc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualsrc/errors.hpp"

namespace dualsrc::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kMax0: return "max0";
    case Op::kMin: return "min";
    case Op::kMax: return "max";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kTanh: return "tanh";
    case Op::kSoftplus: return "softplus";
    case Op::kSquare: return "square";
    case Op::kDot: return "dot";
    case Op::kSum: return "sum";
    case Op::kCustom: return "custom";
  }
  return "?";
}

Var Tape::finish(Op op, double value) {
  const auto id = static_cast<std::uint32_t>(values_.size());
  if (!std::isfinite(value)) {
    throw NumericError("non-finite value produced by " +
                           std::string(op_name(op)) + " at node " +
                           std::to_string(id),
                       id);
  }
  values_.push_back(value);
  op_.push_back(op);
  begin_.push_back(static_cast<std::uint32_t>(parent_.size()));
  return Var(this, id);
}

Var Tape::leaf(double value) { return finish(Op::kLeaf, value); }

std::vector<Var> Tape::leaves(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(leaf(v));
  return out;
}

Var Tape::push(Op op, double value, std::span<const std::uint32_t> parents,
               std::span<const double> partials) {
  if (parents.size() != partials.size()) {
    throw DomainError("tape push: parents/partials length mismatch");
  }
  parent_.insert(parent_.end(), parents.begin(), parents.end());
  partial_.insert(partial_.end(), partials.begin(), partials.end());
  return finish(op, value);
}

Var Tape::push1(Op op, double value, std::uint32_t p, double dp) {
  parent_.push_back(p);
  partial_.push_back(dp);
  return finish(op, value);
}

Var Tape::push2(Op op, double value, std::uint32_t a, double da,
                std::uint32_t b, double db) {
  parent_.push_back(a);
  partial_.push_back(da);
  parent_.push_back(b);
  partial_.push_back(db);
  return finish(op, value);
}

void Tape::zero_adjoints() { adj_.assign(values_.size(), 0.0); }

void Tape::seed(Var v, double adj) {
  if (adj_.size() != values_.size()) zero_adjoints();
  adj_[v.id()] += adj;
}

void Tape::backward(Var output) {
  zero_adjoints();
  adj_[output.id()] = 1.0;
  backward_seeded();
}

void Tape::backward_seeded() {
  if (adj_.size() != values_.size()) zero_adjoints();
  for (std::size_t k = values_.size(); k-- > 0;) {
    const double g = adj_[k];
    if (g == 0.0) continue;
    const std::uint32_t b = begin_[k];
    const std::uint32_t e = begin_[k + 1];
    for (std::uint32_t j = b; j < e; ++j) adj_[parent_[j]] += g * partial_[j];
  }
}

void Tape::copy_adjoints(std::uint32_t first, std::span<double> out) const {
  std::copy_n(adj_.begin() + first, out.size(), out.begin());
}

std::span<const std::uint32_t> Tape::parents(std::uint32_t id) const {
  return {parent_.data() + begin_[id], begin_[id + 1] - begin_[id]};
}

std::span<const double> Tape::partials(std::uint32_t id) const {
  return {partial_.data() + begin_[id], begin_[id + 1] - begin_[id]};
}

void Tape::clear() {
  values_.clear();
  adj_.clear();
  op_.clear();
  begin_.assign(1, 0);
  parent_.clear();
  partial_.clear();
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  values_.reserve(nodes);
  op_.reserve(nodes);
  begin_.reserve(nodes + 1);
  parent_.reserve(edges);
  partial_.reserve(edges);
}

// ---- operators ----

Var operator+(Var a, Var b) {
  return a.tape()->push2(Op::kAdd, a.value() + b.value(), a.id(), 1.0, b.id(),
                         1.0);
}
Var operator+(Var a, double b) {
  return a.tape()->push1(Op::kAdd, a.value() + b, a.id(), 1.0);
}
Var operator+(double a, Var b) { return b + a; }

Var operator-(Var a, Var b) {
  return a.tape()->push2(Op::kSub, a.value() - b.value(), a.id(), 1.0, b.id(),
                         -1.0);
}
Var operator-(Var a, double b) {
  return a.tape()->push1(Op::kSub, a.value() - b, a.id(), 1.0);
}
Var operator-(double a, Var b) {
  return b.tape()->push1(Op::kSub, a - b.value(), b.id(), -1.0);
}
Var operator-(Var a) {
  return a.tape()->push1(Op::kNeg, -a.value(), a.id(), -1.0);
}

Var operator*(Var a, Var b) {
  return a.tape()->push2(Op::kMul, a.value() * b.value(), a.id(), b.value(),
                         b.id(), a.value());
}
Var operator*(Var a, double b) {
  return a.tape()->push1(Op::kMul, a.value() * b, a.id(), b);
}
Var operator*(double a, Var b) { return b * a; }

Var operator/(Var a, Var b) {
  const double bv = b.value();
  if (bv == 0.0) {
    throw NumericError("division by zero at node " +
                           std::to_string(a.tape()->size()),
                       a.tape()->size());
  }
  const double q = a.value() / bv;
  return a.tape()->push2(Op::kDiv, q, a.id(), 1.0 / bv, b.id(), -q / bv);
}
Var operator/(Var a, double b) {
  if (b == 0.0) {
    throw NumericError("division by zero at node " +
                           std::to_string(a.tape()->size()),
                       a.tape()->size());
  }
  return a.tape()->push1(Op::kDiv, a.value() / b, a.id(), 1.0 / b);
}
Var operator/(double a, Var b) {
  const double bv = b.value();
  if (bv == 0.0) {
    throw NumericError("division by zero at node " +
                           std::to_string(b.tape()->size()),
                       b.tape()->size());
  }
  return b.tape()->push1(Op::kDiv, a / bv, b.id(), -a / (bv * bv));
}

Var max0(Var x) {
  const double v = x.value();
  return x.tape()->push1(Op::kMax0, v > 0.0 ? v : 0.0, x.id(),
                         v > 0.0 ? 1.0 : 0.0);
}

Var min(Var a, Var b) {
  const bool first = a.value() <= b.value();
  return a.tape()->push2(Op::kMin, first ? a.value() : b.value(), a.id(),
                         first ? 1.0 : 0.0, b.id(), first ? 0.0 : 1.0);
}
Var min(Var a, double b) {
  const bool first = a.value() <= b;
  return a.tape()->push1(Op::kMin, first ? a.value() : b, a.id(),
                         first ? 1.0 : 0.0);
}
Var min(double a, Var b) {
  const bool first = a <= b.value();
  return b.tape()->push1(Op::kMin, first ? a : b.value(), b.id(),
                         first ? 0.0 : 1.0);
}

Var max(Var a, Var b) {
  const bool first = a.value() >= b.value();
  return a.tape()->push2(Op::kMax, first ? a.value() : b.value(), a.id(),
                         first ? 1.0 : 0.0, b.id(), first ? 0.0 : 1.0);
}
Var max(Var a, double b) {
  const bool first = a.value() >= b;
  return a.tape()->push1(Op::kMax, first ? a.value() : b, a.id(),
                         first ? 1.0 : 0.0);
}

Var exp(Var x) {
  const double e = std::exp(x.value());
  return x.tape()->push1(Op::kExp, e, x.id(), e);
}

Var log(Var x) {
  const double v = x.value();
  if (!(v > 0.0)) {
    throw NumericError("log of non-positive value at node " +
                           std::to_string(x.tape()->size()),
                       x.tape()->size());
  }
  return x.tape()->push1(Op::kLog, std::log(v), x.id(), 1.0 / v);
}

Var tanh(Var x) {
  const double t = std::tanh(x.value());
  return x.tape()->push1(Op::kTanh, t, x.id(), 1.0 - t * t);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Var softplus(Var x) {
  const double v = x.value();
  return x.tape()->push1(Op::kSoftplus, softplus(v), x.id(), sigmoid(v));
}

Var square(Var x) {
  const double v = x.value();
  return x.tape()->push1(Op::kSquare, v * v, x.id(), 2.0 * v);
}

double max0(double x) { return x > 0.0 ? x : 0.0; }
double square(double x) { return x * x; }

double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double affine(std::span<const double> w, std::span<const double> x,
              double bias) {
  return bias + dot(w, x);
}

namespace {

Tape* tape_of(std::span<const Var> xs) {
  for (const Var& v : xs) {
    if (v.tape() != nullptr) return v.tape();
  }
  throw DomainError("tape op on empty operand list");
}

// Scratch buffers reused across calls on the same thread.
struct Scratch {
  std::vector<std::uint32_t> parents;
  std::vector<double> partials;
  void reset(std::size_t n) {
    parents.clear();
    partials.clear();
    parents.reserve(n);
    partials.reserve(n);
  }
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

}  // namespace

Var sum(std::span<const Var> xs) {
  Tape* t = tape_of(xs);
  auto& s = scratch();
  s.reset(xs.size());
  double v = 0.0;
  for (const Var& x : xs) {
    v += x.value();
    s.parents.push_back(x.id());
    s.partials.push_back(1.0);
  }
  return t->push(Op::kSum, v, s.parents, s.partials);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw DomainError("dot: length mismatch");
  Tape* t = tape_of(a);
  auto& s = scratch();
  s.reset(2 * a.size());
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double av = a[i].value();
    const double bv = b[i].value();
    v += av * bv;
    s.parents.push_back(a[i].id());
    s.partials.push_back(bv);
    s.parents.push_back(b[i].id());
    s.partials.push_back(av);
  }
  return t->push(Op::kDot, v, s.parents, s.partials);
}

Var dot(std::span<const double> w, std::span<const Var> x) {
  if (w.size() != x.size()) throw DomainError("dot: length mismatch");
  Tape* t = tape_of(x);
  auto& s = scratch();
  s.reset(x.size());
  double v = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    v += w[i] * x[i].value();
    s.parents.push_back(x[i].id());
    s.partials.push_back(w[i]);
  }
  return t->push(Op::kDot, v, s.parents, s.partials);
}

Var affine(std::span<const Var> w, std::span<const Var> x, Var bias) {
  if (w.size() != x.size()) throw DomainError("affine: length mismatch");
  Tape* t = bias.tape();
  auto& s = scratch();
  s.reset(2 * x.size() + 1);
  double v = bias.value();
  s.parents.push_back(bias.id());
  s.partials.push_back(1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wv = w[i].value();
    const double xv = x[i].value();
    v += wv * xv;
    s.parents.push_back(w[i].id());
    s.partials.push_back(xv);
    s.parents.push_back(x[i].id());
    s.partials.push_back(wv);
  }
  return t->push(Op::kDot, v, s.parents, s.partials);
}

Var affine(std::span<const double> w, std::span<const Var> x, double bias) {
  if (w.size() != x.size()) throw DomainError("affine: length mismatch");
  Tape* t = tape_of(x);
  auto& s = scratch();
  s.reset(x.size());
  double v = bias;
  for (std::size_t i = 0; i < x.size(); ++i) {
    v += w[i] * x[i].value();
    s.parents.push_back(x[i].id());
    s.partials.push_back(w[i]);
  }
  return t->push(Op::kDot, v, s.parents, s.partials);
}

}  // namespace dualsrc::ad
