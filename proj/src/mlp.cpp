#include "dualsrc/mlp.hpp"

#include <cmath>
#include <random>

#include "dualsrc/blob.hpp"
#include "dualsrc/errors.hpp"
#include "dualsrc/kernels.hpp"

namespace dualsrc {

namespace {

constexpr char kParamMagic[4] = {'D', 'S', 'P', '1'};

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kTanh: return std::tanh(x);
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kSoftplus: return ad::softplus(x);
  }
  return x;
}

ad::Var activate(Activation a, ad::Var x) {
  switch (a) {
    case Activation::kTanh: return ad::tanh(x);
    case Activation::kRelu: return ad::max0(x);
    case Activation::kSoftplus: return ad::softplus(x);
  }
  return x;
}

void check_layout(const MlpParams& p, std::size_t weights, std::size_t input) {
  if (p.sizes.size() < 2) throw DomainError("mlp needs at least two layers");
  if (weights != mlp_param_count(p.sizes)) {
    throw DomainError("mlp parameter vector has wrong length");
  }
  if (input != p.input_size()) {
    throw DomainError("mlp input size " + std::to_string(input) +
                      " != " + std::to_string(p.input_size()));
  }
}

template <class W>
std::vector<ad::Var> forward_tape(const MlpParams& p, std::span<const W> w,
                                  std::span<const ad::Var> input) {
  check_layout(p, w.size(), input.size());
  std::vector<ad::Var> x(input.begin(), input.end());
  std::vector<ad::Var> y;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const std::size_t fan_in = p.sizes[l];
    const std::size_t fan_out = p.sizes[l + 1];
    const std::size_t wo = p.weight_offset(l);
    const std::size_t bo = p.bias_offset(l);
    const bool hidden = l + 1 < p.num_layers();
    y.clear();
    y.reserve(fan_out);
    for (std::size_t r = 0; r < fan_out; ++r) {
      ad::Var z = ad::affine(w.subspan(wo + r * fan_in, fan_in), x, w[bo + r]);
      y.push_back(hidden ? activate(p.activation, z) : z);
    }
    x.swap(y);
  }
  return x;
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "softplus") return Activation::kSoftplus;
  throw DomainError("unknown activation '" + std::string(name) + "'");
}

std::size_t mlp_param_count(std::span<const std::size_t> sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += (sizes[l] + 1) * sizes[l + 1];
  }
  return n;
}

std::size_t MlpParams::weight_offset(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t k = 0; k < l; ++k) off += (sizes[k] + 1) * sizes[k + 1];
  return off;
}

std::size_t MlpParams::bias_offset(std::size_t l) const {
  return weight_offset(l) + sizes[l] * sizes[l + 1];
}

MlpParams mlp_zeros(std::vector<std::size_t> sizes, Activation activation) {
  MlpParams p;
  p.flat.assign(mlp_param_count(sizes), 0.0);
  p.sizes = std::move(sizes);
  p.activation = activation;
  return p;
}

MlpParams mlp_init(std::vector<std::size_t> sizes, Activation activation,
                   std::uint64_t seed) {
  MlpParams p = mlp_zeros(std::move(sizes), activation);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double fan_in = static_cast<double>(p.sizes[l]);
    const double fan_out = static_cast<double>(p.sizes[l + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    const std::size_t wo = p.weight_offset(l);
    for (std::size_t k = 0; k < p.sizes[l] * p.sizes[l + 1]; ++k) {
      p.flat[wo + k] = u(rng);
    }
  }
  return p;
}

std::vector<double> mlp_forward(const MlpParams& p,
                                std::span<const double> input) {
  check_layout(p, p.flat.size(), input.size());
  std::vector<double> x(input.begin(), input.end());
  std::vector<double> y;
  const std::span<const double> w(p.flat);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const std::size_t fan_in = p.sizes[l];
    const std::size_t fan_out = p.sizes[l + 1];
    y.assign(fan_out, 0.0);
    kernels::gemv_bias(w.subspan(p.weight_offset(l), fan_in * fan_out), x,
                       w.subspan(p.bias_offset(l), fan_out), y);
    if (l + 1 < p.num_layers()) {
      for (double& v : y) v = activate(p.activation, v);
    }
    x.swap(y);
  }
  return x;
}

std::vector<ad::Var> mlp_forward(const MlpParams& layout,
                                 std::span<const ad::Var> weights,
                                 std::span<const ad::Var> input) {
  return forward_tape(layout, weights, input);
}

std::vector<ad::Var> mlp_forward(const MlpParams& layout,
                                 std::span<const double> weights,
                                 std::span<const ad::Var> input) {
  return forward_tape(layout, weights, input);
}

BoundParams bind_params(ad::Tape& tape, std::span<const double> flat) {
  BoundParams b;
  b.first = static_cast<std::uint32_t>(tape.size());
  b.vars = tape.leaves(flat);
  return b;
}

std::vector<ad::Var> mlp_forward(const MlpParams& params,
                                 std::span<const ad::Var> input,
                                 ad::Tape& tape, BoundParams* bound) {
  BoundParams local = bind_params(tape, params.flat);
  auto out = forward_tape<ad::Var>(params, local.vars, input);
  if (bound != nullptr) *bound = std::move(local);
  return out;
}

void save_params(const std::filesystem::path& path, const MlpParams& params,
                 const std::string& extra_json) {
  nlohmann::json h;
  h["format"] = "dualsrc-params";
  h["version"] = 1;
  h["sizes"] = params.sizes;
  h["activation"] = std::string(activation_name(params.activation));
  h["seed"] = params.seed;
  h["count"] = params.flat.size();
  h["extra"] = nlohmann::json::parse(extra_json);
  write_blob(path, kParamMagic, h, params.flat);
}

MlpParams load_params(const std::filesystem::path& path,
                      std::string* extra_json) {
  Blob blob = read_blob(path, kParamMagic);
  const auto& h = blob.header;
  if (h.value("version", 0) != 1) {
    throw VersionError("unsupported parameter file version in " +
                       path.string());
  }
  MlpParams p;
  p.sizes = h.at("sizes").get<std::vector<std::size_t>>();
  p.activation = parse_activation(h.at("activation").get<std::string>());
  p.seed = h.at("seed").get<std::uint64_t>();
  p.flat = std::move(blob.data);
  if (p.flat.size() != mlp_param_count(p.sizes)) {
    throw DomainError("parameter count does not match layer sizes");
  }
  if (extra_json != nullptr) *extra_json = h.value("extra", nlohmann::json::object()).dump();
  return p;
}

}  // namespace dualsrc
