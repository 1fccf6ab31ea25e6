#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualsrc/tape.hpp"

namespace dualsrc {

enum class Activation { kTanh, kRelu, kSoftplus };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

// Fully connected network. Hidden layers use `activation`; the output layer is
// affine. Parameters are stored flat, layer by layer: the weight matrix
// (fan_out x fan_in, row-major) followed by the bias vector.
struct MlpParams {
  std::vector<std::size_t> sizes;
  Activation activation = Activation::kTanh;
  std::vector<double> flat;
  std::uint64_t seed = 0;

  std::size_t input_size() const { return sizes.front(); }
  std::size_t output_size() const { return sizes.back(); }
  std::size_t num_layers() const { return sizes.size() - 1; }

  // Offset of layer l's weight block and bias block in `flat`.
  std::size_t weight_offset(std::size_t l) const;
  std::size_t bias_offset(std::size_t l) const;

  bool operator==(const MlpParams&) const = default;
};

std::size_t mlp_param_count(std::span<const std::size_t> sizes);

// Glorot-uniform weights, zero biases.
MlpParams mlp_init(std::vector<std::size_t> sizes, Activation activation,
                   std::uint64_t seed);
MlpParams mlp_zeros(std::vector<std::size_t> sizes, Activation activation);

// Inference path; uses the dispatched gemv kernel.
std::vector<double> mlp_forward(const MlpParams& params,
                                std::span<const double> input);

// Trainable path: `weights` are tape leaves (see `bind_params`).
std::vector<ad::Var> mlp_forward(const MlpParams& layout,
                                 std::span<const ad::Var> weights,
                                 std::span<const ad::Var> input);

// Frozen-weights path: differentiable in the input only.
std::vector<ad::Var> mlp_forward(const MlpParams& layout,
                                 std::span<const double> weights,
                                 std::span<const ad::Var> input);

// Records every parameter as a contiguous run of tape leaves.
struct BoundParams {
  std::uint32_t first = 0;
  std::vector<ad::Var> vars;
};
BoundParams bind_params(ad::Tape& tape, std::span<const double> flat);

// Convenience: binds params then runs the trainable forward pass.
std::vector<ad::Var> mlp_forward(const MlpParams& params,
                                 std::span<const ad::Var> input,
                                 ad::Tape& tape, BoundParams* bound = nullptr);

// Flat binary parameter file: "DSP1" magic, u32 header length, JSON header
// (sizes, activation, seed, count), then little-endian doubles.
void save_params(const std::filesystem::path& path, const MlpParams& params,
                 const std::string& extra_json = "{}");
MlpParams load_params(const std::filesystem::path& path,
                      std::string* extra_json = nullptr);

}  // namespace dualsrc
