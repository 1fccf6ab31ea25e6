#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "dualsrc/mlp.hpp"
#include "testkit.hpp"

using namespace dualsrc;

namespace {

// Independent forward pass straight from the documented flat layout.
std::vector<double> reference_forward(const std::vector<std::size_t>& sizes,
                                      const std::vector<double>& flat,
                                      std::vector<double> x) {
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    std::vector<double> y(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = flat[off + out * in + r];
      for (std::size_t c = 0; c < in; ++c) s += flat[off + r * in + c] * x[c];
      y[r] = l + 2 < sizes.size() ? std::tanh(s) : s;
    }
    off += out * in + out;
    x = y;
  }
  return x;
}

}  // namespace

TEST(Mlp, IdentitySingleLayer) {
  MlpParams p = mlp_zeros({2, 2}, Activation::kTanh);
  p.flat[p.weight_offset(0) + 0] = 1.0;
  p.flat[p.weight_offset(0) + 3] = 1.0;
  const auto y = mlp_forward(p, std::vector<double>{1.0, 2.0});
  EXPECT_EQ(y, (std::vector<double>{1.0, 2.0}));
}

TEST(Mlp, ZeroWeightsGiveOutputBias) {
  MlpParams p = mlp_zeros({3, 4, 2}, Activation::kTanh);
  p.flat[p.bias_offset(1) + 0] = 0.25;
  p.flat[p.bias_offset(1) + 1] = -7.0;
  const auto y = mlp_forward(p, std::vector<double>{5, -5, 1});
  EXPECT_EQ(y, (std::vector<double>{0.25, -7.0}));
}

TEST(Mlp, ParamCountAndOffsets) {
  const std::vector<std::size_t> sizes = {5, 4, 3};
  EXPECT_EQ(mlp_param_count(sizes), 5u * 4 + 4 + 4 * 3 + 3);
  const MlpParams p = mlp_zeros(sizes, Activation::kRelu);
  EXPECT_EQ(p.weight_offset(0), 0u);
  EXPECT_EQ(p.bias_offset(0), 20u);
  EXPECT_EQ(p.weight_offset(1), 24u);
  EXPECT_EQ(p.bias_offset(1), 36u);
}

TEST(Mlp, SeededForwardMatchesIndependentImplementation) {
  const std::vector<std::size_t> sizes = {6, 8, 3};
  const MlpParams p = mlp_init(sizes, Activation::kTanh, 42);
  const std::vector<double> x = {0.5, -1.0, 0.25, 2.0, 0.0, -0.75};
  const auto got = mlp_forward(p, x);
  const auto want = reference_forward(sizes, p.flat, x);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-13);
}

TEST(Mlp, InitIsSeededAndBiasesZero) {
  const MlpParams a = mlp_init({4, 5, 2}, Activation::kTanh, 9);
  const MlpParams b = mlp_init({4, 5, 2}, Activation::kTanh, 9);
  const MlpParams c = mlp_init({4, 5, 2}, Activation::kTanh, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.flat, c.flat);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    for (std::size_t r = 0; r < a.sizes[l + 1]; ++r) EXPECT_EQ(a.flat[a.bias_offset(l) + r], 0.0);
  }
  const double limit = std::sqrt(6.0 / (4 + 5));
  for (std::size_t k = 0; k < 20; ++k) EXPECT_LE(std::fabs(a.flat[k]), limit);
}

TEST(Mlp, TapeAndFrozenPathsMatchInference) {
  const MlpParams p = mlp_init({3, 4, 2}, Activation::kSoftplus, 3);
  const std::vector<double> x = {0.1, 0.2, -0.3};
  const auto ref = mlp_forward(p, x);
  ad::Tape t;
  const auto in = t.leaves(x);
  const auto y1 = mlp_forward(p, in, t);
  const auto y2 = mlp_forward(p, std::span<const double>(p.flat), in);
  for (std::size_t k = 0; k < ref.size(); ++k) {
    EXPECT_NEAR(y1[k].value(), ref[k], 1e-14);
    EXPECT_NEAR(y2[k].value(), ref[k], 1e-14);
  }
}

TEST(Mlp, SaveLoadRoundTrip) {
  const MlpParams p = mlp_init({3, 7, 2}, Activation::kRelu, 17);
  const auto path = std::filesystem::temp_directory_path() / "dualsrc_mlp_roundtrip.dsp";
  save_params(path, p, R"({"note":"x"})");
  std::string extra;
  const MlpParams q = load_params(path, &extra);
  EXPECT_EQ(p, q);
  EXPECT_NE(extra.find("note"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Mlp, RejectsWrongInputLength) {
  const MlpParams p = mlp_zeros({3, 2}, Activation::kTanh);
  EXPECT_ANY_THROW(mlp_forward(p, std::vector<double>{1.0, 2.0}));
}

TEST(Mlp, ActivationNames) {
  EXPECT_EQ(parse_activation("tanh"), Activation::kTanh);
  EXPECT_EQ(parse_activation(activation_name(Activation::kRelu)), Activation::kRelu);
  EXPECT_ANY_THROW(parse_activation("gelu"));
}
