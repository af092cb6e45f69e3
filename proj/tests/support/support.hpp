#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "outpaint/pipeline.hpp"
#include "outpaint/trainer.hpp"

namespace outpaint::test {

std::filesystem::path toy_manifest();
/// Fresh empty directory under the build tree's scratch area.
std::filesystem::path scratch_dir(const std::string& name);

/// Logits drawn from a seeded Gaussian, scaled; optionally poisoned with
/// NaN/inf so compositing has to hide them.
class StubExtender final : public LayoutExtender {
 public:
  StubExtender(std::int64_t classes, std::uint64_t seed, bool poison = false)
      : classes_(classes), seed_(seed), poison_(poison) {}
  torch::Tensor extend(const torch::Tensor& masked_image, const torch::Tensor& masked_layout,
                       const torch::Tensor& mask) const override;
  std::int64_t num_classes() const override { return classes_; }
  std::string fingerprint() const override { return "stub-extender-" + std::to_string(seed_); }

 private:
  std::int64_t classes_;
  std::uint64_t seed_;
  bool poison_;
};

class StubSynthesizer final : public ImageSynthesizer {
 public:
  StubSynthesizer(std::int64_t classes, std::uint64_t seed, bool poison = false)
      : classes_(classes), seed_(seed), poison_(poison) {}
  torch::Tensor synthesize(const torch::Tensor& masked_image, const torch::Tensor& layout,
                           const torch::Tensor& mask) const override;
  std::int64_t num_classes() const override { return classes_; }
  std::string fingerprint() const override { return "stub-synth-" + std::to_string(seed_); }

 private:
  std::int64_t classes_;
  std::uint64_t seed_;
  bool poison_;
};

OutpaintModels stub_models(std::int64_t classes, std::uint64_t seed, bool poison = false);
/// Untrained desk-width networks wrapped as pipeline stages.
OutpaintModels network_models(std::int64_t classes, std::uint64_t seed);

/// Desk config trimmed for unit tests: 64x64, batch 2, no augmentation.
TrainConfig small_config(std::uint64_t seed = 0);
OutpaintDataset toy_dataset(const std::string& split = "train");

// Scalar reference implementations in double precision. They loop over
// elements one by one and share no code with the library.
double ref_hinge_d(const std::vector<torch::Tensor>& real, const std::vector<torch::Tensor>& fake);
double ref_hinge_g(const std::vector<torch::Tensor>& fake);
double ref_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels);
double ref_l1(const torch::Tensor& a, const torch::Tensor& b);
/// 3x3 same-padding conv + bias + ReLU on [C, H, W], by loops.
std::vector<double> ref_conv_relu(const std::vector<double>& input, std::int64_t channels,
                                  std::int64_t height, std::int64_t width,
                                  const torch::Tensor& weight, const torch::Tensor& bias);
double ref_perceptual(const torch::Tensor& a, const torch::Tensor& b,
                      const RandomConvExtractor& extractor,
                      const std::array<double, 5>& stage_weights);

double relative_error(double actual, double expected);

/// Largest relative difference between the autograd gradient of scalar f at
/// x and central finite differences, over every entry of x (double).
double gradient_check(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                      const torch::Tensor& x, double step = 1e-6);

/// Values at least `gap` away from every point in `kinks`.
torch::Tensor away_from(const std::vector<double>& kinks, double gap, torch::IntArrayRef shape,
                        std::uint64_t seed);

}  // namespace outpaint::test
