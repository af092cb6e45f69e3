#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/script.h>
#include <torch/types.h>

namespace outpaint {

/// Trade-off weights of the two stage objectives.
struct LossWeights {
  double lambda_ce = 100.0;
  double lambda_perc = 10.0;
  double lambda_l1 = 100.0;
  /// Per-stage perceptual weights, 1/2^i for i = 1..5.
  std::array<double, 5> perceptual = {0.5, 0.25, 0.125, 0.0625, 0.03125};

  /// Throws InvalidArgument on a negative weight.
  void validate() const;
};

/// Discriminator hinge loss over every scale:
/// mean_s [ mean relu(1 - real_s) + mean relu(1 + fake_s) ].
torch::Tensor hinge_d_loss(const std::vector<torch::Tensor>& real_logits,
                           const std::vector<torch::Tensor>& fake_logits);

/// Generator hinge loss, -mean_s mean(fake_s). Unbounded below.
torch::Tensor hinge_g_loss(const std::vector<torch::Tensor>& fake_logits);

/// Mean per-pixel cross-entropy of logits [B, C, H, W] against labels
/// [B, H, W]. With `region` ([B, 1, H, W] or [B, H, W], nonzero = counted)
/// the mean runs over the selected pixels only.
torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& labels,
                      const std::optional<torch::Tensor>& region = std::nullopt);

/// Mean absolute difference over all elements.
torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b);

/// Frozen multi-stage feature extractor used by the perceptual loss.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// Images [B, 3, H, W] in [-1, 1] -> one feature map per stage.
  virtual std::vector<torch::Tensor> features(const torch::Tensor& images) = 0;
  virtual std::size_t num_stages() const = 0;
  virtual std::string id() const = 0;
  virtual void to(torch::Dtype dtype) = 0;
};

/// Five conv + ReLU stages with fixed Gaussian weights drawn from `seed`.
/// Parameters never train. Stages keep the spatial size, so the extractor
/// works on inputs as small as 1x1.
class RandomConvExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 0,
                               std::vector<std::int64_t> widths = {8, 16, 16, 32, 32});

  std::vector<torch::Tensor> features(const torch::Tensor& images) override;
  std::size_t num_stages() const override { return weights_.size(); }
  std::string id() const override;
  void to(torch::Dtype dtype) override;

  const std::vector<torch::Tensor>& weights() const { return weights_; }
  const std::vector<torch::Tensor>& biases() const { return biases_; }

 private:
  std::uint64_t seed_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// TorchScript module whose forward(images) returns a list or tuple of
/// feature maps, e.g. the five post-ReLU stages of a pretrained VGG-19.
class ScriptedFeatureExtractor final : public FeatureExtractor {
 public:
  explicit ScriptedFeatureExtractor(const std::filesystem::path& path);

  std::vector<torch::Tensor> features(const torch::Tensor& images) override;
  std::size_t num_stages() const override { return stages_; }
  std::string id() const override { return id_; }
  void to(torch::Dtype dtype) override;

 private:
  torch::jit::Module module_;
  std::size_t stages_;
  std::string id_;
};

/// sum_i w_i * mean|phi_i(a) - phi_i(b)|. Throws InvalidArgument unless the
/// extractor has exactly as many stages as there are weights (five).
torch::Tensor perceptual_loss(const torch::Tensor& a, const torch::Tensor& b,
                              FeatureExtractor& extractor,
                              const std::array<double, 5>& stage_weights);

struct Stage1Losses {
  torch::Tensor ce;
  torch::Tensor adversarial;
  torch::Tensor total;
};

struct Stage2Losses {
  torch::Tensor perceptual;
  torch::Tensor l1;
  torch::Tensor adversarial;
  torch::Tensor total;
};

/// lambda_ce * ce(S_gen, S_orig) + adversarial.
Stage1Losses stage1_total(const torch::Tensor& layout_logits, const torch::Tensor& labels,
                          const torch::Tensor& adversarial, const LossWeights& weights,
                          const std::optional<torch::Tensor>& ce_region = std::nullopt);

/// lambda_perc * perc(I_gen, I_orig) + lambda_l1 * l1(I_gen, I_orig) + adversarial.
/// The perceptual term is skipped (and reported as zero) when lambda_perc is 0.
Stage2Losses stage2_total(const torch::Tensor& generated, const torch::Tensor& original,
                          const torch::Tensor& adversarial, const LossWeights& weights,
                          FeatureExtractor& extractor);

}  // namespace outpaint
