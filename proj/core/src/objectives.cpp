#include "outpaint/objectives.hpp"

#include <cmath>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "outpaint/errors.hpp"
#include "outpaint/image_io.hpp"
#include "outpaint/util.hpp"

namespace F = torch::nn::functional;

namespace outpaint {

void LossWeights::validate() const {
  auto check = [](double value, const char* name) {
    if (!std::isfinite(value) || value < 0.0)
      throw InvalidArgument(std::string("loss weight ") + name + " must be finite and >= 0");
  };
  check(lambda_ce, "lambda_ce");
  check(lambda_perc, "lambda_perc");
  check(lambda_l1, "lambda_l1");
  for (double w : perceptual) check(w, "perceptual");
}

torch::Tensor hinge_d_loss(const std::vector<torch::Tensor>& real_logits,
                           const std::vector<torch::Tensor>& fake_logits) {
  if (real_logits.empty() || real_logits.size() != fake_logits.size())
    throw InvalidArgument("hinge_d_loss needs matching, non-empty scale lists");
  torch::Tensor total;
  for (std::size_t s = 0; s < real_logits.size(); ++s) {
    auto term = torch::relu(1.0 - real_logits[s]).mean() + torch::relu(1.0 + fake_logits[s]).mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(real_logits.size());
}

torch::Tensor hinge_g_loss(const std::vector<torch::Tensor>& fake_logits) {
  if (fake_logits.empty()) throw InvalidArgument("hinge_g_loss needs at least one scale");
  torch::Tensor total;
  for (const auto& logits : fake_logits) {
    auto term = -logits.mean();
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(fake_logits.size());
}

torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& labels,
                      const std::optional<torch::Tensor>& region) {
  if (logits.dim() != 4 || labels.dim() != 3 || logits.size(0) != labels.size(0) ||
      logits.size(2) != labels.size(1) || logits.size(3) != labels.size(2))
    throw InvalidArgument("ce_loss expects logits [B, C, H, W] and labels [B, H, W]");
  auto per_pixel = F::cross_entropy(
      logits, labels.to(torch::kLong), F::CrossEntropyFuncOptions().reduction(torch::kNone));
  if (!region) return per_pixel.mean();
  auto selected = *region;
  if (selected.dim() == 4) selected = selected.squeeze(1);
  if (selected.sizes() != per_pixel.sizes())
    throw InvalidArgument("ce_loss region does not match the label map");
  auto keep = selected != 0;
  auto count = keep.sum();
  if (count.item<std::int64_t>() == 0) return per_pixel.sum() * 0.0;
  return torch::where(keep, per_pixel, torch::zeros_like(per_pixel)).sum() /
         count.to(per_pixel.scalar_type());
}

torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw InvalidArgument("l1_loss operands differ in shape");
  return (a - b).abs().mean();
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, std::vector<std::int64_t> widths)
    : seed_(seed) {
  if (widths.empty()) throw InvalidArgument("extractor needs at least one stage");
  torch::NoGradGuard no_grad;
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  std::int64_t channels = 3;
  for (auto width : widths) {
    if (width <= 0) throw InvalidArgument("extractor widths must be positive");
    const double scale = std::sqrt(2.0 / static_cast<double>(channels * 9));
    weights_.push_back(torch::empty({width, channels, 3, 3}).normal_(0.0, scale, generator));
    biases_.push_back(torch::empty({width}).normal_(0.0, 0.1, generator));
    channels = width;
  }
}

std::vector<torch::Tensor> RandomConvExtractor::features(const torch::Tensor& images) {
  std::vector<torch::Tensor> stages;
  auto x = images;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = torch::relu(torch::conv2d(x, weights_[i].to(x.scalar_type()),
                                  biases_[i].to(x.scalar_type()), 1, 1));
    stages.push_back(x);
  }
  return stages;
}

std::string RandomConvExtractor::id() const {
  std::ostringstream out;
  out << "randconv-" << seed_;
  for (const auto& w : weights_) out << '-' << w.size(0);
  return out.str();
}

void RandomConvExtractor::to(torch::Dtype dtype) {
  for (auto& w : weights_) w = w.to(dtype);
  for (auto& b : biases_) b = b.to(dtype);
}

namespace {

std::vector<torch::Tensor> unpack_features(const c10::IValue& output) {
  std::vector<torch::Tensor> stages;
  if (output.isTuple()) {
    for (const auto& element : output.toTupleRef().elements()) stages.push_back(element.toTensor());
  } else if (output.isTensorList()) {
    for (const auto& t : output.toTensorList()) stages.push_back(t);
  } else if (output.isList()) {
    for (const auto& element : output.toListRef()) stages.push_back(element.toTensor());
  } else if (output.isTensor()) {
    stages.push_back(output.toTensor());
  } else {
    throw InvalidArgument("scripted extractor must return a tensor, list or tuple");
  }
  return stages;
}

}  // namespace

ScriptedFeatureExtractor::ScriptedFeatureExtractor(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
    module_ = torch::jit::load(path.string());
  } catch (const std::exception& e) {
    throw InvalidArgument("cannot load feature extractor " + path.string() + ": " + e.what());
  }
  module_.eval();
  for (auto parameter : module_.parameters()) parameter.requires_grad_(false);
  torch::NoGradGuard no_grad;
  stages_ = unpack_features(module_.forward({torch::zeros({1, 3, 64, 64})})).size();
  id_ = "script-" + path.filename().string() + "-" + to_hex(fnv1a64(bytes));
}

std::vector<torch::Tensor> ScriptedFeatureExtractor::features(const torch::Tensor& images) {
  return unpack_features(module_.forward({images}));
}

void ScriptedFeatureExtractor::to(torch::Dtype dtype) { module_.to(dtype); }

torch::Tensor perceptual_loss(const torch::Tensor& a, const torch::Tensor& b,
                              FeatureExtractor& extractor,
                              const std::array<double, 5>& stage_weights) {
  if (extractor.num_stages() != stage_weights.size())
    throw InvalidArgument("perceptual loss needs a five-stage extractor, got " +
                          std::to_string(extractor.num_stages()));
  if (a.sizes() != b.sizes()) throw InvalidArgument("perceptual loss operands differ in shape");
  auto fa = extractor.features(a);
  auto fb = extractor.features(b);
  if (fa.size() != stage_weights.size() || fb.size() != stage_weights.size())
    throw InvalidArgument("extractor returned the wrong number of stages");
  torch::Tensor total;
  for (std::size_t i = 0; i < stage_weights.size(); ++i) {
    auto term = stage_weights[i] * (fa[i] - fb[i]).abs().mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

Stage1Losses stage1_total(const torch::Tensor& layout_logits, const torch::Tensor& labels,
                          const torch::Tensor& adversarial, const LossWeights& weights,
                          const std::optional<torch::Tensor>& ce_region) {
  Stage1Losses out;
  out.ce = ce_loss(layout_logits, labels, ce_region);
  out.adversarial = adversarial;
  out.total = weights.lambda_ce * out.ce + adversarial;
  return out;
}

Stage2Losses stage2_total(const torch::Tensor& generated, const torch::Tensor& original,
                          const torch::Tensor& adversarial, const LossWeights& weights,
                          FeatureExtractor& extractor) {
  Stage2Losses out;
  out.perceptual = weights.lambda_perc > 0.0
                       ? perceptual_loss(generated, original, extractor, weights.perceptual)
                       : torch::zeros({}, generated.options());
  out.l1 = outpaint::l1_loss(generated, original);
  out.adversarial = adversarial;
  out.total = weights.lambda_perc * out.perceptual + weights.lambda_l1 * out.l1 + adversarial;
  return out;
}

}  // namespace outpaint
