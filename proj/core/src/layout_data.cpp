#include "outpaint/layout_data.hpp"

#include <cmath>
#include <random>

#include <torch/torch.h>

#include "outpaint/errors.hpp"

namespace F = torch::nn::functional;

namespace outpaint {

SemanticLayout::SemanticLayout(torch::Tensor labels, std::int64_t num_classes)
    : num_classes_(num_classes) {
  if (num_classes <= 0) throw InvalidArgument("num_classes must be positive");
  if (labels.dim() != 2) throw InvalidArgument("layout labels must be [H, W]");
  if (labels.is_floating_point() || labels.scalar_type() == torch::kBool)
    throw InvalidArgument("layout labels must be integers");
  labels_ = labels.to(torch::kCPU, torch::kLong).contiguous();
  if (labels_.numel() > 0) {
    const auto lo = labels_.min().item<std::int64_t>();
    const auto hi = labels_.max().item<std::int64_t>();
    if (lo < 0 || hi >= num_classes)
      throw InvalidArgument("layout label " + std::to_string(lo < 0 ? lo : hi) +
                            " outside [0, " + std::to_string(num_classes) + ")");
  }
}

SemanticLayout SemanticLayout::filled(std::int64_t height, std::int64_t width,
                                      std::int64_t num_classes, std::int64_t label) {
  return SemanticLayout(torch::full({height, width}, label, torch::kLong), num_classes);
}

bool SemanticLayout::operator==(const SemanticLayout& other) const {
  return num_classes_ == other.num_classes_ && labels_.sizes() == other.labels_.sizes() &&
         torch::equal(labels_, other.labels_);
}

BinaryMask::BinaryMask(torch::Tensor values) {
  if (values.dim() != 2) throw InvalidArgument("mask must be [H, W]");
  if (values.scalar_type() != torch::kBool) {
    auto as_double = values.to(torch::kDouble);
    if (values.numel() > 0 && !torch::logical_or(as_double == 0, as_double == 1).all().item<bool>())
      throw InvalidArgument("mask values must be 0 or 1");
    values = as_double != 0;
  }
  values_ = values.to(torch::kCPU).contiguous();
}

BinaryMask BinaryMask::ones(std::int64_t height, std::int64_t width) {
  return BinaryMask(torch::ones({height, width}, torch::kBool));
}

BinaryMask BinaryMask::zeros(std::int64_t height, std::int64_t width) {
  return BinaryMask(torch::zeros({height, width}, torch::kBool));
}

torch::Tensor BinaryMask::as_plane() const { return values_.to(torch::kFloat).unsqueeze(0); }

bool BinaryMask::is_right_mask() const {
  // A row is a prefix of ones iff it never rises from 0 back to 1.
  if (values_.size(1) < 2) return true;
  auto as_int = values_.to(torch::kInt);
  auto rises = as_int.slice(1, 1) > as_int.slice(1, 0, -1);
  if (rises.any().item<bool>()) return false;
  // Every row must share the same split for the protocol mask.
  auto counts = as_int.sum(1);
  return (counts == counts[0]).all().item<bool>();
}

std::int64_t BinaryMask::known_columns() const {
  if (!is_right_mask()) throw InvalidArgument("mask is not a right mask");
  return values_.size(0) == 0 ? 0 : values_[0].sum().item<std::int64_t>();
}

bool BinaryMask::operator==(const BinaryMask& other) const {
  return values_.sizes() == other.values_.sizes() && torch::equal(values_, other.values_);
}

void ImageSample::validate() const {
  if (pixels.dim() != 3 || pixels.size(0) != 3) throw InvalidArgument("pixels must be [3, H, W]");
  if (!pixels.is_floating_point()) throw InvalidArgument("pixels must be floating point");
  if (layout.height() != height() || layout.width() != width())
    throw InvalidArgument("layout and pixel sizes differ");
  if (mask.height() != height() || mask.width() != width())
    throw InvalidArgument("mask and pixel sizes differ");
  if (pixels.numel() > 0) {
    if (!torch::isfinite(pixels).all().item<bool>()) throw InvalidArgument("non-finite pixels");
    if (pixels.min().item<double>() < -1.0 || pixels.max().item<double>() > 1.0)
      throw InvalidArgument("pixels outside [-1, 1]");
  }
}

torch::Tensor one_hot(const SemanticLayout& layout) {
  return outpaint::one_hot(layout.labels().unsqueeze(0), layout.num_classes()).squeeze(0);
}

torch::Tensor one_hot(const torch::Tensor& labels, std::int64_t num_classes) {
  if (labels.dim() != 3) throw InvalidArgument("batched labels must be [B, H, W]");
  auto index = labels.to(torch::kLong).unsqueeze(1);
  if (index.numel() > 0 && (index.min().item<std::int64_t>() < 0 ||
                            index.max().item<std::int64_t>() >= num_classes))
    throw InvalidArgument("label outside [0, num_classes)");
  auto planes = torch::zeros({labels.size(0), num_classes, labels.size(1), labels.size(2)});
  return planes.scatter_(1, index, 1.0f);
}

SemanticLayout argmax_layout(const torch::Tensor& planes) {
  if (planes.dim() != 3) throw InvalidArgument("layout planes must be [C, H, W]");
  return SemanticLayout(planes.argmax(0), planes.size(0));
}

BinaryMask make_right_mask(std::int64_t height, std::int64_t width, double masked_fraction) {
  if (height <= 0 || width <= 0) throw InvalidArgument("mask dimensions must be positive");
  if (!(masked_fraction > 0.0 && masked_fraction < 1.0))
    throw InvalidArgument("masked fraction must lie in (0, 1)");
  const auto known = static_cast<std::int64_t>(
      std::llround(static_cast<double>(width) * (1.0 - masked_fraction)));
  auto values = torch::zeros({height, width}, torch::kBool);
  values.slice(1, 0, known).fill_(true);
  return BinaryMask(values);
}

MaskedSample mask_tensors(const torch::Tensor& pixels, const torch::Tensor& planes,
                          const BinaryMask& mask) {
  if (pixels.dim() != 3 || planes.dim() != 3) throw InvalidArgument("expected [C, H, W] tensors");
  if (pixels.size(1) != mask.height() || pixels.size(2) != mask.width() ||
      planes.size(1) != mask.height() || planes.size(2) != mask.width())
    throw InvalidArgument("mask shape does not match the sample");
  auto keep = mask.values().unsqueeze(0);
  // where() rather than multiplication keeps the known region bit-identical
  // (no -0.0 artefacts) and the unknown region exactly zero.
  auto masked_pixels = torch::where(keep, pixels, torch::zeros_like(pixels));
  auto masked_planes = torch::where(keep, planes, torch::zeros_like(planes));
  return {masked_pixels, MaskedLayout{masked_planes, mask}};
}

MaskedSample apply_mask(const ImageSample& sample) {
  sample.validate();
  return mask_tensors(sample.pixels, one_hot(sample.layout), sample.mask);
}

AugmentPlan draw_augment_plan(std::uint64_t seed, const AugmentOptions& options) {
  if (options.crop <= 0 || options.resize < options.crop)
    throw InvalidArgument("augment needs 0 < crop <= resize");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> origin(0, options.resize - options.crop);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  AugmentPlan plan;
  plan.crop_top = origin(rng);
  plan.crop_left = origin(rng);
  plan.flip = coin(rng) < options.flip_probability;
  return plan;
}

ImageSample resize(const ImageSample& sample, std::int64_t height, std::int64_t width) {
  if (height <= 0 || width <= 0) throw InvalidArgument("resize target must be positive");
  if (sample.height() == height && sample.width() == width) return sample;
  const std::vector<std::int64_t> size{height, width};
  auto pixels = F::interpolate(sample.pixels.unsqueeze(0).to(torch::kFloat),
                               F::InterpolateFuncOptions()
                                   .size(size)
                                   .mode(torch::kBilinear)
                                   .align_corners(false))
                    .squeeze(0)
                    .clamp(-1.0, 1.0);
  auto nearest = [&](const torch::Tensor& grid) {
    return F::interpolate(grid.to(torch::kFloat).unsqueeze(0).unsqueeze(0),
                          F::InterpolateFuncOptions().size(size).mode(torch::kNearest))
        .squeeze(0)
        .squeeze(0);
  };
  SemanticLayout layout(nearest(sample.layout.labels()).round().to(torch::kLong),
                        sample.layout.num_classes());
  BinaryMask mask(nearest(sample.mask.values()) > 0.5);
  return {pixels, std::move(layout), std::move(mask), sample.source_id};
}

ImageSample crop(const ImageSample& sample, std::int64_t top, std::int64_t left,
                 std::int64_t height, std::int64_t width) {
  if (top < 0 || left < 0 || top + height > sample.height() || left + width > sample.width())
    throw InvalidArgument("crop window outside the sample");
  auto pixels = sample.pixels.slice(1, top, top + height).slice(2, left, left + width).contiguous();
  SemanticLayout layout(
      sample.layout.labels().slice(0, top, top + height).slice(1, left, left + width),
      sample.layout.num_classes());
  BinaryMask mask(sample.mask.values().slice(0, top, top + height).slice(1, left, left + width));
  return {pixels, std::move(layout), std::move(mask), sample.source_id};
}

ImageSample hflip(const ImageSample& sample) {
  return {sample.pixels.flip({2}).contiguous(),
          SemanticLayout(sample.layout.labels().flip({1}), sample.layout.num_classes()),
          BinaryMask(sample.mask.values().flip({1})), sample.source_id};
}

ImageSample apply_plan(const ImageSample& sample, const AugmentPlan& plan,
                       const AugmentOptions& options) {
  auto out = resize(sample, options.resize, options.resize);
  out = crop(out, plan.crop_top, plan.crop_left, options.crop, options.crop);
  return plan.flip ? hflip(out) : out;
}

ImageSample augment(const ImageSample& sample, std::uint64_t seed, const AugmentOptions& options) {
  sample.validate();
  return apply_plan(sample, draw_augment_plan(seed, options), options);
}

std::pair<ImageSample, ImageSample> cityscapes_split(const ImageSample& sample) {
  sample.validate();
  if (sample.width() != 2 * sample.height())
    throw InvalidArgument("cityscapes_split expects a 1:2 (H x 2H) sample");
  const auto half = sample.height();
  auto left = crop(sample, 0, 0, half, half);
  auto right = crop(sample, 0, half, half, half);
  return {hflip(left), std::move(right)};
}

ImageSample cityscapes_merge(const ImageSample& left_flipped, const ImageSample& right) {
  left_flipped.validate();
  right.validate();
  if (left_flipped.height() != left_flipped.width() || right.height() != right.width() ||
      left_flipped.height() != right.height())
    throw InvalidArgument("cityscapes_merge expects two square samples of equal size");
  if (left_flipped.layout.num_classes() != right.layout.num_classes())
    throw InvalidArgument("cityscapes_merge: class counts differ");
  auto left = hflip(left_flipped);
  return {torch::cat({left.pixels, right.pixels}, 2),
          SemanticLayout(torch::cat({left.layout.labels(), right.layout.labels()}, 1),
                         right.layout.num_classes()),
          BinaryMask(torch::cat({left.mask.values(), right.mask.values()}, 1)),
          right.source_id.empty() ? left.source_id : right.source_id};
}

}  // namespace outpaint
