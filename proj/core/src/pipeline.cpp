#include "outpaint/pipeline.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "outpaint/checkpoint.hpp"
#include "outpaint/errors.hpp"
#include "outpaint/trainer.hpp"
#include "outpaint/util.hpp"

namespace outpaint {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string weights_fingerprint(const std::string& spec_fingerprint,
                                const torch::nn::Module& module) {
  std::string digests = spec_fingerprint;
  for (const auto& item : module.named_parameters(true))
    digests += item.key() + tensor_digest(item.value());
  for (const auto& item : module.named_buffers(true))
    digests += item.key() + tensor_digest(item.value());
  return spec_fingerprint + "-" + to_hex(fnv1a64(digests));
}

// Stored trainer config and class count of a stage checkpoint.
std::pair<TrainConfig, std::int64_t> stage_metadata(CheckpointReader& reader,
                                                    const std::filesystem::path& path,
                                                    const std::string& trainer) {
  const auto stored = reader.get_string("trainer");
  if (stored != trainer)
    throw CheckpointMismatch(path.string() + " holds a '" + stored + "' checkpoint, expected '" +
                             trainer + "'");
  TrainConfig config;
  try {
    config = TrainConfig::from_json(nlohmann::json::parse(reader.get_string("config")));
  } catch (const std::exception& e) {
    throw CheckpointMismatch(path.string() + ": unreadable training config: " + e.what());
  }
  return {config, reader.get_int("num_classes")};
}

torch::Tensor keep_planes(const BinaryMask& mask, std::int64_t channels) {
  return mask.values().unsqueeze(0).expand({channels, mask.height(), mask.width()});
}

SemanticLayout request_layout(const OutpaintRequest& request, const BinaryMask& mask,
                              const OutpaintModels& models) {
  const auto height = request.image.size(1);
  const auto width = request.image.size(2);
  const auto classes = models.layout->num_classes();
  if (request.layout) {
    if (request.layout->height() != height || request.layout->width() != width)
      throw InvalidArgument("request layout does not match the image size");
    if (request.layout->num_classes() != classes)
      throw InvalidArgument("request layout has " + std::to_string(request.layout->num_classes()) +
                            " classes, the models expect " + std::to_string(classes));
    return *request.layout;
  }
  // Only the cropped part exists at inference time, so only it is segmented.
  const auto known = mask.is_right_mask() ? mask.known_columns() : width;
  if (known == 0) return SemanticLayout::filled(height, width, classes);
  auto cropped = request.image.slice(2, 0, known);
  auto predicted = models.segmenter->predict(cropped, request.source_id);
  if (predicted.height() != height || predicted.width() != known)
    throw SegmentationFailed("segmenter returned a " + std::to_string(predicted.height()) + "x" +
                             std::to_string(predicted.width()) + " layout for a " +
                             std::to_string(height) + "x" + std::to_string(known) + " crop");
  if (predicted.num_classes() != classes)
    throw SegmentationFailed("segmenter class count differs from the models");
  auto labels = torch::zeros({height, width}, torch::kLong);
  labels.slice(1, 0, known).copy_(predicted.labels());
  return SemanticLayout(labels, classes);
}

void check_image(const torch::Tensor& image) {
  if (!image.defined() || image.dim() != 3 || image.size(0) != 3)
    throw InvalidArgument("request image must be [3, H, W]");
  if (!image.is_floating_point()) throw InvalidArgument("request image must be floating point");
}

OutpaintResult synthesize(const torch::Tensor& masked_pixels, const SemanticLayout& layout,
                          const torch::Tensor& masked_layout, const BinaryMask& mask,
                          const OutpaintModels& models) {
  OutpaintResult result{torch::Tensor(), layout, masked_layout, mask};
  const auto start = Clock::now();
  auto generated = models.image
                       ->synthesize(masked_pixels.unsqueeze(0), one_hot(layout).unsqueeze(0),
                                    mask.as_plane().unsqueeze(0))
                       .squeeze(0)
                       .to(masked_pixels.scalar_type());
  if (generated.sizes() != masked_pixels.sizes())
    throw InvalidArgument("image synthesizer returned the wrong shape");
  result.image = torch::where(keep_planes(mask, 3), masked_pixels, generated);
  result.stage2_ms = elapsed_ms(start);
  return result;
}

}  // namespace

NetworkLayoutExtender::NetworkLayoutExtender(GeneratorSeg generator)
    : generator_(std::move(generator)) {
  generator_->eval();
  fingerprint_ = weights_fingerprint(generator_->spec().fingerprint(), *generator_);
}

torch::Tensor NetworkLayoutExtender::extend(const torch::Tensor& masked_image,
                                            const torch::Tensor& masked_layout,
                                            const torch::Tensor& mask) const {
  torch::NoGradGuard no_grad;
  return generator_.ptr()->forward(torch::cat({masked_image, masked_layout, mask}, 1));
}

std::int64_t NetworkLayoutExtender::num_classes() const {
  return generator_->spec().decoder.out_channels;
}

NetworkImageSynthesizer::NetworkImageSynthesizer(GeneratorImg generator)
    : generator_(std::move(generator)) {
  generator_->eval();
  fingerprint_ = weights_fingerprint(generator_->spec().fingerprint(), *generator_);
}

torch::Tensor NetworkImageSynthesizer::synthesize(const torch::Tensor& masked_image,
                                                  const torch::Tensor& layout,
                                                  const torch::Tensor& mask) const {
  torch::NoGradGuard no_grad;
  return generator_.ptr()->forward(torch::cat({masked_image, layout, mask}, 1),
                                   torch::cat({layout, mask}, 1));
}

std::int64_t NetworkImageSynthesizer::num_classes() const {
  return generator_->spec().decoder.condition_channels - 1;
}

std::shared_ptr<NetworkLayoutExtender> load_layout_extender(const std::filesystem::path& path) {
  CheckpointReader reader(path);
  auto [config, classes] = stage_metadata(reader, path, "stage1");
  auto spec = generator_seg_spec(classes, config.network);
  GeneratorSeg generator(spec);
  reader.load_module("generator", *generator, spec.fingerprint());
  return std::make_shared<NetworkLayoutExtender>(generator);
}

std::shared_ptr<NetworkImageSynthesizer> load_image_synthesizer(const std::filesystem::path& path) {
  CheckpointReader reader(path);
  auto [config, classes] = stage_metadata(reader, path, "stage2");
  auto spec = generator_img_spec(classes, config.network);
  GeneratorImg generator(spec);
  reader.load_module("generator", *generator, spec.fingerprint());
  return std::make_shared<NetworkImageSynthesizer>(generator);
}

void OutpaintModels::validate() const {
  if (!layout || !image || !segmenter)
    throw InvalidArgument("outpaint models need a layout extender, a synthesizer and a segmenter");
  const auto classes = layout->num_classes();
  if (image->num_classes() != classes)
    throw CheckpointMismatch("stage 1 predicts " + std::to_string(classes) +
                             " classes but stage 2 expects " +
                             std::to_string(image->num_classes()));
  if (segmenter->num_classes() != classes)
    throw CheckpointMismatch("segmenter class count differs from the models");
  if (profile.num_classes != classes)
    throw CheckpointMismatch("dataset profile '" + profile.name + "' has " +
                             std::to_string(profile.num_classes) + " classes, models have " +
                             std::to_string(classes));
}

std::string OutpaintModels::fingerprint() const {
  return to_hex(fnv1a64((layout ? layout->fingerprint() : std::string()) + "|" +
                        (image ? image->fingerprint() : std::string())));
}

OutpaintRequest OutpaintRequest::from_cropped(const torch::Tensor& cropped, double fraction,
                                              std::string source_id) {
  check_image(cropped);
  if (!(fraction > 0.0 && fraction < 1.0))
    throw InvalidArgument("extension fraction must lie in (0, 1)");
  const auto height = cropped.size(1);
  const auto known = cropped.size(2);
  const auto width =
      static_cast<std::int64_t>(std::llround(static_cast<double>(known) / (1.0 - fraction)));
  if (width <= known) throw InvalidArgument("extension fraction too small for this width");
  OutpaintRequest request;
  request.image = torch::zeros({3, height, width}, cropped.options());
  request.image.slice(2, 0, known).copy_(cropped);
  request.extension_fraction = fraction;
  auto values = torch::zeros({height, width}, torch::kBool);
  values.slice(1, 0, known).fill_(true);
  request.mask = BinaryMask(values);
  request.source_id = std::move(source_id);
  return request;
}

bool OutpaintRequest::out_of_distribution() const {
  return std::abs(extension_fraction - 0.25) > 1e-9 && std::abs(extension_fraction - 0.5) > 1e-9;
}

BinaryMask OutpaintRequest::resolved_mask() const {
  check_image(image);
  if (mask) {
    if (mask->height() != image.size(1) || mask->width() != image.size(2))
      throw InvalidArgument("request mask does not match the image size");
    return *mask;
  }
  return make_right_mask(image.size(1), image.size(2), extension_fraction);
}

OutpaintResult outpaint(const OutpaintRequest& request, const OutpaintModels& models) {
  const auto start = Clock::now();
  models.validate();
  const auto mask = request.resolved_mask();
  const auto layout = request_layout(request, mask, models);
  const auto masked = mask_tensors(request.image, one_hot(layout), mask);
  const auto classes = layout.num_classes();

  const auto stage1_start = Clock::now();
  auto logits = models.layout
                    ->extend(masked.pixels.unsqueeze(0), masked.layout.planes.unsqueeze(0),
                             mask.as_plane().unsqueeze(0))
                    .squeeze(0);
  if (logits.dim() != 3 || logits.size(0) != classes || logits.size(1) != mask.height() ||
      logits.size(2) != mask.width())
    throw InvalidArgument("layout extender returned the wrong shape");
  auto composite = torch::where(keep_planes(mask, classes), masked.layout.planes,
                                torch::softmax(logits.to(torch::kFloat), 0));
  auto extended = argmax_layout(composite);
  const auto stage1_ms = elapsed_ms(stage1_start);

  auto result = synthesize(masked.pixels, extended, masked.layout.planes, mask, models);
  result.stage1_ms = stage1_ms;
  result.total_ms = elapsed_ms(start);
  return result;
}

OutpaintResult regenerate_with_layout(const OutpaintRequest& request,
                                      const SemanticLayout& edited_layout,
                                      const OutpaintModels& models) {
  const auto start = Clock::now();
  models.validate();
  const auto mask = request.resolved_mask();
  if (edited_layout.height() != mask.height() || edited_layout.width() != mask.width())
    throw InvalidArgument("edited layout is " + std::to_string(edited_layout.height()) + "x" +
                          std::to_string(edited_layout.width()) + ", the image is " +
                          std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  if (edited_layout.num_classes() != models.image->num_classes())
    throw InvalidArgument("edited layout class count does not match the models");
  const auto masked_layout = request.layout ? *request.layout : edited_layout;
  const auto masked = mask_tensors(request.image, one_hot(masked_layout), mask);
  auto result = synthesize(masked.pixels, edited_layout, masked.layout.planes, mask, models);
  result.total_ms = elapsed_ms(start);
  return result;
}

OutpaintResult outpaint_cityscapes(const torch::Tensor& image, double extension_fraction,
                                   const OutpaintModels& models,
                                   const std::optional<SemanticLayout>& layout,
                                   const std::string& source_id) {
  const auto start = Clock::now();
  models.validate();
  check_image(image);
  if (image.size(2) != 2 * image.size(1))
    throw InvalidArgument("cityscapes recomposition expects an H x 2H image");
  auto full_layout = layout ? *layout : models.segmenter->predict(image, source_id);
  ImageSample sample{image, full_layout, BinaryMask::ones(image.size(1), image.size(2)), source_id};
  auto [left, right] = cityscapes_split(sample);

  auto run_half = [&](const ImageSample& half) {
    OutpaintRequest request;
    request.image = half.pixels;
    request.extension_fraction = extension_fraction;
    request.layout = half.layout;
    request.source_id = source_id;
    return outpaint(request, models);
  };
  auto left_result = run_half(left);
  auto right_result = run_half(right);

  auto as_sample = [](const OutpaintResult& r) {
    return ImageSample{r.image, r.layout, r.mask, {}};
  };
  auto merged = cityscapes_merge(as_sample(left_result), as_sample(right_result));
  OutpaintResult result{merged.pixels, merged.layout,
                        torch::cat({left_result.masked_layout.flip({2}), right_result.masked_layout}, 2),
                        merged.mask};
  result.stage1_ms = left_result.stage1_ms + right_result.stage1_ms;
  result.stage2_ms = left_result.stage2_ms + right_result.stage2_ms;
  result.total_ms = elapsed_ms(start);
  return result;
}

}  // namespace outpaint
