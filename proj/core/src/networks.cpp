#include "outpaint/networks.hpp"

#include <algorithm>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "outpaint/errors.hpp"
#include "outpaint/util.hpp"

namespace F = torch::nn::functional;

namespace outpaint {
namespace {

std::int64_t scaled(std::int64_t channels, std::int64_t divisor) {
  if (divisor <= 0) throw InvalidArgument("channel divisor must be positive");
  return std::max<std::int64_t>(1, channels / divisor);
}

std::vector<DecoderEntry> standard_decoder_entries(std::int64_t divisor) {
  using K = DecoderEntryKind;
  const std::int64_t c1024 = scaled(1024, divisor), c512 = scaled(512, divisor),
                     c256 = scaled(256, divisor), c128 = scaled(128, divisor),
                     c64 = scaled(64, divisor);
  return {{K::residual_block, c1024}, {K::upsample, c1024},      {K::residual_block, c1024},
          {K::residual_block, c1024}, {K::upsample, c1024},      {K::residual_block, c512},
          {K::upsample, c512},        {K::residual_block, c256}, {K::upsample, c256},
          {K::residual_block, c128},  {K::upsample, c128},       {K::residual_block, c64}};
}

void validate_entries(const std::vector<DecoderEntry>& entries, std::int64_t out_channels) {
  if (entries.empty() || entries.front().kind != DecoderEntryKind::residual_block)
    throw InvalidArgument("decoder must start with a block");
  for (const auto& entry : entries)
    if (entry.channels <= 0) throw InvalidArgument("decoder channels must be positive");
  if (out_channels <= 0) throw InvalidArgument("decoder out_channels must be positive");
}

std::int64_t count_upsamples(const std::vector<DecoderEntry>& entries) {
  return std::count_if(entries.begin(), entries.end(),
                       [](const auto& e) { return e.kind == DecoderEntryKind::upsample; });
}

void describe_entries(std::ostringstream& out, const std::vector<DecoderEntry>& entries) {
  for (const auto& entry : entries)
    out << (entry.kind == DecoderEntryKind::upsample ? "up" : "block") << ':' << entry.channels
        << ';';
}

void describe_layers(std::ostringstream& out, const std::vector<ConvLayerSpec>& layers) {
  for (const auto& layer : layers)
    out << layer.kernel << '/' << layer.stride << '/' << layer.out_channels << ';';
}

// Output side of a k x k conv with padding 1.
std::int64_t conv_out(std::int64_t size, std::int64_t kernel, std::int64_t stride) {
  return (size + 2 - kernel) / stride + 1;
}

SpectralConv2d make_conv(std::int64_t in, std::int64_t out, std::int64_t kernel,
                         std::int64_t stride, std::int64_t padding, bool spectral_norm, bool bias) {
  SpectralConvOptions options(in, out, kernel);
  options.conv.stride(stride).padding(padding).bias(bias);
  options.spectral_norm = spectral_norm;
  return SpectralConv2d(options);
}

torch::Tensor upsample(const torch::Tensor& input) {
  return F::interpolate(input, F::InterpolateFuncOptions()
                                   .scale_factor(std::vector<double>{2.0, 2.0})
                                   .mode(torch::kNearest));
}

void check_input(const torch::Tensor& input, std::int64_t channels, std::int64_t factor,
                 const char* what) {
  if (input.dim() != 4) throw InvalidArgument(std::string(what) + ": input must be [B, C, H, W]");
  if (input.size(1) != channels)
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(channels) +
                          " input channels, got " + std::to_string(input.size(1)));
  if (input.size(2) % factor != 0 || input.size(3) % factor != 0)
    throw InvalidArgument(std::string(what) + ": spatial size " + std::to_string(input.size(2)) +
                          "x" + std::to_string(input.size(3)) + " is not divisible by " +
                          std::to_string(factor));
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

EncoderSpec EncoderSpec::standard(std::int64_t d) {
  EncoderSpec spec;
  spec.layers = {{7, 1, scaled(64, d)},   {3, 1, scaled(128, d)},  {3, 2, scaled(128, d)},
                 {3, 1, scaled(256, d)},  {3, 2, scaled(256, d)},  {3, 1, scaled(512, d)},
                 {3, 2, scaled(512, d)},  {3, 1, scaled(1024, d)}, {3, 2, scaled(1024, d)},
                 {3, 1, scaled(1024, d)}, {3, 2, scaled(1024, d)}};
  return spec;
}

std::int64_t EncoderSpec::downsample_factor() const {
  std::int64_t factor = 1;
  for (const auto& layer : layers) factor *= layer.stride;
  return factor;
}

void EncoderSpec::validate() const {
  if (layers.empty()) throw InvalidArgument("encoder has no layers");
  for (const auto& layer : layers) {
    if (layer.kernel <= 0 || layer.kernel % 2 == 0)
      throw InvalidArgument("encoder kernels must be odd and positive");
    if (layer.stride != 1 && layer.stride != 2)
      throw InvalidArgument("encoder strides must be 1 or 2");
    if (layer.out_channels <= 0) throw InvalidArgument("encoder channels must be positive");
  }
}

std::string EncoderSpec::describe() const {
  std::ostringstream out;
  out << "encoder[sn=" << spectral_norm << ",slope=" << leaky_slope << "]:";
  describe_layers(out, layers);
  return out.str();
}

ResidualDecoderSpec ResidualDecoderSpec::standard(std::int64_t out_channels,
                                                  OutputActivation activation,
                                                  std::int64_t divisor) {
  ResidualDecoderSpec spec;
  spec.entries = standard_decoder_entries(divisor);
  spec.out_channels = out_channels;
  spec.activation = activation;
  return spec;
}

std::int64_t ResidualDecoderSpec::upsample_factor() const {
  return std::int64_t{1} << count_upsamples(entries);
}

void ResidualDecoderSpec::validate() const { validate_entries(entries, out_channels); }

std::string ResidualDecoderSpec::describe() const {
  std::ostringstream out;
  out << "resdecoder[sn=" << spectral_norm << ",slope=" << leaky_slope
      << ",act=" << (activation == OutputActivation::tanh ? "tanh" : "none")
      << ",out=" << out_channels << "]:";
  describe_entries(out, entries);
  return out.str();
}

SpadeDecoderSpec SpadeDecoderSpec::standard(std::int64_t condition_channels,
                                            std::int64_t out_channels, std::int64_t divisor) {
  SpadeDecoderSpec spec;
  spec.entries = standard_decoder_entries(divisor);
  spec.out_channels = out_channels;
  spec.condition_channels = condition_channels;
  spec.hidden_channels = scaled(128, divisor);
  return spec;
}

std::int64_t SpadeDecoderSpec::upsample_factor() const {
  return std::int64_t{1} << count_upsamples(entries);
}

void SpadeDecoderSpec::validate() const {
  validate_entries(entries, out_channels);
  if (condition_channels <= 0 || hidden_channels <= 0)
    throw InvalidArgument("SPADE condition/hidden channels must be positive");
}

std::string SpadeDecoderSpec::describe() const {
  std::ostringstream out;
  out << "spadedecoder[sn=" << spectral_norm << ",slope=" << leaky_slope
      << ",out=" << out_channels << ",cond=" << condition_channels
      << ",hidden=" << hidden_channels << "]:";
  describe_entries(out, entries);
  return out.str();
}

MultiScaleDiscriminatorSpec MultiScaleDiscriminatorSpec::standard(std::int64_t d,
                                                                  std::int64_t num_scales) {
  MultiScaleDiscriminatorSpec spec;
  spec.layers = {{4, 2, scaled(64, d)},
                 {4, 2, scaled(128, d)},
                 {4, 2, scaled(256, d)},
                 {4, 1, scaled(512, d)},
                 {4, 1, 1}};
  spec.num_scales = num_scales;
  return spec;
}

std::int64_t MultiScaleDiscriminatorSpec::patch_size(std::int64_t input_size) const {
  auto size = input_size;
  for (const auto& layer : layers) size = conv_out(size, layer.kernel, layer.stride);
  return size;
}

std::int64_t MultiScaleDiscriminatorSpec::min_input_size() const {
  for (std::int64_t size = 1;; ++size) {
    bool fits = true;
    auto side = size;
    for (std::int64_t scale = 0; scale < num_scales && fits; ++scale) {
      if (scale > 0) side = (side - 1) / 2 + 1;  // 3x3 / stride 2 / pad 1 pool
      fits = patch_size(side) >= 1;
    }
    if (fits) return size;
  }
}

void MultiScaleDiscriminatorSpec::validate() const {
  if (layers.size() < 2) throw InvalidArgument("discriminator needs at least two layers");
  if (num_scales < 1) throw InvalidArgument("discriminator needs at least one scale");
  for (const auto& layer : layers)
    if (layer.kernel <= 0 || layer.stride <= 0 || layer.out_channels <= 0)
      throw InvalidArgument("discriminator layer values must be positive");
}

std::string MultiScaleDiscriminatorSpec::describe() const {
  std::ostringstream out;
  out << "msd[scales=" << num_scales << ",sn=" << spectral_norm << ",slope=" << leaky_slope
      << "]:";
  describe_layers(out, layers);
  return out.str();
}

std::string GeneratorSegSpec::describe() const {
  return "gseg[in=" + std::to_string(in_channels) + "]" + encoder.describe() + "|" +
         decoder.describe();
}
std::string GeneratorSegSpec::fingerprint() const { return to_hex(fnv1a64(describe())); }

std::string GeneratorImgSpec::describe() const {
  return "gimg[in=" + std::to_string(in_channels) + "]" + encoder.describe() + "|" +
         decoder.describe();
}
std::string GeneratorImgSpec::fingerprint() const { return to_hex(fnv1a64(describe())); }

std::string DiscriminatorSpec::describe() const {
  return "disc[in=" + std::to_string(in_channels) + "]" + table.describe();
}
std::string DiscriminatorSpec::fingerprint() const { return to_hex(fnv1a64(describe())); }

NetworkProfile NetworkProfile::by_name(const std::string& name) {
  if (name == "full") return full();
  if (name == "desk") return desk();
  throw InvalidArgument("unknown network profile '" + name + "' (expected full or desk)");
}

GeneratorSegSpec generator_seg_spec(std::int64_t num_classes, const NetworkProfile& profile) {
  if (num_classes <= 0) throw InvalidArgument("num_classes must be positive");
  return {EncoderSpec::standard(profile.channel_divisor),
          ResidualDecoderSpec::standard(num_classes, OutputActivation::none,
                                        profile.channel_divisor),
          3 + num_classes + 1};
}

GeneratorImgSpec generator_img_spec(std::int64_t num_classes, const NetworkProfile& profile) {
  if (num_classes <= 0) throw InvalidArgument("num_classes must be positive");
  return {EncoderSpec::standard(profile.channel_divisor),
          SpadeDecoderSpec::standard(num_classes + 1, 3, profile.channel_divisor),
          3 + num_classes + 1};
}

GeneratorSegSpec baseline_generator_spec(std::int64_t in_channels, const NetworkProfile& profile) {
  return {EncoderSpec::standard(profile.channel_divisor),
          ResidualDecoderSpec::standard(3, OutputActivation::tanh, profile.channel_divisor),
          in_channels};
}

DiscriminatorSpec discriminator_spec(std::int64_t in_channels, const NetworkProfile& profile) {
  return {MultiScaleDiscriminatorSpec::standard(profile.channel_divisor, profile.num_scales),
          in_channels};
}

// ---------------------------------------------------------------------------
// Modules
// ---------------------------------------------------------------------------

ConvUnitImpl::ConvUnitImpl(std::int64_t in_channels, const ConvLayerSpec& layer,
                           std::int64_t padding, bool spectral_norm, bool batch_norm, bool bias,
                           double leaky_slope, bool activation)
    : leaky_slope_(leaky_slope), activation_(activation) {
  conv = register_module("conv", make_conv(in_channels, layer.out_channels, layer.kernel,
                                           layer.stride, padding, spectral_norm, bias));
  if (batch_norm) norm = register_module("norm", torch::nn::BatchNorm2d(layer.out_channels));
}

torch::Tensor ConvUnitImpl::forward(const torch::Tensor& input) {
  auto x = conv->forward(input);
  if (norm) x = norm->forward(x);
  if (activation_) x = F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(leaky_slope_));
  return x;
}

LayerRecord ConvUnitImpl::record() const {
  return {"Conv", conv->kernel(), conv->stride(), conv->out_channels(), conv->spectral_norm(),
          static_cast<bool>(norm)};
}

EncoderImpl::EncoderImpl(const EncoderSpec& spec, std::int64_t in_channels) {
  spec.validate();
  auto channels = in_channels;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    units_.push_back(register_module(
        "unit_" + std::to_string(i),
        ConvUnit(channels, layer, layer.kernel / 2, spec.spectral_norm, true, false,
                 spec.leaky_slope, true)));
    channels = layer.out_channels;
  }
}

torch::Tensor EncoderImpl::forward(torch::Tensor input) {
  for (auto& unit : units_) input = unit->forward(input);
  return input;
}

std::vector<LayerRecord> EncoderImpl::layer_table() const {
  std::vector<LayerRecord> table;
  for (const auto& unit : units_) table.push_back(unit->record());
  return table;
}

ResidualBlockImpl::ResidualBlockImpl(std::int64_t in_channels, std::int64_t out_channels,
                                     bool spectral_norm, double leaky_slope)
    : leaky_slope_(leaky_slope) {
  norm_0_ = register_module("norm_0", torch::nn::BatchNorm2d(in_channels));
  conv_0_ = register_module("conv_0",
                            make_conv(in_channels, out_channels, 3, 1, 1, spectral_norm, false));
  norm_1_ = register_module("norm_1", torch::nn::BatchNorm2d(out_channels));
  conv_1_ = register_module("conv_1",
                            make_conv(out_channels, out_channels, 3, 1, 1, spectral_norm, false));
  if (in_channels != out_channels)
    shortcut_ = register_module(
        "shortcut", make_conv(in_channels, out_channels, 1, 1, 0, spectral_norm, false));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& input) {
  const auto act = F::LeakyReLUFuncOptions().negative_slope(leaky_slope_);
  auto skip = shortcut_ ? shortcut_->forward(input) : input;
  auto x = conv_0_->forward(F::leaky_relu(norm_0_->forward(input), act));
  x = conv_1_->forward(F::leaky_relu(norm_1_->forward(x), act));
  return skip + x;
}

LayerRecord ResidualBlockImpl::record() const {
  return {"ResnetBlock", conv_1_->kernel(), conv_1_->stride(), conv_1_->out_channels(),
          conv_1_->spectral_norm(), true};
}

ResidualDecoderImpl::ResidualDecoderImpl(const ResidualDecoderSpec& spec,
                                         std::int64_t in_channels)
    : spec_(spec) {
  spec_.validate();
  auto channels = in_channels;
  for (const auto& entry : spec_.entries) {
    if (entry.kind != DecoderEntryKind::residual_block) continue;
    blocks_.push_back(register_module(
        "block_" + std::to_string(blocks_.size()),
        ResidualBlock(channels, entry.channels, spec_.spectral_norm, spec_.leaky_slope)));
    channels = entry.channels;
  }
  final_norm_ = register_module("final_norm", torch::nn::BatchNorm2d(channels));
  final_conv_ =
      register_module("final_conv", make_conv(channels, spec_.out_channels, 3, 1, 1, false, true));
}

torch::Tensor ResidualDecoderImpl::forward(torch::Tensor input) {
  std::size_t block = 0;
  for (const auto& entry : spec_.entries)
    input = entry.kind == DecoderEntryKind::upsample ? upsample(input)
                                                     : blocks_[block++]->forward(input);
  input = F::leaky_relu(final_norm_->forward(input),
                        F::LeakyReLUFuncOptions().negative_slope(spec_.leaky_slope));
  input = final_conv_->forward(input);
  return spec_.activation == OutputActivation::tanh ? torch::tanh(input) : input;
}

std::vector<LayerRecord> ResidualDecoderImpl::layer_table() const {
  std::vector<LayerRecord> table;
  std::size_t block = 0;
  for (const auto& entry : spec_.entries) {
    if (entry.kind == DecoderEntryKind::upsample) {
      table.push_back({"Upsample", 0, 0, table.empty() ? 0 : table.back().channels, false, false});
    } else {
      table.push_back(blocks_[block++]->record());
    }
  }
  table.push_back({"Conv", final_conv_->kernel(), final_conv_->stride(),
                   final_conv_->out_channels(), final_conv_->spectral_norm(), false});
  return table;
}

SpadeImpl::SpadeImpl(std::int64_t feature_channels, std::int64_t condition_channels,
                     std::int64_t hidden_channels) {
  norm_ = register_module(
      "norm", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(feature_channels).affine(false)));
  auto conv = [](std::int64_t in, std::int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
  };
  shared_ = register_module("shared", conv(condition_channels, hidden_channels));
  gamma_ = register_module("gamma", conv(hidden_channels, feature_channels));
  beta_ = register_module("beta", conv(hidden_channels, feature_channels));
}

torch::Tensor SpadeImpl::forward(const torch::Tensor& features, const torch::Tensor& condition) {
  auto normalized = norm_->forward(features);
  auto cond = condition;
  if (cond.size(2) != features.size(2) || cond.size(3) != features.size(3)) {
    cond = F::interpolate(cond, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{features.size(2),
                                                                    features.size(3)})
                                    .mode(torch::kNearest));
  }
  auto hidden = torch::relu(shared_->forward(cond));
  return normalized * (1 + gamma_->forward(hidden)) + beta_->forward(hidden);
}

SpadeBlockImpl::SpadeBlockImpl(std::int64_t in_channels, std::int64_t out_channels,
                               std::int64_t condition_channels, std::int64_t hidden_channels,
                               bool spectral_norm, double leaky_slope)
    : leaky_slope_(leaky_slope) {
  const auto middle = std::min(in_channels, out_channels);
  norm_0_ = register_module("norm_0", Spade(in_channels, condition_channels, hidden_channels));
  conv_0_ = register_module("conv_0", make_conv(in_channels, middle, 3, 1, 1, spectral_norm, false));
  norm_1_ = register_module("norm_1", Spade(middle, condition_channels, hidden_channels));
  conv_1_ =
      register_module("conv_1", make_conv(middle, out_channels, 3, 1, 1, spectral_norm, false));
  if (in_channels != out_channels) {
    norm_s_ = register_module("norm_s", Spade(in_channels, condition_channels, hidden_channels));
    shortcut_ = register_module(
        "shortcut", make_conv(in_channels, out_channels, 1, 1, 0, spectral_norm, false));
  }
}

torch::Tensor SpadeBlockImpl::forward(const torch::Tensor& features,
                                      const torch::Tensor& condition) {
  const auto act = F::LeakyReLUFuncOptions().negative_slope(leaky_slope_);
  auto skip = shortcut_ ? shortcut_->forward(norm_s_->forward(features, condition)) : features;
  auto x = conv_0_->forward(F::leaky_relu(norm_0_->forward(features, condition), act));
  x = conv_1_->forward(F::leaky_relu(norm_1_->forward(x, condition), act));
  return skip + x;
}

LayerRecord SpadeBlockImpl::record() const {
  return {"SPADEBlock", conv_1_->kernel(), conv_1_->stride(), conv_1_->out_channels(),
          conv_1_->spectral_norm(), true};
}

SpadeDecoderImpl::SpadeDecoderImpl(const SpadeDecoderSpec& spec, std::int64_t in_channels)
    : spec_(spec) {
  spec_.validate();
  auto channels = in_channels;
  for (const auto& entry : spec_.entries) {
    if (entry.kind != DecoderEntryKind::residual_block) continue;
    blocks_.push_back(register_module(
        "block_" + std::to_string(blocks_.size()),
        SpadeBlock(channels, entry.channels, spec_.condition_channels, spec_.hidden_channels,
                   spec_.spectral_norm, spec_.leaky_slope)));
    channels = entry.channels;
  }
  final_conv_ =
      register_module("final_conv", make_conv(channels, spec_.out_channels, 3, 1, 1, false, true));
}

torch::Tensor SpadeDecoderImpl::forward(torch::Tensor input, const torch::Tensor& condition) {
  std::size_t block = 0;
  for (const auto& entry : spec_.entries)
    input = entry.kind == DecoderEntryKind::upsample ? upsample(input)
                                                     : blocks_[block++]->forward(input, condition);
  input = F::leaky_relu(input, F::LeakyReLUFuncOptions().negative_slope(spec_.leaky_slope));
  return torch::tanh(final_conv_->forward(input));
}

std::vector<LayerRecord> SpadeDecoderImpl::layer_table() const {
  std::vector<LayerRecord> table;
  std::size_t block = 0;
  for (const auto& entry : spec_.entries) {
    if (entry.kind == DecoderEntryKind::upsample) {
      table.push_back({"Upsample", 0, 0, table.empty() ? 0 : table.back().channels, false, false});
    } else {
      table.push_back(blocks_[block++]->record());
    }
  }
  table.push_back({"Conv", final_conv_->kernel(), final_conv_->stride(),
                   final_conv_->out_channels(), final_conv_->spectral_norm(), false});
  return table;
}

GeneratorSegImpl::GeneratorSegImpl(GeneratorSegSpec spec) : spec_(std::move(spec)) {
  if (spec_.in_channels <= 0) throw InvalidArgument("generator in_channels must be positive");
  if (spec_.encoder.downsample_factor() != spec_.decoder.upsample_factor())
    throw InvalidArgument("encoder downsampling and decoder upsampling disagree");
  encoder_ = register_module("encoder", Encoder(spec_.encoder, spec_.in_channels));
  decoder_ = register_module("decoder", ResidualDecoder(spec_.decoder, spec_.encoder.out_channels()));
}

torch::Tensor GeneratorSegImpl::encode(const torch::Tensor& input) {
  check_input(input, spec_.in_channels, spec_.encoder.downsample_factor(), "generator");
  return encoder_->forward(input);
}

torch::Tensor GeneratorSegImpl::forward(const torch::Tensor& input) {
  return decoder_->forward(encode(input));
}

GeneratorImgImpl::GeneratorImgImpl(GeneratorImgSpec spec) : spec_(std::move(spec)) {
  if (spec_.in_channels <= 0) throw InvalidArgument("generator in_channels must be positive");
  if (spec_.encoder.downsample_factor() != spec_.decoder.upsample_factor())
    throw InvalidArgument("encoder downsampling and decoder upsampling disagree");
  encoder_ = register_module("encoder", Encoder(spec_.encoder, spec_.in_channels));
  decoder_ = register_module("decoder", SpadeDecoder(spec_.decoder, spec_.encoder.out_channels()));
}

torch::Tensor GeneratorImgImpl::forward(const torch::Tensor& input,
                                        const torch::Tensor& condition) {
  check_input(input, spec_.in_channels, spec_.encoder.downsample_factor(), "generator");
  if (condition.dim() != 4 || condition.size(0) != input.size(0) ||
      condition.size(1) != spec_.decoder.condition_channels)
    throw InvalidArgument("SPADE condition must be [B, " +
                          std::to_string(spec_.decoder.condition_channels) + ", H, W]");
  return decoder_->forward(encoder_->forward(input), condition);
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const MultiScaleDiscriminatorSpec& spec,
                                               std::int64_t in_channels) {
  auto channels = in_channels;
  const auto last = spec.layers.size() - 1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const bool inner = i != 0 && i != last;
    units_.push_back(register_module(
        "unit_" + std::to_string(i),
        ConvUnit(channels, spec.layers[i], 1, inner && spec.spectral_norm, inner, !inner,
                 spec.leaky_slope, i != last)));
    channels = spec.layers[i].out_channels;
  }
}

torch::Tensor PatchDiscriminatorImpl::forward(torch::Tensor input) {
  for (auto& unit : units_) input = unit->forward(input);
  return input;
}

std::vector<LayerRecord> PatchDiscriminatorImpl::layer_table() const {
  std::vector<LayerRecord> table;
  for (const auto& unit : units_) table.push_back(unit->record());
  return table;
}

torch::Tensor downsample_half(const torch::Tensor& input) {
  return F::avg_pool2d(
      input, F::AvgPool2dFuncOptions(3).stride(2).padding(1).count_include_pad(false));
}

MultiScaleDiscriminatorImpl::MultiScaleDiscriminatorImpl(DiscriminatorSpec spec)
    : spec_(std::move(spec)) {
  spec_.table.validate();
  if (spec_.in_channels <= 0) throw InvalidArgument("discriminator in_channels must be positive");
  for (std::int64_t scale = 0; scale < spec_.table.num_scales; ++scale)
    scales_.push_back(register_module("scale_" + std::to_string(scale),
                                      PatchDiscriminator(spec_.table, spec_.in_channels)));
}

std::vector<torch::Tensor> MultiScaleDiscriminatorImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != spec_.in_channels)
    throw InvalidArgument("discriminator: expected [B, " + std::to_string(spec_.in_channels) +
                          ", H, W] input");
  const auto minimum = spec_.table.min_input_size();
  if (input.size(2) < minimum || input.size(3) < minimum)
    throw InvalidArgument("discriminator: input " + std::to_string(input.size(2)) + "x" +
                          std::to_string(input.size(3)) + " is below the minimal footprint " +
                          std::to_string(minimum));
  std::vector<torch::Tensor> logits;
  auto x = input;
  for (std::size_t scale = 0; scale < scales_.size(); ++scale) {
    if (scale > 0) x = downsample_half(x);
    logits.push_back(scales_[scale]->forward(x));
  }
  return logits;
}

std::vector<LayerRecord> MultiScaleDiscriminatorImpl::layer_table(std::int64_t scale) const {
  return scales_.at(static_cast<std::size_t>(scale))->layer_table();
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

void initialize_weights(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& item : module.named_parameters(true)) {
    auto& tensor = item.value();
    const auto& name = item.key();
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias) {
      tensor.zero_();
    } else if (tensor.dim() >= 2) {
      tensor.normal_(0.0, 0.02, generator);
    } else {
      tensor.normal_(1.0, 0.02, generator);
    }
  }
  for (auto& item : module.named_buffers(true)) {
    const auto& name = item.key();
    const bool estimate = name == "u" || name == "v" ||
                          (name.size() >= 2 && (name.compare(name.size() - 2, 2, ".u") == 0 ||
                                                name.compare(name.size() - 2, 2, ".v") == 0));
    if (estimate) {
      auto& tensor = item.value();
      tensor.normal_(0.0, 1.0, generator);
      tensor.div_(tensor.norm() + 1e-12);
    }
  }
  for (auto& child : module.modules(true))
    if (auto* conv = child->as<SpectralConv2dImpl>()) conv->refresh_estimate(15);
}

GeneratorSeg build_generator_seg(const GeneratorSegSpec& spec, std::uint64_t seed) {
  GeneratorSeg generator(spec);
  initialize_weights(*generator, seed);
  return generator;
}

GeneratorImg build_generator_img(const GeneratorImgSpec& spec, std::uint64_t seed) {
  GeneratorImg generator(spec);
  initialize_weights(*generator, seed);
  return generator;
}

MultiScaleDiscriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  MultiScaleDiscriminator discriminator(spec);
  initialize_weights(*discriminator, seed);
  return discriminator;
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t count = 0;
  for (const auto& parameter : module.parameters(true)) count += parameter.numel();
  return count;
}

}  // namespace outpaint
