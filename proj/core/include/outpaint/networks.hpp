#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/batchnorm.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

#include "outpaint/spectral_norm.hpp"

namespace outpaint {

// ---------------------------------------------------------------------------
// Declarative layer tables
// ---------------------------------------------------------------------------

struct ConvLayerSpec {
  std::int64_t kernel;
  std::int64_t stride;
  std::int64_t out_channels;
};

enum class DecoderEntryKind { residual_block, upsample };

struct DecoderEntry {
  DecoderEntryKind kind;
  std::int64_t channels;
};

enum class OutputActivation { none, tanh };

/// Shared encoder: 11 convs, 5 of them stride 2; BN, leaky ReLU and spectral
/// norm on every layer.
struct EncoderSpec {
  std::vector<ConvLayerSpec> layers;
  bool spectral_norm = true;
  double leaky_slope = 0.2;

  /// The exact table when `channel_divisor` is 1.
  static EncoderSpec standard(std::int64_t channel_divisor = 1);
  std::int64_t downsample_factor() const;
  std::int64_t out_channels() const { return layers.back().out_channels; }
  void validate() const;
  std::string describe() const;
};

/// Residual-block / nearest x2 upsample sequence followed by a 3x3 output conv.
struct ResidualDecoderSpec {
  std::vector<DecoderEntry> entries;
  std::int64_t out_channels = 0;
  OutputActivation activation = OutputActivation::none;
  bool spectral_norm = true;
  double leaky_slope = 0.2;

  static ResidualDecoderSpec standard(std::int64_t out_channels,
                                      OutputActivation activation = OutputActivation::none,
                                      std::int64_t channel_divisor = 1);
  std::int64_t upsample_factor() const;
  void validate() const;
  std::string describe() const;
};

/// Same skeleton as ResidualDecoderSpec; each block is modulated by SPADE
/// units conditioned on [layout one-hot ++ mask]. Output goes through tanh.
struct SpadeDecoderSpec {
  std::vector<DecoderEntry> entries;
  std::int64_t out_channels = 3;
  std::int64_t condition_channels = 0;
  std::int64_t hidden_channels = 128;
  bool spectral_norm = true;
  double leaky_slope = 0.2;

  static SpadeDecoderSpec standard(std::int64_t condition_channels,
                                   std::int64_t out_channels = 3,
                                   std::int64_t channel_divisor = 1);
  std::int64_t upsample_factor() const;
  void validate() const;
  std::string describe() const;
};

/// Per-scale patch discriminator table (kernel 4; strides 2,2,2,1,1; channels
/// 64,128,256,512,1) replicated over an average-pooled image pyramid.
struct MultiScaleDiscriminatorSpec {
  std::vector<ConvLayerSpec> layers;
  std::int64_t num_scales = 2;
  bool spectral_norm = true;
  double leaky_slope = 0.2;

  static MultiScaleDiscriminatorSpec standard(std::int64_t channel_divisor = 1,
                                              std::int64_t num_scales = 2);
  /// Smallest square input whose every scale still yields a 1x1 patch map.
  std::int64_t min_input_size() const;
  /// Patch-map side length for a given input side at scale 0.
  std::int64_t patch_size(std::int64_t input_size) const;
  void validate() const;
  std::string describe() const;
};

struct GeneratorSegSpec {
  EncoderSpec encoder;
  ResidualDecoderSpec decoder;
  std::int64_t in_channels = 0;

  std::string describe() const;
  std::string fingerprint() const;
};

struct GeneratorImgSpec {
  EncoderSpec encoder;
  SpadeDecoderSpec decoder;
  std::int64_t in_channels = 0;

  std::string describe() const;
  std::string fingerprint() const;
};

struct DiscriminatorSpec {
  MultiScaleDiscriminatorSpec table;
  std::int64_t in_channels = 0;

  std::string describe() const;
  std::string fingerprint() const;
};

/// Channel width and pyramid depth shared by every network of a run.
struct NetworkProfile {
  std::int64_t channel_divisor = 1;
  std::int64_t num_scales = 2;
  std::int64_t image_size = 256;

  static NetworkProfile full() { return {1, 2, 256}; }
  static NetworkProfile desk() { return {4, 2, 64}; }
  /// "full" or "desk".
  static NetworkProfile by_name(const std::string& name);
};

/// Layer-stage generator: input [image 3 ++ one-hot C ++ mask 1], C logits out.
GeneratorSegSpec generator_seg_spec(std::int64_t num_classes, const NetworkProfile& profile);
/// Image-stage generator: same input, SPADE condition [one-hot C ++ mask 1].
GeneratorImgSpec generator_img_spec(std::int64_t num_classes, const NetworkProfile& profile);
/// Single-stage baseline generator (residual decoder, tanh, 3 channels out).
GeneratorSegSpec baseline_generator_spec(std::int64_t in_channels, const NetworkProfile& profile);
DiscriminatorSpec discriminator_spec(std::int64_t in_channels, const NetworkProfile& profile);

// ---------------------------------------------------------------------------
// Layer reporting
// ---------------------------------------------------------------------------

/// One row of an instantiated network's layer table, read back from the
/// constructed modules rather than the spec.
struct LayerRecord {
  std::string type;  // "Conv", "ResnetBlock", "SPADEBlock", "Upsample"
  std::int64_t kernel = 0;
  std::int64_t stride = 0;
  std::int64_t channels = 0;
  bool spectral_norm = false;
  bool batch_norm = false;

  bool operator==(const LayerRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Modules
// ---------------------------------------------------------------------------

/// Conv -> optional batch norm -> optional leaky ReLU.
class ConvUnitImpl : public torch::nn::Module {
 public:
  ConvUnitImpl(std::int64_t in_channels, const ConvLayerSpec& layer, std::int64_t padding,
               bool spectral_norm, bool batch_norm, bool bias, double leaky_slope,
               bool activation);
  torch::Tensor forward(const torch::Tensor& input);
  LayerRecord record() const;

  SpectralConv2d conv{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};

 private:
  double leaky_slope_;
  bool activation_;
};
TORCH_MODULE(ConvUnit);

class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(const EncoderSpec& spec, std::int64_t in_channels);
  torch::Tensor forward(torch::Tensor input);
  std::vector<LayerRecord> layer_table() const;

 private:
  std::vector<ConvUnit> units_;
};
TORCH_MODULE(Encoder);

/// Pre-activation residual block: BN, leaky ReLU, 3x3 conv, twice; learned
/// 1x1 shortcut when channel counts differ.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(std::int64_t in_channels, std::int64_t out_channels, bool spectral_norm,
                    double leaky_slope);
  torch::Tensor forward(const torch::Tensor& input);
  LayerRecord record() const;

 private:
  torch::nn::BatchNorm2d norm_0_{nullptr}, norm_1_{nullptr};
  SpectralConv2d conv_0_{nullptr}, conv_1_{nullptr}, shortcut_{nullptr};
  double leaky_slope_;
};
TORCH_MODULE(ResidualBlock);

class ResidualDecoderImpl : public torch::nn::Module {
 public:
  ResidualDecoderImpl(const ResidualDecoderSpec& spec, std::int64_t in_channels);
  torch::Tensor forward(torch::Tensor input);
  std::vector<LayerRecord> layer_table() const;

 private:
  ResidualDecoderSpec spec_;
  std::vector<ResidualBlock> blocks_;
  torch::nn::BatchNorm2d final_norm_{nullptr};
  SpectralConv2d final_conv_{nullptr};
};
TORCH_MODULE(ResidualDecoder);

/// Spatially-adaptive normalisation: parameter-free batch norm, then a
/// per-pixel scale and shift predicted from the condition map, which is
/// nearest-resized to the feature resolution.
class SpadeImpl : public torch::nn::Module {
 public:
  SpadeImpl(std::int64_t feature_channels, std::int64_t condition_channels,
            std::int64_t hidden_channels);
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& condition);

 private:
  torch::nn::BatchNorm2d norm_{nullptr};
  torch::nn::Conv2d shared_{nullptr}, gamma_{nullptr}, beta_{nullptr};
};
TORCH_MODULE(Spade);

class SpadeBlockImpl : public torch::nn::Module {
 public:
  SpadeBlockImpl(std::int64_t in_channels, std::int64_t out_channels,
                 std::int64_t condition_channels, std::int64_t hidden_channels,
                 bool spectral_norm, double leaky_slope);
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& condition);
  LayerRecord record() const;

 private:
  Spade norm_0_{nullptr}, norm_1_{nullptr}, norm_s_{nullptr};
  SpectralConv2d conv_0_{nullptr}, conv_1_{nullptr}, shortcut_{nullptr};
  double leaky_slope_;
};
TORCH_MODULE(SpadeBlock);

class SpadeDecoderImpl : public torch::nn::Module {
 public:
  SpadeDecoderImpl(const SpadeDecoderSpec& spec, std::int64_t in_channels);
  torch::Tensor forward(torch::Tensor input, const torch::Tensor& condition);
  std::vector<LayerRecord> layer_table() const;

 private:
  SpadeDecoderSpec spec_;
  std::vector<SpadeBlock> blocks_;
  SpectralConv2d final_conv_{nullptr};
};
TORCH_MODULE(SpadeDecoder);

/// Encoder + residual decoder. Stage-1 layout generator and the single-stage
/// ablation baselines.
class GeneratorSegImpl : public torch::nn::Module {
 public:
  explicit GeneratorSegImpl(GeneratorSegSpec spec);
  /// [B, in, H, W] -> [B, out, H, W]; H and W must be divisible by 32.
  torch::Tensor forward(const torch::Tensor& input);
  torch::Tensor encode(const torch::Tensor& input);

  const GeneratorSegSpec& spec() const { return spec_; }
  std::vector<LayerRecord> encoder_table() const { return encoder_->layer_table(); }
  std::vector<LayerRecord> decoder_table() const { return decoder_->layer_table(); }

 private:
  GeneratorSegSpec spec_;
  Encoder encoder_{nullptr};
  ResidualDecoder decoder_{nullptr};
};
TORCH_MODULE(GeneratorSeg);

/// Encoder + SPADE decoder. Stage-2 image generator.
class GeneratorImgImpl : public torch::nn::Module {
 public:
  explicit GeneratorImgImpl(GeneratorImgSpec spec);
  /// input [B, in, H, W], condition [B, cond, h, w] -> [B, 3, H, W] in (-1, 1).
  torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& condition);

  const GeneratorImgSpec& spec() const { return spec_; }
  std::vector<LayerRecord> encoder_table() const { return encoder_->layer_table(); }
  std::vector<LayerRecord> decoder_table() const { return decoder_->layer_table(); }

 private:
  GeneratorImgSpec spec_;
  Encoder encoder_{nullptr};
  SpadeDecoder decoder_{nullptr};
};
TORCH_MODULE(GeneratorImg);

class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  PatchDiscriminatorImpl(const MultiScaleDiscriminatorSpec& spec, std::int64_t in_channels);
  torch::Tensor forward(torch::Tensor input);
  std::vector<LayerRecord> layer_table() const;

 private:
  std::vector<ConvUnit> units_;
};
TORCH_MODULE(PatchDiscriminator);

/// Identical patch discriminators on an image pyramid; scale k sees the input
/// average-pooled k times by 1/2. Returns one patch-logit map per scale.
class MultiScaleDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit MultiScaleDiscriminatorImpl(DiscriminatorSpec spec);
  std::vector<torch::Tensor> forward(const torch::Tensor& input);

  const DiscriminatorSpec& spec() const { return spec_; }
  std::int64_t num_scales() const { return static_cast<std::int64_t>(scales_.size()); }
  std::vector<LayerRecord> layer_table(std::int64_t scale = 0) const;

 private:
  DiscriminatorSpec spec_;
  std::vector<PatchDiscriminator> scales_;
};
TORCH_MODULE(MultiScaleDiscriminator);

/// Halves spatial size with a 3x3/stride-2 average pool that ignores padding.
torch::Tensor downsample_half(const torch::Tensor& input);

GeneratorSeg build_generator_seg(const GeneratorSegSpec& spec, std::uint64_t seed);
GeneratorImg build_generator_img(const GeneratorImgSpec& spec, std::uint64_t seed);
MultiScaleDiscriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

/// Gaussian(0, 0.02) conv weights, Gaussian(1, 0.02) norm scales, zero biases,
/// drawn from a private generator seeded with `seed`; spectral estimates are
/// then re-converged.
void initialize_weights(torch::nn::Module& module, std::uint64_t seed);

std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace outpaint
