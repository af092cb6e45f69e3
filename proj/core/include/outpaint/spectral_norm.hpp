#pragma once

#include <torch/nn/module.h>
#include <torch/nn/options/conv.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

namespace outpaint {

struct SpectralConvOptions {
  SpectralConvOptions(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel)
      : conv(in_channels, out_channels, kernel) {}

  torch::nn::Conv2dOptions conv;
  bool spectral_norm = true;
  int power_iterations = 1;
  double eps = 1e-12;
};

/// 2-D convolution whose weight is divided by a power-iteration estimate of
/// its largest singular value. The estimate vectors `u`/`v` are buffers: they
/// advance once per training-mode forward and stay frozen in eval mode, so
/// eval forwards are pure and safe to run concurrently.
class SpectralConv2dImpl : public torch::nn::Module {
 public:
  explicit SpectralConv2dImpl(SpectralConvOptions options);

  torch::Tensor forward(const torch::Tensor& input);

  /// The weight actually convolved: raw weight / sigma, or raw weight when
  /// spectral normalisation is off.
  torch::Tensor effective_weight();
  /// Runs extra power iterations on the stored vectors.
  void refresh_estimate(int iterations);

  const SpectralConvOptions& options() const { return options_; }
  std::int64_t kernel() const { return options_.conv.kernel_size()->at(0); }
  std::int64_t stride() const { return options_.conv.stride()->at(0); }
  std::int64_t out_channels() const { return options_.conv.out_channels(); }
  bool spectral_norm() const { return options_.spectral_norm; }

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  void power_iterate(const torch::Tensor& matrix, int iterations);

  SpectralConvOptions options_;
  torch::Tensor u_;
  torch::Tensor v_;
};
TORCH_MODULE(SpectralConv2d);

/// Largest singular value of weight.reshape(out, -1), by power iteration from
/// a fixed start vector. Independent of the module's stored estimate.
double spectral_norm_estimate(const torch::Tensor& weight, int iterations = 200);

}  // namespace outpaint
