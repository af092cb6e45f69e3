#include "outpaint/spectral_norm.hpp"

#include <torch/torch.h>

namespace F = torch::nn::functional;

namespace outpaint {
namespace {

torch::Tensor normalize(const torch::Tensor& vector, double eps) {
  return vector / (vector.norm() + eps);
}

}  // namespace

SpectralConv2dImpl::SpectralConv2dImpl(SpectralConvOptions options)
    : options_(std::move(options)) {
  const auto& conv = options_.conv;
  const auto kernel = conv.kernel_size();
  weight = register_parameter(
      "weight", torch::empty({conv.out_channels(), conv.in_channels() / conv.groups(),
                              kernel->at(0), kernel->at(1)}));
  torch::nn::init::normal_(weight, 0.0, 0.02);
  if (conv.bias()) bias = register_parameter("bias", torch::zeros({conv.out_channels()}));
  if (options_.spectral_norm) {
    const auto rows = weight.size(0);
    const auto cols = weight.numel() / rows;
    u_ = register_buffer("u", normalize(torch::randn({rows}), options_.eps));
    v_ = register_buffer("v", normalize(torch::randn({cols}), options_.eps));
    refresh_estimate(15);
  }
}

void SpectralConv2dImpl::power_iterate(const torch::Tensor& matrix, int iterations) {
  torch::NoGradGuard no_grad;
  auto u = u_.clone();
  auto v = v_.clone();
  for (int i = 0; i < iterations; ++i) {
    v = normalize(torch::mv(matrix.t(), u), options_.eps);
    u = normalize(torch::mv(matrix, v), options_.eps);
  }
  // In-place copies keep the registered buffer identities stable.
  u_.copy_(u);
  v_.copy_(v);
}

void SpectralConv2dImpl::refresh_estimate(int iterations) {
  if (!options_.spectral_norm) return;
  auto matrix = weight.detach().reshape({weight.size(0), -1});
  power_iterate(matrix, iterations);
}

torch::Tensor SpectralConv2dImpl::effective_weight() {
  if (!options_.spectral_norm) return weight;
  auto matrix = weight.reshape({weight.size(0), -1});
  if (is_training() && options_.power_iterations > 0)
    power_iterate(matrix.detach(), options_.power_iterations);
  // Clones: the buffers move again on the next training forward, which would
  // otherwise invalidate tensors saved for this graph's backward.
  auto sigma = torch::dot(u_.clone(), torch::mv(matrix, v_.clone()));
  return weight / sigma;
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& input) {
  const auto& conv = options_.conv;
  auto padding = std::get<torch::ExpandingArray<2>>(conv.padding());
  return torch::conv2d(input, effective_weight(), bias, *conv.stride(), *padding,
                       *conv.dilation(), conv.groups());
}

double spectral_norm_estimate(const torch::Tensor& weight, int iterations) {
  torch::NoGradGuard no_grad;
  auto matrix = weight.detach().to(torch::kDouble).reshape({weight.size(0), -1});
  auto v = torch::ones({matrix.size(1)}, torch::kDouble);
  v = v / v.norm();
  double sigma = 0.0;
  for (int i = 0; i < iterations; ++i) {
    auto u = torch::mv(matrix, v);
    sigma = u.norm().item<double>();
    if (sigma == 0.0) return 0.0;
    u = u / sigma;
    v = torch::mv(matrix.t(), u);
    v = v / v.norm();
  }
  return torch::mv(matrix, v).norm().item<double>();
}

}  // namespace outpaint
