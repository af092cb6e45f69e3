#include "support.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "outpaint/profile.hpp"

namespace outpaint::test {

std::filesystem::path toy_manifest() {
  return std::filesystem::path(OUTPAINT_TEST_DATA_DIR) / "toy" / "manifest.txt";
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::path(OUTPAINT_TEST_SCRATCH_DIR) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

torch::Tensor seeded_normal(torch::IntArrayRef shape, std::uint64_t seed, double scale,
                            bool poison) {
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto out = torch::empty(shape).normal_(0.0, scale, generator);
  if (poison) {
    auto flat = out.view(-1);
    const auto n = flat.numel();
    flat[0] = std::numeric_limits<float>::quiet_NaN();
    flat[n / 2] = std::numeric_limits<float>::infinity();
    flat[n - 1] = -std::numeric_limits<float>::infinity();
  }
  return out;
}

}  // namespace

torch::Tensor StubExtender::extend(const torch::Tensor& masked_image, const torch::Tensor&,
                                   const torch::Tensor&) const {
  return seeded_normal({masked_image.size(0), classes_, masked_image.size(2), masked_image.size(3)},
                       seed_, 4.0, poison_);
}

torch::Tensor StubSynthesizer::synthesize(const torch::Tensor& masked_image, const torch::Tensor&,
                                          const torch::Tensor&) const {
  return seeded_normal(masked_image.sizes(), seed_ ^ 0x5a5a, 3.0, poison_);
}

OutpaintModels stub_models(std::int64_t classes, std::uint64_t seed, bool poison) {
  OutpaintModels models;
  models.layout = std::make_shared<StubExtender>(classes, seed, poison);
  models.image = std::make_shared<StubSynthesizer>(classes, seed, poison);
  models.segmenter = std::make_shared<ConstantSegmenter>(classes, 0);
  models.profile = DatasetProfile{"stub", classes, make_palette(classes)};
  return models;
}

OutpaintModels network_models(std::int64_t classes, std::uint64_t seed) {
  const auto profile = NetworkProfile::desk();
  OutpaintModels models;
  models.layout = std::make_shared<NetworkLayoutExtender>(
      build_generator_seg(generator_seg_spec(classes, profile), seed));
  models.image = std::make_shared<NetworkImageSynthesizer>(
      build_generator_img(generator_img_spec(classes, profile), seed + 1));
  models.segmenter = std::make_shared<ConstantSegmenter>(classes, 0);
  models.profile = DatasetProfile{"test", classes, make_palette(classes)};
  return models;
}

TrainConfig small_config(std::uint64_t seed) {
  auto config = TrainConfig::desk();
  config.batch_size = 2;
  config.augment = false;
  config.seed = seed;
  return config;
}

OutpaintDataset toy_dataset(const std::string& split) {
  return OutpaintDataset::from_manifest(toy_manifest(), split,
                                        DatasetProfile::by_name("toy").num_classes);
}

namespace {

std::vector<double> to_doubles(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kDouble).contiguous().view(-1);
  const double* p = c.data_ptr<double>();
  return std::vector<double>(p, p + c.numel());
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

double ref_hinge_d(const std::vector<torch::Tensor>& real, const std::vector<torch::Tensor>& fake) {
  double total = 0.0;
  for (std::size_t s = 0; s < real.size(); ++s) {
    double r = 0.0, f = 0.0;
    auto rv = to_doubles(real[s]);
    auto fv = to_doubles(fake[s]);
    for (double x : rv) r += std::max(0.0, 1.0 - x);
    for (double x : fv) f += std::max(0.0, 1.0 + x);
    total += r / rv.size() + f / fv.size();
  }
  return total / static_cast<double>(real.size());
}

double ref_hinge_g(const std::vector<torch::Tensor>& fake) {
  double total = 0.0;
  for (const auto& f : fake) total += -mean_of(to_doubles(f));
  return total / static_cast<double>(fake.size());
}

double ref_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels) {
  const auto b = logits.size(0), c = logits.size(1), h = logits.size(2), w = logits.size(3);
  auto z = to_doubles(logits);
  auto y = labels.contiguous().view(-1);
  double total = 0.0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        auto at = [&](std::int64_t k) { return z[((n * c + k) * h + i) * w + j]; };
        double peak = at(0);
        for (std::int64_t k = 1; k < c; ++k) peak = std::max(peak, at(k));
        double sum = 0.0;
        for (std::int64_t k = 0; k < c; ++k) sum += std::exp(at(k) - peak);
        const auto label = y[(n * h + i) * w + j].item<std::int64_t>();
        total += peak + std::log(sum) - at(label);
      }
  return total / static_cast<double>(b * h * w);
}

double ref_l1(const torch::Tensor& a, const torch::Tensor& b) {
  auto av = to_doubles(a), bv = to_doubles(b);
  double sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) sum += std::abs(av[i] - bv[i]);
  return sum / static_cast<double>(av.size());
}

std::vector<double> ref_conv_relu(const std::vector<double>& input, std::int64_t channels,
                                  std::int64_t height, std::int64_t width,
                                  const torch::Tensor& weight, const torch::Tensor& bias) {
  const auto out_channels = weight.size(0);
  auto k = to_doubles(weight);
  auto bv = to_doubles(bias);
  std::vector<double> out(out_channels * height * width);
  for (std::int64_t o = 0; o < out_channels; ++o)
    for (std::int64_t i = 0; i < height; ++i)
      for (std::int64_t j = 0; j < width; ++j) {
        double acc = bv[o];
        for (std::int64_t c = 0; c < channels; ++c)
          for (std::int64_t di = -1; di <= 1; ++di)
            for (std::int64_t dj = -1; dj <= 1; ++dj) {
              const auto y = i + di, x = j + dj;
              if (y < 0 || y >= height || x < 0 || x >= width) continue;
              acc += k[((o * channels + c) * 3 + (di + 1)) * 3 + (dj + 1)] *
                     input[(c * height + y) * width + x];
            }
        out[(o * height + i) * width + j] = std::max(0.0, acc);
      }
  return out;
}

double ref_perceptual(const torch::Tensor& a, const torch::Tensor& b,
                      const RandomConvExtractor& extractor,
                      const std::array<double, 5>& stage_weights) {
  double total = 0.0;
  for (std::int64_t n = 0; n < a.size(0); ++n) {
    auto fa = to_doubles(a[n]), fb = to_doubles(b[n]);
    std::int64_t channels = a.size(1);
    const auto h = a.size(2), w = a.size(3);
    for (std::size_t s = 0; s < extractor.weights().size(); ++s) {
      const auto& weight = extractor.weights()[s];
      fa = ref_conv_relu(fa, channels, h, w, weight, extractor.biases()[s]);
      fb = ref_conv_relu(fb, channels, h, w, weight, extractor.biases()[s]);
      channels = weight.size(0);
      double sum = 0.0;
      for (std::size_t i = 0; i < fa.size(); ++i) sum += std::abs(fa[i] - fb[i]);
      // The library averages over the whole batch; per-sample sums are
      // divided by the batch element count here.
      total += stage_weights[s] * sum / static_cast<double>(fa.size() * a.size(0));
    }
  }
  return total;
}

double relative_error(double actual, double expected) {
  return std::abs(actual - expected) / std::max(std::abs(expected), 1e-12);
}

double gradient_check(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                      const torch::Tensor& x, double step) {
  auto probe = x.detach().to(torch::kDouble).clone().requires_grad_(true);
  auto value = f(probe);
  auto analytic = torch::autograd::grad({value}, {probe})[0].contiguous().view(-1);
  torch::NoGradGuard no_grad;
  auto flat = probe.detach().clone();
  auto view = flat.view(-1);
  double worst = 0.0;
  for (std::int64_t i = 0; i < view.numel(); ++i) {
    const double original = view[i].item<double>();
    view[i] = original + step;
    const double up = f(flat).item<double>();
    view[i] = original - step;
    const double down = f(flat).item<double>();
    view[i] = original;
    const double numeric = (up - down) / (2 * step);
    const double a = analytic[i].item<double>();
    const double scale = std::max(std::abs(a), std::abs(numeric));
    if (scale < 1e-9) continue;
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  return worst;
}

torch::Tensor away_from(const std::vector<double>& kinks, double gap, torch::IntArrayRef shape,
                        std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto values = torch::empty(shape, torch::kDouble).uniform_(-3.0, 3.0, gen);
  auto flat = values.view(-1);
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    double v = flat[i].item<double>();
    for (double k : kinks)
      if (std::abs(v - k) < gap) v = k + (v >= k ? gap : -gap) * 1.5;
    flat[i] = v;
  }
  return values;
}

}  // namespace outpaint::test
