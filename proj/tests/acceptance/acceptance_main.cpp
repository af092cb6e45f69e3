// One line per acceptance criterion; nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>

#include <nlohmann/json.hpp>

#include "architecture_tables.hpp"
#include "outpaint/evaluation.hpp"
#include "outpaint/layout_data.hpp"
#include "outpaint/networks.hpp"
#include "outpaint/objectives.hpp"
#include "outpaint/pipeline.hpp"
#include "outpaint/trainer.hpp"
#include "outpaint/util.hpp"
#include "support.hpp"

using namespace outpaint;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool same_bits(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && tensor_digest(a.contiguous()) == tensor_digest(b.contiguous());
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

Outcome compositing() {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const std::int64_t classes = 2 + seed % 7;
    const std::int64_t h = 2 + seed % 11, w = 4 + (seed / 3) % 13;
    auto models = test::stub_models(classes, seed, seed % 2 == 0);
    OutpaintRequest request;
    request.image = torch::rand({3, h, w}, gen) * 2 - 1;
    request.layout = SemanticLayout(torch::randint(classes, {h, w}, gen, torch::kLong), classes);
    if (seed % 4 == 3)
      request.mask = BinaryMask(torch::randint(2, {h, w}, gen, torch::kLong));
    else
      request.extension_fraction = 0.1 + 0.8 * torch::rand({1}, gen).item<double>();
    auto result = outpaint::outpaint(request, models);
    auto keep = result.mask.values();
    for (int c = 0; c < 3; ++c)
      failures += !same_bits(result.image[c].masked_select(keep), request.image[c].masked_select(keep));
    failures += !result.layout.labels().masked_select(keep).equal(request.layout->labels().masked_select(keep));
  }
  return {failures == 0, "1000 cases, " + std::to_string(failures) + " mismatches"};
}

Outcome architecture() {
  torch::NoGradGuard no_grad;
  const std::int64_t classes = 150;
  const auto full = NetworkProfile::full();
  std::vector<std::string> problems;
  auto check = [&](const std::string& what, const std::string& diff) {
    if (!diff.empty()) problems.push_back(what + ": " + diff);
  };
  auto seg = build_generator_seg(generator_seg_spec(classes, full), 0);
  auto img = build_generator_img(generator_img_spec(classes, full), 0);
  auto d = build_discriminator(discriminator_spec(3 + classes, full), 0);
  check("encoder", test::compare_rows(seg->encoder_table(), test::encoder_rows()));
  check("layout decoder", test::compare_rows(seg->decoder_table(), test::decoder_rows("ResnetBlock", classes)));
  check("image encoder", test::compare_rows(img->encoder_table(), test::encoder_rows()));
  check("image decoder", test::compare_rows(img->decoder_table(), test::decoder_rows("SPADEBlock", 3)));
  for (std::int64_t s = 0; s < d->num_scales(); ++s)
    check("discriminator", test::compare_rows(d->layer_table(s), test::discriminator_rows()));

  seg->eval();
  img->eval();
  d->eval();
  auto input = torch::randn({1, 3 + classes + 1, 256, 256});
  auto latent = seg->encode(input);
  if (latent.sizes() != torch::IntArrayRef{1, 1024, 8, 8}) problems.push_back("latent " + std::to_string(latent.size(1)));
  if (seg->forward(input).sizes() != torch::IntArrayRef{1, classes, 256, 256}) problems.push_back("seg output");
  auto image = img->forward(input, torch::randn({1, classes + 1, 256, 256}));
  if (image.sizes() != torch::IntArrayRef{1, 3, 256, 256}) problems.push_back("image output");
  auto patches = d->forward(torch::randn({1, 3 + classes, 256, 256}));
  if (patches[0].sizes() != torch::IntArrayRef{1, 1, 30, 30}) problems.push_back("patch map");
  return {problems.empty(), problems.empty() ? "tables exact, latent 8x8x1024, patch 30x30" : problems.front()};
}

Outcome loss_oracles() {
  double value_err = 0.0, grad_err = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<torch::Tensor> real{test::away_from({-1, 1}, 0.1, {2, 1, 4, 4}, seed)};
    std::vector<torch::Tensor> fake{test::away_from({-1, 1}, 0.1, {2, 1, 4, 4}, seed + 100)};
    value_err = std::max(value_err, test::relative_error(hinge_d_loss(real, fake).item<double>(),
                                                         test::ref_hinge_d(real, fake)));
    value_err = std::max(value_err, test::relative_error(hinge_g_loss(fake).item<double>(), test::ref_hinge_g(fake)));

    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto logits = torch::randn({1, 5, 4, 4}, gen, torch::kDouble) * 2;
    auto labels = torch::randint(5, {1, 4, 4}, gen, torch::kLong);
    value_err = std::max(value_err, test::relative_error(ce_loss(logits, labels).item<double>(),
                                                         test::ref_cross_entropy(logits, labels)));
    auto a = torch::rand({1, 3, 4, 4}, gen, torch::kDouble) * 2 - 1;
    auto b = torch::rand({1, 3, 4, 4}, gen, torch::kDouble) * 2 - 1;
    b = torch::where((a - b).abs() < 0.1, a - 0.2, b);
    value_err = std::max(value_err, test::relative_error(outpaint::l1_loss(a, b).item<double>(), test::ref_l1(a, b)));
    RandomConvExtractor extractor(seed);
    extractor.to(torch::kDouble);
    LossWeights weights;
    value_err = std::max(value_err,
                         test::relative_error(perceptual_loss(a, b, extractor, weights.perceptual).item<double>(),
                                              test::ref_perceptual(a, b, extractor, weights.perceptual)));

    grad_err = std::max(grad_err, test::gradient_check([&](const torch::Tensor& x) { return hinge_d_loss({x}, fake); }, real[0]));
    grad_err = std::max(grad_err, test::gradient_check([&](const torch::Tensor& x) { return hinge_g_loss({x}); }, fake[0]));
    grad_err = std::max(grad_err, test::gradient_check([&](const torch::Tensor& x) { return ce_loss(x, labels); }, logits));
    grad_err = std::max(grad_err, test::gradient_check([&](const torch::Tensor& x) { return outpaint::l1_loss(x, b); }, a));
    grad_err = std::max(grad_err, test::gradient_check(
                                      [&](const torch::Tensor& x) {
                                        return perceptual_loss(x, b, extractor, weights.perceptual);
                                      },
                                      a));
  }
  return {value_err <= 1e-6 && grad_err <= 1e-3,
          "max value rel err " + fmt(value_err) + ", max gradient rel err " + fmt(grad_err)};
}

Outcome schedule() {
  const auto config = TrainConfig::full();
  const std::vector<std::tuple<std::int64_t, double, double>> spots{
      {0, 1e-4, 4e-4}, {200, 1e-4, 4e-4}, {250, 5e-5, 2e-4}, {300, 0.0, 0.0}};
  double worst = 0.0;
  for (auto [epoch, g, d] : spots) {
    auto lr = lr_at(epoch, config);
    worst = std::max({worst, std::abs(lr.generator - g), std::abs(lr.discriminator - d)});
  }
  bool linear = true;
  for (std::int64_t e = 200; e <= 300; ++e)
    linear &= std::abs(lr_at(e, config).generator - 1e-4 * (300 - e) / 100.0) <= 1e-12;
  return {worst <= 1e-12 && linear, "max spot error " + fmt(worst)};
}

// Means of consecutive 20-step windows must never increase and the last must
// be at most half the first.
Outcome overfit_stage(Stage stage, const std::string& loss) {
  auto trainer = make_trainer(stage, test::toy_dataset(), TrainConfig::desk());
  auto records = trainer->run(200);
  std::vector<double> windows;
  for (std::size_t begin = 0; begin + 20 <= records.size(); begin += 20) {
    double sum = 0.0;
    for (std::size_t i = begin; i < begin + 20; ++i) sum += records[i].loss(loss);
    windows.push_back(sum / 20.0);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < windows.size(); ++i) monotone &= windows[i] <= windows[i - 1];
  const double ratio = windows.back() / windows.front();
  std::string trace;
  for (double w : windows) trace += fmt(w) + " ";
  return {records.size() == 200 && monotone && ratio <= 0.5,
          loss + " windows [" + trace + "] ratio " + fmt(ratio) + (monotone ? "" : " (not monotone)")};
}

Outcome toy_overfit() {
  auto s1 = overfit_stage(Stage::layout, "ce");
  auto s2 = overfit_stage(Stage::image, "l1");
  return {s1.pass && s2.pass, "stage 1 " + s1.detail + "; stage 2 " + s2.detail};
}

Outcome fid_machinery() {
  std::srand(11);
  const int d = 32;
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(d, d);
  Eigen::MatrixXd cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd mean = Eigen::VectorXd::Random(d), shift = Eigen::VectorXd::Random(d) * 2;
  FeatureStats p{mean, cov, 1000}, q{mean + shift, cov, 1000};
  const double identical = std::abs(frechet_distance(p, p));
  const double equal_cov = test::relative_error(frechet_distance(p, q), shift.squaredNorm());

  Eigen::MatrixXd x = Eigen::MatrixXd::Random(1000, d) * 3;
  x.rowwise() += Eigen::RowVectorXd::LinSpaced(d, -50, 50);
  MomentAccumulator single(d), merged(d);
  single.add_rows(x);
  for (int begin = 0; begin < 1000; begin += 123) {
    MomentAccumulator shard(d);
    shard.add_rows(x.middleRows(begin, std::min(123, 1000 - begin)));
    merged.merge(shard);
  }
  auto s = single.stats(), m = merged.stats();
  const double merge_err = std::max((s.mean - m.mean).norm() / s.mean.norm(),
                                    (s.covariance - m.covariance).norm() / s.covariance.norm());
  return {identical <= 1e-6 && equal_cov <= 1e-4 && merge_err <= 1e-8,
          "identical " + fmt(identical) + ", equal-cov rel " + fmt(equal_cov) + ", merge rel " + fmt(merge_err)};
}

Outcome split_merge() {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const std::int64_t h = 2 + seed % 40, w = 2 * h;
    ImageSample sample{torch::rand({3, h, w}, gen) * 2 - 1,
                       SemanticLayout(torch::randint(34, {h, w}, gen, torch::kLong), 34),
                       BinaryMask(torch::randint(2, {h, w}, gen, torch::kLong)), "r"};
    auto [left, right] = cityscapes_split(sample);
    auto merged = cityscapes_merge(left, right);
    failures += !(same_bits(merged.pixels, sample.pixels) && merged.layout == sample.layout &&
                  merged.mask == sample.mask);
  }
  return {failures == 0, "100 rasters, " + std::to_string(failures) + " mismatches"};
}

Outcome determinism() {
  std::vector<std::string> problems;
  for (auto stage : {Stage::layout, Stage::image}) {
    auto config = test::small_config(21);
    config.augment = true;
    config.augment_options = {72, 64, 0.5};
    auto a = make_trainer(stage, test::toy_dataset(), config);
    auto b = make_trainer(stage, test::toy_dataset(), config);
    auto ra = a->run(10), rb = b->run(10);
    for (std::size_t i = 0; i < ra.size(); ++i)
      if (ra[i].to_json() != rb[i].to_json()) problems.push_back("trajectory differs at step " + std::to_string(i));
    auto pa = a->discriminator().parameters(), pb = b->discriminator().parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (!same_bits(pa[i], pb[i])) problems.push_back("discriminator weights differ");
  }
  auto models = test::network_models(6, 5);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  auto request = OutpaintRequest::from_cropped(torch::rand({3, 64, 48}, gen) * 2 - 1, 0.25);
  auto first = outpaint::outpaint(request, models);
  for (int i = 0; i < 3; ++i) {
    auto again = outpaint::outpaint(request, models);
    if (!same_bits(again.image, first.image) || !(again.layout == first.layout))
      problems.push_back("eval output differs");
  }
  return {problems.empty(), problems.empty() ? "10-step trajectories and eval outputs identical" : problems.front()};
}

Outcome ablation() {
  auto config = TrainConfig::desk();
  config.max_steps = 3;
  const std::int64_t classes = 6;
  std::vector<std::string> problems;
  config.ablation_mode = AblationMode::noseg;
  auto noseg = make_trainer(Stage::image, test::toy_dataset(), config);
  config.ablation_mode = AblationMode::segconcat;
  auto segconcat = make_trainer(Stage::image, test::toy_dataset(), config);
  if (noseg->generator_in_channels() != 4) problems.push_back("noseg channels " + std::to_string(noseg->generator_in_channels()));
  if (segconcat->generator_in_channels() != 4 + classes)
    problems.push_back("segconcat channels " + std::to_string(segconcat->generator_in_channels()));
  for (auto* trainer : {noseg.get(), segconcat.get()}) {
    auto records = trainer->run(10);
    if (records.size() != 3 || !trainer->finished()) problems.push_back(trainer->name() + " did not finish");
    for (const auto& r : records)
      for (const auto& [name, value] : r.losses)
        if (!std::isfinite(value)) problems.push_back(trainer->name() + " " + name + " not finite");
  }
  return {problems.empty(), problems.empty() ? "4 and 4+C input channels, 3-step smoke runs finite" : problems.front()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"compositing identities", compositing},
      {"architecture conformance", architecture},
      {"loss oracles", loss_oracles},
      {"learning-rate schedule", schedule},
      {"toy overfit", toy_overfit},
      {"FID machinery", fid_machinery},
      {"cityscapes split/merge", split_merge},
      {"determinism", determinism},
      {"ablation plumbing", ablation},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s  %-26s %s (%.1fs)\n", outcome.pass ? "PASS" : "FAIL", name.c_str(),
                outcome.detail.c_str(), seconds);
    std::fflush(stdout);
    failed += !outcome.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
