#include <gtest/gtest.h>

#include "outpaint/errors.hpp"
#include "outpaint/objectives.hpp"
#include "support.hpp"

using namespace outpaint;
using test::relative_error;

namespace {

std::vector<torch::Tensor> two_scales(std::uint64_t seed) {
  return {test::away_from({-1.0, 1.0}, 0.1, {2, 1, 4, 4}, seed),
          test::away_from({-1.0, 1.0}, 0.1, {2, 1, 2, 2}, seed + 1)};
}

}  // namespace

TEST(Hinge, MatchesScalarReference) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto real = two_scales(seed), fake = two_scales(seed + 50);
    EXPECT_LT(relative_error(hinge_d_loss(real, fake).item<double>(), test::ref_hinge_d(real, fake)), 1e-6);
    EXPECT_LT(relative_error(hinge_g_loss(fake).item<double>(), test::ref_hinge_g(fake)), 1e-6);
  }
}

TEST(Hinge, ConfidentDiscriminatorHasZeroLoss) {
  std::vector<torch::Tensor> real{torch::full({1, 1, 4, 4}, 2.0)};
  std::vector<torch::Tensor> fake{torch::full({1, 1, 4, 4}, -2.0)};
  EXPECT_EQ(hinge_d_loss(real, fake).item<double>(), 0.0);
  std::vector<torch::Tensor> zero{torch::zeros({1, 1, 4, 4})};
  EXPECT_DOUBLE_EQ(hinge_d_loss(zero, zero).item<double>(), 2.0);
  EXPECT_DOUBLE_EQ(hinge_g_loss(std::vector<torch::Tensor>{torch::full({1, 1, 2, 2}, 3.0)}).item<double>(), -3.0);
}

TEST(Hinge, GradientsMatchFiniteDifferences) {
  auto fake_fixed = two_scales(7);
  auto probe = test::away_from({-1.0, 1.0}, 0.1, {2, 1, 4, 4}, 3);
  auto d = [&](const torch::Tensor& x) {
    return hinge_d_loss({x, fake_fixed[1]}, {fake_fixed[0], fake_fixed[1]});
  };
  EXPECT_LT(test::gradient_check(d, probe), 1e-3);
  auto g = [&](const torch::Tensor& x) { return hinge_g_loss({x}); };
  EXPECT_LT(test::gradient_check(g, probe), 1e-3);
}

TEST(Hinge, RejectsMismatchedScales) {
  EXPECT_THROW(hinge_d_loss(two_scales(0), {torch::zeros({1})}), InvalidArgument);
  EXPECT_THROW(hinge_g_loss({}), InvalidArgument);
}

TEST(CrossEntropy, MatchesScalarReference) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto logits = torch::randn({2, 5, 4, 4}, gen, torch::kDouble) * 3;
    auto labels = torch::randint(5, {2, 4, 4}, gen, torch::kLong);
    EXPECT_LT(relative_error(ce_loss(logits, labels).item<double>(),
                             test::ref_cross_entropy(logits, labels)),
              1e-6);
    auto as_float = ce_loss(logits.to(torch::kFloat), labels).item<double>();
    EXPECT_LT(relative_error(as_float, test::ref_cross_entropy(logits, labels)), 1e-5);
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  auto logits = torch::zeros({1, 150, 4, 4});
  auto labels = torch::zeros({1, 4, 4}, torch::kLong);
  EXPECT_NEAR(ce_loss(logits, labels).item<double>(), std::log(150.0), 1e-6);
}

TEST(CrossEntropy, RegionRestrictsTheMean) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(4);
  auto logits = torch::randn({1, 3, 4, 4}, gen, torch::kDouble);
  auto labels = torch::randint(3, {1, 4, 4}, gen, torch::kLong);
  auto region = torch::zeros({1, 1, 4, 4});
  region.slice(3, 3).fill_(1);
  auto expected = test::ref_cross_entropy(logits.slice(3, 3), labels.slice(2, 3));
  EXPECT_LT(relative_error(ce_loss(logits, labels, region).item<double>(), expected), 1e-9);
  EXPECT_EQ(ce_loss(logits, labels, torch::zeros({1, 4, 4})).item<double>(), 0.0);
}

TEST(CrossEntropy, GradientsMatchFiniteDifferences) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  auto labels = torch::randint(4, {1, 4, 4}, gen, torch::kLong);
  auto logits = torch::randn({1, 4, 4, 4}, gen, torch::kDouble);
  auto f = [&](const torch::Tensor& x) { return ce_loss(x, labels); };
  EXPECT_LT(test::gradient_check(f, logits), 1e-3);
}

TEST(CrossEntropy, RejectsBadShapes) {
  EXPECT_THROW(ce_loss(torch::zeros({1, 3, 4, 4}), torch::zeros({1, 4, 5}, torch::kLong)), InvalidArgument);
  EXPECT_THROW(ce_loss(torch::zeros({3, 4, 4}), torch::zeros({4, 4}, torch::kLong)), InvalidArgument);
}

TEST(L1, MatchesScalarReferenceAndGradient) {
  auto a = test::away_from({}, 0.0, {1, 3, 4, 4}, 1);
  auto b = test::away_from({}, 0.0, {1, 3, 4, 4}, 2);
  // Keep |a - b| >= 0.1 so the probe stays off the kink.
  auto diff = a - b;
  b = torch::where(diff.abs() < 0.1, a - 0.2, b);
  EXPECT_LT(relative_error(outpaint::l1_loss(a, b).item<double>(), test::ref_l1(a, b)), 1e-6);
  auto f = [&](const torch::Tensor& x) { return outpaint::l1_loss(x, b); };
  EXPECT_LT(test::gradient_check(f, a), 1e-3);
  EXPECT_THROW(outpaint::l1_loss(a, b.slice(3, 1)), InvalidArgument);
}

TEST(Perceptual, MatchesScalarReference) {
  RandomConvExtractor extractor(11);
  extractor.to(torch::kDouble);
  LossWeights weights;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto a = torch::rand({2, 3, 4, 4}, gen, torch::kDouble) * 2 - 1;
    auto b = torch::rand({2, 3, 4, 4}, gen, torch::kDouble) * 2 - 1;
    auto expected = test::ref_perceptual(a, b, extractor, weights.perceptual);
    EXPECT_LT(relative_error(perceptual_loss(a, b, extractor, weights.perceptual).item<double>(), expected), 1e-6);
  }
}

TEST(Perceptual, IdenticalImagesGiveZeroAndGradientsMatch) {
  RandomConvExtractor extractor(2);
  extractor.to(torch::kDouble);
  LossWeights weights;
  auto a = torch::rand({1, 3, 4, 4}, torch::kDouble);
  EXPECT_EQ(perceptual_loss(a, a, extractor, weights.perceptual).item<double>(), 0.0);
  auto b = torch::rand({1, 3, 4, 4}, torch::kDouble) * 2 - 1;
  auto f = [&](const torch::Tensor& x) { return perceptual_loss(x, b, extractor, weights.perceptual); };
  EXPECT_LT(test::gradient_check(f, a), 1e-3);
}

TEST(Perceptual, StageWeightsAreHalving) {
  LossWeights weights;
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(weights.perceptual[i], 1.0 / std::pow(2.0, i + 1));
  EXPECT_EQ(weights.lambda_ce, 100.0);
  EXPECT_EQ(weights.lambda_perc, 10.0);
  EXPECT_EQ(weights.lambda_l1, 100.0);
}

TEST(Perceptual, RejectsWrongStageCount) {
  RandomConvExtractor three(0, {4, 4, 4});
  LossWeights weights;
  auto a = torch::zeros({1, 3, 4, 4});
  EXPECT_THROW(perceptual_loss(a, a, three, weights.perceptual), InvalidArgument);
}

TEST(Perceptual, ExtractorIsFrozenAndSeeded) {
  RandomConvExtractor a(5), b(5), c(6);
  EXPECT_EQ(a.id(), b.id());
  EXPECT_NE(a.id(), c.id());
  for (std::size_t i = 0; i < a.weights().size(); ++i) {
    EXPECT_TRUE(a.weights()[i].equal(b.weights()[i]));
    EXPECT_FALSE(a.weights()[i].requires_grad());
  }
}

TEST(Totals, Stage1Composition) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(9);
  auto logits = torch::randn({1, 4, 4, 4}, gen, torch::kDouble);
  auto labels = torch::randint(4, {1, 4, 4}, gen, torch::kLong);
  auto adv = torch::tensor(0.75, torch::kDouble);
  LossWeights weights;
  auto losses = stage1_total(logits, labels, adv, weights);
  EXPECT_NEAR(losses.total.item<double>(), 100.0 * test::ref_cross_entropy(logits, labels) + 0.75, 1e-9);
}

TEST(Totals, Stage2CompositionAndZeroPerceptualWeight) {
  RandomConvExtractor extractor(1);
  extractor.to(torch::kDouble);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(10);
  auto a = torch::rand({1, 3, 4, 4}, gen, torch::kDouble);
  auto b = torch::rand({1, 3, 4, 4}, gen, torch::kDouble);
  auto adv = torch::tensor(-0.5, torch::kDouble);
  LossWeights weights;
  auto losses = stage2_total(a, b, adv, weights, extractor);
  const double expected = 10.0 * test::ref_perceptual(a, b, extractor, weights.perceptual) +
                          100.0 * test::ref_l1(a, b) - 0.5;
  EXPECT_LT(relative_error(losses.total.item<double>(), expected), 1e-9);
  weights.lambda_perc = 0.0;
  auto no_perc = stage2_total(a, b, adv, weights, extractor);
  EXPECT_EQ(no_perc.perceptual.item<double>(), 0.0);
  EXPECT_NEAR(no_perc.total.item<double>(), 100.0 * test::ref_l1(a, b) - 0.5, 1e-9);
}

TEST(Totals, NegativeWeightRejected) {
  LossWeights weights;
  weights.lambda_l1 = -1;
  EXPECT_THROW(weights.validate(), InvalidArgument);
}
