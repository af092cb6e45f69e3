#include <gtest/gtest.h>

#include "architecture_tables.hpp"
#include "outpaint/errors.hpp"
#include "outpaint/networks.hpp"
#include "outpaint/util.hpp"

using namespace outpaint;

namespace {

constexpr std::int64_t kClasses = 8;

NetworkProfile full() { return NetworkProfile::full(); }

}  // namespace

TEST(Tables, EncoderMatchesReference) {
  auto g = build_generator_seg(generator_seg_spec(kClasses, full()), 0);
  EXPECT_EQ(test::compare_rows(g->encoder_table(), test::encoder_rows()), "");
  for (const auto& row : g->encoder_table()) {
    EXPECT_TRUE(row.spectral_norm);
    EXPECT_TRUE(row.batch_norm);
  }
}

TEST(Tables, LayoutDecoderMatchesReference) {
  auto g = build_generator_seg(generator_seg_spec(kClasses, full()), 0);
  EXPECT_EQ(test::compare_rows(g->decoder_table(), test::decoder_rows("ResnetBlock", kClasses)), "");
  EXPECT_FALSE(g->decoder_table().back().spectral_norm);
}

TEST(Tables, ImageDecoderMatchesReference) {
  auto g = build_generator_img(generator_img_spec(kClasses, full()), 0);
  EXPECT_EQ(test::compare_rows(g->encoder_table(), test::encoder_rows()), "");
  EXPECT_EQ(test::compare_rows(g->decoder_table(), test::decoder_rows("SPADEBlock", 3)), "");
}

TEST(Tables, DiscriminatorMatchesReferenceAtEveryScale) {
  auto d = build_discriminator(discriminator_spec(kClasses + 4, full()), 0);
  ASSERT_EQ(d->num_scales(), 2);
  for (std::int64_t s = 0; s < 2; ++s) {
    auto table = d->layer_table(s);
    EXPECT_EQ(test::compare_rows(table, test::discriminator_rows()), "");
    EXPECT_FALSE(table.front().spectral_norm);
    EXPECT_FALSE(table.front().batch_norm);
    EXPECT_FALSE(table.back().spectral_norm);
    EXPECT_FALSE(table.back().batch_norm);
    for (std::size_t i = 1; i + 1 < table.size(); ++i) {
      EXPECT_TRUE(table[i].spectral_norm);
      EXPECT_TRUE(table[i].batch_norm);
    }
  }
}

TEST(Shapes, FullScaleLatentAndOutput) {
  torch::NoGradGuard no_grad;
  auto g = build_generator_seg(generator_seg_spec(kClasses, full()), 0);
  g->eval();
  auto input = torch::randn({1, 3 + kClasses + 1, 256, 256});
  auto latent = g->encode(input);
  EXPECT_EQ(latent.sizes(), (std::vector<std::int64_t>{1, 1024, 8, 8}));
  EXPECT_EQ(g->forward(input).sizes(), (std::vector<std::int64_t>{1, kClasses, 256, 256}));
}

TEST(Shapes, ImageGeneratorOutputsTanhRange) {
  torch::NoGradGuard no_grad;
  auto g = build_generator_img(generator_img_spec(kClasses, NetworkProfile::desk()), 0);
  g->eval();
  auto out = g->forward(torch::randn({2, 3 + kClasses + 1, 64, 64}) * 10,
                        torch::randn({2, kClasses + 1, 64, 64}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 3, 64, 64}));
  EXPECT_LE(out.abs().max().item<float>(), 1.0f);
}

TEST(Shapes, DiscriminatorPatchMaps) {
  torch::NoGradGuard no_grad;
  auto d = build_discriminator(discriminator_spec(3 + kClasses, full()), 0);
  d->eval();
  auto out = d->forward(torch::randn({1, 3 + kClasses, 256, 256}));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].sizes(), (std::vector<std::int64_t>{1, 1, 30, 30}));
  EXPECT_EQ(out[1].sizes(), (std::vector<std::int64_t>{1, 1, 14, 14}));
  EXPECT_EQ(d->spec().table.patch_size(256), 30);
}

TEST(Shapes, RejectsUndivisibleInput) {
  auto g = build_generator_seg(generator_seg_spec(kClasses, NetworkProfile::desk()), 0);
  EXPECT_THROW(g->forward(torch::randn({1, 3 + kClasses + 1, 60, 64})), InvalidArgument);
  EXPECT_THROW(g->forward(torch::randn({1, 5, 64, 64})), InvalidArgument);
}

TEST(Shapes, DiscriminatorRejectsTinyInput) {
  auto d = build_discriminator(discriminator_spec(4, NetworkProfile::desk()), 0);
  const auto min = d->spec().table.min_input_size();
  EXPECT_NO_THROW(d->forward(torch::randn({1, 4, min, min})));
  EXPECT_THROW(d->forward(torch::randn({1, 4, min - 1, min - 1})), InvalidArgument);
}

TEST(DeskProfile, DividesEveryWidth) {
  auto spec = generator_seg_spec(kClasses, NetworkProfile::desk());
  const auto d = NetworkProfile::desk().channel_divisor;
  auto ref = test::encoder_rows();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_EQ(spec.encoder.layers[i].out_channels, ref[i].channels / d);
    EXPECT_EQ(spec.encoder.layers[i].stride, ref[i].stride);
  }
  auto img = generator_img_spec(kClasses, NetworkProfile::desk());
  EXPECT_EQ(img.decoder.hidden_channels, 128 / d);
  EXPECT_EQ(img.decoder.condition_channels, kClasses + 1);
  EXPECT_EQ(spec.decoder.out_channels, kClasses);
}

TEST(Init, SeededAndReproducible) {
  auto spec = generator_seg_spec(kClasses, NetworkProfile::desk());
  auto a = build_generator_seg(spec, 7);
  auto b = build_generator_seg(spec, 7);
  auto c = build_generator_seg(spec, 8);
  auto pa = a->named_parameters();
  auto pb = b->named_parameters();
  auto pc = c->named_parameters();
  bool any_diff = false;
  for (const auto& item : pa) {
    ASSERT_TRUE(item.value().equal(pb[item.key()])) << item.key();
    any_diff |= !item.value().equal(pc[item.key()]);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Init, GaussianStatistics) {
  auto g = build_generator_seg(generator_seg_spec(kClasses, full()), 3);
  std::vector<torch::Tensor> weights, scales;
  for (const auto& item : g->named_parameters()) {
    const auto& key = item.key();
    if (key.find("norm") != std::string::npos && key.ends_with("weight")) scales.push_back(item.value().flatten());
    else if (key.ends_with("weight") && item.value().dim() == 4) weights.push_back(item.value().flatten());
    else if (key.ends_with("bias") && key.find("norm") == std::string::npos)
      EXPECT_EQ(item.value().abs().max().item<float>(), 0.0f) << key;
  }
  auto w = torch::cat(weights);
  auto s = torch::cat(scales);
  EXPECT_NEAR(w.mean().item<double>(), 0.0, 1e-3);
  EXPECT_NEAR(w.std().item<double>(), 0.02, 1e-3);
  EXPECT_NEAR(s.mean().item<double>(), 1.0, 2e-3);
  EXPECT_NEAR(s.std().item<double>(), 0.02, 2e-3);
}

TEST(SpectralNorm, EffectiveWeightHasUnitSigma) {
  SpectralConvOptions options(16, 32, 3);
  SpectralConv2d conv(options);
  torch::nn::init::normal_(conv->weight, 0.0, 0.5);
  conv->refresh_estimate(100);
  conv->eval();
  EXPECT_NEAR(spectral_norm_estimate(conv->effective_weight().detach()), 1.0, 1e-3);
}

TEST(SpectralNorm, EvalForwardIsPure) {
  torch::NoGradGuard no_grad;
  auto g = build_generator_seg(generator_seg_spec(kClasses, NetworkProfile::desk()), 1);
  g->eval();
  auto before = std::vector<torch::Tensor>();
  for (const auto& b : g->buffers()) before.push_back(b.clone());
  auto input = torch::randn({1, 3 + kClasses + 1, 64, 64});
  auto first = g->forward(input);
  auto second = g->forward(input);
  EXPECT_TRUE(first.equal(second));
  auto after = g->buffers();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(before[i].equal(after[i]));
}

TEST(SpectralNorm, TwoForwardsBeforeBackward) {
  auto d = build_discriminator(discriminator_spec(4, NetworkProfile::desk()), 0);
  d->train();
  auto real = d->forward(torch::randn({2, 4, 64, 64}));
  auto fake = d->forward(torch::randn({2, 4, 64, 64}));
  auto loss = real[0].mean() - fake[0].mean();
  EXPECT_NO_THROW(loss.backward());
}

TEST(Gradients, EveryGeneratorParameterIsLive) {
  auto g = build_generator_img(generator_img_spec(kClasses, NetworkProfile::desk()), 2);
  g->train();
  auto out = g->forward(torch::randn({2, 3 + kClasses + 1, 64, 64}),
                        torch::randn({2, kClasses + 1, 64, 64}));
  (out * torch::randn_like(out)).sum().backward();
  for (const auto& item : g->named_parameters()) {
    ASSERT_TRUE(item.value().grad().defined()) << item.key();
    EXPECT_GT(item.value().grad().abs().sum().item<double>(), 0.0) << item.key();
  }
}

TEST(Downsample, IgnoresPadding) {
  auto ones = torch::ones({1, 2, 9, 9});
  auto out = downsample_half(ones);
  EXPECT_EQ(out.size(2), 5);
  EXPECT_TRUE(out.eq(1).all().item<bool>());
}

TEST(Fingerprints, DependOnSpec) {
  auto a = generator_seg_spec(kClasses, full());
  auto b = generator_seg_spec(kClasses + 1, full());
  auto c = generator_seg_spec(kClasses, NetworkProfile::desk());
  EXPECT_EQ(a.fingerprint(), generator_seg_spec(kClasses, full()).fingerprint());
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  EXPECT_NE(discriminator_spec(4, full()).fingerprint(), discriminator_spec(5, full()).fingerprint());
}

TEST(Baseline, InputChannelsAndImageHead) {
  auto spec = baseline_generator_spec(4, NetworkProfile::desk());
  EXPECT_EQ(spec.in_channels, 4);
  EXPECT_EQ(spec.decoder.out_channels, 3);
  EXPECT_EQ(spec.decoder.activation, OutputActivation::tanh);
}

TEST(Validation, SpecErrors) {
  auto spec = EncoderSpec::standard();
  spec.layers.clear();
  EXPECT_THROW(spec.validate(), InvalidArgument);
  EXPECT_THROW(NetworkProfile::by_name("huge"), InvalidArgument);
}
