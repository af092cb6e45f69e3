#include <thread>

#include <gtest/gtest.h>

#include "outpaint/errors.hpp"
#include "outpaint/pipeline.hpp"
#include "outpaint/util.hpp"
#include "support.hpp"

using namespace outpaint;

namespace {

torch::Tensor random_image(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({3, h, w}, gen) * 2 - 1;
}

SemanticLayout random_layout(std::int64_t h, std::int64_t w, std::int64_t classes, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return SemanticLayout(torch::randint(classes, {h, w}, gen, torch::kLong), classes);
}

bool bits_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return tensor_digest(a.contiguous()) == tensor_digest(b.contiguous());
}

class WrongSizeSegmenter final : public Segmenter {
 public:
  SemanticLayout predict(const torch::Tensor& pixels, std::string_view) const override {
    return SemanticLayout::filled(pixels.size(1), pixels.size(2) + 1, 4);
  }
  std::int64_t num_classes() const override { return 4; }
  bool reentrant() const override { return true; }
  std::string id() const override { return "wrong-size"; }
};

}  // namespace

TEST(Compositing, KnownRegionSurvivesPoisonedGenerators) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::int64_t classes = 2 + seed % 5;
    auto models = test::stub_models(classes, seed, seed % 2 == 0);
    OutpaintRequest request;
    request.image = random_image(4 + seed % 6, 6 + seed % 9, seed);
    request.extension_fraction = seed % 3 == 0 ? 0.5 : 0.25;
    request.layout = random_layout(request.image.size(1), request.image.size(2), classes, seed + 1);
    auto result = outpaint::outpaint(request, models);
    auto keep = result.mask.values();
    for (int c = 0; c < 3; ++c)
      ASSERT_TRUE(bits_equal(result.image[c].masked_select(keep), request.image[c].masked_select(keep)));
    ASSERT_TRUE(result.layout.labels().masked_select(keep).equal(request.layout->labels().masked_select(keep)));
  }
}

TEST(Compositing, ArbitraryMasks) {
  auto models = test::stub_models(3, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    OutpaintRequest request;
    request.image = random_image(5, 7, seed);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    request.mask = BinaryMask(torch::randint(2, {5, 7}, gen, torch::kLong));
    request.layout = random_layout(5, 7, 3, seed);
    auto result = outpaint::outpaint(request, models);
    auto keep = request.mask->values();
    ASSERT_TRUE(bits_equal(result.image[1].masked_select(keep), request.image[1].masked_select(keep)));
  }
}

TEST(Compositing, UnknownRegionComesFromGenerators) {
  auto models = test::stub_models(4, 3);
  OutpaintRequest request;
  request.image = random_image(4, 8, 0);
  request.layout = random_layout(4, 8, 4, 0);
  auto result = outpaint::outpaint(request, models);
  auto expected_logits = models.layout->extend(torch::zeros({1, 3, 4, 8}), torch::zeros({1, 4, 4, 8}),
                                               torch::zeros({1, 1, 4, 8}))[0];
  auto unknown = ~result.mask.values();
  EXPECT_TRUE(result.layout.labels().masked_select(unknown).equal(expected_logits.argmax(0).masked_select(unknown)));
}

TEST(Request, FromCroppedPadsToFraction) {
  auto cropped = random_image(8, 48, 1);
  auto request = OutpaintRequest::from_cropped(cropped, 0.25);
  EXPECT_EQ(request.image.size(2), 64);
  EXPECT_EQ(request.resolved_mask().known_columns(), 48);
  EXPECT_EQ(request.image.slice(2, 48).abs().sum().item<double>(), 0.0);
  EXPECT_FALSE(request.out_of_distribution());
  EXPECT_TRUE(OutpaintRequest::from_cropped(cropped, 0.4).out_of_distribution());
  EXPECT_THROW(OutpaintRequest::from_cropped(cropped, 1.2), InvalidArgument);
  EXPECT_THROW(OutpaintRequest::from_cropped(torch::zeros({3, 4}), 0.25), InvalidArgument);
}

TEST(Request, SegmenterRunsOnCroppedColumnsOnly) {
  auto models = test::stub_models(4, 2);
  models.segmenter = std::make_shared<WrongSizeSegmenter>();
  auto request = OutpaintRequest::from_cropped(random_image(4, 6, 0), 0.25);
  EXPECT_THROW(outpaint::outpaint(request, models), SegmentationFailed);
}

TEST(Request, LayoutClassMismatchRejected) {
  auto models = test::stub_models(4, 2);
  OutpaintRequest request;
  request.image = random_image(4, 8, 0);
  request.layout = random_layout(4, 8, 5, 0);
  EXPECT_THROW(outpaint::outpaint(request, models), InvalidArgument);
  request.layout = random_layout(4, 7, 4, 0);
  EXPECT_THROW(outpaint::outpaint(request, models), InvalidArgument);
}

TEST(Models, ClassCountsMustAgree) {
  auto models = test::stub_models(4, 0);
  models.image = std::make_shared<test::StubSynthesizer>(5, 0);
  EXPECT_THROW(models.validate(), CheckpointMismatch);
}

TEST(Regenerate, UnchangedLayoutReproducesImage) {
  auto models = test::network_models(6, 0);
  auto request = OutpaintRequest::from_cropped(random_image(64, 48, 4), 0.25);
  auto first = outpaint::outpaint(request, models);
  auto again = regenerate_with_layout(request, first.layout, models);
  EXPECT_TRUE(bits_equal(first.image, again.image));
}

TEST(Regenerate, EditedLayoutChangesOnlyUnknownRegion) {
  auto models = test::network_models(6, 1);
  auto request = OutpaintRequest::from_cropped(random_image(64, 48, 5), 0.25);
  auto first = outpaint::outpaint(request, models);
  auto edited_labels = first.layout.labels().clone();
  edited_labels.slice(1, 48).fill_(5);
  auto edited = regenerate_with_layout(request, SemanticLayout(edited_labels, 6), models);
  EXPECT_TRUE(bits_equal(edited.image.slice(2, 0, 48), request.image.slice(2, 0, 48)));
  EXPECT_FALSE(bits_equal(edited.image, first.image));
}

TEST(Regenerate, RejectsBadLayouts) {
  auto models = test::stub_models(4, 0);
  auto request = OutpaintRequest::from_cropped(random_image(4, 6, 0), 0.25);
  EXPECT_THROW(regenerate_with_layout(request, SemanticLayout::filled(4, 7, 4), models), InvalidArgument);
  EXPECT_THROW(regenerate_with_layout(request, SemanticLayout::filled(4, 8, 3), models), InvalidArgument);
}

TEST(Cityscapes, OuterColumnsAreExtendedInnerKept) {
  // Real networks: the merge validates the [-1, 1] pixel range, stubs exceed it.
  auto models = test::network_models(6, 0);
  auto image = random_image(64, 128, 9);
  auto layout = random_layout(64, 128, 6, 9);
  auto result = outpaint_cityscapes(image, 0.25, models, layout);
  EXPECT_EQ(result.image.size(1), 64);
  EXPECT_EQ(result.image.size(2), 128);
  // Each 64-wide half keeps the 48 columns next to the middle line.
  EXPECT_TRUE(bits_equal(result.image.slice(2, 16, 112), image.slice(2, 16, 112)));
  EXPECT_TRUE(result.layout.labels().slice(1, 16, 112).equal(layout.labels().slice(1, 16, 112)));
  EXPECT_FALSE(bits_equal(result.image.slice(2, 0, 16), image.slice(2, 0, 16)));
  EXPECT_FALSE(bits_equal(result.image.slice(2, 112), image.slice(2, 112)));
  EXPECT_THROW(outpaint_cityscapes(random_image(8, 12, 0), 0.25, models), InvalidArgument);
}

TEST(Determinism, RepeatedEvalCallsIdentical) {
  auto models = test::network_models(6, 2);
  auto request = OutpaintRequest::from_cropped(random_image(64, 48, 6), 0.25);
  auto a = outpaint::outpaint(request, models);
  auto b = outpaint::outpaint(request, models);
  EXPECT_TRUE(bits_equal(a.image, b.image));
  EXPECT_EQ(a.layout, b.layout);
}

TEST(Determinism, ConcurrentCallsAgree) {
  auto models = test::network_models(6, 3);
  auto request = OutpaintRequest::from_cropped(random_image(64, 48, 7), 0.25);
  auto reference = outpaint::outpaint(request, models);
  std::vector<torch::Tensor> outputs(3);
  std::vector<std::thread> threads;
  for (int i = 0; i < 3; ++i)
    threads.emplace_back([&, i] { outputs[i] = outpaint::outpaint(request, models).image; });
  for (auto& t : threads) t.join();
  for (const auto& out : outputs) EXPECT_TRUE(bits_equal(out, reference.image));
}

TEST(Loading, TrainerCheckpointsRoundTrip) {
  auto dir = test::scratch_dir("pipeline_load");
  auto s1 = make_trainer(Stage::layout, test::toy_dataset(), test::small_config());
  s1->save_checkpoint(dir / "s1.pt");
  auto s2 = make_trainer(Stage::image, test::toy_dataset(), test::small_config());
  s2->save_checkpoint(dir / "s2.pt");

  auto extender = load_layout_extender(dir / "s1.pt");
  auto synthesizer = load_image_synthesizer(dir / "s2.pt");
  EXPECT_EQ(extender->num_classes(), 6);
  EXPECT_EQ(synthesizer->num_classes(), 6);
  EXPECT_EQ(extender->fingerprint(), load_layout_extender(dir / "s1.pt")->fingerprint());
  EXPECT_NE(extender->fingerprint(), synthesizer->fingerprint());

  EXPECT_THROW(load_layout_extender(dir / "s2.pt"), CheckpointMismatch);
  EXPECT_THROW(load_image_synthesizer(dir / "s1.pt"), CheckpointMismatch);
  EXPECT_THROW(load_layout_extender(dir / "none.pt"), CheckpointNotFound);

  // The loaded generator reproduces the trainer's generator in eval mode.
  auto& trained = dynamic_cast<Stage1Trainer&>(*s1).layout_generator();
  trained->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::randn({1, 3, 64, 64});
  auto planes = torch::zeros({1, 6, 64, 64});
  auto m = torch::ones({1, 1, 64, 64});
  EXPECT_TRUE(extender->extend(x, planes, m).equal(trained->forward(torch::cat({x, planes, m}, 1))));
}
