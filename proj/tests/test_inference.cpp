#include "doctest.h"
#include "frvi/inference.hpp"
#include "frvi/training.hpp"
#include "support.hpp"

using namespace frvi;

namespace {

Model small_model(std::uint64_t seed = 5) { return Model(ModelConfig{4, 4, 4, 4, 3, seed}); }

VideoSequence masked_clip(int frames, int size, std::uint64_t seed) {
  VideoSequence v = synth_video(2, frames, size, size, seed);
  MaskSpec spec{MaskKind::RandomWalker, size, seed, {3, 5, 10, 30.0, 1, 2}};
  v.masks = generate_masks(spec, frames);
  for (int t = 0; t < frames; ++t) v.frames[t] = apply_mask(v.frames[t], v.masks[t]);
  return v;
}

}  // namespace

TEST_CASE("streaming output equals whole-video output bit for bit") {
  const Model m = small_model();
  const VideoSequence v = masked_clip(8, 16, 3);
  for (Variant variant : {Variant::Ours, Variant::PartialConvOnly, Variant::FPOnly, Variant::FIOnly}) {
    PipelineOptions opts;
    opts.variant = variant;
    const std::vector<Frame> batch = complete_video(m, v, opts);
    StreamSession s(m, 16, 16, opts);
    CAPTURE(to_string(variant));
    for (int t = 0; t < 8; ++t) CHECK(s.push_frame(v.frames[t], v.masks[t]) == batch[t]);
  }
}

TEST_CASE("hole-free frames pass through unchanged") {
  const Model m = small_model();
  const VideoSequence v = synth_video(2, 4, 16, 16, 6);
  StreamSession s(m, 16, 16);
  for (int t = 0; t < 4; ++t) CHECK(s.push_frame(v.frames[t], Mask(1, 16, 16)) == v.frames[t]);
}

TEST_CASE("retained state does not grow with the stream") {
  StreamSession s(small_model(), 16, 16, {}, false);
  const VideoSequence v = masked_clip(4, 16, 7);
  s.push_frame(v.frames[0], v.masks[0]);
  s.push_frame(v.frames[1], v.masks[1]);
  const RetainedStats early = s.retained();
  for (int i = 2; i < 1000; ++i) s.push_frame(v.frames[i % 4], v.masks[i % 4]);
  const RetainedStats late = s.retained();
  CHECK(s.frames_processed() == 1000);
  CHECK(late.arrays == early.arrays);
  CHECK(late.elements == early.elements);
}

TEST_CASE("independent sessions do not share state") {
  const Model m = small_model();
  const VideoSequence a = masked_clip(4, 16, 8), b = masked_clip(4, 16, 9);
  StreamSession solo(m, 16, 16), x(m, 16, 16), y(m, 16, 16);
  for (int t = 0; t < 4; ++t) {
    const Frame want = solo.push_frame(a.frames[t], a.masks[t]);
    const Frame got = x.push_frame(a.frames[t], a.masks[t]);
    y.push_frame(b.frames[t], b.masks[t]);
    CHECK(got == want);
  }
}

TEST_CASE("sessions reject bad configurations and inputs") {
  PipelineOptions lstm;
  lstm.variant = Variant::ConvLSTMOnly;
  CHECK_THROWS_AS(StreamSession(small_model(), 16, 16, lstm), InputError);
  CHECK_THROWS_AS(StreamSession(small_model(), 20, 16), ShapeError);
  StreamSession s(small_model(), 16, 16);
  CHECK_THROWS_AS(s.push_frame(Frame(3, 32, 32), Mask(1, 32, 32)), ShapeError);
  CHECK_THROWS_AS(s.push_frame(Frame(3, 16, 16), Mask(1, 8, 8)), ShapeError);
  CHECK_THROWS_AS(open_session(test::temp_dir("no_ckpt"), 16, 16), IoError);
}

TEST_CASE("open_session loads a saved checkpoint") {
  TrainConfig c;
  c.model = ModelConfig{4, 4, 4, 4, 3, 2};
  const std::string dir = test::temp_dir("session_ckpt");
  save_checkpoint(dir, initial_checkpoint(c));
  StreamSession s = open_session(dir, 16, 16);
  const VideoSequence v = masked_clip(2, 16, 4);
  StreamSession direct(initial_checkpoint(c).model, 16, 16);
  for (int t = 0; t < 2; ++t)
    CHECK(s.push_frame(v.frames[t], v.masks[t]) == direct.push_frame(v.frames[t], v.masks[t]));
}

TEST_CASE("benchmark reports one timing per frame") {
  StreamSession s(small_model(), 16, 16);
  CHECK(benchmark(s, 0, 1).frames == 0);
  const TimingReport r = benchmark(s, 5, 1);
  CHECK(r.frames == 5);
  CHECK(r.per_frame_ms.size() == 5);
  CHECK(r.mean_ms > 0);
  CHECK(mean_ms(r, 0, 5) == doctest::Approx(r.mean_ms));
  CHECK(s.frames_processed() == 7);
}
