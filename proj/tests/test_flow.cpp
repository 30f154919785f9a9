#include "doctest.h"
#include "frvi/flow.hpp"
#include "support.hpp"

using namespace frvi;

namespace {

Frame textured(int h, int w, std::uint64_t seed) {
  SynthScene scene;
  scene.background = random_texture(seed, 0.08);
  return render_scene(scene, 2, h, w).video.frames[0];
}

Frame shift_wrap(const Frame& a, int dx) {
  Frame b(a.shape());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x)
        b(c, y, x) = a(c, y, ((x - dx) % a.width() + a.width()) % a.width());
  return b;
}

// Mean |flow - (u, v)| per component over pixels at least `border` from the edge.
double interior_error(const FlowField& f, double u, double v, int border) {
  double e = 0, n = 0;
  for (int y = border; y < f.height() - border; ++y)
    for (int x = border; x < f.width() - border; ++x) {
      e += std::abs(f(0, y, x) - u) + std::abs(f(1, y, x) - v);
      n += 2;
    }
  return e / n;
}

}  // namespace

TEST_CASE("zero flow warp is the identity bit for bit") {
  Rng rng(1);
  const Frame f = test::random_tensor({3, 16, 16}, rng);
  CHECK(warp(f, FlowField(2, 16, 16)) == f);
}

TEST_CASE("unit shift moves an impulse one pixel right") {
  Frame f(3, 16, 16);
  f(1, 6, 7) = 1.0;
  const FlowField flow = FlowField::constant({2, 16, 16}, 0.0);
  FlowField right = flow;
  right.matrix().row(0).setConstant(1.0);
  const Frame out = warp(f, right);
  CHECK(out(1, 6, 8) == 1.0);
  CHECK(out.matrix().sum() == doctest::Approx(1.0));
  FlowField down = flow;
  down.matrix().row(1).setConstant(1.0);
  CHECK(warp(f, down)(1, 7, 7) == 1.0);
}

TEST_CASE("fractional flow interpolates bilinearly") {
  Frame f(3, 8, 8);
  for (int x = 0; x < 8; ++x)
    for (int c = 0; c < 3; ++c) f(c, 3, x) = x;
  FlowField flow(2, 8, 8);
  flow.matrix().row(0).setConstant(0.25);
  CHECK(warp(f, flow)(0, 3, 4) == doctest::Approx(3.75).epsilon(1e-14));
}

TEST_CASE("out-of-frame samples clamp to the border") {
  Rng rng(2);
  const Frame f = test::random_tensor({3, 8, 8}, rng);
  FlowField flow(2, 8, 8);
  flow.matrix().row(0).setConstant(5.0);
  const Frame out = warp(f, flow);
  for (int y = 0; y < 8; ++y) CHECK(out(0, y, 0) == f(0, y, 0));
}

TEST_CASE("warp is linear in the frame") {
  Rng rng(3);
  const Frame a = test::random_tensor({3, 16, 16}, rng), b = test::random_tensor({3, 16, 16}, rng);
  const FlowField f = test::random_tensor({2, 16, 16}, rng, -3, 3);
  const double alpha = 0.7, beta = -1.3;
  Frame mix(a.shape(), (alpha * a.matrix() + beta * b.matrix()));
  Frame want(a.shape(), alpha * warp(a, f).matrix() + beta * warp(b, f).matrix());
  CHECK(max_abs_diff(warp(mix, f), want) <= 1e-6);
}

TEST_CASE("warp rejects non-finite and misshapen flows") {
  FlowField f(2, 8, 8);
  f(0, 1, 1) = std::nan("");
  CHECK_THROWS_AS(warp(Frame(3, 8, 8), f), NumericError);
  CHECK_THROWS_AS(warp(Frame(3, 8, 8), FlowField(2, 4, 4)), ShapeError);
}

TEST_CASE("gradient of sum(warp) wrt flow matches central differences") {
  Rng rng(4);
  ad::Var frame(test::random_tensor({3, 16, 16}, rng), true);
  ad::Var flow(test::random_tensor({2, 16, 16}, rng, -2, 2), true);
  const Tensor ones = Tensor::constant({3, 16, 16}, 1.0);
  const auto r = test::grad_check([&] { return ad::dot(ad::warp(frame, flow), ones); }, {flow},
                                  20, 5);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("estimator returns near-zero flow for identical frames") {
  const Frame a = textured(32, 32, 11);
  const FlowField f = estimate_flow(a, a);
  CHECK(interior_error(f, 0, 0, 0) < 0.2);
}

TEST_CASE("estimator recovers a (+2, 0) wrapped shift") {
  for (std::uint64_t seed : {21, 22, 23}) {
    const Frame a = textured(32, 32, seed);
    const Frame b = shift_wrap(a, 2);
    const FlowField f = estimate_flow(a, b);
    CAPTURE(seed);
    CHECK(interior_error(f, 2, 0, 4) < 0.5);
  }
}

TEST_CASE("estimator is deterministic") {
  const Frame a = textured(32, 32, 3), b = shift_wrap(a, 1);
  CHECK(estimate_flow(a, b) == estimate_flow(a, b));
}

TEST_CASE("passthrough returns the gt flows exactly") {
  const VideoSequence v = synth_video(2, 4, 32, 32, 8);
  FlowEstimatorConfig cfg;
  cfg.method = FlowMethod::GroundTruthPassthrough;
  CHECK(estimate_step_flows(v, cfg) == *v.gt_flows);
  VideoSequence bare = v;
  bare.gt_flows.reset();
  CHECK_THROWS_AS(estimate_step_flows(bare, cfg), InputError);
}

TEST_CASE("normalisation maps the joint range onto [-1, 1]") {
  FlowField f(2, 4, 4);
  f(0, 0, 0) = -4;
  f(1, 3, 3) = 4;
  f(0, 1, 1) = 0.5;
  f(1, 1, 1) = -0.5;
  const NormalizedFlow nf = normalize_flow(f);
  CHECK(nf.range_min == -4);
  CHECK(nf.range_max == 4);
  CHECK(nf.values.matrix().topRows(2).minCoeff() == -1.0);
  CHECK(nf.values.matrix().topRows(2).maxCoeff() == 1.0);
  CHECK(nf.values(2, 1, 1) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("normalisation round trip and third channel on random flows") {
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const FlowField f = test::random_tensor({2, 16, 16}, rng, -uniform(rng, 0.1, 9), uniform(rng, 0.1, 9));
    const NormalizedFlow nf = normalize_flow(f);
    CHECK(max_abs_diff(denormalize_flow(nf), f) <= 1e-6);
    CHECK(nf.values.array().abs().maxCoeff() <= 1.0 + 1e-15);
    const Tensor::Matrix mean = 0.5 * (nf.values.matrix().row(0) + nf.values.matrix().row(1));
    CHECK((nf.values.matrix().row(2) - mean).cwiseAbs().maxCoeff() <= 1e-6);
    // The differentiable inverse agrees with the plain one.
    const ad::Var xy = ad::constant(Tensor({2, 16, 16}, nf.values.matrix().topRows(2)));
    CHECK(denormalize(xy, nf).value() == denormalize_flow(nf));
  }
}

TEST_CASE("constant flows normalise to zeros and invert exactly") {
  const FlowField f = FlowField::constant({2, 8, 8}, 1.25);
  const NormalizedFlow nf = normalize_flow(f);
  CHECK(nf.values.array().abs().maxCoeff() == 0.0);
  CHECK(denormalize_flow(nf) == f);
  CHECK(normalize_with_range(f, nf).array().abs().maxCoeff() == 0.0);
}

TEST_CASE("long-range flow to the same frame is zero") {
  const VideoSequence v = synth_video(1, 4, 16, 16, 2);
  CHECK(long_range_flow(v, 2, 2).array().abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(long_range_flow(v, 0, 7), InputError);
}

TEST_CASE("composing a constant unit flow three times gives (3, 0)") {
  FlowField step(2, 16, 16);
  step.matrix().row(0).setConstant(1.0);
  FlowField acc = step;
  for (int k = 0; k < 2; ++k) acc = compose_flows(acc, step);
  CHECK(interior_error(acc, 3, 0, 3) < 1e-12);
}

TEST_CASE("direct long-range flow on a panning scene matches the summed gt flows") {
  SynthScene scene;
  scene.background = random_texture(31, 0.08);
  scene.pan_x = 1.0;
  const RenderedScene r = render_scene(scene, 4, 32, 32);
  FlowField sum(2, 32, 32);
  for (const FlowField& f : *r.video.gt_flows) sum.matrix() += f.matrix();
  const FlowField direct = long_range_flow(r.video, 0, 3);
  CHECK(interior_error(direct, sum(0, 0, 0), sum(1, 0, 0), 4) < 1.0);
  FlowEstimatorConfig gt;
  gt.method = FlowMethod::GroundTruthPassthrough;
  CHECK(interior_error(long_range_flow(r.video, 0, 3, gt), 3, 0, 4) < 1e-12);
  const FlowField composed = long_range_flow(r.video, 0, 3, {}, LongRangeMode::Compose);
  CHECK(interior_error(composed, 3, 0, 4) < 1.0);
}
