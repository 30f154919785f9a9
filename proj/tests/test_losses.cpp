#include <sstream>

#include "doctest.h"
#include "frvi/losses.hpp"
#include "support.hpp"

using namespace frvi;
using frvi::test::grad_check;
using frvi::test::random_tensor;

namespace {

std::vector<ad::Var> vars(const std::vector<Tensor>& ts, bool grad = false) {
  std::vector<ad::Var> out;
  for (const Tensor& t : ts) out.emplace_back(t, grad);
  return out;
}

std::vector<Frame> random_frames(int n, Rng& rng, int size = 16) {
  std::vector<Frame> out;
  for (int i = 0; i < n; ++i) out.push_back(random_tensor({3, size, size}, rng));
  return out;
}

std::vector<Mask> random_masks(int n, Rng& rng, int size = 16) {
  std::vector<Mask> out;
  for (int i = 0; i < n; ++i) out.push_back(test::random_mask(size, size, rng, 0.4));
  return out;
}

std::vector<FlowField> zero_flows(int n, int size = 16) {
  return std::vector<FlowField>(n, FlowField(2, size, size));
}

double value(const ad::Var& v) { return v.value().item(); }

}  // namespace

TEST_CASE("L_d vanishes on equal inputs and on empty masks") {
  Rng rng(1);
  const auto g = random_frames(3, rng);
  const auto m = random_masks(3, rng);
  CHECK(value(loss_d(vars(g), g, m)) == 0.0);
  const auto o = random_frames(3, rng);
  CHECK(value(loss_d(vars(o), g, std::vector<Mask>(3, Mask(1, 16, 16)))) == 0.0);
}

TEST_CASE("L_d with one hole pixel off by 0.5 is 0.5") {
  Frame g(3, 16, 16), o(3, 16, 16);
  Mask m(1, 16, 16);
  m(0, 4, 5) = 1;
  for (int c = 0; c < 3; ++c) o(c, 4, 5) = 0.5;
  o(0, 0, 0) = 0.9;  // outside the hole
  CHECK(value(loss_d(vars({o}), std::vector<Frame>{g}, std::vector<Mask>{m})) == doctest::Approx(0.5));
}

TEST_CASE("L_d full-frame term adds the full-frame mean") {
  Frame g(3, 16, 16), o = Frame::constant({3, 16, 16}, 0.2);
  Mask m(1, 16, 16);
  m(0, 1, 1) = 1;
  o(0, 1, 1) = o(1, 1, 1) = o(2, 1, 1) = 0.8;
  const double full = (0.2 * (3 * 256 - 3) + 0.8 * 3) / (3 * 256);
  CHECK(value(loss_d(vars({o}), std::vector<Frame>{g}, std::vector<Mask>{m}, 0.5)) ==
        doctest::Approx(0.8 + 0.5 * full));
}

TEST_CASE("L_p is zero on equal inputs and reproducible") {
  Rng rng(2);
  const RandomConvPyramid hp;
  const auto g = random_frames(2, rng), o = random_frames(2, rng);
  CHECK(value(loss_p(vars(g), g, hp)) == 0.0);
  const double a = value(loss_p(vars(o), g, hp)), b = value(loss_p(vars(o), g, hp));
  CHECK(a == b);
  CHECK(a > 0.0);
}

TEST_CASE("L_s is zero for a static video and for empty masks") {
  Rng rng(3);
  const Frame f = random_tensor({3, 16, 16}, rng);
  const std::vector<Frame> still(4, f);
  const auto flows = vars(zero_flows(3));
  CHECK(value(loss_short(vars(still), flows, random_masks(4, rng))) == 0.0);
  CHECK(value(loss_short(vars(random_frames(4, rng)), flows, std::vector<Mask>(4, Mask(1, 16, 16)))) == 0.0);
}

TEST_CASE("L_s is near zero for a translating video with the matching flow") {
  SynthScene scene;
  scene.background = random_texture(4, 0.08);
  scene.pan_x = 1;
  scene.pan_y = -1;
  const RenderedScene r = render_scene(scene, 4, 16, 16);
  Mask interior(1, 16, 16);
  for (int y = 2; y < 14; ++y)
    for (int x = 2; x < 14; ++x) interior(0, y, x) = 1;
  const auto flows = vars(*r.video.gt_flows);
  CHECK(value(loss_short(vars(r.video.frames), flows, std::vector<Mask>(4, interior))) < 1e-3);
}

TEST_CASE("L_r mirrors L_s on the reversed sequence") {
  Rng rng(5);
  const auto o = random_frames(5, rng);
  const Mask m = test::random_mask(16, 16, rng, 0.5);
  const std::vector<Mask> masks(5, m);
  std::vector<FlowField> rev;
  for (int k = 0; k < 4; ++k) rev.push_back(random_tensor({2, 16, 16}, rng, -2, 2));
  const double lr = value(loss_reverse(vars(o), vars(rev), masks));
  const std::vector<Frame> o_rev(o.rbegin(), o.rend());
  const std::vector<FlowField> f_rev(rev.rbegin(), rev.rend());
  const double ls = value(loss_short(vars(o_rev), vars(f_rev), masks));
  CHECK(lr == doctest::Approx(ls).epsilon(1e-12));
  CHECK(value(loss_reverse(vars(std::vector<Frame>(3, o[0])), vars(zero_flows(2)),
                    std::vector<Mask>(3, m))) == 0.0);
}

TEST_CASE("L_r equals L_s on a palindromic video") {
  Rng rng(6);
  const Frame a = random_tensor({3, 16, 16}, rng), b = random_tensor({3, 16, 16}, rng);
  const std::vector<Frame> o{a, b, a};
  const FlowField ab = random_tensor({2, 16, 16}, rng, -2, 2), ba = random_tensor({2, 16, 16}, rng, -2, 2);
  const std::vector<Mask> masks(3, test::random_mask(16, 16, rng, 0.5));
  // Forward flows a->b, b->a; reverse flows F_{1,0} = b->a and F_{2,1} = a->b.
  const double ls = value(loss_short(vars(o), vars({ab, ba}), masks));
  const double lr = value(loss_reverse(vars(o), vars({ba, ab}), masks));
  CHECK(std::abs(ls - lr) <= 1e-6);
}

TEST_CASE("L_l with two frames and zero flows compares the endpoints") {
  Rng rng(7);
  const auto o = random_frames(2, rng);
  const Mask m = test::random_mask(16, 16, rng, 0.5);
  const std::vector<Mask> masks(2, m);
  const auto z = vars(zero_flows(2));
  double s = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) s += m(0, y, x) * std::abs(o[1](c, y, x) - o[0](c, y, x));
  const double n = 3 * m.matrix().sum();
  // Four comparisons, two of them trivially zero.
  CHECK(value(loss_long(vars(o), z, z, masks)) == doctest::Approx(s / (2 * n)).epsilon(1e-12));
  const std::vector<Frame> still(4, o[0]);
  CHECK(value(loss_long(vars(still), vars(zero_flows(4)), vars(zero_flows(4)), std::vector<Mask>(4, m))) == 0.0);
}

TEST_CASE("L_f mean offset and subgradient") {
  Rng rng(8);
  const std::vector<FlowField> gt{random_tensor({2, 8, 8}, rng, -2, 2), random_tensor({2, 8, 8}, rng, -2, 2)};
  CHECK(value(loss_flow(vars(gt), gt)) == 0.0);
  std::vector<FlowField> off = gt;
  for (auto& f : off) f.array() += 1.0;
  CHECK(value(loss_flow(vars(off), gt)) == doctest::Approx(1.0));

  std::vector<FlowField> mixed = gt;
  mixed[0](0, 0, 0) += 0.5;
  mixed[0](1, 2, 3) -= 0.25;
  const auto f = vars(mixed, true);
  ad::backward(loss_flow(f, gt));
  const double count = 2 * 2 * 64;
  CHECK(f[0].grad()(0, 0, 0) == doctest::Approx(1 / count));
  CHECK(f[0].grad()(1, 2, 3) == doctest::Approx(-1 / count));
  CHECK(f[0].grad()(0, 1, 1) == 0.0);
  CHECK(f[1].grad().array().abs().maxCoeff() == 0.0);
}

TEST_CASE("losses reject misaligned inputs") {
  Rng rng(9);
  const auto o = vars(random_frames(3, rng));
  CHECK_THROWS_AS(loss_d(o, random_frames(2, rng), random_masks(3, rng)), ShapeError);
  CHECK_THROWS_AS(loss_short(o, vars(zero_flows(1)), random_masks(3, rng)), ShapeError);
  CHECK_THROWS_AS(loss_reverse(o, vars(zero_flows(3)), random_masks(3, rng)), ShapeError);
  CHECK_THROWS_AS(loss_long(o, vars(zero_flows(3)), vars(zero_flows(2)), random_masks(3, rng)), ShapeError);
  CHECK_THROWS_AS(loss_flow(vars(zero_flows(2)), zero_flows(1)), ShapeError);
  CHECK_THROWS_AS(loss_short(std::span<const ad::Var>(o).first(1), {}, random_masks(1, rng)), InputError);
}

TEST_CASE("perturbing known pixels leaves the masked terms unchanged") {
  Rng rng(10);
  const Mask m = test::random_mask(16, 16, rng, 0.4);
  const std::vector<Mask> masks(4, m);
  const auto g = random_frames(4, rng);
  auto o = random_frames(4, rng);
  const auto z3 = vars(zero_flows(3)), z4 = vars(zero_flows(4));
  auto eval = [&](const std::vector<Frame>& frames) {
    const auto v = vars(frames);
    return std::array<double, 4>{value(loss_d(v, g, masks)), value(loss_short(v, z3, masks)),
                                 value(loss_reverse(v, z3, masks)), value(loss_long(v, z4, z4, masks))};
  };
  const auto before = eval(o);
  for (Frame& f : o)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (m(0, y, x) == 0)
          for (int c = 0; c < 3; ++c) f(c, y, x) = uniform(rng, 0, 1);
  CHECK(eval(o) == before);
}

TEST_CASE("loss gradients wrt outputs match finite differences") {
  Rng rng(11);
  const int T = 3;
  std::vector<ad::Var> o;
  for (int t = 0; t < T; ++t) o.emplace_back(random_tensor({3, 16, 16}, rng), true);
  const auto g = random_frames(T, rng);
  const auto m = random_masks(T, rng);
  std::vector<ad::Var> fwd, rev, first, last;
  for (int k = 0; k < T - 1; ++k) {
    fwd.emplace_back(random_tensor({2, 16, 16}, rng, -1.7, 1.7));
    rev.emplace_back(random_tensor({2, 16, 16}, rng, -1.7, 1.7));
  }
  for (int t = 0; t < T; ++t) {
    first.emplace_back(random_tensor({2, 16, 16}, rng, -1.7, 1.7));
    last.emplace_back(random_tensor({2, 16, 16}, rng, -1.7, 1.7));
  }
  const RandomConvPyramid hp;
  std::vector<ad::Var> fl;
  for (int k = 0; k < T - 1; ++k) fl.emplace_back(random_tensor({2, 16, 16}, rng, -2, 2), true);
  std::vector<FlowField> gf;
  for (int k = 0; k < T - 1; ++k) gf.push_back(random_tensor({2, 16, 16}, rng, -2, 2));

  const std::vector<std::pair<const char*, std::function<ad::Var()>>> cases = {
      {"L_d", [&] { return loss_d(o, g, m); }},
      {"L_p", [&] { return loss_p(o, g, hp); }},
      {"L_s", [&] { return loss_short(o, fwd, m); }},
      {"L_r", [&] { return loss_reverse(o, rev, m); }},
      {"L_l", [&] { return loss_long(o, first, last, m); }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    const auto res = grad_check(f, o, 25, 12);
    CHECK(res.checked >= 20);
    CHECK(res.max_rel < 1e-3);
  }
  const auto lf = grad_check([&] { return loss_flow(fl, gf); }, fl, 25, 13);
  CHECK(lf.checked >= 20);
  CHECK(lf.max_rel < 1e-3);
}

TEST_CASE("total loss is the weighted sum of the terms") {
  Rng rng(14);
  const int T = 3;
  LossInputs in;
  in.outputs = vars(random_frames(T, rng));
  in.targets = random_frames(T, rng);
  in.masks = random_masks(T, rng);
  for (int k = 0; k < T - 1; ++k) {
    in.flows.emplace_back(random_tensor({2, 16, 16}, rng, -1, 1));
    in.reverse_flows.emplace_back(random_tensor({2, 16, 16}, rng, -1, 1));
    in.gt_flows.push_back(random_tensor({2, 16, 16}, rng, -1, 1));
  }
  for (int t = 0; t < T; ++t) {
    in.to_first.emplace_back(random_tensor({2, 16, 16}, rng, -1, 1));
    in.to_last.emplace_back(random_tensor({2, 16, 16}, rng, -1, 1));
  }
  const RandomConvPyramid hp;
  in.extractor = &hp;

  const LossResult def = total_loss(in, LossWeights{});
  const LossReport& r = def.report;
  CHECK(r.total == doctest::Approx(10 * (r.s + r.d + r.r) + (r.f + r.p + r.l)).epsilon(1e-12));
  CHECK(std::abs(r.total - r.weighted(LossWeights{})) <= 1e-6);
  for (double t : {r.d, r.p, r.s, r.r, r.l, r.f}) CHECK(t > 0.0);
  CHECK(r.d == value(loss_d(in.outputs, in.targets, in.masks)));
  CHECK(r.s == value(loss_short(in.outputs, in.flows, in.masks)));
  CHECK(r.counts.d == 3 * (in.masks[0].matrix().sum() + in.masks[1].matrix().sum() + in.masks[2].matrix().sum()));

  const LossResult zero = total_loss(in, LossWeights{0, 0, 0, 0, 0, 0, 0});
  CHECK(zero.report.total == 0.0);

  LossInputs same = in;
  same.outputs = vars(in.targets);
  CHECK(total_loss(same, LossWeights{0, 1, 0, 0, 0, 0, 0}).report.total == 0.0);

  LossInputs missing;
  missing.outputs = in.outputs;
  missing.masks = in.masks;
  CHECK_THROWS_AS(total_loss(missing, LossWeights{}), InputError);
  missing.targets = in.targets;
  CHECK(total_loss(missing, LossWeights{0, 1, 0, 0, 0, 0, 0}).report.total == r.d);
}

TEST_CASE("flow_detach cuts temporal-loss gradients from the flows") {
  Rng rng(15);
  for (bool detach : {true, false}) {
    LossInputs in;
    in.outputs = vars(random_frames(2, rng));
    in.masks = random_masks(2, rng);
    ad::Var flow(random_tensor({2, 16, 16}, rng, -1.5, 1.5), true);
    in.flows = {flow};
    in.flow_detach = detach;
    const LossWeights w{1, 0, 0, 0, 0, 0, 0};
    ad::backward(total_loss(in, w).total);
    CHECK((flow.grad().array().abs().maxCoeff() == 0.0) == detach);
  }
}

TEST_CASE("loss report lines round trip") {
  LossReport r;
  r.step = 17;
  r.d = 0.1;
  r.p = 1.0 / 3;
  r.s = 2e-9;
  r.r = 0.25;
  r.l = 7;
  r.f = 0.125;
  r.total = 12.345678901234567;
  const LossReport back = LossReport::parse_line(r.to_line());
  CHECK(back.step == 17);
  CHECK(back.p == r.p);
  CHECK(back.total == r.total);
  CHECK(back.to_line() == r.to_line());
  std::ostringstream os;
  os << r;
  CHECK(os.str() == r.to_line());
  CHECK_THROWS_AS(LossReport::parse_line("step=1 L_d=0.1"), InputError);
  CHECK_THROWS_AS(LossReport::parse_line("step=1 bogus"), InputError);
}
