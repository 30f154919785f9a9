#include "doctest.h"
#include "frvi/losses.hpp"
#include "frvi/nets.hpp"
#include "support.hpp"

using namespace frvi;
using frvi::test::grad_check;
using frvi::test::leaves_of;
using frvi::test::random_tensor;

namespace {

std::vector<ad::Var> with(std::vector<ad::Var> a, const std::vector<ad::Var>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("count_params tallies element counts") {
  NetworkParams empty;
  CHECK(count_params(empty) == 0);
  NetworkParams p;
  Rng rng(1);
  add_conv(p, "c", 4, 8, 3, 1, rng, 1.0);
  CHECK(count_params(p) == 296);
  CHECK(p.param_count() == 296);
}

TEST_CASE("model parameter count is the sum of its networks") {
  const Model m(ModelConfig{});
  std::int64_t sum = 0;
  for (const auto& [name, p] : m.networks()) {
    std::int64_t own = 0;
    for (const auto& e : p->entries()) own += e.var.value().size();
    CHECK(own == p->param_count());
    sum += own;
  }
  CHECK(m.param_count() == sum);
  CHECK(m.networks().size() == 4);
}

TEST_CASE("every parameter has a same-shape gradient buffer") {
  const Model m(ModelConfig{});
  for (const auto& [name, p] : m.networks())
    for (const auto& e : p->entries()) {
      CAPTURE(e.name);
      CHECK(e.var.node()->grad.shape() == e.var.value().shape());
    }
}

TEST_CASE("models are deterministic in the seed") {
  ModelConfig cfg;
  cfg.seed = 5;
  const Model a(cfg), b(cfg);
  for (std::size_t n = 0; n < a.networks().size(); ++n) {
    const auto& ea = a.networks()[n].second->entries();
    const auto& eb = b.networks()[n].second->entries();
    for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i].var.value() == eb[i].var.value());
  }
  cfg.seed = 6;
  const Model c(cfg);
  CHECK_FALSE(c.hs.params().entries()[0].var.value() == a.hs.params().entries()[0].var.value());
}

TEST_CASE("H_s keeps known pixels and stays in [0, 1]") {
  Rng rng(2);
  const FrameInpainter hs(8, rng);
  const Frame full = random_tensor({3, 16, 16}, rng);
  CHECK(hs.inpaint(full, Mask(1, 16, 16)) == full);
  const Mask holes = test::random_mask(16, 16, rng, 0.4);
  const Frame p = hs.inpaint(apply_mask(full, holes), holes);
  CHECK(p.all_finite());
  CHECK(p.array().minCoeff() >= 0.0);
  CHECK(p.array().maxCoeff() <= 1.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (holes(0, y, x) == 0)
        for (int c = 0; c < 3; ++c) CHECK(p(c, y, x) == full(c, y, x));
  CHECK_THROWS_AS(hs.inpaint(Frame(3, 12, 12), Mask(1, 12, 12)), ShapeError);
}

TEST_CASE("H_c without holes returns the denormalised input") {
  Rng rng(3);
  const FlowCompleter hc(8, rng);
  const NormalizedFlow nf = normalize_flow(random_tensor({2, 16, 16}, rng, -3, 2));
  CHECK(hc.complete(nf, Mask(1, 16, 16)) == denormalize_flow(nf));
}

TEST_CASE("H_c on zero flow with holes is finite and within the range") {
  Rng rng(4);
  const FlowCompleter hc(8, rng);
  const NormalizedFlow nf = normalize_flow(FlowField(2, 16, 16));
  const FlowField out = hc.complete(nf, test::random_mask(16, 16, rng, 0.5));
  CHECK(out.all_finite());
  CHECK(out.array().abs().maxCoeff() <= std::max(std::abs(nf.range_min), std::abs(nf.range_max)));
}

TEST_CASE("H_f output is the half sum plus half the residual") {
  Rng rng(5);
  const FlowBlender hf(8, rng);
  const FlowField fp = random_tensor({2, 16, 16}, rng, -2, 2);
  const FlowField fi = random_tensor({2, 16, 16}, rng, -2, 2);
  const auto out = hf.forward(ad::constant(fp), ad::constant(fi));
  const Tensor::Matrix half = 0.5 * (fp.matrix() + fi.matrix());
  CHECK((out.flow.value().matrix() - half - 0.5 * out.residual.value().matrix()).cwiseAbs().maxCoeff() <= 1e-12);
  const Tensor::Matrix recomputed = 0.5 * ((fp.matrix() + fi.matrix()) + out.residual.value().matrix());
  CHECK(out.flow.value().matrix() == recomputed);
  CHECK(hf.blend(fp, fi) == out.flow.value());
}

TEST_CASE("H_f with a zero residual averages its inputs") {
  Rng rng(6);
  FlowBlender hf(8, rng);
  hf.params().value("hf.dec1.weight").matrix().setZero();
  hf.params().value("hf.dec1.bias").matrix().setZero();
  const FlowField fp = random_tensor({2, 16, 16}, rng, -2, 2);
  const FlowField fi = random_tensor({2, 16, 16}, rng, -2, 2);
  CHECK(hf.blend(fp, fi) == FlowField(fp.shape(), 0.5 * (fp.matrix() + fi.matrix())));
  CHECK(hf.blend(fp, fp) == fp);
  CHECK_THROWS_AS(hf.blend(fp, FlowField(2, 8, 8)), ShapeError);
}

TEST_CASE("ConvLSTM with all-zero weights gives half-open gates and zero state") {
  Rng rng(7);
  NetworkParams p;
  const ConvLSTMCell cell(p, "lstm", 3, 4, rng);
  for (const auto& e : p.entries()) e.var.node()->value.matrix().setZero();
  ConvLSTMCell::Gates g;
  const ConvLSTMState s = cell.step(p, ad::constant(random_tensor({3, 8, 8}, rng)), cell.zero_state(8, 8), &g);
  for (const ad::Var* v : {&g.input, &g.forget, &g.output}) {
    CHECK(v->value().array().minCoeff() == 0.5);
    CHECK(v->value().array().maxCoeff() == 0.5);
  }
  CHECK(s.cell.value().array().abs().maxCoeff() == 0.0);
  CHECK(s.hidden.value().array().abs().maxCoeff() == 0.0);
}

TEST_CASE("ConvLSTM forget bias of 20 preserves cell memory") {
  Rng rng(8);
  NetworkParams p;
  const int h = 4;
  const ConvLSTMCell cell(p, "lstm", 3, h, rng);
  p.value("lstm.wx.weight").matrix().middleRows(h, h).setZero();
  p.value("lstm.wh.weight").matrix().middleRows(h, h).setZero();
  p.value("lstm.wx.bias").matrix().middleRows(h, h).setConstant(20.0);
  ConvLSTMState prev{ad::constant(random_tensor({h, 8, 8}, rng, -0.5, 0.5)),
                     ad::constant(random_tensor({h, 8, 8}, rng, -0.5, 0.5))};
  ConvLSTMCell::Gates g;
  const ConvLSTMState s = cell.step(p, ad::constant(random_tensor({3, 8, 8}, rng)), prev, &g);
  CHECK((g.forget.value().array() - 1.0).abs().maxCoeff() < 1e-8);
  const Tensor::Matrix expect = prev.cell.value().matrix().array() +
                                g.input.value().array() * g.candidate.value().array();
  CHECK((s.cell.value().matrix() - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ConvLSTM gates stay in (0, 1) and the cell grows by at most one per step") {
  Rng rng(9);
  NetworkParams p;
  const ConvLSTMCell cell(p, "lstm", 3, 4, rng);
  p.value("lstm.wci").matrix().setConstant(0.3);
  p.value("lstm.wcf").matrix().setConstant(-0.2);
  p.value("lstm.wco").matrix().setConstant(0.5);
  ConvLSTMState s = cell.zero_state(8, 8);
  for (int t = 0; t < 6; ++t) {
    ConvLSTMCell::Gates g;
    const ConvLSTMState next = cell.step(p, ad::constant(random_tensor({3, 8, 8}, rng, -3, 3)), s, &g);
    for (const ad::Var* v : {&g.input, &g.forget, &g.output}) {
      CHECK(v->value().array().minCoeff() > 0.0);
      CHECK(v->value().array().maxCoeff() < 1.0);
    }
    CHECK((next.cell.value().array().abs() - s.cell.value().array().abs()).maxCoeff() <= 1.0);
    CHECK(next.hidden.value().array().abs().maxCoeff() < 1.0);
    s = next;
  }
  CHECK_THROWS_AS(cell.step(p, ad::constant(Tensor(3, 4, 4)), s), ShapeError);
}

TEST_CASE("refiner with a zero decoder returns the previous output") {
  Rng rng(10);
  Refiner ht(6, 6, rng);
  ht.zero_decoder_output();
  const Frame prev = random_tensor({3, 16, 16}, rng), cur = random_tensor({3, 16, 16}, rng);
  const auto out = ht.forward(ad::constant(prev), ad::constant(cur), ht.zero_state(16, 16));
  CHECK(out.output.value() == prev);
  CHECK(out.residual.value().array().abs().maxCoeff() == 0.0);
}

TEST_CASE("refiner pre-clamp output is previous plus residual") {
  Rng rng(11);
  const Refiner ht(6, 6, rng);
  const Frame prev = random_tensor({3, 16, 16}, rng), cur = random_tensor({3, 16, 16}, rng);
  const auto out = ht.forward(ad::constant(prev), ad::constant(cur), ht.zero_state(16, 16));
  CHECK(out.unclamped.value().matrix() == prev.matrix() + out.residual.value().matrix());
  CHECK((out.unclamped.value().matrix() - prev.matrix() - out.residual.value().matrix()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(out.output.value().array().minCoeff() >= 0.0);
  CHECK(out.output.value().array().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(ht.forward(ad::constant(prev), ad::constant(Frame(3, 8, 8)), ht.zero_state(16, 16)), ShapeError);
  CHECK_THROWS_AS(ht.forward(ad::constant(prev), ad::constant(cur), ht.zero_state(8, 8)), ShapeError);
}

TEST_CASE("refiner composites known pixels from the inpainted frame") {
  Rng rng(12);
  const Refiner ht(6, 6, rng);
  const Frame prev = random_tensor({3, 16, 16}, rng), cur = random_tensor({3, 16, 16}, rng);
  const Mask holes = test::random_mask(16, 16, rng, 0.3);
  const auto out = ht.forward(ad::constant(prev), ad::constant(cur), ht.zero_state(16, 16), &holes);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (holes(0, y, x) == 0) CHECK(out.output.value()(0, y, x) == cur(0, y, x));
  const Mask none(1, 16, 16);
  CHECK(ht.forward(ad::constant(prev), ad::constant(cur), ht.zero_state(16, 16), &none).output.value() == cur);
}

TEST_CASE("perceptual pyramid is fixed and shrinks level by level") {
  const RandomConvPyramid hp;
  Rng rng(13);
  const Frame f = random_tensor({3, 16, 16}, rng);
  const auto a = hp.features(ad::constant(f));
  const auto b = hp.features(ad::constant(f));
  REQUIRE(a.size() == 3);
  for (std::size_t l = 0; l < a.size(); ++l) {
    CHECK(a[l].value() == b[l].value());
    if (l > 0) CHECK(a[l].shape().height < a[l - 1].shape().height);
  }
}

TEST_CASE("network gradients match finite differences on 16x16 inputs") {
  Rng rng(14);
  const Mask holes = test::random_mask(16, 16, rng, 0.35);
  const Tensor r3 = random_tensor({3, 16, 16}, rng, -1, 1);
  const Tensor r2 = random_tensor({2, 16, 16}, rng, -1, 1);

  SUBCASE("partial-conv U-Net via H_s") {
    FrameInpainter hs(8, rng);
    ad::Var in(apply_mask(random_tensor({3, 16, 16}, rng), holes), true);
    const auto res = grad_check([&] { return ad::dot(hs.forward(in, holes), r3); },
                                with({in}, leaves_of(hs.params())), 30, 1);
    CHECK(res.checked >= 20);
    CHECK(res.max_rel < 1e-3);
  }
  SUBCASE("H_c") {
    FlowCompleter hc(8, rng);
    const NormalizedFlow nf = normalize_flow(random_tensor({2, 16, 16}, rng, -2, 3));
    const auto res = grad_check([&] { return ad::dot(hc.forward(nf, holes), r2); },
                                leaves_of(hc.params()), 30, 2);
    CHECK(res.checked >= 20);
    CHECK(res.max_rel < 1e-3);
  }
  SUBCASE("H_f through L_f") {
    FlowBlender hf(8, rng);
    ad::Var fp(random_tensor({2, 16, 16}, rng, -2, 2), true), fi(random_tensor({2, 16, 16}, rng, -2, 2), true);
    const std::vector<FlowField> gt{random_tensor({2, 16, 16}, rng, -2, 2)};
    const auto res = grad_check(
        [&] {
          const ad::Var f[] = {hf.forward(fp, fi).flow};
          return loss_flow(f, gt);
        },
        with({fp, fi}, leaves_of(hf.params())), 30, 3);
    CHECK(res.checked >= 20);
    CHECK(res.max_rel < 1e-3);
  }
  SUBCASE("ConvLSTM over three unrolled steps") {
    NetworkParams p;
    const ConvLSTMCell cell(p, "lstm", 3, 4, rng);
    p.value("lstm.wci").matrix().setConstant(0.2);
    p.value("lstm.wcf").matrix().setConstant(-0.3);
    p.value("lstm.wco").matrix().setConstant(0.4);
    std::vector<ad::Var> xs;
    for (int t = 0; t < 3; ++t) xs.emplace_back(random_tensor({3, 8, 8}, rng, -1, 1), true);
    const Tensor rh = random_tensor({4, 8, 8}, rng, -1, 1), rc = random_tensor({4, 8, 8}, rng, -1, 1);
    const auto res = grad_check(
        [&] {
          ConvLSTMState s = cell.zero_state(8, 8);
          for (const ad::Var& x : xs) s = cell.step(p, x, s);
          const ad::Var parts[] = {ad::dot(s.hidden, rh), ad::dot(s.cell, rc)};
          return ad::sum(parts);
        },
        with(xs, leaves_of(p)), 30, 4);
    CHECK(res.checked >= 20);
    CHECK(res.max_rel < 1e-3);
  }
  SUBCASE("refiner over two steps") {
    Refiner ht(6, 6, rng);
    ad::Var o0(random_tensor({3, 16, 16}, rng, 0.2, 0.8), true);
    ad::Var p1(random_tensor({3, 16, 16}, rng, 0.2, 0.8), true), p2(random_tensor({3, 16, 16}, rng, 0.2, 0.8), true);
    const auto res = grad_check(
        [&] {
          const auto a = ht.forward(o0, p1, ht.zero_state(16, 16), &holes);
          const auto b = ht.forward(a.output, p2, a.state, &holes);
          return ad::dot(b.output, r3);
        },
        with({o0, p1, p2}, leaves_of(ht.params())), 30, 5);
    CHECK(res.checked >= 20);
    CHECK(res.max_rel < 1e-3);
  }
}

TEST_CASE("forward and backward passes are bit-reproducible") {
  auto run = [] {
    Model m(ModelConfig{8, 8, 8, 8, 3, 21});
    Rng rng(22);
    const Mask holes = test::random_mask(16, 16, rng, 0.3);
    const ad::Var p = m.hs.forward(ad::constant(random_tensor({3, 16, 16}, rng)), holes);
    ad::backward(ad::dot(p, Tensor::constant({3, 16, 16}, 1.0)));
    std::vector<Tensor> grads;
    for (const auto& e : m.hs.params().entries()) grads.push_back(e.var.grad());
    return std::make_pair(p.value(), grads);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
