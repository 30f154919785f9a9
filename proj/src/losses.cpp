#include "frvi/losses.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "frvi/config.hpp"

namespace frvi {

namespace {

struct Term {
  ad::Var sum;
  double count = 0;

  ad::Var mean() const {
    if (count == 0) return ad::constant(Tensor::scalar(0));
    return ad::scale(sum, 1.0 / count);
  }
};

ad::Var sum_all(const std::vector<ad::Var>& parts) {
  if (parts.empty()) return ad::constant(Tensor::scalar(0));
  return ad::sum(parts);
}

double mask_count(const Mask& m, int channels) {
  return m.matrix().sum() * channels;
}

void require_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(want) + " entries, got " +
                     std::to_string(got));
  }
}

Term term_d(std::span<const ad::Var> o, std::span<const Frame> g, std::span<const Mask> m,
            double full_frame_weight) {
  if (o.empty()) throw InputError("loss_d: empty sequence");
  require_length(g.size(), o.size(), "loss_d targets");
  require_length(m.size(), o.size(), "loss_d masks");
  std::vector<ad::Var> parts;
  Term t;
  for (std::size_t i = 0; i < o.size(); ++i) {
    require_shape(g[i].shape(), o[i].shape(), "loss_d");
    parts.push_back(ad::masked_abs_sum(o[i], ad::constant(g[i]), m[i]));
    t.count += mask_count(m[i], o[i].shape().channels);
  }
  t.sum = sum_all(parts);
  if (full_frame_weight > 0) {
    std::vector<ad::Var> full;
    double n = 0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      full.push_back(ad::abs_sum(o[i], ad::constant(g[i])));
      n += static_cast<double>(o[i].value().size());
    }
    // Rescaled so that the hole mean and the full-frame mean add.
    if (t.count > 0) {
      t.sum = ad::add(t.sum, ad::scale(sum_all(full), full_frame_weight * t.count / n));
    } else {
      t.sum = ad::scale(sum_all(full), full_frame_weight);
      t.count = n;
    }
  }
  return t;
}

Term term_warped(std::span<const ad::Var> targets, std::span<const ad::Var> sources,
                 std::span<const ad::Var> flows, std::span<const Mask> masks) {
  std::vector<ad::Var> parts;
  Term t;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    parts.push_back(ad::masked_abs_sum(targets[i], ad::warp(sources[i], flows[i]), masks[i]));
    t.count += mask_count(masks[i], targets[i].shape().channels);
  }
  t.sum = sum_all(parts);
  return t;
}

Term term_short(std::span<const ad::Var> o, std::span<const ad::Var> f,
                std::span<const Mask> m) {
  if (o.size() < 2) throw InputError("loss_short: needs at least two frames");
  require_length(f.size(), o.size() - 1, "loss_short flows");
  require_length(m.size(), o.size(), "loss_short masks");
  return term_warped(o.subspan(1), o.first(o.size() - 1), f, m.subspan(1));
}

Term term_reverse(std::span<const ad::Var> o, std::span<const ad::Var> f,
                  std::span<const Mask> m) {
  if (o.size() < 2) throw InputError("loss_reverse: needs at least two frames");
  require_length(f.size(), o.size() - 1, "loss_reverse flows");
  require_length(m.size(), o.size(), "loss_reverse masks");
  return term_warped(o.first(o.size() - 1), o.subspan(1), f, m.subspan(1));
}

Term term_long(std::span<const ad::Var> o, std::span<const ad::Var> to_first,
               std::span<const ad::Var> to_last, std::span<const Mask> m) {
  if (o.empty()) throw InputError("loss_long: empty sequence");
  require_length(to_first.size(), o.size(), "loss_long flows to first");
  require_length(to_last.size(), o.size(), "loss_long flows to last");
  require_length(m.size(), o.size(), "loss_long masks");
  const std::vector<ad::Var> first(o.size(), o.front()), last(o.size(), o.back());
  Term a = term_warped(first, o, to_first, m);
  Term b = term_warped(last, o, to_last, m);
  return {ad::add(a.sum, b.sum), a.count + b.count};
}

Term term_flow(std::span<const ad::Var> f, std::span<const FlowField> gf) {
  require_length(gf.size(), f.size(), "loss_flow");
  std::vector<ad::Var> parts;
  Term t;
  for (std::size_t i = 0; i < f.size(); ++i) {
    require_shape(gf[i].shape(), f[i].shape(), "loss_flow");
    parts.push_back(ad::abs_sum(f[i], ad::constant(gf[i])));
    t.count += static_cast<double>(f[i].value().size());
  }
  t.sum = sum_all(parts);
  return t;
}

Term term_p(std::span<const ad::Var> o, std::span<const Frame> g,
            const FeatureExtractor& extractor) {
  require_length(g.size(), o.size(), "loss_p targets");
  if (o.empty()) throw InputError("loss_p: empty sequence");
  std::vector<std::vector<ad::Var>> per_level;
  std::vector<double> level_count;
  for (std::size_t i = 0; i < o.size(); ++i) {
    require_shape(g[i].shape(), o[i].shape(), "loss_p");
    const std::vector<ad::Var> fo = extractor.features(o[i]);
    std::vector<ad::Var> fg;
    {
      ad::NoGradGuard guard;
      fg = extractor.features(ad::constant(g[i]));
    }
    per_level.resize(fo.size());
    level_count.resize(fo.size());
    for (std::size_t l = 0; l < fo.size(); ++l) {
      per_level[l].push_back(ad::abs_sum(fo[l], fg[l]));
      level_count[l] += static_cast<double>(fo[l].value().size());
    }
  }
  std::vector<ad::Var> levels;
  double total_count = 0;
  for (std::size_t l = 0; l < per_level.size(); ++l) {
    levels.push_back(ad::scale(sum_all(per_level[l]), 1.0 / level_count[l]));
    total_count += level_count[l];
  }
  // Already a mean; count is kept as metadata only.
  Term t{ad::scale(sum_all(levels), 1.0 / static_cast<double>(levels.size())), 1.0};
  t.count = total_count;
  return t;
}

}  // namespace

ad::Var loss_d(std::span<const ad::Var> outputs, std::span<const Frame> targets,
               std::span<const Mask> masks, double full_frame_weight) {
  return term_d(outputs, targets, masks, full_frame_weight).mean();
}

ad::Var loss_p(std::span<const ad::Var> outputs, std::span<const Frame> targets,
               const FeatureExtractor& extractor) {
  return term_p(outputs, targets, extractor).sum;
}

ad::Var loss_short(std::span<const ad::Var> outputs, std::span<const ad::Var> flows,
                   std::span<const Mask> masks) {
  return term_short(outputs, flows, masks).mean();
}

ad::Var loss_reverse(std::span<const ad::Var> outputs, std::span<const ad::Var> reverse_flows,
                     std::span<const Mask> masks) {
  return term_reverse(outputs, reverse_flows, masks).mean();
}

ad::Var loss_long(std::span<const ad::Var> outputs, std::span<const ad::Var> to_first,
                  std::span<const ad::Var> to_last, std::span<const Mask> masks) {
  return term_long(outputs, to_first, to_last, masks).mean();
}

ad::Var loss_flow(std::span<const ad::Var> flows, std::span<const FlowField> gt_flows) {
  return term_flow(flows, gt_flows).mean();
}

// --- report -------------------------------------------------------------------

double LossReport::weighted(const LossWeights& w) const {
  return w.lambda_s * s + w.lambda_d * d + w.lambda_r * r + w.lambda_f * f + w.lambda_p * p +
         w.lambda_l * l;
}

std::string LossReport::to_line() const {
  std::ostringstream os;
  os << "step=" << step << " L_d=" << format_double(d) << " L_p=" << format_double(p)
     << " L_s=" << format_double(s) << " L_r=" << format_double(r)
     << " L_l=" << format_double(l) << " L_f=" << format_double(f)
     << " total=" << format_double(total);
  return os.str();
}

LossReport LossReport::parse_line(const std::string& line) {
  LossReport r;
  std::istringstream is(line);
  std::string tok;
  int seen = 0;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw InputError("loss log: malformed token '" + tok + "'");
    const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
    if (key == "step") r.step = parse_int(key, value);
    else if (key == "L_d") r.d = parse_double(key, value);
    else if (key == "L_p") r.p = parse_double(key, value);
    else if (key == "L_s") r.s = parse_double(key, value);
    else if (key == "L_r") r.r = parse_double(key, value);
    else if (key == "L_l") r.l = parse_double(key, value);
    else if (key == "L_f") r.f = parse_double(key, value);
    else if (key == "total") r.total = parse_double(key, value);
    else throw InputError("loss log: unknown key '" + key + "'");
    ++seen;
  }
  if (seen != 8) throw InputError("loss log: incomplete line");
  return r;
}

std::ostream& operator<<(std::ostream& os, const LossReport& report) {
  return os << report.to_line();
}

LossResult total_loss(const LossInputs& in, const LossWeights& w) {
  LossResult res;
  std::vector<ad::Var> weighted;
  auto add = [&](double lambda, const Term& t, double& value, double& count) {
    const ad::Var m = t.mean();
    value = m.value().item();
    count = t.count;
    weighted.push_back(ad::scale(m, lambda));
  };
  auto need = [](bool present, const char* what) {
    if (!present) throw InputError(std::string("total_loss: missing inputs for ") + what);
  };
  auto flows_for_temporal = [&](const std::vector<ad::Var>& flows) {
    if (!in.flow_detach) return flows;
    std::vector<ad::Var> out;
    for (const ad::Var& f : flows) out.push_back(f.detach());
    return out;
  };
  LossReport& r = res.report;
  if (w.lambda_d != 0) {
    need(!in.targets.empty(), "L_d");
    add(w.lambda_d, term_d(in.outputs, in.targets, in.masks, w.full_frame), r.d, r.counts.d);
  }
  if (w.lambda_p != 0) {
    need(!in.targets.empty() && in.extractor, "L_p");
    Term t = term_p(in.outputs, in.targets, *in.extractor);
    r.p = t.sum.value().item();
    r.counts.p = t.count;
    weighted.push_back(ad::scale(t.sum, w.lambda_p));
  }
  if (w.lambda_s != 0) {
    need(in.outputs.size() < 2 || !in.flows.empty(), "L_s");
    if (in.outputs.size() >= 2) {
      add(w.lambda_s, term_short(in.outputs, flows_for_temporal(in.flows), in.masks), r.s,
          r.counts.s);
    }
  }
  if (w.lambda_r != 0) {
    need(in.outputs.size() < 2 || !in.reverse_flows.empty(), "L_r");
    if (in.outputs.size() >= 2) {
      add(w.lambda_r, term_reverse(in.outputs, flows_for_temporal(in.reverse_flows), in.masks),
          r.r, r.counts.r);
    }
  }
  if (w.lambda_l != 0) {
    need(!in.to_first.empty() && !in.to_last.empty(), "L_l");
    add(w.lambda_l,
        term_long(in.outputs, flows_for_temporal(in.to_first), flows_for_temporal(in.to_last),
                  in.masks),
        r.l, r.counts.l);
  }
  if (w.lambda_f != 0) {
    need(in.gt_flows.size() == in.flows.size(), "L_f");
    add(w.lambda_f, term_flow(in.flows, in.gt_flows), r.f, r.counts.f);
  }
  res.total = sum_all(weighted);
  r.total = res.total.value().item();
  return res;
}

}  // namespace frvi
