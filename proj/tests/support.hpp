#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "frvi/autograd.hpp"
#include "frvi/nets.hpp"
#include "frvi/random.hpp"

namespace frvi::test {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(s);
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = uniform(rng, lo, hi);
  return t;
}

inline Mask random_mask(int h, int w, Rng& rng, double p = 0.3) {
  Mask m(1, h, w);
  for (std::int64_t i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, 0, 1) < p ? 1.0 : 0.0;
  return m;
}

inline std::vector<ad::Var> leaves_of(const NetworkParams& params) {
  std::vector<ad::Var> out;
  for (const auto& e : params.entries()) out.push_back(e.var);
  return out;
}

struct GradCheck {
  double max_rel = 0;
  int checked = 0;  // coordinates with a non-negligible gradient
  int sampled = 0;
};

// Central differences of the scalar f() against the reverse-mode gradient at
// random coordinates of `leaves`. Coordinates where both gradients vanish do
// not count toward `wanted`; sampling stops after 50 * wanted tries.
inline GradCheck grad_check(const std::function<ad::Var()>& f, const std::vector<ad::Var>& leaves,
                            int wanted, std::uint64_t seed, double h = 1e-4) {
  for (const ad::Var& v : leaves) {
    if (v.node()->grad.size() > 0) v.node()->grad.matrix().setZero();
  }
  ad::backward(f());
  std::vector<Tensor> analytic;
  std::vector<std::int64_t> offsets{0};
  for (const ad::Var& v : leaves) {
    analytic.push_back(v.grad());
    offsets.push_back(offsets.back() + v.value().size());
  }
  Rng rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, offsets.back() - 1);
  GradCheck res;
  while (res.checked < wanted && res.sampled < 50 * wanted) {
    ++res.sampled;
    const std::int64_t flat = pick(rng);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const std::size_t leaf = static_cast<std::size_t>(std::distance(offsets.begin(), it) - 1);
    const std::int64_t j = flat - offsets[leaf];
    Real& x = leaves[leaf].node()->value.data()[j];
    const Real saved = x;
    double fp, fm;
    {
      ad::NoGradGuard guard;
      x = saved + h;
      fp = f().value().item();
      x = saved - h;
      fm = f().value().item();
    }
    x = saved;
    const double num = (fp - fm) / (2 * h);
    const double a = analytic[leaf].data()[j];
    const double scale = std::max(std::abs(a), std::abs(num));
    if (scale < 1e-9) continue;
    ++res.checked;
    res.max_rel = std::max(res.max_rel, std::abs(a - num) / scale);
  }
  for (const ad::Var& v : leaves) {
    if (v.node()->grad.size() > 0) v.node()->grad.matrix().setZero();
  }
  return res;
}

inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("frvi_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every regular file under dir, keyed by relative path.
inline std::vector<std::pair<std::string, std::string>> dir_bytes(const std::string& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    out.emplace_back(std::filesystem::relative(e.path(), dir).string(),
                     read_bytes(e.path().string()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace frvi::test
