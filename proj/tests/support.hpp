// Shared helpers for the unit and acceptance tests: random tensors and a
// central-difference gradient checker that is aware of non-smooth activations.
#pragma once

#include "ampn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace ampn::testing {

template <typename Scalar = float>
Tensor<Scalar> random_tensor(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<Scalar> t(s);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.array()[i] = static_cast<Scalar>(u(rng));
  return t;
}

inline double max_abs_diff(const TensorF& a, const TensorF& b) {
  return (a.array().cast<double>() - b.array().cast<double>()).abs().maxCoeff();
}

/// Which side of every kink each kink-op input sits on, in graph visiting order.
inline std::vector<int> kink_pattern(const VarD& root) {
  std::vector<int> pattern;
  visit_graph<double>(root, [&pattern](const Node<double>& n) {
    const auto kinks = kink_points(n.op);
    if (kinks.empty() || n.parents.empty()) return;
    const auto& x = n.parents.front()->value.array();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      int side = 0;
      for (double k : kinks) side = side * 3 + (x[i] < k ? 0 : x[i] == k ? 1 : 2);
      pattern.push_back(side);
    }
  });
  return pattern;
}

struct GradCheck {
  double max_rel_error = 0;
  int checked = 0;
  int skipped = 0;  // coordinates whose perturbation crossed a kink
  std::string worst;
};

/// Compares reverse-mode gradients of the scalar `f()` with respect to `leaves` against
/// central differences. Relative error is |a - n| / max(|a|, |n|, floor). Coordinates whose
/// +-step evaluation moves any kink-op input to a different side of its kink are skipped.
/// `max_coords` limits the number of coordinates per leaf (chosen evenly); 0 means all.
inline GradCheck grad_check(const std::function<VarD()>& f, std::vector<VarD> leaves, double step = 1e-3,
                            double floor = 1e-3, int max_coords = 0) {
  GradCheck out;
  for (auto& l : leaves) l.zero_grad();
  VarD y = f();
  backward(y);
  const std::vector<int> base = kink_pattern(y);
  for (size_t li = 0; li < leaves.size(); ++li) {
    VarD leaf = leaves[li];
    const TensorD analytic = leaf.grad();
    const Eigen::Index n = leaf.value().size();
    const Eigen::Index stride = (max_coords > 0 && n > max_coords) ? n / max_coords : 1;
    for (Eigen::Index i = 0; i < n; i += stride) {
      double& theta = leaf.mutable_value().array()[i];
      const double saved = theta;
      theta = saved + step;
      VarD plus = f();
      const bool plus_ok = kink_pattern(plus) == base;
      theta = saved - step;
      VarD minus = f();
      const bool minus_ok = kink_pattern(minus) == base;
      theta = saved;
      if (!plus_ok || !minus_ok) {
        ++out.skipped;
        continue;
      }
      const double numeric = (plus.value().array()[0] - minus.value().array()[0]) / (2.0 * step);
      const double a = analytic.array()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = "leaf " + std::to_string(li) + " index " + std::to_string(i) + ": analytic " +
                    std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return out;
}

/// Leaves of a module's parameter list.
inline std::vector<VarD> leaves_of(const NamedParams<double>& params) {
  std::vector<VarD> out;
  for (const auto& [name, p] : params) out.push_back(p);
  return out;
}

/// Random weights in place, so biases and gates are not all zero.
inline void randomize(const NamedParams<double>& params, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (const auto& [name, p] : params) {
    VarD v = p;
    for (Eigen::Index i = 0; i < v.value().size(); ++i) v.mutable_value().array()[i] = d(rng);
  }
}

}  // namespace ampn::testing
