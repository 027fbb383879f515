#include "vsdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "vsdm/errors.hpp"

namespace vsdm {

namespace {

// Sum over ordered pairs (i, j) of |v_i - v_j|, v sorted in place.
double sorted_pair_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) s += v[k] * (2.0 * static_cast<double>(k) - n + 1.0);
  return 2.0 * s;
}

struct PairSums {
  double aa = 0.0, bb = 0.0, ab = 0.0;  // ordered-pair sums
};

double combine(const PairSums& s, double na, double nb) {
  return 2.0 * s.ab / (na * nb) - s.aa / (na * na) - s.bb / (nb * nb);
}

PairSums pair_sums_1d(std::span<const double> a, std::span<const double> b) {
  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end());
  std::vector<double> pooled(va);
  pooled.insert(pooled.end(), vb.begin(), vb.end());
  PairSums s;
  s.aa = sorted_pair_sum(va);
  s.bb = sorted_pair_sum(vb);
  s.ab = 0.5 * (sorted_pair_sum(pooled) - s.aa - s.bb);
  return s;
}

PairSums pair_sums(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() == 1) {
    return pair_sums_1d({a.data(), static_cast<std::size_t>(a.cols())},
                        {b.data(), static_cast<std::size_t>(b.cols())});
  }
  auto within = [](const Eigen::MatrixXd& m) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.cols(); ++i)
      for (Eigen::Index j = i + 1; j < m.cols(); ++j) s += (m.col(i) - m.col(j)).norm();
    return 2.0 * s;
  };
  PairSums s;
  s.aa = within(a);
  s.bb = within(b);
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) s.ab += (a.col(i) - b.col(j)).norm();
  return s;
}

void check_pair(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() == 0 || b.cols() == 0) throw DomainError("energy distance needs nonempty batches");
  if (a.rows() != b.rows()) throw DomainError("energy distance: dimension mismatch");
}

}  // namespace

Eigen::VectorXd straightness(std::span<const Eigen::MatrixXd> states, double h) {
  if (states.size() < 3) throw DomainError("straightness needs at least 3 time points");
  if (!(h > 0.0)) throw DomainError("straightness needs a positive time step");
  const Eigen::Index d = states[0].rows();
  const auto chains = static_cast<double>(states[0].cols());
  if (states[0].cols() == 0) throw DomainError("straightness needs at least one trajectory");
  const std::size_t last = states.size() - 2;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 1; k <= last; ++k) {
    const Eigen::VectorXd mean_abs =
        (states[k + 1] - 2.0 * states[k] + states[k - 1]).cwiseAbs().rowwise().sum() /
        (chains * h * h);
    const double w = (k == 1 ? 0.5 : 0.0) + (k == last ? 0.5 : 0.0) + 1.0;
    total += w * mean_abs;
  }
  return h * total;
}

Eigen::VectorXd straightness(const Eigen::MatrixXd& path, double h) {
  std::vector<Eigen::MatrixXd> states;
  states.reserve(static_cast<std::size_t>(path.cols()));
  for (Eigen::Index k = 0; k < path.cols(); ++k) states.emplace_back(path.col(k));
  return straightness(states, h);
}

double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  check_pair(a, b);
  const double e = combine(pair_sums(a, b), static_cast<double>(a.cols()),
                           static_cast<double>(b.cols()));
  return std::max(e, 0.0);
}

PermutationTest energy_permutation_test(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                        int permutations, Rng& rng, double level) {
  check_pair(a, b);
  if (permutations < 1) throw DomainError("permutation test needs at least one permutation");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("test level must lie in (0, 1)");
  const Eigen::Index na = a.cols(), nb = b.cols(), n = na + nb;
  Eigen::MatrixXd pooled(a.rows(), n);
  pooled << a, b;

  PermutationTest out;
  out.statistic = energy_distance(a, b);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto shuffle = [&] {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(uniform_index(rng, 0, static_cast<int>(i)))]);
  };

  // Pairwise distances are cached when they fit; otherwise each permutation recomputes.
  constexpr Eigen::Index kCacheLimit = 3000;
  const bool cache = a.rows() > 1 && n <= kCacheLimit;
  Eigen::MatrixXd dist;
  double total = 0.0;
  if (cache) {
    dist.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      dist(j, j) = 0.0;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        dist(i, j) = dist(j, i) = (pooled.col(i) - pooled.col(j)).norm();
        total += 2.0 * dist(i, j);
      }
    }
  }

  std::vector<double> null(static_cast<std::size_t>(permutations));
  std::vector<char> in_a(static_cast<std::size_t>(n));
  for (double& value : null) {
    shuffle();
    if (cache) {
      for (Eigen::Index i = 0; i < n; ++i) in_a[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i < na;
      PairSums s;
      for (Eigen::Index j = 0; j < n; ++j) {
        const char lj = in_a[static_cast<std::size_t>(j)];
        for (Eigen::Index i = j + 1; i < n; ++i) {
          if (in_a[static_cast<std::size_t>(i)] != lj) continue;
          (lj ? s.aa : s.bb) += 2.0 * dist(i, j);
        }
      }
      s.ab = 0.5 * (total - s.aa - s.bb);
      value = std::max(combine(s, static_cast<double>(na), static_cast<double>(nb)), 0.0);
    } else {
      Eigen::MatrixXd pa(a.rows(), na), pb(a.rows(), nb);
      for (Eigen::Index i = 0; i < na; ++i) pa.col(i) = pooled.col(order[static_cast<std::size_t>(i)]);
      for (Eigen::Index i = 0; i < nb; ++i) pb.col(i) = pooled.col(order[static_cast<std::size_t>(na + i)]);
      value = energy_distance(pa, pb);
    }
  }

  std::vector<double> sorted = null;
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(
      std::ceil((1.0 - level) * static_cast<double>(permutations))) - 1;
  out.threshold = sorted[std::min(idx, sorted.size() - 1)];
  const auto exceed = std::count_if(null.begin(), null.end(),
                                    [&](double v) { return v >= out.statistic; });
  out.p_value = (1.0 + static_cast<double>(exceed)) / (1.0 + permutations);
  return out;
}

double outer_fraction(const Eigen::MatrixXd& samples, int axis, double lo, double hi,
                      double fraction) {
  if (samples.cols() == 0) throw DomainError("outer fraction of an empty batch");
  if (axis < 0 || axis >= samples.rows()) throw DomainError("axis out of range");
  if (!(hi > lo) || !(fraction > 0.0 && fraction < 0.5)) throw DomainError("bad outer range");
  const double band = fraction * (hi - lo);
  const auto row = samples.row(axis);
  const auto hits = (row.array() <= lo + band || row.array() >= hi - band).count();
  return static_cast<double>(hits) / static_cast<double>(samples.cols());
}

}  // namespace vsdm
