#pragma once

#include <span>

#include <Eigen/Dense>

#include "vsdm/rng.hpp"

namespace vsdm {

// Per-axis integral over time of the mean absolute second derivative of the
// trajectories. `states[k]` holds all chains (d x chains) at the k-th of a uniform
// sequence of times spaced by h. Second differences at interior nodes are averaged
// over chains and integrated by the trapezoid rule, with the end values taken from
// the neighbouring interior nodes.
Eigen::VectorXd straightness(std::span<const Eigen::MatrixXd> states, double h);

// Single path, d x times.
Eigen::VectorXd straightness(const Eigen::MatrixXd& path, double h);

// 2 E|X - Y| - E|X - X'| - E|Y - Y'| with every expectation taken over all pairs
// (V-statistic), so the value is nonnegative and exactly zero for identical batches.
// Columns are samples.
double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct PermutationTest {
  double statistic = 0.0;
  double threshold = 0.0;  // (1 - level) quantile of the permutation distribution
  double p_value = 1.0;
};

// Energy distance with a label-permutation null distribution.
PermutationTest energy_permutation_test(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                        int permutations, Rng& rng, double level = 0.05);

// Fraction of samples whose `axis` coordinate lies in the outer `fraction` of
// [lo, hi] at either end (or outside it).
double outer_fraction(const Eigen::MatrixXd& samples, int axis, double lo, double hi,
                      double fraction = 0.1);

}  // namespace vsdm
