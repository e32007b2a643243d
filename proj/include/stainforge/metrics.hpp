#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace stainforge {

// Quadratic weighted Cohen's kappa in [-1, 1]. Weights w_ij = (i-j)^2 / (K-1)^2;
// expected counts from the outer product of the sample marginals. Throws
// UndefinedKappa when the expected-disagreement denominator is zero.
double quadratic_kappa(const std::vector<int>& predictions, const std::vector<int>& truths,
                       int n_classes);

struct WilcoxonResult {
    double u_statistic = 0.0; // U for the first sample, midrank ties
    double p_value = 1.0;     // two-sided
    bool exact = false;       // enumeration (n+m <= 12) vs normal approximation
};

// Rank-sum test; exact permutation enumeration for n+m <= 12, otherwise a normal
// approximation with tie correction and continuity correction.
WilcoxonResult wilcoxon_rank_sum(const std::vector<double>& a, const std::vector<double>& b);

struct ProjectionResult {
    std::array<std::vector<double>, 2> components;  // orthonormal directions, length D
    std::vector<std::array<double, 2>> coordinates; // N x 2
    std::array<double, 2> explained{};              // variance fractions, non-increasing
};

// Mean-centered top-2 PCA via symmetric eigendecomposition. Sign convention: the
// largest-magnitude entry of each component is positive.
ProjectionResult pca_project(const std::vector<std::vector<double>>& vectors);

struct ProbeResult {
    double accuracy = 0.0; // 5-fold cross-validated
    double chance = 0.0;   // majority-center share
};

// 5-fold cross-validated accuracy of a multinomial logistic probe predicting the
// center id from frozen features. Lower accuracy = more stain-invariant features.
ProbeResult stain_invariance_probe(const std::vector<std::vector<double>>& features,
                                   const std::vector<int>& center_ids, uint64_t seed = 0);

} // namespace stainforge
