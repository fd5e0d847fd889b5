#pragma once

#include "asae/types.hpp"

#include <vector>

namespace asae {

struct TransportPlan {
    Mat gamma;      // K_a x K_b, nonnegative
    double cost;    // sum(gamma .* C)
    Vec marginal_a; // row sums target
    Vec marginal_b; // column sums target
};

struct OtOptions {
    // exact network simplex up to this size, entropic beyond
    Eigen::Index exact_max_size = 1024;
    double sinkhorn_epsilon = 1e-2;
    int sinkhorn_max_iter = 10000;
    double sinkhorn_tol = 1e-6;
};

/// Optimal transport between probability vectors a and b under the given
/// cost matrix. Exact for small instances, entropic beyond.
TransportPlan solve_ot(const Mat& cost, const Vec& a, const Vec& b, const OtOptions& opts = {});

/// OT objective with uniform marginals and pairwise Euclidean atom distances.
double wasserstein_atoms(const Dictionary& da, const Dictionary& db);

/// Euclidean-cost OT distance between two point clouds with uniform marginals.
double wasserstein_points(const Mat& xa, const Mat& xb, const OtOptions& opts = {});

/// Permutation maximizing the total score; perm[i] is the column assigned to
/// row i. Ties resolve to the lexicographically smallest permutation.
std::vector<int> hungarian_match(const Mat& score);

/// For each query row, Euclidean distance to its k-th nearest reference row.
/// With exclude_self, entry i skips reference row i (query set == reference set).
Vec knn_distance(const Mat& queries, const Mat& reference, int k, bool exclude_self = false);

struct ProbeResult {
    double accuracy;
    Vec weights; // last entry is the bias
};

/// Linear logistic regression trained to convergence by full-batch gradient
/// descent; accuracy is measured on the training data (separability probe).
ProbeResult logistic_probe(const Mat& x, const std::vector<int>& y);

/// Multinomial counterpart; returns held-in accuracy (top-1 by default).
double multinomial_probe_accuracy(const Mat& x, const std::vector<int>& y, int n_classes, int top = 1);

struct SpectralQuantities {
    double stable_rank;
    double effective_rank;
};

SpectralQuantities spectral_quantities(const Mat& m);

} // namespace asae
