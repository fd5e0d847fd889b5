#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "asae/rng.hpp"
#include "asae/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace asae;

namespace {

Mat random_mat(Rng& r, Eigen::Index n, Eigen::Index m) {
    Mat x(n, m);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal();
    return x;
}

// With uniform marginals and n = m the optimum is a permutation (Birkhoff),
// so exhaustive search over permutations is an exact oracle.
double ot_permutation_oracle(const Mat& cost) {
    std::vector<int> perm(static_cast<size_t>(cost.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0;
        for (size_t i = 0; i < perm.size(); ++i) c += cost(static_cast<Eigen::Index>(i), perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(cost.rows());
}

std::vector<int> hungarian_oracle(const Mat& score) {
    std::vector<int> perm(static_cast<size_t>(score.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_score = -std::numeric_limits<double>::infinity();
    do {
        double s = 0;
        for (size_t i = 0; i < perm.size(); ++i) s += score(static_cast<Eigen::Index>(i), perm[i]);
        // strictly better, or equal and lexicographically smaller
        if (s > best_score + 1e-12) {
            best_score = s;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

TEST_CASE("exact ot matches the permutation oracle on uniform marginals") {
    Rng r(21);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Index n = 5;
        Mat cost = random_mat(r, n, n).cwiseAbs();
        Vec u = Vec::Constant(n, 1.0 / static_cast<double>(n));
        TransportPlan plan = solve_ot(cost, u, u);
        CHECK(plan.cost == doctest::Approx(ot_permutation_oracle(cost)).epsilon(1e-9));
        CHECK((plan.gamma.rowwise().sum() - u).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((plan.gamma.colwise().sum().transpose() - u).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(plan.gamma.minCoeff() >= -1e-12);
    }
}

TEST_CASE("exact ot satisfies non-uniform marginals and reports its own cost") {
    Rng r(22);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::Index n = 6, m = 4;
        Mat cost = random_mat(r, n, m).cwiseAbs();
        Vec a(n), b(m);
        for (Eigen::Index i = 0; i < n; ++i) a[i] = 0.1 + r.uniform();
        for (Eigen::Index j = 0; j < m; ++j) b[j] = 0.1 + r.uniform();
        a /= a.sum();
        b /= b.sum();
        TransportPlan plan = solve_ot(cost, a, b);
        CHECK((plan.gamma.rowwise().sum() - a).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((plan.gamma.colwise().sum().transpose() - b).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(plan.cost == doctest::Approx(plan.gamma.cwiseProduct(cost).sum()).epsilon(1e-12));
    }
}

TEST_CASE("wasserstein_atoms: zero for identical and permuted dictionaries") {
    Rng r(31);
    Dictionary da(normalize_rows(random_mat(r, 6, 8)));
    Mat permuted = da.atoms();
    permuted.row(0).swap(permuted.row(3));
    permuted.row(1).swap(permuted.row(5));
    CHECK(wasserstein_atoms(da, da) < 1e-8);
    CHECK(wasserstein_atoms(da, Dictionary(permuted)) < 1e-8);

    // one sign-flipped atom of six: mass 1/6 moved across distance 2
    Mat flipped = da.atoms();
    flipped.row(2) = -flipped.row(2);
    CHECK(wasserstein_atoms(da, Dictionary(flipped)) == doctest::Approx(2.0 / 6.0).epsilon(1e-6));
}

TEST_CASE("wasserstein_points on separated clouds equals the offset") {
    Mat a = Mat::Zero(8, 3);
    Mat b = Mat::Zero(8, 3);
    b.col(0).setConstant(5.0);
    CHECK(wasserstein_points(a, b) == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(wasserstein_points(a, a) == doctest::Approx(0.0));
}

TEST_CASE("hungarian_match equals exhaustive search with lexicographic ties") {
    Rng r(41);
    for (int trial = 0; trial < 300; ++trial) {
        Eigen::Index n = 1 + static_cast<Eigen::Index>(r.uniform_index(7));
        Mat score = random_mat(r, n, n);
        CHECK(hungarian_match(score) == hungarian_oracle(score));
    }
    // all-tied scores resolve to the identity
    Mat flat = Mat::Constant(4, 4, 0.5);
    CHECK(hungarian_match(flat) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("knn_distance hand instance and self exclusion") {
    Mat ref(3, 1);
    ref << 0.0, 1.0, 10.0;
    Mat q(1, 1);
    q << 0.2;
    Vec d1 = knn_distance(q, ref, 1);
    CHECK(d1[0] == doctest::Approx(0.2));
    Vec d2 = knn_distance(q, ref, 2);
    CHECK(d2[0] == doctest::Approx(0.8));

    Vec self = knn_distance(ref, ref, 1, true);
    CHECK(self[0] == doctest::Approx(1.0));
    CHECK(self[2] == doctest::Approx(9.0));
    Vec noex = knn_distance(ref, ref, 1, false);
    CHECK(noex.maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("logistic probe separates what is separable") {
    Rng r(51);
    Mat x(40, 2);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
        bool pos = i % 2 == 0;
        x(i, 0) = (pos ? 3.0 : -3.0) + 0.1 * r.normal();
        x(i, 1) = r.normal();
        y[static_cast<size_t>(i)] = pos ? 1 : 0;
    }
    CHECK(logistic_probe(x, y).accuracy == doctest::Approx(1.0));

    // identical clouds cannot be separated much beyond chance
    Mat same = random_mat(r, 200, 3);
    std::vector<int> labels(200);
    for (int i = 0; i < 200; ++i) labels[static_cast<size_t>(i)] = i % 2;
    CHECK(logistic_probe(same, labels).accuracy < 0.65);
}

TEST_CASE("multinomial probe reaches 1 on separable classes") {
    Mat x(30, 3);
    std::vector<int> y(30);
    Rng r(61);
    for (int i = 0; i < 30; ++i) {
        int c = i % 3;
        x.row(i).setZero();
        x(i, c) = 4.0 + 0.1 * r.normal();
        y[static_cast<size_t>(i)] = c;
    }
    CHECK(multinomial_probe_accuracy(x, y, 3) == doctest::Approx(1.0));
}

TEST_CASE("spectral quantities match analytic values on diagonal matrices") {
    Mat m = Mat::Zero(3, 3);
    m(0, 0) = 3.0;
    m(1, 1) = 2.0;
    m(2, 2) = 1.0;
    SpectralQuantities sq = spectral_quantities(m);
    CHECK(sq.stable_rank == doctest::Approx((9.0 + 4.0 + 1.0) / 9.0).epsilon(1e-9));
    double s = 6.0;
    double h = 0.0;
    for (double v : {3.0, 2.0, 1.0}) {
        double p = v / s;
        h -= p * std::log(p);
    }
    CHECK(sq.effective_rank == doctest::Approx(std::exp(h)).epsilon(1e-9));

    // identity: both ranks equal the dimension
    SpectralQuantities id = spectral_quantities(Mat::Identity(4, 4));
    CHECK(id.stable_rank == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(id.effective_rank == doctest::Approx(4.0).epsilon(1e-9));
}
