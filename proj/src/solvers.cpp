#include "asae/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace asae {

namespace {

constexpr double kPivotTol = 1e-11;

struct BasisArc {
    int src;
    int snk; // sink index in [0, n)
    double flow;
};

// Transportation-problem network simplex over a spanning-tree basis.
class TransportSimplex {
public:
    TransportSimplex(const Mat& cost, const Vec& a, const Vec& b)
        : c_(cost), m_(static_cast<int>(a.size())), n_(static_cast<int>(b.size())) {
        // tiny perturbation keeps the initial basis nondegenerate
        const double delta = 1e-13;
        ap_ = a;
        bp_ = b;
        for (int i = 0; i < m_; ++i) ap_[i] += delta;
        bp_[n_ - 1] += delta * m_;
        northwest_corner();
    }

    void run() {
        Vec u(m_), v(n_);
        const int max_iter = 2000 * (m_ + n_) + 10000;
        for (int iter = 0; iter < max_iter; ++iter) {
            compute_duals(u, v);
            Mat red = c_;
            red.colwise() -= u;
            red.rowwise() -= v.transpose();
            Eigen::Index ei, ej;
            double rmin = red.minCoeff(&ei, &ej);
            if (rmin >= -kPivotTol) return;
            pivot(static_cast<int>(ei), static_cast<int>(ej));
        }
        throw DataError("transport simplex failed to converge");
    }

    // Re-solve flows on the final tree with the unperturbed marginals.
    Mat extract_plan(const Vec& a, const Vec& b) const {
        int nn = m_ + n_;
        std::vector<double> supply(nn);
        for (int i = 0; i < m_; ++i) supply[i] = a[i];
        for (int j = 0; j < n_; ++j) supply[m_ + j] = b[j];
        std::vector<std::vector<int>> adj(nn);
        for (size_t k = 0; k < basis_.size(); ++k) {
            adj[basis_[k].src].push_back(static_cast<int>(k));
            adj[m_ + basis_[k].snk].push_back(static_cast<int>(k));
        }
        std::vector<int> degree(nn);
        for (int x = 0; x < nn; ++x) degree[x] = static_cast<int>(adj[x].size());
        std::vector<char> arc_done(basis_.size(), 0);
        std::vector<double> flow(basis_.size(), 0.0);
        std::deque<int> leaves;
        for (int x = 0; x < nn; ++x)
            if (degree[x] == 1) leaves.push_back(x);
        while (!leaves.empty()) {
            int x = leaves.front();
            leaves.pop_front();
            int arc = -1;
            for (int k : adj[x])
                if (!arc_done[k]) { arc = k; break; }
            if (arc < 0) continue;
            bool x_is_src = (x < m_);
            int other = x_is_src ? m_ + basis_[static_cast<size_t>(arc)].snk
                                 : basis_[static_cast<size_t>(arc)].src;
            flow[static_cast<size_t>(arc)] = supply[x];
            supply[other] -= supply[x];
            supply[x] = 0.0;
            arc_done[static_cast<size_t>(arc)] = 1;
            if (--degree[other] == 1) leaves.push_back(other);
            degree[x] = 0;
        }
        Mat gamma = Mat::Zero(m_, n_);
        for (size_t k = 0; k < basis_.size(); ++k)
            gamma(basis_[k].src, basis_[k].snk) += std::max(0.0, flow[k]);
        return gamma;
    }

private:
    void northwest_corner() {
        Vec ra = ap_, rb = bp_;
        int i = 0, j = 0;
        while (static_cast<int>(basis_.size()) < m_ + n_ - 1) {
            double f = std::min(ra[i], rb[j]);
            basis_.push_back({i, j, f});
            ra[i] -= f;
            rb[j] -= f;
            if (i < m_ - 1 && (ra[i] <= rb[j] || j == n_ - 1)) ++i;
            else ++j;
        }
    }

    void build_adjacency(std::vector<std::vector<int>>& adj) const {
        adj.assign(static_cast<size_t>(m_ + n_), {});
        for (size_t k = 0; k < basis_.size(); ++k) {
            adj[static_cast<size_t>(basis_[k].src)].push_back(static_cast<int>(k));
            adj[static_cast<size_t>(m_ + basis_[k].snk)].push_back(static_cast<int>(k));
        }
    }

    void compute_duals(Vec& u, Vec& v) const {
        std::vector<std::vector<int>> adj;
        build_adjacency(adj);
        std::vector<char> seen(static_cast<size_t>(m_ + n_), 0);
        std::deque<int> queue{0};
        u[0] = 0.0;
        seen[0] = 1;
        while (!queue.empty()) {
            int x = queue.front();
            queue.pop_front();
            for (int k : adj[static_cast<size_t>(x)]) {
                const BasisArc& arc = basis_[static_cast<size_t>(k)];
                int other = (x == arc.src) ? m_ + arc.snk : arc.src;
                if (seen[static_cast<size_t>(other)]) continue;
                seen[static_cast<size_t>(other)] = 1;
                if (other >= m_) v[other - m_] = c_(arc.src, arc.snk) - u[arc.src];
                else u[other] = c_(arc.src, arc.snk) - v[arc.snk];
                queue.push_back(other);
            }
        }
    }

    void pivot(int ei, int ej) {
        std::vector<std::vector<int>> adj;
        build_adjacency(adj);
        // tree path from source ei to sink node m_+ej
        int nn = m_ + n_;
        std::vector<int> parent_arc(static_cast<size_t>(nn), -1);
        std::vector<int> parent(static_cast<size_t>(nn), -1);
        std::vector<char> seen(static_cast<size_t>(nn), 0);
        std::deque<int> queue{ei};
        seen[static_cast<size_t>(ei)] = 1;
        while (!queue.empty()) {
            int x = queue.front();
            queue.pop_front();
            if (x == m_ + ej) break;
            for (int k : adj[static_cast<size_t>(x)]) {
                const BasisArc& arc = basis_[static_cast<size_t>(k)];
                int other = (x == arc.src) ? m_ + arc.snk : arc.src;
                if (seen[static_cast<size_t>(other)]) continue;
                seen[static_cast<size_t>(other)] = 1;
                parent[static_cast<size_t>(other)] = x;
                parent_arc[static_cast<size_t>(other)] = k;
                queue.push_back(other);
            }
        }
        // walk back collecting arcs; alternate signs starting with - next to ei
        std::vector<int> path;
        for (int x = m_ + ej; x != ei; x = parent[static_cast<size_t>(x)])
            path.push_back(parent_arc[static_cast<size_t>(x)]);
        std::reverse(path.begin(), path.end());
        double theta = std::numeric_limits<double>::infinity();
        int leaving = -1;
        for (size_t p = 0; p < path.size(); ++p) {
            if (p % 2 == 0) { // arcs at even positions lose flow
                double f = basis_[static_cast<size_t>(path[p])].flow;
                if (f < theta) {
                    theta = f;
                    leaving = path[p];
                }
            }
        }
        for (size_t p = 0; p < path.size(); ++p)
            basis_[static_cast<size_t>(path[p])].flow += (p % 2 == 0) ? -theta : theta;
        basis_[static_cast<size_t>(leaving)] = {ei, ej, theta};
    }

    const Mat& c_;
    int m_, n_;
    Vec ap_, bp_;
    std::vector<BasisArc> basis_;
};

Mat sinkhorn_plan(const Mat& cost, const Vec& a, const Vec& b, const OtOptions& opts) {
    const Eigen::Index m = a.size(), n = b.size();
    Mat kmat = (-cost / opts.sinkhorn_epsilon).array().exp();
    Vec u = Vec::Ones(m), v = Vec::Ones(n);
    for (int it = 0; it < opts.sinkhorn_max_iter; ++it) {
        Vec kv = kmat * v;
        u = a.array() / kv.array().max(1e-300);
        Vec ktu = kmat.transpose() * u;
        v = b.array() / ktu.array().max(1e-300);
        if (it % 10 == 9) {
            Vec row = (u.array() * (kmat * v).array()).matrix();
            if ((row - a).lpNorm<1>() < opts.sinkhorn_tol) break;
        }
    }
    Mat gamma = u.asDiagonal() * kmat * v.asDiagonal();
    // round onto the transport polytope so the marginals hold exactly
    Vec r = gamma.rowwise().sum();
    for (Eigen::Index i = 0; i < m; ++i)
        if (r[i] > a[i]) gamma.row(i) *= a[i] / r[i];
    Vec ccol = gamma.colwise().sum();
    for (Eigen::Index j = 0; j < n; ++j)
        if (ccol[j] > b[j]) gamma.col(j) *= b[j] / ccol[j];
    Vec ea = a - gamma.rowwise().sum();
    Vec eb = b - gamma.colwise().sum().transpose();
    double mass = ea.lpNorm<1>();
    if (mass > 1e-300) gamma += (ea * eb.transpose()) / mass;
    return gamma;
}

} // namespace

TransportPlan solve_ot(const Mat& cost, const Vec& a, const Vec& b, const OtOptions& opts) {
    if (cost.rows() != a.size() || cost.cols() != b.size())
        throw DataError("cost matrix shape does not match marginals");
    if (!cost.allFinite()) throw DataError("cost matrix must be finite");
    if (a.minCoeff() < 0.0 || b.minCoeff() < 0.0 || std::abs(a.sum() - b.sum()) > 1e-9)
        throw DataError("infeasible marginals");

    TransportPlan plan;
    plan.marginal_a = a;
    plan.marginal_b = b;
    if (std::max(a.size(), b.size()) <= opts.exact_max_size) {
        TransportSimplex simplex(cost, a, b);
        simplex.run();
        plan.gamma = simplex.extract_plan(a, b);
    } else {
        plan.gamma = sinkhorn_plan(cost, a, b, opts);
    }
    plan.cost = (plan.gamma.array() * cost.array()).sum();
    return plan;
}

double wasserstein_atoms(const Dictionary& da, const Dictionary& db) {
    if (da.dim() != db.dim()) throw DataError("dictionaries must share d");
    return wasserstein_points(da.atoms(), db.atoms());
}

double wasserstein_points(const Mat& xa, const Mat& xb, const OtOptions& opts) {
    const Eigen::Index m = xa.rows(), n = xb.rows();
    Mat cost(m, n);
    Vec na = xa.rowwise().squaredNorm();
    Vec nb = xb.rowwise().squaredNorm();
    cost = (na.replicate(1, n) + nb.transpose().replicate(m, 1) - 2.0 * xa * xb.transpose())
               .array()
               .max(0.0)
               .sqrt();
    Vec a = Vec::Constant(m, 1.0 / static_cast<double>(m));
    Vec b = Vec::Constant(n, 1.0 / static_cast<double>(n));
    return solve_ot(cost, a, b, opts).cost;
}

namespace {

// Kuhn augmenting path over an admissibility predicate.
bool try_augment(int row, const std::vector<std::vector<int>>& cand, std::vector<int>& col_owner,
                 std::vector<char>& visited) {
    for (int j : cand[static_cast<size_t>(row)]) {
        if (visited[static_cast<size_t>(j)]) continue;
        visited[static_cast<size_t>(j)] = 1;
        if (col_owner[static_cast<size_t>(j)] < 0 ||
            try_augment(col_owner[static_cast<size_t>(j)], cand, col_owner, visited)) {
            col_owner[static_cast<size_t>(j)] = row;
            return true;
        }
    }
    return false;
}

} // namespace

std::vector<int> hungarian_match(const Mat& score) {
    const int n = static_cast<int>(score.rows());
    if (score.rows() != score.cols()) throw DataError("hungarian_match requires a square matrix");
    if (!score.allFinite()) throw DataError("hungarian_match requires finite scores");

    // Jonker-style shortest augmenting paths on the minimization form.
    Mat cost = -score;
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            int i0 = p[static_cast<size_t>(j0)], j1 = 0;
            double delta = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    // Complementary slackness: optimal assignments live on tight arcs. Pick the
    // lexicographically smallest perfect matching within that graph.
    double scale = 1.0 + score.cwiseAbs().maxCoeff();
    double tol = 1e-9 * scale;
    std::vector<std::vector<int>> tight(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (cost(i, j) - u[static_cast<size_t>(i) + 1] - v[static_cast<size_t>(j) + 1] <= tol)
                tight[static_cast<size_t>(i)].push_back(j);

    std::vector<int> perm(static_cast<size_t>(n), -1);
    std::vector<char> col_taken(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        for (int j : tight[static_cast<size_t>(i)]) {
            if (col_taken[static_cast<size_t>(j)]) continue;
            // feasibility: can rows i+1..n-1 still be matched if i takes j?
            std::vector<char> fixed(static_cast<size_t>(n), 0);
            for (int r = 0; r < i; ++r) fixed[static_cast<size_t>(perm[static_cast<size_t>(r)])] = 1;
            fixed[static_cast<size_t>(j)] = 1;
            std::vector<int> col_owner(static_cast<size_t>(n), -1);
            bool ok = true;
            for (int r = i + 1; r < n && ok; ++r) {
                std::vector<char> visited = fixed; // fixed columns are off limits
                ok = try_augment(r, tight, col_owner, visited);
            }
            if (ok) {
                perm[static_cast<size_t>(i)] = j;
                col_taken[static_cast<size_t>(j)] = 1;
                break;
            }
        }
        if (perm[static_cast<size_t>(i)] < 0) throw DataError("hungarian_match internal failure");
    }
    return perm;
}

Vec knn_distance(const Mat& queries, const Mat& reference, int k, bool exclude_self) {
    const Eigen::Index nq = queries.rows(), nr = reference.rows();
    Eigen::Index avail = exclude_self ? nr - 1 : nr;
    if (k < 1 || k > avail) throw DataError("knn_distance: k out of range");
    Vec out(nq);
    Vec rn = reference.rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < nq; ++i) {
        Vec d2 = rn - 2.0 * (reference * queries.row(i).transpose());
        d2.array() += queries.row(i).squaredNorm();
        std::vector<double> ds;
        ds.reserve(static_cast<size_t>(nr));
        for (Eigen::Index j = 0; j < nr; ++j) {
            if (exclude_self && j == i) continue;
            ds.push_back(std::max(0.0, d2[j]));
        }
        std::nth_element(ds.begin(), ds.begin() + (k - 1), ds.end());
        out[i] = std::sqrt(ds[static_cast<size_t>(k - 1)]);
    }
    return out;
}

ProbeResult logistic_probe(const Mat& x, const std::vector<int>& y) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (static_cast<Eigen::Index>(y.size()) != n) throw DataError("labels/rows mismatch");
    bool has0 = false, has1 = false;
    for (int v : y) (v ? has1 : has0) = true;
    if (!has0 || !has1) throw DataError("logistic_probe requires both classes");

    Mat xb(n, d + 1);
    xb.leftCols(d) = x;
    xb.col(d).setOnes();
    Vec target(n);
    for (Eigen::Index i = 0; i < n; ++i) target[i] = y[static_cast<size_t>(i)] ? 1.0 : -1.0;

    double lips = 0.25 * xb.rowwise().squaredNorm().mean() + 1e-12;
    double lr = 2.0 / lips;
    Vec w = Vec::Zero(d + 1);
    for (int it = 0; it < 3000; ++it) {
        Vec margin = (xb * w).array() * target.array();
        Vec sig = (1.0 / (1.0 + margin.array().exp())).matrix(); // sigma(-m)
        Vec grad = -(xb.transpose() * (sig.array() * target.array()).matrix()) / static_cast<double>(n);
        w -= lr * grad;
        if (grad.norm() < 1e-10) break;
    }
    Vec scores = xb * w;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        acc += ((scores[i] > 0.0) == (y[static_cast<size_t>(i)] == 1)) ? 1.0 : 0.0;
    return {acc / static_cast<double>(n), w};
}

double multinomial_probe_accuracy(const Mat& x, const std::vector<int>& y, int n_classes, int top) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (n_classes < 2) throw DataError("multinomial probe requires >= 2 classes");
    Mat xb(n, d + 1);
    xb.leftCols(d) = x;
    xb.col(d).setOnes();
    Mat w = Mat::Zero(n_classes, d + 1);
    double lips = 0.5 * xb.rowwise().squaredNorm().mean() + 1e-12;
    double lr = 2.0 / lips;
    for (int it = 0; it < 1500; ++it) {
        Mat logits = xb * w.transpose(); // n x C
        Mat probs = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
        probs.array().colwise() /= probs.rowwise().sum().array();
        for (Eigen::Index i = 0; i < n; ++i) probs(i, y[static_cast<size_t>(i)]) -= 1.0;
        Mat grad = (probs.transpose() * xb) / static_cast<double>(n);
        w -= lr * grad;
        if (grad.norm() < 1e-9) break;
    }
    Mat logits = xb * w.transpose();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<int> order(static_cast<size_t>(n_classes));
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + top, order.end(),
                          [&](int a, int b) { return logits(i, a) > logits(i, b); });
        for (int t = 0; t < top; ++t)
            if (order[static_cast<size_t>(t)] == y[static_cast<size_t>(i)]) {
                acc += 1.0;
                break;
            }
    }
    return acc / static_cast<double>(n);
}

SpectralQuantities spectral_quantities(const Mat& m) {
    if (m.norm() == 0.0) throw DataError("spectral_quantities of a zero matrix");
    Eigen::BDCSVD<Mat> svd(m);
    Vec sigma = svd.singularValues();
    double smax2 = sigma[0] * sigma[0];
    double sum2 = sigma.squaredNorm();
    double sum1 = sigma.sum();
    double entropy = 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        double p = sigma[i] / sum1;
        if (p > 0.0) entropy -= p * std::log(p);
    }
    return {sum2 / smax2, std::exp(entropy)};
}

} // namespace asae
