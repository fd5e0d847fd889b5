#include "asae/interventions.hpp"

#include "asae/rng.hpp"
#include "asae/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace asae {

GapRemovalKind gap_removal_kind_from_string(const std::string& s) {
    if (s == "bimodal_filter") return GapRemovalKind::bimodal_filter;
    if (s == "center") return GapRemovalKind::center;
    if (s == "shift") return GapRemovalKind::shift;
    if (s == "random_shift") return GapRemovalKind::random_shift;
    if (s == "project_mean") return GapRemovalKind::project_mean;
    if (s == "project_delta") return GapRemovalKind::project_delta;
    if (s == "project_span") return GapRemovalKind::project_span;
    throw DataError("unknown gap-removal method: " + s);
}

std::string to_string(GapRemovalKind kind) {
    switch (kind) {
        case GapRemovalKind::bimodal_filter: return "bimodal_filter";
        case GapRemovalKind::center: return "center";
        case GapRemovalKind::shift: return "shift";
        case GapRemovalKind::random_shift: return "random_shift";
        case GapRemovalKind::project_mean: return "project_mean";
        case GapRemovalKind::project_delta: return "project_delta";
        case GapRemovalKind::project_span: return "project_span";
    }
    throw DataError("unknown gap-removal kind");
}

std::string to_string(QueryVariant v) {
    switch (v) {
        case QueryVariant::classic: return "classic";
        case QueryVariant::sae_restricted: return "sae_restricted";
        case QueryVariant::baseline_src: return "baseline_src";
        case QueryVariant::baseline_delta: return "baseline_delta";
    }
    throw DataError("unknown query variant");
}

Mat filter_unimodal(const Mat& z, const BinaryMask& delta, const Dictionary& dict) {
    if (z.cols() != delta.size() || z.cols() != dict.size())
        throw DataError("filter_unimodal: mask/code/dictionary size mismatch");
    Mat masked = z;
    for (Eigen::Index k = 0; k < masked.cols(); ++k)
        if (!delta[k]) masked.col(k).setZero();
    return masked * dict.atoms();
}

Mat filter_unimodal(const SparseCode& z, const BinaryMask& delta, const Dictionary& dict) {
    return filter_unimodal(z.to_dense(), delta, dict);
}

GapRemovalMethod fit_gap_removal(GapRemovalKind kind, const SaeModel& model,
                                 const ModalityStructure& ms, const EmbeddingDataset& reference,
                                 uint64_t seed, const Mat& span_directions) {
    reference.validate();
    GapRemovalMethod m;
    m.kind = kind;
    m.model = model;
    m.delta = ms.delta;
    Dictionary dict(normalize_rows(model.dict));
    Mat ihat = encode(model, reference.domain_a) * dict.atoms();
    Mat that = encode(model, reference.domain_b) * dict.atoms();
    m.mu_img = ihat.colwise().mean();
    m.mu_txt = that.colwise().mean();
    if (kind == GapRemovalKind::random_shift) {
        Rng rng(seed);
        Vec r(reference.dim());
        for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = rng.normal();
        double nrm = r.norm();
        if (nrm == 0) throw DataError("fit_gap_removal: degenerate random direction");
        m.direction = r / nrm;
    } else if (kind == GapRemovalKind::project_delta) {
        Vec d = m.mu_img - m.mu_txt;
        double nrm = d.norm();
        if (nrm == 0) throw DataError("fit_gap_removal: zero mean difference");
        m.direction = d / nrm;
    } else if (kind == GapRemovalKind::project_span) {
        if (span_directions.rows() == 0)
            throw DataError("fit_gap_removal: project_span needs at least one direction");
        // orthonormalize so that sequential projection removes the whole span
        Mat basis(span_directions.rows(), span_directions.cols());
        Eigen::Index kept = 0;
        for (Eigen::Index i = 0; i < span_directions.rows(); ++i) {
            Vec v = span_directions.row(i).transpose();
            for (Eigen::Index j = 0; j < kept; ++j)
                v -= basis.row(j).dot(span_directions.row(i)) * basis.row(j).transpose();
            double nrm = v.norm();
            if (nrm > 1e-10) basis.row(kept++) = v.transpose() / nrm;
        }
        if (kept == 0) throw DataError("fit_gap_removal: span directions are degenerate");
        m.span = basis.topRows(kept);
    }
    m.fitted = true;
    return m;
}

namespace {

Mat project_out(const Mat& x, const Vec& unit) {
    return x - (x * unit) * unit.transpose();
}

} // namespace

EmbeddingDataset apply_gap_removal(const GapRemovalMethod& method, const EmbeddingDataset& ds) {
    if (!method.fitted) throw DataError("apply_gap_removal: method not fitted");
    ds.validate();
    Dictionary dict(normalize_rows(method.model.dict));
    Mat zi = encode(method.model, ds.domain_a);
    Mat zt = encode(method.model, ds.domain_b);
    EmbeddingDataset out;
    out.meta = to_string(method.kind);
    switch (method.kind) {
        case GapRemovalKind::bimodal_filter:
            out.domain_a = filter_unimodal(zi, method.delta, dict);
            out.domain_b = filter_unimodal(zt, method.delta, dict);
            break;
        case GapRemovalKind::center:
            out.domain_a = (zi * dict.atoms()).rowwise() - method.mu_img.transpose();
            out.domain_b = (zt * dict.atoms()).rowwise() - method.mu_txt.transpose();
            break;
        case GapRemovalKind::shift: {
            Vec common = 0.5 * (method.mu_img + method.mu_txt);
            out.domain_a = (zi * dict.atoms()).rowwise() + (common - method.mu_img).transpose();
            out.domain_b = (zt * dict.atoms()).rowwise() + (common - method.mu_txt).transpose();
            break;
        }
        case GapRemovalKind::random_shift:
            out.domain_a =
                (zi * dict.atoms()).rowwise() + (method.direction - method.mu_img).transpose();
            out.domain_b =
                (zt * dict.atoms()).rowwise() + (method.direction - method.mu_txt).transpose();
            break;
        case GapRemovalKind::project_mean: {
            Vec ui = method.mu_img, ut = method.mu_txt;
            double ni = ui.norm(), nt = ut.norm();
            if (ni == 0 || nt == 0) throw DataError("apply_gap_removal: zero modality mean");
            out.domain_a = project_out(zi * dict.atoms(), Vec(ui / ni));
            out.domain_b = project_out(zt * dict.atoms(), Vec(ut / nt));
            break;
        }
        case GapRemovalKind::project_delta:
            out.domain_a = project_out(zi * dict.atoms(), method.direction);
            out.domain_b = project_out(zt * dict.atoms(), method.direction);
            break;
        case GapRemovalKind::project_span: {
            out.domain_a = zi * dict.atoms();
            out.domain_b = zt * dict.atoms();
            for (Eigen::Index r = 0; r < method.span.rows(); ++r) {
                Vec u = method.span.row(r).transpose();
                out.domain_a = project_out(out.domain_a, u);
                out.domain_b = project_out(out.domain_b, u);
            }
            break;
        }
    }
    return out;
}

double ood_score(const Mat& queries, const Mat& reference, int k) {
    Eigen::Index m = std::min(queries.rows(), reference.rows());
    if (m <= k) throw DataError("ood_score: sets too small for k");
    Mat q = queries.topRows(m), r = reference.topRows(m);
    Vec dq = knn_distance(q, r, k, false);
    Vec dr = knn_distance(r, r, k, true);
    // best single threshold over midpoints; larger distance predicts "query"
    std::vector<std::pair<double, int>> pts; // (distance, label: 1=query)
    pts.reserve(static_cast<size_t>(2 * m));
    for (Eigen::Index i = 0; i < m; ++i) {
        pts.push_back({dr[i], 0});
        pts.push_back({dq[i], 1});
    }
    std::sort(pts.begin(), pts.end());
    Eigen::Index n = static_cast<Eigen::Index>(pts.size());
    // below[i] = queries among the first i points (predicted reference if d <= t)
    double best = 0.5;
    Eigen::Index q_below = 0;
    for (Eigen::Index i = 0; i <= n; ++i) {
        // threshold between pts[i-1] and pts[i]
        bool boundary = i == 0 || i == n || pts[static_cast<size_t>(i)].first > pts[static_cast<size_t>(i - 1)].first;
        if (boundary) {
            double refs_below = static_cast<double>(i - q_below);
            double queries_above = static_cast<double>(m - q_below);
            double acc = (refs_below + queries_above) / static_cast<double>(n);
            best = std::max({best, acc, 1.0 - acc});
        }
        if (i < n && pts[static_cast<size_t>(i)].second == 1) ++q_below;
    }
    return best;
}

GapReport gap_report(const EmbeddingDataset& ds_before, const EmbeddingDataset& ds_after,
                     uint64_t seed) {
    ds_before.validate();
    ds_after.validate();
    GapReport rep;
    Vec mu_i = ds_after.domain_a.colwise().mean();
    Vec mu_t = ds_after.domain_b.colwise().mean();
    rep.dim = (mu_i - mu_t).norm();

    // OT between the clouds, averaged over 3 subsample draws of <= 2048 points
    Rng rng(seed);
    Eigen::Index cap = 2048;
    double w = 0.0;
    int reps = ds_after.rows() > cap ? 3 : 1;
    for (int rep_i = 0; rep_i < reps; ++rep_i) {
        Rng r = rng.split(static_cast<uint64_t>(rep_i));
        auto pick = [&](const Mat& x, Rng stream) {
            if (x.rows() <= cap) return x;
            std::vector<Eigen::Index> idx(static_cast<size_t>(x.rows()));
            std::iota(idx.begin(), idx.end(), 0);
            for (size_t i = idx.size() - 1; i > 0; --i)
                std::swap(idx[i], idx[stream.uniform_index(i + 1)]);
            Mat out(cap, x.cols());
            for (Eigen::Index i = 0; i < cap; ++i) out.row(i) = x.row(idx[static_cast<size_t>(i)]);
            return out;
        };
        w += wasserstein_points(pick(ds_after.domain_a, r.split(0)),
                                pick(ds_after.domain_b, r.split(1)));
    }
    rep.wasserstein = w / reps;

    Mat x(2 * ds_after.rows(), ds_after.dim());
    x << ds_after.domain_a, ds_after.domain_b;
    std::vector<int> y(static_cast<size_t>(2 * ds_after.rows()), 0);
    for (Eigen::Index i = ds_after.rows(); i < 2 * ds_after.rows(); ++i)
        y[static_cast<size_t>(i)] = 1;
    rep.separability = logistic_probe(x, y).accuracy;
    rep.ood = ood_score(ds_after.domain_b, ds_after.domain_a);
    rep.recall_before = recall_at_k(ds_before.domain_a, ds_before.domain_b, 1);
    rep.recall_after = recall_at_k(ds_after.domain_a, ds_after.domain_b, 1);
    return rep;
}

std::vector<QuerySet> build_queries(const Mat& src, const Mat& delta, const SaeModel& model,
                                    const ModalityStructure& ms) {
    if (src.rows() != delta.rows()) throw DataError("build_queries: unpaired src/delta rows");
    Dictionary dict(normalize_rows(model.dict));
    Mat src_hat = encode(model, src) * dict.atoms();
    Mat z_delta = encode(model, delta);
    Mat delta_hat = z_delta * dict.atoms();
    Mat delta_bimodal = filter_unimodal(z_delta, ms.delta, dict);
    std::vector<QuerySet> out;
    out.push_back({src_hat + delta_hat, QueryVariant::classic});
    out.push_back({src_hat + delta_bimodal, QueryVariant::sae_restricted});
    out.push_back({src_hat, QueryVariant::baseline_src});
    out.push_back({delta_hat, QueryVariant::baseline_delta});
    return out;
}

namespace {

// Fraction of rows whose true target index is in the top k against every
// candidate; single direction, full candidate set.
double full_set_recall(const Mat& q, const Mat& targets, int k) {
    Mat c = normalize_rows(q) * normalize_rows(targets).transpose();
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        double t = c(i, i);
        int better = 0;
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
            if (j == i) continue;
            if (c(i, j) > t || (c(i, j) == t && j < i)) ++better;
        }
        if (better < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(c.rows());
}

} // namespace

double retrieval_recall(const QuerySet& q, const Mat& targets) {
    if (q.q.rows() != targets.rows()) throw DataError("retrieval_recall: unpaired targets");
    return 0.5 * (full_set_recall(q.q, targets, 10) + full_set_recall(q.q, targets, 50));
}

namespace {

std::vector<int> cosine_ranking(const Vec& v, const Mat& candidates) {
    Vec scores = candidates * v;
    double nrm = v.norm();
    if (nrm > 0) scores /= nrm;
    std::vector<int> order(static_cast<size_t>(candidates.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    return order;
}

} // namespace

bool check_constant_offset_invariance(const Vec& content, const Vec& modality,
                                      const Mat& candidates) {
    return cosine_ranking(content + modality, candidates) == cosine_ranking(content, candidates);
}

bool check_flip_characterization(const Vec& content, const Vec& modality, const Mat& candidates) {
    Vec v = content + modality;
    double nv = v.norm(), nc = content.norm();
    if (nv == 0 || nc == 0) throw DataError("check_flip_characterization: zero vector");
    Vec obs = candidates * v / nv;
    Vec cnt = candidates * content / nc;
    for (Eigen::Index i = 0; i < candidates.rows(); ++i)
        for (Eigen::Index j = i + 1; j < candidates.rows(); ++j) {
            double dc = content.dot(candidates.row(i) - candidates.row(j));
            double dm = modality.dot(candidates.row(i) - candidates.row(j));
            if (dc == 0.0 || dc + dm == 0.0) continue; // ties excluded
            bool flip = (obs[i] - obs[j] > 0) != (cnt[i] - cnt[j] > 0);
            bool predicted = dc * (dc + dm) < 0;
            if (flip != predicted) return false;
        }
    return true;
}

} // namespace asae
