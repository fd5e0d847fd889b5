#include "asae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace asae {

namespace {

// Top-k column indices of a row by value, ties to the lower index.
bool in_top_k(const Vec& scores, Eigen::Index true_idx, int k) {
    double t = scores[true_idx];
    int better = 0;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
        if (j == true_idx) continue;
        if (scores[j] > t || (scores[j] == t && j < true_idx)) {
            if (++better >= k) return false;
        }
    }
    return true;
}

} // namespace

ReconstructionMetrics reconstruction_metrics(const EmbeddingDataset& ds, const SaeModel& model) {
    ds.validate();
    Dictionary dict(normalize_rows(model.dict));
    Mat x(2 * ds.rows(), ds.dim());
    x << ds.domain_a, ds.domain_b;
    Mat z(2 * ds.rows(), model.atom_count());
    z << encode(model, ds.domain_a), encode(model, ds.domain_b);
    Mat x_hat = z * dict.atoms();

    ReconstructionMetrics m;
    Vec mean = x.colwise().mean();
    double r2_sum = 0.0;
    Eigen::Index r2_n = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double err = (x.row(i) - x_hat.row(i)).squaredNorm();
        double dev = (x.row(i) - mean.transpose()).squaredNorm();
        m.mse += err;
        if (dev > 0) {
            r2_sum += 1.0 - err / dev;
            ++r2_n;
        }
    }
    m.mse /= static_cast<double>(x.rows());
    m.r2 = r2_n > 0 ? r2_sum / static_cast<double>(r2_n) : 1.0;
    m.l0 = static_cast<double>((z.array() != 0.0).count()) / static_cast<double>(z.rows());
    m.l1 = z.array().abs().sum() / static_cast<double>(z.rows());
    return m;
}

EnergyProfile energy_profile(const Mat& z_img, const Mat& z_txt) {
    if (z_img.cols() != z_txt.cols()) throw DataError("energy_profile: atom-count mismatch");
    EnergyProfile ep;
    auto one = [](const Mat& z, Vec& e, Vec& f) {
        e = z.array().square().colwise().mean().transpose();
        f = (z.array() != 0.0).cast<double>().colwise().mean().transpose();
    };
    one(z_img, ep.e_img, ep.freq_img);
    one(z_txt, ep.e_txt, ep.freq_txt);
    ep.e_mean = 0.5 * (ep.e_img + ep.e_txt);
    return ep;
}

EnergyProfile energy_profile(const SparseCode& z_img, const SparseCode& z_txt) {
    if (z_img.cols != z_txt.cols) throw DataError("energy_profile: atom-count mismatch");
    EnergyProfile ep;
    auto one = [](const SparseCode& z, Vec& e, Vec& f) {
        e = Vec::Zero(z.cols);
        f = Vec::Zero(z.cols);
        for (const auto& row : z.rows)
            for (const auto& entry : row) {
                e[entry.index] += entry.value * entry.value;
                f[entry.index] += 1.0;
            }
        double n = static_cast<double>(z.size());
        if (n > 0) { e /= n; f /= n; }
    };
    one(z_img, ep.e_img, ep.freq_img);
    one(z_txt, ep.e_txt, ep.freq_txt);
    ep.e_mean = 0.5 * (ep.e_img + ep.e_txt);
    return ep;
}

ModalityStructure modality_structure(const EnergyProfile& ep, double tau) {
    if (!(tau > 0.0 && tau < 0.5)) throw DataError("modality_structure: tau must lie in (0, 0.5)");
    ModalityStructure ms;
    ms.tau = tau;
    Eigen::Index k = ep.e_img.size();
    ms.mu = Vec::Constant(k, 0.5); // zero-energy atoms count as bimodal
    ms.delta.bits.assign(static_cast<size_t>(k), 0);
    ms.delta_img.bits.assign(static_cast<size_t>(k), 0);
    ms.delta_txt.bits.assign(static_cast<size_t>(k), 0);
    for (Eigen::Index i = 0; i < k; ++i) {
        double s = ep.e_img[i] + ep.e_txt[i];
        if (s > 0) ms.mu[i] = ep.e_img[i] / s;
        if (ms.mu[i] > 1.0 - tau) ms.delta_img.bits[static_cast<size_t>(i)] = 1;
        else if (ms.mu[i] < tau) ms.delta_txt.bits[static_cast<size_t>(i)] = 1;
        else ms.delta.bits[static_cast<size_t>(i)] = 1;
    }
    return ms;
}

BridgeMatrix bridge_sigma(const Mat& z_img, const Mat& z_txt, const Dictionary& dict) {
    if (z_img.rows() != z_txt.rows()) throw DataError("bridge_sigma: unpaired codes");
    if (z_img.cols() != dict.size()) throw DataError("bridge_sigma: code/dictionary size mismatch");
    Mat sigma = z_img.transpose() * z_txt / static_cast<double>(z_img.rows());
    BridgeMatrix b;
    b.kind = BridgeKind::sigma;
    b.values = sigma.cwiseProduct(dict.atoms() * dict.atoms().transpose());
    return b;
}

GammaBridge bridge_gamma(const EnergyProfile& ep, const Dictionary& dict, const OtOptions& opts) {
    double si = ep.e_img.sum(), st = ep.e_txt.sum();
    if (si <= 0 || st <= 0) throw DataError("bridge_gamma: a domain has zero total energy");
    Vec a = ep.e_img / si, b = ep.e_txt / st;
    Mat gram = dict.atoms() * dict.atoms().transpose();
    Mat cost = Mat::Ones(gram.rows(), gram.cols()) - gram;
    GammaBridge gb;
    gb.plan = solve_ot(cost, a, b, opts);
    gb.cost = gb.plan.cost;
    gb.bridge.kind = BridgeKind::gamma;
    gb.bridge.values = gb.plan.gamma.cwiseProduct(gram);
    return gb;
}

TauSelection select_tau_by_bridge(const BridgeMatrix& b_sigma, const EnergyProfile& ep,
                                  const std::vector<double>& grid, double max_unimodal_fraction) {
    std::vector<double> taus = grid;
    if (taus.empty())
        for (int i = 1; i <= 25; ++i) taus.push_back(0.01 * i);
    std::sort(taus.begin(), taus.end());
    double total = b_sigma.values.array().abs().sum();
    TauSelection sel;
    sel.fallback = true;
    for (auto it = taus.rbegin(); it != taus.rend(); ++it) {
        ModalityStructure ms = modality_structure(ep, *it);
        double unimodal = 0.0;
        for (Eigen::Index i = 0; i < b_sigma.values.rows(); ++i)
            for (Eigen::Index j = 0; j < b_sigma.values.cols(); ++j) {
                bool img_img = ms.delta_img[i] && ms.delta_img[j];
                bool txt_txt = ms.delta_txt[i] && ms.delta_txt[j];
                if (img_img || txt_txt) unimodal += std::abs(b_sigma.values(i, j));
            }
        if (total == 0.0 || unimodal < max_unimodal_fraction * total) {
            sel.tau = *it;
            sel.fallback = false;
            return sel;
        }
    }
    sel.tau = 0.05;
    return sel;
}

RhoResult rho(const BridgeMatrix& b_sigma, const ModalityStructure& ms) {
    double adjacent = 0.0, neither = 0.0;
    for (Eigen::Index i = 0; i < b_sigma.values.rows(); ++i)
        for (Eigen::Index j = 0; j < b_sigma.values.cols(); ++j) {
            double v = std::abs(b_sigma.values(i, j));
            if (ms.delta[i] || ms.delta[j]) adjacent += v;
            else neither += v;
        }
    RhoResult r;
    if (neither == 0.0) {
        r.infinite = true;
        r.value = std::numeric_limits<double>::infinity();
    } else {
        r.value = adjacent / neither;
    }
    return r;
}

double fda(const GammaBridge& gb, const ModalityStructure& ms, const EnergyProfile& ep) {
    double total_energy = ep.e_mean.sum();
    if (total_energy <= 0) throw DataError("fda: zero total energy");
    double bimodal_energy = 0.0;
    for (Eigen::Index i = 0; i < ep.e_mean.size(); ++i)
        if (ms.delta[i]) bimodal_energy += ep.e_mean[i];
    double eps = bimodal_energy / total_energy;
    if (eps <= 0.0 || eps >= 1.0)
        throw DataError("fda: degenerate bimodal energy fraction " + std::to_string(eps));
    double alpha = 0.0;
    for (Eigen::Index i = 0; i < gb.bridge.values.rows(); ++i)
        for (Eigen::Index j = 0; j < gb.bridge.values.cols(); ++j)
            if (ms.delta[i] || ms.delta[j]) alpha += gb.bridge.values(i, j);
    double mass = 1.0 - gb.cost;
    if (mass - alpha <= 0.0)
        throw DataError("fda: bimodal-adjacent mass saturates the transport mass");
    return (alpha / eps) * ((1.0 - eps) / (mass - alpha));
}

ProbingResult probing_accuracy(const Dictionary& dict, const EmbeddingDataset& ds,
                               const ModalityStructure& ms, const EnergyProfile& ep) {
    ds.validate();
    Eigen::Index n = ds.rows();
    Mat a(2 * n, ds.dim());
    a << ds.domain_a, ds.domain_b;
    Vec mean = a.colwise().mean();
    a.rowwise() -= mean.transpose();
    // projections onto atoms; sample i < n is image, the rest text
    Mat scores = a * dict.atoms().transpose();

    ProbingResult pr;
    pr.scores = Vec::Zero(dict.size());
    double weighted = 0.0, weight = 0.0;
    for (Eigen::Index k = 0; k < dict.size(); ++k) {
        Eigen::Index hits = 0; // sign predicts "image"
        for (Eigen::Index i = 0; i < 2 * n; ++i) {
            bool is_img = i < n;
            bool pred_img = scores(i, k) > 0;
            if (pred_img == is_img) ++hits;
        }
        double acc_img = static_cast<double>(hits) / static_cast<double>(2 * n);
        double s;
        if (ms.delta[k]) {
            s = 1.0 - 2.0 * (std::max(acc_img, 1.0 - acc_img) - 0.5);
        } else if (ms.delta_img[k]) {
            s = acc_img;
        } else {
            s = 1.0 - acc_img; // accuracy against text labels
        }
        pr.scores[k] = s;
        weighted += ep.e_mean[k] * s;
        weight += ep.e_mean[k];
    }
    pr.p_acc = weight > 0 ? weighted / weight : 0.0;
    return pr;
}

double recall_at_k(const Mat& i, const Mat& t, int k, Eigen::Index batch) {
    if (i.rows() != t.rows()) throw DataError("recall_at_k: unpaired rows");
    if (k < 1 || batch < 1) throw DataError("recall_at_k: invalid k or batch");
    Mat in = normalize_rows(i), tn = normalize_rows(t);
    Eigen::Index n_batches = in.rows() / batch; // remainder dropped
    if (n_batches == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index b = 0; b < n_batches; ++b) {
        Mat c = in.middleRows(b * batch, batch) * tn.middleRows(b * batch, batch).transpose();
        Eigen::Index hits = 0;
        for (Eigen::Index r = 0; r < batch; ++r) {
            if (in_top_k(c.row(r).transpose(), r, k)) ++hits;       // image -> text
            if (in_top_k(c.col(r), r, k)) ++hits;                   // text -> image
        }
        total += static_cast<double>(hits) / static_cast<double>(2 * batch);
    }
    return total / static_cast<double>(n_batches);
}

double delta_recall(const EmbeddingDataset& ds, const SaeModel& model,
                    const ModalityStructure& ms) {
    Dictionary dict(normalize_rows(model.dict));
    Mat zi = encode(model, ds.domain_a), zt = encode(model, ds.domain_b);
    Mat zi_b = zi, zt_b = zt;
    for (Eigen::Index k = 0; k < dict.size(); ++k)
        if (!ms.delta[k]) {
            zi_b.col(k).setZero();
            zt_b.col(k).setZero();
        }
    auto safe_recall = [&](const Mat& a, const Mat& b) {
        // drop pairs where either side reconstructs to zero
        std::vector<Eigen::Index> keep;
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            if (a.row(r).norm() > 0 && b.row(r).norm() > 0) keep.push_back(r);
        Mat ak(static_cast<Eigen::Index>(keep.size()), a.cols());
        Mat bk(static_cast<Eigen::Index>(keep.size()), b.cols());
        for (size_t r = 0; r < keep.size(); ++r) {
            ak.row(static_cast<Eigen::Index>(r)) = a.row(keep[r]);
            bk.row(static_cast<Eigen::Index>(r)) = b.row(keep[r]);
        }
        return recall_at_k(ak, bk, 1);
    };
    double full = safe_recall(zi * dict.atoms(), zt * dict.atoms());
    double bimodal = safe_recall(zi_b * dict.atoms(), zt_b * dict.atoms());
    return full - bimodal;
}

double mma(const Mat& z, const Mat& z_true) {
    if (z.rows() != z_true.rows()) throw DataError("mma: sample-count mismatch");
    Eigen::Index k = std::max(z.cols(), z_true.cols());
    Mat a = Mat::Zero(z.rows(), k), b = Mat::Zero(z.rows(), k);
    a.leftCols(z.cols()) = z;
    b.leftCols(z_true.cols()) = z_true;
    Vec na = a.colwise().norm(), nb = b.colwise().norm();
    Mat cosm = a.transpose() * b;
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
            double d = na[i] * nb[j];
            cosm(i, j) = d > 0 ? cosm(i, j) / d : 0.0;
        }
    auto perm = hungarian_match(cosm);
    double s = 0.0;
    for (size_t i = 0; i < perm.size(); ++i) s += cosm(static_cast<Eigen::Index>(i), perm[i]);
    return s / static_cast<double>(perm.size());
}

double mma(const SparseCode& z, const SparseCode& z_true) {
    return mma(z.to_dense(), z_true.to_dense());
}

DictionaryStats dictionary_stats(const Dictionary& dict, const Mat& z) {
    if (z.cols() != dict.size()) throw DataError("dictionary_stats: code/dictionary size mismatch");
    DictionaryStats st;
    auto sq = spectral_quantities(dict.atoms());
    st.stable_rank = sq.stable_rank;
    st.effective_rank = sq.effective_rank;

    Vec energy = z.array().square().colwise().mean().transpose();
    Mat weighted = energy.asDiagonal() * dict.atoms();
    if (weighted.norm() > 0) {
        auto sw = spectral_quantities(weighted);
        st.stable_rank_weighted = sw.stable_rank;
        st.effective_rank_weighted = sw.effective_rank;
    }

    Mat gram = dict.atoms() * dict.atoms().transpose();
    st.coherence = 0.0;
    for (Eigen::Index i = 0; i < gram.rows(); ++i)
        for (Eigen::Index j = 0; j < gram.cols(); ++j)
            if (i != j) st.coherence = std::max(st.coherence, gram(i, j));

    Mat zn = z;
    for (Eigen::Index k = 0; k < zn.cols(); ++k) {
        double nrm = zn.col(k).norm();
        if (nrm > 0) zn.col(k) /= nrm;
    }
    Mat co = zn.transpose() * zn;
    double k2 = static_cast<double>(dict.size()) * static_cast<double>(dict.size());
    st.connectivity = 1.0 - static_cast<double>((co.array().abs() > 1e-12).count()) / k2;

    Mat neg = (-co.cwiseProduct(gram)).cwiseMax(0.0);
    st.negative_interference = neg.jacobiSvd().singularValues()(0);
    return st;
}

double stability(const std::vector<Dictionary>& dicts) {
    if (dicts.size() < 2) throw DataError("stability: needs at least two dictionaries");
    double sum = 0.0;
    int pairs = 0;
    for (size_t i = 0; i < dicts.size(); ++i)
        for (size_t j = i + 1; j < dicts.size(); ++j) {
            sum += wasserstein_atoms(dicts[i], dicts[j]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

ConsistencyCurves c_curves(const EmbeddingDataset& ds, const SaeModel& model,
                           Eigen::Index max_samples) {
    Dictionary dict(normalize_rows(model.dict));
    Eigen::Index n = std::min(ds.rows(), max_samples / 2 + max_samples % 2);
    Mat x(2 * n, ds.dim());
    x << ds.domain_a.topRows(n), ds.domain_b.topRows(n);
    Mat z(2 * n, model.atom_count());
    z << encode(model, ds.domain_a.topRows(n)), encode(model, ds.domain_b.topRows(n));

    double ins_sum = 0.0, del_sum = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::vector<Eigen::Index> active;
        for (Eigen::Index k = 0; k < z.cols(); ++k)
            if (z(i, k) != 0.0) active.push_back(k);
        double xn2 = x.row(i).squaredNorm();
        if (active.empty() || xn2 == 0.0) continue;
        Vec xr = x.row(i).transpose();
        Vec full = Vec::Zero(ds.dim());
        for (auto k : active) full += z(i, k) * dict.atom(k);
        double full_r2 = 1.0 - (xr - full).squaredNorm() / xn2;
        if (full_r2 <= 0.0) continue;

        // greedy order by attribution = |activation| * error reduction when added
        auto curve = [&](bool insertion) {
            Vec recon = insertion ? Vec::Zero(ds.dim()) : full;
            std::vector<Eigen::Index> remaining = active;
            double area = 0.0;
            size_t m = active.size();
            for (size_t step = 0; step < m; ++step) {
                double cur_err = (xr - recon).squaredNorm();
                double best = -std::numeric_limits<double>::infinity();
                size_t best_pos = 0;
                for (size_t p = 0; p < remaining.size(); ++p) {
                    Eigen::Index k = remaining[p];
                    Vec cand = insertion ? Vec(recon + z(i, k) * dict.atom(k))
                                         : Vec(recon - z(i, k) * dict.atom(k));
                    double delta_err = insertion ? cur_err - (xr - cand).squaredNorm()
                                                 : (xr - cand).squaredNorm() - cur_err;
                    double attr = std::abs(z(i, k)) * delta_err;
                    if (attr > best) { best = attr; best_pos = p; }
                }
                Eigen::Index k = remaining[best_pos];
                if (insertion) recon += z(i, k) * dict.atom(k);
                else recon -= z(i, k) * dict.atom(k);
                remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_pos));
                double r2 = 1.0 - (xr - recon).squaredNorm() / xn2;
                area += std::clamp(r2 / full_r2, 0.0, 1.0);
            }
            return area / static_cast<double>(m);
        };
        ins_sum += curve(true);
        del_sum += curve(false);
        ++used;
    }
    ConsistencyCurves cc;
    if (used > 0) {
        cc.c_insertion = ins_sum / static_cast<double>(used);
        cc.c_deletion = del_sum / static_cast<double>(used);
    }
    return cc;
}

ZeroShotResult zero_shot_accuracy(const Mat& img, const std::vector<int>& labels,
                                  const std::vector<Mat>& class_text_embeddings) {
    if (static_cast<size_t>(img.rows()) != labels.size())
        throw DataError("zero_shot_accuracy: label count mismatch");
    int n_classes = static_cast<int>(class_text_embeddings.size());
    Mat prototypes(n_classes, img.cols());
    for (int c = 0; c < n_classes; ++c) {
        if (class_text_embeddings[static_cast<size_t>(c)].rows() == 0)
            throw DataError("zero_shot_accuracy: class " + std::to_string(c) + " has no text embeddings");
        prototypes.row(c) = class_text_embeddings[static_cast<size_t>(c)].colwise().mean();
    }
    prototypes = normalize_rows(prototypes);
    Mat scores = normalize_rows(img) * prototypes.transpose();
    ZeroShotResult r;
    for (Eigen::Index i = 0; i < img.rows(); ++i) {
        if (in_top_k(scores.row(i).transpose(), labels[static_cast<size_t>(i)], 1)) r.top1 += 1.0;
        if (in_top_k(scores.row(i).transpose(), labels[static_cast<size_t>(i)], std::min(5, n_classes))) r.top5 += 1.0;
    }
    r.top1 /= static_cast<double>(img.rows());
    r.top5 /= static_cast<double>(img.rows());
    return r;
}

double classifier_accuracy(const Mat& img, const std::vector<int>& labels) {
    int n_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    if (n_classes < 2) throw DataError("classifier_accuracy: needs at least two classes");
    return multinomial_probe_accuracy(img, labels, n_classes, 1);
}

} // namespace asae
