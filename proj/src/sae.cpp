#include "asae/sae.hpp"

#include "asae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace asae {

SaeKind sae_kind_from_string(const std::string& s) {
    if (s == "relu") return SaeKind::relu;
    if (s == "jumprelu") return SaeKind::jumprelu;
    if (s == "topk") return SaeKind::topk;
    if (s == "batchtopk") return SaeKind::batchtopk;
    if (s == "mp") return SaeKind::mp;
    throw DataError("unknown architecture: " + s);
}

std::string to_string(SaeKind kind) {
    switch (kind) {
        case SaeKind::relu: return "relu";
        case SaeKind::jumprelu: return "jumprelu";
        case SaeKind::topk: return "topk";
        case SaeKind::batchtopk: return "batchtopk";
        case SaeKind::mp: return "mp";
    }
    throw DataError("unknown architecture enum value");
}

void SaeModel::validate() const {
    for (Eigen::Index i = 0; i < dict.rows(); ++i)
        if (std::abs(dict.row(i).norm() - 1.0) > 1e-6)
            throw DataError("dictionary row " + std::to_string(i) + " is not unit norm");
    bool needs_budget = kind == SaeKind::topk || kind == SaeKind::batchtopk || kind == SaeKind::mp;
    if (needs_budget && sparsity_budget < 1) throw DataError("sparsity budget must be >= 1");
    if (kind == SaeKind::jumprelu && (thresholds.size() != dict.rows() || (thresholds.array() < 0.0).any()))
        throw DataError("jumprelu thresholds must be nonnegative, one per atom");
}

namespace {

Mat preactivations(const Mat& x, const Mat& w, const Vec& b) {
    return (x * w.transpose()).rowwise() + b.transpose();
}

// keep the kappa largest positive entries of each row; ties keep the lowest index
void mask_topk_rows(Mat& a, Eigen::Index kappa) {
    const Eigen::Index k = a.cols();
    std::vector<Eigen::Index> order(static_cast<size_t>(k));
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        auto better = [&](Eigen::Index i, Eigen::Index j) {
            if (a(r, i) != a(r, j)) return a(r, i) > a(r, j);
            return i < j;
        };
        if (kappa < k) {
            std::nth_element(order.begin(), order.begin() + kappa, order.end(), better);
            for (Eigen::Index p = kappa; p < k; ++p) a(r, order[static_cast<size_t>(p)]) = 0.0;
        }
        for (Eigen::Index j = 0; j < k; ++j)
            if (a(r, j) < 0.0) a(r, j) = 0.0;
    }
}

void mask_batchtopk(Mat& a, Eigen::Index kappa) {
    const Eigen::Index budget = kappa * a.rows();
    struct Cell { double v; Eigen::Index r, c; };
    std::vector<Cell> cells;
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
            if (a(r, c) > 0.0) cells.push_back({a(r, c), r, c});
    auto better = [&](const Cell& x, const Cell& y) {
        if (x.v != y.v) return x.v > y.v;
        if (x.r != y.r) return x.r < y.r;
        return x.c < y.c;
    };
    if (static_cast<Eigen::Index>(cells.size()) > budget) {
        std::nth_element(cells.begin(), cells.begin() + budget, cells.end(), better);
        cells.resize(static_cast<size_t>(budget));
    }
    Mat out = Mat::Zero(a.rows(), a.cols());
    for (const auto& c : cells) out(c.r, c.c) = c.v;
    a = out;
}

// Matching pursuit over a whole batch via the Gram trick: correlations are
// updated incrementally instead of recomputing D r at every step.
Mat mp_encode_batch(const Mat& x, const Mat& dict, const Mat& gram, Eigen::Index kappa) {
    const Eigen::Index n = x.rows(), k = dict.rows();
    Mat z = Mat::Zero(n, k);
    Mat c = x * dict.transpose();
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index step = 0; step < kappa; ++step) {
            Eigen::Index best = 0;
            double best_abs = std::abs(c(r, 0));
            for (Eigen::Index j = 1; j < k; ++j) {
                double v = std::abs(c(r, j));
                if (v > best_abs) { best_abs = v; best = j; }
            }
            double a = c(r, best);
            z(r, best) += a;
            c.row(r) -= a * gram.row(best);
        }
    }
    return z;
}

} // namespace

AlignGrad align_with_grad(const Mat& za, const Mat& zb, bool want_grad) {
    const Eigen::Index n = za.rows();
    AlignGrad out;
    if (want_grad) {
        out.ga = Mat::Zero(za.rows(), za.cols());
        out.gb = Mat::Zero(zb.rows(), zb.cols());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double na = za.row(i).norm(), nb = zb.row(i).norm();
        if (na == 0.0 || nb == 0.0) continue;
        Vec ta = za.row(i).transpose() / na, tb = zb.row(i).transpose() / nb;
        double cosv = ta.dot(tb);
        out.loss -= cosv / static_cast<double>(n);
        if (want_grad) {
            out.ga.row(i) = (-(tb - cosv * ta) / na / static_cast<double>(n)).transpose();
            out.gb.row(i) = (-(ta - cosv * tb) / nb / static_cast<double>(n)).transpose();
        }
    }
    return out;
}

namespace {

struct Adam {
    Mat mw, vw, md, vd;
    Vec mb, vb, mt, vt;
    int step = 0;
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    Adam(Eigen::Index k, Eigen::Index d, double lr_) : lr(lr_) {
        mw = vw = md = vd = Mat::Zero(k, d);
        mb = vb = mt = vt = Vec::Zero(k);
    }
    template <typename P, typename G>
    void apply(P& p, G& m, G& v, const G& g) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v.array().matrix() + (1.0 - b2) * g.array().square().matrix();
        double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

} // namespace

Vec encode_relu(const Vec& x, const Mat& w, const Vec& b) {
    return (w * x + b).cwiseMax(0.0);
}

Vec encode_jumprelu(const Vec& x, const Mat& w, const Vec& b, const Vec& theta) {
    Vec a = w * x + b;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (!(a[i] > theta[i])) a[i] = 0.0;
    return a;
}

Vec encode_topk(const Vec& x, const Mat& w, const Vec& b, Eigen::Index kappa) {
    Mat a = (w * x + b).transpose();
    mask_topk_rows(a, kappa);
    return a.transpose();
}

Mat encode_batchtopk(const Mat& x, const Mat& w, const Vec& b, Eigen::Index kappa) {
    Mat a = preactivations(x, w, b);
    mask_batchtopk(a, kappa);
    return a;
}

Vec encode_mp(const Vec& x, const Dictionary& dict, Eigen::Index kappa) {
    if (kappa > dict.size()) throw DataError("sparsity budget exceeds dictionary size");
    const Mat& d = dict.atoms();
    Vec z = Vec::Zero(d.rows());
    Vec r = x;
    for (Eigen::Index step = 0; step < kappa; ++step) {
        Vec c = d * r;
        Eigen::Index best = 0;
        double best_abs = std::abs(c[0]);
        for (Eigen::Index j = 1; j < c.size(); ++j)
            if (std::abs(c[j]) > best_abs) { best_abs = std::abs(c[j]); best = j; }
        z[best] += c[best];
        r -= c[best] * d.row(best).transpose();
    }
    return z;
}

Mat encode(const SaeModel& model, const Mat& x) {
    switch (model.kind) {
        case SaeKind::relu:
            return preactivations(x, model.enc_w, model.enc_b).cwiseMax(0.0);
        case SaeKind::jumprelu: {
            Mat a = preactivations(x, model.enc_w, model.enc_b);
            for (Eigen::Index r = 0; r < a.rows(); ++r)
                for (Eigen::Index c = 0; c < a.cols(); ++c)
                    if (!(a(r, c) > model.thresholds[c])) a(r, c) = 0.0;
            return a;
        }
        case SaeKind::topk: {
            Mat a = preactivations(x, model.enc_w, model.enc_b);
            mask_topk_rows(a, model.sparsity_budget);
            return a;
        }
        case SaeKind::batchtopk:
            return encode_batchtopk(x, model.enc_w, model.enc_b, model.sparsity_budget);
        case SaeKind::mp:
            return mp_encode_batch(x, model.dict, model.dict * model.dict.transpose(),
                                   model.sparsity_budget);
    }
    throw DataError("unknown architecture enum value");
}

Vec decode(const Vec& z, const Dictionary& dict) {
    return dict.atoms().transpose() * z;
}

double align_loss(const Mat& za, const Mat& zb) {
    if (za.rows() != zb.rows() || za.cols() != zb.cols())
        throw DataError("align_loss needs paired code matrices of equal shape");
    return align_with_grad(za, zb, false).loss;
}

Eigen::Index TrainConfig::resolved_atoms(Eigen::Index d) const {
    if (dict_size > 0) return dict_size;
    return static_cast<Eigen::Index>(std::llround(expansion_ratio * static_cast<double>(d)));
}

void TrainConfig::validate() const {
    if (beta_align < 0.0) throw DataError("beta must be nonnegative");
    if (beta_align > 0.0 && batch_size < 2) throw DataError("alignment needs batch size >= 2");
    if (epochs < 0) throw DataError("epochs must be nonnegative");
    if (learning_rate <= 0.0) throw DataError("learning rate must be positive");
    if (target_l0 < 1) throw DataError("target L0 must be >= 1");
}

double r_squared(const Mat& x, const Mat& x_hat) {
    Vec mean = x.colwise().mean();
    double total = (x.rowwise() - mean.transpose()).squaredNorm();
    if (total == 0.0) return 1.0;
    return 1.0 - (x - x_hat).squaredNorm() / total;
}

TrainResult train(const EmbeddingDataset& ds, const TrainConfig& cfg) {
    ds.validate();
    cfg.validate();
    const Eigen::Index n = ds.rows(), d = ds.dim();
    const Eigen::Index k = cfg.resolved_atoms(d);
    const Eigen::Index kappa = std::min(cfg.target_l0, k);
    const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
    const bool is_mp = cfg.arch == SaeKind::mp;
    const double bw = cfg.jumprelu_bandwidth;

    Rng root(cfg.seed);
    Rng r_init = root.split(1), r_shuffle = root.split(2), r_dead = root.split(3);

    // dictionary initialized from random training samples of both domains
    SaeModel model;
    model.kind = cfg.arch;
    model.sparsity_budget = kappa;
    model.l1_weight = cfg.arch == SaeKind::relu ? cfg.l1_weight : 0.0;
    model.dict.resize(k, d);
    for (Eigen::Index i = 0; i < k; ++i) {
        Eigen::Index s = static_cast<Eigen::Index>(r_init.uniform_index(static_cast<uint64_t>(2 * n)));
        Vec row = s < n ? ds.domain_a.row(s).transpose() : ds.domain_b.row(s - n).transpose();
        double norm = row.norm();
        if (norm < 1e-12) {
            for (Eigen::Index j = 0; j < d; ++j) row[j] = r_init.normal();
            norm = row.norm();
        }
        model.dict.row(i) = row.transpose() / norm;
    }
    model.enc_w = model.dict;
    model.enc_b = Vec::Zero(k);
    model.thresholds = cfg.arch == SaeKind::jumprelu ? Vec::Constant(k, 1e-3) : Vec::Zero(k);

    Adam opt(k, d, cfg.learning_rate);
    TrainLog log;
    const double total_var =
        (ds.domain_a.rowwise() - ds.domain_a.colwise().mean()).squaredNorm() +
        (ds.domain_b.rowwise() - ds.domain_b.colwise().mean()).squaredNorm();

    std::vector<Eigen::Index> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    long long global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[r_shuffle.uniform_index(i)]);

        double ep_sse = 0.0, ep_l0 = 0.0, ep_l1 = 0.0, ep_align = 0.0;
        Eigen::Index n_batches = 0;
        std::vector<char> fired(static_cast<size_t>(k), 0);
        Mat last_residual;

        for (Eigen::Index start = 0; start + bs <= n; start += bs) {
            Mat xa(bs, d), xb(bs, d);
            for (Eigen::Index i = 0; i < bs; ++i) {
                xa.row(i) = ds.domain_a.row(perm[static_cast<size_t>(start + i)]);
                xb.row(i) = ds.domain_b.row(perm[static_cast<size_t>(start + i)]);
            }

            Mat za, zb, aa, ab;
            if (is_mp) {
                Mat gram = model.dict * model.dict.transpose();
                za = mp_encode_batch(xa, model.dict, gram, kappa);
                zb = mp_encode_batch(xb, model.dict, gram, kappa);
            } else {
                aa = preactivations(xa, model.enc_w, model.enc_b);
                ab = preactivations(xb, model.enc_w, model.enc_b);
                za = aa;
                zb = ab;
                switch (cfg.arch) {
                    case SaeKind::relu:
                        za = za.cwiseMax(0.0);
                        zb = zb.cwiseMax(0.0);
                        break;
                    case SaeKind::jumprelu:
                        for (Eigen::Index r = 0; r < bs; ++r)
                            for (Eigen::Index c = 0; c < k; ++c) {
                                if (!(za(r, c) > model.thresholds[c])) za(r, c) = 0.0;
                                if (!(zb(r, c) > model.thresholds[c])) zb(r, c) = 0.0;
                            }
                        break;
                    case SaeKind::topk:
                        mask_topk_rows(za, kappa);
                        mask_topk_rows(zb, kappa);
                        break;
                    case SaeKind::batchtopk:
                        mask_batchtopk(za, kappa);
                        mask_batchtopk(zb, kappa);
                        break;
                    case SaeKind::mp: break;
                }
            }

            Mat ra = za * model.dict - xa;
            Mat rb = zb * model.dict - xb;
            double rec = 0.5 * (ra.squaredNorm() + rb.squaredNorm()) / static_cast<double>(bs);
            AlignGrad al;
            if (cfg.beta_align > 0.0) al = align_with_grad(za, zb, true);
            double l1 = 0.5 * (za.cwiseAbs().sum() + zb.cwiseAbs().sum()) / static_cast<double>(bs);
            double loss = rec + cfg.beta_align * al.loss + model.l1_weight * l1;
            ++global_step;
            if (!std::isfinite(loss))
                throw DataError("training diverged (non-finite loss) at step " + std::to_string(global_step));

            ep_sse += ra.squaredNorm() + rb.squaredNorm();
            ep_l0 += 0.5 * ((za.array() != 0.0).cast<double>().sum() +
                            (zb.array() != 0.0).cast<double>().sum()) / static_cast<double>(bs);
            ep_l1 += l1;
            ep_align += al.loss;
            ++n_batches;
            for (Eigen::Index r = 0; r < bs; ++r)
                for (Eigen::Index c = 0; c < k; ++c)
                    if (za(r, c) != 0.0 || zb(r, c) != 0.0) fired[static_cast<size_t>(c)] = 1;
            last_residual = -ra;

            // backward
            Mat gxa = ra / static_cast<double>(bs);
            Mat gxb = rb / static_cast<double>(bs);
            Mat gd = za.transpose() * gxa + zb.transpose() * gxb;
            if (is_mp && cfg.beta_align > 0.0) {
                // selection is frozen, but the selected amplitudes are treated
                // as x·d so the alignment pull reaches the dictionary; atoms
                // used asymmetrically across domains get pushed out of use
                Mat sa = (za.array() != 0.0).cast<double>() * al.ga.array();
                Mat sb = (zb.array() != 0.0).cast<double>() * al.gb.array();
                gd += cfg.beta_align * (sa.transpose() * xa + sb.transpose() * xb);
            }

            opt.step += 1;
            if (!is_mp) {
                Mat gza = gxa * model.dict.transpose();
                Mat gzb = gxb * model.dict.transpose();
                if (model.l1_weight > 0.0) {
                    gza.array() += (model.l1_weight / (2.0 * static_cast<double>(bs))) *
                                   za.array().sign();
                    gzb.array() += (model.l1_weight / (2.0 * static_cast<double>(bs))) *
                                   zb.array().sign();
                }
                // gate: gradient passes only through surviving entries
                Mat gaa = (za.array() != 0.0).cast<double>() * gza.array();
                Mat gab = (zb.array() != 0.0).cast<double>() * gzb.array();
                if (cfg.beta_align > 0.0) {
                    if (cfg.arch == SaeKind::topk || cfg.arch == SaeKind::batchtopk) {
                        // straight-through on the selection: the alignment pull
                        // reaches every positive pre-activation, so atoms active
                        // on one domain can be recruited on the other
                        gaa.array() += cfg.beta_align * al.ga.array() *
                                       (aa.array() > 0.0).cast<double>();
                        gab.array() += cfg.beta_align * al.gb.array() *
                                       (ab.array() > 0.0).cast<double>();
                    } else {
                        gaa.array() += cfg.beta_align * al.ga.array() *
                                       (za.array() != 0.0).cast<double>();
                        gab.array() += cfg.beta_align * al.gb.array() *
                                       (zb.array() != 0.0).cast<double>();
                    }
                }
                Mat gw = gaa.transpose() * xa + gab.transpose() * xb;
                Vec gb = gaa.colwise().sum().transpose() + gab.colwise().sum().transpose();
                if (cfg.arch == SaeKind::jumprelu) {
                    // straight-through Heaviside with a rectangular kernel
                    Vec gt = Vec::Zero(k);
                    for (Eigen::Index r = 0; r < bs; ++r)
                        for (Eigen::Index c = 0; c < k; ++c) {
                            if (std::abs(aa(r, c) - model.thresholds[c]) < 0.5 * bw)
                                gt[c] -= gza(r, c) * aa(r, c) / bw;
                            if (std::abs(ab(r, c) - model.thresholds[c]) < 0.5 * bw)
                                gt[c] -= gzb(r, c) * ab(r, c) / bw;
                        }
                    opt.apply(model.thresholds, opt.mt, opt.vt, gt);
                    model.thresholds = model.thresholds.cwiseMax(0.0);
                }
                opt.apply(model.enc_w, opt.mw, opt.vw, gw);
                opt.apply(model.enc_b, opt.mb, opt.vb, gb);
            }
            opt.apply(model.dict, opt.md, opt.vd, gd);
            for (Eigen::Index i = 0; i < k; ++i) {
                double norm = model.dict.row(i).norm();
                if (norm < 1e-12) {
                    for (Eigen::Index j = 0; j < d; ++j) model.dict(i, j) = r_dead.normal();
                    norm = model.dict.row(i).norm();
                }
                model.dict.row(i) /= norm;
            }
        }

        // dead atoms restart from a random residual of the last batch
        for (Eigen::Index c = 0; c < k; ++c) {
            if (fired[static_cast<size_t>(c)] || last_residual.rows() == 0) continue;
            Eigen::Index r = static_cast<Eigen::Index>(
                r_dead.uniform_index(static_cast<uint64_t>(last_residual.rows())));
            Vec dir = last_residual.row(r).transpose();
            double norm = dir.norm();
            if (norm < 1e-12) {
                for (Eigen::Index j = 0; j < d; ++j) dir[j] = r_dead.normal();
                norm = dir.norm();
            }
            model.dict.row(c) = dir.transpose() / norm;
            if (!is_mp) {
                model.enc_w.row(c) = model.dict.row(c);
                model.enc_b[c] = 0.0;
                opt.mw.row(c).setZero(); opt.vw.row(c).setZero();
                opt.mb[c] = 0.0; opt.vb[c] = 0.0;
            }
            opt.md.row(c).setZero(); opt.vd.row(c).setZero();
        }

        double seen = static_cast<double>((n / bs) * bs) * 2.0;
        log.mse.push_back(ep_sse / seen);
        log.r2.push_back(total_var > 0.0 ? 1.0 - ep_sse * static_cast<double>(n) /
                                               (static_cast<double>((n / bs) * bs) * total_var)
                                         : 1.0);
        log.l0.push_back(n_batches > 0 ? ep_l0 / static_cast<double>(n_batches) : 0.0);
        log.l1.push_back(n_batches > 0 ? ep_l1 / static_cast<double>(n_batches) : 0.0);
        log.align.push_back(n_batches > 0 ? ep_align / static_cast<double>(n_batches) : 0.0);
    }

    model.validate();
    return {std::move(model), std::move(log)};
}

Vec activation_frequency(const SaeModel& model, const EmbeddingDataset& ds) {
    const Eigen::Index n = ds.rows(), k = model.atom_count();
    Vec counts = Vec::Zero(k);
    const Eigen::Index chunk = 1024;
    for (const Mat* dom : {&ds.domain_a, &ds.domain_b}) {
        for (Eigen::Index start = 0; start < n; start += chunk) {
            Eigen::Index len = std::min(chunk, n - start);
            Mat z = encode(model, dom->middleRows(start, len));
            counts += (z.array() != 0.0).cast<double>().colwise().sum().matrix().transpose();
        }
    }
    return counts / static_cast<double>(2 * n);
}

std::vector<Eigen::Index> detect_degenerate(const SaeModel& model, const EmbeddingDataset& ds,
                                            double threshold) {
    Vec freq = activation_frequency(model, ds);
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < freq.size(); ++i)
        if (freq[i] > threshold) out.push_back(i);
    return out;
}

BetaSweepResult sweep_beta(const EmbeddingDataset& ds, const TrainConfig& cfg,
                           const std::vector<double>& grid) {
    if (grid.empty()) throw DataError("beta grid is empty");
    if (std::find(grid.begin(), grid.end(), 0.0) == grid.end())
        throw DataError("beta grid must include the 0 baseline");

    BetaSweepResult out;
    double r2_baseline = 0.0;
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    for (double beta : sorted) {
        TrainConfig c = cfg;
        c.beta_align = beta;
        TrainResult tr = train(ds, c);
        Mat za = encode(tr.model, ds.domain_a);
        Mat zb = encode(tr.model, ds.domain_b);
        Mat stacked_x(2 * ds.rows(), ds.dim());
        stacked_x << ds.domain_a, ds.domain_b;
        Mat stacked_hat(2 * ds.rows(), ds.dim());
        stacked_hat << za * tr.model.dict, zb * tr.model.dict;
        BetaSweepRow row;
        row.beta = beta;
        row.r2 = r_squared(stacked_x, stacked_hat);
        row.degenerate_count = static_cast<Eigen::Index>(detect_degenerate(tr.model, ds).size());
        if (beta == 0.0) r2_baseline = row.r2;
        out.rows.push_back(row);
    }
    out.chosen_beta = 0.0;
    for (const auto& row : out.rows)
        if (r2_baseline - row.r2 < 0.05 && row.beta > out.chosen_beta) out.chosen_beta = row.beta;
    bool had_nonzero = sorted.back() > 0.0;
    out.warning_all_fail = had_nonzero && out.chosen_beta == 0.0;
    return out;
}

} // namespace asae
