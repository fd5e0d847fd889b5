#include "asae/dgp.hpp"

#include "asae/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace asae {

namespace {

// Atoms live on the unit sphere of one coordinate block, which makes the
// cross-block orthogonality constraints exact. When the block is wide enough
// the atoms are additionally orthonormalized (Gram-Schmidt on iid Gaussian
// draws, signs fixed, so each atom stays uniform on the block sphere); this
// removes within-block interference and makes the similarity calibration
// exact rather than exact-in-expectation.
Mat sample_block_atoms(Rng& rng, Eigen::Index count, Eigen::Index d, Eigen::Index lo, Eigen::Index len) {
    Mat g(count, len);
    for (Eigen::Index i = 0; i < count; ++i)
        for (Eigen::Index j = 0; j < len; ++j) g(i, j) = rng.normal();
    if (count <= len) {
        Eigen::HouseholderQR<Mat> qr(g.transpose());
        Mat q = qr.householderQ() * Mat::Identity(len, count);
        Mat r = qr.matrixQR().topRows(count).triangularView<Eigen::Upper>();
        for (Eigen::Index i = 0; i < count; ++i)
            if (r(i, i) < 0.0) q.col(i) = -q.col(i);
        g = q.transpose();
    } else {
        for (Eigen::Index i = 0; i < count; ++i) g.row(i) /= g.row(i).norm();
    }
    Mat atoms = Mat::Zero(count, d);
    atoms.middleCols(lo, len) = g;
    return atoms;
}

std::vector<Eigen::Index> sample_without_replacement(Rng& rng, Eigen::Index count, Eigen::Index pool) {
    std::set<Eigen::Index> chosen;
    // Floyd's algorithm
    for (Eigen::Index j = pool - count; j < pool; ++j) {
        Eigen::Index t = static_cast<Eigen::Index>(rng.uniform_index(static_cast<uint64_t>(j) + 1));
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    return {chosen.begin(), chosen.end()};
}

} // namespace

void DgpConfig::validate() const {
    if (tau1 < 0.0 || tau1 > 1.0) throw DataError("tau1 must lie in [0, 1]");
    if (tau2 <= 0.0 || tau2 >= 1.0) throw DataError("tau2 must lie in (0, 1)");
    if (sparsity < 2) throw DataError("sparsity L must be >= 2");
    if (k_mult < 1) throw DataError("k multiplier must be >= 1");
    if (sparsity - 1 > 4 * k_mult)
        throw DataError("L-1 bimodal activations exceed the 4k bimodal atoms");
    auto blocks = resolved_blocks();
    if (blocks[0] + blocks[1] + blocks[2] > d || blocks[0] < 2 || blocks[1] < 2 || blocks[2] < 2)
        throw DataError("d too small to host three orthogonal blocks");
}

std::array<Eigen::Index, 3> DgpConfig::resolved_blocks() const {
    if (block_dims[0] > 0) return block_dims;
    Eigen::Index third = d / 3;
    return {third, third, third};
}

GroundTruth build_ground_truth(const DgpConfig& cfg) {
    cfg.validate();
    auto blocks = cfg.resolved_blocks();
    const Eigen::Index k = cfg.k_mult, d = cfg.d;
    const Eigen::Index img_lo = 0, txt_lo = blocks[0], shr_lo = blocks[0] + blocks[1];

    Rng root(cfg.seed);
    Rng r_img = root.split(1), r_txt = root.split(2), r_shared = root.split(3);

    // each block hosts its atom families jointly so that e.g. D^I and D^{B,I}
    // are mutually orthogonal too whenever the block is wide enough
    Mat img_all = sample_block_atoms(r_img, 5 * k, d, img_lo, blocks[0]);
    Mat txt_all = sample_block_atoms(r_txt, 5 * k, d, txt_lo, blocks[1]);
    Mat di = img_all.topRows(k), dbi = img_all.bottomRows(4 * k);
    Mat dt = txt_all.topRows(k), dbt = txt_all.bottomRows(4 * k);
    Mat db = sample_block_atoms(r_shared, 4 * k, d, shr_lo, blocks[2]);

    GroundTruth gt;
    gt.beta = solve_beta_dgp(cfg);

    Mat sep(14 * k, d);
    sep << di, dt, db, dbi, dbt;
    gt.separated = Dictionary(normalize_rows(sep));
    gt.separated_roles.reserve(static_cast<size_t>(14 * k));
    for (Eigen::Index i = 0; i < k; ++i) gt.separated_roles.push_back(AtomRole::image_only);
    for (Eigen::Index i = 0; i < k; ++i) gt.separated_roles.push_back(AtomRole::text_only);
    for (Eigen::Index i = 0; i < 4 * k; ++i) gt.separated_roles.push_back(AtomRole::bimodal_core);
    for (Eigen::Index i = 0; i < 4 * k; ++i) gt.separated_roles.push_back(AtomRole::bimodal_img_term);
    for (Eigen::Index i = 0; i < 4 * k; ++i) gt.separated_roles.push_back(AtomRole::bimodal_txt_term);

    Mat comb(10 * k, d);
    comb.topRows(k) = di;
    comb.middleRows(k, k) = dt;
    comb.middleRows(2 * k, 4 * k) = cfg.tau1 * db + (1.0 - cfg.tau1) * dbi;
    comb.middleRows(6 * k, 4 * k) = cfg.tau1 * db + (1.0 - cfg.tau1) * dbt;
    gt.combined = Dictionary(normalize_rows(comb));
    gt.combined_roles.reserve(static_cast<size_t>(10 * k));
    for (Eigen::Index i = 0; i < k; ++i) gt.combined_roles.push_back(AtomRole::image_only);
    for (Eigen::Index i = 0; i < k; ++i) gt.combined_roles.push_back(AtomRole::text_only);
    for (Eigen::Index i = 0; i < 4 * k; ++i) gt.combined_roles.push_back(AtomRole::combined_img);
    for (Eigen::Index i = 0; i < 4 * k; ++i) gt.combined_roles.push_back(AtomRole::combined_txt);
    return gt;
}

std::array<double, 5> beta_polynomial(const DgpConfig& cfg) {
    // The paired similarity is tau1^2 beta^2 (L-1) over the product of the
    // embedding norms, whose squares are 1 + (L-1)(tau1^2 + (1-tau1)^2) beta^2.
    // Squaring the tau2 constraint gives an even quartic in beta.
    const double l1 = static_cast<double>(cfg.sparsity - 1);
    const double t1 = cfg.tau1, t2 = cfg.tau2;
    const double a = (l1 * t1 * t1) * (l1 * t1 * t1);
    const double b = l1 * (t1 * t1 + (1.0 - t1) * (1.0 - t1));
    return {a - t2 * t2 * b * b, 0.0, -2.0 * t2 * t2 * b, 0.0, -t2 * t2};
}

double solve_beta_dgp(const DgpConfig& cfg) {
    cfg.validate();
    auto c = beta_polynomial(cfg);
    auto infeasible = [&]() {
        std::ostringstream os;
        os << "no positive real root for this configuration; quartic coefficients: ";
        for (double v : c) os << v << " ";
        return DataError(os.str());
    };
    if (std::abs(c[0]) < 1e-300) throw infeasible();

    Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
    companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
    for (int i = 0; i < 4; ++i) companion(i, 3) = -c[static_cast<size_t>(4 - i)] / c[0];
    Eigen::EigenSolver<Eigen::Matrix4d> es(companion);

    std::vector<double> roots;
    for (int i = 0; i < 4; ++i) {
        std::complex<double> z = es.eigenvalues()[i];
        if (std::abs(z.imag()) <= 1e-9 * (1.0 + std::abs(z.real())) && z.real() > 1e-12)
            roots.push_back(z.real());
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(),
                            [](double x, double y) { return std::abs(x - y) < 1e-9; }),
                roots.end());
    if (roots.size() != 1) throw infeasible();

    // polish with a few Newton steps
    double x = roots[0];
    for (int it = 0; it < 8; ++it) {
        double f = (((c[0] * x + c[1]) * x + c[2]) * x + c[3]) * x + c[4];
        double fp = ((4.0 * c[0] * x + 3.0 * c[1]) * x + 2.0 * c[2]) * x + c[3];
        if (std::abs(fp) < 1e-300) break;
        x -= f / fp;
    }
    return x;
}

DgpSample sample_pairs(const GroundTruth& gt, const DgpConfig& cfg, Eigen::Index n) {
    if (n < 1) throw DataError("need at least one sample");
    const Eigen::Index k = cfg.k_mult, d = cfg.d;
    const double beta = gt.beta, t1 = cfg.tau1;
    const Eigen::Index nb = cfg.sparsity - 1;

    const Mat& sep = gt.separated.atoms();
    const Mat& comb = gt.combined.atoms();
    // norms of the unnormalized combined atoms, needed to keep Z1 D1 = Z2 D2
    Vec comb_img_scale(4 * k), comb_txt_scale(4 * k);
    for (Eigen::Index j = 0; j < 4 * k; ++j) {
        comb_img_scale[j] = (t1 * sep.row(2 * k + j) + (1.0 - t1) * sep.row(6 * k + j)).norm();
        comb_txt_scale[j] = (t1 * sep.row(2 * k + j) + (1.0 - t1) * sep.row(10 * k + j)).norm();
    }

    DgpSample out;
    out.data.domain_a.resize(n, d);
    out.data.domain_b.resize(n, d);
    out.data.normalized = true;
    out.data.meta = "dgp";
    for (SparseCode* code : {&out.sep_img, &out.sep_txt}) {
        code->cols = 14 * k;
        code->rows.resize(static_cast<size_t>(n));
        code->dictionary_id = "dgp-separated";
    }
    for (SparseCode* code : {&out.comb_img, &out.comb_txt}) {
        code->cols = 10 * k;
        code->rows.resize(static_cast<size_t>(n));
        code->dictionary_id = "dgp-combined";
    }

    Rng root(cfg.seed);
    Rng sampler_base = root.split(17);
    for (Eigen::Index i = 0; i < n; ++i) {
        Rng rng = sampler_base.split(static_cast<uint64_t>(i));
        Eigen::Index ii = static_cast<Eigen::Index>(rng.uniform_index(static_cast<uint64_t>(k)));
        Eigen::Index it = static_cast<Eigen::Index>(rng.uniform_index(static_cast<uint64_t>(k)));
        auto bims = sample_without_replacement(rng, nb, 4 * k);

        Vec u_img = sep.row(ii).transpose();
        Vec u_txt = sep.row(k + it).transpose();
        for (Eigen::Index j : bims) {
            u_img += t1 * beta * sep.row(2 * k + j).transpose() +
                     (1.0 - t1) * beta * sep.row(6 * k + j).transpose();
            u_txt += t1 * beta * sep.row(2 * k + j).transpose() +
                     (1.0 - t1) * beta * sep.row(10 * k + j).transpose();
        }
        double si = u_img.norm(), st = u_txt.norm();
        out.data.domain_a.row(i) = u_img.transpose() / si;
        out.data.domain_b.row(i) = u_txt.transpose() / st;

        out.sep_img.set(i, ii, 1.0 / si);
        out.sep_txt.set(i, k + it, 1.0 / st);
        out.comb_img.set(i, ii, 1.0 / si);
        out.comb_txt.set(i, k + it, 1.0 / st);
        for (Eigen::Index j : bims) {
            out.sep_img.set(i, 2 * k + j, t1 * beta / si);
            out.sep_img.set(i, 6 * k + j, (1.0 - t1) * beta / si);
            out.sep_txt.set(i, 2 * k + j, t1 * beta / st);
            out.sep_txt.set(i, 10 * k + j, (1.0 - t1) * beta / st);
            out.comb_img.set(i, 2 * k + j, beta * comb_img_scale[j] / si);
            out.comb_txt.set(i, 6 * k + j, beta * comb_txt_scale[j] / st);
        }
    }
    (void)comb;
    return out;
}

} // namespace asae
