#pragma once

#include "asae/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace asae {

enum class SaeKind : uint8_t { relu, jumprelu, topk, batchtopk, mp };

SaeKind sae_kind_from_string(const std::string& s);
std::string to_string(SaeKind kind);

struct SaeModel {
    SaeKind kind = SaeKind::relu;
    Mat dict;       // K x d, rows unit norm
    Mat enc_w;      // K x d (unused for mp)
    Vec enc_b;      // K
    Vec thresholds; // K, jumprelu only, elementwise >= 0
    Eigen::Index sparsity_budget = 0; // kappa, topk/batchtopk/mp
    double l1_weight = 0.0;           // relu only

    Eigen::Index atom_count() const { return dict.rows(); }
    Eigen::Index dim() const { return dict.cols(); }
    void validate() const;
};

// Vector-level encoders. Batch rows are samples.
Vec encode_relu(const Vec& x, const Mat& w, const Vec& b);
Vec encode_jumprelu(const Vec& x, const Mat& w, const Vec& b, const Vec& theta);
Vec encode_topk(const Vec& x, const Mat& w, const Vec& b, Eigen::Index kappa);
Mat encode_batchtopk(const Mat& x, const Mat& w, const Vec& b, Eigen::Index kappa);
Vec encode_mp(const Vec& x, const Dictionary& dict, Eigen::Index kappa);

/// Batch encode with the model's own architecture; returns dense codes b x K.
Mat encode(const SaeModel& model, const Mat& x);

Vec decode(const Vec& z, const Dictionary& dict);

/// Mean negative cosine between paired code rows; zero rows contribute 0.
double align_loss(const Mat& za, const Mat& zb);

struct AlignGrad {
    double loss = 0.0;
    Mat ga, gb; // d loss / d za, zb
};

/// align_loss plus its analytic gradient with respect to both code matrices.
AlignGrad align_with_grad(const Mat& za, const Mat& zb, bool want_grad = true);

struct TrainConfig {
    SaeKind arch = SaeKind::topk;
    double expansion_ratio = 8.0;
    Eigen::Index dict_size = 0; // 0 means round(expansion_ratio * d)
    Eigen::Index target_l0 = 20;
    double beta_align = 0.0;
    double l1_weight = 1e-3;  // relu arch only
    Eigen::Index batch_size = 256;
    int epochs = 50;
    double learning_rate = 1e-3;
    double jumprelu_bandwidth = 1e-3;
    uint64_t seed = 0;

    Eigen::Index resolved_atoms(Eigen::Index d) const;
    void validate() const;
};

struct TrainLog {
    std::vector<double> mse, r2, l0, l1, align; // per epoch, on training data
};

struct TrainResult {
    SaeModel model;
    TrainLog log;
};

/// Joint training on both domains with the alignment penalty weighted by
/// cfg.beta_align. Deterministic given (cfg.seed, single thread).
TrainResult train(const EmbeddingDataset& ds, const TrainConfig& cfg);

/// Fraction of samples (both domains pooled) on which each atom fires.
Vec activation_frequency(const SaeModel& model, const EmbeddingDataset& ds);

/// Atoms firing on more than `threshold` of the samples.
std::vector<Eigen::Index> detect_degenerate(const SaeModel& model, const EmbeddingDataset& ds,
                                            double threshold = 0.99);

struct BetaSweepRow {
    double beta = 0.0;
    double r2 = 0.0;
    Eigen::Index degenerate_count = 0;
};

struct BetaSweepResult {
    double chosen_beta = 0.0;
    bool warning_all_fail = false; // no beta met the deficit criterion
    std::vector<BetaSweepRow> rows;
};

/// Trains one model per grid value and picks the largest beta whose R2
/// deficit against the beta=0 baseline stays below 0.05.
BetaSweepResult sweep_beta(const EmbeddingDataset& ds, const TrainConfig& cfg,
                           const std::vector<double>& grid);

void save_model(const SaeModel& model, const std::string& path);
SaeModel load_model(const std::string& path);

/// Variance explained against the dataset-mean baseline.
double r_squared(const Mat& x, const Mat& x_hat);

} // namespace asae
