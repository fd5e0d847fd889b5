#pragma once

#include "asae/sae.hpp"
#include "asae/solvers.hpp"
#include "asae/types.hpp"

#include <vector>

namespace asae {

struct ReconstructionMetrics {
    double mse = 0.0; // mean over samples of squared reconstruction error
    double r2 = 0.0;  // explained variance against the dataset mean
    double l0 = 0.0;  // mean support size
    double l1 = 0.0;  // mean absolute activation mass
};

ReconstructionMetrics reconstruction_metrics(const EmbeddingDataset& ds, const SaeModel& model);

struct EnergyProfile {
    Vec e_img, e_txt, e_mean;  // mean squared activation per atom
    Vec freq_img, freq_txt;    // activation frequency per atom
};

EnergyProfile energy_profile(const Mat& z_img, const Mat& z_txt);
EnergyProfile energy_profile(const SparseCode& z_img, const SparseCode& z_txt);

struct ModalityStructure {
    Vec mu;       // image share of energy, 0.5 for zero-energy atoms
    double tau = 0.05;
    BinaryMask delta;     // bimodal: mu in [tau, 1-tau]
    BinaryMask delta_img; // mu > 1-tau
    BinaryMask delta_txt; // mu < tau
};

ModalityStructure modality_structure(const EnergyProfile& ep, double tau = 0.05);

enum class BridgeKind : uint8_t { sigma, gamma };

struct BridgeMatrix {
    Mat values;
    BridgeKind kind = BridgeKind::sigma;
};

/// Sigma = mean over aligned pairs of z_img^T z_txt; bridge = Sigma .* (D D^T).
BridgeMatrix bridge_sigma(const Mat& z_img, const Mat& z_txt, const Dictionary& dict);

struct GammaBridge {
    BridgeMatrix bridge;
    double cost = 0.0; // OT cost c; total bridge mass equals 1 - c
    TransportPlan plan;
};

/// OT plan between energy marginals under cost 1 - D D^T; bridge = plan .* (D D^T).
GammaBridge bridge_gamma(const EnergyProfile& ep, const Dictionary& dict,
                         const OtOptions& opts = {});

struct TauSelection {
    double tau = 0.05;
    bool fallback = false; // criterion never met, default returned
};

/// Largest tau in the grid keeping unimodal-unimodal bridge mass below
/// max_unimodal_fraction of the total; default grid 0.01..0.25.
TauSelection select_tau_by_bridge(const BridgeMatrix& b_sigma, const EnergyProfile& ep,
                                  const std::vector<double>& grid = {},
                                  double max_unimodal_fraction = 0.05);

struct RhoResult {
    double value = 0.0;
    bool infinite = false; // no unimodal-unimodal mass
};

/// Ratio of |bridge| mass adjacent to bimodal atoms over mass between
/// unimodal atoms only.
RhoResult rho(const BridgeMatrix& b_sigma, const ModalityStructure& ms);

/// FDA = (alpha/eps) * ((1-eps) / ((1-c) - alpha)) with alpha the bimodal-
/// adjacent gamma-bridge mass and eps the bimodal energy fraction.
double fda(const GammaBridge& gb, const ModalityStructure& ms, const EnergyProfile& ep);

struct ProbingResult {
    double p_acc = 0.0;
    Vec scores; // per atom
};

ProbingResult probing_accuracy(const Dictionary& dict, const EmbeddingDataset& ds,
                               const ModalityStructure& ms, const EnergyProfile& ep);

/// Batched pair-matching recall; rows of i and t are aligned pairs.
double recall_at_k(const Mat& i, const Mat& t, int k, Eigen::Index batch = 256);

/// recall@1 drop when reconstructing from bimodal atoms only.
double delta_recall(const EmbeddingDataset& ds, const SaeModel& model,
                    const ModalityStructure& ms);

/// Mean cosine between matched activation patterns; the smaller code is
/// padded with zero columns before Hungarian matching.
double mma(const Mat& z, const Mat& z_true);
double mma(const SparseCode& z, const SparseCode& z_true);

struct DictionaryStats {
    double stable_rank = 0.0;
    double effective_rank = 0.0;
    double stable_rank_weighted = 0.0;
    double effective_rank_weighted = 0.0;
    double coherence = 0.0;
    double connectivity = 0.0;
    double negative_interference = 0.0;
};

DictionaryStats dictionary_stats(const Dictionary& dict, const Mat& z);

/// Mean pairwise OT distance between dictionaries from different seeds.
double stability(const std::vector<Dictionary>& dicts);

struct ConsistencyCurves {
    double c_insertion = 0.0;
    double c_deletion = 0.0;
};

ConsistencyCurves c_curves(const EmbeddingDataset& ds, const SaeModel& model,
                           Eigen::Index max_samples = 512);

struct ZeroShotResult {
    double top1 = 0.0;
    double top5 = 0.0;
};

ZeroShotResult zero_shot_accuracy(const Mat& img, const std::vector<int>& labels,
                                  const std::vector<Mat>& class_text_embeddings);

double classifier_accuracy(const Mat& img, const std::vector<int>& labels);

} // namespace asae
