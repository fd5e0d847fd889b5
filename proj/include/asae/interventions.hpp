#pragma once

#include "asae/metrics.hpp"
#include "asae/sae.hpp"
#include "asae/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace asae {

enum class GapRemovalKind : uint8_t {
    bimodal_filter, // keep only bimodal atoms in the reconstruction
    center,         // subtract the per-modality mean
    shift,          // recenter both modalities onto the common mean
    random_shift,   // recenter both modalities onto a shared random direction
    project_mean,   // project out the normalized per-modality mean
    project_delta,  // project out the normalized mean difference
    project_span,   // project onto the orthogonal complement of given directions
};

GapRemovalKind gap_removal_kind_from_string(const std::string& s);
std::string to_string(GapRemovalKind kind);

/// A fitted gap-removal transform. Parameters are frozen at fit time from the
/// reference dataset and reused verbatim on any dataset it is later applied to.
struct GapRemovalMethod {
    GapRemovalKind kind = GapRemovalKind::bimodal_filter;
    SaeModel model;
    BinaryMask delta;   // bimodal mask, bimodal_filter only
    Vec mu_img, mu_txt; // means of the reconstructed clouds
    Vec direction;      // random_shift target or project_delta axis
    Mat span;           // project_span directions, one per row
    bool fitted = false;
};

/// Reconstruction restricted to unmasked atoms: (Z masked by delta) * D.
Mat filter_unimodal(const SparseCode& z, const BinaryMask& delta, const Dictionary& dict);
Mat filter_unimodal(const Mat& z, const BinaryMask& delta, const Dictionary& dict);

GapRemovalMethod fit_gap_removal(GapRemovalKind kind, const SaeModel& model,
                                 const ModalityStructure& ms, const EmbeddingDataset& reference,
                                 uint64_t seed = 0, const Mat& span_directions = {});

/// Applies the fitted transform to the model reconstructions of ds; the input
/// is never mutated.
EmbeddingDataset apply_gap_removal(const GapRemovalMethod& method, const EmbeddingDataset& ds);

struct GapReport {
    double dim = 0.0;         // distance between modality means
    double wasserstein = 0.0; // OT distance between the two clouds, subsampled
    double separability = 0.0;
    double ood = 0.0;
    double recall_before = 0.0; // recall@1 on ds_before
    double recall_after = 0.0;  // recall@1 on ds_after
};

GapReport gap_report(const EmbeddingDataset& ds_before, const EmbeddingDataset& ds_after,
                     uint64_t seed = 0);

/// Accuracy of the best single-threshold classifier separating query k-NN
/// distances (to the reference cloud) from reference self-distances.
double ood_score(const Mat& queries, const Mat& reference, int k = 10);

enum class QueryVariant : uint8_t { classic, sae_restricted, baseline_src, baseline_delta };

std::string to_string(QueryVariant v);

struct QuerySet {
    Mat q;
    QueryVariant variant = QueryVariant::classic;
};

/// Composed arithmetic queries on reconstructions: classic adds the full
/// reconstructed delta, sae_restricted only its bimodal part.
std::vector<QuerySet> build_queries(const Mat& src, const Mat& delta, const SaeModel& model,
                                    const ModalityStructure& ms);

/// Mean of recall@10 and recall@50 against the full candidate set.
double retrieval_recall(const QuerySet& q, const Mat& targets);

/// Rankings of candidates by cosine are unchanged when a component with a
/// candidate-independent projection is added.
bool check_constant_offset_invariance(const Vec& content, const Vec& modality,
                                      const Mat& candidates);

/// A pair's order flips between observed and content scores iff
/// delta_c * (delta_c + delta_m) < 0; tied pairs are skipped.
bool check_flip_characterization(const Vec& content, const Vec& modality, const Mat& candidates);

} // namespace asae
