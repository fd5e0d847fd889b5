#pragma once

#include "asae/types.hpp"

#include <array>
#include <cstdint>

namespace asae {

enum class AtomRole : uint8_t {
    image_only,
    text_only,
    bimodal_core,
    bimodal_img_term,
    bimodal_txt_term,
    combined_img,
    combined_txt,
};

struct DgpConfig {
    Eigen::Index d = 256;
    Eigen::Index k_mult = 8;     // concept multiplier
    Eigen::Index sparsity = 20;  // L
    double tau1 = 0.999;         // per-atom cross-modal cosine
    double tau2 = 0.6;           // target mean paired similarity
    uint64_t seed = 0;
    // block dimensions {image, text, shared}; zero means floor(d/3) each
    std::array<Eigen::Index, 3> block_dims = {0, 0, 0};

    void validate() const;
    std::array<Eigen::Index, 3> resolved_blocks() const;
};

struct GroundTruth {
    // separated system: [D^I | D^T | D^B | D^{B,I} | D^{B,T}], 14k atoms
    Dictionary separated;
    std::vector<AtomRole> separated_roles;
    // combined system: [D^I | D^T | combined img | combined txt], 10k atoms
    Dictionary combined;
    std::vector<AtomRole> combined_roles;
    double beta = 0.0; // activation scale solving the tau2 constraint
};

struct DgpSample {
    EmbeddingDataset data; // domain_a = image, domain_b = text
    SparseCode sep_img, sep_txt;   // codes against the separated dictionary
    SparseCode comb_img, comb_txt; // codes against the combined dictionary
};

GroundTruth build_ground_truth(const DgpConfig& cfg);

/// Positive real root of the quartic matching the mean paired similarity tau2.
double solve_beta_dgp(const DgpConfig& cfg);

DgpSample sample_pairs(const GroundTruth& gt, const DgpConfig& cfg, Eigen::Index n);

/// Quartic coefficients (c4, c3, c2, c1, c0) of the calibration polynomial.
std::array<double, 5> beta_polynomial(const DgpConfig& cfg);

} // namespace asae
