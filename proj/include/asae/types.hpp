#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace asae {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Paired two-domain embedding matrices. Row i of domain_a is paired with
/// row i of domain_b.
struct EmbeddingDataset {
    Mat domain_a; // N x d
    Mat domain_b; // N x d
    bool normalized = false;
    std::string meta;

    Eigen::Index rows() const { return domain_a.rows(); }
    Eigen::Index dim() const { return domain_a.cols(); }

    // Throws DataError on any invariant violation.
    void validate() const;
};

/// K unit-norm atoms of dimension d, one per row.
class Dictionary {
public:
    Dictionary() = default;
    explicit Dictionary(Mat atoms, std::vector<std::string> atom_meta = {});

    const Mat& atoms() const { return atoms_; }
    Eigen::Index size() const { return atoms_.rows(); }
    Eigen::Index dim() const { return atoms_.cols(); }
    const std::vector<std::string>& atom_meta() const { return atom_meta_; }

    Vec atom(Eigen::Index k) const { return atoms_.row(k).transpose(); }

private:
    Mat atoms_;
    std::vector<std::string> atom_meta_;
};

/// N x K sparse activation matrix, row-compressed. Stored entries are nonzero.
struct SparseCode {
    struct Entry {
        int32_t index;
        double value;
    };

    Eigen::Index cols = 0; // K
    std::vector<std::vector<Entry>> rows;
    std::string dictionary_id;

    Eigen::Index size() const { return static_cast<Eigen::Index>(rows.size()); }

    void set(Eigen::Index row, Eigen::Index col, double value);
    double support(Eigen::Index row) const { return static_cast<double>(rows[row].size()); }
    double mean_support() const;

    Mat to_dense() const;
    static SparseCode from_dense(const Mat& dense, double tol = 0.0);

    // reconstruction = values * atoms
    Mat reconstruct(const Dictionary& dict) const;
};

struct BinaryMask {
    std::vector<uint8_t> bits;

    Eigen::Index size() const { return static_cast<Eigen::Index>(bits.size()); }
    Eigen::Index count() const;
    bool operator[](Eigen::Index i) const { return bits[i] != 0; }
};

/// Scale every row to unit l2 norm. Throws DataError naming the first zero row.
Mat normalize_rows(const Mat& m);

} // namespace asae
