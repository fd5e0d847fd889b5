#include "asae/types.hpp"

#include <cmath>

namespace asae {

void EmbeddingDataset::validate() const {
    if (domain_a.rows() != domain_b.rows() || domain_a.cols() != domain_b.cols())
        throw DataError("pairing mismatch: domain_a is " + std::to_string(domain_a.rows()) + "x" +
                        std::to_string(domain_a.cols()) + " but domain_b is " +
                        std::to_string(domain_b.rows()) + "x" + std::to_string(domain_b.cols()));
    for (const Mat* m : {&domain_a, &domain_b}) {
        if (!m->allFinite()) throw DataError("dataset contains non-finite values");
    }
    if (normalized) {
        for (const Mat* m : {&domain_a, &domain_b}) {
            for (Eigen::Index i = 0; i < m->rows(); ++i) {
                double n = m->row(i).norm();
                if (std::abs(n - 1.0) > 1e-5)
                    throw DataError("row " + std::to_string(i) +
                                    " violates the unit-norm flag, norm=" + std::to_string(n));
            }
        }
    }
}

Dictionary::Dictionary(Mat atoms, std::vector<std::string> atom_meta)
    : atoms_(std::move(atoms)), atom_meta_(std::move(atom_meta)) {
    if (atoms_.rows() < 1 || atoms_.cols() < 1)
        throw DataError("dictionary requires K >= 1 and d >= 1");
    if (!atoms_.allFinite()) throw DataError("dictionary atoms must be finite");
    for (Eigen::Index k = 0; k < atoms_.rows(); ++k) {
        double n = atoms_.row(k).norm();
        if (std::abs(n - 1.0) > 1e-6)
            throw DataError("atom " + std::to_string(k) +
                            " is not unit norm, norm=" + std::to_string(n));
    }
    if (!atom_meta_.empty() && static_cast<Eigen::Index>(atom_meta_.size()) != atoms_.rows())
        throw DataError("atom_meta length does not match K");
}

void SparseCode::set(Eigen::Index row, Eigen::Index col, double value) {
    if (value == 0.0) return;
    rows[row].push_back({static_cast<int32_t>(col), value});
}

double SparseCode::mean_support() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += static_cast<double>(r.size());
    return s / static_cast<double>(rows.size());
}

Mat SparseCode::to_dense() const {
    Mat dense = Mat::Zero(size(), cols);
    for (Eigen::Index i = 0; i < size(); ++i)
        for (const Entry& e : rows[i]) dense(i, e.index) += e.value;
    return dense;
}

SparseCode SparseCode::from_dense(const Mat& dense, double tol) {
    SparseCode code;
    code.cols = dense.cols();
    code.rows.resize(dense.rows());
    for (Eigen::Index i = 0; i < dense.rows(); ++i)
        for (Eigen::Index j = 0; j < dense.cols(); ++j)
            if (std::abs(dense(i, j)) > tol) code.rows[i].push_back({static_cast<int32_t>(j), dense(i, j)});
    return code;
}

Mat SparseCode::reconstruct(const Dictionary& dict) const {
    if (cols != dict.size()) throw DataError("sparse code K does not match dictionary");
    Mat out = Mat::Zero(size(), dict.dim());
    for (Eigen::Index i = 0; i < size(); ++i)
        for (const Entry& e : rows[i]) out.row(i) += e.value * dict.atoms().row(e.index);
    return out;
}

Eigen::Index BinaryMask::count() const {
    Eigen::Index c = 0;
    for (uint8_t b : bits) c += (b != 0);
    return c;
}

Mat normalize_rows(const Mat& m) {
    Mat out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double n = m.row(i).norm();
        if (n == 0.0) throw DataError("cannot normalize zero row " + std::to_string(i));
        out.row(i) /= n;
    }
    return out;
}

} // namespace asae
