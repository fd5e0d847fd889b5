#include "asae/io.hpp"

#include "asae/sae.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace asae {

using nlohmann::json;

namespace {

void write_exact(std::ofstream& out, const void* data, size_t n, const std::string& path) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw DataError("I/O failure writing " + path);
}

void read_exact(std::ifstream& in, void* data, size_t n, const std::string& path) {
    std::streamoff offset = in.tellg();
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw DataError("truncated file " + path + " at byte offset " + std::to_string(offset));
}

json read_header(std::ifstream& in, const char* magic, const std::string& path) {
    char got[4];
    read_exact(in, got, 4, path);
    if (std::memcmp(got, magic, 4) != 0)
        throw DataError("malformed header in " + path + ": bad magic at byte offset 0");
    uint32_t len = 0;
    read_exact(in, &len, 4, path);
    if (len > (1u << 20)) throw DataError("malformed header in " + path + ": implausible header length at byte offset 4");
    std::string buf(len, '\0');
    read_exact(in, buf.data(), len, path);
    json h = json::parse(buf, nullptr, false);
    if (h.is_discarded()) throw DataError("malformed header in " + path + ": invalid JSON at byte offset 8");
    return h;
}

void write_header(std::ofstream& out, const char* magic, const json& h, const std::string& path) {
    write_exact(out, magic, 4, path);
    std::string buf = h.dump();
    uint32_t len = static_cast<uint32_t>(buf.size());
    write_exact(out, &len, 4, path);
    write_exact(out, buf.data(), buf.size(), path);
}

void write_f32_block(std::ofstream& out, const Mat& m, const std::string& path) {
    std::vector<float> row(static_cast<size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<size_t>(j)] = static_cast<float>(m(i, j));
        if (!row.empty()) write_exact(out, row.data(), row.size() * sizeof(float), path);
    }
}

Mat read_f32_block(std::ifstream& in, Eigen::Index n, Eigen::Index d, const std::string& path) {
    Mat m(n, d);
    std::vector<float> row(static_cast<size_t>(d));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::streamoff offset = in.tellg();
        if (!row.empty()) read_exact(in, row.data(), row.size() * sizeof(float), path);
        for (Eigen::Index j = 0; j < d; ++j) {
            float v = row[static_cast<size_t>(j)];
            if (!std::isfinite(v))
                throw DataError("non-finite value in " + path + " near byte offset " + std::to_string(offset));
            m(i, j) = static_cast<double>(v);
        }
    }
    return m;
}

} // namespace

Mat quantize_f32(const Mat& m) {
    return m.cast<float>().cast<double>();
}

void save_dataset(const EmbeddingDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    json h = {{"n", ds.rows()},
              {"d", ds.dim()},
              {"domains", {"a", "b"}},
              {"normalized", ds.normalized},
              {"dtype", "f32le"},
              {"meta", ds.meta}};
    write_header(out, "EMB1", h, path);
    write_f32_block(out, ds.domain_a, path);
    write_f32_block(out, ds.domain_b, path);
}

EmbeddingDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file not found: " + path);
    json h = read_header(in, "EMB1", path);
    if (!h.contains("n") || !h.contains("d") || !h.contains("dtype") || h["dtype"] != "f32le")
        throw DataError("malformed header in " + path + ": missing fields");
    EmbeddingDataset ds;
    Eigen::Index n = h["n"].get<Eigen::Index>();
    Eigen::Index d = h["d"].get<Eigen::Index>();
    if (n < 0 || d < 0) throw DataError("malformed header in " + path + ": negative dimensions");
    ds.normalized = h.value("normalized", false);
    ds.meta = h.value("meta", std::string{});
    ds.domain_a = read_f32_block(in, n, d, path);
    ds.domain_b = read_f32_block(in, n, d, path);
    ds.validate();
    return ds;
}

void save_codes(const SparseCode& code, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    uint64_t nnz = 0;
    for (const auto& r : code.rows) nnz += r.size();
    json h = {{"n", code.size()}, {"k", code.cols}, {"nnz", nnz},
              {"dictionary_id", code.dictionary_id}, {"dtype", "f64le"}};
    write_header(out, "SPC1", h, path);
    std::vector<uint64_t> row_ptr(code.rows.size() + 1, 0);
    for (size_t i = 0; i < code.rows.size(); ++i) row_ptr[i + 1] = row_ptr[i] + code.rows[i].size();
    write_exact(out, row_ptr.data(), row_ptr.size() * sizeof(uint64_t), path);
    for (const auto& r : code.rows)
        for (const auto& e : r) write_exact(out, &e.index, sizeof(int32_t), path);
    for (const auto& r : code.rows)
        for (const auto& e : r) write_exact(out, &e.value, sizeof(double), path);
}

SparseCode load_codes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file not found: " + path);
    json h = read_header(in, "SPC1", path);
    SparseCode code;
    Eigen::Index n = h["n"].get<Eigen::Index>();
    code.cols = h["k"].get<Eigen::Index>();
    code.dictionary_id = h.value("dictionary_id", std::string{});
    uint64_t nnz = h["nnz"].get<uint64_t>();
    std::vector<uint64_t> row_ptr(static_cast<size_t>(n) + 1);
    read_exact(in, row_ptr.data(), row_ptr.size() * sizeof(uint64_t), path);
    if (row_ptr.back() != nnz) throw DataError("malformed codes in " + path + ": row_ptr/nnz mismatch");
    std::vector<int32_t> idx(nnz);
    std::vector<double> val(nnz);
    if (nnz > 0) {
        read_exact(in, idx.data(), nnz * sizeof(int32_t), path);
        read_exact(in, val.data(), nnz * sizeof(double), path);
    }
    code.rows.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (uint64_t p = row_ptr[static_cast<size_t>(i)]; p < row_ptr[static_cast<size_t>(i) + 1]; ++p) {
            if (idx[p] < 0 || idx[p] >= code.cols)
                throw DataError("malformed codes in " + path + ": column index out of range");
            code.rows[static_cast<size_t>(i)].push_back({idx[p], val[p]});
        }
    }
    return code;
}

void save_dictionary(const Dictionary& dict, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    json h = {{"k", dict.size()}, {"d", dict.dim()}, {"dtype", "f64le"}};
    if (!dict.atom_meta().empty()) h["atom_meta"] = dict.atom_meta();
    write_header(out, "DIC1", h, path);
    std::vector<double> row(static_cast<size_t>(dict.dim()));
    for (Eigen::Index i = 0; i < dict.size(); ++i) {
        for (Eigen::Index j = 0; j < dict.dim(); ++j) row[static_cast<size_t>(j)] = dict.atoms()(i, j);
        write_exact(out, row.data(), row.size() * sizeof(double), path);
    }
}

Dictionary load_dictionary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file not found: " + path);
    json h = read_header(in, "DIC1", path);
    Eigen::Index k = h["k"].get<Eigen::Index>();
    Eigen::Index d = h["d"].get<Eigen::Index>();
    Mat atoms(k, d);
    std::vector<double> row(static_cast<size_t>(d));
    for (Eigen::Index i = 0; i < k; ++i) {
        read_exact(in, row.data(), row.size() * sizeof(double), path);
        for (Eigen::Index j = 0; j < d; ++j) atoms(i, j) = row[static_cast<size_t>(j)];
    }
    std::vector<std::string> meta;
    if (h.contains("atom_meta")) meta = h["atom_meta"].get<std::vector<std::string>>();
    return Dictionary(std::move(atoms), std::move(meta));
}

void save_model(const SaeModel& model, const std::string& path) {
    model.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    json h = {{"arch", to_string(model.kind)},
              {"k", model.atom_count()},
              {"d", model.dim()},
              {"sparsity_budget", model.sparsity_budget},
              {"l1_weight", model.l1_weight},
              {"dtype", "f64le"}};
    write_header(out, "SAE1", h, path);
    auto write_mat = [&](const Mat& m) {
        std::vector<double> row(static_cast<size_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<size_t>(j)] = m(i, j);
            if (!row.empty()) write_exact(out, row.data(), row.size() * sizeof(double), path);
        }
    };
    write_mat(model.dict);
    write_mat(model.enc_w);
    write_mat(model.enc_b.transpose());
    write_mat(model.thresholds.transpose());
}

SaeModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file not found: " + path);
    json h = read_header(in, "SAE1", path);
    SaeModel model;
    model.kind = sae_kind_from_string(h["arch"].get<std::string>());
    Eigen::Index k = h["k"].get<Eigen::Index>();
    Eigen::Index d = h["d"].get<Eigen::Index>();
    model.sparsity_budget = h["sparsity_budget"].get<Eigen::Index>();
    model.l1_weight = h["l1_weight"].get<double>();
    auto read_mat = [&](Eigen::Index rows, Eigen::Index cols) {
        Mat m(rows, cols);
        std::vector<double> row(static_cast<size_t>(cols));
        for (Eigen::Index i = 0; i < rows; ++i) {
            read_exact(in, row.data(), row.size() * sizeof(double), path);
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = row[static_cast<size_t>(j)];
        }
        return m;
    };
    model.dict = read_mat(k, d);
    model.enc_w = read_mat(k, d);
    model.enc_b = read_mat(1, k).transpose();
    model.thresholds = read_mat(1, k).transpose();
    model.validate();
    return model;
}

} // namespace asae
