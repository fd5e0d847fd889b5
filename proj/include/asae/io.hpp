#pragma once

#include "asae/types.hpp"

#include <string>

namespace asae {

// Binary embedding file: magic "EMB1", u32le header length, JSON header
// {n, d, domains:["a","b"], normalized, dtype:"f32le"}, then domain_a rows
// followed by domain_b rows as row-major 32-bit little-endian floats.
EmbeddingDataset load_dataset(const std::string& path);
void save_dataset(const EmbeddingDataset& ds, const std::string& path);

// Companion sparse-code file: magic "SPC1", JSON header, CSR arrays
// (row_ptr u64le, indices i32le, values f64le).
SparseCode load_codes(const std::string& path);
void save_codes(const SparseCode& code, const std::string& path);

// Dictionary file: magic "DIC1", JSON header, atoms as f64le row-major.
Dictionary load_dictionary(const std::string& path);
void save_dictionary(const Dictionary& dict, const std::string& path);

// Round a matrix through 32-bit floats, matching what the embedding file
// stores.
Mat quantize_f32(const Mat& m);

} // namespace asae
