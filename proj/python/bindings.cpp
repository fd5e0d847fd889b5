#include "asae/dgp.hpp"
#include "asae/interventions.hpp"
#include "asae/io.hpp"
#include "asae/metrics.hpp"
#include "asae/sae.hpp"
#include "asae/solvers.hpp"
#include "asae/types.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace asae;

PYBIND11_MODULE(_core, m) {
    m.doc() = "paired-embedding dictionary learning core";

    py::register_exception<DataError>(m, "DataError");

    py::class_<EmbeddingDataset>(m, "EmbeddingDataset")
        .def(py::init<>())
        .def_readwrite("domain_a", &EmbeddingDataset::domain_a)
        .def_readwrite("domain_b", &EmbeddingDataset::domain_b)
        .def_readwrite("normalized", &EmbeddingDataset::normalized)
        .def_readwrite("meta", &EmbeddingDataset::meta)
        .def("rows", &EmbeddingDataset::rows)
        .def("dim", &EmbeddingDataset::dim)
        .def("validate", &EmbeddingDataset::validate);

    py::class_<Dictionary>(m, "Dictionary")
        .def(py::init<Mat, std::vector<std::string>>(), py::arg("atoms"),
             py::arg("atom_meta") = std::vector<std::string>{})
        .def_property_readonly("atoms", &Dictionary::atoms)
        .def("__len__", &Dictionary::size)
        .def("dim", &Dictionary::dim);

    py::enum_<SaeKind>(m, "SaeKind")
        .value("relu", SaeKind::relu)
        .value("jumprelu", SaeKind::jumprelu)
        .value("topk", SaeKind::topk)
        .value("batchtopk", SaeKind::batchtopk)
        .value("mp", SaeKind::mp);

    py::class_<SaeModel>(m, "SaeModel")
        .def(py::init<>())
        .def_readwrite("kind", &SaeModel::kind)
        .def_readwrite("dict", &SaeModel::dict)
        .def_readwrite("enc_w", &SaeModel::enc_w)
        .def_readwrite("enc_b", &SaeModel::enc_b)
        .def_readwrite("thresholds", &SaeModel::thresholds)
        .def_readwrite("sparsity_budget", &SaeModel::sparsity_budget)
        .def("atom_count", &SaeModel::atom_count)
        .def("dim", &SaeModel::dim);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("arch", &TrainConfig::arch)
        .def_readwrite("expansion_ratio", &TrainConfig::expansion_ratio)
        .def_readwrite("dict_size", &TrainConfig::dict_size)
        .def_readwrite("target_l0", &TrainConfig::target_l0)
        .def_readwrite("beta_align", &TrainConfig::beta_align)
        .def_readwrite("l1_weight", &TrainConfig::l1_weight)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<TrainLog>(m, "TrainLog")
        .def_readonly("mse", &TrainLog::mse)
        .def_readonly("r2", &TrainLog::r2)
        .def_readonly("l0", &TrainLog::l0)
        .def_readonly("l1", &TrainLog::l1)
        .def_readonly("align", &TrainLog::align);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("model", &TrainResult::model)
        .def_readonly("log", &TrainResult::log);

    py::class_<DgpConfig>(m, "DgpConfig")
        .def(py::init<>())
        .def_readwrite("d", &DgpConfig::d)
        .def_readwrite("k_mult", &DgpConfig::k_mult)
        .def_readwrite("sparsity", &DgpConfig::sparsity)
        .def_readwrite("tau1", &DgpConfig::tau1)
        .def_readwrite("tau2", &DgpConfig::tau2)
        .def_readwrite("seed", &DgpConfig::seed);

    py::class_<GroundTruth>(m, "GroundTruth")
        .def_readonly("separated", &GroundTruth::separated)
        .def_readonly("combined", &GroundTruth::combined)
        .def_readonly("beta", &GroundTruth::beta);

    py::class_<SparseCode>(m, "SparseCode")
        .def("to_dense", &SparseCode::to_dense)
        .def("__len__", &SparseCode::size);

    py::class_<DgpSample>(m, "DgpSample")
        .def_readonly("data", &DgpSample::data)
        .def_readonly("sep_img", &DgpSample::sep_img)
        .def_readonly("sep_txt", &DgpSample::sep_txt)
        .def_readonly("comb_img", &DgpSample::comb_img)
        .def_readonly("comb_txt", &DgpSample::comb_txt);

    m.def("build_ground_truth", &build_ground_truth);
    m.def("sample_pairs", &sample_pairs, py::arg("truth"), py::arg("config"), py::arg("n"));
    m.def("train", &train, py::arg("dataset"), py::arg("config"));
    m.def("encode", &encode, py::arg("model"), py::arg("x"));
    m.def("align_loss", &align_loss);
    m.def("r_squared", &r_squared);

    py::class_<EnergyProfile>(m, "EnergyProfile")
        .def_readonly("e_img", &EnergyProfile::e_img)
        .def_readonly("e_txt", &EnergyProfile::e_txt)
        .def_readonly("e_mean", &EnergyProfile::e_mean)
        .def_readonly("freq_img", &EnergyProfile::freq_img)
        .def_readonly("freq_txt", &EnergyProfile::freq_txt);

    py::class_<BinaryMask>(m, "BinaryMask")
        .def("__len__", &BinaryMask::size)
        .def("count", &BinaryMask::count)
        .def("__getitem__", [](const BinaryMask& mask, Eigen::Index i) { return mask[i]; });

    py::class_<ModalityStructure>(m, "ModalityStructure")
        .def_readonly("mu", &ModalityStructure::mu)
        .def_readonly("tau", &ModalityStructure::tau)
        .def_readonly("delta", &ModalityStructure::delta)
        .def_readonly("delta_img", &ModalityStructure::delta_img)
        .def_readonly("delta_txt", &ModalityStructure::delta_txt);

    m.def("energy_profile",
          py::overload_cast<const Mat&, const Mat&>(&energy_profile),
          py::arg("z_img"), py::arg("z_txt"));
    m.def("modality_structure", &modality_structure, py::arg("profile"), py::arg("tau") = 0.05);

    py::class_<ReconstructionMetrics>(m, "ReconstructionMetrics")
        .def_readonly("mse", &ReconstructionMetrics::mse)
        .def_readonly("r2", &ReconstructionMetrics::r2)
        .def_readonly("l0", &ReconstructionMetrics::l0)
        .def_readonly("l1", &ReconstructionMetrics::l1);

    m.def("reconstruction_metrics", &reconstruction_metrics);
    m.def("mma", py::overload_cast<const Mat&, const Mat&>(&mma));
    m.def("recall_at_k", &recall_at_k, py::arg("i"), py::arg("t"), py::arg("k"),
          py::arg("batch") = 256);
    m.def("wasserstein_atoms", &wasserstein_atoms);
    m.def("hungarian_match", &hungarian_match);
    m.def("ood_score", &ood_score, py::arg("queries"), py::arg("reference"), py::arg("k") = 10);

    m.def("save_dataset", &save_dataset);
    m.def("load_dataset", &load_dataset);
    m.def("save_model", py::overload_cast<const SaeModel&, const std::string&>(&save_model));
    m.def("load_model", py::overload_cast<const std::string&>(&load_model));
}
