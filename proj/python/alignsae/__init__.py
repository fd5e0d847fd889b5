"""Paired-embedding dictionary learning: sparse autoencoders with an
alignment penalty, synthetic calibrated data generation, and the
accompanying evaluation metrics."""

from alignsae._core import (  # noqa: F401
    DataError,
    DgpConfig,
    Dictionary,
    EmbeddingDataset,
    EnergyProfile,
    GroundTruth,
    ModalityStructure,
    ReconstructionMetrics,
    SaeKind,
    SaeModel,
    SparseCode,
    TrainConfig,
    TrainResult,
    align_loss,
    build_ground_truth,
    encode,
    energy_profile,
    hungarian_match,
    load_dataset,
    load_model,
    mma,
    modality_structure,
    ood_score,
    r_squared,
    recall_at_k,
    reconstruction_metrics,
    sample_pairs,
    save_dataset,
    save_model,
    train,
    wasserstein_atoms,
)

__all__ = [name for name in dir() if not name.startswith("_")]
