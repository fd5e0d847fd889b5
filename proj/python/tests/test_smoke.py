import numpy as np
import pytest

asae = pytest.importorskip("alignsae")


@pytest.fixture(scope="module")
def dgp_sample():
    cfg = asae.DgpConfig()
    cfg.d = 96
    cfg.k_mult = 4
    cfg.sparsity = 6
    cfg.tau1 = 0.7
    cfg.tau2 = 0.6
    cfg.seed = 11
    truth = asae.build_ground_truth(cfg)
    sample = asae.sample_pairs(truth, cfg, 512)
    return cfg, truth, sample


def test_dgp_shapes_and_calibration(dgp_sample):
    cfg, truth, sample = dgp_sample
    a = sample.data.domain_a
    b = sample.data.domain_b
    assert a.shape == (512, 96)
    cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    assert abs(cos.mean() - cfg.tau2) < 0.05
    assert truth.beta > 0


def test_reconstruction_identity(dgp_sample):
    _, truth, sample = dgp_sample
    sep = sample.sep_img.to_dense() @ truth.separated.atoms
    comb = sample.comb_img.to_dense() @ truth.combined.atoms
    assert np.allclose(sep, comb, atol=1e-10)
    assert np.allclose(sep, sample.data.domain_a, atol=1e-10)


def test_train_and_eval_roundtrip(tmp_path, dgp_sample):
    _, _, sample = dgp_sample
    cfg = asae.TrainConfig()
    cfg.arch = asae.SaeKind.topk
    cfg.dict_size = 40
    cfg.target_l0 = 6
    cfg.epochs = 3
    cfg.learning_rate = 3e-3
    cfg.seed = 5
    result = asae.train(sample.data, cfg)
    assert result.model.atom_count() == 40
    assert len(result.log.r2) == 3

    z = asae.encode(result.model, sample.data.domain_a)
    assert z.shape == (512, 40)
    nnz = (z != 0).sum(axis=1)
    assert nnz.max() <= 6

    path = str(tmp_path / "model.sae1")
    asae.save_model(result.model, path)
    loaded = asae.load_model(path)
    assert np.array_equal(loaded.dict, result.model.dict)

    metrics = asae.reconstruction_metrics(sample.data, result.model)
    assert metrics.mse >= 0


def test_dataset_io_roundtrip(tmp_path, dgp_sample):
    _, _, sample = dgp_sample
    path = str(tmp_path / "data.emb1")
    asae.save_dataset(sample.data, path)
    loaded = asae.load_dataset(path)
    assert np.allclose(loaded.domain_a, sample.data.domain_a, atol=1e-6)


def test_metrics_basics(dgp_sample):
    _, _, sample = dgp_sample
    zi = sample.sep_img.to_dense()
    zt = sample.sep_txt.to_dense()
    ep = asae.energy_profile(zi, zt)
    ms = asae.modality_structure(ep, 0.05)
    assert len(ms.delta) == zi.shape[1]
    assert ms.delta.count() > 0
    both = zi + zt  # image-only columns are all-zero in zi alone and would score 0
    assert asae.mma(both, both) == pytest.approx(1.0)
    ident = np.eye(32)
    assert asae.recall_at_k(ident, ident, 1, 16) == pytest.approx(1.0)


def test_ood_score_extremes():
    rng = np.random.default_rng(0)
    ref = rng.normal(size=(256, 8))
    far = ref + 100.0
    assert asae.ood_score(far, ref) == pytest.approx(1.0)
    iid = rng.normal(size=(256, 8))
    assert abs(asae.ood_score(iid, ref) - 0.5) < 0.1


def test_invalid_input_raises():
    ds = asae.EmbeddingDataset()
    ds.domain_a = np.ones((4, 3))
    ds.domain_b = np.ones((5, 3))
    with pytest.raises(asae.DataError):
        ds.validate()
