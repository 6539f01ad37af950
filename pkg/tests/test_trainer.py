"""Orchestration: alternation, model selection, serialization, determinism."""

import numpy as np
import pytest

import ssdml
from ssdml.data import Dataset
from ssdml.errors import ConfigError
from ssdml.trainer import (Model, TrainConfig, TrainingDiverged,
                           evaluate_checkpoint, load_model, save_model, train)


def small_semi_dataset(seed=1, noise=1.5):
    blobs = ssdml.make_blobs(4, 40, 3, 5, 6.0, noise, seed=seed)
    return ssdml.strip_labels(blobs, 8, seed=seed)


def shuffled_signal_dataset(seed=1):
    """Signal columns moved to the end so the initial projection is blind."""
    blobs = ssdml.make_blobs(4, 60, 3, 17, 5.0, 2.0, seed=seed)
    perm = np.roll(np.arange(20), -3)
    shuffled = Dataset(blobs.features[:, perm], blobs.labels, blobs.n_classes)
    return ssdml.strip_labels(shuffled, 10, seed=seed)


FAST = dict(k=4, embed_dim=4, batch_triplets=50, max_epochs=4,
            epochs_per_partition=2, inner_l_iters=5)


def test_protocol_defaults_pinned():
    cfg = TrainConfig()
    assert cfg.gamma == 0.99
    assert cfg.k == 10
    assert cfg.alpha_deg == 40.0
    assert cfg.batch_triplets == 100
    assert cfg.lr == 1e-4
    assert cfg.epochs_per_partition == 10
    assert cfg.max_epochs == 50
    assert cfg.inner_l_iters == 10
    assert cfg.val_fraction == 0.15
    assert cfg.method == "ours" and cfg.orth and not cfg.encoder


class TestConfigValidation:
    def test_unknown_method(self):
        with pytest.raises(ConfigError, match="method"):
            train(small_semi_dataset(), TrainConfig(method="??", **FAST))

    def test_odd_k_for_ours(self):
        cfg = dict(FAST)
        cfg["k"] = 5
        with pytest.raises(ConfigError, match="even"):
            train(small_semi_dataset(), TrainConfig(**cfg))

    def test_embed_dim_beyond_input(self):
        cfg = dict(FAST)
        cfg["embed_dim"] = 99
        with pytest.raises(ConfigError, match="embed_dim"):
            train(small_semi_dataset(), TrainConfig(**cfg))

    def test_encoder_only_for_ours(self):
        with pytest.raises(ConfigError, match="encoder"):
            train(small_semi_dataset(),
                  TrainConfig(method="lrml", encoder=True, **FAST))

    def test_no_labeled_rows(self):
        ds = Dataset(np.random.default_rng(0).standard_normal((10, 8)),
                     np.full(10, -1), 0)
        with pytest.raises(ConfigError, match="labeled"):
            train(ds, TrainConfig(**FAST))


class TestTrainOurs:
    def test_learning_beats_blind_initial_projection(self):
        ds = shuffled_signal_dataset()
        cfg = TrainConfig(seed=1, k=6, embed_dim=5, batch_triplets=60,
                          max_epochs=20, epochs_per_partition=10)
        model = train(ds, cfg)
        r1 = [h["val_r1"] for h in model.history]
        assert max(r1) > r1[0] + 20.0
        assert max(h["val_r1"] for h in model.history[1:]) > r1[0]

    def test_noop_training_returns_initial_L(self):
        ds = small_semi_dataset()
        cfg = TrainConfig(encoder=False, orth=False, inner_l_iters=0,
                          k=4, embed_dim=3, batch_triplets=50,
                          max_epochs=2, epochs_per_partition=1)
        model = train(ds, cfg)
        L0 = np.zeros((ds.dim, 3))
        L0[:3, :3] = np.eye(3)
        assert np.array_equal(model.L, L0)

    def test_history_record_shape(self):
        model = train(small_semi_dataset(), TrainConfig(**FAST))
        assert len(model.history) == 1 + 4  # epoch 0 + max_epochs
        for rec in model.history:
            assert set(rec) == {"epoch", "partition", "loss", "val_nmi", "val_r1"}
        assert model.history[0]["loss"] is None
        assert all(rec["loss"] > 0 for rec in model.history[1:])

    def test_orthonormal_metric_factor(self):
        model = train(small_semi_dataset(), TrainConfig(**FAST))
        l = model.L.shape[1]
        assert np.linalg.norm(model.L.T @ model.L - np.eye(l)) <= 1e-8

    def test_no_orth_ablation_leaves_manifold_allowed(self):
        cfg = dict(FAST)
        model = train(small_semi_dataset(), TrainConfig(orth=False, **cfg))
        assert np.isfinite(model.L).all()

    def test_encoder_training_runs_and_keeps_unit_norm_outputs(self):
        from ssdml.encoder import forward

        ds = small_semi_dataset()
        model = train(ds, TrainConfig(encoder=True, lr=1e-3, **FAST))
        assert model.encoder is not None
        Z = forward(model.encoder, ds.features)
        assert np.abs(np.linalg.norm(Z, axis=1) - 1.0).max() <= 1e-12

    def test_frozen_encoder_equals_linear_training_on_raw(self):
        # identity encoder, normalize off, lr 0  ==  plain linear metric
        # learning on raw features
        ds = small_semi_dataset()
        base = dict(FAST)
        frozen = train(ds, TrainConfig(encoder=True, normalize=False, lr=0.0,
                                       **base))
        linear = train(ds, TrainConfig(encoder=False, normalize=False, **base))
        assert frozen.history == linear.history
        assert np.array_equal(frozen.L, linear.L)

    def test_divergence_aborts_with_history(self):
        ds = small_semi_dataset()
        bad = Dataset(ds.features.copy(), ds.labels, ds.n_classes)
        bad.features[0, 0] = np.nan
        with pytest.raises(TrainingDiverged) as err:
            train(bad, TrainConfig(normalize=False, **FAST))
        assert isinstance(err.value.history, list)


class TestTrainBaselines:
    @pytest.mark.parametrize("method", ["seraph", "lrml"])
    def test_baseline_runs_and_improves_on_easy_data(self, method):
        ds = small_semi_dataset()
        model = train(ds, TrainConfig(method=method, **FAST))
        r1 = [h["val_r1"] for h in model.history]
        assert max(r1) >= r1[0]
        assert np.isfinite(model.L).all()
        assert model.encoder is None

    def test_baseline_metric_psd_factorization_shape(self):
        model = train(small_semi_dataset(), TrainConfig(method="lrml", **FAST))
        assert model.L.shape == (8, 4)


class TestDeterminism:
    def test_identical_runs_bit_identical_history(self):
        ds = small_semi_dataset()
        cfg = TrainConfig(seed=7, **FAST)
        a = train(ds, cfg)
        b = train(ds, cfg)
        assert a.history == b.history
        assert np.array_equal(a.L, b.L)

    def test_seed_changes_trajectory(self):
        ds = small_semi_dataset()
        a = train(ds, TrainConfig(seed=1, **FAST))
        b = train(ds, TrainConfig(seed=2, **FAST))
        assert a.history != b.history


class TestModelIO:
    def test_round_trip_without_encoder(self, tmp_path):
        model = train(small_semi_dataset(), TrainConfig(**FAST))
        path = tmp_path / "m.model"
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(back.L, model.L)
        assert back.encoder is None
        assert back.config == model.config
        assert back.history == model.history
        assert back.normalize == model.normalize

    def test_round_trip_with_encoder(self, tmp_path):
        model = train(small_semi_dataset(),
                      TrainConfig(encoder=True, lr=1e-3, **FAST))
        path = tmp_path / "m.model"
        save_model(model, path)
        back = load_model(path)
        assert np.array_equal(back.L, model.L)
        assert np.array_equal(back.encoder.A, model.encoder.A)
        assert np.array_equal(back.encoder.b, model.encoder.b)
        assert back.encoder.normalize == model.encoder.normalize

    def test_header_line_format(self, tmp_path):
        model = train(small_semi_dataset(), TrainConfig(**FAST))
        path = tmp_path / "m.model"
        save_model(model, path)
        head = path.read_text().splitlines()[0].split()
        assert head[:2] == ["ssdml-model", "v1"]
        assert [int(v) for v in head[2:]] == [8, 4, 0, 1]

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "junk.model"
        path.write_text("something else\n")
        with pytest.raises(ConfigError):
            load_model(path)


class TestEvaluateCheckpoint:
    def test_identity_model_equals_raw_feature_metrics(self):
        ds = ssdml.make_blobs(3, 20, 2, 2, 8.0, 1.0, seed=4)
        model = Model(L=np.eye(4), encoder=None, config=None, normalize=False)
        report = evaluate_checkpoint(model, ds, seed=11)
        raw = ssdml.evaluate_embeddings(ds.features, ds.labels,
                                        n_classes=3, seed=11)
        assert report.nmi == raw.nmi
        assert report.recall_at == raw.recall_at

    def test_report_keys(self):
        ds = ssdml.make_blobs(3, 20, 2, 2, 8.0, 1.0, seed=4)
        model = Model(L=np.eye(4), encoder=None, config=None, normalize=False)
        report = evaluate_checkpoint(model, ds, seed=0)
        assert list(report.as_json_dict()) == ["nmi", "r@1", "r@2", "r@4", "r@8"]

    def test_deterministic(self):
        ds = ssdml.make_blobs(3, 15, 2, 2, 8.0, 1.0, seed=5)
        model = train(ssdml.strip_labels(ds, 6, seed=0), TrainConfig(**FAST))
        a = evaluate_checkpoint(model, ds, seed=3)
        b = evaluate_checkpoint(model, ds, seed=3)
        assert a == b

    def test_dimension_mismatch(self):
        ds = ssdml.make_blobs(3, 10, 2, 0, 8.0, 1.0, seed=6)
        model = Model(L=np.eye(7), encoder=None, config=None, normalize=False)
        with pytest.raises(ConfigError):
            evaluate_checkpoint(model, ds)
