"""Training orchestration: partitions, graphs, mining, alternating updates.

Each round samples a partition of the unlabeled data, builds a kNN graph
over the current (l2-normalized) embeddings, propagates seed affinities,
mines triplets, and then alternates per batch between metric steps and an
SGD step on the encoder.  The classical baselines ride the same loop with
projected-gradient updates of a full PSD matrix instead.  Model selection
keeps the checkpoint with the best validation Recall@1.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines as bl
from . import encoder as enc_mod
from . import evaluation, metric
from .data import Dataset, sample_partition, split_validation
from .errors import ConfigError, NumericalError
from .graph import build_knn, knn_adjacency, laplacian, neighbor_matrix, seed_affinity
from .manifold import optimize_L
from .mining import batch_triplets, mine_triplets, triplet_index_array
from .propagation import propagate

logger = logging.getLogger(__name__)

METHODS = ("ours", "seraph", "lrml")

MODEL_MAGIC = "ssdml-model"
MODEL_VERSION = "v1"

# Cap on the metric optimizer's line-search step during mini-batch training.
# Batches are small and noisy; unbounded Armijo steps let every batch drag L
# to its private optimum, erasing the consensus built by earlier batches.
METRIC_MAX_STEP = 0.05

# Upper bound for the baselines' projected-gradient trial step; without the
# dropped log-determinant barrier the Laplacian objective is unbounded below,
# so uncapped growth-on-success would overflow on long runs.
BASELINE_MAX_STEP = 1e6


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run (defaults follow the small-
    dataset protocol: gamma 0.99, k 10, alpha 40 deg, 100-triplet batches,
    lr 1e-4, 10 epochs per partition, 50 epochs total, 10 metric steps
    per batch)."""

    method: str = "ours"
    gamma: float = 0.99
    k: int = 10
    alpha_deg: float = 40.0
    embed_dim: int = 16
    encoder: bool = False
    normalize: bool = True  # l2-normalize representations before graph and loss
    orth: bool = True
    lr: float = 1e-4
    batch_triplets: int = 100
    partition_size: int = 0  # 0 = use the whole unlabeled set
    epochs_per_partition: int = 10
    max_epochs: int = 50
    inner_l_iters: int = 10
    seed: int = 0
    val_fraction: float = 0.15
    seraph_eta: float = 1.0
    seraph_mu: float = 1.0
    seraph_lambda: float = 1e-3
    lrml_gamma_s: float = 1.0
    lrml_gamma_d: float = 1.0


@dataclass
class Model:
    """Learned metric factor, optional encoder, and the run that made them.

    `normalize` records whether inputs are l2-normalized before hitting L
    (the encoder carries its own flag when present).
    """

    L: np.ndarray
    encoder: enc_mod.Encoder | None
    config: TrainConfig | None
    history: list = field(default_factory=list)
    normalize: bool = True


class TrainingDiverged(NumericalError):
    """Loss became non-finite; carries the history up to the failure."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def _validate(config: TrainConfig, dataset: Dataset):
    if config.method not in METHODS:
        raise ConfigError(f"unknown method {config.method!r}; expected one of {METHODS}")
    if not 0.0 <= config.gamma < 1.0:
        raise ConfigError("gamma must lie in [0, 1)")
    if config.k < 2:
        raise ConfigError("k must be >= 2")
    if config.method == "ours" and config.k % 2 != 0:
        raise ConfigError("triplet mining needs an even k")
    if not 0.0 < config.alpha_deg < 90.0:
        raise ConfigError("alpha must lie in (0, 90) degrees")
    if not 1 <= config.embed_dim <= dataset.dim:
        raise ConfigError(
            f"embed_dim must lie in [1, {dataset.dim}] (got {config.embed_dim})"
        )
    if config.lr < 0:
        raise ConfigError("lr must be non-negative")
    if min(config.batch_triplets, config.epochs_per_partition, config.max_epochs) < 1:
        raise ConfigError("batch size and epoch counts must be >= 1")
    if config.inner_l_iters < 0 or config.partition_size < 0:
        raise ConfigError("inner_l_iters and partition_size must be >= 0")
    if config.encoder and config.method != "ours":
        raise ConfigError("the trainable encoder is only supported with method='ours'")
    if config.seed < 0:
        raise ConfigError("seed must be non-negative")
    if dataset.labeled_indices.size == 0:
        raise ConfigError("dataset has no labeled rows")


def _initial_L(d: int, l: int) -> np.ndarray:
    L = np.zeros((d, l))
    L[:l, :l] = np.eye(l)
    return L


def _represent(encoder, normalize: bool, X):
    """Loss-space representations: encoder output, or (normalized) raw rows."""
    if encoder is not None:
        return enc_mod.forward(encoder, X)
    return enc_mod.l2_normalize_rows(X) if normalize else X


def _val_metrics(L, encoder, normalize, val_ds: Dataset, n_clusters: int, eval_seed):
    E = metric.embed(L, _represent(encoder, normalize, val_ds.features))
    assign, _ = evaluation.kmeans_best(E, n_clusters, seed=eval_seed)
    v_nmi = evaluation.nmi(assign, val_ds.labels)
    r1 = evaluation.recall_at_k(E, val_ds.labels, ks=(1,))[1]
    return v_nmi, r1


def _all_labeled_pairs(y_nodes: np.ndarray, n_labeled: int):
    """All labeled-node pairs (i < j) with +1/-1 same/different-class tags."""
    i, j = np.triu_indices(n_labeled, k=1)
    pairs = np.stack([i, j], axis=1)
    y = np.where(y_nodes[i] == y_nodes[j], 1, -1)
    return pairs, y


def train(dataset: Dataset, config: TrainConfig) -> Model:
    """Run the configured method and return the best-validation model."""
    _validate(config, dataset)
    n_partitions = math.ceil(config.max_epochs / config.epochs_per_partition)
    state = np.random.SeedSequence(config.seed).generate_state(4 + n_partitions)
    split_seed, batch_seed, eval_seed, pair_seed = (int(s) for s in state[:4])
    partition_seeds = [int(s) for s in state[4:]]

    train_ds, val_ds = split_validation(dataset, config.val_fraction, split_seed)
    if val_ds.n < 2:
        raise ConfigError("validation split has fewer than 2 rows; add labeled data")
    n_clusters = min(dataset.n_classes, val_ds.n)
    n_p = train_ds.unlabeled_indices.size if config.partition_size == 0 \
        else config.partition_size

    if config.method == "ours":
        return _train_ours(config, train_ds, val_ds, n_clusters, n_p,
                           partition_seeds, batch_seed, eval_seed)
    return _train_baseline(config, train_ds, val_ds, n_clusters, n_p,
                           partition_seeds, batch_seed, eval_seed, pair_seed)


def _record(history, epoch, partition, loss, v_nmi, v_r1):
    history.append({
        "epoch": int(epoch),
        "partition": None if partition is None else int(partition),
        "loss": None if loss is None else float(loss),
        "val_nmi": float(v_nmi),
        "val_r1": float(v_r1),
    })


def _train_ours(config, train_ds, val_ds, n_clusters, n_p,
                partition_seeds, batch_seed, eval_seed) -> Model:
    d = train_ds.dim
    L = _initial_L(d, config.embed_dim)
    encoder = enc_mod.Encoder.initial(d, normalize=config.normalize) \
        if config.encoder else None

    history = []
    v_nmi, v_r1 = _val_metrics(L, encoder, config.normalize, val_ds,
                               n_clusters, eval_seed)
    _record(history, 0, None, None, v_nmi, v_r1)
    best = (v_r1, L.copy(), encoder.copy() if encoder else None)

    epoch = 0
    step_carry = METRIC_MAX_STEP
    for p, part_seed in enumerate(partition_seeds):
        part = sample_partition(train_ds, n_p, part_seed)
        rows = part.node_rows
        X = train_ds.features[rows]
        y = train_ds.labels[rows]
        Z = _represent(encoder, config.normalize, X)
        graph = build_knn(Z, config.k)
        aff = propagate(neighbor_matrix(graph), seed_affinity(y), config.gamma)
        triplets = mine_triplets(aff.W, graph)

        for _ in range(config.epochs_per_partition):
            if epoch >= config.max_epochs:
                break
            epoch += 1
            batches = batch_triplets(triplets, config.batch_triplets,
                                     seed=batch_seed, epoch=epoch)
            epoch_loss = 0.0
            for batch in batches:
                idx = triplet_index_array(batch)

                def fun_and_grad(Lm, idx=idx, Zc=Z):
                    return (metric.angular_loss(Lm, Zc, idx, config.alpha_deg),
                            metric.angular_loss_grad_L(Lm, Zc, idx, config.alpha_deg))

                res = optimize_L(L, fun_and_grad, max_iter=config.inner_l_iters,
                                 step0=step_carry, use_cg=config.orth,
                                 orthonormal=config.orth,
                                 max_step=METRIC_MAX_STEP)
                L, step_carry = res.L, res.step
                epoch_loss += res.objective
                if not np.isfinite(epoch_loss):
                    raise TrainingDiverged("angular loss became non-finite", history)
                if encoder is not None and config.lr > 0:
                    upstream = metric.angular_loss_grad_embeddings(
                        L, Z, idx, config.alpha_deg)
                    grads = enc_mod.backward(encoder, X, upstream)
                    encoder = enc_mod.sgd_update(encoder, grads, config.lr)
                    Z = enc_mod.forward(encoder, X)

            v_nmi, v_r1 = _val_metrics(L, encoder, config.normalize, val_ds,
                                       n_clusters, eval_seed)
            _record(history, epoch, p, epoch_loss / len(triplets), v_nmi, v_r1)
            if v_r1 > best[0]:
                best = (v_r1, L.copy(), encoder.copy() if encoder else None)

    return Model(L=best[1], encoder=best[2], config=config, history=history,
                 normalize=config.normalize)


def _train_baseline(config, train_ds, val_ds, n_clusters, n_p,
                    partition_seeds, batch_seed, eval_seed, pair_seed) -> Model:
    d = train_ds.dim
    l = config.embed_dim
    M = np.eye(d)
    seraph_cfg = bl.SeraphConfig(eta=config.seraph_eta, mu=config.seraph_mu,
                                 lam=config.seraph_lambda)
    lrml_cfg = bl.LrmlConfig(gamma_s=config.lrml_gamma_s, gamma_d=config.lrml_gamma_d)

    history = []
    L_eval = bl.factor_metric(M, l)
    v_nmi, v_r1 = _val_metrics(L_eval, None, config.normalize, val_ds,
                               n_clusters, eval_seed)
    _record(history, 0, None, None, v_nmi, v_r1)
    best = (v_r1, L_eval, None)
    logdet_warned = False

    epoch = 0
    step_carry = 1.0
    for p, part_seed in enumerate(partition_seeds):
        part = sample_partition(train_ds, n_p, part_seed)
        rows = part.node_rows
        Z = _represent(None, config.normalize, train_ds.features[rows])
        y = train_ds.labels[rows]
        n_labeled = part.labeled_idx.size
        pairs, y_pairs = _all_labeled_pairs(y, n_labeled)
        if config.method == "lrml":
            graph = build_knn(Z, config.k)
            Lap = laplacian(knn_adjacency(graph))
            quad = Z.T @ Lap @ Z  # amortize the Laplacian term across batches
        unlab_nodes = np.arange(n_labeled, part.n)

        for _ in range(config.epochs_per_partition):
            if epoch >= config.max_epochs:
                break
            epoch += 1
            rng = np.random.default_rng(
                np.random.SeedSequence([pair_seed, batch_seed, epoch]))
            order = rng.permutation(len(pairs))
            n_batches = max(1, math.ceil(len(pairs) / config.batch_triplets))
            epoch_loss = 0.0
            for b in range(n_batches):
                sel = order[b * config.batch_triplets:(b + 1) * config.batch_triplets]
                bp, by = pairs[sel], y_pairs[sel]
                if config.method == "seraph":
                    if unlab_nodes.size >= 2:
                        up = np.stack([rng.choice(unlab_nodes, size=len(sel)),
                                       rng.choice(unlab_nodes, size=len(sel))], axis=1)
                        up = up[up[:, 0] != up[:, 1]]
                    else:
                        up = np.zeros((0, 2), dtype=np.int64)

                    def objective(Mm, bp=bp, by=by, up=up):
                        return bl.seraph_objective(Mm, Z, bp, by, up, seraph_cfg)

                    def gradient(Mm, bp=bp, by=by, up=up):
                        return bl.seraph_gradient(Mm, Z, bp, by, up, seraph_cfg)
                else:
                    sim, dis = bp[by > 0], bp[by < 0]

                    def objective(Mm, sim=sim, dis=dis, quad=quad):
                        return bl.lrml_objective(Mm, Z, sim, dis, None, lrml_cfg,
                                                 quad=quad)

                    def gradient(Mm, sim=sim, dis=dis, quad=quad):
                        return bl.lrml_gradient(Z, sim, dis, None, lrml_cfg, quad=quad)

                M, accepted = bl.projected_gradient_step(M, objective, gradient,
                                                         step=step_carry)
                # stalled steps keep the old trial size; successes may grow
                if accepted:
                    step_carry = min(2.0 * accepted, BASELINE_MAX_STEP)
                epoch_loss += objective(M)
                if not np.isfinite(epoch_loss):
                    raise TrainingDiverged("baseline objective became non-finite",
                                           history)

            if config.method == "lrml" and not logdet_warned:
                sign, logdet = np.linalg.slogdet(M + 1e-300 * np.eye(d))
                if sign <= 0 or logdet < 0:
                    logger.debug("lrml: log|M| >= 0 constraint violated (ignored)")
                    logdet_warned = True

            L_eval = bl.factor_metric(M, l)
            v_nmi, v_r1 = _val_metrics(L_eval, None, config.normalize, val_ds,
                                       n_clusters, eval_seed)
            _record(history, epoch, p, epoch_loss / n_batches, v_nmi, v_r1)
            if v_r1 > best[0]:
                best = (v_r1, L_eval, None)

    return Model(L=best[1], encoder=None, config=config, history=history,
                 normalize=config.normalize)


def evaluate_checkpoint(model: Model, dataset: Dataset,
                        ks=evaluation.DEFAULT_RECALL_KS, seed=0):
    """Embed a labeled dataset through the model and score it."""
    rows = dataset.labeled_indices
    if rows.size < 2:
        raise ConfigError("evaluation needs at least 2 labeled rows")
    X = dataset.features[rows]
    y = dataset.labels[rows]
    Z = _represent(model.encoder, model.normalize, X)
    if Z.shape[1] != model.L.shape[0]:
        raise ConfigError("dataset dimension does not match the model")
    E = metric.embed(model.L, Z)
    n_clusters = min(dataset.n_classes, len(y))
    return evaluation.evaluate_embeddings(E, y, n_classes=n_clusters, ks=ks, seed=seed)


def _fmt_row(row) -> str:
    return " ".join(f"{v:.17g}" for v in row)


def save_model(model: Model, path) -> None:
    """Text format: header, row-major matrices at 17 significant digits,

    then one JSON line for the config and one per history record.
    """
    has_enc = model.encoder is not None
    norm = int(model.encoder.normalize if has_enc else model.normalize)
    d, l = model.L.shape
    with open(path, "w") as fh:
        fh.write(f"{MODEL_MAGIC} {MODEL_VERSION} {d} {l} {int(has_enc)} {norm}\n")
        for row in model.L:
            fh.write(_fmt_row(row) + "\n")
        if has_enc:
            for row in model.encoder.A:
                fh.write(_fmt_row(row) + "\n")
            fh.write(_fmt_row(model.encoder.b) + "\n")
        if model.config is not None:
            fh.write(json.dumps({"config": asdict(model.config)}) + "\n")
        for rec in model.history:
            fh.write(json.dumps(rec) + "\n")


def load_model(path) -> Model:
    """Inverse of save_model; matrices reload bit-exactly."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ConfigError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != MODEL_MAGIC or head[1] != MODEL_VERSION:
        raise ConfigError(f"{path}: not a {MODEL_MAGIC} {MODEL_VERSION} file")
    d, l, has_enc, norm = (int(v) for v in head[2:])
    pos = 1

    def take_matrix(rows, cols):
        nonlocal pos
        block = lines[pos:pos + rows]
        if len(block) != rows:
            raise ConfigError(f"{path}: truncated matrix block")
        pos += rows
        try:
            mat = np.array([[float(v) for v in ln.split()] for ln in block])
        except ValueError as exc:
            raise ConfigError(f"{path}: bad matrix entry ({exc})") from None
        if mat.shape != (rows, cols):
            raise ConfigError(f"{path}: bad matrix shape {mat.shape}")
        return mat

    L = take_matrix(d, l)
    encoder = None
    if has_enc:
        A = take_matrix(d, d)
        b = take_matrix(1, d)[0]
        encoder = enc_mod.Encoder(A=A, b=b, normalize=bool(norm))
    config = None
    history = []
    for ln in lines[pos:]:
        if not ln.strip():
            continue
        rec = json.loads(ln)
        if "config" in rec:
            config = TrainConfig(**rec["config"])
        else:
            history.append(rec)
    return Model(L=L, encoder=encoder, config=config, history=history,
                 normalize=bool(norm))
