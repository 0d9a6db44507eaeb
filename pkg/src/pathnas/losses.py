"""The two contrastive training objectives and their loops.

Pretraining teaches the soft encoder the grouping structure of the hard
encodings: each sample's soft encoding should score high against its own
cluster prototype and low against the others, with per-cluster crowding
distances acting as temperatures. The faithful form excludes the positive
pair from the denominator (so the loss can go negative); the conventional
softmax variant is one flag away.

Fine-tuning is pairwise ranking: within a batch, every ordered pair whose
predicted difference disagrees in sign with the true difference pays its
absolute predicted difference. Tied targets pay nothing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, take_rows
from .cluster import TAU_FLOOR, k_medoids
from .errors import ParameterError
from .paths import PathTable, encode_architecture
from .predictor import Predictor
from .space import SearchSpace, random_architecture


@dataclass(frozen=True)
class PretrainConfig:
    batch_size: int = 512
    epochs: int = 200
    cluster_sizes: tuple[int, ...] = (5, 10, 20)
    learning_rate: float = 1e-3
    seed: int = 0
    include_positive_in_denominator: bool = False

    def __post_init__(self):
        object.__setattr__(self, "cluster_sizes", tuple(self.cluster_sizes))
        problems = []
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be positive")
        if not self.cluster_sizes:
            problems.append("cluster_sizes must be nonempty")
        for k in self.cluster_sizes:
            if not 2 <= k <= self.batch_size:
                problems.append(f"cluster size {k} must be in [2, batch_size]")
        if problems:
            raise ParameterError("; ".join(problems))


@dataclass(frozen=True)
class FinetuneConfig:
    batch_size: int = 128
    epochs: int = 50
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be positive")
        if problems:
            raise ParameterError("; ".join(problems))


def pretrain_loss(
    queries: Tensor,
    prototypes: Tensor,
    assignment,
    taus,
    include_positive_in_denominator: bool = False,
) -> Tensor:
    """Batch sum of the temperature-scaled prototype-contrast terms.

    ``queries`` is [n, d], ``prototypes`` [K, d]; ``assignment[i]`` names the
    positive prototype of query i; ``taus[k]`` scales every logit against
    prototype k. Stabilized by constant max-logit subtraction.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    taus = np.asarray(taus, dtype=np.float64)
    k = prototypes.shape[0]
    if k < 2:
        raise ParameterError("need at least 2 prototypes (the denominator would be empty)")
    if np.any(taus < TAU_FLOOR):
        raise ParameterError(f"temperatures must be floored at {TAU_FLOOR}")
    n = queries.shape[0]
    logits = (queries @ prototypes.swapaxes(0, 1)) * Tensor(1.0 / taus)  # [n, K]
    pos_mask = np.zeros((n, k))
    pos_mask[np.arange(n), assignment] = 1.0
    pos = (logits * Tensor(pos_mask)).sum(axis=1)  # [n]
    denom_bias = np.zeros((n, k)) if include_positive_in_denominator else pos_mask * -1e30
    shifted = logits + Tensor(denom_bias)
    m = shifted.max_const(axis=1, keepdims=True)
    lse = (shifted - Tensor(m)).exp().sum(axis=1).log() + Tensor(m[:, 0])
    return (lse - pos).sum()


def finetune_loss(preds: Tensor, targets) -> Tensor:
    """Sum over ordered pairs of |predicted difference| on sign disagreement.

    Pairs with tied targets contribute zero; so do pairs with a zero
    predicted difference (the indicator fires but the magnitude is zero),
    which makes the relu form below exactly equivalent to the indicator
    definition while staying differentiable almost everywhere.
    """
    targets = np.asarray(targets, dtype=np.float64)
    n = targets.shape[0]
    if n < 2 or preds.shape[0] != n:
        raise ParameterError("need >= 2 predictions with matching targets")
    sgn = np.sign(targets[:, None] - targets[None, :])
    d = preds.reshape(n, 1) - preds.reshape(1, n)
    return (d * Tensor(-sgn)).relu().sum()


def mse_loss(preds: Tensor, targets) -> Tensor:
    """Plain regression objective (the non-contrastive ablation)."""
    diff = preds - Tensor(np.asarray(targets, dtype=np.float64))
    return (diff * diff).mean()


def _log(log_fn, stage, epoch, step, loss, seed, t0):
    if log_fn is not None:
        log_fn(
            {
                "stage": stage,
                "epoch": epoch,
                "step": step,
                "loss": float(loss),
                "seed": seed,
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
        )


def multi_k_pretrain_loss(
    model: Predictor,
    archs,
    hard: np.ndarray,
    cluster_sizes,
    cluster_rng,
    include_positive_in_denominator: bool = False,
):
    """One batch's averaged loss over several cluster counts.

    Returns (averaged loss tensor, list of per-K float losses); the soft
    encodings are computed once and shared across clusterings.
    """
    soft = model.forward_soft_t(archs)
    per_k = []
    for k in cluster_sizes:
        clustering = k_medoids(hard, k, cluster_rng)
        protos = take_rows(soft, clustering.medoid_indices)
        per_k.append(
            pretrain_loss(
                soft,
                protos,
                clustering.assignment,
                clustering.taus,
                include_positive_in_denominator,
            )
        )
    avg = per_k[0]
    for extra in per_k[1:]:
        avg = avg + extra
    avg = avg * (1.0 / len(per_k))
    return avg, [t.item() for t in per_k]


def pretrain(
    model: Predictor,
    space: SearchSpace,
    table: PathTable,
    cfg: PretrainConfig,
    log_fn=None,
) -> Predictor:
    """Self-supervised pretraining of the soft encoder.

    Each epoch draws a fresh batch of random architectures, clusters their
    hard encodings once per configured cluster count, and takes one Adam
    step on the mean of the per-clustering losses. Head parameters receive
    no gradient (the loss stops at the concat boundary).
    """
    seq = np.random.SeedSequence(cfg.seed)
    batch_rng, cluster_rng = [np.random.default_rng(s) for s in seq.spawn(2)]
    opt = Adam(model.params, lr=cfg.learning_rate)
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        archs = [random_architecture(space, batch_rng) for _ in range(cfg.batch_size)]
        hard = np.stack([encode_architecture(a, space, table) for a in archs])
        avg, _ = multi_k_pretrain_loss(
            model, archs, hard, cfg.cluster_sizes, cluster_rng,
            cfg.include_positive_in_denominator,
        )
        opt.zero_grad()
        avg.backward()
        opt.step()
        _log(log_fn, "pretrain", epoch, epoch, avg.item(), cfg.seed, t0)
    return model


def _batch_bounds(n: int, batch_size: int) -> list[tuple[int, int]]:
    bounds = [(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
        lo, hi = bounds.pop()
        bounds[-1] = (bounds[-1][0], hi)  # a 1-sample batch has no pairs
    return bounds


def finetune(
    model: Predictor,
    labeled,
    cfg: FinetuneConfig,
    log_fn=None,
    objective: str = "pairwise",
) -> Predictor:
    """Rank-train the whole predictor on labeled (architecture, accuracy) pairs.

    ``objective`` selects the pairwise ranking loss or plain MSE (ablation).
    """
    if len(labeled) < 2:
        raise ParameterError("need at least 2 labeled samples to form pairs")
    if objective not in ("pairwise", "mse"):
        raise ParameterError(f"unknown objective {objective!r}")
    archs = [s.arch for s in labeled]
    ys = np.array([s.val_acc for s in labeled], dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.learning_rate)
    t0 = time.perf_counter()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(archs))
        for lo, hi in _batch_bounds(len(archs), cfg.batch_size):
            idx = order[lo:hi]
            preds = model.forward_scores_t([archs[i] for i in idx])
            if objective == "pairwise":
                loss = finetune_loss(preds, ys[idx])
            else:
                loss = mse_loss(preds, ys[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            _log(log_fn, "finetune", epoch, step, loss.item(), cfg.seed, t0)
            step += 1
    return model
