"""Contrastive objective and the two training loops.

Pretraining follows the usual two-view recipe: every sample in a batch of N
is masked twice, the 2N views go through the encoder e and projection g, and
the normalized-temperature cross entropy pulls each view toward its partner
against the other 2N-2 views. Views are laid out interleaved, so views
2k and 2k+1 (0-based) are the positive pair of sample k.

For one view i with partner p(i), writing s_ij for the cosine similarity of
latent vectors i and j:

    l_i = -log( exp(s_{i,p(i)}/tau) / sum_{k != i} exp(s_ik/tau) )

and the batch loss averages l_i over all 2N views. The denominator excludes
only k = i; nothing else is filtered out.

Head training fits a single affine classifier on frozen-encoder features
(hidden h by default, projected z on request). The encoder is never touched:
features are computed once in eval mode and only the head's two tensors see
the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numgrad as ng
from .augment import MaskingConfig, augment_pair
from .errors import (
    ConfigError,
    DegenerateVectorError,
    InsufficientDataError,
    InvalidBatchError,
    InvalidPairError,
    InvalidShapeError,
    MissingLabelError,
)
from .metrics import MetricsReport, confusion, metrics
from .model import (
    ClassificationHead,
    EncoderBlock,
    ProjectionHead,
    build_classification_head,
    encode,
    project,
)
from .numgrad import AdamW, ExponentialLr, Tape, Tensor, backward
from .seeding import substream

__all__ = [
    "ContrastiveConfig",
    "HeadConfig",
    "HeadStageResult",
    "SimilarityMatrix",
    "batch_loss",
    "evaluate_head",
    "holdout_loss",
    "pair_loss",
    "predict",
    "pretrain",
    "representation_features",
    "run_head_stage",
    "similarity_matrix",
    "train_head",
]


@dataclass(frozen=True)
class ContrastiveConfig:
    """Knobs of the pretraining loop; defaults follow the reference setup."""

    batch_size: int = 32
    temperature: float = 0.5
    epochs: int = 100
    masking: MaskingConfig = field(default_factory=MaskingConfig)
    lr: float = 2e-4
    lr_gamma: float = 0.99
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive int, got {self.batch_size!r}")
        if not (isinstance(self.temperature, (int, float)) and self.temperature > 0):
            raise ConfigError(f"temperature must be > 0, got {self.temperature!r}")
        if not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative int, got {self.epochs!r}")
        if not isinstance(self.masking, MaskingConfig):
            raise ConfigError("masking must be a MaskingConfig")


@dataclass(frozen=True)
class SimilarityMatrix:
    """2N x 2N cosine similarities of the latent batch."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InvalidShapeError(f"similarity matrix must be square, got {v.shape}")
        if v.shape[0] < 2 or v.shape[0] % 2:
            raise InvalidBatchError(f"need an even number >= 2 of views, got {v.shape[0]}")
        object.__setattr__(self, "values", v)

    @property
    def n_views(self) -> int:
        return self.values.shape[0]


def _normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateVectorError(f"latent vector {bad} has zero norm; "
                                    "cosine similarity is undefined")
    return z / norms[:, None], norms


def similarity_matrix(z) -> SimilarityMatrix:
    zd = np.asarray(z, dtype=np.float64)
    if zd.ndim != 2:
        raise InvalidShapeError(f"expected [views, dim] latents, got shape {zd.shape}")
    unit, _ = _normalize_rows(zd)
    return SimilarityMatrix(np.clip(unit @ unit.T, -1.0, 1.0))


def pair_loss(i: int, j: int, s: SimilarityMatrix, temperature: float) -> float:
    """l_{i,j} for one ordered pair, log-sum-exp stabilized."""
    values = s.values if isinstance(s, SimilarityMatrix) else SimilarityMatrix(s).values
    n = values.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise InvalidPairError(f"indices ({i}, {j}) outside the {n}-view batch")
    if i == j:
        raise InvalidPairError("a view cannot be its own positive")
    row = values[i] / temperature
    others = np.delete(row, i)
    peak = others.max()
    lse = peak + np.log(np.sum(np.exp(others - peak)))
    return float(lse - row[j])


def batch_loss(z: Tensor, temperature: float) -> Tensor:
    """Differentiable batch objective over interleaved positive pairs.

    One fused op: the forward pass normalizes rows, builds the similarity
    matrix, and averages the per-view losses; the backward rule pushes the
    softmax-minus-target gradient back through the normalization in closed
    form rather than taping every intermediate.
    """
    zt = ng.as_tensor(z)
    zd = zt.data
    if zd.ndim != 2:
        raise InvalidShapeError(f"expected [views, dim] latents, got shape {zd.shape}")
    n = zd.shape[0]
    if n < 2 or n % 2:
        raise InvalidBatchError(f"need an even number >= 2 of views, got {n}")
    if not temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {temperature!r}")
    unit, norms = _normalize_rows(zd)
    sim = unit @ unit.T
    scaled = sim / temperature
    np.fill_diagonal(scaled, -np.inf)
    peak = scaled.max(axis=1, keepdims=True)
    expd = np.exp(scaled - peak)
    row_sum = expd.sum(axis=1, keepdims=True)
    lse = (peak + np.log(row_sum)).ravel()
    partner = np.arange(n) ^ 1  # 0<->1, 2<->3, ...
    losses = lse - sim[np.arange(n), partner] / temperature
    out = Tensor(np.array(losses.mean()))

    def rule(g):
        softmax = expd / row_sum
        grad_sim = softmax.copy()
        grad_sim[np.arange(n), partner] -= 1.0
        grad_sim *= float(g) / (n * temperature)
        grad_unit = (grad_sim + grad_sim.T) @ unit
        # Through row normalization: remove the radial component, scale by 1/r.
        radial = np.sum(grad_unit * unit, axis=1, keepdims=True)
        return ((grad_unit - radial * unit) / norms[:, None],)

    return ng.record_op(out, [zt], rule)


def _paired_views(data: np.ndarray, indices, masking: MaskingConfig, stream_label: str,
                  epoch: int, groups) -> np.ndarray:
    views = np.empty((2 * len(indices), data.shape[1]))
    for k, idx in enumerate(indices):
        rng = substream(masking.rng_seed, stream_label, epoch, int(idx))
        pair = augment_pair(data[idx], masking, rng, groups)
        views[2 * k] = pair.x_i
        views[2 * k + 1] = pair.x_j
    return views


def holdout_loss(encoder: EncoderBlock, projector: ProjectionHead, holdout,
                 config: ContrastiveConfig, epoch: int,
                 groups: Sequence[tuple[int, int]] | None = None) -> float | None:
    """Contrastive loss on held-out samples, eval-mode forward, no learning.

    Augmentation draws come from a dedicated "holdout-augment" stream keyed
    by (epoch, row), so the number reported for an epoch is reproducible.
    Returns None when fewer than 2 held-out samples exist.
    """
    data = np.asarray(holdout, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        return None
    total = 0.0
    weight = 0
    for start in range(0, data.shape[0], config.batch_size):
        rows = np.arange(start, min(start + config.batch_size, data.shape[0]))
        if rows.size < 2:
            break
        views = _paired_views(data, rows, config.masking, "holdout-augment",
                              epoch, groups)
        latents = _eval_latents(encoder, projector, views)
        loss = batch_loss(Tensor(latents), config.temperature)
        total += float(loss.data) * rows.size
        weight += rows.size
    return total / weight if weight else None


def _eval_latents(encoder: EncoderBlock, projector: ProjectionHead,
                  views: np.ndarray) -> np.ndarray:
    return project(projector, encode(encoder, views, training=False)).data


def pretrain(encoder: EncoderBlock, projector: ProjectionHead, x,
             config: ContrastiveConfig,
             groups: Sequence[tuple[int, int]] | None = None,
             holdout=None) -> list[dict]:
    """Run the self-supervised loop in place; return the loss history.

    Every epoch reshuffles from its own seed substream, the trailing partial
    batch is dropped, and each sample's two views come from an rng stream
    keyed by (mask seed, epoch, sample index), so the whole trajectory is a
    pure function of (parameters, data, config). With `holdout` given, each
    history entry also carries the held-out contrastive loss.
    """
    data = np.asarray(x, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidShapeError(f"expected a [samples, width] matrix, got {data.shape}")
    n = data.shape[0]
    if n < config.batch_size:
        raise InsufficientDataError(
            f"{n} samples cannot fill one batch of {config.batch_size}")
    params = list(encoder.parameters()) + list(projector.parameters())
    schedule = ExponentialLr(config.lr, config.lr_gamma)
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    history = []
    for epoch in range(config.epochs):
        opt.lr = schedule.lr_at(epoch)
        order = substream(config.seed, "pretrain-shuffle", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            views = _paired_views(data, batch_idx, config.masking, "augment",
                                  epoch, groups)
            with Tape() as tape:
                h = encode(encoder, views, training=True)
                z = project(projector, h)
                loss = batch_loss(z, config.temperature)
            backward(loss, tape)
            opt.step()
            opt.zero_grad()
            epoch_losses.append(float(loss.data))
        entry = {"epoch": epoch, "loss": float(np.mean(epoch_losses)), "lr": opt.lr}
        if holdout is not None:
            entry["holdout_loss"] = holdout_loss(encoder, projector, holdout,
                                                 config, epoch, groups)
        history.append(entry)
    return history


@dataclass(frozen=True)
class HeadConfig:
    """Supervised head stage: a linear probe on frozen features."""

    representation: str = "hidden"
    epochs: int = 200
    batch_size: int = 32
    lr: float = 0.01
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.representation not in ("hidden", "context"):
            raise ConfigError(
                f"representation must be 'hidden' or 'context', got {self.representation!r}")
        if not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative int, got {self.epochs!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive int, got {self.batch_size!r}")


def representation_features(encoder: EncoderBlock, projector: ProjectionHead,
                            x, representation: str) -> np.ndarray:
    """Frozen eval-mode features: h, or z = g(h) when representation is context."""
    h = encode(encoder, np.asarray(x, dtype=np.float64), training=False)
    if representation == "hidden":
        return h.data
    if representation == "context":
        return project(projector, h).data
    raise ConfigError(f"representation must be 'hidden' or 'context', got {representation!r}")


def train_head(encoder: EncoderBlock, projector: ProjectionHead, x, labels,
               n_classes: int, config: HeadConfig) -> ClassificationHead:
    """Fit a classification head on frozen features; the encoder never moves.

    Partial batches are kept: label-efficiency runs can have fewer labeled
    samples than one batch.
    """
    y = np.asarray(labels, dtype=np.int64).ravel()
    data = np.asarray(x, dtype=np.float64)
    if data.shape[0] != y.size:
        raise InvalidShapeError(f"{data.shape[0]} samples but {y.size} labels")
    if y.size == 0:
        raise InsufficientDataError("no labeled samples to train on")
    if np.any(y < 0):
        raise MissingLabelError("head training needs a label on every sample")
    features = representation_features(encoder, projector, data, config.representation)
    head = build_classification_head(features.shape[1], n_classes, config.seed)
    opt = AdamW(head.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    n = features.shape[0]
    for epoch in range(config.epochs):
        order = substream(config.seed, "head-shuffle", epoch).permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            with Tape() as tape:
                logits = head.logits(Tensor(features[batch]))
                loss = ng.softmax_cross_entropy(logits, y[batch])
            backward(loss, tape)
            opt.step()
            opt.zero_grad()
    return head


@dataclass(frozen=True)
class HeadStageResult:
    head: ClassificationHead
    report: "MetricsReport"
    train_count: int
    test_count: int
    class_names: tuple


def run_head_stage(encoder: EncoderBlock, projector: ProjectionHead,
                   dataset, config: HeadConfig, split_fraction: float = 0.8,
                   label_fraction: float = 1.0) -> HeadStageResult:
    """The supervised protocol shared by plain evaluation and transfer.

    Stratified 80/20 split of the labeled data under the head seed, optional
    stratified subsampling of the training side (label-efficiency runs), head
    fit on the survivors, metrics on the held-out side. Everything downstream
    of the dataset is a pure function of (dataset, config, fractions), which
    is what makes an identity-aligned transfer reproduce these numbers
    bit for bit.
    """
    from .dataio import SplitSpec, stratified_split, stratified_subsample

    if not 0.0 < split_fraction < 1.0:
        raise ConfigError(f"split_fraction must lie in (0, 1), got {split_fraction!r}")
    train_idx, test_idx = stratified_split(dataset, split_fraction, config.seed)
    train = dataset.subset(train_idx)
    test = dataset.subset(test_idx)
    if label_fraction != 1.0:
        train = stratified_subsample(
            train, SplitSpec("head-set", label_fraction, config.seed))
    head = train_head(encoder, projector, train.x, train.labels,
                      len(dataset.class_names), config)
    report = evaluate_head(encoder, projector, head, test.x, test.labels,
                           config.representation)
    return HeadStageResult(head, report, len(train), len(test), dataset.class_names)


def predict(encoder: EncoderBlock, projector: ProjectionHead,
            head: ClassificationHead, x, representation: str) -> np.ndarray:
    features = representation_features(encoder, projector, x, representation)
    logits = head.logits(Tensor(features))
    return np.argmax(logits.data, axis=1)


def evaluate_head(encoder: EncoderBlock, projector: ProjectionHead,
                  head: ClassificationHead, x, labels,
                  representation: str) -> MetricsReport:
    y = np.asarray(labels, dtype=np.int64).ravel()
    if np.any(y < 0):
        raise MissingLabelError("evaluation needs a label on every sample")
    preds = predict(encoder, projector, head, x, representation)
    return metrics(confusion(preds, y, head.n_classes))
