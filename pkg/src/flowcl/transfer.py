"""Cross-schema reuse of a frozen encoder.

The encoder expects its original input layout. A target dataset with a
different schema is adapted position by position: features both schemas
share are copied into their original slots, original-only positions are
zeroed (the encoder sees them masked), and target-only features are simply
never read. Matching is by feature name and, inside one-hot blocks, by
category string, both case-insensitive; an alias table covers renames.

Shared numeric features are rescaled with the ORIGINAL dataset's min/max,
because that is the scale the encoder was trained on. Refitting on the
target would silently shift every shared feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import DatasetSchema, EncodedDataset, PreprocessorState, RawRecord
from .errors import ConfigError, InvalidShapeError, NoSharedFeaturesError
from .metrics import MetricsReport
from .model import EncoderBlock, ProjectionHead
from .sscl import HeadConfig, run_head_stage

__all__ = [
    "FeatureAlignmentMap",
    "TransferReport",
    "align_matrix",
    "align_sample",
    "build_alignment",
    "fit_transfer_preprocessor",
    "parse_alias_table",
    "transfer_evaluate",
]


@dataclass(frozen=True)
class FeatureAlignmentMap:
    """For every original encoded position: a target position, or -1 (masked)."""

    source_positions: np.ndarray
    target_width: int

    def __post_init__(self):
        p = np.asarray(self.source_positions, dtype=np.int64)
        if p.ndim != 1 or p.size < 1:
            raise InvalidShapeError("source_positions must be a non-empty vector")
        if p.max() >= self.target_width or p.min() < -1:
            raise InvalidShapeError("source positions must be -1 or valid target indices")
        object.__setattr__(self, "source_positions", p)

    @property
    def width(self) -> int:
        return self.source_positions.size

    @property
    def mapped(self) -> int:
        return int(np.sum(self.source_positions >= 0))

    @property
    def masked(self) -> int:
        return self.width - self.mapped

    @property
    def omitted(self) -> int:
        return self.target_width - self.mapped


def parse_alias_table(text: str) -> tuple[tuple[str, str], ...]:
    """Parse "original_name = target_name" lines; # starts a comment."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.count("=") != 1:
            raise ConfigError(f"alias line {lineno}: expected 'original = target', "
                              f"got {raw.strip()!r}")
        left, right = (part.strip() for part in line.split("="))
        if not left or not right:
            raise ConfigError(f"alias line {lineno}: empty name in {raw.strip()!r}")
        pairs.append((left, right))
    return tuple(pairs)


def _target_lookup(target: DatasetSchema) -> dict:
    table = {}
    for feature, start, stop in target.block_spans():
        table[feature.name.lower()] = (feature, start)
    return table


def build_alignment(original: DatasetSchema, target: DatasetSchema,
                    aliases: tuple[tuple[str, str], ...] = ()) -> FeatureAlignmentMap:
    """Name-match the schemas into a positional map original <- target."""
    rename = {orig.lower(): tgt.lower() for orig, tgt in aliases}
    targets = _target_lookup(target)
    positions = np.full(original.encoded_width, -1, dtype=np.int64)
    for feature, start, stop in original.block_spans():
        wanted = rename.get(feature.name.lower(), feature.name.lower())
        hit = targets.get(wanted)
        if hit is None or hit[0].kind != feature.kind:
            continue  # stays masked
        t_feature, t_start = hit
        if feature.kind == "numeric":
            positions[start] = t_start
        else:
            t_vocab = {c.lower(): k for k, c in enumerate(t_feature.vocabulary)}
            for k, category in enumerate(feature.vocabulary):
                t_k = t_vocab.get(category.lower())
                if t_k is not None:
                    positions[start + k] = t_start + t_k
    amap = FeatureAlignmentMap(positions, target.encoded_width)
    if amap.mapped == 0:
        raise NoSharedFeaturesError(
            f"schemas share no features; transfer from {len(original.features)} "
            f"original to {len(target.features)} target features is meaningless")
    return amap


def align_sample(x, amap: FeatureAlignmentMap) -> np.ndarray:
    """Rearrange one encoded target sample into the original layout."""
    xd = np.asarray(x, dtype=np.float64)
    if xd.shape != (amap.target_width,):
        raise InvalidShapeError(
            f"expected a target sample of width {amap.target_width}, got {xd.shape}")
    out = np.zeros(amap.width)
    live = amap.source_positions >= 0
    out[live] = xd[amap.source_positions[live]]
    return out


def align_matrix(x, amap: FeatureAlignmentMap) -> np.ndarray:
    xd = np.asarray(x, dtype=np.float64)
    if xd.ndim != 2 or xd.shape[1] != amap.target_width:
        raise InvalidShapeError(
            f"expected [rows, {amap.target_width}] target data, got {xd.shape}")
    out = np.zeros((xd.shape[0], amap.width))
    live = amap.source_positions >= 0
    out[:, live] = xd[:, amap.source_positions[live]]
    return out


def fit_transfer_preprocessor(original_state: PreprocessorState,
                              target_records: list[RawRecord],
                              target_schema: DatasetSchema,
                              aliases: tuple[tuple[str, str], ...] = ()) -> PreprocessorState:
    """Fit on the target, then pin shared numerics to the original scale."""
    from .dataio import fit_preprocessor

    state = fit_preprocessor(target_records, target_schema)
    rename = {orig.lower(): tgt.lower() for orig, tgt in aliases}
    target_numeric = {f.name.lower(): i for i, f in enumerate(
        f for f in target_schema.features if f.kind == "numeric")}
    minima = state.minima.copy()
    maxima = state.maxima.copy()
    orig_numerics = [f for f in original_state.schema.features if f.kind == "numeric"]
    for i, feature in enumerate(orig_numerics):
        wanted = rename.get(feature.name.lower(), feature.name.lower())
        j = target_numeric.get(wanted)
        if j is not None:
            minima[j] = original_state.minima[i]
            maxima[j] = original_state.maxima[i]
    return PreprocessorState(target_schema, minima, maxima)


@dataclass(frozen=True)
class TransferReport:
    metrics: MetricsReport
    mapped: int
    masked: int
    omitted: int
    train_count: int
    test_count: int
    class_names: tuple


def transfer_evaluate(encoder: EncoderBlock, projector: ProjectionHead,
                      amap: FeatureAlignmentMap, target: EncodedDataset,
                      config: HeadConfig, split_fraction: float = 0.8,
                      label_fraction: float = 1.0) -> TransferReport:
    """Align the target data, then run the standard supervised head stage.

    With an identity alignment this collapses to the plain pipeline: the
    aligned matrix is equal to the input, and every random draw downstream
    depends only on the head config, so the metrics agree exactly.
    """
    aligned = EncodedDataset(align_matrix(target.x, amap), target.labels.copy(),
                             target.class_names)
    stage = run_head_stage(encoder, projector, aligned, config,
                           split_fraction=split_fraction,
                           label_fraction=label_fraction)
    return TransferReport(stage.report, amap.mapped, amap.masked, amap.omitted,
                          stage.train_count, stage.test_count, target.class_names)
