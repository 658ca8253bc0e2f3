"""Recommendation-model configuration: embedding tables, MLP stacks, feature
interaction, and the size/compute accounting derived from them.

All byte quantities are plain Python integers (arbitrary precision, so large
tables cannot silently wrap). Rates and pooling factors are floats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import ConfigError

ALLOWED_BYTES_PER_ELEMENT = (1, 2, 4, 8)

INTERACTION_CONCAT = "Concat"
INTERACTION_DOT = "DotPairwise"


@dataclass(frozen=True)
class SparseFeatureSpec:
    """One categorical feature backed by an embedding table.

    hash_size is the row count after hashing, mean_pooling the average number
    of lookups per sample, truncation the per-sample lookup cap.
    """

    hash_size: int
    embedding_dim: int
    mean_pooling: float
    truncation: int
    bytes_per_element: int = 4

    def __post_init__(self):
        if self.hash_size < 1:
            raise ConfigError(f"hash_size must be >= 1, got {self.hash_size}")
        if self.embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if not self.mean_pooling > 0:
            raise ConfigError(f"mean_pooling must be > 0, got {self.mean_pooling}")
        if self.truncation < 1:
            raise ConfigError(f"truncation must be >= 1, got {self.truncation}")
        if self.bytes_per_element not in ALLOWED_BYTES_PER_ELEMENT:
            raise ConfigError(
                f"bytes_per_element must be one of {ALLOWED_BYTES_PER_ELEMENT}, "
                f"got {self.bytes_per_element}"
            )


@dataclass(frozen=True)
class MlpStack:
    input_dim: int
    layer_widths: tuple[int, ...]

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"MLP input_dim must be >= 1, got {self.input_dim}")
        if not self.layer_widths:
            raise ConfigError("MLP needs at least one layer")
        for w in self.layer_widths:
            if w < 1:
                raise ConfigError(f"MLP layer widths must be >= 1, got {w}")

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]


@dataclass(frozen=True)
class InteractionKind:
    """Feature-interaction variant. projection_dim is the width the dense
    output is projected to before pairwise dot products; it must match the
    shared embedding dimension when tables are present."""

    variant: str
    projection_dim: int = 1

    def __post_init__(self):
        if self.variant not in (INTERACTION_CONCAT, INTERACTION_DOT):
            raise ConfigError(f"unknown interaction variant {self.variant!r}")
        if self.projection_dim < 1:
            raise ConfigError("projection_dim must be >= 1")


def concat_interaction() -> InteractionKind:
    return InteractionKind(INTERACTION_CONCAT)


def dot_interaction(projection_dim: int) -> InteractionKind:
    return InteractionKind(INTERACTION_DOT, projection_dim)


def _interaction_dim(bottom_out: int, sparse_dims: tuple[int, ...], kind: InteractionKind) -> int:
    if kind.variant == INTERACTION_CONCAT:
        return bottom_out + sum(sparse_dims)
    # Pairwise dot over S embeddings plus the projected dense vector; the
    # dense-dense pair is excluded, giving (S+1)*S/2 scalar outputs.
    if sparse_dims and len(set(sparse_dims)) != 1:
        raise ConfigError(
            "DotPairwise interaction requires a single shared embedding dim, "
            f"got {sorted(set(sparse_dims))}"
        )
    if sparse_dims and kind.projection_dim != sparse_dims[0]:
        raise ConfigError(
            f"DotPairwise projection_dim {kind.projection_dim} must equal the "
            f"shared embedding dim {sparse_dims[0]}"
        )
    s = len(sparse_dims)
    return bottom_out + (s + 1) * s // 2


@dataclass(frozen=True)
class ModelConfig:
    dense_count: int
    sparse: tuple[SparseFeatureSpec, ...]
    bottom_mlp: MlpStack
    top_mlp: MlpStack
    interaction: InteractionKind
    batch_size: int

    def __post_init__(self):
        if self.dense_count < 0:
            raise ConfigError(f"dense_count must be >= 0, got {self.dense_count}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.bottom_mlp.input_dim != max(self.dense_count, 1):
            raise ConfigError(
                f"bottom MLP input_dim {self.bottom_mlp.input_dim} must equal "
                f"dense_count {self.dense_count}"
            )
        expected = _interaction_dim(
            self.bottom_mlp.output_dim,
            tuple(s.embedding_dim for s in self.sparse),
            self.interaction,
        )
        if self.top_mlp.input_dim != expected:
            raise ConfigError(
                f"top MLP input_dim {self.top_mlp.input_dim} must equal the "
                f"interaction output dim {expected}"
            )


def build_model(
    *,
    dense_count: int,
    sparse: tuple[SparseFeatureSpec, ...] | list[SparseFeatureSpec],
    bottom_widths: tuple[int, ...] | list[int],
    top_widths: tuple[int, ...] | list[int],
    interaction: InteractionKind,
    batch_size: int,
) -> ModelConfig:
    """Assemble a ModelConfig, deriving both MLP input dims."""
    sparse = tuple(sparse)
    bottom = MlpStack(max(dense_count, 1), tuple(bottom_widths))
    dim = _interaction_dim(bottom.output_dim, tuple(s.embedding_dim for s in sparse), interaction)
    top = MlpStack(dim, tuple(top_widths))
    return ModelConfig(dense_count, sparse, bottom, top, interaction, batch_size)


# ---------------------------------------------------------------------------
# size and compute accounting


def table_size_bytes(spec: SparseFeatureSpec) -> int:
    return spec.hash_size * spec.embedding_dim * spec.bytes_per_element


def total_embedding_bytes(model: ModelConfig) -> int:
    return sum(table_size_bytes(s) for s in model.sparse)


def lookups_per_iteration(spec: SparseFeatureSpec, batch: int) -> int:
    """Rows fetched from one table per iteration: batch * min(pooling,
    truncation), rounded half-up, never below the batch size."""
    if batch < 1:
        raise ConfigError(f"batch must be >= 1, got {batch}")
    effective = min(spec.mean_pooling, float(spec.truncation))
    return max(batch, math.floor(batch * effective + 0.5))


def mlp_flops(stack: MlpStack, batch: int) -> int:
    """Forward multiply-add count: 2 * batch * sum of consecutive width products."""
    widths = (stack.input_dim,) + stack.layer_widths
    per_sample = sum(widths[i - 1] * widths[i] for i in range(1, len(widths)))
    return 2 * batch * per_sample


def interaction_output_dim(model: ModelConfig) -> int:
    return _interaction_dim(
        model.bottom_mlp.output_dim,
        tuple(s.embedding_dim for s in model.sparse),
        model.interaction,
    )


def interaction_flops(model: ModelConfig) -> int:
    """Per-sample flops of the interaction: zero for Concat, pairwise dots
    plus the dense projection for DotPairwise."""
    if model.interaction.variant == INTERACTION_CONCAT:
        return 0
    s = len(model.sparse)
    pairs = (s + 1) * s // 2
    d = model.sparse[0].embedding_dim if model.sparse else model.interaction.projection_dim
    return 2 * d * pairs + 2 * model.bottom_mlp.output_dim * d


def dense_param_count(model: ModelConfig) -> int:
    """Weights plus biases across both MLP stacks."""
    total = 0
    for stack in (model.bottom_mlp, model.top_mlp):
        widths = (stack.input_dim,) + stack.layer_widths
        total += sum((widths[i - 1] + 1) * widths[i] for i in range(1, len(widths)))
    return total


def sample_bytes(model: ModelConfig) -> int:
    """Input record size: 4-byte dense values plus 8-byte sparse ids."""
    ids = 0
    for s in model.sparse:
        ids += math.floor(min(s.mean_pooling, float(s.truncation)) + 0.5)
    return model.dense_count * 4 + ids * 8


# ---------------------------------------------------------------------------
# synthetic model generation


@dataclass(frozen=True)
class SynthPopulationParams:
    """Ranges describing a population of synthetic models.

    Pooling factors follow a bounded power law, hash sizes are log-uniform,
    feature counts are uniform over inclusive ranges.
    """

    num_sparse_range: tuple[int, int] = (4, 128)
    num_dense_range: tuple[int, int] = (64, 4096)
    pooling_alpha: float = 2.0
    pooling_range: tuple[float, float] = (1.0, 32.0)
    hash_size_range: tuple[int, int] = (30, 20_000_000)
    embedding_dim: int = 64
    truncation: int = 32
    batch_size: int = 200
    mlp_width: int = 512
    mlp_layers: int = 3
    bytes_per_element: int = 4
    seed: int = 0

    def __post_init__(self):
        for name, (lo, hi) in (
            ("num_sparse_range", self.num_sparse_range),
            ("num_dense_range", self.num_dense_range),
            ("hash_size_range", self.hash_size_range),
            ("pooling_range", self.pooling_range),
        ):
            if lo > hi or lo < 1:
                raise ConfigError(f"{name} must satisfy 1 <= lo <= hi, got ({lo}, {hi})")
        if not self.pooling_alpha > 1.0:
            raise ConfigError(f"pooling_alpha must be > 1, got {self.pooling_alpha}")


def power_law_sample(rng: np.random.Generator, alpha: float, lo: float, hi: float, n: int) -> np.ndarray:
    """Draw n values with density proportional to x^-alpha on [lo, hi]."""
    if not alpha > 1.0:
        raise ConfigError(f"power-law exponent must be > 1, got {alpha}")
    if not 0 < lo < hi:
        raise ConfigError(f"power-law bounds must satisfy 0 < lo < hi, got ({lo}, {hi})")
    u = rng.random(n)
    a = 1.0 - alpha
    return (lo**a + u * (hi**a - lo**a)) ** (1.0 / a)


def generate_synthetic_model(params: SynthPopulationParams) -> ModelConfig:
    """Draw one model from the population. Deterministic for a fixed seed."""
    rng = np.random.default_rng(params.seed)
    num_sparse = int(rng.integers(params.num_sparse_range[0], params.num_sparse_range[1] + 1))
    num_dense = int(rng.integers(params.num_dense_range[0], params.num_dense_range[1] + 1))
    pooling = power_law_sample(
        rng, params.pooling_alpha, params.pooling_range[0], params.pooling_range[1], num_sparse
    )
    log_lo = math.log(params.hash_size_range[0])
    log_hi = math.log(params.hash_size_range[1])
    hashes = np.exp(rng.random(num_sparse) * (log_hi - log_lo) + log_lo)
    sparse = tuple(
        SparseFeatureSpec(
            hash_size=int(min(max(round(h), params.hash_size_range[0]), params.hash_size_range[1])),
            embedding_dim=params.embedding_dim,
            mean_pooling=round(float(p), 2),
            truncation=params.truncation,
            bytes_per_element=params.bytes_per_element,
        )
        for h, p in zip(hashes, pooling)
    )
    widths = [params.mlp_width] * params.mlp_layers
    return build_model(
        dense_count=num_dense,
        sparse=sparse,
        bottom_widths=widths,
        top_widths=widths,
        interaction=dot_interaction(params.embedding_dim),
        batch_size=params.batch_size,
    )


def benchmark_model(
    *,
    num_dense: int = 256,
    num_sparse: int = 32,
    hash_size: int = 100_000,
    batch_size: int = 200,
    mlp_width: int = 512,
    mlp_layers: int = 3,
    embedding_dim: int = 64,
    truncation: int = 32,
    pooling_alpha: float = 2.0,
    pooling_range: tuple[float, float] = (1.0, 32.0),
    seed: int = 42,
) -> ModelConfig:
    """Parameterised benchmark model used by the canned sweeps: uniform hash
    sizes, power-law pooling factors, identical MLP widths in both stacks."""
    rng = np.random.default_rng(seed)
    pooling = power_law_sample(rng, pooling_alpha, pooling_range[0], pooling_range[1], num_sparse)
    sparse = tuple(
        SparseFeatureSpec(
            hash_size=hash_size,
            embedding_dim=embedding_dim,
            mean_pooling=round(float(p), 2),
            truncation=truncation,
        )
        for p in pooling
    )
    widths = [mlp_width] * mlp_layers
    return build_model(
        dense_count=num_dense,
        sparse=sparse,
        bottom_widths=widths,
        top_widths=widths,
        interaction=dot_interaction(embedding_dim),
        batch_size=batch_size,
    )


# ---------------------------------------------------------------------------
# JSON serialization


def model_to_doc(model: ModelConfig) -> dict:
    sparse = []
    for s in model.sparse:
        entry = {
            "hash_size": s.hash_size,
            "dim": s.embedding_dim,
            "pooling": s.mean_pooling,
            "truncation": s.truncation,
        }
        if s.bytes_per_element != 4:
            entry["bytes_per_element"] = s.bytes_per_element
        sparse.append(entry)
    return {
        "dense_count": model.dense_count,
        "sparse": sparse,
        "bottom_mlp": list(model.bottom_mlp.layer_widths),
        "top_mlp": list(model.top_mlp.layer_widths),
        "interaction": {
            "kind": model.interaction.variant,
            "projection_dim": model.interaction.projection_dim,
        },
        "batch_size": model.batch_size,
    }


def model_from_doc(doc: dict) -> ModelConfig:
    try:
        sparse = tuple(
            SparseFeatureSpec(
                hash_size=int(e["hash_size"]),
                embedding_dim=int(e["dim"]),
                mean_pooling=float(e["pooling"]),
                truncation=int(e["truncation"]),
                bytes_per_element=int(e.get("bytes_per_element", 4)),
            )
            for e in doc["sparse"]
        )
        inter_doc = doc.get("interaction", {"kind": INTERACTION_CONCAT})
        interaction = InteractionKind(
            variant=inter_doc["kind"],
            projection_dim=int(inter_doc.get("projection_dim", 1)),
        )
        return build_model(
            dense_count=int(doc["dense_count"]),
            sparse=sparse,
            bottom_widths=[int(w) for w in doc["bottom_mlp"]],
            top_widths=[int(w) for w in doc["top_mlp"]],
            interaction=interaction,
            batch_size=int(doc["batch_size"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model document: {exc}") from exc


MODEL_PRESET_NAMES = ("M1", "M2", "M3")


def production_preset(name: str) -> ModelConfig:
    """Load one of the shipped production model presets (M1, M2, M3)."""
    if name not in MODEL_PRESET_NAMES:
        raise ConfigError(f"unknown model preset {name!r}; available: {', '.join(MODEL_PRESET_NAMES)}")
    text = resources.files("recshard.presets").joinpath(f"{name.lower()}.json").read_text()
    return model_from_doc(json.loads(text))


def with_batch_size(model: ModelConfig, batch_size: int) -> ModelConfig:
    return replace(model, batch_size=batch_size)
