"""Model abstraction: layers, experts, gating, and activation statistics.

No neural weights are executed. Gating logits are synthesized so that the
induced expert-selection frequencies reproduce the skewed activation patterns
of real sparse models; per-expert compute and memory footprints come from the
model spec and drive the latency/energy accounting downstream.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MoEModelSpec:
    """Structural and cost parameters of the sparse model."""

    num_layers: int
    experts_per_layer: int
    top_k: int
    hidden_dim: int
    bytes_per_element: int = 2
    expert_flops: float = 2e9
    expert_memory_bytes: float = 100e6
    non_expert_flops: float = 5e8
    dense_memory_bytes: float = 0.0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if not 1 <= self.top_k <= self.experts_per_layer:
            raise ConfigError(
                f"top_k must be in [1, {self.experts_per_layer}], got {self.top_k}"
            )
        if self.hidden_dim < 1 or self.bytes_per_element < 1:
            raise ConfigError("hidden_dim and bytes_per_element must be >= 1")

    @property
    def total_memory_bytes(self) -> float:
        """Full model footprint: all expert replicas plus dense components."""
        return (
            self.num_layers * self.experts_per_layer * self.expert_memory_bytes
            + self.dense_memory_bytes
        )


def hidden_state_bytes(spec: MoEModelSpec) -> int:
    """Size of one per-token hidden state on the wire."""
    return spec.hidden_dim * spec.bytes_per_element


@dataclass(frozen=True)
class GatingScores:
    """Pre-softmax gate logits for one token at one layer."""

    layer: int
    scores: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("gating scores must be finite")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def gate_topk(g: GatingScores, k: int) -> list[tuple[int, float]]:
    """Select the K highest-scoring experts and renormalize their weights.

    Weights are the softmax over the selected logits only. Ties break toward
    the lower expert index.

    Returns:
        List of (expert_index, weight) sorted by descending score.
    """
    scores = np.asarray(g.scores, dtype=float)
    n = scores.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"K must be in [1, {n}], got {k}")
    # stable sort on negated scores keeps lower indices first on ties
    order = np.argsort(-scores, kind="stable")[:k]
    weights = softmax(scores[order])
    return [(int(i), float(w)) for i, w in zip(order, weights)]


@dataclass(frozen=True)
class SkewSpec:
    """Synthetic gating skew.

    gaussian: rank-r mean logit is -s*ln(r) plus N(0, sigma^2) noise.
    zipf: logits are -s*ln(r) plus standard Gumbel noise, so the top-1
    selection follows the Zipf law r^-s / H exactly in distribution.
    """

    mode: str = "gaussian"
    s: float = 1.0
    sigma: float = 0.5

    def __post_init__(self):
        if self.mode not in ("gaussian", "zipf"):
            raise ConfigError(f"unknown skew mode {self.mode!r}")
        if self.s < 0 or self.sigma < 0:
            raise ConfigError("skew exponent and sigma must be >= 0")


class GatingSampler:
    """Draws per-layer gating logits under a fixed rank permutation.

    The permutation of expert ranks is drawn once from the scenario seed, so
    which experts are hot is stable across the profiling and simulation phases
    of one scenario.
    """

    def __init__(self, num_layers: int, num_experts: int, skew: SkewSpec, seed: int):
        self.num_layers = num_layers
        self.num_experts = num_experts
        self.skew = skew
        rng = np.random.default_rng([seed, 0x5EED])
        self.ranks = np.empty((num_layers, num_experts), dtype=int)
        for layer in range(num_layers):
            perm = rng.permutation(num_experts)
            # expert perm[i] holds rank i+1
            self.ranks[layer, perm] = np.arange(1, num_experts + 1)
        self._means = -skew.s * np.log(self.ranks.astype(float))

    def rank_of(self, layer: int, expert: int) -> int:
        return int(self.ranks[layer, expert])

    def sample(self, rng: np.random.Generator, layer: int) -> GatingScores:
        means = self._means[layer]
        if self.skew.mode == "zipf":
            noise = rng.gumbel(0.0, 1.0, self.num_experts)
        else:
            noise = self.skew.sigma * rng.standard_normal(self.num_experts)
        return GatingScores(layer=layer, scores=means + noise)


def sample_gating(rng: np.random.Generator, sampler: GatingSampler, layer: int) -> GatingScores:
    """Draw one token's gate logits for a layer from the scenario's sampler."""
    return sampler.sample(rng, layer)


def generate_trace(
    sampler: GatingSampler, rng: np.random.Generator, num_tokens: int
) -> list[list[GatingScores]]:
    """Pre-draw gating logits for num_tokens tokens across all layers."""
    return [
        [sampler.sample(rng, layer) for layer in range(sampler.num_layers)]
        for _ in range(num_tokens)
    ]


@dataclass
class ActivationStats:
    """Per-layer expert activation and co-activation counters."""

    num_layers: int
    num_experts: int
    activation_count: list[np.ndarray] = field(default_factory=list)
    coactivation_count: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.activation_count:
            self.activation_count = [
                np.zeros(self.num_experts, dtype=np.int64) for _ in range(self.num_layers)
            ]
        if not self.coactivation_count:
            self.coactivation_count = [
                np.zeros((self.num_experts, self.num_experts), dtype=np.int64)
                for _ in range(self.num_layers)
            ]

    def total(self, layer: int) -> int:
        return int(self.activation_count[layer].sum())

    def frequency(self, layer: int) -> np.ndarray:
        total = self.total(layer)
        if total == 0:
            return np.zeros(self.num_experts)
        return self.activation_count[layer] / total

    def to_json(self) -> str:
        doc = {
            "num_layers": self.num_layers,
            "num_experts": self.num_experts,
            "activation_count": [c.tolist() for c in self.activation_count],
            "coactivation_count": [m.tolist() for m in self.coactivation_count],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ActivationStats":
        doc = json.loads(text)
        stats = cls(num_layers=doc["num_layers"], num_experts=doc["num_experts"])
        stats.activation_count = [np.array(c, dtype=np.int64) for c in doc["activation_count"]]
        stats.coactivation_count = [
            np.array(m, dtype=np.int64) for m in doc["coactivation_count"]
        ]
        return stats


def record_activation(stats: ActivationStats, layer: int, selected: set[int]) -> ActivationStats:
    """Count one selection event: every selected expert and every unordered pair."""
    chosen = sorted(selected)
    if chosen and not (0 <= chosen[0] and chosen[-1] < stats.num_experts):
        raise ValueError(f"selected experts out of range: {chosen}")
    counts = stats.activation_count[layer]
    coact = stats.coactivation_count[layer]
    for i in chosen:
        counts[i] += 1
        coact[i, i] += 1
    for idx, i in enumerate(chosen):
        for j in chosen[idx + 1:]:
            coact[i, j] += 1
            coact[j, i] += 1
    return stats


@dataclass
class ExpertSimilarity:
    """Per-layer symmetric expert-similarity matrices with unit diagonal."""

    matrices: list[np.ndarray]

    def sim(self, layer: int, i: int, j: int) -> float:
        return float(self.matrices[layer][i, j])


def build_similarity(
    num_layers: int, num_experts: int, tau: float = 0.3, seed: int = 0
) -> ExpertSimilarity:
    """Synthetic similarity: experts embedded at random angles on a unit circle.

    sim(i, j) = exp(-d(i, j)/tau) where d is the angular distance in radians.
    Stand-in structure; the gradient of similarities, not their provenance, is
    what the substitution policies consume.
    """
    if tau <= 0:
        raise ConfigError(f"similarity tau must be > 0, got {tau}")
    rng = np.random.default_rng([seed, 0x51D])
    matrices = []
    for _ in range(num_layers):
        angles = rng.uniform(0.0, 2.0 * math.pi, num_experts)
        diff = np.abs(angles[:, None] - angles[None, :])
        dist = np.minimum(diff, 2.0 * math.pi - diff)
        m = np.exp(-dist / tau)
        np.fill_diagonal(m, 1.0)
        matrices.append(m)
    return ExpertSimilarity(matrices=matrices)
