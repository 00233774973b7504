"""Expert selection policies: Top-K, similarity substitution, energy-aware.

A policy decides which experts actually execute for a token and on which
hosting satellite. Utility is the executed full-softmax probability mass,
scaled by similarity when a substitute stands in for the gated expert; it is
the model-quality proxy that the tolerance sweeps report.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .constellation import SatelliteId
from .errors import ConfigError
from .moe import ExpertSimilarity, GatingScores, MoEModelSpec, gate_topk, softmax
from .placement import PlacementMap
from .routing import Route


@dataclass(frozen=True)
class SelectionPolicy:
    """Which selection rule runs and its tolerance/blending knobs."""

    kind: str = "topk"
    epsilon: float = 0.0
    w_util: float = 1.0
    w_deg: float = 0.0

    def __post_init__(self):
        if self.kind not in ("topk", "similarity_aware", "degradation_aware"):
            raise ConfigError(f"unknown selection kind {self.kind!r}")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.w_util < 0 or self.w_deg < 0:
            raise ConfigError("blend weights must be >= 0")
        if self.kind == "degradation_aware" and self.w_util == 0 and self.w_deg == 0:
            raise ConfigError("degradation_aware needs at least one positive weight")


@dataclass(frozen=True)
class ExecutedExpert:
    expert: int
    weight: float
    host: SatelliteId


@dataclass(frozen=True)
class Substitution:
    gated_expert: int
    substitute_expert: int
    similarity: float


@dataclass(frozen=True)
class SelectionOutcome:
    """Experts executed for one token at one layer.

    contributions[i] is the utility credited to executed[i]; their sum is the
    outcome utility.
    """

    layer: int
    executed: list[ExecutedExpert]
    substitutions: list[Substitution]
    utility: float
    contributions: tuple[float, ...] = ()


@dataclass
class ExpertAccess:
    """Read view of replica reachability for one snapshot.

    Wraps the placement plus shortest routes from the source satellite;
    unavailable satellites (e.g. browned out) are avoided when any available
    replica exists.
    """

    placement: PlacementMap
    routes: dict[SatelliteId, Route]
    source: SatelliteId
    unavailable: set[SatelliteId] = field(default_factory=set)

    def delay_to(self, sat: SatelliteId) -> float:
        route = self.routes.get(sat)
        return route.total_delay_s if route is not None else math.inf

    def host_options(self, layer: int, expert: int) -> list[SatelliteId]:
        hosts = self.placement.replicas(layer, expert)
        usable = [h for h in hosts if h not in self.unavailable]
        return usable if usable else list(hosts)

    def nearest_host(self, layer: int, expert: int) -> tuple[SatelliteId, float]:
        hosts = self.host_options(layer, expert)
        best = min(hosts, key=lambda h: (self.delay_to(h), h))
        return best, self.delay_to(best)


def select_topk(
    g: GatingScores, spec: MoEModelSpec, access: ExpertAccess
) -> SelectionOutcome:
    """Baseline: execute the gated Top-K on their nearest replicas."""
    probs = softmax(g.scores)
    executed = []
    contributions = []
    for expert, weight in gate_topk(g, spec.top_k):
        host, _ = access.nearest_host(g.layer, expert)
        executed.append(ExecutedExpert(expert, weight, host))
        contributions.append(float(probs[expert]))
    return SelectionOutcome(
        layer=g.layer,
        executed=executed,
        substitutions=[],
        utility=float(sum(contributions)),
        contributions=tuple(contributions),
    )


def select_similarity_aware(
    g: GatingScores,
    spec: MoEModelSpec,
    access: ExpertAccess,
    sim: ExpertSimilarity,
    epsilon: float,
) -> SelectionOutcome:
    """Swap remote gated experts for nearer look-alikes within the tolerance.

    A gated expert whose nearest replica is remote is replaced by the
    strictly-nearer-hosted expert of highest similarity, provided
    1 - sim <= epsilon. The substitute inherits the gating weight; its utility
    contribution is scaled by the similarity.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    probs = softmax(g.scores)
    gated = gate_topk(g, spec.top_k)
    gated_set = {e for e, _ in gated}
    taken = set(gated_set)

    executed: list[ExecutedExpert] = []
    substitutions: list[Substitution] = []
    contributions: list[float] = []
    for expert, weight in gated:
        host, delay = access.nearest_host(g.layer, expert)
        choice, choice_host, contribution = expert, host, float(probs[expert])
        if delay > 0.0:
            best_sub = None   # (-sim, candidate, host, delay)
            for candidate in range(spec.experts_per_layer):
                if candidate in taken:
                    continue
                c_host, c_delay = access.nearest_host(g.layer, candidate)
                if c_delay >= delay:
                    continue
                s = sim.sim(g.layer, expert, candidate)
                cand = (-s, candidate, c_host, c_delay)
                if best_sub is None or cand < best_sub:
                    best_sub = cand
            if best_sub is not None and 1.0 - (-best_sub[0]) <= epsilon:
                s, choice, choice_host = -best_sub[0], best_sub[1], best_sub[2]
                substitutions.append(Substitution(expert, choice, s))
                contribution = s * float(probs[expert])
                taken.add(choice)
        executed.append(ExecutedExpert(choice, weight, choice_host))
        contributions.append(contribution)
    return SelectionOutcome(
        layer=g.layer,
        executed=executed,
        substitutions=substitutions,
        utility=float(sum(contributions)),
        contributions=tuple(contributions),
    )


def select_degradation_aware(
    g: GatingScores,
    spec: MoEModelSpec,
    access: ExpertAccess,
    marginal_cost: Callable[[SatelliteId], float],
    epsilon: float,
    w_util: float = 1.0,
    w_deg: float = 1.0,
) -> SelectionOutcome:
    """Prefer candidate experts hosted where extra compute degrades least.

    Candidates for a gated expert are the same-layer experts within an
    epsilon softmax-probability gap. Among every (candidate, replica host)
    pair the policy minimizes
        w_deg * marginal_cost(host) + w_util * (p(gated) - p(candidate)),
    ties broken by lower expert index, then lower satellite id. With
    epsilon = 0 the executed index set is exactly the gated Top-K.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    probs = softmax(g.scores)
    gated = gate_topk(g, spec.top_k)
    gated_set = {e for e, _ in gated}
    taken = set(gated_set)

    executed: list[ExecutedExpert] = []
    substitutions: list[Substitution] = []
    contributions: list[float] = []
    for expert, weight in gated:
        if epsilon == 0.0:
            candidates = [expert]
        else:
            candidates = [expert] + [
                c
                for c in range(spec.experts_per_layer)
                if c not in taken and float(probs[expert] - probs[c]) <= epsilon
            ]
        best = None   # (objective, candidate, host)
        for candidate in candidates:
            gap = float(probs[expert] - probs[candidate])
            for host in access.host_options(g.layer, candidate):
                objective = w_deg * marginal_cost(host) + w_util * gap
                cand = (objective, candidate, host)
                if best is None or cand < best:
                    best = cand
        _, choice, choice_host = best
        if choice != expert:
            substitutions.append(Substitution(expert, choice, 1.0))
            taken.add(choice)
        executed.append(ExecutedExpert(choice, weight, choice_host))
        contributions.append(float(probs[choice]))
    return SelectionOutcome(
        layer=g.layer,
        executed=executed,
        substitutions=substitutions,
        utility=float(sum(contributions)),
        contributions=tuple(contributions),
    )


def select(
    policy: SelectionPolicy,
    g: GatingScores,
    spec: MoEModelSpec,
    access: ExpertAccess,
    sim: ExpertSimilarity | None = None,
    marginal_cost: Callable[[SatelliteId], float] | None = None,
) -> SelectionOutcome:
    """Dispatch to the configured selection rule."""
    if policy.kind == "topk":
        return select_topk(g, spec, access)
    if policy.kind == "similarity_aware":
        if sim is None:
            raise ValueError("similarity_aware requires an ExpertSimilarity")
        return select_similarity_aware(g, spec, access, sim, policy.epsilon)
    if marginal_cost is None:
        raise ValueError("degradation_aware requires a marginal-cost query")
    return select_degradation_aware(
        g, spec, access, marginal_cost, policy.epsilon, policy.w_util, policy.w_deg
    )
