"""Empirical audit of the privacy-loss random variable.

The privacy loss of a transcript of noisy broadcasts decomposes, once both
runs are conditioned on the same observed messages, into a deterministic
quadratic part and a zero-mean noise part:

    loss = sum_t ||g(t)||^2 / (2 M_t^2)  +  sum_t <n_k(t), g(t)> / M_t^2,

where g(t) = x_k(t) - x'_k(t) is the gap between the edited node's iterate
and its counterfactual under the single-point edit, and n_k(t) is the noise
realization attached to x_k(t).  The audit runs the gradient phase twice
under that coupling (identical noise, shared broadcasts: the counterfactual
run consumes the factual run's messages when averaging) and evaluates both
terms on the realized trajectories.

The deterministic part never exceeds half the configured sensitivity spend,
the noise part has zero mean, and the total exceeds epsilon in magnitude
with probability at most delta; :func:`tail_audit` checks the last claim on
a Monte Carlo sample with a binomial confidence slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .engine import RunConfig, _gradient_round, _gradient_sums, broadcast_noise_scale
from .objectives import LocalDataset, project_box
from .privacy import PrivacyBudget
from .rng import derive_rng, derive_seed

__all__ = [
    "AuditReport",
    "NeighborEdit",
    "PrivacyLossSample",
    "collect_samples",
    "coupled_gap_trace",
    "coupled_privacy_loss",
    "plant_point",
    "tail_audit",
    "worst_case_edit",
]

# Stream label separating audit sample streams from everything else.
_AUDIT_STREAM = 0xA0D17


@dataclass(frozen=True)
class NeighborEdit:
    """Single-point dataset edit: replace one point of one node."""

    node_id: int
    point_index: int
    replacement: np.ndarray

    def apply(self, datasets: tuple[LocalDataset, ...]) -> tuple[LocalDataset, ...]:
        edited = list(datasets)
        edited[self.node_id] = datasets[self.node_id].replace_point(
            self.point_index, self.replacement
        )
        return tuple(edited)


@dataclass(frozen=True)
class PrivacyLossSample:
    """One realized privacy-loss value, split into its two terms."""

    deterministic_part: float
    noise_part: float

    @property
    def total(self) -> float:
        return self.deterministic_part + self.noise_part


@dataclass(frozen=True)
class AuditReport:
    n_samples: int
    exceed_rate: float
    bound: float
    passed: bool


def _validate_edit(config: RunConfig, edit: NeighborEdit) -> np.ndarray:
    if not 0 <= edit.node_id < config.n_nodes:
        raise ValueError(f"edit node_id {edit.node_id} out of range")
    data = config.datasets[edit.node_id]
    if not 0 <= edit.point_index < data.n_points:
        raise ValueError(f"edit point_index {edit.point_index} out of range")
    replacement = np.asarray(edit.replacement, dtype=float)
    if replacement.shape != (config.domain.dimension,):
        raise ValueError("edit must touch exactly one point of matching dimension")
    if not config.domain.contains(replacement):
        raise ValueError("replacement point leaves the domain box")
    return replacement


def _coupled_run(
    config: RunConfig, edit: NeighborEdit, noise_seed: int, collect_gaps: bool
) -> tuple[PrivacyLossSample, np.ndarray | None]:
    replacement = _validate_edit(config, edit)
    k = edit.node_id
    old_point = config.datasets[k].points[edit.point_index]
    # grad'_k(z) = grad_k(z) + (old - new): the only difference between runs.
    grad_shift = old_point - replacement

    n, p = config.n_nodes, config.domain.dimension
    weights = config.graph.weights
    counts, sums = _gradient_sums(config.datasets)
    schedule = config.schedule
    if np.any(schedule.scales <= 0.0):
        raise ValueError("privacy-loss audit needs strictly positive noise scales")
    rng = derive_rng(noise_seed)

    horizon = schedule.horizon
    gaps = np.zeros(horizon) if collect_gaps else None
    deterministic = 0.0
    noise_term = 0.0

    def account(iterate_index: int, gap: np.ndarray, noise_at_k: np.ndarray) -> None:
        nonlocal deterministic, noise_term
        scale = float(schedule.scales[iterate_index - 1])
        gap_sq = float(gap @ gap)
        deterministic += gap_sq / (2.0 * scale**2)
        noise_term += float(noise_at_k @ gap) / scale**2
        if gaps is not None:
            gaps[iterate_index - 1] = math.sqrt(gap_sq)

    x = np.zeros((n, p))
    gap_prev = np.zeros(p)  # gap of x(0): both runs start at the origin
    for t in range(1, horizon + 1):
        scale = broadcast_noise_scale(schedule, t, config.strict_first_broadcast)
        noise = rng.standard_normal((n, p)) * scale
        if t >= 2:
            # The round-t broadcast reveals x(t-1) under scale M_{t-1}.
            account(t - 1, gap_prev, noise[k])
        step = float(schedule.step_sizes[t - 1])
        _, z, x = _gradient_round(x, noise, weights, config.domain, step, counts, sums)
        # Counterfactual iterate of the edited node from the same consensus
        # point (both runs see identical broadcasts by the coupling).
        grad_k = counts[k] * z[k] - sums[k]
        x_alt = project_box(z[k] - step * (grad_k + grad_shift), config.domain)
        gap_prev = x[k] - x_alt
    # Terminal broadcast of x(T): the transcript being audited releases every
    # iterate under noise, so the final draw (scale M_T) is consumed here
    # even though the agreement phase would send x(T) exactly.
    final_draw = rng.standard_normal((n, p)) * float(schedule.scales[horizon - 1])
    account(horizon, gap_prev, final_draw[k])
    return PrivacyLossSample(deterministic, noise_term), gaps


def coupled_privacy_loss(
    config: RunConfig, edit: NeighborEdit, noise_seed: int
) -> PrivacyLossSample:
    """Privacy loss of one coupled pair of runs under a single-point edit.

    Both runs share one noise realization and one message transcript (the
    counterfactual run consumes the factual run's broadcasts when forming
    its consensus points), so the loss reduces to the edited node's iterate
    gaps against the noise attached to them.  The transcript covers all T
    iterates: the final iterate's broadcast noise (scale M_T) is drawn even
    though the agreement phase that follows would send it exactly.
    """
    sample, _ = _coupled_run(config, edit, noise_seed, collect_gaps=False)
    return sample


def coupled_gap_trace(
    config: RunConfig, edit: NeighborEdit, noise_seed: int
) -> np.ndarray:
    """Per-round iterate gap norms ||x_k(t) - x'_k(t)|| of the coupled runs."""
    _, gaps = _coupled_run(config, edit, noise_seed, collect_gaps=True)
    assert gaps is not None
    return gaps


def collect_samples(
    config: RunConfig, edit: NeighborEdit, n_samples: int, master_seed: int
) -> list[PrivacyLossSample]:
    """Independent coupled-run samples, one isolated noise stream each."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return [
        coupled_privacy_loss(config, edit, derive_seed(master_seed, _AUDIT_STREAM, i))
        for i in range(n_samples)
    ]


def tail_audit(samples: list[PrivacyLossSample], budget: PrivacyBudget) -> AuditReport:
    """Check that |loss| >= epsilon is as rare as the budget promises.

    ``exceed_rate`` is the fraction of samples with |total| >= epsilon.  The
    pass bound is delta plus a two-sigma binomial slack
    2 * sqrt(delta (1 - delta) / n): at delta = 1e-3 and 1e4 samples the
    target sits at the Monte Carlo resolution limit, so a hard <= delta cut
    would flake on sampling noise alone.
    """
    n = len(samples)
    if n < 1000:
        raise ValueError(f"need at least 1000 samples for a meaningful tail audit, got {n}")
    totals = np.array([s.total for s in samples])
    exceed_rate = float(np.mean(np.abs(totals) >= budget.epsilon))
    slack = 2.0 * math.sqrt(budget.delta * (1.0 - budget.delta) / n)
    bound = budget.delta + slack
    return AuditReport(
        n_samples=n, exceed_rate=exceed_rate, bound=bound, passed=exceed_rate <= bound
    )


def worst_case_edit(config: RunConfig, node_id: int = 0, point_index: int = 0) -> NeighborEdit:
    """Edit moving the chosen point to the corner opposite its sign pattern.

    Paired with :func:`plant_point` (which pins the original point to a
    corner) this realizes the cube-diameter gap the sensitivity bound is
    built from.
    """
    original = config.datasets[node_id].points[point_index]
    r = config.domain.half_width
    replacement = np.where(original >= 0.0, -r, r).astype(float)
    return NeighborEdit(node_id=node_id, point_index=point_index, replacement=replacement)


def plant_point(
    config: RunConfig, node_id: int = 0, point_index: int = 0, corner_sign: float = -1.0
) -> RunConfig:
    """Pin one dataset point to a cube corner (worst-case audit instance)."""
    r = config.domain.half_width
    corner = np.full(config.domain.dimension, corner_sign * r)
    datasets = NeighborEdit(node_id, point_index, corner).apply(config.datasets)
    return replace(config, datasets=datasets)
