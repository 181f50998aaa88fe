"""Two-phase private distributed gradient descent over a mixing graph.

Gradient phase (rounds 1..T): every node broadcasts its previous iterate
plus Gaussian noise, averages the received messages with the mixing
weights, projects onto the box, and takes a projected local gradient step:

    y_i(t) = x_i(t-1) + noise           (broadcast)
    z_i(t) = proj(sum_j w_ij y_j(t))    (consensus)
    x_i(t) = proj(z_i(t) - eta_t grad_i(z_i(t)))

The noise protecting iterate x_i(t) has scale ``schedule.scales[t-1]``, so
the round-(t+1) broadcast carries scale M_t; this is the pairing the budget
accounting assumes (round-t sensitivity over M_t).  The round-1 broadcast
carries x(0) = 0, which touches no data: by default it still gets scale-M_1
noise for a uniform message shape, and ``strict_first_broadcast`` sends the
literal zero instead.  Both choices spend the same budget.

Agreement phase (rounds t > T): exact broadcasts and pure consensus
averaging without projection, until the per-node relative change drops
below ``stage2_rel_tol`` or a round cap is hit.  The phase leaves the mean
iterate unchanged and contracts the consensus deviation geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import CommGraph
from .objectives import BoxDomain, LocalDataset, grand_mean, project_box
from .privacy import NoiseSchedule
from .rng import derive_rng

__all__ = [
    "RunConfig",
    "RunMetrics",
    "SimState",
    "SimulationError",
    "run",
    "run_agreement_phase",
    "run_gradient_phase",
]

# Denominator floor in the relative-change stopping rule.
_REL_CHANGE_FLOOR = 1e-12


class SimulationError(RuntimeError):
    """Non-finite iterates or an otherwise divergent configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation needs, RNG stream included."""

    graph: CommGraph
    domain: BoxDomain
    datasets: tuple[LocalDataset, ...]
    schedule: NoiseSchedule
    noise_seed: int
    stage2_rel_tol: float = 1e-9
    stage2_max_rounds: int | None = None
    strict_first_broadcast: bool = False
    probe_nodes: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "datasets", tuple(self.datasets))
        if len(self.datasets) != self.graph.n_nodes:
            raise ValueError(
                f"need one dataset per node: {len(self.datasets)} datasets for "
                f"{self.graph.n_nodes} nodes"
            )
        for data in self.datasets:
            if data.dimension != self.domain.dimension:
                raise ValueError("dataset dimension does not match the domain")
            if not self.domain.contains(data.points):
                raise ValueError(f"dataset of node {data.node_id} leaves the domain box")
        if self.schedule.horizon < 1:
            raise ValueError("schedule horizon must be >= 1")
        if self.stage2_rel_tol < 0.0:
            raise ValueError("stage2_rel_tol must be nonnegative")
        if self.stage2_max_rounds is not None and self.stage2_max_rounds < 1:
            raise ValueError("stage2_max_rounds must be >= 1 when given")
        if not self.probe_nodes or any(
            not 0 <= i < self.graph.n_nodes for i in self.probe_nodes
        ):
            raise ValueError("probe_nodes must name at least one valid node")

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def horizon(self) -> int:
        return self.schedule.horizon

    def minimizer(self) -> np.ndarray:
        """Grand mean of all node data: the aggregate quadratic's optimum."""
        return grand_mean(self.datasets)

    def agreement_round_cap(self) -> int:
        """Default cap 10 * log(1/tol) / log(1/beta) on agreement rounds."""
        if self.stage2_max_rounds is not None:
            return self.stage2_max_rounds
        tol = max(self.stage2_rel_tol, 1e-15)
        beta = min(max(self.graph.beta, 1e-12), 1.0 - 1e-12)
        return int(math.ceil(10.0 * math.log(1.0 / tol) / math.log(1.0 / beta)))


@dataclass(frozen=True)
class SimState:
    """Network snapshot after a round: iterates, broadcasts, consensus points."""

    t: int
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class RunMetrics:
    """Per-round time series; parallel arrays, one entry per executed round.

    ``stage`` is 1 for gradient rounds and 2 for agreement rounds.
    ``z_dev`` (consensus deviation of the post-projection averages) is NaN
    in stage 2; ``mean_drift`` (infinity-norm drift of the mean iterate
    from its stage-1 endpoint) and ``contraction_ratio`` (consensus
    deviation over its geometric bound beta^(t-T) * ||x(T)||) are NaN in
    stage 1.
    """

    stage: np.ndarray
    t: np.ndarray
    normalized_error: np.ndarray
    consensus_dev: np.ndarray
    z_dev: np.ndarray
    probe_error: np.ndarray
    mean_iterate: np.ndarray
    mean_drift: np.ndarray
    contraction_ratio: np.ndarray
    probe_nodes: tuple[int, ...]

    @staticmethod
    def concat(first: "RunMetrics", second: "RunMetrics") -> "RunMetrics":
        if first.probe_nodes != second.probe_nodes:
            raise ValueError("cannot concatenate metrics with different probes")
        return RunMetrics(
            stage=np.concatenate([first.stage, second.stage]),
            t=np.concatenate([first.t, second.t]),
            normalized_error=np.concatenate(
                [first.normalized_error, second.normalized_error]
            ),
            consensus_dev=np.concatenate([first.consensus_dev, second.consensus_dev]),
            z_dev=np.concatenate([first.z_dev, second.z_dev]),
            probe_error=np.concatenate([first.probe_error, second.probe_error]),
            mean_iterate=np.concatenate([first.mean_iterate, second.mean_iterate]),
            mean_drift=np.concatenate([first.mean_drift, second.mean_drift]),
            contraction_ratio=np.concatenate(
                [first.contraction_ratio, second.contraction_ratio]
            ),
            probe_nodes=first.probe_nodes,
        )

    def gradient_end_index(self) -> int:
        idx = np.nonzero(self.stage == 1)[0]
        if idx.size == 0:
            raise ValueError("metrics contain no gradient-phase rounds")
        return int(idx[-1])

    def final_gradient_mean(self) -> np.ndarray:
        """Mean iterate at the end of the gradient phase."""
        return self.mean_iterate[self.gradient_end_index()]

    def gradient_end_normalized_error(self) -> float:
        return float(self.normalized_error[self.gradient_end_index()])

    def gradient_end_probe_error(self, probe: int = 0) -> float:
        return float(self.probe_error[self.gradient_end_index(), probe])

    @property
    def agreement_rounds(self) -> int:
        return int(np.sum(self.stage == 2))

    def rows(self):
        """(stage, t, normalized_error, consensus_dev, probe_error) rows."""
        for i in range(self.t.size):
            yield (
                int(self.stage[i]),
                int(self.t[i]),
                float(self.normalized_error[i]),
                float(self.consensus_dev[i]),
                float(self.probe_error[i, 0]),
            )


class _Recorder:
    def __init__(self, probe_nodes: tuple[int, ...], x_star: np.ndarray) -> None:
        self.probe_nodes = probe_nodes
        self.x_star = x_star
        self.x_star_sq = float(x_star @ x_star)
        self.rows: list[tuple] = []

    def record(
        self,
        stage: int,
        t: int,
        x: np.ndarray,
        z_dev: float = math.nan,
        mean_drift: float = math.nan,
        contraction_ratio: float = math.nan,
    ) -> None:
        x_bar = x.mean(axis=0)
        err = x_bar - self.x_star
        denom = max(self.x_star_sq, _REL_CHANGE_FLOOR)
        normalized = float(err @ err) / denom
        dev = float(np.linalg.norm(x - x_bar[None, :]))
        probes = [
            float(np.sum((x[i] - self.x_star) ** 2)) / denom for i in self.probe_nodes
        ]
        self.rows.append(
            (stage, t, normalized, dev, z_dev, probes, x_bar, mean_drift, contraction_ratio)
        )

    def build(self) -> RunMetrics:
        stages, ts, errs, devs, zdevs, probes, means, drifts, ratios = zip(*self.rows)
        return RunMetrics(
            stage=np.array(stages, dtype=int),
            t=np.array(ts, dtype=int),
            normalized_error=np.array(errs),
            consensus_dev=np.array(devs),
            z_dev=np.array(zdevs),
            probe_error=np.array(probes),
            mean_iterate=np.array(means),
            mean_drift=np.array(drifts),
            contraction_ratio=np.array(ratios),
            probe_nodes=self.probe_nodes,
        )


def broadcast_noise_scale(schedule: NoiseSchedule, round_index: int, strict_first: bool) -> float:
    """Noise scale of the round-``round_index`` broadcast (1-based).

    The broadcast of round r carries iterate x(r-1), protected with scale
    M_{r-1}; round 1 carries the data-free x(0) with scale M_1, or exactly
    zero under the strict flag.
    """
    if round_index == 1:
        return 0.0 if strict_first else float(schedule.scales[0])
    return float(schedule.scales[round_index - 2])


def _gradient_sums(datasets: Sequence[LocalDataset]) -> tuple[np.ndarray, np.ndarray]:
    counts = np.array([d.n_points for d in datasets], dtype=float)
    sums = np.stack([d.points.sum(axis=0) for d in datasets])
    return counts, sums


def _gradient_round(
    x_prev: np.ndarray,
    noise: np.ndarray,
    weights: np.ndarray,
    domain: BoxDomain,
    step_size: float,
    counts: np.ndarray,
    sums: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One synchronous round: returns (y, z, x)."""
    y = x_prev + noise
    z = project_box(weights @ y, domain)
    grads = counts[:, None] * z - sums
    x = project_box(z - step_size * grads, domain)
    return y, z, x


def run_gradient_phase(config: RunConfig) -> tuple[SimState, RunMetrics]:
    """Execute rounds 1..T of the noisy gradient phase.

    All nodes update synchronously from the previous round's broadcasts;
    each round consumes exactly n_nodes * dimension standard normal draws
    from the run's stream, node-major.  Deterministic given
    ``config.noise_seed``.
    """
    n, p = config.n_nodes, config.domain.dimension
    weights = config.graph.weights
    counts, sums = _gradient_sums(config.datasets)
    rng = derive_rng(config.noise_seed)
    recorder = _Recorder(config.probe_nodes, config.minimizer())

    x = np.zeros((n, p))
    y = z = noise = x
    for t in range(1, config.horizon + 1):
        scale = broadcast_noise_scale(config.schedule, t, config.strict_first_broadcast)
        noise = rng.standard_normal((n, p)) * scale
        y, z, x = _gradient_round(
            x, noise, weights, config.domain, float(config.schedule.step_sizes[t - 1]),
            counts, sums,
        )
        if not np.isfinite(x).all():
            raise SimulationError(f"non-finite iterate at gradient round {t}")
        z_bar = z.mean(axis=0)
        recorder.record(1, t, x, z_dev=float(np.linalg.norm(z - z_bar[None, :])))
    state = SimState(t=config.horizon, x=x, y=y, z=z, noise=noise)
    return state, recorder.build()


def run_agreement_phase(
    state: SimState, config: RunConfig
) -> tuple[SimState, RunMetrics]:
    """Exact-broadcast consensus rounds from a gradient-phase endpoint.

    No projection is applied (averages of box points stay in the box).
    Stops when max_i ||x_i(t) - x_i(t-1)|| / max(||x_i(t-1)||, 1e-12) drops
    below ``stage2_rel_tol``, or after the round cap.
    """
    weights = config.graph.weights
    beta = config.graph.beta
    recorder = _Recorder(config.probe_nodes, config.minimizer())
    x = state.x
    x_t_norm = float(np.linalg.norm(x))
    mean_at_t = x.mean(axis=0)
    cap = config.agreement_round_cap()
    t = state.t
    for k in range(1, cap + 1):
        t = state.t + k
        y = x
        x_next = weights @ y
        node_changes = np.linalg.norm(x_next - x, axis=1)
        node_norms = np.maximum(np.linalg.norm(x, axis=1), _REL_CHANGE_FLOOR)
        rel_change = float(np.max(node_changes / node_norms))
        dev = float(np.linalg.norm(x_next - x_next.mean(axis=0)[None, :]))
        geometric = beta**k * x_t_norm
        ratio = dev / geometric if geometric > 0.0 else (0.0 if dev == 0.0 else math.inf)
        recorder.record(
            2,
            t,
            x_next,
            mean_drift=float(np.max(np.abs(x_next.mean(axis=0) - mean_at_t))),
            contraction_ratio=ratio,
        )
        x = x_next
        if rel_change < config.stage2_rel_tol:
            break
    final = SimState(t=t, x=x, y=x, z=x, noise=np.zeros_like(x))
    return final, recorder.build()


def run(config: RunConfig) -> RunMetrics:
    """Both phases back to back; metrics concatenated with the stage marker."""
    state, gradient_metrics = run_gradient_phase(config)
    _, agreement_metrics = run_agreement_phase(state, config)
    return RunMetrics.concat(gradient_metrics, agreement_metrics)
