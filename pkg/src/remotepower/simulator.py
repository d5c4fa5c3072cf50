"""Monte Carlo rollout of the closed loop the chain models analytically.

The simulator never tracks the raw plant state over long horizons (it diverges
geometrically for |a| > 1); everything the metrics need is a function of the
estimation innovation, which resets on every successful transmission.  The
plant state itself is only materialized when a trace file is requested.

Policy lookups snap the innovation to the nearest grid node before applying
the rule, so a rollout exercises exactly the decision function the chain
evaluates, not an off-grid variant of it.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.special import logsumexp

from .belief import (
    BeliefGrid,
    DegenerateSuccessError,
    GridGeometry,
    SupportOverflowError,
    gaussian_grid,
    propagate,
    mean as belief_mean,
)
from .model import ControlProblem, ScalarProcess, reception_prob
from .policy import NodeKey, PowerPolicy

logger = logging.getLogger(__name__)

STREAM_NOISE = 0
STREAM_CHANNEL = 1
STREAM_RECEPTION = 2


def _generator(base_seed: int, replication: int, stream: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(replication, stream))
    return np.random.Generator(np.random.Philox(seq))


def estimate_closed_form(process: ScalarProcess, x_received: float, steps_since_success: int) -> float:
    """Estimate with the innovation mean taken as zero: a^k times the last
    received state."""
    return process.a**steps_since_success * x_received


def estimate_belief_mean(
    process: ScalarProcess,
    x_received: float,
    steps_since_success: int,
    innovation_mean: float,
) -> float:
    """Posterior-mean estimate: the closed form shifted by the conditional
    innovation mean given the failure history."""
    return estimate_closed_form(process, x_received, steps_since_success) + innovation_mean


@dataclass
class TrajectoryMetrics:
    """Time averages from one rollout."""

    horizon: int
    seed: int
    replication: int
    estimator_mode: str
    avg_cost: float
    avg_power: float
    avg_error: float
    success_rate: float
    gain_occupancy: list[float]
    root_attempts: list[int]
    root_successes: list[int]
    tail_fraction: float
    max_estimator_gap: float | None
    error_windows: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "seed": self.seed,
            "replication": self.replication,
            "estimator_mode": self.estimator_mode,
            "avg_cost": self.avg_cost,
            "avg_power": self.avg_power,
            "avg_error": self.avg_error,
            "success_rate": self.success_rate,
            "gain_occupancy": list(self.gain_occupancy),
            "root_attempts": list(self.root_attempts),
            "root_successes": list(self.root_successes),
            "tail_fraction": self.tail_fraction,
            "max_estimator_gap": self.max_estimator_gap,
            "error_windows": list(self.error_windows),
        }


class _BeliefCache:
    """Lazily propagated per-node beliefs and their derived centers.

    Mirrors the chain build exactly: the belief at a failure-history node is
    the parent belief conditioned on a miss of the parent's action and pushed
    through the plant.  Only visited nodes are materialized.
    """

    def __init__(self, problem: ControlProblem, geometry: GridGeometry, policy: PowerPolicy,
                 depth: int):
        self.problem = problem
        self.geometry = geometry
        self.policy = policy
        self.depth = depth
        root = gaussian_grid(0.0, problem.process.noise_var, geometry)
        self._beliefs: dict[NodeKey, BeliefGrid | None] = {(): root}
        self._means: dict[NodeKey, float] = {(): belief_mean(root)}
        self._fail_centers: dict[tuple[NodeKey, int], float] = {}

    def belief(self, node: NodeKey) -> BeliefGrid | None:
        """Belief at a failure-history node, or None once propagation has
        overflowed the grid (the estimator then falls back to closed form)."""
        if node not in self._beliefs:
            parent, g = node[:-1], node[-1]
            theta = self.belief(parent)
            if theta is None:
                self._beliefs[node] = None
            else:
                action = self.policy.action_of(parent, g)
                try:
                    self._beliefs[node] = propagate(
                        theta, self.problem.channel.gains[g], action, 0,
                        self.problem.process, self.problem.reception,
                    )
                except (SupportOverflowError, DegenerateSuccessError) as exc:
                    logger.warning(
                        "belief propagation failed at failure history %s (%s); "
                        "falling back to closed-form estimates from here on", node, exc)
                    self._beliefs[node] = None
        return self._beliefs[node]

    def innovation_mean(self, node: NodeKey) -> float:
        if node not in self._means:
            theta = self.belief(node)
            self._means[node] = 0.0 if theta is None else belief_mean(theta)
        return self._means[node]

    def failure_center(self, node: NodeKey, gain_index: int, level_idx: np.ndarray,
                       q_row: np.ndarray) -> float:
        """Failure-branch innovation mean at a state (the error center the
        posterior-mean estimator would use after a miss)."""
        key = (node, gain_index)
        if key not in self._fail_centers:
            theta = self.belief(node)
            if theta is None:
                self._fail_centers[key] = 0.0
            else:
                fail_w = (1.0 - q_row[level_idx]) * theta.cell_masses()
                fm = float(fail_w.sum())
                self._fail_centers[key] = 0.0 if fm < 1e-12 else float(fail_w @ theta.nodes) / fm
        return self._fail_centers[key]


def simulate(
    problem: ControlProblem,
    geometry: GridGeometry,
    policy: PowerPolicy,
    estimator_mode: str,
    horizon: int,
    seed: int,
    *,
    depth: int = 8,
    replication: int = 0,
    window: int = 100_000,
    trace_path: str | None = None,
    trace_comment: list[str] | None = None,
) -> TrajectoryMetrics:
    """Roll the closed loop forward and return time-averaged metrics.

    estimator_mode "closed_form" centers the error cost at zero; "belief_mean"
    centers it at the conditional failure-branch mean and additionally tracks
    the worst gap between the two estimators.  Randomness comes from three
    counter-based streams (noise, channel, reception) derived from
    (seed, replication), so runs are reproducible regardless of scheduling.
    """
    if estimator_mode not in ("closed_form", "belief_mean"):
        raise ValueError("estimator_mode must be 'closed_form' or 'belief_mean'")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    channel = problem.channel
    process = problem.process
    G = len(channel.gains)
    levels = np.asarray(problem.actions.levels)
    n_levels = len(levels)
    E = geometry.half_width
    dx = geometry.spacing
    n_pts = geometry.n_points

    noise_gen = _generator(seed, replication, STREAM_NOISE)
    chan_gen = _generator(seed, replication, STREAM_CHANNEL)
    rec_gen = _generator(seed, replication, STREAM_RECEPTION)
    x0 = float(noise_gen.normal(0.0, math.sqrt(process.init_var)))
    w = noise_gen.normal(0.0, math.sqrt(process.noise_var), horizon + 1)
    u_chan = chan_gen.random(horizon + 1)
    u_rec = rec_gen.random(horizon + 1)

    pi_cum = np.cumsum(np.asarray(channel.transition), axis=1)
    q_rows = [
        np.array([float(reception_prob(problem.reception, lv, h)) for lv in levels])
        for h in channel.gains
    ]

    # per-state expansion cache: innovation node index -> level index
    level_idx_cache: dict[tuple[NodeKey, int], np.ndarray] = {}
    top_idx = np.full(n_pts, n_levels - 1, dtype=np.int8)

    def level_indices(node: NodeKey, g: int) -> np.ndarray:
        key = (node, g)
        got = level_idx_cache.get(key)
        if got is None:
            if len(node) == depth:
                got = top_idx
            else:
                values = policy.action_of(node, g).values
                got = np.searchsorted(levels, values).astype(np.int8)
            level_idx_cache[key] = got
        return got

    beliefs = _BeliefCache(problem, geometry, policy, depth) if estimator_mode == "belief_mean" else None

    trace_file = None
    writer = None
    if trace_path is not None:
        trace_file = open(trace_path, "w", newline="")
        for line in trace_comment or ():
            trace_file.write(f"# {line}\n")
        writer = csv.writer(trace_file)
        writer.writerow(
            ["k", "x", "x_hat_closed", "x_hat_belief", "e", "u", "h",
             "gamma", "power_cost", "error_cost"]
        )

    alpha = problem.cost.alpha
    node: NodeKey = ()
    g = channel.initial_gain_index
    e = float(w[0])
    x = x0
    x_last = x0
    steps_since = 1

    cost_sum = 0.0
    power_sum = 0.0
    error_sum = 0.0
    successes = 0
    gain_counts = [0] * G
    root_att = [0] * G
    root_suc = [0] * G
    tail_steps = 0
    max_gap = 0.0 if estimator_mode == "belief_mean" else None
    windows: list[float] = []
    win_err = 0.0
    win_count = 0

    for k in range(1, horizon + 1):
        gain_counts[g] += 1
        at_tail = len(node) == depth
        if at_tail:
            tail_steps += 1
        li_row = level_indices(node, g)
        idx = int((e + E) / dx + 0.5)
        if idx < 0:
            idx = 0
        elif idx >= n_pts:
            idx = n_pts - 1
        li = int(li_row[idx])
        u = float(levels[li])
        q = float(q_rows[g][li])
        received = u_rec[k] < q

        if estimator_mode == "belief_mean":
            gap = abs(beliefs.innovation_mean(node))
            if gap > max_gap:
                max_gap = gap
            center = beliefs.failure_center(node, g, li_row, q_rows[g])
        else:
            center = 0.0

        if not node:
            root_att[g] += 1
            if received:
                root_suc[g] += 1

        err_term = 0.0 if received else (e - center) ** 2
        cost_sum += alpha * u + err_term
        power_sum += u
        error_sum += err_term
        win_err += err_term
        win_count += 1
        if win_count == window:
            windows.append(win_err / window)
            win_err = 0.0
            win_count = 0

        if writer is not None:
            if received:
                x_hat_closed = x
                x_hat_belief = x
            else:
                x_hat_closed = estimate_closed_form(process, x_last, steps_since)
                inn = beliefs.innovation_mean(node) if beliefs is not None else 0.0
                x_hat_belief = estimate_belief_mean(process, x_last, steps_since, inn)
            writer.writerow(
                [k, repr(x), repr(x_hat_closed), repr(x_hat_belief), repr(e),
                 repr(u), repr(channel.gains[g]), int(received),
                 repr(alpha * u), repr(err_term)]
            )

        if received:
            successes += 1
            x_last = x
            node = ()
            steps_since = 1
            e = float(w[k])
        else:
            if len(node) < depth:
                node = node + (g,)
            steps_since += 1
            e = process.a * e + float(w[k])
        if writer is not None:
            x = process.a * x + float(w[k])
        g = int(np.searchsorted(pi_cum[g], u_chan[k], side="right"))
        if g >= G:
            g = G - 1

    if trace_file is not None:
        trace_file.close()

    return TrajectoryMetrics(
        horizon=horizon,
        seed=seed,
        replication=replication,
        estimator_mode=estimator_mode,
        avg_cost=cost_sum / horizon,
        avg_power=power_sum / horizon,
        avg_error=error_sum / horizon,
        success_rate=successes / horizon,
        gain_occupancy=[c / horizon for c in gain_counts],
        root_attempts=root_att,
        root_successes=root_suc,
        tail_fraction=tail_steps / horizon,
        max_estimator_gap=max_gap,
        error_windows=windows,
    )


@dataclass
class ReplicationSummary:
    """Cross-replication aggregate with the standard error of the mean cost."""

    replications: int
    horizon: int
    costs: list[float]
    cost_mean: float
    cost_se: float
    power_mean: float
    error_mean: float
    success_rate_mean: float
    max_estimator_gap: float | None
    per_replication: list[TrajectoryMetrics]

    def to_dict(self) -> dict:
        return {
            "replications": self.replications,
            "horizon": self.horizon,
            "costs": list(self.costs),
            "cost_mean": self.cost_mean,
            "cost_se": self.cost_se,
            "power_mean": self.power_mean,
            "error_mean": self.error_mean,
            "success_rate_mean": self.success_rate_mean,
            "max_estimator_gap": self.max_estimator_gap,
            "per_replication": [m.to_dict() for m in self.per_replication],
        }


def _replicate_worker(args) -> TrajectoryMetrics:
    problem, geometry, policy, estimator_mode, horizon, base_seed, rep, depth, window = args
    return simulate(
        problem, geometry, policy, estimator_mode, horizon, base_seed,
        depth=depth, replication=rep, window=window,
    )


def replicate(
    problem: ControlProblem,
    geometry: GridGeometry,
    policy: PowerPolicy,
    replications: int,
    horizon: int,
    base_seed: int,
    *,
    threads: int = 1,
    estimator_mode: str = "closed_form",
    depth: int = 8,
    window: int = 100_000,
) -> ReplicationSummary:
    """Run independent replications and aggregate in replication order.

    Replication r draws from streams keyed by (base_seed, r), so the summary
    is bit-identical for any thread count; threads only change wall time.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    jobs = [
        (problem, geometry, policy, estimator_mode, horizon, base_seed, r, depth, window)
        for r in range(replications)
    ]
    if threads <= 1:
        results = [_replicate_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replicate_worker, jobs))

    costs = [m.avg_cost for m in results]
    arr = np.asarray(costs)
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    gaps = [m.max_estimator_gap for m in results if m.max_estimator_gap is not None]
    return ReplicationSummary(
        replications=replications,
        horizon=horizon,
        costs=costs,
        cost_mean=float(arr.mean()),
        cost_se=se,
        power_mean=float(np.mean([m.avg_power for m in results])),
        error_mean=float(np.mean([m.avg_error for m in results])),
        success_rate_mean=float(np.mean([m.success_rate for m in results])),
        max_estimator_gap=max(gaps) if gaps else None,
        per_replication=results,
    )


def error_growth_windows(
    process: ScalarProcess, horizon: int, window: int, seed: int
) -> list[float]:
    """Log of windowed mean squared innovation when nothing is ever received.

    e_k = sum_j a^(k-1-j) w_j grows like a^k for |a| > 1, so the recursion runs
    on the bounded rescaling s_k = e_k / a^k and window means are assembled
    with logsumexp.  Returns log E-hat[e^2] per window; for an unstable plant
    these should increase roughly linearly at rate 2 log a.
    """
    a = process.a
    if a <= 0:
        raise ValueError("growth diagnostic assumes a positive plant coefficient")
    gen = _generator(seed, 0, STREAM_NOISE)
    gen.normal(0.0, math.sqrt(process.init_var))  # stream-aligned with simulate
    w = gen.normal(0.0, math.sqrt(process.noise_var), horizon)
    k = np.arange(1, horizon + 1)
    with np.errstate(divide="ignore"):
        if a > 1.0:
            # rescaling keeps the recursion bounded; the factors underflow
            # harmlessly once the increments stop mattering
            s = np.cumsum(w * np.exp(-k * math.log(a)))
            log_e2 = 2.0 * np.log(np.abs(s)) + 2.0 * k * math.log(a)
        else:
            e = lfilter([1.0], [1.0, -a], w)
            log_e2 = 2.0 * np.log(np.abs(e))
    out = []
    for start in range(0, horizon - window + 1, window):
        block = log_e2[start : start + window]
        out.append(float(logsumexp(block) - math.log(window)))
    return out
