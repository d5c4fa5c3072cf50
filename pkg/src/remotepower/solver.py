"""Average-cost policy optimization on the failure-history chain.

Between two successful transmissions the controller's belief depends only on
the sequence of channel gains seen since the last success, so the reachable
belief space unfolds into a finite tree of gain histories once the depth is
capped.  States are (history node, current gain) pairs; the chain couples the
belief recursion with the gain process and policy evaluation reduces to sparse
linear algebra on it.

Depth capping makes the tail nodes approximate: their beliefs are frozen and
they transmit at full power, so a failure at the cap self-loops.  The solver
reports tail occupancy so callers can confirm the cap does not matter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .belief import (
    DEGENERATE_SUCCESS_TOL,
    ActionFunction,
    BeliefGrid,
    GridGeometry,
    SupportOverflowError,
    expected_power,
    gaussian_grid,
    propagate,
    stage_cost,
    success_prob,
)
from .model import ControlProblem, CostWeights, reception_prob, validate_stability
from .policy import (
    NodeKey,
    PowerPolicy,
    Rule,
    StateKey,
    ThresholdAction,
    extract_threshold_action,
    max_power_action,
    threshold_grid,
)

STATIONARY_RESIDUAL_TOL = 1e-10
RHO_CROSSCHECK_TOL = 1e-8
CENTER_SNAP_TOL = 1e-9
CENTER_ITERATIONS = 5


class ChainStructureError(RuntimeError):
    """The policy's chain has no usable single recurrent class."""


@dataclass
class UnfoldedChain:
    """Finite belief chain induced by one policy.

    nodes[i] is the tuple of gain indices observed at the consecutive failures
    since the last success (root = ()).  State s = i * n_gains + g.  Nodes at
    the depth cap are flagged in tail_mask; nodes whose parent edge is an
    (almost surely) successful transmission carry a placeholder root belief
    and are flagged virtual (they are unreachable, but keeping them makes the
    state indexing policy-independent).
    """

    problem: ControlProblem
    geometry: GridGeometry
    depth: int
    nodes: list[NodeKey]
    node_index: dict[NodeKey, int]
    child: np.ndarray
    beliefs: list[BeliefGrid]
    actions: list[ActionFunction]
    phi: np.ndarray
    power: np.ndarray
    distortion: np.ndarray
    P: sp.csr_matrix
    tail_mask: np.ndarray
    virtual_mask: np.ndarray

    root_index = 0
    ref_state = 0

    @property
    def n_gains(self) -> int:
        return len(self.problem.channel.gains)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_states(self) -> int:
        return len(self.nodes) * self.n_gains

    def state_index(self, node: NodeKey, gain_index: int) -> int:
        return self.node_index[tuple(node)] * self.n_gains + gain_index

    def state_key(self, s: int) -> StateKey:
        return self.nodes[s // self.n_gains], s % self.n_gains

    def stage_vector(self, weights: CostWeights) -> np.ndarray:
        return weights.alpha * self.power + self.distortion

    def tail_states(self) -> np.ndarray:
        return np.repeat(self.tail_mask, self.n_gains)

    def virtual_states(self) -> np.ndarray:
        return np.repeat(self.virtual_mask, self.n_gains)


def build_chain(
    problem: ControlProblem, geometry: GridGeometry, policy: PowerPolicy, depth: int
) -> UnfoldedChain:
    """Unfold the belief recursion under a fixed policy up to `depth` failures.

    The full history tree is materialized (every gain sequence of length up to
    depth) so state indices are stable across policies.  Edges whose failure
    probability is below DEGENERATE_SUCCESS_TOL are treated as certain
    successes: the sliver of failure mass moves to the success edge and the
    orphaned subtree is marked virtual.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    rep = validate_stability(
        problem.process, problem.channel, problem.reception, problem.actions
    )
    if not rep.ok:
        warnings.warn("; ".join(rep.messages), stacklevel=2)

    channel = problem.channel
    G = len(channel.gains)
    pi = np.asarray(channel.transition)

    nodes: list[NodeKey] = [()]
    frontier: list[NodeKey] = [()]
    for _ in range(depth):
        frontier = [node + (g,) for node in frontier for g in range(G)]
        nodes.extend(frontier)
    node_index = {node: i for i, node in enumerate(nodes)}
    n_nodes = len(nodes)
    child = np.empty((n_nodes, G), dtype=int)
    for i, node in enumerate(nodes):
        for g in range(G):
            child[i, g] = node_index[node + (g,)] if len(node) < depth else i

    root_belief = gaussian_grid(0.0, problem.process.noise_var, geometry)
    beliefs: list[BeliefGrid] = [root_belief] * n_nodes
    virtual = np.zeros(n_nodes, dtype=bool)
    tail = np.array([len(node) == depth for node in nodes])
    S = n_nodes * G
    actions: list[ActionFunction] = [None] * S  # type: ignore[list-item]
    phi = np.empty(S)
    power = np.empty(S)
    distortion = np.empty(S)
    tail_action = max_power_action(problem.actions).as_action(geometry, problem.actions)
    zero_alpha = CostWeights(alpha=0.0)

    for i, node in enumerate(nodes):
        theta = beliefs[i]
        for g in range(G):
            s = i * G + g
            action = tail_action if tail[i] else policy.action_of(node, g)
            gain = channel.gains[g]
            actions[s] = action
            phi[s] = success_prob(theta, gain, action, problem.reception)
            power[s] = expected_power(theta, action)
            distortion[s] = stage_cost(theta, gain, action, problem.reception, zero_alpha)
            if tail[i]:
                continue
            c = child[i, g]
            if virtual[i] or 1.0 - phi[s] < DEGENERATE_SUCCESS_TOL:
                beliefs[c] = root_belief
                virtual[c] = True
            else:
                try:
                    beliefs[c] = propagate(
                        theta, gain, action, 0, problem.process, problem.reception
                    )
                except SupportOverflowError as err:
                    raise SupportOverflowError(
                        f"belief after failure history {node + (g,)} overflowed: {err}"
                    ) from err

    phi_eff = np.where(1.0 - phi < DEGENERATE_SUCCESS_TOL, 1.0, phi)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    g_targets = np.arange(G)
    for s in range(S):
        i, g = divmod(s, G)
        branch = pi[g]
        live = branch > 0
        pe = phi_eff[s]
        if pe > 0:
            rows.append(np.full(live.sum(), s))
            cols.append(0 * G + g_targets[live])
            vals.append(pe * branch[live])
        if 1.0 - pe > 0:
            rows.append(np.full(live.sum(), s))
            cols.append(child[i, g] * G + g_targets[live])
            vals.append((1.0 - pe) * branch[live])
    P = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(S, S),
    ).tocsr()

    return UnfoldedChain(
        problem=problem,
        geometry=geometry,
        depth=depth,
        nodes=nodes,
        node_index=node_index,
        child=child,
        beliefs=beliefs,
        actions=actions,
        phi=phi,
        power=power,
        distortion=distortion,
        P=P,
        tail_mask=tail,
        virtual_mask=virtual,
    )


def _reachable_states(P: sp.csr_matrix, seeds: list[int]) -> np.ndarray:
    seen = np.zeros(P.shape[0], dtype=bool)
    stack = list(seeds)
    while stack:
        s = stack.pop()
        if seen[s]:
            continue
        seen[s] = True
        for t in P.indices[P.indptr[s] : P.indptr[s + 1]]:
            if not seen[t]:
                stack.append(t)
    return np.nonzero(seen)[0]


def _stationary_on(P: sp.csr_matrix, reach: np.ndarray) -> np.ndarray:
    """Stationary distribution of P restricted to a closed reachable set."""
    Pr = P[reach][:, reach].tocsc()
    m = len(reach)
    M = (Pr.T - sp.identity(m, format="csc")).tolil()
    M[m - 1, :] = 1.0
    b = np.zeros(m)
    b[m - 1] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        occ = spsolve(M.tocsc(), b)
    if not np.all(np.isfinite(occ)):
        raise ChainStructureError("stationary solve failed; chain is not unichain")
    occ = np.maximum(occ, 0.0)
    total = occ.sum()
    if total <= 0:
        raise ChainStructureError("stationary solve degenerate; chain is not unichain")
    occ = occ / total
    resid = float(np.max(np.abs(Pr.T @ occ - occ)))
    if resid > STATIONARY_RESIDUAL_TOL:
        raise ChainStructureError(
            f"stationary residual {resid:.3e} exceeds {STATIONARY_RESIDUAL_TOL}; "
            "the chain has more than one recurrent class"
        )
    return occ


@dataclass
class EvaluationResult:
    """Average cost and relative values of one policy on its chain."""

    rho: float
    relative_values: np.ndarray
    occupancy: np.ndarray
    tail_occupancy: float
    power_mean: float
    error_mean: float
    success_rate: float
    residual: float


def evaluate_policy(chain: UnfoldedChain, weights: CostWeights) -> EvaluationResult:
    """Solve the average-cost evaluation equations exactly.

    The gain (rho) comes from the Poisson equation pinned at the reference
    state (root node, gain 0) and is cross-checked against the stationary
    occupancy average; disagreement or an unsolvable stationary system raises
    ChainStructureError.
    """
    S = chain.n_states
    stage = chain.stage_vector(weights)
    P = chain.P

    reach = _reachable_states(P, list(range(chain.n_gains)))
    occ = np.zeros(S)
    occ[reach] = _stationary_on(P, reach)
    success_rate = float(occ @ chain.phi)
    if success_rate < 1e-15:
        raise ChainStructureError(
            "policy never succeeds from the reachable states; "
            "the average cost is not defined on this chain"
        )
    rho_occ = float(occ @ stage)

    eye = sp.identity(S, format="coo")
    A = (eye - P).tocoo()
    keep = A.col != chain.ref_state
    rows = np.concatenate([A.row[keep], np.arange(S)])
    cols = np.concatenate([A.col[keep], np.full(S, chain.ref_state)])
    vals = np.concatenate([A.data[keep], np.ones(S)])
    M = sp.coo_matrix((vals, (rows, cols)), shape=(S, S)).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        y = spsolve(M, stage)
    if not np.all(np.isfinite(y)):
        raise ChainStructureError("relative-value solve failed; chain is not unichain")
    rho = float(y[chain.ref_state])
    V = y.copy()
    V[chain.ref_state] = 0.0
    residual = float(np.max(np.abs(stage + P @ V - V - rho)))

    if abs(rho - rho_occ) > RHO_CROSSCHECK_TOL * (1.0 + abs(rho)):
        raise ChainStructureError(
            f"average cost mismatch: occupancy {rho_occ!r} vs relative-value {rho!r}"
        )
    return EvaluationResult(
        rho=rho,
        relative_values=V,
        occupancy=occ,
        tail_occupancy=float(occ[chain.tail_states()].sum()),
        power_mean=float(occ @ chain.power),
        error_mean=float(occ @ chain.distortion),
        success_rate=success_rate,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# policy improvement


def _ring_quantities(geometry: GridGeometry):
    m = geometry.n_points // 2
    radii = geometry.nodes()[m:]
    return m, radii


def _mirror(half: np.ndarray) -> np.ndarray:
    return np.concatenate((half[:0:-1], half))


def _center_of(belief: BeliefGrid, q_at_nodes: np.ndarray) -> float:
    fail_w = (1.0 - q_at_nodes) * belief.cell_masses()
    fail_mass = float(fail_w.sum())
    if fail_mass < DEGENERATE_SUCCESS_TOL:
        return 0.0
    return float(fail_w @ belief.nodes) / fail_mass


def _improve_state_rings(
    q_levels: np.ndarray,
    levels: np.ndarray,
    alpha: float,
    cont_gap: float,
    saturation_radius: float,
    geometry: GridGeometry,
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise greedy action for one state, evaluated per radius ring.

    Rings keep the two nodes of a mirrored pair on exactly the same level, so
    the result is even by construction; monotonicity over rings is forced by a
    running maximum (a no-op except on floating-point ties).  If the greedy
    rule's failure-branch mean stays at zero the rule collapses to exact
    switch radii; otherwise the caller falls back to tabular refinement.
    """
    m, radii = _ring_quantities(geometry)
    cost = radii**2 + cont_gap
    objective = alpha * levels[:, None] - q_levels[:, None] * cost[None, :]
    choice = np.argmin(objective, axis=0)
    choice[radii > saturation_radius] = len(levels) - 1
    choice = np.maximum.accumulate(choice)
    values = _mirror(levels[choice])
    return values, _mirror(q_levels[choice])


def _improve_state_tabular(
    belief: BeliefGrid,
    q_levels: np.ndarray,
    levels: np.ndarray,
    alpha: float,
    cont_gap: float,
    saturation_radius: float,
    center: float,
) -> np.ndarray:
    """Coordinate descent on (node levels, error center) without symmetry."""
    nodes = belief.nodes
    outside = np.abs(nodes) > saturation_radius
    values = None
    for _ in range(CENTER_ITERATIONS):
        cost = (nodes - center) ** 2 + cont_gap
        objective = alpha * levels[:, None] - q_levels[:, None] * cost[None, :]
        choice = np.argmin(objective, axis=0)
        choice[outside] = len(levels) - 1
        values = levels[choice]
        new_center = _center_of(belief, q_levels[choice])
        if abs(new_center - center) < 1e-12:
            break
        center = new_center
    return values


def _grid_scan_state(
    chain: UnfoldedChain,
    belief: BeliefGrid,
    gain: float,
    cont_gap: float,
    weights: CostWeights,
    grid: np.ndarray,
) -> ThresholdAction:
    """Exhaustive search over nondecreasing switch tuples from a fixed grid.

    Ties prefer lower expected power, then lexicographically smaller switch
    radii.  Only viable for small level sets and coarse grids.
    """
    problem = chain.problem
    n_switch = problem.actions.n_levels - 1
    best = None
    for combo in combinations_with_replacement(np.sort(grid), n_switch):
        rule = ThresholdAction(tuple(float(t) for t in combo))
        action = rule.as_action(chain.geometry, problem.actions)
        q_val = stage_cost(belief, gain, action, problem.reception, weights)
        phi = success_prob(belief, gain, action, problem.reception)
        q_val += (1.0 - phi) * cont_gap
        key = (q_val, expected_power(belief, action), combo)
        if best is None or key < best[0]:
            best = (key, rule)
    return best[1]


def improve_policy(
    chain: UnfoldedChain,
    weights: CostWeights,
    values: np.ndarray,
    *,
    switch_grid: np.ndarray | None = None,
    beta: float | None = None,
) -> PowerPolicy:
    """One Bellman improvement sweep against fixed continuation values.

    Continuation values are read at the chain's fixed child slots; the beliefs
    those slots will carry under the new policy are recomputed by the next
    build.  `beta` switches the backup to the discounted form; `switch_grid`
    replaces the pointwise argmin with an exhaustive scan over grid-valued
    switch radii.
    """
    problem = chain.problem
    G = chain.n_gains
    pi = np.asarray(problem.channel.transition)
    levels = np.asarray(problem.actions.levels)
    alpha = weights.alpha
    discount = 1.0 if beta is None else beta

    V_root = values[0:G]
    q_by_gain = [
        np.array([reception_prob(problem.reception, u, g) for u in levels])
        for g in problem.channel.gains
    ]

    rules: dict[StateKey, Rule] = {}
    for i, node in enumerate(chain.nodes):
        if chain.tail_mask[i]:
            continue
        belief = chain.beliefs[i]
        for g in range(G):
            c = chain.child[i, g]
            v_child = values[c * G : (c + 1) * G]
            cont_gap = discount * float(pi[g] @ (v_child - V_root))
            if switch_grid is not None:
                rules[(node, g)] = _grid_scan_state(
                    chain, belief, problem.channel.gains[g], cont_gap, weights, switch_grid
                )
                continue
            node_values, q_at_nodes = _improve_state_rings(
                q_by_gain[g], levels, alpha, cont_gap,
                problem.actions.saturation_radius, chain.geometry,
            )
            center = _center_of(belief, q_at_nodes)
            if abs(center) <= CENTER_SNAP_TOL:
                rule = extract_threshold_action(node_values, chain.geometry, problem.actions)
                rules[(node, g)] = rule if rule is not None else node_values
            else:
                rules[(node, g)] = _improve_state_tabular(
                    belief, q_by_gain[g], levels, alpha, cont_gap,
                    problem.actions.saturation_radius, center,
                )
    return PowerPolicy.from_rules(rules, problem.actions, chain.geometry)


def _rules_signature(policy: PowerPolicy) -> tuple:
    """Hashable identity of a policy's rule set, for revisit detection."""
    if policy.mode == "baseline":
        return ("baseline", policy.baseline, policy.baseline_param)
    items = []
    for key in sorted(policy.rules):
        rule = policy.rules[key]
        if isinstance(rule, ThresholdAction):
            items.append((key, rule.thresholds))
        else:
            items.append((key, np.asarray(rule, dtype=float).tobytes()))
    return tuple(items)


def _same_rules(a: PowerPolicy, b: PowerPolicy) -> bool:
    if a.mode == "baseline" or b.mode == "baseline":
        return False
    if set(a.rules) != set(b.rules):
        return False
    for key, ra in a.rules.items():
        rb = b.rules[key]
        if isinstance(ra, ThresholdAction) != isinstance(rb, ThresholdAction):
            return False
        if isinstance(ra, ThresholdAction):
            if ra.thresholds != rb.thresholds:
                return False
        elif not np.array_equal(np.asarray(ra), np.asarray(rb)):
            return False
    return True


@dataclass
class SolveResult:
    """Best policy found by alternating chain builds and improvement sweeps."""

    policy: PowerPolicy
    rho_star: float
    relative_values: np.ndarray
    iterations: int
    residual: float
    rho_history: list[float]
    tail_occupancy: float
    converged: bool
    chain: UnfoldedChain
    evaluation: EvaluationResult


def solve(
    problem: ControlProblem,
    geometry: GridGeometry,
    *,
    depth: int = 8,
    tol_rho: float = 1e-6,
    max_rounds: int = 200,
    threshold_points: int | None = None,
) -> SolveResult:
    """Minimize the long-run average of alpha * power + squared innovation error.

    Starts from the always-transmit baseline and alternates exact policy
    evaluation with greedy improvement, keeping the best policy seen.  The
    loop stops when a round fails to improve the average cost by more than
    tol_rho, or when the improvement returns the incumbent policy unchanged.
    Because each improvement is scored against the incumbent chain's beliefs,
    monotonicity is enforced by acceptance rather than assumed.
    """
    grid = (
        threshold_grid(problem.actions.saturation_radius, threshold_points)
        if threshold_points is not None
        else None
    )
    policy: PowerPolicy = PowerPolicy.max_power(problem.actions, geometry)
    best: tuple[PowerPolicy, UnfoldedChain, EvaluationResult] | None = None
    history: list[float] = []
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        chain = build_chain(problem, geometry, policy, depth)
        ev = evaluate_policy(chain, problem.cost)
        history.append(ev.rho)
        if best is not None and ev.rho >= best[2].rho - tol_rho:
            converged = True
            break
        best = (policy, chain, ev)
        improved = improve_policy(
            chain, problem.cost, ev.relative_values, switch_grid=grid
        )
        if _same_rules(improved, policy):
            converged = True
            break
        policy = improved

    assert best is not None
    policy, chain, ev = best
    return SolveResult(
        policy=policy,
        rho_star=ev.rho,
        relative_values=ev.relative_values,
        iterations=rounds,
        residual=ev.residual,
        rho_history=history,
        tail_occupancy=ev.tail_occupancy,
        converged=converged,
        chain=chain,
        evaluation=ev,
    )


@dataclass
class DiscountedResult:
    """Fixed point of the discounted analogue of the solve loop."""

    values: np.ndarray
    policy: PowerPolicy
    residual: float
    iterations: int
    converged: bool
    chain: UnfoldedChain

    def min_value(self) -> float:
        virtual = self.chain.virtual_states()
        return float(self.values[~virtual].min())


def discounted_policy_values(
    chain: UnfoldedChain, weights: CostWeights, beta: float
) -> np.ndarray:
    """Exact beta-discounted total cost of the chain's own policy, per state,
    via one sparse linear solve of (I - beta P) V = c."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie strictly between 0 and 1")
    stage = chain.stage_vector(weights)
    M = (sp.identity(chain.n_states, format="csc") - beta * chain.P).tocsc()
    return np.asarray(spsolve(M, stage))


def solve_discounted(
    problem: ControlProblem,
    geometry: GridGeometry,
    beta: float,
    *,
    depth: int = 8,
    max_rounds: int = 200,
    threshold_points: int | None = None,
) -> DiscountedResult:
    """Policy iteration for the beta-discounted total cost from time zero.

    Each round solves (I - beta P) V = c exactly, so on convergence the
    discounted Bellman residual is at the linear solver's precision rather
    than a value-iteration tolerance.  Because every round also rebuilds the
    chain's beliefs under the incumbent rules, strict improvement is not
    guaranteed and the alternation can enter a short limit cycle instead of a
    fixed point; revisiting any earlier rule set therefore also counts as
    converged (the recurring policy is returned with its own exact values).
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie strictly between 0 and 1")
    grid = (
        threshold_grid(problem.actions.saturation_radius, threshold_points)
        if threshold_points is not None
        else None
    )
    policy: PowerPolicy = PowerPolicy.max_power(problem.actions, geometry)
    chain: UnfoldedChain | None = None
    values = np.zeros(0)
    converged = False
    rounds = 0
    seen: set[tuple] = set()
    for rounds in range(1, max_rounds + 1):
        chain = build_chain(problem, geometry, policy, depth)
        values = discounted_policy_values(chain, problem.cost, beta)
        signature = _rules_signature(policy)
        if signature in seen:
            converged = True
            break
        seen.add(signature)
        improved = improve_policy(
            chain, problem.cost, values, switch_grid=grid, beta=beta
        )
        if _same_rules(improved, policy):
            converged = True
            break
        policy = improved

    assert chain is not None
    stage = chain.stage_vector(problem.cost)
    residual = float(np.max(np.abs(stage + beta * (chain.P @ values) - values)))
    return DiscountedResult(
        values=values,
        policy=policy,
        residual=residual,
        iterations=rounds,
        converged=converged,
        chain=chain,
    )


def state_action_value(
    chain: UnfoldedChain,
    state: int,
    action: ActionFunction,
    weights: CostWeights,
    values: np.ndarray,
) -> float:
    """Bellman backup of one candidate action at one chain state (gain-mixing
    constant included, so values are comparable across actions only)."""
    problem = chain.problem
    i, g = divmod(state, chain.n_gains)
    pi = np.asarray(problem.channel.transition)[g]
    gain = problem.channel.gains[g]
    belief = chain.beliefs[i]
    phi = success_prob(belief, gain, action, problem.reception)
    c = chain.child[i, g] if not chain.tail_mask[i] else i
    v_child = values[c * chain.n_gains : (c + 1) * chain.n_gains]
    v_root = values[0 : chain.n_gains]
    cont = float(pi @ (phi * v_root + (1.0 - phi) * v_child))
    return stage_cost(belief, gain, action, problem.reception, weights) + cont


def structure_witness(
    chain: UnfoldedChain, weights: CostWeights, values: np.ndarray
) -> float:
    """Largest amount by which an unrestricted tabular backup beats the best
    symmetric threshold rule, over all non-tail states.  Near zero means the
    threshold class is (numerically) optimal at these continuation values."""
    problem = chain.problem
    G = chain.n_gains
    pi = np.asarray(problem.channel.transition)
    levels = np.asarray(problem.actions.levels)
    sat = problem.actions.saturation_radius
    q_by_gain = [
        np.array([reception_prob(problem.reception, u, g) for u in levels])
        for g in problem.channel.gains
    ]
    V_root = values[0:G]

    worst = 0.0
    for i, node in enumerate(chain.nodes):
        if chain.tail_mask[i]:
            continue
        belief = chain.beliefs[i]
        for g in range(G):
            s = i * G + g
            c = chain.child[i, g]
            cont_gap = float(pi[g] @ (values[c * G : (c + 1) * G] - V_root))

            ring_values, q_at = _improve_state_rings(
                q_by_gain[g], levels, weights.alpha, cont_gap, sat, chain.geometry
            )
            thr_action = ActionFunction(ring_values, problem.actions, chain.geometry)
            q_thr = state_action_value(chain, s, thr_action, weights, values)

            center = _center_of(belief, q_at)
            tab_values = _improve_state_tabular(
                belief, q_by_gain[g], levels, weights.alpha, cont_gap, sat, center
            )
            tab_action = ActionFunction(tab_values, problem.actions, chain.geometry)
            q_tab = state_action_value(chain, s, tab_action, weights, values)

            worst = max(worst, q_thr - q_tab)
    return worst
