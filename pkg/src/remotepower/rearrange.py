"""Symmetric rearrangement machinery for comparing beliefs and power rules.

The structural argument behind threshold rules runs through three pieces:

* the symmetric decreasing rearrangement of a belief (same mass at every
  density level, reshaped into an even density peaked at zero),
* a partial order between beliefs: relation_R(theta, theta_star) holds when
  theta_star is even and unimodal, majorizes theta, and agrees with theta
  pointwise outside the saturation radius, and
* a measure-matched rewrite of a power rule onto the better-ordered belief
  that transmits outward-increasing levels while preserving expected power
  and success probability.

Beliefs are cell-constant densities, so everything here is piecewise linear
in the radius and the measure matching can use exact real-valued radii
rather than radii snapped to grid nodes (a snapped radius misplaces up to
half a cell of mass, orders of magnitude above what the preservation
identities tolerate).
"""

from __future__ import annotations

import numpy as np

from .belief import (
    ActionFunction,
    BeliefGrid,
    _renormalized,
    banded_action,
    outward_mass,
)

MAJORIZATION_SLACK = 1e-9
TAIL_MATCH_TOL = 1e-9
UNIMODAL_WIGGLE_TOL = 1e-10


class MeasureMatchError(ValueError):
    """Rearrangement precondition violated: tail masses do not agree."""


def symmetric_decreasing_rearrangement(belief: BeliefGrid) -> BeliefGrid:
    """Even, radially nonincreasing density with the same mass at every level.

    Cells are sorted by density (ties resolved center-outward), laid out from
    the origin with each cell contributing half its width to each side, and
    the result is read back at the node radii.  A belief that is already
    even, unimodal, and node-aligned comes back unchanged.
    """
    order = np.lexsort((np.abs(belief.nodes), -belief.weights))
    widths = belief.geometry.cell_widths()[order]
    values = belief.weights[order]
    reach = np.cumsum(widths) / 2.0
    idx = np.searchsorted(reach, np.abs(belief.nodes), side="left")
    idx = np.minimum(idx, len(reach) - 1)
    return _renormalized(belief.geometry, values[idx])


def is_even_unimodal(belief: BeliefGrid, tol: float = UNIMODAL_WIGGLE_TOL) -> bool:
    """True if the density is symmetric about zero and nonincreasing outward,
    up to quadrature wiggle of size tol."""
    w = belief.weights
    if float(np.max(np.abs(w - w[::-1]))) > tol:
        return False
    right = w[belief.n_points // 2 :]
    return bool(np.all(np.diff(right) <= tol))


def _inward_cumulative(belief: BeliefGrid) -> np.ndarray:
    """Mass inside [-r, r] at each cell-boundary radius, center outward."""
    c = belief.cell_masses()
    m = belief.n_points // 2
    pairs = c[m + 1 :] + c[m - 1 :: -1]
    out = np.empty(m + 1)
    out[0] = c[m]
    out[1:] = c[m] + np.cumsum(pairs)
    return out


def majorizes(f: BeliefGrid, g: BeliefGrid, slack: float = MAJORIZATION_SLACK) -> bool:
    """True iff f's rearrangement is inward-heavier than g's at every radius.

    Both cumulatives are piecewise linear with kinks on the shared cell
    boundaries, so comparing at the boundaries decides the whole line.
    """
    if f.geometry != g.geometry:
        raise ValueError("majorization needs both beliefs on the same grid")
    inward_f = _inward_cumulative(symmetric_decreasing_rearrangement(f))
    inward_g = _inward_cumulative(symmetric_decreasing_rearrangement(g))
    return bool(np.all(inward_f >= inward_g - slack))


def relation_R(
    theta: BeliefGrid,
    theta_star: BeliefGrid,
    saturation_radius: float,
    *,
    majorization_slack: float = MAJORIZATION_SLACK,
    tail_tol: float = TAIL_MATCH_TOL,
    unimodal_tol: float = UNIMODAL_WIGGLE_TOL,
) -> bool:
    """Partial order on beliefs used by the threshold-structure argument.

    Holds when theta_star majorizes theta, theta_star is even and unimodal
    about zero, and the two densities agree pointwise wherever |e| exceeds
    the saturation radius.
    """
    if theta.geometry != theta_star.geometry:
        raise ValueError("relation_R needs both beliefs on the same grid")
    if not is_even_unimodal(theta_star, tol=unimodal_tol):
        return False
    if not majorizes(theta_star, theta, slack=majorization_slack):
        return False
    outside = np.abs(theta.nodes) > saturation_radius
    if not np.any(outside):
        return True
    gap = float(np.max(np.abs(theta.weights[outside] - theta_star.weights[outside])))
    return gap <= tail_tol


def outward_quantile(belief: BeliefGrid, mass: float) -> float:
    """Largest radius r putting at least `mass` of the belief in {|e| >= r}.

    Exact inverse of the outward-mass function, which is piecewise linear
    between cell boundaries.  Ties (flat stretches of zero density) resolve
    to the larger radius.
    """
    if mass <= 0.0:
        return belief.half_width
    m = belief.n_points // 2
    dx = belief.spacing
    boundaries = np.concatenate(([0.0], (np.arange(m) + 0.5) * dx, [belief.half_width]))
    c = belief.cell_masses()
    pairs = c[m + 1 :] + c[m - 1 :: -1]
    suffix = np.concatenate((np.cumsum(pairs[::-1])[::-1], [0.0]))
    outward = np.concatenate(([float(c.sum())], suffix))
    target = min(mass, outward[0])
    i = int(np.searchsorted(-outward, -target, side="right")) - 1
    if i >= len(boundaries) - 1:
        return float(boundaries[-1])
    if outward[i] <= target:
        return float(boundaries[i])
    drop = outward[i] - outward[i + 1]
    if drop <= 0.0:
        return float(boundaries[i + 1])
    frac = (outward[i] - target) / drop
    return float(boundaries[i] + frac * (boundaries[i + 1] - boundaries[i]))


def rearranged_action(
    action: ActionFunction,
    theta: BeliefGrid,
    theta_hat: BeliefGrid,
    *,
    enforce: bool = True,
) -> ActionFunction:
    """Rewrite `action` (defined against theta) as an outward-increasing rule
    on theta_hat.

    For every level u, the theta-mass transmitting at or above u is measured
    and the rewritten rule puts exactly that much theta_hat-mass outward of a
    real-valued switch radius.  Expected power and success probability are
    preserved to machine precision by construction.  Radii are capped at the
    saturation radius, so the result transmits u_max outside it; for that cap
    to be harmless the two beliefs must carry equal mass beyond the radius,
    which is checked up front.
    """
    if theta.geometry != theta_hat.geometry:
        raise ValueError("rearranged_action needs both beliefs on the same grid")
    L = action.action_set.saturation_radius
    tail_gap = abs(outward_mass(theta, L) - outward_mass(theta_hat, L))
    if tail_gap > 1e-9:
        raise MeasureMatchError(
            f"beliefs differ by {tail_gap:.3e} in mass beyond the saturation radius {L}"
        )
    levels = np.asarray(action.action_set.levels, dtype=float)
    masses = theta.cell_masses()
    radii = np.empty(len(levels) - 1)
    for k, level in enumerate(levels[1:]):
        at_or_above = float(masses[action.values >= level].sum())
        radii[k] = outward_quantile(theta_hat, at_or_above)
    radii = np.minimum(radii, L)
    radii = np.maximum.accumulate(radii)
    return banded_action(radii, levels, action.action_set, theta_hat.geometry, enforce=enforce)


def interior_permutation(
    belief: BeliefGrid, rng: np.random.Generator, max_radius: float | None = None
) -> BeliefGrid:
    """Shuffle the density values of interior cells, optionally only inside
    max_radius.

    Interior cells share one width, so permuting their values changes nothing
    the rearrangement can see: the shuffled belief and the original have the
    same symmetric decreasing rearrangement.  This makes the function a cheap
    generator of exactly-related pairs for randomized order checks.  The two
    half-width endpoint cells stay put.
    """
    w = belief.weights.copy()
    eligible = np.arange(1, belief.n_points - 1)
    if max_radius is not None:
        eligible = eligible[np.abs(belief.nodes[eligible]) < max_radius]
    w[eligible] = w[rng.permutation(eligible)]
    return BeliefGrid(belief.geometry, w)


def random_relation_pair(
    geometry, rng: np.random.Generator, max_radius: float
) -> tuple[BeliefGrid, BeliefGrid]:
    """Draw a (theta, theta_hat) pair satisfying relation_R by construction.

    theta is an interior permutation (confined to |e| < max_radius) of a
    centered Gaussian mixture, theta_hat its symmetric decreasing
    rearrangement.  Components are kept narrow relative to the grid so the
    mixture carries no mass near the boundary and the untouched tail cells
    agree between the two beliefs.
    """
    if not 0.0 < max_radius < geometry.half_width:
        raise ValueError("max_radius must lie inside the grid")
    k = int(rng.integers(1, 4))
    sigma_cap = max(0.75, min(2.0, geometry.half_width / 8.0))
    sigmas = rng.uniform(0.5, sigma_cap, size=k)
    mix = rng.dirichlet(np.ones(k)) if k > 1 else np.ones(1)
    nodes = geometry.nodes()
    dens = np.zeros_like(nodes)
    for w, s in zip(mix, sigmas):
        dens += w * np.exp(-0.5 * (nodes / s) ** 2) / s
    base = _renormalized(geometry, dens)
    theta = interior_permutation(base, rng, max_radius=max_radius)
    return theta, symmetric_decreasing_rearrangement(theta)
