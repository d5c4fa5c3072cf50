"""Gridded innovation beliefs and the operators the controller needs on them.

A belief is a probability density for the estimation innovation, sampled on a
uniform symmetric grid.  Node j owns the cell [e_j - dx/2, e_j + dx/2] clipped
to [-E, E], so trapezoid sums and cell-mass sums are the same thing; the two
endpoint cells are half width.

Transmission rules enter in one of two shapes:

* node-valued (``bands is None``): the rule is constant on each cell and all
  integrals are plain trapezoid sums, or
* banded (``bands`` set): the rule is a radially symmetric step function with
  exact real-valued switch radii.  Integrals then split cells at the radii,
  which keeps layer-cake identities exact instead of quantized to the grid.

The banded path exists because the rearrangement identities demand measure
matching far below one cell of mass; the solver itself stays on the node path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .model import ActionSet, CostWeights, ReceptionModel, ScalarProcess, reception_prob

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-9
GAUSSIAN_TAIL_TOL = 1e-8
SUPPORT_OVERFLOW_TOL = 1e-6
DEGENERATE_SUCCESS_TOL = 1e-12


class GridGeometryError(ValueError):
    """Requested density or rule does not fit on the grid."""


class SupportOverflowError(ValueError):
    """A propagated belief pushed non-negligible mass past the grid edge."""


class DegenerateSuccessError(ValueError):
    """Failure branch conditioned on an (almost) impossible event."""


@dataclass(frozen=True)
class GridGeometry:
    """Uniform symmetric grid on [-half_width, half_width] with an odd node count."""

    half_width: float
    n_points: int = 2001
    convolution: str = "direct"

    def __post_init__(self) -> None:
        if not self.half_width > 0:
            raise GridGeometryError("half_width must be positive")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise GridGeometryError("n_points must be odd and at least 3")
        if self.convolution not in ("direct", "fft"):
            raise GridGeometryError("convolution must be 'direct' or 'fft'")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_points)

    def cell_widths(self) -> np.ndarray:
        w = np.full(self.n_points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w


class BeliefGrid:
    """Normalized innovation density sampled on a GridGeometry.

    weights[j] is the density value at node j.  The trapezoid integral must
    sit within NORMALIZATION_TOL of one; constructors renormalize first.
    """

    __slots__ = ("geometry", "weights", "nodes", "_cell_w")

    def __init__(self, geometry: GridGeometry, weights: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (geometry.n_points,):
            raise GridGeometryError(
                f"weights shape {weights.shape} does not match n_points {geometry.n_points}"
            )
        if not np.all(np.isfinite(weights)):
            raise GridGeometryError("weights must be finite")
        if np.any(weights < -1e-12):
            raise GridGeometryError("weights must be nonnegative")
        weights = np.maximum(weights, 0.0)
        self.geometry = geometry
        self.weights = weights
        self.nodes = geometry.nodes()
        self._cell_w = geometry.cell_widths()
        total = float(self._cell_w @ weights)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise GridGeometryError(
                f"belief not normalized: trapezoid integral {total!r} "
                f"(drift budget {NORMALIZATION_TOL})"
            )

    @property
    def half_width(self) -> float:
        return self.geometry.half_width

    @property
    def n_points(self) -> int:
        return self.geometry.n_points

    @property
    def spacing(self) -> float:
        return self.geometry.spacing

    def cell_masses(self) -> np.ndarray:
        return self._cell_w * self.weights

    def integral(self) -> float:
        return float(self._cell_w @ self.weights)


def _renormalized(geometry: GridGeometry, raw: np.ndarray) -> BeliefGrid:
    raw = np.maximum(np.asarray(raw, dtype=float), 0.0)
    total = float(geometry.cell_widths() @ raw)
    if total <= 0:
        raise GridGeometryError("cannot normalize an all-zero density")
    drift = abs(total - 1.0)
    if drift > 1e-12:
        logger.debug("renormalization absorbed %.3e quadrature drift", drift)
    return BeliefGrid(geometry, raw / total)


def gaussian_grid(mean: float, var: float, geometry: GridGeometry) -> BeliefGrid:
    """Sample a normal density on the grid, refusing if visible mass is left outside.

    The off-grid tail must stay below GAUSSIAN_TAIL_TOL; the error suggests a
    half_width that would fit.
    """
    if not var > 0:
        raise GridGeometryError("variance must be positive")
    sigma = math.sqrt(var)
    E = geometry.half_width
    upper = 0.5 * math.erfc((E - mean) / (sigma * math.sqrt(2.0)))
    lower = 0.5 * math.erfc((E + mean) / (sigma * math.sqrt(2.0)))
    tail = upper + lower
    if tail >= GAUSSIAN_TAIL_TOL:
        needed = abs(mean) + 6.0 * sigma
        raise GridGeometryError(
            f"normal({mean}, {var}) leaves {tail:.3e} mass outside [-{E}, {E}]; "
            f"use half_width >= {needed:.2f}"
        )
    x = geometry.nodes()
    w = np.exp(-0.5 * (x - mean) ** 2 / var) / (sigma * math.sqrt(2.0 * math.pi))
    return _renormalized(geometry, w)


def mean(belief: BeliefGrid) -> float:
    return float(belief.cell_masses() @ belief.nodes)


def variance(belief: BeliefGrid) -> float:
    m = mean(belief)
    return float(belief.cell_masses() @ (belief.nodes - m) ** 2)


def outward_mass(belief: BeliefGrid, radius: float) -> float:
    """Mass of {|e| >= radius}, with the density constant on each cell."""
    lo = np.maximum(belief.nodes - 0.5 * belief.spacing, -belief.half_width)
    hi = np.minimum(belief.nodes + 0.5 * belief.spacing, belief.half_width)
    pos = np.maximum(0.0, hi - np.maximum(lo, radius))
    neg = np.maximum(0.0, np.minimum(hi, -radius) - lo)
    return float(belief.weights @ (pos + neg))


# ---------------------------------------------------------------------------
# transmission rules on the grid


@dataclass
class ActionFunction:
    """Power level per grid node, optionally backed by exact symmetric bands.

    values[j] must come from action_set.levels and equal u_max wherever
    |node_j| exceeds the saturation radius.  ``enforce=False`` is an explicit
    escape hatch for diagnostic rules (the zero-power baseline, deliberately
    asymmetric probes) that break those constraints.

    bands, when present, is (radii, band_levels): the rule equals
    band_levels[i] for radii[i-1] <= |e| < radii[i] (the last level extends to
    infinity).  Node values are point samples of that step function; at a
    switch radius the higher band already applies.
    """

    values: np.ndarray
    action_set: ActionSet
    geometry: GridGeometry
    bands: tuple[np.ndarray, np.ndarray] | None = None
    enforce: bool = True
    saturated: bool = field(init=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.geometry.n_points,):
            raise GridGeometryError("action values must match the grid")
        if self.action_set.saturation_radius >= self.geometry.half_width:
            raise GridGeometryError(
                "saturation radius must sit strictly inside the grid half_width"
            )
        levels = np.asarray(self.action_set.levels)
        member = np.isin(self.values, levels)
        nodes = self.geometry.nodes()
        outside = np.abs(nodes) > self.action_set.saturation_radius
        self.saturated = bool(np.all(self.values[outside] == self.action_set.u_max))
        if self.enforce:
            if not member.all():
                bad = self.values[~member][:3]
                raise GridGeometryError(f"action values not in the level set: {bad}")
            if not self.saturated:
                raise GridGeometryError(
                    "action must transmit at u_max beyond the saturation radius"
                )
        if self.bands is not None:
            radii, blevels = self.bands
            radii = np.asarray(radii, dtype=float)
            blevels = np.asarray(blevels, dtype=float)
            if len(blevels) != len(radii) + 1:
                raise GridGeometryError("bands need len(levels) == len(radii) + 1")
            if np.any(np.diff(radii) < 0) or np.any(radii < 0):
                raise GridGeometryError("band radii must be nonnegative and nondecreasing")
            self.bands = (radii, blevels)

    def value_at(self, e: float) -> float:
        """Rule evaluated at a real innovation (band rule, else nearest node)."""
        if self.bands is not None:
            radii, blevels = self.bands
            return float(blevels[int(np.searchsorted(radii, abs(e), side="right"))])
        idx = int(round((e + self.geometry.half_width) / self.geometry.spacing))
        idx = min(max(idx, 0), self.geometry.n_points - 1)
        return float(self.values[idx])


def constant_action(
    level: float, action_set: ActionSet, geometry: GridGeometry, *, enforce: bool = True
) -> ActionFunction:
    """Rule transmitting one fixed level everywhere (enforce=False below u_max)."""
    values = np.full(geometry.n_points, float(level))
    return ActionFunction(values, action_set, geometry, enforce=enforce)


def banded_action(
    radii: np.ndarray,
    band_levels: np.ndarray,
    action_set: ActionSet,
    geometry: GridGeometry,
    *,
    enforce: bool = True,
) -> ActionFunction:
    """Symmetric step rule from exact switch radii; node values are point samples."""
    radii = np.asarray(radii, dtype=float)
    band_levels = np.asarray(band_levels, dtype=float)
    r = np.abs(geometry.nodes())
    values = band_levels[np.searchsorted(radii, r, side="right")]
    return ActionFunction(values, action_set, geometry, bands=(radii, band_levels), enforce=enforce)


def _band_cell_integrals(
    belief: BeliefGrid, r_lo: float, r_hi: float, center: float
) -> tuple[float, float, float]:
    """Exact (mass, first moment, second moment about center) of the belief
    restricted to {r_lo <= |e| < r_hi}, density constant per cell."""
    lo = np.maximum(belief.nodes - 0.5 * belief.spacing, -belief.half_width)
    hi = np.minimum(belief.nodes + 0.5 * belief.spacing, belief.half_width)
    w = belief.weights

    def one_side(a_bound: float, b_bound: float) -> tuple[float, float, float]:
        a = np.maximum(lo, a_bound)
        b = np.minimum(hi, b_bound)
        live = b > a
        a, b, wv = a[live], b[live], w[live]
        mass = float(wv @ (b - a))
        m1 = float(wv @ (b * b - a * a)) * 0.5
        m2 = float(wv @ ((b - center) ** 3 - (a - center) ** 3)) / 3.0
        return mass, m1, m2

    mp, m1p, m2p = one_side(r_lo, r_hi)
    mn, m1n, m2n = one_side(-r_hi, -r_lo)
    return mp + mn, m1p + m1n, m2p + m2n


def _band_table(action: ActionFunction, belief: BeliefGrid, center: float = 0.0):
    """Per-band (level, mass, m1, m2) rows for band-exact integrals."""
    radii, blevels = action.bands
    edges = np.concatenate(([0.0], radii, [belief.half_width * 2.0]))
    rows = []
    for i, level in enumerate(blevels):
        m, m1, m2 = _band_cell_integrals(belief, edges[i], edges[i + 1], center)
        rows.append((float(level), m, m1, m2))
    return rows


def expected_power(belief: BeliefGrid, action: ActionFunction) -> float:
    """Mean transmitted power under the belief."""
    if action.bands is not None:
        return sum(level * m for level, m, _, _ in _band_table(action, belief))
    return float(belief.cell_masses() @ action.values)


def success_prob(
    belief: BeliefGrid, gain: float, action: ActionFunction, reception: ReceptionModel
) -> float:
    """Probability the packet gets through: reception probability integrated
    against the belief."""
    if action.bands is not None:
        phi = sum(
            reception_prob(reception, level, gain) * m
            for level, m, _, _ in _band_table(action, belief)
        )
    else:
        q = reception_prob(reception, action.values, gain)
        phi = float(belief.cell_masses() @ q)
    return min(max(phi, 0.0), 1.0)


def post_failure(
    belief: BeliefGrid, gain: float, action: ActionFunction, reception: ReceptionModel
) -> BeliefGrid:
    """Belief conditioned on a transmission failure.

    Requires the failure event to be non-degenerate (success probability below
    1 - DEGENERATE_SUCCESS_TOL).  On the banded path, the surviving mass of a
    cell split by a switch radius is averaged back over the cell, keeping cell
    masses exact.
    """
    phi = success_prob(belief, gain, action, reception)
    if 1.0 - phi < DEGENERATE_SUCCESS_TOL:
        raise DegenerateSuccessError(
            f"success probability {phi} leaves no failure branch to condition on"
        )
    if action.bands is not None:
        radii, blevels = action.bands
        edges = np.concatenate(([0.0], radii, [belief.half_width * 2.0]))
        cell_mass = np.zeros(belief.n_points)
        lo = np.maximum(belief.nodes - 0.5 * belief.spacing, -belief.half_width)
        hi = np.minimum(belief.nodes + 0.5 * belief.spacing, belief.half_width)
        for i, level in enumerate(blevels):
            fail = 1.0 - reception_prob(reception, float(level), gain)
            for a_b, b_b in ((edges[i], edges[i + 1]), (-edges[i + 1], -edges[i])):
                a = np.maximum(lo, a_b)
                b = np.minimum(hi, b_b)
                gap = np.maximum(b - a, 0.0)
                cell_mass += fail * belief.weights * gap
        raw = cell_mass / belief.geometry.cell_widths()
    else:
        q = reception_prob(reception, action.values, gain)
        raw = (1.0 - q) * belief.weights
    return _renormalized(belief.geometry, raw)


def propagate(
    belief: BeliefGrid,
    gain: float,
    action: ActionFunction,
    received: int,
    process: ScalarProcess,
    reception: ReceptionModel,
) -> BeliefGrid:
    """One-step belief update after observing the transmission outcome.

    Success resets the innovation to pure process noise.  Failure conditions
    on the miss, pushes the density through the plant map e -> a*e, and
    convolves with the noise kernel.  Mass escaping the grid beyond
    SUPPORT_OVERFLOW_TOL raises instead of being silently renormalized away.
    """
    geometry = belief.geometry
    if received:
        return gaussian_grid(0.0, process.noise_var, geometry)

    theta_plus = post_failure(belief, gain, action, reception)
    a = process.a
    E = geometry.half_width
    dx = geometry.spacing
    n = geometry.n_points

    # exact mass projection of the stretched density e -> a*e: the cell-constant
    # CDF is piecewise linear, so pulling target cell edges back through the map
    # keeps masses exact even across the jumps a banded action puts in theta_plus
    edges = np.concatenate(([-E], belief.nodes[:-1] + 0.5 * dx, [E]))
    cum = np.concatenate(([0.0], np.cumsum(theta_plus.cell_masses())))
    cdf = np.interp(edges / abs(a), edges, cum, left=0.0, right=float(cum[-1]))
    weighted = np.diff(cdf)
    if a < 0:
        weighted = weighted[::-1]

    offsets = dx * np.arange(-(n - 1), n)
    W = process.noise_var
    kernel = np.exp(-0.5 * offsets**2 / W) / math.sqrt(2.0 * math.pi * W)

    if geometry.convolution == "fft":
        raw = fftconvolve(weighted, kernel, mode="valid")
    else:
        raw = np.convolve(weighted, kernel, mode="valid")

    escaped = 1.0 - float(geometry.cell_widths() @ np.maximum(raw, 0.0))
    if escaped > SUPPORT_OVERFLOW_TOL:
        raise SupportOverflowError(
            f"{escaped:.3e} of the propagated belief escaped [-{geometry.half_width}, "
            f"{geometry.half_width}]; enlarge the grid half_width"
        )
    return _renormalized(geometry, raw)


def stage_cost(
    belief: BeliefGrid,
    gain: float,
    action: ActionFunction,
    reception: ReceptionModel,
    weights: CostWeights,
) -> float:
    """Expected one-step cost: alpha * power plus squared innovation error kept
    on failure.

    The error is measured against the failure-branch mean, which is what the
    estimator will use if this transmission misses.  When success is
    essentially certain the failure branch carries no weight and only power
    is charged.
    """
    alpha = weights.alpha
    power = expected_power(belief, action)
    if action.bands is not None:
        rows = _band_table(action, belief)
        fail = [1.0 - reception_prob(reception, level, gain) for level, _, _, _ in rows]
        fail_mass = sum(f * m for f, (_, m, _, _) in zip(fail, rows))
        if fail_mass < DEGENERATE_SUCCESS_TOL:
            return alpha * power
        e_hat = sum(f * m1 for f, (_, _, m1, _) in zip(fail, rows)) / fail_mass
        rows = _band_table(action, belief, center=e_hat)
        distortion = sum(f * m2 for f, (_, _, _, m2) in zip(fail, rows))
    else:
        q = reception_prob(reception, action.values, gain)
        fail_w = (1.0 - q) * belief.cell_masses()
        fail_mass = float(fail_w.sum())
        if fail_mass < DEGENERATE_SUCCESS_TOL:
            return alpha * power
        e_hat = float(fail_w @ belief.nodes) / fail_mass
        distortion = float(fail_w @ (belief.nodes - e_hat) ** 2)
    return alpha * power + distortion
