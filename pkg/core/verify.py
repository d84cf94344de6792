"""
Certifiers for calibrations, minimality and comparison, plus the 1D layer solver.

This module provides:
- CompetitorSet: seeded competitors sharing the anchor leaf's exterior data
- certify_calibration / certify_calibration_refined / certify_minimality / null_lagrangian_check /
  calibration_forms_check / search_calibration_violation
- sub_super_field_check: sign of L_N along the leaves above and below t0
- strong_comparison_probe and first_touching_leaf
- solve_layer_1d: damped fixed-point iteration for 1D layer profiles

Certifiers never raise for a failed property; the failure is a certificate.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from core.certificate import Certificate, Verdict, combine
from core.errors import (
    InvalidParameterError,
    MonotonicityLostError,
    NoConvergenceError,
    OrderingViolatedError,
)
from core.field import DiscreteFunction, ExteriorRule, Field
from core.functional import (
    _kink_breaks,
    blend_competitor,
    calibration_alternative,
    calibration_defining,
    energy_nonlocal,
    euler_lagrange,
)
from core.lagrangian import LagrangianSpec
from core.mesh import Domain, QuadratureRule, as_points, radial_integral, refine

logger = logging.getLogger(__name__)

RECIPES = ("bump", "leaf-blend", "clamped-shift")
SCAN_POINTS_1D = 4001
SCAN_POINTS_2D = 201


# ---------------------------------------------------------------------------
# Competitors
# ---------------------------------------------------------------------------

def bump_function(center: np.ndarray, radius: np.ndarray):
    """Tensor bump prod (1 - z_k^2)^3 supported in the box |x_k - c_k| < r_k."""
    def bump(x: np.ndarray) -> np.ndarray:
        z = (x - center[None, :]) / radius[None, :]
        return np.prod(np.where(np.abs(z) < 1.0, (1.0 - z * z) ** 3, 0.0), axis=1)
    return bump


@dataclass(frozen=True)
class CompetitorSet:
    """Recipe for competitors w with w = u^{t0} on Omega^c.

    Attributes:
        recipe: "bump" (random bump perturbations of the anchor leaf),
            "leaf-blend" (u^{t0} + chi (u^{t1} - u^{t0}) with a cutoff chi),
            "clamped-shift" (u^{t0} + h min(1, dist(x, boundary) / rho))
        count: number of competitors
        seed: seed of the generator
        amplitude: perturbation size, as a fraction of the field's t-range
        blend: weight eps of the (1 - eps) w + eps u^{t0} blending (0 disables it)
        require_graph: shrink perturbations until the graph lies in the field's region
    """

    recipe: str = "bump"
    count: int = config.DEFAULT_COMPETITORS
    seed: int = 0
    amplitude: float = 0.1
    blend: float = 0.0
    require_graph: bool = True

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise InvalidParameterError(f"Unsupported competitor recipe: {self.recipe}")
        if self.seed is None:
            raise InvalidParameterError("Competitor generation needs a seed")
        if self.count < 1:
            raise InvalidParameterError(f"Competitor count must be positive, got {self.count}")

    def _perturbation(self, rng: np.random.Generator, fld: Field, t0: float, domain: Domain):
        lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
        span = self.amplitude * (fld.t_max - fld.t_min)
        if self.recipe == "bump":
            pieces = []
            for _ in range(int(rng.integers(1, 4))):
                radius = domain.widths * rng.uniform(0.1, 0.45, domain.dim)
                center = rng.uniform(lo + radius, hi - radius)
                pieces.append((rng.uniform(-1.0, 1.0) * span, bump_function(center, radius)))
            return lambda x: sum(a * b(x) for a, b in pieces)
        if self.recipe == "leaf-blend":
            t1 = float(np.clip(t0 + rng.uniform(-1.0, 1.0) * span, fld.t_min, fld.t_max))
            chi = bump_function(domain.center, 0.5 * domain.widths)
            return lambda x: chi(x) * (fld.leaf(t1, x) - fld.leaf(t0, x))
        h = rng.uniform(-1.0, 1.0) * span
        rho = rng.uniform(0.05, 0.25) * float(np.min(domain.widths))

        def ramp(x: np.ndarray) -> np.ndarray:
            dist = np.min(np.minimum(x - lo[None, :], hi[None, :] - x), axis=1)
            return h * np.clip(dist / rho, 0.0, 1.0)
        return ramp

    def generate(self, fld: Field, t0: float, domain: Domain) -> List[DiscreteFunction]:
        """Draw the competitors; each equals the anchor leaf exactly outside Omega."""
        rng = np.random.default_rng(self.seed)
        anchor = fld.leaf_function(t0, domain)
        check = refine(domain, 4).node_points()
        lo_b, hi_b = fld.bounds(check)
        base = fld.leaf(t0, check)
        out = []
        for k in range(self.count):
            psi = self._perturbation(rng, fld, t0, domain)
            scale = 1.0
            if self.require_graph:
                for _ in range(40):
                    trial = base + scale * psi(check)
                    if np.all(trial > lo_b) and np.all(trial < hi_b):
                        break
                    scale *= 0.5
                else:
                    raise InvalidParameterError(f"Competitor {k} cannot be fitted inside the field")
            w = DiscreteFunction.from_callable(
                domain, lambda x, psi=psi, scale=scale: fld.leaf(t0, x) + scale * psi(x),
                exterior=ExteriorRule("callable", func=lambda x: fld.leaf(t0, x)),
                growth=fld.growth, affine_tail=fld.affine_tail, smooth=self.recipe != "clamped-shift",
            )
            if self.blend > 0.0:
                w = blend_competitor(w, anchor, self.blend)
            out.append(w)
        logger.debug(f"Generated {len(out)} {self.recipe} competitors (seed {self.seed})")
        return out

    def describe(self) -> Dict[str, Any]:
        return {"recipe": self.recipe, "count": self.count, "seed": self.seed,
                "amplitude": self.amplitude, "blend": self.blend}


Competitors = Union[CompetitorSet, Sequence[DiscreteFunction]]


def _materialize(competitors: Competitors, fld: Field, t0: float, domain: Domain) -> List[DiscreteFunction]:
    if isinstance(competitors, CompetitorSet):
        return competitors.generate(fld, t0, domain)
    return list(competitors)


def _scale(*values: float) -> float:
    return max([1.0] + [abs(v) for v in values])


# ---------------------------------------------------------------------------
# Calibration certifiers
# ---------------------------------------------------------------------------

def _identity_part(spec: LagrangianSpec, fld: Field, domain: Domain,
                   rule: Optional[QuadratureRule], leaves: int) -> Certificate:
    worst, bad, gaps = -math.inf, None, []
    for t in np.linspace(fld.t_min, fld.t_max, leaves + 2)[1:-1]:
        leaf = fld.leaf_function(t, domain)
        report = calibration_defining(spec, fld, float(t), domain, leaf, rule)
        energy = energy_nonlocal(spec, domain, leaf, rule).value
        gap = abs(report.value - energy)
        extra = abs(report.breakdown["inner_pair"]) + abs(report.breakdown["inner_reaction"])
        gaps.append(gap)
        excess = max(gap - config.IDENTITY_RTOL * _scale(energy), extra)
        if excess > worst:
            worst, bad = excess, {"t": float(t), "calibration": report.value, "energy": energy}
    tol = 0.0
    ok = worst <= tol
    return Certificate("calibration-identity", Verdict.PASS if ok else Verdict.FAIL, -worst, tol,
                       counterexample=None if ok else bad, details={"gaps": gaps})


def certify_calibration(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain,
                        competitors: Competitors, rule: Optional[QuadratureRule] = None,
                        leaves: int = 5) -> Certificate:
    """Certify the calibration properties of C_N built from a field.

    Checks (C1) C_N(u^t) = E_N(u^t) on sampled leaves with a zero inner term,
    (C3) C_N(w) <= E_N(w) and (C2) C_N(w) >= C_N(u^{t0}) on every competitor.
    (C2) is a difference of two quadratures of the same null-Lagrangian and is
    held to the quadrature tolerance SPREAD_RTOL.
    """
    ws = _materialize(competitors, fld, t0, domain)
    identity = _identity_part(spec, fld, domain, rule, leaves)
    anchor = fld.leaf_function(t0, domain)
    c_anchor = calibration_defining(spec, fld, t0, domain, anchor, rule).value

    rows = []
    below_worst, below_bad = math.inf, None
    null_worst, null_bad = math.inf, None
    for i, w in enumerate(ws):
        c = calibration_defining(spec, fld, t0, domain, w, rule).value
        e = energy_nonlocal(spec, domain, w, rule).value
        tol = config.CALIBRATION_RTOL * _scale(e)
        rows.append({"index": i, "calibration": c, "energy": e, "margin": e - c})
        if e - c + tol < below_worst:
            below_worst = e - c + tol
            below_bad = {"index": i, "calibration": c, "energy": e, "competitor": w.to_csv()}
        null_tol = config.SPREAD_RTOL * _scale(c, c_anchor)
        if c - c_anchor + null_tol < null_worst:
            null_worst = c - c_anchor + null_tol
            null_bad = {"index": i, "calibration": c, "anchor": c_anchor, "competitor": w.to_csv()}
    scale = _scale(*(r["energy"] for r in rows))
    tol = config.CALIBRATION_RTOL * scale
    below = Certificate(
        "calibration-below-energy", Verdict.PASS if below_worst >= 0 else Verdict.FAIL,
        below_worst - tol, tol, counterexample=None if below_worst >= 0 else below_bad,
    )
    null_tol = config.SPREAD_RTOL * scale
    null = Certificate(
        "calibration-above-anchor", Verdict.PASS if null_worst >= 0 else Verdict.FAIL,
        null_worst - null_tol, null_tol, counterexample=None if null_worst >= 0 else null_bad,
    )
    cert = combine("calibration", [identity, below, null],
                   details={"spec": spec.describe(), "field": fld.describe(), "t0": t0,
                            "anchor_calibration": c_anchor, "competitors": rows})
    logger.info(f"Calibration certificate for {spec.id}: {cert.verdict.value}")
    return cert


def certify_calibration_refined(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain,
                                competitors: Competitors, rule: Optional[QuadratureRule] = None,
                                leaves: int = 5, levels: int = 2) -> Certificate:
    """``certify_calibration`` on ``levels`` successive halvings of the mesh.

    Every level must pass, and the worst margin E_N(w) - C_N(w) over the
    competitors may not drop by more than SPREAD_RTOL * scale from one level
    to the next. The worst margins form the trend.
    """
    if levels < 1:
        raise InvalidParameterError(f"levels must be positive, got {levels}")
    parts, worst, scales = [], [], []
    grid = domain
    for level in range(levels):
        cert = certify_calibration(spec, fld, t0, grid, competitors, rule, leaves)
        rows = cert.details["competitors"]
        worst.append(min(r["margin"] for r in rows))
        scales.append(_scale(*(r["energy"] for r in rows)))
        parts.append(replace(cert, property_id=f"calibration-level-{level}"))
        logger.debug(f"Worst calibration margin at level {level}: {worst[-1]:.6g}")
        grid = refine(grid, 2)
    tol = config.SPREAD_RTOL * max(scales)
    drops = [b - a for a, b in zip(worst, worst[1:])]
    slack = min(drops, default=0.0) + tol
    trend_ok = slack >= 0.0
    parts.append(Certificate(
        "calibration-refinement", Verdict.PASS if trend_ok else Verdict.FAIL, slack, tol,
        counterexample=None if trend_ok else {"worst_margins": worst},
    ))
    cert = combine("calibration", parts, details={"levels": levels, "worst_margins": worst})
    return cert.with_trend(worst)


def certify_minimality(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain,
                       competitors: Competitors, rule: Optional[QuadratureRule] = None) -> Certificate:
    """Energy-only oracle: E_N(u^{t0}) <= E_N(w) + tol for every competitor."""
    ws = _materialize(competitors, fld, t0, domain)
    e_anchor = energy_nonlocal(spec, domain, fld.leaf_function(t0, domain), rule).value
    worst, bad, rows = math.inf, None, []
    for i, w in enumerate(ws):
        e = energy_nonlocal(spec, domain, w, rule).value
        rows.append({"index": i, "energy": e, "margin": e - e_anchor})
        if e - e_anchor < worst:
            worst = e - e_anchor
            bad = {"index": i, "energy": e, "anchor_energy": e_anchor, "competitor": w.to_csv()}
    tol = config.CALIBRATION_RTOL * _scale(e_anchor, *(r["energy"] for r in rows))
    ok = worst >= -tol
    cert = Certificate(
        "minimality", Verdict.PASS if ok else Verdict.FAIL, max(worst, -tol) if ok else worst, tol,
        counterexample=None if ok else bad,
        details={"anchor_energy": e_anchor, "competitors": rows},
    )
    logger.info(f"Minimality certificate for {spec.id}: {cert.verdict.value}")
    return cert


def relative_spread(values: Sequence[float]) -> float:
    """(max - min) / max |value| of a list of calibration values."""
    arr = np.asarray(values, dtype=float)
    top = float(np.max(np.abs(arr)))
    return float(np.ptp(arr)) / top if top > 0 else 0.0


def null_lagrangian_check(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain,
                          competitors: Competitors, rule: Optional[QuadratureRule] = None,
                          levels: int = 2, rtol: float = config.SPREAD_RTOL) -> Certificate:
    """Spread of C_N over competitors with common exterior data, at successive refinements.

    Passes when the spread at the default grid is at most ``rtol``, the spread
    at the finest grid is at most ``SPREAD_REFINED_FACTOR * rtol`` and it does
    not grow under refinement. Growth below ``SPREAD_FLOOR`` is round-off.
    """
    ws = _materialize(competitors, fld, t0, domain)
    spreads = []
    grid = domain
    for level in range(levels):
        values = [calibration_defining(spec, fld, t0, grid, w, rule).value for w in ws]
        spreads.append(relative_spread(values))
        logger.debug(f"Null-Lagrangian spread at level {level}: {spreads[-1]:.3e}")
        grid = refine(grid, 2)
    floor = config.SPREAD_FLOOR
    improving = all(b <= max(a, floor) for a, b in zip(spreads, spreads[1:]))
    refined_bound = config.SPREAD_REFINED_FACTOR * rtol
    margin = rtol - spreads[0]
    if len(spreads) > 1:
        margin = min(margin, refined_bound - spreads[-1])
    ok = margin >= 0.0 and improving
    cert = Certificate(
        "null-lagrangian", Verdict.PASS if ok else Verdict.FAIL, margin, rtol,
        counterexample=None if ok else {"spreads": spreads, "improving": improving},
        details={"spreads": spreads, "refined_bound": refined_bound, "floor": floor},
    )
    return cert.with_trend(spreads)


def calibration_forms_check(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain,
                            competitors: Competitors, rule: Optional[QuadratureRule] = None) -> Certificate:
    """Agreement of the defining and the alternative form of C_N.

    The error budget of each form is its companion-rule and t-rule estimate
    plus its change under one refinement; the gap must stay within twice the
    summed budgets and must not grow under refinement.
    """
    ws = _materialize(competitors, fld, t0, domain)
    fine = refine(domain, 2)
    worst, bad, rows = math.inf, None, []
    for i, w in enumerate(ws):
        d0 = calibration_defining(spec, fld, t0, domain, w, rule, estimate_error=True)
        a0 = calibration_alternative(spec, fld, domain, w, rule, t0=t0, estimate_error=True)
        d1 = calibration_defining(spec, fld, t0, fine, w, rule)
        a1 = calibration_alternative(spec, fld, fine, w, rule, t0=t0)
        gap0, gap1 = abs(d0.value - a0.value), abs(d1.value - a1.value)
        budget = (d0.error_estimate + a0.error_estimate
                  + abs(d0.value - d1.value) + abs(a0.value - a1.value))
        floor = config.IDENTITY_RTOL * _scale(d0.value)
        growth_floor = config.SPREAD_FLOOR * _scale(d0.value)
        margin = min(2.0 * budget + floor - gap0, max(gap0, growth_floor) - gap1)
        rows.append({"index": i, "gap": gap0, "refined_gap": gap1, "budget": budget})
        if margin < worst:
            worst = margin
            bad = {"index": i, "defining": d0.value, "alternative": a0.value,
                   "gap": gap0, "refined_gap": gap1, "budget": budget}
    ok = worst >= 0
    return Certificate(
        "calibration-forms", Verdict.PASS if ok else Verdict.FAIL, worst, 0.0,
        counterexample=None if ok else bad, details={"competitors": rows},
    )


def search_calibration_violation(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain,
                                 budget: int = 500, seed: int = 0,
                                 rule: Optional[QuadratureRule] = None) -> Certificate:
    """Random search for a competitor with C_N(w) > E_N(w); FAIL when one is found."""
    found = None
    tried = 0
    for k in range(budget):
        w = CompetitorSet("bump", 1, seed=seed + k).generate(fld, t0, domain)[0]
        tried += 1
        c = calibration_defining(spec, fld, t0, domain, w, rule).value
        e = energy_nonlocal(spec, domain, w, rule).value
        if c > e + config.CALIBRATION_RTOL * _scale(e):
            found = {"trial": k, "calibration": c, "energy": e, "competitor": w.to_csv()}
            break
    if found is not None:
        logger.info(f"Calibration inequality violated for {spec.id} after {tried} trials")
        return Certificate("calibration-below-energy", Verdict.FAIL,
                           found["energy"] - found["calibration"], 0.0,
                           counterexample=found, details={"trials": tried})
    return Certificate("calibration-below-energy", Verdict.INCONCLUSIVE, 0.0, 0.0,
                       details={"trials": tried})


# ---------------------------------------------------------------------------
# Sub/super fields and comparison
# ---------------------------------------------------------------------------

def _sample_points(domain: Domain, count: int) -> np.ndarray:
    centers = domain.cell_centers()
    idx = np.unique(np.linspace(0, centers.shape[0] - 1, count).round().astype(int))
    return centers[idx]


def sub_super_field_check(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain,
                          leaves: int = 3, points: int = 8, tol: float = 1e-6) -> Certificate:
    """Sign of L_N(u^t): >= 0 for leaves above t0 and <= 0 below.

    The details record which of the two clauses hold; the first violation
    found is reported with its (t, x).
    """
    xs = _sample_points(domain, points)
    above = np.linspace(t0, fld.t_max, leaves + 1)[1:]
    below = np.linspace(fld.t_min, t0, leaves + 1)[:-1]
    worst, bad = math.inf, None
    clauses = {"supersolutions_above": True, "subsolutions_below": True}
    for ts, sign, clause in ((above, 1.0, "supersolutions_above"), (below, -1.0, "subsolutions_below")):
        for t in ts:
            leaf = fld.leaf_function(float(t), domain)
            for x in xs:
                value = sign * euler_lagrange(spec, domain, leaf, x)
                if value < -tol:
                    clauses[clause] = False
                if value < worst:
                    worst = value
                    bad = {"t": float(t), "x": x.tolist(), "L": sign * value, "clause": clause}
    ok = worst >= -tol
    return Certificate(
        "sub-super-field", Verdict.PASS if ok else Verdict.FAIL, max(worst, -tol) if ok else worst, tol,
        counterexample=None if ok else bad, details=clauses,
    )


def strong_comparison_probe(spec: LagrangianSpec, domain: Domain, u: DiscreteFunction,
                            v: DiscreteFunction, x0, tol: float = 1e-8) -> Certificate:
    """L_N(u)(x0) >= L_N(v)(x0) for u <= v touching at x0.

    The difference is one radial integral of
    dG/da(x0, y, u(x0), u(y)) - dG/da(x0, y, v(x0), v(y)), which is
    pointwise nonnegative for elliptic families.

    Raises:
        OrderingViolatedError: If u > v on the mesh or u(x0) != v(x0).
    """
    p = as_points(x0, domain.dim)[0]
    check = np.concatenate((refine(domain, 4).node_points(), p[None, :]))
    excess = u(check) - v(check)
    if np.max(excess) > 1e-12 * _scale(float(np.max(np.abs(v(check))))):
        i = int(np.argmax(excess))
        raise OrderingViolatedError(f"u > v at x={check[i].tolist()} by {excess[i]:.3e}")
    u0, v0 = float(u(p[None, :])[0]), float(v(p[None, :])[0])
    if abs(u0 - v0) > 1e-12 * _scale(u0):
        raise OrderingViolatedError(f"u and v do not touch at x0={p.tolist()}")

    def density(y: np.ndarray) -> np.ndarray:
        xs = np.broadcast_to(p, y.shape)
        a = np.full(y.shape[0], u0)
        return spec.pair_partial_a(xs, y, a, u(y), domain) - spec.pair_partial_a(xs, y, a, v(y), domain)

    breaks = _kink_breaks(u, p) + _kink_breaks(v, p)
    if spec.support is not None:
        breaks.append(float(spec.support))
    margin = radial_integral(p, density, domain, decay=spec.decay, breakpoints=breaks,
                             radial_exponent=spec.radial_exponent if spec.singular else domain.dim - 1.0)
    ok = margin >= -tol
    return Certificate(
        "strong-comparison", Verdict.PASS if ok else Verdict.FAIL, margin, tol,
        counterexample=None if ok else {"x0": p.tolist(), "difference": margin},
    )


@dataclass(frozen=True)
class TouchResult:
    """First leaf touching v: parameter, touching point and where the touch happens."""

    t1: float
    x0: Tuple[float, ...]
    side: str
    kind: str  # "interior" or "exterior"


def _scan_grid(domain: Domain) -> np.ndarray:
    count = SCAN_POINTS_1D if domain.dim == 1 else SCAN_POINTS_2D
    axes = [np.linspace(a, b, count) for a, b in zip(domain.lower, domain.upper)]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def first_touching_leaf(fld: Field, v, domain: Domain, t0: float,
                        side: str = "above") -> Optional[TouchResult]:
    """The first leaf touching v when sliding from above (or below) towards u^{t0}.

    From above: t1 = min{t >= t0 : u^t >= v on Omega}; from below the mirror
    image. Returns None when v coincides with the anchor leaf on Omega or v is
    not covered by the leaves in range; a touch only at t0 is an exterior touch.
    """
    if side not in ("above", "below"):
        raise InvalidParameterError(f"Unsupported side: {side}")
    grid = _scan_grid(domain)
    vv = v(grid)
    anchor = fld.leaf(t0, grid)
    if np.array_equal(vv, anchor):
        return None
    sign = 1.0 if side == "above" else -1.0
    end = fld.t_max if side == "above" else fld.t_min

    def gap(t: float) -> float:
        return float(np.min(sign * (fld.leaf(t, grid) - vv)))

    if gap(end) < 0.0:
        logger.info(f"v is not covered by the leaves {side} t0")
        return None
    if gap(t0) >= 0.0:
        return TouchResult(float(t0), tuple(grid[int(np.argmin(sign * (anchor - vv)))]), side, "exterior")
    lo, hi = float(t0), float(end)
    for _ in range(config.BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if gap(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    t1 = hi
    i = int(np.argmin(sign * (fld.leaf(t1, grid) - vv)))
    return TouchResult(float(t1), tuple(grid[i]), side, "interior")


# ---------------------------------------------------------------------------
# 1D layer solver
# ---------------------------------------------------------------------------

def _power_integral(p: float, a: float, b: float) -> float:
    if abs(p + 1.0) < 1e-14:
        return math.log(b / a)
    return (b ** (p + 1.0) - a ** (p + 1.0)) / (p + 1.0)


def fractional_matrix_1d(nodes: np.ndarray, s: float, c: float,
                         left: float, right: float) -> Tuple[np.ndarray, np.ndarray]:
    """Finite-difference (-Delta)^s on a uniform 1D grid: (-Delta)^s u ~ M u + b.

    Weights integrate the piecewise-linear interpolant of the second
    difference D(z) = u(x+z) + u(x-z) - 2u(x) against z^(-1-2s), with a
    quadratic first panel; nodes beyond the grid take the constant values
    ``left`` and ``right``.
    """
    N = nodes.size
    h = float(nodes[1] - nodes[0])
    K = N
    omega = np.zeros(K + 1)
    omega[1] = h ** (-2.0 * s) / (2.0 - 2.0 * s)
    for k in range(1, K):
        a, b = k * h, (k + 1) * h
        i1 = _power_integral(-1.0 - 2.0 * s, a, b)
        i0 = _power_integral(-2.0 * s, a, b)
        omega[k] += ((k + 1) * h * i1 - i0) / h
        omega[k + 1] += (i0 - k * h * i1) / h
    far = (K * h) ** (-2.0 * s) / (2.0 * s)
    M = np.zeros((N, N))
    bvec = np.zeros(N)
    idx = np.arange(N)
    M[idx, idx] = c * (2.0 * omega[1:].sum() + 2.0 * far)
    for k in range(1, K + 1):
        for j, ext in ((idx + k, right), (idx - k, left)):
            inside = (j >= 0) & (j < N)
            M[idx[inside], j[inside]] -= c * omega[k]
            bvec[~inside] -= c * omega[k] * ext
    bvec -= c * far * (left + right)
    return M, bvec


def layer_guess(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "odd":
        return np.tanh(x)
    if kind == "even":
        return 1.0 - 0.5 * np.exp(-x * x)
    raise InvalidParameterError(f"Unsupported initial guess: {kind}")


def solve_layer_1d(spec: LagrangianSpec, half_width: float = config.LAYER_HALF_WIDTH,
                   nodes: int = config.LAYER_NODES, damping: float = config.LAYER_DAMPING,
                   max_iter: int = config.LAYER_MAX_ITER, guess: str = "odd",
                   residual: float = config.LAYER_RESIDUAL) -> DiscreteFunction:
    """Damped fixed-point iteration w <- w - tau ((-Delta)^s w - F'(w)) on [-L, L].

    The boundary values at +-infinity are the limits of the initial guess.
    Monotonicity of the result is checked, not enforced.

    Raises:
        InvalidParameterError: If the spec is not the 1D quadratic family with a reaction.
        NoConvergenceError: If the iteration blows up or runs out of iterations.
        MonotonicityLostError: If the converged profile is not increasing.
    """
    if spec.n != 1 or spec.kernel is None or spec.kernel.kind != "fractional" or not spec.has_reaction:
        raise InvalidParameterError("Layer solver needs the 1D quadratic fractional family with a reaction")
    s, c = float(spec.params["s"]), float(spec.params["c"])
    domain = Domain.box((-half_width,), (half_width,), (nodes - 1,))
    x = domain.node_points()[:, 0]
    w = layer_guess(guess, x)
    left, right = float(layer_guess(guess, np.array([-np.inf]))[0]), float(layer_guess(guess, np.array([np.inf]))[0])
    M, b = fractional_matrix_1d(x, s, c, left, right)
    pts = x.reshape(-1, 1)
    norm = math.inf
    for it in range(max_iter):
        r = M @ w + b - spec.reaction.dF(w, pts)
        norm = float(np.max(np.abs(r)))
        if not math.isfinite(norm) or norm > 1e8:
            raise NoConvergenceError(f"Layer iteration diverged at step {it} (residual {norm:.3e})")
        if norm <= residual:
            break
        w = w - damping * r
    else:
        raise NoConvergenceError(f"Layer iteration did not converge in {max_iter} steps (residual {norm:.3e})")
    logger.info(f"Layer solver converged in {it} steps, residual {norm:.3e}")
    if np.any(np.diff(w) <= 0.0):
        k = int(np.argmin(np.diff(w)))
        raise MonotonicityLostError(f"Profile is not increasing near x={x[k]:.4g}")
    return DiscreteFunction(
        domain, w, ExteriorRule("callable", func=lambda p: np.where(p[:, 0] < 0.0, left, right)),
        sup_bound=float(np.max(np.abs(w))), growth=0.0, smooth=True,
    )


def layer_error(w: DiscreteFunction, window: Optional[float] = None) -> Tuple[float, float]:
    """Sup distance to (2/pi) arctan(x - shift) on |x| <= window, shift = zero crossing of w."""
    x = w.domain.node_points()[:, 0]
    window = window if window is not None else 0.25 * float(w.domain.upper[0])
    shift = float(np.interp(0.0, w.values, x))
    inside = np.abs(x) <= window
    err = np.max(np.abs(w.values[inside] - (2.0 / np.pi) * np.arctan(x[inside] - shift)))
    return float(err), shift
