"""
Energies, Euler-Lagrange and Neumann operators, and calibrating functionals.

This module provides:
- energy_nonlocal / energy_local / energy_mixed / energy_fractional_semilinear
- euler_lagrange: L_N(w)(x), plus L_L for specs carrying a local part
- neumann_operator: N_N(w)(x) for x outside Omega
- calibration_defining: C_N(w) in the t-variable (or directly in lambda)
- calibration_alternative: the two-term rewrite of C_N
- calibration_local / calibration_local_direct / calibration_mixed
- first_variation_check and blend_competitor

Energies follow the "half" convention E_N(w) = 1/2 of the double integral of
G_N over Q(Omega); ``energy_fractional_semilinear`` reports the c/4
convention, which is 2 E_N for the quadratic family with reaction.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from core.certificate import Certificate, Verdict
from core.errors import (
    InsufficientSmoothnessError,
    InvalidParameterError,
    NonfiniteIntegrandError,
    OutOfRegionError,
    TailUnboundedError,
)
from core.field import DiscreteFunction, Field, leaf_parameter
from core.lagrangian import LagrangianSpec, LocalLagrangian, Reaction, make_lagrangian
from core.mesh import (
    PAIR_KINDS,
    Discretization,
    Domain,
    QuadratureRule,
    as_points,
    cell_rule,
    discretize,
    gauss_legendre,
    node_weights,
    pair_sum,
    point_sum,
    radial_integral,
)

logger = logging.getLogger(__name__)

CONVENTIONS = ("half", "c/4")
INNER_PATHS = ("t", "lambda")
LOCAL_STEP = 1e-3  # finite-difference step for local operators, relative to diam(Omega)
NEUMANN_POINTS = 4


@dataclass(frozen=True)
class EnergyReport:
    """Energy value with its quadrature breakdown; ``value`` is the sum of ``breakdown``."""

    value: float
    breakdown: Dict[str, float]
    grid: Dict[str, Any]
    rule: Dict[str, Any]
    convention: str = "half"
    error_estimate: float = 0.0
    tail_truncated: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "breakdown": dict(self.breakdown),
            "grid": self.grid,
            "rule": self.rule,
            "convention": self.convention,
            "error_estimate": self.error_estimate,
            "tail_truncated": self.tail_truncated,
        }


@dataclass(frozen=True)
class CalibrationReport:
    """Value of a calibrating functional at one competitor.

    Attributes:
        value: C(w), the sum of ``breakdown``
        t0: anchor leaf parameter (None for the alternative form)
        path: "defining", "lambda", "alternative", "local", "local-direct" or "mixed"
        inner: statistics of the inner integrals (moved points, t range, nodes)
        out_of_region: exterior points whose value had to be clamped into the field
        minus_infinity: set when the value diverges to -inf
    """

    value: float
    t0: Optional[float]
    path: str
    breakdown: Dict[str, float]
    inner: Dict[str, Any] = field(default_factory=dict)
    out_of_region: List[Dict[str, Any]] = field(default_factory=list)
    error_estimate: float = 0.0
    minus_infinity: bool = False
    convention: str = "half"

    def __post_init__(self):
        if not math.isfinite(self.value) and not self.minus_infinity:
            raise NonfiniteIntegrandError(f"Calibration value {self.value} on path {self.path}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "t0": self.t0,
            "path": self.path,
            "breakdown": dict(self.breakdown),
            "inner": dict(self.inner),
            "out_of_region": list(self.out_of_region),
            "error_estimate": self.error_estimate,
            "minus_infinity": self.minus_infinity,
            "convention": self.convention,
        }


def _total(parts: Dict[str, float]) -> float:
    return math.fsum(parts.values())


# ---------------------------------------------------------------------------
# Shared quadrature setup
# ---------------------------------------------------------------------------

def _prepare(spec: LagrangianSpec, domain: Domain, rule: Optional[QuadratureRule],
             functions: Tuple[Any, ...] = ()) -> Tuple[QuadratureRule, Discretization]:
    """Pick the effective rule for a spec and build its point table.

    Raises:
        TailUnboundedError: If some function grows too fast for the analytic tail.
    """
    rule = rule or QuadratureRule()
    if spec.restricted and rule.exterior:
        rule = replace(rule, exterior=False)
    if rule.uses_exterior and rule.tail == "analytic":
        for w in functions:
            growth = getattr(w, "growth", 0.0)
            if not spec.tail_bounded(growth, getattr(w, "affine_tail", False)):
                raise TailUnboundedError(
                    f"{spec.id}: exterior growth {growth} makes the tail of the energy diverge"
                )
    decay = spec.decay if rule.uses_exterior else None
    return rule, discretize(domain, rule, decay)


def _kinds(spec: LagrangianSpec) -> Tuple[str, ...]:
    return ("interior", "diagonal") if spec.restricted else PAIR_KINDS


def _pair_energy(spec: LagrangianSpec, disc: Discretization, values: np.ndarray) -> Dict[str, float]:
    domain = disc.domain

    def integrand(block):
        return spec.pair_value(block.x, block.y, values[block.ix], values[block.iy], domain)

    parts = pair_sum(disc, integrand, _kinds(spec))
    return {
        "interior": 0.5 * math.fsum((parts.get("interior", 0.0), parts.get("diagonal", 0.0))),
        "cross": parts.get("cross", 0.0),
        "tail": parts.get("tail", 0.0),
    }


def _reaction_energy(spec: LagrangianSpec, disc: Discretization, values: np.ndarray) -> float:
    if not spec.has_reaction:
        return 0.0
    inner = disc.slices["interior"]
    return spec.reaction_coeff * point_sum(disc, spec.reaction_at(values[inner], disc.points[inner]))


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

def _nonlocal_parts(spec: LagrangianSpec, domain: Domain, w, rule: Optional[QuadratureRule]):
    rule, disc = _prepare(spec, domain, rule, (w,))
    values = w(disc.points)
    parts = _pair_energy(spec, disc, values)
    parts["reaction"] = _reaction_energy(spec, disc, values)
    return rule, parts


def energy_nonlocal(spec: LagrangianSpec, domain: Domain, w, rule: Optional[QuadratureRule] = None,
                    estimate_error: bool = False) -> EnergyReport:
    """E_N(w) = 1/2 int_Q G_N(x, y, w(x), w(y)), split into its quadrature blocks.

    Args:
        spec: The Lagrangian.
        domain: The domain Omega.
        w: Function on the mesh (a DiscreteFunction or compatible callable).
        rule: Quadrature rule (defaults to ``QuadratureRule()``).
        estimate_error: Also evaluate with the companion rule and report the gap.

    Returns:
        EnergyReport in the "half" convention.

    Raises:
        TailUnboundedError: If w grows too fast for the tail correction.
        NonfiniteIntegrandError: If the density or the value is not finite.
    """
    rule, parts = _nonlocal_parts(spec, domain, w, rule)
    value = _total(parts)
    if not math.isfinite(value):
        raise NonfiniteIntegrandError(f"Energy of {spec.id} is not finite: {value}")
    error = 0.0
    if estimate_error:
        _, other = _nonlocal_parts(spec, domain, w, rule.companion())
        error = abs(_total(other) - value)
    logger.debug(f"E_N[{spec.id}] = {value:.12g} ({parts})")
    return EnergyReport(
        value, parts, domain.describe(), rule.describe(), "half", error,
        rule.uses_exterior and rule.tail == "truncate",
    )


def node_gradient(domain: Domain, values: np.ndarray) -> np.ndarray:
    """Gradient of node values: central differences inside, one-sided at the boundary."""
    if domain.dim == 1:
        return np.gradient(values, domain.axis_edges(0), edge_order=1).reshape(-1, 1)
    grid = np.asarray(values).reshape(domain.node_shape)
    gx, gy = np.gradient(grid, domain.axis_edges(0), domain.axis_edges(1), edge_order=1)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def energy_local(local: LocalLagrangian, domain: Domain, w) -> EnergyReport:
    """E_L(w) = int_Omega G_L(x, w, grad w) by the trapezoid rule on the nodes."""
    nodes = domain.node_points()
    values = w(nodes)
    density = local.G(nodes, values, node_gradient(domain, values))
    value = float(np.dot(density, node_weights(domain)))
    if not math.isfinite(value):
        raise NonfiniteIntegrandError(f"Local energy ({local.kind}) is not finite")
    return EnergyReport(value, {"local": value}, domain.describe(), {"local": "trapezoid"})


def energy_mixed(spec: Optional[LagrangianSpec], domain: Domain, w,
                 rule: Optional[QuadratureRule] = None,
                 local: Optional[LocalLagrangian] = None) -> EnergyReport:
    """E_M = E_N + E_L; either part may be absent."""
    local = local or (spec.local_part if spec is not None else None)
    if spec is None and local is None:
        raise InvalidParameterError("Mixed energy needs a nonlocal or a local part")
    breakdown: Dict[str, float] = {}
    rule_desc: Dict[str, Any] = {}
    error = 0.0
    if spec is not None:
        nonlocal_report = energy_nonlocal(spec, domain, w, rule)
        breakdown.update(nonlocal_report.breakdown)
        rule_desc = nonlocal_report.rule
        error = nonlocal_report.error_estimate
    breakdown["local"] = energy_local(local, domain, w).value if local is not None else 0.0
    return EnergyReport(_total(breakdown), breakdown, domain.describe(), rule_desc, "half", error)


def energy_fractional_semilinear(s: float, reaction: Optional[Reaction], domain: Domain, w,
                                 rule: Optional[QuadratureRule] = None,
                                 c: Optional[float] = None, estimate_error: bool = False) -> EnergyReport:
    """E_{s,F}(w) = c/4 int_Q |w(x) - w(y)|^2 |x - y|^(-n-2s) - int_Omega F(w).

    Equal to 2 E_N for the quadratic family with reaction; the report carries
    the "c/4" convention tag.
    """
    spec = fractional_semilinear_spec(s, reaction, domain.dim, c)
    half = energy_nonlocal(spec, domain, w, rule, estimate_error)
    breakdown = {k: 2.0 * v for k, v in half.breakdown.items()}
    return EnergyReport(_total(breakdown), breakdown, half.grid, half.rule, "c/4",
                        2.0 * half.error_estimate, half.tail_truncated)


def fractional_semilinear_spec(s: float, reaction: Optional[Reaction], n: int = 1,
                               c: Optional[float] = None) -> LagrangianSpec:
    """The quadratic spec whose E_N is half of E_{s,F}."""
    params: Dict[str, Any] = {"n": n, "s": s, "p": 2.0, "c": c}
    if reaction is not None:
        params["reaction"] = reaction
    return make_lagrangian("fractional-p-dirichlet-with-reaction", params)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def _operator_tail_ok(spec: LagrangianSpec, w) -> bool:
    if spec.restricted or spec.decay is None:
        return True
    if getattr(w, "affine_tail", False) and spec.growth_power == 2.0:
        return True
    return max(spec.growth_power - 1.0, 0.0) * getattr(w, "growth", 0.0) < spec.decay


def _kink_breaks(w, p: np.ndarray) -> List[float]:
    radii = []
    for k in getattr(w, "kinks", ()) or ():
        d = float(np.linalg.norm(np.atleast_1d(k) - p))
        if d > 0:
            radii.append(d)
    return radii


def _gradient(func: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, h: float) -> np.ndarray:
    cols = []
    for k in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[k] = h
        cols.append((func(pts + e) - func(pts - e)) / (2.0 * h))
    return np.stack(cols, axis=1)


def _local_operator(local: LocalLagrangian, func: Callable[[np.ndarray], np.ndarray],
                    pts: np.ndarray, h: float) -> np.ndarray:
    """L_L(v) = -div(dG_L/dq) + dG_L/dlambda by nested centered differences."""
    div = np.zeros(pts.shape[0])
    for k in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[k] = h
        plus, minus = pts + e, pts - e
        flux_p = local.dG_q(plus, func(plus), _gradient(func, plus, h))[:, k]
        flux_m = local.dG_q(minus, func(minus), _gradient(func, minus, h))[:, k]
        div += (flux_p - flux_m) / (2.0 * h)
    return -div + local.dG_lam(pts, func(pts), _gradient(func, pts, h))


def euler_lagrange(spec: LagrangianSpec, domain: Domain, w, x,
                   local: Optional[LocalLagrangian] = None) -> float:
    """L_N(w)(x) = int dG_N/da (x, y, w(x), w(y)) dy, plus L_L(w)(x) for mixed specs.

    Raises:
        InvalidParameterError: If x is outside Omega.
        InsufficientSmoothnessError: If the family is singular and w has no C2 patch at x.
        TailUnboundedError: If the exterior data grows too fast.
    """
    n = domain.dim
    p = as_points(x, n)[0]
    if not domain.contains(p[None, :])[0]:
        raise InvalidParameterError(f"x={p.tolist()} is not in Omega")
    if spec.singular and not w.smooth_at(p):
        raise InsufficientSmoothnessError(f"{spec.id} needs w to be C2 near x={p.tolist()}")
    if not _operator_tail_ok(spec, w):
        raise TailUnboundedError(f"{spec.id}: exterior growth {w.growth} is too fast at x={p.tolist()}")
    wx = float(w(p[None, :])[0])

    def density(y: np.ndarray) -> np.ndarray:
        xs = np.broadcast_to(p, y.shape)
        return spec.pair_partial_a(xs, y, np.full(y.shape[0], wx), w(y), domain)

    breaks = _kink_breaks(w, p)
    if spec.support is not None:
        breaks.append(float(spec.support))
    value = radial_integral(
        p, density, domain, decay=spec.decay, breakpoints=breaks,
        radial_exponent=spec.radial_exponent if spec.singular else n - 1.0,
    )
    if spec.has_reaction:
        value += spec.reaction_coeff * float(spec.reaction_slope(np.array([wx]), p[None, :])[0])
    local = local or spec.local_part
    if local is not None:
        value += float(_local_operator(local, w, p[None, :], LOCAL_STEP * domain.diam)[0])
    return float(value)


def euler_lagrange_frame(spec: LagrangianSpec, domain: Domain, w,
                         points: Optional[np.ndarray] = None) -> pd.DataFrame:
    """L_N(w) on the cell centres of Omega (or given points) as a table."""
    pts = domain.cell_centers() if points is None else as_points(points, domain.dim)
    values = [euler_lagrange(spec, domain, w, p) for p in pts]
    frame = pd.DataFrame({"point": np.arange(pts.shape[0])})
    for k, name in zip(range(domain.dim), ("x", "y")):
        frame[name] = pts[:, k]
    frame["L"] = values
    return frame


def neumann_operator(spec: LagrangianSpec, domain: Domain, w, x,
                     npts: int = NEUMANN_POINTS) -> float:
    """N_N(w)(x) = int_Omega dG_N/da (x, y, w(x), w(y)) dy for x outside Omega.

    Raises:
        InvalidParameterError: If x is inside Omega or beyond the exterior box.
    """
    n = domain.dim
    p = as_points(x, n)[0]
    if domain.contains(p[None, :], closed=False)[0]:
        raise InvalidParameterError(f"x={p.tolist()} lies in Omega")
    if np.max(np.abs(p - domain.center)) > domain.r_ext:
        raise InvalidParameterError(f"x={p.tolist()} lies beyond the exterior box")
    pts, wts = cell_rule(domain, npts)
    wx = float(w(p[None, :])[0])
    xs = np.broadcast_to(p, pts.shape)
    dens = spec.pair_partial_a(xs, pts, np.full(pts.shape[0], wx), w(pts), domain)
    return float(np.dot(dens, wts))


def first_variation_check(spec: LagrangianSpec, domain: Domain, u: DiscreteFunction,
                          eta: Callable[[np.ndarray], np.ndarray],
                          rule: Optional[QuadratureRule] = None,
                          step: float = 1e-4, rtol: float = 1e-4) -> Certificate:
    """Compare d/de E_N(u + e eta) at 0 with int_Omega L_N(u) eta + int_{Omega^c} N_N(u) eta.

    The derivative is a central difference of the energy; the right-hand side
    uses the energy's own point table.
    """
    def shifted(eps: float) -> DiscreteFunction:
        return DiscreteFunction.from_callable(
            domain, lambda q: u(q) + eps * np.asarray(eta(q), dtype=float),
            growth=u.growth, affine_tail=u.affine_tail, kinks=u.kinks, smooth=u.smooth,
        )

    rule, disc = _prepare(spec, domain, rule, (u,))
    lhs = (energy_nonlocal(spec, domain, shifted(step), rule).value
           - energy_nonlocal(spec, domain, shifted(-step), rule).value) / (2.0 * step)

    terms = []
    inner = disc.slices["interior"]
    eta_in = np.asarray(eta(disc.points[inner]), dtype=float)
    for p, wt, e in zip(disc.points[inner], disc.weights[inner], eta_in):
        if e != 0.0:
            terms.append(wt * e * euler_lagrange(spec, domain, u, p))
    for name in ("exterior", "tail"):
        sl = disc.slices[name]
        eta_out = np.asarray(eta(disc.points[sl]), dtype=float) if sl.stop > sl.start else np.empty(0)
        for p, wt, e in zip(disc.points[sl], disc.weights[sl], eta_out):
            if e != 0.0:
                terms.append(wt * e * neumann_operator(spec, domain, u, p))
    rhs = math.fsum(terms)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    rel = abs(lhs - rhs) / scale
    ok = rel <= rtol
    logger.info(f"First variation of {spec.id}: energy {lhs:.10g}, operators {rhs:.10g}")
    return Certificate(
        "first-variation", Verdict.PASS if ok else Verdict.FAIL, rtol - rel, rtol,
        counterexample=None if ok else {"energy_derivative": lhs, "operator_pairing": rhs},
        details={"energy_derivative": lhs, "operator_pairing": rhs, "relative_gap": rel},
    )


# ---------------------------------------------------------------------------
# Calibrations
# ---------------------------------------------------------------------------

def _leaf_parameters(fld: Field, t0: float, disc: Discretization, values: np.ndarray,
                     anchor: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[Dict[str, Any]]]:
    """t(x, w(x)) at every point of the table; points on the anchor leaf get t0 exactly.

    Interior points outside the field abort; exterior points are clamped and recorded.
    """
    t = np.full(disc.size, float(t0))
    moved = values != anchor
    inner = np.zeros(disc.size, dtype=bool)
    inner[disc.slices["interior"]] = True
    inner[disc.slices["companion"]] = True
    incidents: List[Dict[str, Any]] = []
    idx = np.flatnonzero(moved & inner)
    if idx.size:
        try:
            t[idx] = leaf_parameter(fld, disc.points[idx], values[idx])
        except OutOfRegionError as e:
            logger.error(f"Error inverting the field: {str(e)}")
            raise
    idx = np.flatnonzero(moved & ~inner)
    if idx.size:
        pts = disc.points[idx]
        lo, hi = fld.bounds(pts)
        outside = (values[idx] < lo) | (values[idx] > hi)
        for k in np.flatnonzero(outside)[:10]:
            incidents.append({"x": pts[k].tolist(), "value": float(values[idx][k])})
        t[idx] = leaf_parameter(fld, pts, values[idx], clamp=True)
    return t, moved, incidents


def _inner_nodes(fld: Field, t0: float, disc: Discretization, values: np.ndarray,
                 anchor: np.ndarray, t: np.ndarray, moved: np.ndarray,
                 nodes: int, inner: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per point: first arguments a_k, leaf parameters t_k and weights of the inner integral."""
    xi, wi = gauss_legendre(nodes)
    A = np.zeros((disc.size, nodes))
    T = np.full((disc.size, nodes), float(t0))
    W = np.zeros((disc.size, nodes))
    idx = np.flatnonzero(moved)
    if idx.size == 0:
        return A, T, W
    pts = np.repeat(disc.points[idx], nodes, axis=0)
    if inner == "t":
        half = 0.5 * (t[idx] - t0)
        grid = (0.5 * (t[idx] + t0))[:, None] + half[:, None] * xi[None, :]
        flat = grid.ravel()
        T[idx] = grid
        A[idx] = fld.leaf(flat, pts).reshape(-1, nodes)
        W[idx] = half[:, None] * wi[None, :] * fld.dt(flat, pts).reshape(-1, nodes)
    else:
        half = 0.5 * (values[idx] - anchor[idx])
        grid = (0.5 * (values[idx] + anchor[idx]))[:, None] + half[:, None] * xi[None, :]
        A[idx] = grid
        T[idx] = leaf_parameter(fld, pts, grid.ravel(), clamp=True).reshape(-1, nodes)
        W[idx] = half[:, None] * wi[None, :]
    return A, T, W


def _defining_term(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain, w,
                   rule: QuadratureRule, inner: str):
    rule, disc = _prepare(spec, domain, rule, (w,))
    values = w(disc.points)
    anchor = fld.leaf(t0, disc.points)
    t, moved, incidents = _leaf_parameters(fld, t0, disc, values, anchor)
    A, T, W = _inner_nodes(fld, t0, disc, values, anchor, t, moved, rule.t_nodes, inner)

    def integrand(block):
        out = np.zeros(block.size)
        rows = moved[block.ix]
        if not np.any(rows):
            return out
        ix, x, y = block.ix[rows], block.x[rows], block.y[rows]
        acc = np.zeros(ix.size)
        for k in range(rule.t_nodes):
            b = fld.leaf(T[ix, k], y)
            acc += W[ix, k] * spec.pair_partial_a(x, y, A[ix, k], b, domain)
        out[rows] = acc
        return out

    kinds = _kinds(spec)
    parts = pair_sum(disc, integrand, kinds)
    ext = np.zeros(disc.size, dtype=bool)
    ext[disc.slices["exterior"]] = True
    ext[disc.slices["tail"]] = True
    if np.any(moved & ext) and not spec.restricted:
        back = pair_sum(disc, integrand, ("cross", "tail"), reverse=True)
        parts = {k: math.fsum((v, back.get(k, 0.0))) for k, v in parts.items()}
    pair_term = math.fsum(parts.values())

    reaction = 0.0
    if spec.has_reaction:
        sl = disc.slices["interior"]
        pts = disc.points[sl]
        gap = spec.reaction_at(values[sl], pts) - spec.reaction_at(anchor[sl], pts)
        reaction = spec.reaction_coeff * point_sum(disc, gap)

    inner_moved = moved[disc.slices["interior"]]
    t_in = t[disc.slices["interior"]]
    stats = {
        "path": inner,
        "nodes": rule.t_nodes,
        "moved_points": int(np.count_nonzero(inner_moved)),
        "max_t_gap": float(np.max(np.abs(t_in - t0), initial=0.0)),
        "exterior_moved": int(np.count_nonzero(moved & ext)),
    }
    return rule, pair_term, reaction, stats, incidents


def calibration_defining(spec: LagrangianSpec, fld: Field, t0: float, domain: Domain, w,
                         rule: Optional[QuadratureRule] = None, inner: str = "t",
                         estimate_error: bool = False) -> CalibrationReport:
    """C_N(w) = E_N(u^{t0}) + int_Q int_{u^{t0}(x)}^{w(x)} dG_N/da (x, y, lam, u^{t(x, lam)}(y)).

    The inner integral runs in the leaf parameter, with dlam = dt u^t(x) dt
    (``inner="t"``), or directly in lambda with the leaf parameter solved at
    every node (``inner="lambda"``). The reaction part of the inner integral is
    kappa (F(w) - F(u^{t0})). E_N(u^{t0}) uses the same rule as
    ``energy_nonlocal``, so w = u^{t0} returns that energy exactly.

    Raises:
        OutOfRegionError: If w(x) leaves the region covered by the field at some x in Omega.
        TailUnboundedError: As ``energy_nonlocal``.
    """
    if inner not in INNER_PATHS:
        raise InvalidParameterError(f"Unsupported inner path: {inner}")
    if not fld.t_min <= t0 <= fld.t_max:
        raise InvalidParameterError(f"t0 = {t0} is outside [{fld.t_min}, {fld.t_max}]")
    rule = rule or QuadratureRule()
    anchor_fn = fld.leaf_function(t0, domain)
    base = energy_nonlocal(spec, domain, anchor_fn, rule, estimate_error=estimate_error)
    eff_rule, pair_term, reaction, stats, incidents = _defining_term(spec, fld, t0, domain, w, rule, inner)
    breakdown = {"anchor_energy": base.value, "inner_pair": pair_term, "inner_reaction": reaction}
    error = 0.0
    if estimate_error and stats["moved_points"]:
        _, other, _, _, _ = _defining_term(spec, fld, t0, domain, w, rule.companion(), inner)
        coarse_t = replace(rule, t_nodes=max(1, rule.t_nodes // 2))
        _, coarse, _, _, _ = _defining_term(spec, fld, t0, domain, w, coarse_t, inner)
        error = base.error_estimate + abs(other - pair_term) + abs(coarse - pair_term)
    elif estimate_error:
        error = base.error_estimate
    value = _total(breakdown)
    logger.debug(f"C_N[{spec.id}] = {value:.12g} at t0={t0} ({stats})")
    return CalibrationReport(
        value, float(t0), "defining" if inner == "t" else "lambda", breakdown, stats,
        incidents, error, value == -math.inf,
    )


def _alternative_terms(spec: LagrangianSpec, fld: Field, domain: Domain, w,
                       rule: QuadratureRule, t0: Optional[float]):
    rule, disc = _prepare(spec, domain, rule, (w,))
    values = w(disc.points)
    if t0 is None:
        hint = 0.5 * (fld.t_min + fld.t_max)
        anchor = np.full(disc.size, np.nan)
    else:
        hint = float(t0)
        anchor = fld.leaf(hint, disc.points)
    t, _, incidents = _leaf_parameters(fld, hint, disc, values, anchor)
    xi, wi = gauss_legendre(rule.t_nodes)

    def first(block):
        b = fld.leaf(t[block.ix], block.y)
        return spec.pair_value(block.x, block.y, values[block.ix], b, domain)

    def second(block):
        out = np.zeros(block.size)
        tx, ty = t[block.ix], t[block.iy]
        rows = tx != ty
        if not np.any(rows):
            return out
        x, y = block.x[rows], block.y[rows]
        half = 0.5 * (ty[rows] - tx[rows])
        mid = 0.5 * (ty[rows] + tx[rows])
        acc = np.zeros(x.shape[0])
        for k in range(rule.t_nodes):
            tk = mid + half * xi[k]
            a, b = fld.leaf(tk, x), fld.leaf(tk, y)
            acc += wi[k] * half * spec.pair_partial_b(x, y, a, b, domain) * fld.dt(tk, y)
        out[rows] = acc
        return out

    kinds = _kinds(spec)
    terms = {}
    for name, fn in (("first", first), ("second", second)):
        parts = pair_sum(disc, fn, kinds)
        if not spec.restricted:
            back = pair_sum(disc, fn, ("cross", "tail"), reverse=True)
            parts = {k: math.fsum((v, back.get(k, 0.0))) for k, v in parts.items()}
        terms[name] = 0.5 * math.fsum(parts.values())

    if spec.has_reaction:
        sl = disc.slices["interior"]
        pts, wts = disc.points[sl], disc.weights[sl]
        Fw = spec.reaction_at(values[sl], pts)
        scale = 0.5 * spec.reaction_coeff / domain.measure
        first_r, second_r = [], []
        for i in range(pts.shape[0]):
            Fu = spec.reaction_at(fld.leaf(t[sl][i], pts), pts)
            first_r.append(wts[i] * float(np.dot(wts, Fw[i] + Fu)))
            second_r.append(wts[i] * float(np.dot(wts, Fw - Fu)))
        terms["reaction_first"] = scale * math.fsum(first_r)
        terms["reaction_second"] = scale * math.fsum(second_r)
    else:
        terms["reaction_first"] = terms["reaction_second"] = 0.0

    t_in = t[disc.slices["interior"]]
    stats = {"path": "alternative", "nodes": rule.t_nodes,
             "t_range": [float(np.min(t_in)), float(np.max(t_in))]}
    return terms, stats, incidents


def calibration_alternative(spec: LagrangianSpec, fld: Field, domain: Domain, w,
                            rule: Optional[QuadratureRule] = None, t0: Optional[float] = None,
                            estimate_error: bool = False) -> CalibrationReport:
    """C_N(w) = 1/2 int_Q G_N(x, y, w(x), u^{t_x}(y)) + 1/2 int_Q int_{t_x}^{t_y} dG_N/db ... dt.

    Here t_x = t(x, w(x)). ``t0`` is an optional anchor hint: points where w
    equals u^{t0} get t0 exactly instead of a bisection root.
    """
    rule = rule or QuadratureRule()
    terms, stats, incidents = _alternative_terms(spec, fld, domain, w, rule, t0)
    value = _total(terms)
    error = 0.0
    if estimate_error:
        other, _, _ = _alternative_terms(spec, fld, domain, w, rule.companion(), t0)
        coarse, _, _ = _alternative_terms(
            spec, fld, domain, w, replace(rule, t_nodes=max(1, rule.t_nodes // 2)), t0)
        error = abs(_total(other) - value) + abs(_total(coarse) - value)
    logger.debug(f"C_N[{spec.id}] alternative = {value:.12g}")
    return CalibrationReport(value, t0, "alternative", terms, stats, incidents, error,
                             value == -math.inf)


def _trapezoid(edges: np.ndarray) -> np.ndarray:
    h = np.diff(edges)
    w = np.zeros(edges.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def boundary_faces(domain: Domain) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary nodes of Omega with outward normals and face weights (one entry per face)."""
    lo, hi = domain.lower, domain.upper
    if domain.dim == 1:
        return (np.array([[lo[0]], [hi[0]]]), np.array([[-1.0], [1.0]]), np.ones(2))
    pts, normals, weights = [], [], []
    for axis in range(2):
        other = 1 - axis
        edges = domain.axis_edges(other)
        for side, bound in ((-1.0, lo[axis]), (1.0, hi[axis])):
            face = np.empty((edges.size, 2))
            face[:, axis] = bound
            face[:, other] = edges
            nu = np.zeros((edges.size, 2))
            nu[:, axis] = side
            pts.append(face)
            normals.append(nu)
            weights.append(_trapezoid(edges))
    return np.concatenate(pts), np.concatenate(normals), np.concatenate(weights)


def _node_parameters(fld: Field, t0: float, pts: np.ndarray, values: np.ndarray):
    anchor = fld.leaf(t0, pts)
    moved = values != anchor
    t = np.full(pts.shape[0], float(t0))
    if np.any(moved):
        try:
            t[moved] = leaf_parameter(fld, pts[moved], values[moved])
        except OutOfRegionError as e:
            logger.error(f"Error inverting the field: {str(e)}")
            raise
    return t, moved


def _t_integral(fld: Field, t0: float, pts: np.ndarray, t: np.ndarray, nodes: int,
                density: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Per point: int_{t0}^{t} density(t', x) dt u^{t'}(x) dt' by Gauss-Legendre."""
    xi, wi = gauss_legendre(nodes)
    half = 0.5 * (t - t0)
    mid = 0.5 * (t + t0)
    out = np.zeros(pts.shape[0])
    for k in range(nodes):
        tk = mid + half * xi[k]
        out += wi[k] * half * density(tk, pts) * fld.dt(tk, pts)
    return out


def calibration_local(local: LocalLagrangian, fld: Field, t0: float, domain: Domain, w,
                      nodes: Optional[int] = None) -> CalibrationReport:
    """C_L(w) in split form: E_L(u^{t0}) + interior lambda-integral of L_L + boundary flux term.

    Raises:
        OutOfRegionError: If w leaves the field at a node.
    """
    nodes = nodes or QuadratureRule().t_nodes
    h = LOCAL_STEP * domain.diam
    base = energy_local(local, domain, fld.leaf_function(t0, domain)).value

    pts = domain.node_points()
    t, moved = _node_parameters(fld, t0, pts, w(pts))
    interior = 0.0
    if np.any(moved):
        def operator(tk, x):
            return _local_operator(local, lambda q: fld.leaf(tk, q), x, h)

        per_node = np.zeros(pts.shape[0])
        per_node[moved] = _t_integral(fld, t0, pts[moved], t[moved], nodes, operator)
        interior = float(np.dot(per_node, node_weights(domain)))

    faces, normals, fw = boundary_faces(domain)
    t_b, moved_b = _node_parameters(fld, t0, faces, w(faces))
    boundary = 0.0
    if np.any(moved_b):
        nu = normals[moved_b]

        def flux(tk, x):
            func = lambda q: fld.leaf(tk, q)
            return np.sum(local.dG_q(x, func(x), _gradient(func, x, h)) * nu, axis=1)

        boundary = float(np.dot(_t_integral(fld, t0, faces[moved_b], t_b[moved_b], nodes, flux),
                                fw[moved_b]))
    breakdown = {"anchor_energy": base, "interior": interior, "boundary": boundary}
    stats = {"path": "local", "nodes": nodes, "moved_nodes": int(np.count_nonzero(moved)),
             "moved_boundary": int(np.count_nonzero(moved_b))}
    return CalibrationReport(_total(breakdown), float(t0), "local", breakdown, stats)


def calibration_local_direct(local: LocalLagrangian, fld: Field, domain: Domain, w,
                             t0: Optional[float] = None) -> CalibrationReport:
    """C_L(w) = int_Omega G_L(x, w, grad u^t) + dG_L/dq (x, w, grad u^t) . (grad w - grad u^t), t = t(x, w(x))."""
    h = LOCAL_STEP * domain.diam
    pts = domain.node_points()
    values = w(pts)
    if t0 is None:
        t = leaf_parameter(fld, pts, values)
    else:
        t, _ = _node_parameters(fld, t0, pts, values)
    leaf = lambda q: fld.leaf(t, q)
    q_leaf = _gradient(leaf, pts, h)
    q_w = node_gradient(domain, values)
    density = local.G(pts, values, q_leaf) + np.sum(local.dG_q(pts, values, q_leaf) * (q_w - q_leaf), axis=1)
    value = float(np.dot(density, node_weights(domain)))
    return CalibrationReport(value, t0, "local-direct", {"direct": value},
                             {"path": "local-direct"})


def calibration_mixed(spec: Optional[LagrangianSpec], fld: Field, t0: float, domain: Domain, w,
                      rule: Optional[QuadratureRule] = None,
                      local: Optional[LocalLagrangian] = None) -> CalibrationReport:
    """C_M = C_N + C_L with both breakdowns kept under "nonlocal." and "local." keys."""
    local = local or (spec.local_part if spec is not None else None)
    if spec is None and local is None:
        raise InvalidParameterError("Mixed calibration needs a nonlocal or a local part")
    breakdown: Dict[str, float] = {}
    inner: Dict[str, Any] = {}
    incidents: List[Dict[str, Any]] = []
    if spec is not None:
        part = calibration_defining(spec, fld, t0, domain, w, rule)
        breakdown.update({f"nonlocal.{k}": v for k, v in part.breakdown.items()})
        inner["nonlocal"] = part.inner
        incidents = part.out_of_region
    if local is not None:
        part = calibration_local(local, fld, t0, domain, w)
        breakdown.update({f"local.{k}": v for k, v in part.breakdown.items()})
        inner["local"] = part.inner
    value = _total(breakdown)
    return CalibrationReport(value, float(t0), "mixed", breakdown, inner, incidents,
                             minus_infinity=value == -math.inf)


def blend_competitor(w: DiscreteFunction, anchor: DiscreteFunction, eps: float) -> DiscreteFunction:
    """(1 - eps) w + eps u^{t0}: pulls a competitor touching the field's boundary inside it."""
    if not 0.0 <= eps <= 1.0:
        raise InvalidParameterError(f"Blend weight must lie in [0, 1], got {eps}")
    return w.with_formula(lambda p: (1.0 - eps) * w(p) + eps * anchor(p))
