"""
Weak-field energy comparison, viscosity tests and related oracles.

This module provides:
- energy_comparison_check: E_{s,F}(u^T) <= E_{s,F}(u) + the integral of the
  operator over the region swept by the weak field
- viscosity_supersolution_test / viscosity_subsolution_test with quadratic probes
- extension_value, probe_value and corner_probe_value (probe operator, dense and closed-form oracles)
- one_sided_minimizer_check and one_sided_competitors
- barron_jensen_oracle: int (u - v) L(v) <= E(u) - E(v) for convex specs
- freeze_lower_order: lower-order terms frozen into a linear reaction
- sliding_subsolution_experiment: a strict-subsolution probe slid under u

All operators here use the c/4 convention: (-Delta)^s w - F'(w), which is
2 L_N(w) for the quadratic family with reaction.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from core.certificate import Certificate, Verdict, combine
from core.errors import (
    InsufficientSmoothnessError,
    InvalidParameterError,
    NoConvergenceError,
    NotConvexError,
    TailUnboundedError,
    WitnessMissingError,
)
from core.field import DiscreteFunction, WeakField, max_sliding_height, sliding_weak_field
from core.functional import energy_fractional_semilinear, energy_mixed, euler_lagrange
from core.lagrangian import LagrangianSpec, check_convexity, make_lagrangian, make_reaction
from core.mesh import (
    Domain,
    as_points,
    cell_rule,
    extrapolate_epsilon,
    fractional_constant,
    fractional_laplacian_pv,
    gauss_on,
    radial_integral,
    refine,
    truncated_fractional_laplacian,
)
from core.verify import bump_function

logger = logging.getLogger(__name__)

SIDES = ("below", "above")
WITNESS_NODES = 8
INCREMENT_NODES = 16


def _semilinear_parts(spec: LagrangianSpec) -> Tuple[float, float, Callable]:
    """(s, c, F') of a quadratic fractional spec; F' is zero without a reaction."""
    if spec.kernel is None or spec.kernel.kind != "fractional" or float(spec.params.get("p", 0.0)) != 2.0:
        raise InvalidParameterError(f"{spec.id} is not a quadratic fractional Lagrangian")
    if spec.has_reaction:
        return float(spec.params["s"]), float(spec.params["c"]), spec.reaction.dF
    return float(spec.params["s"]), float(spec.params["c"]), lambda a, x: np.zeros_like(a)


def _semilinear_energy(spec: LagrangianSpec, domain: Domain, w, rule=None):
    s, c, _ = _semilinear_parts(spec)
    return energy_fractional_semilinear(s, spec.reaction if spec.has_reaction else None,
                                        domain, w, rule, c=c, estimate_error=True)


def _directions(n: int, angles: int = config.RADIAL_ANGLES) -> List[Tuple[np.ndarray, float]]:
    if n == 1:
        return [(np.array([1.0]), 1.0)]
    th, wth = gauss_on(0.0, math.pi, angles)
    return [(np.array([math.cos(t), math.sin(t)]), w) for t, w in zip(th, wth)]


def _witness_inner(psi: Callable[[np.ndarray], np.ndarray], p: np.ndarray, s: float, c: float,
                   eps: float) -> float:
    """c int_{|z| < eps} (psi(x) - psi(x + z)) |z|^(-n-2s) dz for a C2 witness psi."""
    v, wv = gauss_on(0.0, 1.0, WITNESS_NODES)
    z = eps * v ** (1.0 / (2.0 - 2.0 * s))
    scale = eps ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    center = float(psi(p[None, :])[0])
    total = 0.0
    for e, w_dir in _directions(p.size):
        plus = p[None, :] + z[:, None] * e[None, :]
        minus = p[None, :] - z[:, None] * e[None, :]
        curvature = (psi(plus) + psi(minus) - 2.0 * center) / (z * z)
        total += w_dir * scale * float(np.dot(curvature, wv))
    return -c * total


# ---------------------------------------------------------------------------
# Energy comparison on weak fields
# ---------------------------------------------------------------------------

def _sliding_1d(wf: WeakField) -> bool:
    return wf.n == 1 and wf.phi is not None and wf.x0 is not None


def _graded_on(a: float, b: float, npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss rule on [a, b] through x = a + (b - a)(3v^2 - 2v^3), dense at both ends."""
    v, w = gauss_on(0.0, 1.0, npts)
    x = a + (b - a) * v * v * (3.0 - 2.0 * v)
    return x, 6.0 * v * (1.0 - v) * (b - a) * w


def _height_rule(T: float, npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss rule on [0, T] through t = T v^2; active sets open like sqrt(t)."""
    v, w = gauss_on(0.0, 1.0, npts)
    return T * v * v, 2.0 * T * v * w


def _active_pieces(wf: WeakField, t: float) -> List[Tuple[float, float]]:
    return [(a, b) for a, b in wf.active_intervals(t) if b > a]


def _active_rule(wf: WeakField, t: float, npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature points and weights on the active set {u^t > u}."""
    if _sliding_1d(wf):
        pts, wts = [], []
        for a, b in _active_pieces(wf, t):
            x, w = _graded_on(a, b, npts)
            pts.append(x)
            wts.append(w)
        if not pts:
            return np.empty((0, 1)), np.empty(0)
        return np.concatenate(pts).reshape(-1, 1), np.concatenate(wts)
    grid, _ = wf.scan_points()
    act = wf.active(t, grid)
    if not np.any(act):
        return np.empty((0, wf.n)), np.empty(0)
    spacing = np.ptp(grid, axis=0) / (round(grid.shape[0] ** (1.0 / wf.n)) - 1)
    lo = grid[act].min(axis=0) - spacing
    hi = grid[act].max(axis=0) + spacing
    axes = [gauss_on(a, b, npts) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*[x for x, _ in axes], indexing="ij")
    weights = np.meshgrid(*[w for _, w in axes], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    w = np.prod(np.stack([m.ravel() for m in weights], axis=1), axis=1)
    return pts, np.where(wf.active(t, pts), w, 0.0)


def _leaf_with_kinks(wf: WeakField, t: float) -> DiscreteFunction:
    leaf = wf.leaf_function(t)
    if _sliding_1d(wf):
        ends = tuple(e for piece in wf.active_intervals(t) for e in piece)
        return replace(leaf, kinks=tuple(leaf.kinks) + ends)
    return leaf


def _active_samples(spec: LagrangianSpec, wf: WeakField, eps_values: Sequence[float],
                    t_nodes: int, x_nodes: int) -> List[Dict[str, Any]]:
    """(-Delta)^s u^t(x) - F'(u^t(x)) at quadrature points of the swept region, per epsilon.

    The part within epsilon of x is taken from the witness touching u^t from
    below at x; the rest is the truncated operator of the leaf itself. The
    limit value of each row ("operator") is the principal value of the leaf
    when its kinks are known (1D sliding fields) and the extrapolation in
    epsilon otherwise.
    """
    s, c, f = _semilinear_parts(spec)
    if wf.T <= 0.0:
        return []
    exact = _sliding_1d(wf)
    rows = []
    tv, tw = _height_rule(wf.T, t_nodes)
    for t, wt in zip(tv, tw):
        pts, wx = _active_rule(wf, float(t), x_nodes)
        if pts.shape[0] == 0:
            continue
        leaf = _leaf_with_kinks(wf, float(t))
        psi = lambda q, t=float(t): wf.witness(t, q)
        lam = wf.leaf(float(t), pts)
        reaction = f(lam, pts)
        speed = wf.dt(float(t), pts)
        for p, weight, r, v in zip(pts, wx, reaction, speed):
            if weight == 0.0 or v == 0.0:
                continue
            values = [float(truncated_fractional_laplacian(leaf, p, s, eps, c)
                            + _witness_inner(psi, p, s, c, eps) - r) for eps in eps_values]
            if exact:
                limit = fractional_laplacian_pv(leaf, p, s, c) - r
            else:
                limit = extrapolate_epsilon(eps_values, values, 2.0 - 2.0 * s)
            rows.append({"t": float(t), "x": p.tolist(), "weight": float(wt * weight * v),
                         "values": values, "operator": float(limit)})
    logger.debug(f"Evaluated the leaf operator at {len(rows)} points of the swept region")
    return rows


def _swept_integral(rows: List[Dict[str, Any]], eps_values: Sequence[float]) -> List[float]:
    return [math.fsum(r["weight"] * r["values"][k] for r in rows) for k in range(len(eps_values))]


def _swept_limit(rows: List[Dict[str, Any]]) -> float:
    return math.fsum(r["weight"] * r["operator"] for r in rows)


def _diverges_down(trend: Sequence[float]) -> bool:
    diffs = np.diff(np.asarray(trend, dtype=float))
    if diffs.size < 2:
        return False
    return bool(np.all(diffs < 0.0) and np.all(np.abs(diffs[1:]) >= np.abs(diffs[:-1])))


def _sliding_increment(spec: LagrangianSpec, wf: WeakField, nodes: int) -> float:
    """E_{s,F}(u^T) - E_{s,F}(u) for a 1D sliding field, from the active set alone.

    With eta = u^T - u supported on A = {u^T > u},
    E(u + eta) - E(u) = c/4 [eta]^2 + int_A eta (-Delta)^s u - int_A (F(u + eta) - F(u)),
    where [eta]^2 splits into pairs inside A and the closed-form kernel mass of R minus A.

    Raises:
        InsufficientSmoothnessError: If u has no C2 patch on A.
        TailUnboundedError: If the operator of u diverges.
    """
    s, c, _ = _semilinear_parts(spec)
    u = wf.base
    pieces = _active_pieces(wf, wf.T)

    def eta(x: np.ndarray) -> np.ndarray:
        q = np.asarray(x, dtype=float).reshape(-1, 1)
        return np.maximum(wf.phi(q) + wf.T - u(q), 0.0)

    v, wv = gauss_on(0.0, 1.0, nodes)
    power = 1.0 / (2.0 - 2.0 * s)
    rules = [_graded_on(a, b, nodes) for a, b in pieces]
    square, cross, reaction = [], [], []
    for j, ((a, b), (xs, wx)) in enumerate(zip(pieces, rules)):
        ex = eta(xs)
        # pairs y < x of the same piece, with y = x - (x - a) v^power
        for x, w, e in zip(xs, wx, ex):
            span = x - a
            r = span * v ** power
            quotient = (e - eta(x - r)) / r
            square.append(2.0 * w * power * span ** (2.0 - 2.0 * s) * float(np.dot(quotient ** 2, wv)))
        outside = ((xs - a) ** (-2.0 * s) + (b - xs) ** (-2.0 * s)) / (2.0 * s)
        for i, ((a2, b2), (ys, wy)) in enumerate(zip(pieces, rules)):
            if i == j:
                continue
            near = np.minimum(np.abs(xs - a2), np.abs(xs - b2))
            far = np.maximum(np.abs(xs - a2), np.abs(xs - b2))
            outside -= (near ** (-2.0 * s) - far ** (-2.0 * s)) / (2.0 * s)
            kernel = np.abs(xs[:, None] - ys[None, :]) ** (-1.0 - 2.0 * s)
            square.append(float(wx @ ((ex[:, None] - eta(ys)[None, :]) ** 2 * kernel) @ wy))
        square.append(2.0 * float(np.dot(wx, ex * ex * outside)))
        pts = xs.reshape(-1, 1)
        lap = np.array([fractional_laplacian_pv(u, p, s, c) for p in pts])
        cross.append(float(np.dot(wx, ex * lap)))
        base = u(pts)
        reaction.append(float(np.dot(wx, spec.reaction_at(base + ex, pts) - spec.reaction_at(base, pts))))
    return 0.25 * c * math.fsum(square) + math.fsum(cross) - math.fsum(reaction)


def _energy_increment(spec: LagrangianSpec, wf: WeakField, rule=None,
                      nodes: int = INCREMENT_NODES) -> Tuple[float, float, str]:
    """E_{s,F}(u^T) - E_{s,F}(u), its error estimate and the method used.

    1D sliding fields over a smooth u use the active-set decomposition at
    ``nodes`` and ``2 * nodes`` points. Otherwise both energies are evaluated
    on Omega and on its refinement; the error estimate adds the companion-rule
    estimates to the change of the increment under refinement.
    """
    if wf.T <= 0.0:
        return 0.0, 0.0, "none"
    if _sliding_1d(wf):
        try:
            coarse = _sliding_increment(spec, wf, nodes)
            fine = _sliding_increment(spec, wf, 2 * nodes)
            return fine, abs(fine - coarse), "active-set"
        except (InsufficientSmoothnessError, TailUnboundedError) as exc:
            logger.debug(f"Active-set increment not available ({exc}); using mesh energies")
    top = wf.leaf_function(wf.T)
    increments, error = [], 0.0
    for grid in (wf.domain, refine(wf.domain, 2)):
        e_u = _semilinear_energy(spec, grid, wf.base, rule)
        e_top = _semilinear_energy(spec, grid, top, rule)
        increments.append(e_top.value - e_u.value)
        error = e_u.error_estimate + e_top.error_estimate
    return increments[-1], error + abs(increments[-1] - increments[0]), "mesh"


def _comparison_certificate(spec: LagrangianSpec, wf: WeakField, rows: List[Dict[str, Any]],
                            fine_rows: List[Dict[str, Any]], eps_values: Sequence[float],
                            rule=None) -> Certificate:
    """Compare the energy increment with the swept integral.

    ``rows`` and ``fine_rows`` sample the swept region on two rules, the
    second with twice the nodes in t and x; the fine value is used and the
    difference is its error estimate. Both sides agree exactly at T = 0.
    """
    e_u = _semilinear_energy(spec, wf.domain, wf.base, rule)
    increment, increment_error, method = _energy_increment(spec, wf, rule)
    trend = _swept_integral(fine_rows, eps_values)
    integral = _swept_limit(fine_rows)
    swept_error = abs(_swept_limit(rows) - integral)
    eps_gap = 0.0 if _sliding_1d(wf) else abs(trend[-1] - integral)
    minus_infinity = _diverges_down(trend)
    lhs, rhs = e_u.value + increment, e_u.value + integral
    tol = (config.CALIBRATION_RTOL * max(1.0, abs(lhs), abs(rhs))
           + increment_error + swept_error + eps_gap)
    margin = integral - increment
    ok = margin >= -tol
    details = {
        "T": wf.T, "energy_base": e_u.value, "energy_top": lhs,
        "energy_drop": -increment, "energy_error": increment_error, "increment_method": method,
        "swept_integral": integral, "swept_error": swept_error, "epsilon_gap": eps_gap,
        "epsilons": list(eps_values), "minus_infinity": minus_infinity,
        "samples": len(fine_rows), "weak_field": wf.describe(),
    }
    cert = Certificate(
        "energy-comparison", Verdict.PASS if ok else Verdict.FAIL, margin, tol,
        counterexample=None if ok else {"lhs": lhs, "rhs": rhs, "T": wf.T},
        details=details,
    )
    logger.info(f"Energy comparison at T={wf.T:.6g}: lhs={lhs:.10g}, rhs={rhs:.10g} ({cert.verdict.value})")
    return cert.with_trend(trend)


def energy_comparison_check(spec: LagrangianSpec, wf: WeakField,
                            eps_schedule: Optional[Sequence[float]] = None,
                            eps_scale: Optional[float] = None, t_nodes: int = 6,
                            x_nodes: int = 6, rule=None) -> Certificate:
    """Check E_{s,F}(u^T) <= E_{s,F}(u) + int_0^T int_{Omega_t} dt u^t [(-Delta)^s u^t - F'(u^t)].

    The right-hand integral is the lambda-integral over {u < lambda < u^T}
    rewritten in the leaf parameter. It is evaluated for each truncation
    radius of the schedule; the values form the trend. The tolerance carries
    the error estimates of the increment and of the swept integral.

    Args:
        spec: Quadratic fractional spec with the reaction F.
        wf: The weak field.
        eps_schedule: Truncation factors (default ``config.EPSILON_SCHEDULE``).
        eps_scale: Length the factors multiply (default diam(Omega)).

    Raises:
        WitnessMissingError: If the weak field has no witness.
    """
    if wf.witness is None or wf.witness_hessian is None:
        raise WitnessMissingError("The weak field carries no touching witness")
    scale = eps_scale if eps_scale is not None else wf.domain.diam
    eps_values = [float(f) * scale for f in (eps_schedule or config.EPSILON_SCHEDULE)]
    rows = _active_samples(spec, wf, eps_values, t_nodes, x_nodes)
    fine_rows = _active_samples(spec, wf, eps_values, 2 * t_nodes, 2 * x_nodes)
    return _comparison_certificate(spec, wf, rows, fine_rows, eps_values, rule)


# ---------------------------------------------------------------------------
# Viscosity tests
# ---------------------------------------------------------------------------

def extension_value(spec: LagrangianSpec, u: DiscreteFunction, phi: Callable[[np.ndarray], np.ndarray],
                    x0, half_width: float, dense_factor: int = 1) -> float:
    """(-Delta)^s phibar(x0) - F'(phibar(x0)), phibar = phi on the box N and u elsewhere."""
    s, c, f = _semilinear_parts(spec)
    domain = u.domain
    n = domain.dim
    p = as_points(x0, n)[0]
    lo, hi = p - half_width, p + half_width
    center = float(phi(p[None, :])[0])

    def extended(y: np.ndarray) -> np.ndarray:
        out = u(y)
        inside = np.all((y >= lo) & (y <= hi), axis=1)
        if np.any(inside):
            out[inside] = phi(y[inside])
        return out

    def density(y: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(y - p, axis=1)
        return c * (center - extended(y)) * r ** (-n - 2.0 * s)

    breaks = [half_width] if n == 1 else [half_width, math.sqrt(2.0) * half_width]
    for k in u.kinks:
        d = float(np.linalg.norm(np.atleast_1d(k) - p))
        if d > 0:
            breaks.append(d)
    decay = 2.0 * s - u.growth if u.growth < 2.0 * s else 2.0 * s
    value = radial_integral(
        p, density, domain, decay=decay, breakpoints=breaks, radial_exponent=1.0 - 2.0 * s,
        nodes=config.RADIAL_NODES * dense_factor, angles=config.RADIAL_ANGLES * dense_factor,
    )
    return float(value - f(np.array([center]), p[None, :])[0])


def quadratic_probe(u0: float, p: np.ndarray, g: np.ndarray, q: float, side: str):
    sign = -1.0 if side == "below" else 1.0

    def phi(y: np.ndarray) -> np.ndarray:
        z = y - p[None, :]
        return u0 + z @ g + sign * 0.5 * q * np.sum(z * z, axis=1)

    return phi


def probe_value(spec: LagrangianSpec, u: DiscreteFunction, x0, g, q: float, half_width: float,
                side: str = "below", dense_factor: int = 1) -> float:
    """Operator value of the quadratic probe u(x0) + g.(x - x0) -+ q/2 |x - x0|^2 extended by u."""
    p = as_points(x0, u.dim)[0]
    u0 = float(u(p[None, :])[0])
    phi = quadratic_probe(u0, p, np.atleast_1d(np.asarray(g, dtype=float)), q, side)
    return extension_value(spec, u, phi, p, half_width, dense_factor)


def corner_probe_value(s: float, q: float, half_width: float, c: Optional[float] = None) -> float:
    """Closed form of (-Delta)^s phibar(0) for u = |x| in 1D and phi = -q x^2 / 2 on (-h, h).

    Raises:
        InvalidParameterError: If s <= 1/2 (|x| grows too fast for the operator).
    """
    if not 0.5 < s < 1.0:
        raise InvalidParameterError(f"The corner closed form needs s in (1/2, 1), got {s}")
    c = fractional_constant(1, s) if c is None else c
    h = half_width
    return c * (q * h ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s) - 2.0 * h ** (1.0 - 2.0 * s) / (2.0 * s - 1.0))


@dataclass(frozen=True)
class ProbeConfig:
    """Probe family: gradients around the numerical gradient times the opening grid.

    Attributes:
        gradients: gradient samples per axis
        openings: opening values q of the paraboloids
        half_width: half-width of the neighborhood N (default 0.1 diam, capped by dist to the boundary)
        points: number of sampled x0 when none are given
        dense_factor: refinement factor of the dense oracle for the worst probe
        tol: tolerance of the sign test
    """

    gradients: int = config.PROBE_GRADIENTS
    openings: Tuple[float, ...] = config.PROBE_OPENINGS
    half_width: Optional[float] = None
    points: int = 20
    dense_factor: int = 10
    tol: float = config.VISCOSITY_TOL


def _gradient_grid(u: DiscreteFunction, p: np.ndarray, h: float, count: int) -> np.ndarray:
    n = p.size
    center, spread = np.zeros(n), np.zeros(n)
    u0 = float(u(p[None, :])[0])
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        right = (float(u((p + e)[None, :])[0]) - u0) / h
        left = (u0 - float(u((p - e)[None, :])[0])) / h
        center[k] = 0.5 * (right + left)
        spread[k] = 0.5 * abs(right - left)
    axes = [np.unique(center[k] + spread[k] * np.linspace(-1.0, 1.0, count)) for k in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _touch_offsets(n: int, h: float, half_width: float) -> np.ndarray:
    k = int(math.floor(half_width / h + 1e-9))
    axis = h * np.arange(-k, k + 1)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    return offsets[np.linalg.norm(offsets, axis=1) >= h * (1.0 - 1e-9)]


def _default_points(domain: Domain, count: int, half_width: float) -> np.ndarray:
    centers = domain.cell_centers()
    lo, hi = np.asarray(domain.lower) + half_width, np.asarray(domain.upper) - half_width
    keep = np.all((centers >= lo) & (centers <= hi), axis=1)
    centers = centers[keep] if np.any(keep) else centers
    idx = np.unique(np.linspace(0, centers.shape[0] - 1, count).round().astype(int))
    return centers[idx]


def _viscosity_test(spec: LagrangianSpec, domain: Domain, u: DiscreteFunction, side: str,
                    points, probes: ProbeConfig) -> Certificate:
    if side not in SIDES:
        raise InvalidParameterError(f"Unsupported probe side: {side}")
    h = float(np.min(domain.spacing))
    half_width = probes.half_width or 0.1 * domain.diam
    xs = _default_points(domain, probes.points, half_width) if points is None else as_points(points, domain.dim)
    offsets = _touch_offsets(domain.dim, h, half_width)
    sign = 1.0 if side == "below" else -1.0
    property_id = "viscosity-supersolution" if side == "below" else "viscosity-subsolution"

    worst, bad = math.inf, None
    total = touching = 0
    skipped = []
    for p in xs:
        u0 = float(u(p[None, :])[0])
        ring = p[None, :] + offsets
        u_ring = u(ring)
        touched_here = 0
        for g in _gradient_grid(u, p, h, probes.gradients):
            for q in probes.openings:
                total += 1
                phi = quadratic_probe(u0, p, g, q, side)
                if not np.all(sign * (u_ring - phi(ring)) > 0.0):
                    continue
                touching += 1
                touched_here += 1
                value = sign * extension_value(spec, u, phi, p, half_width)
                if value < worst:
                    worst = value
                    bad = {"x0": p.tolist(), "gradient": g.tolist(), "opening": float(q),
                           "value": sign * value}
        if touched_here == 0:
            skipped.append(p.tolist())
    details: Dict[str, Any] = {
        "probes": total, "touching": touching, "skipped_points": skipped,
        "points": int(xs.shape[0]), "half_width": half_width, "probe_limited": True,
    }
    if touching == 0:
        return Certificate(property_id, Verdict.INCONCLUSIVE, 0.0, probes.tol, details=details)
    dense = sign * probe_value(spec, u, bad["x0"], bad["gradient"], bad["opening"], half_width,
                               side, probes.dense_factor)
    details["dense_margin"] = dense
    details["oracle_gap"] = abs(dense - worst) / max(abs(dense), 1e-300)
    ok = worst >= -probes.tol
    logger.info(f"{property_id}: {touching}/{total} probes touch, worst margin {worst:.6g}")
    return Certificate(property_id, Verdict.PASS if ok else Verdict.FAIL, worst, probes.tol,
                       counterexample=None if ok else bad, details=details)


def viscosity_supersolution_test(spec: LagrangianSpec, domain: Domain, u: DiscreteFunction,
                                 points=None, probes: Optional[ProbeConfig] = None) -> Certificate:
    """Quadratic probes touching u from below must give (-Delta)^s phibar - F'(phibar) >= -tol.

    Points where no probe touches are skipped and listed in the details.
    """
    return _viscosity_test(spec, domain, u, "below", points, probes or ProbeConfig())


def viscosity_subsolution_test(spec: LagrangianSpec, domain: Domain, u: DiscreteFunction,
                               points=None, probes: Optional[ProbeConfig] = None) -> Certificate:
    """Mirror image of the supersolution test: probes touch from above, value <= tol."""
    return _viscosity_test(spec, domain, u, "above", points, probes or ProbeConfig())


# ---------------------------------------------------------------------------
# One-sided minimizers and convex oracles
# ---------------------------------------------------------------------------

def one_sided_competitors(u: DiscreteFunction, direction: str = "above", count: int = 10,
                          seed: int = 0, amplitude: float = 0.05) -> List[DiscreteFunction]:
    """u plus (or minus) random nonnegative bumps supported inside Omega."""
    if direction not in ("above", "below"):
        raise InvalidParameterError(f"Unsupported direction: {direction}")
    sign = 1.0 if direction == "above" else -1.0
    rng = np.random.default_rng(seed)
    domain = u.domain
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    out = []
    for _ in range(count):
        radius = domain.widths * rng.uniform(0.1, 0.4, domain.dim)
        center = rng.uniform(lo + radius, hi - radius)
        bump = bump_function(center, radius)
        a = sign * rng.uniform(0.0, amplitude)
        out.append(u.with_formula(lambda x, a=a, bump=bump: u(x) + a * bump(x)))
    return out


def _exterior_points(domain: Domain, count: int = 64) -> np.ndarray:
    rng = np.random.default_rng(7)
    pts = np.asarray(domain.lower) - domain.widths + 3.0 * domain.widths * rng.random((4 * count, domain.dim))
    return pts[~domain.contains(pts)][:count]


def one_sided_minimizer_check(spec: LagrangianSpec, domain: Domain, u: DiscreteFunction,
                              direction: str, competitors: Sequence[DiscreteFunction],
                              rule=None) -> Certificate:
    """E(v) >= E(u) - tol for competitors v >= u (or <= u) in Omega with v = u outside.

    Competitors breaking the one-sided or exterior constraint are skipped and counted.
    """
    if direction not in ("above", "below"):
        raise InvalidParameterError(f"Unsupported direction: {direction}")
    sign = 1.0 if direction == "above" else -1.0
    nodes = refine(domain, 2).node_points()
    ext = _exterior_points(domain)
    e_u = energy_mixed(spec, domain, u, rule).value
    worst, bad, rows, skipped = math.inf, None, [], []
    for i, v in enumerate(competitors):
        if np.any(sign * (v(nodes) - u(nodes)) < 0.0) or not np.array_equal(v(ext), u(ext)):
            skipped.append(i)
            continue
        e = energy_mixed(spec, domain, v, rule).value
        rows.append({"index": i, "energy": e, "difference": e - e_u})
        if e - e_u < worst:
            worst = e - e_u
            bad = {"index": i, "energy": e, "base_energy": e_u, "competitor": v.to_csv()}
    details = {"direction": direction, "base_energy": e_u, "competitors": rows, "skipped": skipped}
    if not rows:
        return Certificate("one-sided-minimizer", Verdict.INCONCLUSIVE, 0.0, 0.0, details=details)
    tol = config.CALIBRATION_RTOL * max([1.0, abs(e_u)] + [abs(r["energy"]) for r in rows])
    ok = worst >= -tol
    return Certificate("one-sided-minimizer", Verdict.PASS if ok else Verdict.FAIL, worst, tol,
                       counterexample=None if ok else bad, details=details)


def barron_jensen_oracle(spec: LagrangianSpec, domain: Domain, u: DiscreteFunction,
                         leaf: DiscreteFunction, rule=None, step: float = 1e-4) -> Certificate:
    """Check 0 <= int_Omega (u - v) L(v) <= E(u) - E(v) for a convex spec and a leaf v.

    The first-variation integral is also compared with a central difference
    of the energy along u - v; their gap serves as the quadrature tolerance.

    Raises:
        NotConvexError: If the spec (or its local part) is not convex.
    """
    convex = check_convexity(spec)
    if not convex.passed:
        raise NotConvexError(f"{spec.id} is not convex in (a, b); the oracle does not apply")
    if spec.local_part is not None and spec.local_part.kind != "dirichlet":
        raise NotConvexError(f"Local part {spec.local_part.kind} is not convex")

    pts, wts = cell_rule(domain, 2)
    diff = u(pts) - leaf(pts)
    terms = [wt * d * euler_lagrange(spec, domain, leaf, p)
             for p, wt, d in zip(pts, wts, diff) if d != 0.0]
    first = math.fsum(terms)
    e_u = energy_mixed(spec, domain, u, rule).value
    e_v = energy_mixed(spec, domain, leaf, rule).value
    gap = e_u - e_v

    def moved(eps: float) -> DiscreteFunction:
        return leaf.with_formula(lambda q: leaf(q) + eps * (u(q) - leaf(q)))

    directional = 0.0
    if terms:
        directional = (energy_mixed(spec, domain, moved(step), rule).value
                       - energy_mixed(spec, domain, moved(-step), rule).value) / (2.0 * step)
    tol = config.CALIBRATION_RTOL * max(1.0, abs(e_u), abs(e_v)) + abs(first - directional)
    positivity = Certificate(
        "first-variation-sign", Verdict.PASS if first >= -tol else Verdict.FAIL, first, tol,
        counterexample=None if first >= -tol else {"first_variation": first},
    )
    chain = Certificate(
        "convexity-chain", Verdict.PASS if gap - first >= -tol else Verdict.FAIL, gap - first, tol,
        counterexample=None if gap - first >= -tol else {"first_variation": first, "energy_gap": gap},
    )
    return combine("barron-jensen", [positivity, chain],
                   details={"first_variation": first, "directional_derivative": directional,
                            "energy_gap": gap})


def freeze_lower_order(spec: LagrangianSpec, u) -> LagrangianSpec:
    """Replace the reaction F(w) by the linear term g(x) w with g = F'(u(x)).

    The frozen spec has the same Euler-Lagrange operator at u and is convex.
    Without a reaction it is the plain Gagliardo-type spec.
    """
    s = float(spec.params["s"])
    params: Dict[str, Any] = {"n": spec.n, "s": s, "c": spec.params["c"],
                              "local_part": spec.local_part}
    if not spec.has_reaction:
        return make_lagrangian("fractional-quadratic", params)
    f = spec.reaction.dF
    params["p"] = spec.params.get("p", 2.0)
    params["reaction"] = make_reaction("linear", coefficient=lambda x: f(u(x), x))
    return make_lagrangian("fractional-p-dirichlet-with-reaction", params)


# ---------------------------------------------------------------------------
# Sliding a strict-subsolution probe
# ---------------------------------------------------------------------------

def sliding_subsolution_experiment(spec: LagrangianSpec, u: DiscreteFunction,
                                   phi: Callable[[np.ndarray], np.ndarray], x0,
                                   half_width: float, delta: float, hessian_bound: float,
                                   T: Optional[float] = None, max_halvings: int = 30,
                                   t_nodes: int = 6, x_nodes: int = 6, rule=None) -> Certificate:
    """Slide phi + t under u from a touching point where phi is a strict subsolution.

    With value := (-Delta)^s phibar(x0) - F'(phi(x0)) = -4 c0 < 0, T starts at
    half the admissible height and is halved until the operator is <= -c0 on
    the whole swept region. The energy comparison is then run, and the energy
    drop is compared with c0 times the measure of {u < lambda < u^T}.

    Raises:
        NoConvergenceError: If no T makes the swept region a strict subsolution region.
    """
    value = extension_value(spec, u, phi, x0, half_width)
    if value >= 0.0:
        return Certificate("sliding-subsolution", Verdict.INCONCLUSIVE, value, 0.0,
                           details={"probe_value": value})
    _semilinear_parts(spec)
    c0 = -0.25 * value
    T = 0.5 * max_sliding_height(u, phi, x0, half_width, delta) if T is None else float(T)
    eps_values = [f * delta for f in config.EPSILON_SCHEDULE]
    for halvings in range(max_halvings):
        wf = sliding_weak_field(u, phi, x0, half_width, delta, T, hessian_bound)
        rows = _active_samples(spec, wf, eps_values, t_nodes, x_nodes)
        highest = max((r["operator"] for r in rows), default=math.inf)
        logger.debug(f"Sliding height {T:.4g}: largest operator value {highest:.4g} (c0 = {c0:.4g})")
        if highest <= -c0:
            break
        T *= 0.5
    else:
        raise NoConvergenceError(f"No sliding height gives a strict subsolution region (c0 = {c0:.4g})")

    fine_rows = _active_samples(spec, wf, eps_values, 2 * t_nodes, 2 * x_nodes)
    comparison = _comparison_certificate(spec, wf, rows, fine_rows, eps_values, rule)
    pts, wts = _active_rule(wf, wf.T, 2 * x_nodes)
    region = float(np.dot(wts, wf.leaf(wf.T, pts) - wf.base(pts))) if pts.shape[0] else 0.0
    drop = comparison.details["energy_drop"]
    bound = 0.5 * c0 * region
    ok = comparison.passed and drop >= bound
    return Certificate(
        "sliding-subsolution", Verdict.PASS if ok else Verdict.FAIL, drop - bound, 0.0,
        counterexample=None if ok else {"energy_drop": drop, "bound": bound,
                                        "comparison": comparison.verdict.value},
        details={"probe_value": value, "c0": c0, "T": wf.T, "halvings": halvings,
                 "region": region, "energy_drop": drop, "comparison": comparison.to_dict()},
    )
