"""
Nonlocal perimeters, nonlocal total variation and perimeter calibrations.

This module provides:
- NodeSet: a set E in R^n, tagged on the mesh nodes and continued to Omega^c
- LevelSetFunction: the nested sublevel sets {w < lam} of a function
- nonlocal_perimeter / nltv_energy: both are E_N of the total-variation family
- coarea_check: E_NTV(w) against the lam-integral of perimeters of sublevel sets
- nonlocal_mean_curvature: H_K[E](x) at a boundary point
- perimeter_calibration: C_phi(F) = 1/2 int_Q sign(phi(x) - phi(y)) (1_F(x) - 1_F(y)) K
- nltv_calibration_crosscheck: the calibration of E_NTV in three independent forms
"""

import io
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from core.certificate import Certificate, Verdict
from core.errors import InvalidParameterError, NotOnBoundaryError, PerimeterInfiniteError
from core.field import DiscreteFunction, ExteriorRule, Field, leaf_parameter
from core.functional import CalibrationReport, EnergyReport, calibration_defining, energy_nonlocal
from core.lagrangian import Kernel, LagrangianSpec, make_lagrangian
from core.mesh import Domain, QuadratureRule, as_points, discretize, pair_sum, radial_integral

logger = logging.getLogger(__name__)

Membership = Callable[[np.ndarray], np.ndarray]

LEVEL_GRIDS = ("midpoint", "trapezoid")
BOUNDARY_SCAN = 4001
BOUNDARY_PROBE = 1e-7  # relative to diam(Omega)
NOISE_FRACTION = 0.1  # gaps below this share of the tolerance count as converged


def total_variation_spec(kernel: Kernel) -> LagrangianSpec:
    """The pair Lagrangian |a - b| K(x - y) of E_NTV."""
    return make_lagrangian("nonlocal-total-variation", {"n": kernel.n, "kernel": kernel})


# ---------------------------------------------------------------------------
# Sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeSet:
    """A measurable set E, given by a membership rule valid on all of R^n.

    Attributes:
        domain: the mesh on which E is tagged
        rule: vectorized membership test on ``(k, n)`` points
        name: label used in reports
        exterior: how E continues outside Omega ("rule" when the same test
            applies, or a description of the fixed exterior data)
    """

    domain: Domain
    rule: Membership
    name: str = "set"
    exterior: str = "rule"

    def contains(self, points) -> np.ndarray:
        pts = as_points(points, self.domain.dim)
        return np.asarray(self.rule(pts), dtype=bool)

    def __call__(self, points) -> np.ndarray:
        """The indicator 1_E as floats."""
        return self.contains(points).astype(float)

    @property
    def mask(self) -> np.ndarray:
        """Membership of the mesh nodes, in the order of ``domain.node_points()``."""
        return self.contains(self.domain.node_points())

    @classmethod
    def halfspace(cls, domain: Domain, normal: Sequence[float], offset: float = 0.0) -> "NodeSet":
        """{x : normal . x < offset}."""
        nu = np.asarray(normal, dtype=float)
        if nu.shape != (domain.dim,) or not np.any(nu):
            raise InvalidParameterError(f"Half-space normal must be a nonzero {domain.dim}-vector")
        return cls(domain, lambda p: p @ nu < offset, name=f"halfspace({nu.tolist()}, {offset})")

    @classmethod
    def box(cls, domain: Domain, lower: Sequence[float], upper: Sequence[float]) -> "NodeSet":
        """The open box prod (lower_k, upper_k); an interval in 1D."""
        lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        if lo.shape != (domain.dim,) or hi.shape != (domain.dim,) or np.any(hi <= lo):
            raise InvalidParameterError(f"Invalid box bounds {lo.tolist()} .. {hi.tolist()}")
        return cls(domain, lambda p: np.all((p > lo) & (p < hi), axis=1),
                   name=f"box({lo.tolist()}, {hi.tolist()})")

    @classmethod
    def interval(cls, domain: Domain, a: float, b: float) -> "NodeSet":
        return cls.box(domain, [a], [b])

    @classmethod
    def empty(cls, domain: Domain) -> "NodeSet":
        return cls(domain, lambda p: np.zeros(p.shape[0], dtype=bool), name="empty")

    @classmethod
    def full(cls, domain: Domain) -> "NodeSet":
        return cls(domain, lambda p: np.ones(p.shape[0], dtype=bool), name="full")

    @classmethod
    def sublevel(cls, w, lam: float, domain: Optional[Domain] = None) -> "NodeSet":
        """{x : w(x) < lam} of a function on the mesh (w's own exterior values included)."""
        domain = domain or w.domain
        return cls(domain, lambda p: w(p) < lam, name=f"{{w < {lam:.6g}}}")

    @classmethod
    def superlevel(cls, domain: Domain, phi: Callable[[np.ndarray], np.ndarray],
                   t0: float = 0.0) -> "NodeSet":
        """{x : phi(x) > t0}."""
        return cls(domain, lambda p: np.asarray(phi(p)) > t0, name=f"{{phi > {t0:.6g}}}")

    def complement(self) -> "NodeSet":
        rule = self.rule
        return replace(self, rule=lambda p: ~np.asarray(rule(p), dtype=bool), name=f"not {self.name}")

    def indicator(self) -> DiscreteFunction:
        """1_E as a function on the mesh, with the same membership rule outside Omega."""
        return DiscreteFunction.from_callable(
            self.domain, self, ExteriorRule("callable", func=self),
            sup_bound=1.0, growth=0.0, smooth=False,
        )

    def boundary_points(self, scan: int = BOUNDARY_SCAN) -> List[float]:
        """Membership changes on the exterior box (1D only), located by bisection.

        Raises:
            InvalidParameterError: In dimension other than one.
        """
        if self.domain.dim != 1:
            raise InvalidParameterError("Boundary points are only located in 1D")
        c, R = float(self.domain.center[0]), float(self.domain.r_ext)
        grid = np.linspace(c - R, c + R, scan)
        inside = self.contains(grid)
        flips = np.flatnonzero(inside[1:] != inside[:-1])
        points = []
        for k in flips:
            lo, hi = float(grid[k]), float(grid[k + 1])
            left = bool(inside[k])
            for _ in range(config.BISECTION_MAX_ITER):
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                if bool(self.contains(mid)[0]) == left:
                    lo = mid
                else:
                    hi = mid
            points.append(0.5 * (lo + hi))
        return points

    def is_trivial(self, points: np.ndarray) -> bool:
        inside = self.contains(points)
        return bool(np.all(inside) or not np.any(inside))

    def to_frame(self) -> pd.DataFrame:
        nodes = self.domain.node_points()
        frame = pd.DataFrame({"node": np.arange(nodes.shape[0])})
        for k, name in zip(range(self.domain.dim), ("x", "y")):
            frame[name] = nodes[:, k]
        frame["member"] = self.mask.astype(int)
        frame["exterior_rule"] = self.exterior
        return frame

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, float_format="%.17g")
        return buffer.getvalue()

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "exterior": self.exterior, "nodes_inside": int(np.count_nonzero(self.mask))}


def level_grid(low: float, high: float, count: int, grid: str = "midpoint") -> Tuple[np.ndarray, np.ndarray]:
    """Uniform lam-levels over [low, high] with their weights.

    ``midpoint`` puts the levels at cell centers with equal weights;
    ``trapezoid`` puts them on the cell edges with half weights at both ends.
    """
    if grid not in LEVEL_GRIDS:
        raise InvalidParameterError(f"Unsupported level grid: {grid}")
    if count < 2:
        raise InvalidParameterError(f"Need at least two levels, got {count}")
    if not high > low:
        return np.array([low]), np.array([0.0])
    if grid == "midpoint":
        step = (high - low) / count
        return low + step * (np.arange(count) + 0.5), np.full(count, step)
    levels = np.linspace(low, high, count)
    weights = np.full(count, (high - low) / (count - 1))
    weights[[0, -1]] *= 0.5
    return levels, weights


@dataclass(frozen=True)
class LevelSetFunction:
    """A function w together with the lam-levels at which it is sliced."""

    w: Any
    levels: np.ndarray
    weights: np.ndarray

    @classmethod
    def of(cls, w, count: int = 64, grid: str = "midpoint", rule: Optional[QuadratureRule] = None,
           decay: Optional[float] = None) -> "LevelSetFunction":
        """Levels spanning the values of w on every quadrature point, exterior included."""
        low, high = value_range(w, w.domain, rule, decay)
        levels, weights = level_grid(low, high, count, grid)
        return cls(w, levels, weights)

    @property
    def domain(self) -> Domain:
        return self.w.domain

    def sublevel(self, lam: float) -> NodeSet:
        return NodeSet.sublevel(self.w, lam)

    def sets(self) -> List[NodeSet]:
        return [self.sublevel(lam) for lam in self.levels]

    def nested(self) -> bool:
        """Whether the node masks grow with lam."""
        masks = [s.mask for s in self.sets()]
        return all(np.all(a <= b) for a, b in zip(masks, masks[1:]))


def _improving(gaps: Sequence[float], floor: float) -> bool:
    return all(b <= a or b <= floor for a, b in zip(gaps, gaps[1:]))


def value_range(w, domain: Domain, rule: Optional[QuadratureRule] = None,
                decay: Optional[float] = None) -> Tuple[float, float]:
    disc = discretize(domain, rule or QuadratureRule(), decay)
    values = np.asarray(w(disc.points), dtype=float)
    return float(np.min(values)), float(np.max(values))


# ---------------------------------------------------------------------------
# Perimeter and total variation
# ---------------------------------------------------------------------------

def _check_finite_perimeter(kernel: Kernel, E: NodeSet, rule: QuadratureRule) -> None:
    if kernel.kind != "fractional" or kernel.s is None or kernel.s < 0.5:
        return
    points = discretize(E.domain, rule, kernel.decay).points
    if not E.is_trivial(points):
        raise PerimeterInfiniteError(
            f"The {kernel.s}-perimeter of {E.name} is infinite; it needs s < 1/2"
        )


def nonlocal_perimeter(kernel: Kernel, E: NodeSet, rule: Optional[QuadratureRule] = None) -> EnergyReport:
    """P_K(E; Omega) = 1/2 int_Q |1_E(x) - 1_E(y)| K(x - y).

    Raises:
        PerimeterInfiniteError: For a fractional kernel with s >= 1/2 and a nontrivial E.
    """
    rule = rule or QuadratureRule()
    _check_finite_perimeter(kernel, E, rule)
    report = energy_nonlocal(total_variation_spec(kernel), E.domain, E.indicator(), rule)
    logger.debug(f"P_K({E.name}) = {report.value:.12g}")
    return report


def nltv_energy(kernel: Kernel, domain: Domain, w, rule: Optional[QuadratureRule] = None,
                estimate_error: bool = False) -> EnergyReport:
    """E_NTV(w) = 1/2 int_Q |w(x) - w(y)| K(x - y)."""
    return energy_nonlocal(total_variation_spec(kernel), domain, w, rule, estimate_error=estimate_error)


def _level_integral(kernel: Kernel, w, levels: np.ndarray, weights: np.ndarray,
                    rule: QuadratureRule) -> float:
    terms = []
    for lam, weight in zip(levels, weights):
        if weight == 0.0:
            continue
        terms.append(weight * nonlocal_perimeter(kernel, NodeSet.sublevel(w, lam), rule).value)
    return math.fsum(terms)


def coarea_check(kernel: Kernel, domain: Domain, w, counts: Sequence[int] = (64, 128),
                 grid: str = "midpoint", rule: Optional[QuadratureRule] = None,
                 rtol: float = config.COAREA_RTOL) -> Certificate:
    """E_NTV(w) against int P_K({w < lam}) dlam on successively finer lam-grids.

    Passes when the relative gap on the finest grid is at most ``rtol`` and
    the gap does not grow as the grid is refined.
    """
    rule = rule or QuadratureRule()
    energy = nltv_energy(kernel, domain, w, rule).value
    low, high = value_range(w, domain, rule, kernel.decay)
    scale = max(abs(energy), np.finfo(float).tiny)
    gaps, integrals = [], []
    for count in counts:
        levels, weights = level_grid(low, high, count, grid)
        integral = _level_integral(kernel, w, levels, weights, rule)
        integrals.append(integral)
        gaps.append(abs(integral - energy) / scale)
        logger.debug(f"Coarea with {count} levels: {integral:.12g} vs {energy:.12g}")
    improving = _improving(gaps, NOISE_FRACTION * rtol)
    ok = gaps[-1] <= rtol and improving
    details = {"energy": energy, "integrals": integrals, "counts": list(counts),
               "range": [low, high], "grid": grid}
    cert = Certificate(
        "coarea", Verdict.PASS if ok else Verdict.FAIL, rtol - gaps[-1], rtol,
        counterexample=None if ok else {"gaps": gaps, "improving": improving, **details},
        details=details,
    )
    return cert.with_trend(gaps)


# ---------------------------------------------------------------------------
# Mean curvature
# ---------------------------------------------------------------------------

def _on_boundary(E: NodeSet, p: np.ndarray) -> bool:
    eta = BOUNDARY_PROBE * E.domain.diam
    n = p.shape[0]
    if n == 1:
        probes = np.array([[p[0] - eta], [p[0] + eta]])
    else:
        theta = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
        probes = p[None, :] + eta * np.stack((np.cos(theta), np.sin(theta)), axis=1)
    return not E.is_trivial(probes)


def nonlocal_mean_curvature(kernel: Kernel, E: NodeSet, x, nodes: int = config.RADIAL_NODES,
                            angles: int = config.RADIAL_ANGLES) -> float:
    """H_K[E](x) = p.v. int (1_{E^c}(y) - 1_E(y)) K(x - y) dy at x on the boundary of E.

    Raises:
        NotOnBoundaryError: If every point near x lies on the same side of E.
    """
    n = E.domain.dim
    p = as_points(x, n)[0]
    if not _on_boundary(E, p):
        raise NotOnBoundaryError(f"x={p.tolist()} is not on the boundary of {E.name}")

    def density(points):
        return (1.0 - 2.0 * E(points)) * kernel.func(p[None, :] - points)

    breaks = []
    if kernel.support is not None:
        breaks.append(float(kernel.support))
    if n == 1:
        breaks.extend(abs(b - p[0]) for b in E.boundary_points() if abs(b - p[0]) > 0)
    value = radial_integral(p, density, E.domain, decay=kernel.decay, breakpoints=breaks,
                            nodes=nodes, angles=angles)
    logger.debug(f"H_K[{E.name}]({p.tolist()}) = {value:.12g}")
    return value


# ---------------------------------------------------------------------------
# Calibrations
# ---------------------------------------------------------------------------

def _half_q_sum(disc, integrand) -> Dict[str, float]:
    parts = pair_sum(disc, integrand)
    return {
        "interior": 0.5 * math.fsum((parts.get("interior", 0.0), parts.get("diagonal", 0.0))),
        "cross": parts.get("cross", 0.0),
        "tail": parts.get("tail", 0.0),
    }


def perimeter_calibration(kernel: Kernel, domain: Domain, phi: Callable[[np.ndarray], np.ndarray],
                          F: NodeSet, rule: Optional[QuadratureRule] = None) -> CalibrationReport:
    """C_phi(F) = 1/2 int_Q sign(phi(x) - phi(y)) (1_F(x) - 1_F(y)) K(x - y), with sign(0) = 0.

    C_phi(F) <= P_K(F) for every F, with equality at F = {phi > t} for any t.
    """
    rule = rule or QuadratureRule()
    disc = discretize(domain, rule, kernel.decay if rule.uses_exterior else None)
    phis = np.asarray(phi(disc.points), dtype=float)
    member = F(disc.points)

    def integrand(block):
        return (np.sign(phis[block.ix] - phis[block.iy])
                * (member[block.ix] - member[block.iy]) * kernel.func(block.x - block.y))

    parts = _half_q_sum(disc, integrand)
    value = math.fsum(parts.values())
    return CalibrationReport(value, None, "perimeter", parts, {"set": F.name})


def _clamped_parameters(fld: Field, points: np.ndarray, lam: float) -> np.ndarray:
    return leaf_parameter(fld, points, lam, clamp=True)


def _sign_form(kernel: Kernel, fld: Field, t0: float, domain: Domain, w, levels: np.ndarray,
               weights: np.ndarray, rule: QuadratureRule) -> float:
    """E_NTV(u^{t0}) + int_Q int_{u^{t0}(x)}^{w(x)} sign(lam - u^{t(x, lam)}(y)) K dlam on a lam-grid."""
    anchor = fld.leaf_function(t0, domain)
    base = nltv_energy(kernel, domain, anchor, rule).value
    disc = discretize(domain, rule, kernel.decay if rule.uses_exterior else None)
    wv = np.asarray(w(disc.points), dtype=float)
    av = anchor(disc.points)
    terms = []
    for lam, weight in zip(levels, weights):
        g = (wv > lam).astype(float) - (av > lam).astype(float)
        if weight == 0.0 or not np.any(g):
            continue
        phi = _clamped_parameters(fld, disc.points, lam)

        def integrand(block):
            return (g[block.ix] * -np.sign(phi[block.ix] - phi[block.iy])
                    * kernel.func(block.x - block.y))

        forward = pair_sum(disc, integrand)
        back = pair_sum(disc, integrand, ("cross", "tail"), reverse=True)
        terms.append(weight * math.fsum(list(forward.values()) + list(back.values())))
    return math.fsum([base] + terms)


def _perimeter_form(kernel: Kernel, fld: Field, domain: Domain, w, levels: np.ndarray,
                    weights: np.ndarray, rule: QuadratureRule) -> float:
    """int C_{phi^lam}({w < lam}) dlam with phi^lam(x) = t(x, lam)."""
    disc = discretize(domain, rule, kernel.decay if rule.uses_exterior else None)
    terms = []
    for lam, weight in zip(levels, weights):
        if weight == 0.0:
            continue

        def phi_fn(points, lam=lam):
            return _clamped_parameters(fld, points, lam)

        F = NodeSet.sublevel(w, lam, domain)
        terms.append(weight * perimeter_calibration(kernel, domain, phi_fn, F, rule).value)
    return math.fsum(terms)


def nltv_calibration_crosscheck(kernel: Kernel, fld: Field, t0: float, domain: Domain, w,
                                counts: Sequence[int] = (64, 128), rule: Optional[QuadratureRule] = None,
                                rtol: float = config.COAREA_RTOL) -> Certificate:
    """C(w) for E_NTV by the defining form, the exact-sign form and the lam-integral of C_phi.

    The lam-grids span the values of w and of the anchor leaf on every
    quadrature point. Passes when, on the finest grid, the three values agree
    within ``rtol`` relative to the largest of them and of E_NTV(u^{t0}), and
    the spread does not grow as the lam-grid is refined.
    """
    rule = rule or QuadratureRule()
    spec = total_variation_spec(kernel)
    defining = calibration_defining(spec, fld, t0, domain, w, rule, estimate_error=True)
    anchor = fld.leaf_function(t0, domain)
    w_lo, w_hi = value_range(w, domain, rule, kernel.decay)
    a_lo, a_hi = value_range(anchor, domain, rule, kernel.decay)
    low, high = min(w_lo, a_lo), max(w_hi, a_hi)

    rows, gaps = [], []
    for count in counts:
        lams, weights = level_grid(low, high, count)
        values = {
            "defining": defining.value,
            "sign": _sign_form(kernel, fld, t0, domain, w, lams, weights, rule),
            "perimeter": _perimeter_form(kernel, fld, domain, w, lams, weights, rule),
        }
        gaps.append(max(values.values()) - min(values.values()))
        rows.append({"levels": count, **values})
        logger.debug(f"NLTV calibration forms with {count} levels: {values}")

    values = rows[-1]
    scale = max(abs(values["defining"]), abs(values["sign"]), abs(values["perimeter"]),
                abs(defining.breakdown["anchor_energy"]), np.finfo(float).tiny)
    tol = rtol * scale + defining.error_estimate
    improving = _improving(gaps, NOISE_FRACTION * tol)
    ok = gaps[-1] <= tol and improving
    logger.info(f"NLTV calibration forms: gap {gaps[-1]:.3e}, tol {tol:.3e}, improving {improving}")
    cert = Certificate(
        "nltv-calibration-forms", Verdict.PASS if ok else Verdict.FAIL, tol - gaps[-1], tol,
        counterexample=None if ok else {"forms": rows, "gaps": gaps, "improving": improving},
        details={"forms": rows, "t0": t0},
    )
    return cert.with_trend(gaps)
