"""
Functions on the mesh, fields of leaves and weak fields.

This module provides:
- DiscreteFunction: node values on Omega plus an exterior rule on Omega^c,
  with an optional closed form used for exact evaluation
- Field: a one-parameter family of leaves t -> u^t, increasing in t, with
  its t-derivative; factories for affine and translation fields
- leaf_parameter: inversion of u^{t(x, lam)}(x) = lam by bisection
- WeakField: degenerate fields whose leaves may coincide, and the sliding
  construction u^t = max(u, phi + t) around a touching point
- check_field / check_weak_field: invariant certificates
"""

import io
import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

import config
from core.certificate import Certificate, Verdict, combine
from core.errors import (
    InvalidParameterError,
    NoTouchError,
    NotMonotoneError,
    OutOfRegionError,
    TooLargeTError,
)
from core.mesh import Domain, as_points

logger = logging.getLogger(__name__)

PointFn = Callable[[np.ndarray], np.ndarray]
LeafFn = Callable[[float, np.ndarray], np.ndarray]

EXTERIOR_KINDS = ("constant", "callable", "reference")
SCAN_POINTS_1D = 4001
SCAN_POINTS_2D = 201
JUMP_RATIO = 0.75


@dataclass(frozen=True)
class ExteriorRule:
    """How a function is extended to Omega^c."""

    kind: str
    value: float = 0.0
    func: Optional[PointFn] = None

    def __post_init__(self):
        if self.kind not in EXTERIOR_KINDS:
            raise InvalidParameterError(f"Unsupported exterior rule: {self.kind}")
        if self.kind != "constant" and self.func is None:
            raise InvalidParameterError(f"Exterior rule {self.kind} needs a function")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(points.shape[0], float(self.value))
        return np.asarray(self.func(points), dtype=float)


@dataclass(frozen=True)
class DiscreteFunction:
    """Function values on the vertex mesh of a domain plus an exterior rule.

    Attributes:
        domain: the domain whose nodes carry ``values``
        values: node values, flattened in the order of ``domain.node_points()``
        exterior: extension to Omega^c
        formula: optional closed form; when present it is used inside Omega
            instead of interpolating the node values
        sup_bound, lipschitz: declared bounds (None when unknown)
        growth: exponent gamma in |u(y)| <= C (1 + |y|^gamma)
        affine_tail: whether the exterior data is affine
        kinks: points where the function is not C2
        smooth: False, True, or a predicate on points for C2 patches
    """

    domain: Domain
    values: np.ndarray
    exterior: ExteriorRule
    formula: Optional[PointFn] = None
    sup_bound: Optional[float] = None
    lipschitz: Optional[float] = None
    growth: float = 0.0
    affine_tail: bool = False
    kinks: Tuple[Any, ...] = ()
    smooth: Union[bool, Callable[[np.ndarray], bool]] = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != int(np.prod(self.domain.node_shape)):
            raise InvalidParameterError(
                f"Expected {int(np.prod(self.domain.node_shape))} node values, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("Node values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kinks", tuple(self.kinks))

    @classmethod
    def from_callable(cls, domain: Domain, func: PointFn, exterior: Optional[ExteriorRule] = None,
                      **meta) -> "DiscreteFunction":
        """Sample a closed form on the nodes; by default it also defines the exterior."""
        values = np.asarray(func(domain.node_points()), dtype=float)
        exterior = exterior or ExteriorRule("callable", func=func)
        return cls(domain, values, exterior, formula=func, **meta)

    @classmethod
    def clamped(cls, domain: Domain, func: PointFn, **meta) -> "DiscreteFunction":
        """Closed form inside Omega, extended by its value at the nearest point of Omega."""
        lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)

        def extension(points: np.ndarray) -> np.ndarray:
            return np.asarray(func(np.clip(points, lo, hi)), dtype=float)

        meta.setdefault("growth", 0.0)
        if domain.dim == 1:
            meta.setdefault("kinks", (domain.lower[0], domain.upper[0]))
        return cls.from_callable(domain, func, ExteriorRule("reference", func=extension), **meta)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def _interpolate(self, points: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return np.interp(points[:, 0], self.domain.axis_edges(0), self.values)
        grid = tuple(self.domain.axis_edges(k) for k in range(2))
        interp = RegularGridInterpolator(grid, self.values.reshape(self.domain.node_shape))
        return interp(points)

    def __call__(self, points) -> np.ndarray:
        pts = as_points(points, self.dim)
        inside = self.domain.contains(pts)
        out = np.empty(pts.shape[0])
        if np.any(inside):
            inner = pts[inside]
            out[inside] = self.formula(inner) if self.formula is not None else self._interpolate(inner)
        if np.any(~inside):
            out[~inside] = self.exterior(pts[~inside])
        return out

    def smooth_at(self, x) -> bool:
        p = as_points(x, self.dim)[0]
        for k in self.kinks:
            if np.linalg.norm(np.atleast_1d(k) - p) == 0.0:
                return False
        if callable(self.smooth):
            return bool(self.smooth(p))
        return bool(self.smooth)

    def with_formula(self, func: PointFn, **meta) -> "DiscreteFunction":
        """Same domain and exterior, new interior closed form."""
        values = np.asarray(func(self.domain.node_points()), dtype=float)
        return replace(self, values=values, formula=func, **meta)

    def to_frame(self) -> pd.DataFrame:
        nodes = self.domain.node_points()
        frame = pd.DataFrame({"node": np.arange(nodes.shape[0])})
        for k, name in zip(range(self.dim), ("x", "y")):
            frame[name] = nodes[:, k]
        frame["value"] = self.values
        return frame

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, float_format="%.17g")
        return buffer.getvalue()


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    """One-parameter family of leaves u^t, t in [t_min, t_max]."""

    n: int
    t_min: float
    t_max: float
    leaf_fn: LeafFn
    dt_fn: LeafFn
    name: str = "custom"
    growth: float = 0.0
    affine_tail: bool = False
    kink_fn: Optional[Callable[[float], Tuple[Any, ...]]] = None
    smooth: bool = True
    vectorized: bool = True

    def __post_init__(self):
        if not self.t_max > self.t_min:
            raise InvalidParameterError(f"Empty parameter interval [{self.t_min}, {self.t_max}]")

    def _evaluate(self, fn: LeafFn, t, points) -> np.ndarray:
        pts = as_points(points, self.n)
        if np.ndim(t) == 0:
            return np.asarray(fn(float(t), pts), dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), (pts.shape[0],))
        if self.vectorized:
            return np.asarray(fn(t, pts), dtype=float)
        out = np.empty(pts.shape[0])
        values, inverse = np.unique(t, return_inverse=True)
        for k, tv in enumerate(values):
            rows = inverse == k
            out[rows] = fn(float(tv), pts[rows])
        return out

    def leaf(self, t, points) -> np.ndarray:
        """u^t(x); t is a scalar or one parameter per point."""
        return self._evaluate(self.leaf_fn, t, points)

    def dt(self, t, points) -> np.ndarray:
        return self._evaluate(self.dt_fn, t, points)

    def bounds(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Per-point bounds [u^{t_min}(x), u^{t_max}(x)] of the covered region."""
        return self.leaf(self.t_min, points), self.leaf(self.t_max, points)

    def leaf_kinks(self, t: float) -> Tuple[Any, ...]:
        return tuple(self.kink_fn(t)) if self.kink_fn is not None else ()

    def leaf_function(self, t: float, domain: Domain) -> DiscreteFunction:
        t = float(t)
        return DiscreteFunction.from_callable(
            domain, lambda p: self.leaf(t, p),
            growth=self.growth, affine_tail=self.affine_tail,
            kinks=self.leaf_kinks(t), smooth=self.smooth,
        )

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "t_min": self.t_min, "t_max": self.t_max, "n": self.n}


def affine_field(n: int = 1, t_range: Tuple[float, float] = (-1.0, 1.0),
                 slope: Optional[Sequence[float]] = None) -> Field:
    """Leaves u^t(x) = slope . x + t."""
    p = np.asarray(slope if slope is not None else [1.0] + [0.0] * (n - 1), dtype=float)
    if p.shape != (n,):
        raise InvalidParameterError(f"Slope must have {n} components")
    return Field(
        n, float(t_range[0]), float(t_range[1]),
        leaf_fn=lambda t, x: x @ p + t,
        dt_fn=lambda t, x: np.ones(x.shape[0]),
        name="affine", growth=1.0 if np.any(p != 0) else 0.0, affine_tail=True,
    )


def translation_field(u: Union[PointFn, DiscreteFunction], axis: int, t_range: Tuple[float, float],
                      n: Optional[int] = None, derivative: Optional[PointFn] = None,
                      samples: Optional[np.ndarray] = None, name: str = "translation") -> Field:
    """Leaves u^t(x) = u(x + t e_axis) of a function increasing along the axis.

    Args:
        u: Closed form or DiscreteFunction.
        axis: Index of the translation axis.
        t_range: Parameter interval.
        n: Dimension (taken from u when it is a DiscreteFunction).
        derivative: Closed form of the axis derivative; centered differences otherwise.
        samples: Points at which monotonicity is sampled (default: Omega's nodes
            for a DiscreteFunction, a grid on [-2, 2]^n otherwise).

    Raises:
        NotMonotoneError: If the sampled axis derivative is not positive.
    """
    if isinstance(u, DiscreteFunction):
        n = u.dim
        kinks = u.kinks
        growth, affine_tail = u.growth, u.affine_tail
        if samples is None:
            samples = u.domain.node_points()
    else:
        if n is None:
            raise InvalidParameterError("Dimension is required for a closed-form function")
        kinks, growth, affine_tail = (), 0.0, False
    if not 0 <= axis < n:
        raise InvalidParameterError(f"Axis {axis} out of range for dimension {n}")
    e = np.zeros(n)
    e[axis] = 1.0

    if derivative is None:
        def derivative(x):
            h = 1e-6 * (1.0 + np.abs(x[:, axis]))
            return (u(x + h[:, None] * e) - u(x - h[:, None] * e)) / (2.0 * h)

    if samples is None:
        axes = [np.linspace(-2.0, 2.0, 41)] * n
        samples = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    samples = as_points(samples, n)
    t_grid = np.linspace(t_range[0], t_range[1], 9)
    shifted = np.concatenate([samples + t * e for t in t_grid])
    slope = np.asarray(derivative(shifted), dtype=float)
    if np.any(slope <= 0.0):
        bad = int(np.argmin(slope))
        raise NotMonotoneError(
            f"Derivative along axis {axis} is {slope[bad]:.3e} at x={shifted[bad].tolist()}"
        )
    if np.min(slope) < config.FIELD_STRICTNESS:
        logger.warning(f"Translation field is only weakly increasing: min slope {np.min(slope):.3e}")

    def kink_fn(t):
        if n == 1:
            return tuple(float(np.atleast_1d(k)[0]) - t for k in kinks)
        return tuple(np.atleast_1d(k) - t * e for k in kinks)

    def shifted_points(t, x):
        return x + np.reshape(t, (-1, 1)) * e

    return Field(
        n, float(t_range[0]), float(t_range[1]),
        leaf_fn=lambda t, x: np.asarray(u(shifted_points(t, x)), dtype=float),
        dt_fn=lambda t, x: np.asarray(derivative(shifted_points(t, x)), dtype=float),
        name=name, growth=growth, affine_tail=affine_tail, kink_fn=kink_fn,
    )


def shift_field(u: Union[PointFn, DiscreteFunction], direction: PointFn,
                t_range: Tuple[float, float], n: int, name: str = "shift") -> Field:
    """Leaves u^t = u + t * direction; a field when direction > 0."""
    return Field(
        n, float(t_range[0]), float(t_range[1]),
        leaf_fn=lambda t, x: np.asarray(u(x), dtype=float) + t * np.asarray(direction(x), dtype=float),
        dt_fn=lambda t, x: np.asarray(direction(x), dtype=float),
        name=name,
    )


def leaf_parameter(fld: Field, x, lam, tol: float = config.ROOT_TOL,
                   clamp: bool = False) -> np.ndarray:
    """Solve u^{t}(x) = lam for t by bisection, one root per (x, lam) pair.

    Raises:
        OutOfRegionError: If lam lies outside [u^{t_min}(x), u^{t_max}(x)]
            and ``clamp`` is False.
    """
    pts = as_points(x, fld.n)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (pts.shape[0],)).copy()
    lo_val, hi_val = fld.bounds(pts)
    below, above = lam < lo_val, lam > hi_val
    if np.any(below | above):
        if not clamp:
            bad = int(np.flatnonzero(below | above)[0])
            raise OutOfRegionError(
                f"Value {lam[bad]:.6g} at x={pts[bad].tolist()} is outside the field's region",
                x=pts[bad].tolist(), value=float(lam[bad]),
            )
        lam = np.clip(lam, lo_val, hi_val)

    lo = np.full(pts.shape[0], fld.t_min)
    hi = np.full(pts.shape[0], fld.t_max)
    lo = np.where(lam == lo_val, fld.t_min, lo)
    hi = np.where(lam == lo_val, fld.t_min, np.where(lam == hi_val, fld.t_max, hi))
    lo = np.where(lam == hi_val, fld.t_max, lo)
    for _ in range(config.BISECTION_MAX_ITER):
        open_ = hi - lo > 2.0 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))
        if not np.any(open_):
            break
        mid = 0.5 * (lo + hi)
        val = fld.leaf(mid, pts)
        hit = val == lam
        up = val < lam
        lo = np.where(open_ & (hit | up), mid, lo)
        hi = np.where(open_ & (hit | ~up), mid, hi)
    t = 0.5 * (lo + hi)
    residual = np.abs(fld.leaf(t, pts) - lam)
    if np.any(residual > tol):
        bad = int(np.argmax(residual))
        logger.warning(f"Leaf-parameter residual {residual[bad]:.3e} at x={pts[bad].tolist()}")
    return t


def _field_samples(fld: Field, domain: Domain, samples: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(0)
    lo = np.asarray(domain.lower) - 0.5 * domain.widths
    pts = lo + 2.0 * domain.widths * rng.random((samples, domain.dim))
    ts = fld.t_min + (fld.t_max - fld.t_min) * rng.random((samples, 2))
    return pts, np.sort(ts, axis=1)


def check_field(fld: Field, domain: Domain, samples: int = 200) -> Certificate:
    """Certify monotonicity in t, positivity of dt and dt against differences in t."""
    pts, ts = _field_samples(fld, domain, samples)
    t1, t2 = ts[:, 0], ts[:, 1]
    gap = fld.leaf(t2, pts) - fld.leaf(t1, pts)
    distinct = t2 > t1
    mono_margin = float(np.min(gap[distinct])) if np.any(distinct) else 0.0
    mono = Certificate(
        "field-increasing", Verdict.PASS if mono_margin > 0 else Verdict.FAIL,
        mono_margin, 0.0,
        counterexample=None if mono_margin > 0 else {
            "x": pts[int(np.argmin(np.where(distinct, gap, np.inf)))].tolist()},
    )

    tm = 0.5 * (t1 + t2)
    d = fld.dt(tm, pts)
    h = 1e-5 * (1.0 + np.abs(tm))
    lo = np.maximum(tm - h, fld.t_min)
    hi = np.minimum(tm + h, fld.t_max)
    fd = (fld.leaf(hi, pts) - fld.leaf(lo, pts)) / (hi - lo)
    strict_margin = float(np.min(d)) - config.FIELD_STRICTNESS
    i = int(np.argmin(d))
    strict = Certificate(
        "field-derivative-positive", Verdict.PASS if strict_margin >= 0 else Verdict.FAIL,
        strict_margin, 0.0,
        counterexample=None if strict_margin >= 0 else {"x": pts[i].tolist(), "t": float(tm[i])},
    )
    rel = np.abs(fd - d) / np.maximum(np.abs(d), 1e-300)
    j = int(np.argmax(rel))
    consistency = Certificate(
        "field-derivative-consistent", Verdict.PASS if rel[j] <= 1e-6 else Verdict.FAIL,
        1e-6 - float(rel[j]), 1e-6,
        counterexample=None if rel[j] <= 1e-6 else {"x": pts[j].tolist(), "t": float(tm[j])},
    )
    continuity = _leaf_parameter_continuity(fld, domain, pts, tm, d)
    return combine("field", [mono, strict, consistency, continuity], details={"field": fld.describe()})


def _leaf_parameter_continuity(fld: Field, domain: Domain, pts: np.ndarray, tm: np.ndarray,
                               d: np.ndarray) -> Certificate:
    """t(x, lam) moves by no more than the implicit-function prediction under a small shift of x."""
    h = 1e-4 * domain.diam
    moved = pts.copy()
    moved[:, 0] += h
    lam = fld.leaf(tm, pts)
    jump = np.abs(leaf_parameter(fld, moved, lam, clamp=True) - leaf_parameter(fld, pts, lam))
    d_moved = fld.dt(tm, moved)
    slope = np.maximum(np.minimum(d, d_moved), 1e-300)
    bound = 2.0 * np.abs(fld.leaf(tm, moved) - lam) / slope + 10.0 * config.ROOT_TOL / slope
    excess = jump - bound
    k = int(np.argmax(excess))
    ok = excess[k] <= 0.0
    return Certificate(
        "leaf-parameter-continuous", Verdict.PASS if ok else Verdict.FAIL,
        float(-excess[k]), 0.0,
        counterexample=None if ok else {"x": pts[k].tolist(), "lambda": float(lam[k]),
                                        "jump": float(jump[k])},
    )


# ---------------------------------------------------------------------------
# Weak fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakField:
    """Nondecreasing family of leaves over a base function u, t in [0, T].

    Attributes:
        base: the function u (u^0 = u)
        T: parameter range end
        leaf_fn, dt_fn: leaves and their t-derivative
        C0: derivative bound (also the bound on the witness Hessian)
        witness: touching C2 functions psi_t(x) from below, or None
        witness_hessian: lower bound of the witness Hessian eigenvalues
        neighborhood: (lower, upper) corners of the box N where leaves move
        x0, delta: touching point and the radius containing the active sets
    """

    base: DiscreteFunction
    T: float
    leaf_fn: LeafFn
    dt_fn: LeafFn
    C0: float
    witness: Optional[LeafFn] = None
    witness_hessian: Optional[float] = None
    neighborhood: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    x0: Optional[Tuple[float, ...]] = None
    delta: Optional[float] = None
    phi: Optional[PointFn] = None

    @property
    def domain(self) -> Domain:
        return self.base.domain

    @property
    def n(self) -> int:
        return self.base.dim

    def leaf(self, t: float, points) -> np.ndarray:
        return np.asarray(self.leaf_fn(float(t), as_points(points, self.n)), dtype=float)

    def dt(self, t: float, points) -> np.ndarray:
        return np.asarray(self.dt_fn(float(t), as_points(points, self.n)), dtype=float)

    def active(self, t: float, points) -> np.ndarray:
        """Membership of the active set Omega_t = {u^t > u}."""
        pts = as_points(points, self.n)
        return self.leaf(t, pts) > self.base(pts)

    def scan_points(self) -> Tuple[np.ndarray, float]:
        """A fine grid of the neighborhood (or of Omega) and its cell measure."""
        lo, hi = self.neighborhood if self.neighborhood is not None else (
            self.domain.lower, self.domain.upper)
        count = SCAN_POINTS_1D if self.n == 1 else SCAN_POINTS_2D
        axes = [np.linspace(a, b, count) for a, b in zip(lo, hi)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        cell = float(np.prod([(b - a) / (count - 1) for a, b in zip(lo, hi)]))
        return grid, cell

    def active_measure(self, t: float) -> float:
        """Lebesgue measure of Omega_t (crossings by root finding in 1D)."""
        if t <= 0.0:
            return 0.0
        if self.n == 1 and self.phi is not None and self.x0 is not None:
            return sum(b - a for a, b in self.active_intervals(t))
        grid, cell = self.scan_points()
        return float(np.count_nonzero(self.active(t, grid))) * cell

    def active_intervals(self, t: float) -> List[Tuple[float, float]]:
        """Connected pieces of Omega_t in 1D, with endpoints located by brentq."""
        grid, _ = self.scan_points()
        xs = grid[:, 0]
        gap = self.phi(grid) + t - self.base(grid)
        on = gap > 0
        pieces = []
        k = 0
        while k < xs.size:
            if not on[k]:
                k += 1
                continue
            j = k
            while j + 1 < xs.size and on[j + 1]:
                j += 1
            f = lambda z: float(self.phi(np.array([[z]]))[0] + t - self.base(np.array([[z]]))[0])
            left = optimize.brentq(f, xs[k - 1], xs[k], xtol=1e-14) if k > 0 else xs[k]
            right = optimize.brentq(f, xs[j], xs[j + 1], xtol=1e-14) if j + 1 < xs.size else xs[j]
            pieces.append((float(left), float(right)))
            k = j + 1
        return pieces

    def parameter(self, x, lam) -> np.ndarray:
        """Leaf parameter of the weak field: t = lam - psi_0(x) on I_x, floored at inf I_x."""
        if self.witness is None:
            raise InvalidParameterError("Weak field has no witness to invert")
        pts = as_points(x, self.n)
        base = self.base(pts)
        floor = np.clip(base - self.witness(0.0, pts), 0.0, self.T)
        t = np.asarray(lam, dtype=float) - self.witness(0.0, pts)
        return np.clip(np.maximum(t, floor), 0.0, self.T)

    def leaf_function(self, t: float) -> DiscreteFunction:
        t = float(t)

        def smooth(p: np.ndarray) -> bool:
            q = p[None, :]
            if self.witness is not None and self.witness(t, q)[0] > self.base(q)[0]:
                return True
            return self.base.smooth_at(p)

        return DiscreteFunction.from_callable(
            self.domain, lambda p: self.leaf(t, p),
            exterior=self.base.exterior,
            growth=self.base.growth, affine_tail=self.base.affine_tail,
            kinks=self.base.kinks, smooth=smooth,
        )

    def describe(self) -> Dict[str, Any]:
        return {"T": self.T, "C0": self.C0, "x0": list(self.x0) if self.x0 else None,
                "delta": self.delta}


def max_sliding_height(u: DiscreteFunction, phi: PointFn, x0, half_width: float,
                       delta: float) -> float:
    """min of u - phi over the neighborhood minus B_delta(x0), on the scan grid."""
    p0 = as_points(x0, u.dim)[0]
    count = SCAN_POINTS_1D if u.dim == 1 else SCAN_POINTS_2D
    axes = [np.linspace(c - half_width, c + half_width, count) for c in p0]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    ring = np.linalg.norm(grid - p0, axis=1) >= delta
    if not np.any(ring):
        raise InvalidParameterError("delta must be smaller than the neighborhood half-width")
    return float(np.min(u(grid[ring]) - phi(grid[ring])))


def sliding_weak_field(u: DiscreteFunction, phi: PointFn, x0, half_width: float,
                       delta: float, T: float, hessian_bound: float) -> WeakField:
    """Weak field u^t = max(u, phi + t) inside the box N of the given half-width.

    Args:
        u: Base function.
        phi: C2 function touching u from below at x0.
        x0: Touching point.
        half_width: Half-width of the box N centred at x0 (N must lie in Omega).
        delta: Radius of the ball expected to contain every active set.
        T: Largest parameter.
        hessian_bound: Lower bound -q of the eigenvalues of D2 phi.

    Raises:
        NoTouchError: If phi(x0) != u(x0) or phi > u somewhere on N.
        TooLargeTError: If T exceeds min of u - phi on N minus B_delta(x0).
    """
    p0 = as_points(x0, u.dim)[0]
    domain = u.domain
    lo, hi = p0 - half_width, p0 + half_width
    if np.any(lo < np.asarray(domain.lower)) or np.any(hi > np.asarray(domain.upper)):
        raise InvalidParameterError("The neighborhood N must lie inside Omega")
    if T < 0:
        raise InvalidParameterError(f"T must be nonnegative, got {T}")
    u0, phi0 = float(u(p0[None, :])[0]), float(phi(p0[None, :])[0])
    if abs(u0 - phi0) > 1e-12 * max(1.0, abs(u0)):
        raise NoTouchError(f"phi(x0) = {phi0:.12g} differs from u(x0) = {u0:.12g}")
    limit = max_sliding_height(u, phi, p0, half_width, delta)
    count = SCAN_POINTS_1D if u.dim == 1 else SCAN_POINTS_2D
    axes = [np.linspace(a, b, count) for a, b in zip(lo, hi)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    if np.max(phi(grid) - u(grid)) > 1e-12 * max(1.0, abs(u0)):
        raise NoTouchError("phi is not below u on the neighborhood")
    if T > limit:
        raise TooLargeTError(f"T = {T:.6g} exceeds the admissible height {limit:.6g}")

    def in_box(x):
        return np.all((x >= lo) & (x <= hi), axis=1)

    def leaf(t, x):
        base = u(x)
        if t <= 0.0:
            return base
        return np.where(in_box(x), np.maximum(base, phi(x) + t), base)

    def dt(t, x):
        return np.where(in_box(x) & (phi(x) + t > u(x)), 1.0, 0.0)

    wf = WeakField(
        base=u, T=float(T), leaf_fn=leaf, dt_fn=dt,
        C0=max(1.0, -float(hessian_bound)),
        witness=lambda t, x: phi(x) + t,
        witness_hessian=float(hessian_bound),
        neighborhood=(tuple(lo), tuple(hi)), x0=tuple(p0), delta=float(delta), phi=phi,
    )
    active = wf.active(T, grid) if T > 0 else np.zeros(grid.shape[0], dtype=bool)
    if np.any(active):
        radius = float(np.max(np.linalg.norm(grid[active] - p0, axis=1)))
        if radius >= delta:
            raise TooLargeTError(f"Active set reaches radius {radius:.6g} >= delta {delta}")
        logger.info(f"Sliding weak field at x0={p0.tolist()}: T={T:.6g}, active radius {radius:.6g}")
    return wf


def _exterior_samples(domain: Domain, count: int = 64) -> np.ndarray:
    rng = np.random.default_rng(1)
    lo = np.asarray(domain.lower) - domain.widths
    pts = lo + 3.0 * domain.widths * rng.random((4 * count, domain.dim))
    return pts[~domain.contains(pts)][:count]


def _refined_scan(wf: WeakField) -> np.ndarray:
    lo, hi = wf.neighborhood if wf.neighborhood is not None else (wf.domain.lower, wf.domain.upper)
    count = 2 * (SCAN_POINTS_1D if wf.n == 1 else SCAN_POINTS_2D) - 1
    axes = [np.linspace(a, b, count) for a, b in zip(lo, hi)]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def _max_jump(values: np.ndarray, n: int) -> float:
    """Largest difference between neighboring scan points along any axis."""
    if n == 1:
        return float(np.max(np.abs(np.diff(values)), initial=0.0))
    side = int(round(np.sqrt(values.size)))
    grid = values.reshape(side, side)
    return float(max(np.max(np.abs(np.diff(grid, axis=0))), np.max(np.abs(np.diff(grid, axis=1)))))


def check_weak_field(wf: WeakField, samples: int = 16) -> Certificate:
    """Certify the weak-field clauses; the first violated clause is reported.

    (i) u^0 = u; (ii) u^t = u off Omega; (iii) continuity by sampled jump
    ratios and nested active sets; (iv) 0 <= dt <= C0 on I_x; (v) a witness
    with Hessian bounded below by -C0.
    """
    domain = wf.domain
    nodes = domain.node_points()
    ext = _exterior_samples(domain)
    ts = np.linspace(0.0, wf.T, samples) if wf.T > 0 else np.array([0.0])
    parts = []

    dev0 = float(np.max(np.abs(wf.leaf(0.0, nodes) - wf.base(nodes))))
    parts.append(Certificate(
        "weak-field-initial", Verdict.PASS if dev0 == 0.0 else Verdict.FAIL, -dev0, 0.0,
        counterexample=None if dev0 == 0.0 else {"t": 0.0, "deviation": dev0},
    ))

    dev_ext, t_ext = 0.0, 0.0
    for t in ts:
        d = float(np.max(np.abs(wf.leaf(t, ext) - wf.base(ext)), initial=0.0))
        if d > dev_ext:
            dev_ext, t_ext = d, float(t)
    parts.append(Certificate(
        "weak-field-exterior", Verdict.PASS if dev_ext == 0.0 else Verdict.FAIL, -dev_ext, 0.0,
        counterexample=None if dev_ext == 0.0 else {"t": t_ext, "deviation": dev_ext},
    ))

    grid, _ = wf.scan_points()
    fine = _refined_scan(wf)
    worst, bad = -np.inf, None
    previous = None
    for t in ts:
        vals = wf.leaf(t, grid)
        coarse_jump = _max_jump(vals, wf.n)
        fine_jump = _max_jump(wf.leaf(t, fine), wf.n)
        floor = 1e-9 * max(1.0, float(np.max(np.abs(vals))))
        if fine_jump > floor:
            excess = fine_jump - JUMP_RATIO * coarse_jump
            if excess > worst:
                worst, bad = excess, {"t": float(t), "kind": "jump", "jump": fine_jump}
        act = vals > wf.base(grid)
        if previous is not None:
            step = float(np.max(np.abs(vals - previous[0])))
            excess = step - wf.C0 * (t - previous[1]) - 1e-12
            if excess > worst:
                worst, bad = excess, {"t": float(t), "kind": "time-jump", "step": step}
            if np.any(previous[2] & ~act):
                worst, bad = max(worst, 1.0), {"t": float(t), "kind": "not-nested"}
        previous = (vals, t, act)
    worst = max(worst, 0.0)
    parts.append(Certificate(
        "weak-field-continuity", Verdict.PASS if worst <= 0.0 else Verdict.FAIL, -worst, 0.0,
        counterexample=None if worst <= 0.0 else bad,
    ))

    worst_dt, where = 0.0, None
    for t in ts:
        d = wf.dt(t, nodes)
        inside = wf.leaf(t, nodes) > wf.base(nodes)
        viol = np.maximum(-d, d - wf.C0)
        viol = np.where(inside, viol, 0.0)
        if viol.size and float(np.max(viol)) > worst_dt:
            worst_dt = float(np.max(viol))
            where = {"t": float(t), "x": nodes[int(np.argmax(viol))].tolist()}
    parts.append(Certificate(
        "weak-field-derivative", Verdict.PASS if worst_dt <= 0.0 else Verdict.FAIL, -worst_dt, 0.0,
        counterexample=where,
    ))

    if wf.witness is None or wf.witness_hessian is None:
        parts.append(Certificate("weak-field-witness", Verdict.FAIL, -np.inf, 0.0,
                                 counterexample={"reason": "no witness"}))
    else:
        margin = wf.witness_hessian + wf.C0
        parts.append(Certificate(
            "weak-field-witness", Verdict.PASS if margin >= 0 else Verdict.FAIL, margin, 0.0,
            counterexample=None if margin >= 0 else {"hessian_bound": wf.witness_hessian},
        ))
    cert = combine("weak-field", parts, details=wf.describe())
    logger.info(f"Weak field check: {cert.verdict.value}")
    return cert
