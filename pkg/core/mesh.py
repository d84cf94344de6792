"""
Discretization of Omega and of the cross domain Q(Omega).

This module provides:
- Domain: an axis-aligned box in one or two dimensions with its vertex mesh
  and a graded exterior layout inside the box of half-width R_ext
- QuadratureRule: interior Gauss rule, diagonal-pair policy, epsilon schedule
  and tail policy
- Pair quadrature over Q(Omega) = (R^n x R^n) minus (Omega^c x Omega^c),
  split into interior, diagonal, cross and tail blocks and reduced in a fixed
  order so the result does not depend on the number of worker threads
- Radial quadrature of symmetric pairings for pointwise operators (fractional
  Laplacian in principal-value and truncated form, Euler-Lagrange operators)
- Richardson extrapolation over an epsilon schedule

Functions evaluated on the mesh are duck-typed: anything callable on an
``(k, n)`` array of points with ``domain``, ``kinks``, ``growth`` and
``affine_tail`` attributes works (see ``core.field.DiscreteFunction``).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

import config
from core.errors import (
    InsufficientSmoothnessError,
    InvalidParameterError,
    NonfiniteIntegrandError,
    TailUnboundedError,
)

logger = logging.getLogger(__name__)

INTERIOR_POINTS: Dict[str, int] = {"midpoint": 1, "gauss2": 2, "gauss3": 3}
COMPANION_RULE: Dict[str, str] = {"midpoint": "gauss2", "gauss2": "gauss3", "gauss3": "gauss2"}
DIAGONAL_POLICIES = ("symmetric-difference", "epsilon-truncation")
TAIL_POLICIES = ("analytic", "truncate", "off")
PAIR_KINDS = ("interior", "diagonal", "cross", "tail")
TAIL_ANGLES = 12

_workers: int = config.DEFAULT_WORKERS


def set_workers(count: int) -> None:
    """Set the number of threads used by pair quadrature."""
    global _workers
    if count < 1:
        raise InvalidParameterError(f"Worker count must be positive, got {count}")
    _workers = int(count)


def get_workers() -> int:
    return _workers


@lru_cache(maxsize=None)
def gauss_legendre(npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = special.roots_legendre(npts)
    return np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float)


def gauss_on(a: float, b: float, npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    xi, wi = gauss_legendre(npts)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * xi, half * wi


def as_points(x, n: int) -> np.ndarray:
    """Coerce scalars, vectors and point arrays to shape ``(k, n)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1) if n == 1 else np.full((1, n), float(arr))
    if arr.ndim == 1:
        if n == 1:
            return arr.reshape(-1, 1)
        if arr.shape[0] == n:
            return arr.reshape(1, n)
        raise InvalidParameterError(f"Cannot read {arr.shape} as points in dimension {n}")
    if arr.shape[1] != n:
        raise InvalidParameterError(f"Points have dimension {arr.shape[1]}, expected {n}")
    return arr


def _graded_sizes(first: float, length: float, count: int) -> np.ndarray:
    """Cell sizes growing geometrically from ``first`` that add up to ``length``."""
    if count * first >= length:
        return np.full(count, length / count)

    def total(q: float) -> float:
        return first * (q ** count - 1.0) / (q - 1.0) - length

    upper = 2.0
    while total(upper) < 0.0:
        upper *= 2.0
    ratio = optimize.brentq(total, 1.0 + 1e-12, upper, xtol=1e-14)
    sizes = first * ratio ** np.arange(count)
    return sizes * (length / sizes.sum())


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box Omega with a vertex mesh and an exterior layout.

    Attributes:
        lower, upper: corners of Omega
        cells: cell count per axis
        r_ext: half-width of the exterior box centred on Omega
        exterior_cells: graded exterior cells per side and axis
    """

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    cells: Tuple[int, ...]
    r_ext: float
    exterior_cells: int = config.EXTERIOR_CELLS

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        cells = tuple(int(v) for v in np.atleast_1d(self.cells))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "r_ext", float(self.r_ext))
        if len(lower) not in (1, 2) or len(upper) != len(lower) or len(cells) != len(lower):
            raise InvalidParameterError("Domain must be a box in dimension 1 or 2")
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise InvalidParameterError(f"Empty box: lower={lower}, upper={upper}")
        if any(c < 1 for c in cells) or self.exterior_cells < 1:
            raise InvalidParameterError("Cell counts must be positive")
        if not self.r_ext > 2.0 * self.diam:
            raise InvalidParameterError(
                f"Exterior radius {self.r_ext} must exceed twice the diameter {self.diam}"
            )

    @classmethod
    def box(
        cls,
        lower: Sequence[float],
        upper: Sequence[float],
        cells: Sequence[int],
        r_ext: Optional[float] = None,
        exterior_factor: Optional[float] = None,
        exterior_cells: Optional[int] = None,
    ) -> "Domain":
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        diam = float(np.linalg.norm(np.subtract(upper, lower)))
        if r_ext is None:
            r_ext = (exterior_factor or config.EXTERIOR_FACTOR) * diam
        return cls(lower, upper, tuple(np.atleast_1d(cells)), r_ext,
                   exterior_cells or config.EXTERIOR_CELLS)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def measure(self) -> float:
        return float(np.prod(self.widths))

    @property
    def diam(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    @property
    def spacing(self) -> np.ndarray:
        return self.widths / np.asarray(self.cells)

    @property
    def node_shape(self) -> Tuple[int, ...]:
        return tuple(c + 1 for c in self.cells)

    def axis_edges(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.cells[axis] + 1)

    def node_points(self) -> np.ndarray:
        """Vertex nodes, flattened in C order of ``node_shape``."""
        axes = [self.axis_edges(k) for k in range(self.dim)]
        if self.dim == 1:
            return axes[0].reshape(-1, 1)
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def cell_centers(self) -> np.ndarray:
        centers = []
        for k in range(self.dim):
            e = self.axis_edges(k)
            centers.append(0.5 * (e[:-1] + e[1:]))
        if self.dim == 1:
            return centers[0].reshape(-1, 1)
        grid = np.meshgrid(*centers, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def contains(self, points, closed: bool = True) -> np.ndarray:
        pts = as_points(points, self.dim)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        if closed:
            return np.all((pts >= lo) & (pts <= hi), axis=1)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def distance_to_boundary(self, x) -> float:
        """Distance from an interior point to the boundary of the box."""
        p = as_points(x, self.dim)[0]
        return float(np.min(np.minimum(p - np.asarray(self.lower), np.asarray(self.upper) - p)))

    def exterior_axis_edges(self, axis: int) -> np.ndarray:
        """Edges along one axis from c - R_ext to c + R_ext, graded outside Omega."""
        c = self.center[axis]
        lo, hi = self.lower[axis], self.upper[axis]
        h = self.spacing[axis]
        left = _graded_sizes(h, lo - (c - self.r_ext), self.exterior_cells)
        right = _graded_sizes(h, (c + self.r_ext) - hi, self.exterior_cells)
        left_edges = lo - np.concatenate(([0.0], np.cumsum(left)))[::-1]
        right_edges = hi + np.concatenate(([0.0], np.cumsum(right)))
        left_edges[0] = c - self.r_ext
        right_edges[-1] = c + self.r_ext
        return np.concatenate((left_edges[:-1], self.axis_edges(axis), right_edges[1:]))

    def describe(self) -> Dict[str, object]:
        return {
            "lower": list(self.lower),
            "upper": list(self.upper),
            "cells": list(self.cells),
            "r_ext": self.r_ext,
            "exterior_cells": self.exterior_cells,
        }


def refine(domain: Domain, factor: int) -> Domain:
    """Multiply the cell counts of a domain; the exterior layout is re-graded."""
    if factor not in (2, 4, 8):
        raise InvalidParameterError(f"Refinement factor must be 2, 4 or 8, got {factor}")
    return replace(domain, cells=tuple(c * factor for c in domain.cells))


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature settings shared by energies, calibrations and operators."""

    interior: str = "gauss2"
    diagonal: str = "symmetric-difference"
    epsilon: float = 0.0
    epsilon_schedule: Tuple[float, ...] = config.EPSILON_SCHEDULE
    tail: str = "analytic"
    exterior: bool = True
    tail_nodes: int = config.TAIL_NODES
    t_nodes: int = config.T_NODES
    chunk: int = config.PAIR_CHUNK

    def __post_init__(self):
        object.__setattr__(self, "epsilon_schedule", tuple(float(e) for e in self.epsilon_schedule))
        if self.interior not in INTERIOR_POINTS:
            raise InvalidParameterError(f"Unsupported interior rule: {self.interior}")
        if self.diagonal not in DIAGONAL_POLICIES:
            raise InvalidParameterError(f"Unsupported diagonal policy: {self.diagonal}")
        if self.tail not in TAIL_POLICIES:
            raise InvalidParameterError(f"Unsupported tail policy: {self.tail}")
        sched = np.asarray(self.epsilon_schedule)
        if sched.size == 0 or np.any(sched <= 0) or np.any(np.diff(sched) >= 0):
            raise InvalidParameterError("Epsilon schedule must be positive and strictly decreasing")
        if self.diagonal == "epsilon-truncation" and self.epsilon <= 0:
            raise InvalidParameterError("Epsilon truncation needs a positive epsilon")
        if self.t_nodes < 1 or self.tail_nodes < 1 or self.chunk < 1:
            raise InvalidParameterError("Node counts and chunk size must be positive")

    @property
    def uses_exterior(self) -> bool:
        return self.exterior and self.tail != "off"

    def companion(self) -> "QuadratureRule":
        """The rule used for error estimates (next Gauss order)."""
        return replace(self, interior=COMPANION_RULE[self.interior])

    def epsilons(self, domain: Domain) -> np.ndarray:
        return np.asarray(self.epsilon_schedule) * domain.diam

    def describe(self) -> Dict[str, object]:
        return {
            "interior": self.interior,
            "diagonal": self.diagonal,
            "epsilon": self.epsilon,
            "tail": self.tail,
            "exterior": self.exterior,
            "t_nodes": self.t_nodes,
        }


@dataclass(frozen=True)
class Discretization:
    """Point table [interior | companion | exterior | tail] with weights."""

    domain: Domain
    rule: QuadratureRule
    decay: Optional[float]
    points: np.ndarray
    weights: np.ndarray
    cell_ids: np.ndarray
    slices: Dict[str, slice]

    def indices(self, name: str) -> np.ndarray:
        sl = self.slices[name]
        return np.arange(sl.start, sl.stop)

    def block(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        sl = self.slices[name]
        return self.points[sl], self.weights[sl]

    @property
    def interior_points(self) -> np.ndarray:
        return self.points[self.slices["interior"]]

    @property
    def interior_weights(self) -> np.ndarray:
        return self.weights[self.slices["interior"]]

    @property
    def size(self) -> int:
        return self.points.shape[0]


def _cell_points(edges: List[np.ndarray], npts: int,
                 mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xi, wi = gauss_legendre(npts)
    nodes, wts = [], []
    for e in edges:
        mid = 0.5 * (e[:-1] + e[1:])
        half = 0.5 * (e[1:] - e[:-1])
        nodes.append(mid[:, None] + half[:, None] * xi[None, :])
        wts.append(half[:, None] * wi[None, :])
    if len(edges) == 1:
        ncell = nodes[0].shape[0]
        pts = nodes[0].reshape(-1, 1)
        w = wts[0].ravel()
        ids = np.repeat(np.arange(ncell), npts)
        if mask is not None:
            keep = np.repeat(mask, npts)
            pts, w, ids = pts[keep], w[keep], ids[keep]
        return pts, w, ids
    n0, n1 = nodes[0].shape[0], nodes[1].shape[0]
    shape = (n0, n1, npts, npts)
    X = np.broadcast_to(nodes[0][:, None, :, None], shape)
    Y = np.broadcast_to(nodes[1][None, :, None, :], shape)
    W = wts[0][:, None, :, None] * wts[1][None, :, None, :]
    ids = np.broadcast_to((np.arange(n0)[:, None] * n1 + np.arange(n1)[None, :])[:, :, None, None], shape)
    if mask is not None:
        X, Y, W, ids = X[mask], Y[mask], W[mask], ids[mask]
    pts = np.stack([X.reshape(-1), Y.reshape(-1)], axis=1)
    return pts, np.ascontiguousarray(W.reshape(-1)), np.ascontiguousarray(ids.reshape(-1))


def _tail_points(domain: Domain, decay: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Points beyond the exterior box, with r = rho * v^(-beta) and beta = 1 / decay."""
    beta = 1.0 / decay
    v, wv = gauss_on(0.0, 1.0, nodes)
    c = domain.center
    R = domain.r_ext
    if domain.dim == 1:
        r = R * v ** (-beta)
        w = beta * R * v ** (-beta - 1.0) * wv
        pts = np.concatenate((c[0] - r, c[0] + r)).reshape(-1, 1)
        return pts, np.concatenate((w, w))
    theta, wt = gauss_on(-0.25 * np.pi, 0.25 * np.pi, TAIL_ANGLES)
    pts_all, w_all = [], []
    for side in range(4):
        ang = theta + 0.5 * np.pi * side
        rho = R / np.cos(theta)
        r = rho[:, None] * v[None, :] ** (-beta)
        w = wt[:, None] * wv[None, :] * beta * rho[:, None] * v[None, :] ** (-beta - 1.0) * r
        px = c[0] + r * np.cos(ang)[:, None]
        py = c[1] + r * np.sin(ang)[:, None]
        pts_all.append(np.stack([px.ravel(), py.ravel()], axis=1))
        w_all.append(w.ravel())
    return np.concatenate(pts_all), np.concatenate(w_all)


@lru_cache(maxsize=64)
def discretize(domain: Domain, rule: QuadratureRule, decay: Optional[float] = None) -> Discretization:
    """Build (and cache) the point table of a domain under a rule."""
    npts = INTERIOR_POINTS[rule.interior]
    edges = [domain.axis_edges(k) for k in range(domain.dim)]
    a_pts, a_w, a_ids = _cell_points(edges, npts)
    b_pts, b_w, b_ids = _cell_points(edges, INTERIOR_POINTS[COMPANION_RULE[rule.interior]])
    blocks = [("interior", a_pts, a_w, a_ids), ("companion", b_pts, b_w, b_ids)]

    if rule.uses_exterior:
        ext_edges = [domain.exterior_axis_edges(k) for k in range(domain.dim)]
        centers = [0.5 * (e[:-1] + e[1:]) for e in ext_edges]
        if domain.dim == 1:
            mask = ~domain.contains(centers[0])
        else:
            grid = np.stack(np.meshgrid(*centers, indexing="ij"), axis=-1).reshape(-1, 2)
            mask = (~domain.contains(grid)).reshape(len(centers[0]), len(centers[1]))
        e_pts, e_w, _ = _cell_points(ext_edges, npts, mask)
        blocks.append(("exterior", e_pts, e_w, np.full(e_w.shape, -1)))
    else:
        blocks.append(("exterior", np.empty((0, domain.dim)), np.empty(0), np.empty(0, dtype=int)))

    if rule.uses_exterior and rule.tail == "analytic" and decay is not None:
        t_pts, t_w = _tail_points(domain, decay, rule.tail_nodes)
        blocks.append(("tail", t_pts, t_w, np.full(t_w.shape, -1)))
    else:
        blocks.append(("tail", np.empty((0, domain.dim)), np.empty(0), np.empty(0, dtype=int)))

    slices, start = {}, 0
    for name, pts, _, _ in blocks:
        slices[name] = slice(start, start + pts.shape[0])
        start += pts.shape[0]
    points = np.concatenate([b[1] for b in blocks])
    weights = np.concatenate([b[2] for b in blocks])
    cell_ids = np.concatenate([b[3] for b in blocks]).astype(int)
    logger.debug(
        f"Discretized {domain.describe()} with {rule.interior}: "
        + ", ".join(f"{k}={v.stop - v.start}" for k, v in slices.items())
    )
    return Discretization(domain, rule, decay, points, weights, cell_ids, slices)


@dataclass(frozen=True)
class PairBlock:
    """A chunk of ordered quadrature pairs (x, y) with product weights."""

    kind: str
    ix: np.ndarray
    iy: np.ndarray
    weights: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def _block_specs(disc: Discretization, kinds: Iterable[str]) -> List[Tuple[str, int, int]]:
    specs = []
    rows = disc.slices["interior"].stop - disc.slices["interior"].start
    chunk = disc.rule.chunk
    for kind in kinds:
        if kind not in PAIR_KINDS:
            raise InvalidParameterError(f"Unknown pair block kind: {kind}")
        if kind == "diagonal":
            if disc.rule.diagonal != "symmetric-difference":
                continue
            ncell = int(np.prod(disc.domain.cells))
            step = max(1, chunk // 4)
            specs.extend(("diagonal", s, min(s + step, ncell)) for s in range(0, ncell, step))
            continue
        if kind in ("cross", "tail"):
            other = "exterior" if kind == "cross" else "tail"
            if disc.slices[other].stop == disc.slices[other].start:
                continue
        specs.extend((kind, s, min(s + chunk, rows)) for s in range(0, rows, chunk))
    return specs


def _materialize(disc: Discretization, spec: Tuple[str, int, int], reverse: bool) -> PairBlock:
    kind, start, stop = spec
    P, W = disc.points, disc.weights
    a0 = disc.slices["interior"].start
    if kind == "diagonal":
        npa = INTERIOR_POINTS[disc.rule.interior] ** disc.domain.dim
        npb = INTERIOR_POINTS[COMPANION_RULE[disc.rule.interior]] ** disc.domain.dim
        b0 = disc.slices["companion"].start
        cells = np.arange(start, stop)
        A = a0 + cells[:, None] * npa + np.arange(npa)[None, :]
        B = b0 + cells[:, None] * npb + np.arange(npb)[None, :]
        ia = np.broadcast_to(A[:, :, None], (len(cells), npa, npb)).ravel()
        ib = np.broadcast_to(B[:, None, :], (len(cells), npa, npb)).ravel()
        ix = np.concatenate((ia, ib))
        iy = np.concatenate((ib, ia))
        w = 0.5 * W[ix] * W[iy]
    else:
        rows = np.arange(a0 + start, a0 + stop)
        other = {"interior": "interior", "cross": "exterior", "tail": "tail"}[kind]
        cols = disc.indices(other)
        ix = np.repeat(rows, cols.size)
        iy = np.tile(cols, rows.size)
        if kind == "interior" and disc.rule.diagonal == "symmetric-difference":
            keep = disc.cell_ids[ix] != disc.cell_ids[iy]
            ix, iy = ix[keep], iy[keep]
        w = W[ix] * W[iy]
    if disc.rule.diagonal == "epsilon-truncation":
        dist = np.linalg.norm(P[ix] - P[iy], axis=1)
        keep = dist >= disc.rule.epsilon
        ix, iy, w = ix[keep], iy[keep], w[keep]
    if reverse:
        ix, iy = iy, ix
    return PairBlock(kind, ix, iy, w, P[ix], P[iy])


def iter_pair_blocks(disc: Discretization, kinds: Iterable[str] = PAIR_KINDS,
                     reverse: bool = False) -> Iterator[PairBlock]:
    for spec in _block_specs(disc, kinds):
        yield _materialize(disc, spec, reverse)


def pair_sum(
    disc: Discretization,
    integrand: Callable[[PairBlock], np.ndarray],
    kinds: Iterable[str] = PAIR_KINDS,
    reverse: bool = False,
) -> Dict[str, float]:
    """Weighted sum of an integrand over pair blocks, grouped by block kind.

    Each block is reduced with ``np.dot`` and the block partials are combined
    with ``math.fsum`` in block order, independently of the worker count.

    Raises:
        NonfiniteIntegrandError: If the integrand is not finite on some pair.
    """
    specs = _block_specs(disc, kinds)

    def evaluate(spec):
        block = _materialize(disc, spec, reverse)
        if block.size == 0:
            return 0.0
        values = np.asarray(integrand(block), dtype=float)
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise NonfiniteIntegrandError(
                f"Integrand not finite at x={block.x[bad].tolist()}, y={block.y[bad].tolist()}"
            )
        return float(np.dot(values, block.weights))

    if _workers > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=_workers) as pool:
            partials = list(pool.map(evaluate, specs))
    else:
        partials = [evaluate(spec) for spec in specs]
    grouped: Dict[str, List[float]] = {kind: [] for kind in kinds}
    for spec, value in zip(specs, partials):
        grouped[spec[0]].append(value)
    return {kind: math.fsum(values) for kind, values in grouped.items()}


def point_sum(disc: Discretization, values: np.ndarray, name: str = "interior") -> float:
    """Single-integral quadrature over one block of the point table."""
    return float(np.dot(np.asarray(values, dtype=float), disc.weights[disc.slices[name]]))


@dataclass(frozen=True)
class QuadratureParts:
    interior: float
    cross: float
    tail: float
    tail_truncated: bool

    @property
    def total(self) -> float:
        return math.fsum((self.interior, self.cross, self.tail))


def integrate_Q(
    domain: Domain,
    rule: QuadratureRule,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    symmetric: bool = True,
    decay: Optional[float] = None,
    tail_bounded: bool = True,
) -> QuadratureParts:
    """Quadrature of f(x, y) over Q(Omega), split into its blocks.

    Args:
        domain: The domain Omega.
        rule: Quadrature rule.
        integrand: Vectorized f(x, y) on ``(k, n)`` point arrays.
        symmetric: If True, f(x, y) = f(y, x) is assumed and the
            Omega x Omega^c part is doubled instead of evaluated twice.
        decay: Tail decay exponent of f in |y|; enables analytic tail points.
        tail_bounded: Whether the caller could bound the tail.

    Returns:
        QuadratureParts with interior, cross and tail contributions.

    Raises:
        TailUnboundedError: If the tail policy is analytic but the tail is unbounded.
        NonfiniteIntegrandError: If the integrand is not finite.
    """
    if rule.tail == "analytic" and rule.uses_exterior and not tail_bounded:
        raise TailUnboundedError("Declared growth does not allow an analytic tail bound")
    disc = discretize(domain, rule, decay)

    def f(block: PairBlock) -> np.ndarray:
        return integrand(block.x, block.y)

    parts = pair_sum(disc, f)
    interior = math.fsum((parts["interior"], parts["diagonal"]))
    cross, tail = parts["cross"], parts["tail"]
    if symmetric:
        cross, tail = 2.0 * cross, 2.0 * tail
    else:
        back = pair_sum(disc, f, ("cross", "tail"), reverse=True)
        cross = math.fsum((cross, back["cross"]))
        tail = math.fsum((tail, back["tail"]))
    truncated = rule.uses_exterior and rule.tail == "truncate"
    return QuadratureParts(interior, cross, tail, truncated)


def double_integral_Q(
    domain: Domain,
    rule: QuadratureRule,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    symmetric: bool = True,
    decay: Optional[float] = None,
    tail_bounded: bool = True,
) -> float:
    """Quadrature of an integrand over Q(Omega); see ``integrate_Q``."""
    return integrate_Q(domain, rule, integrand, symmetric, decay, tail_bounded).total


# ---------------------------------------------------------------------------
# Radial quadrature for pointwise operators
# ---------------------------------------------------------------------------

def _ray_box_hits(x: np.ndarray, e: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> List[float]:
    """Positive distances at which the ray x + z e crosses the box boundary."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - x) / e
        t2 = (hi - x) / e
    tmin = np.where(e != 0, np.minimum(t1, t2), -np.inf)
    tmax = np.where(e != 0, np.maximum(t1, t2), np.inf)
    inside = np.all(np.where(e == 0, (x >= lo) & (x <= hi), True))
    if not inside:
        return []
    enter, leave = float(np.max(tmin)), float(np.min(tmax))
    if enter > leave:
        return []
    return [t for t in (enter, leave) if t > 0.0 and np.isfinite(t)]


def _radial_panels(start: float, far: float, breaks: Iterable[float]) -> np.ndarray:
    grid = [start]
    z = start
    while z < far:
        z *= 2.0
        grid.append(min(z, far))
    grid.extend(b for b in breaks if start < b < far)
    return np.unique(np.asarray(grid))


def radial_integral(
    x,
    density: Callable[[np.ndarray], np.ndarray],
    domain: Domain,
    *,
    decay: Optional[float] = None,
    breakpoints: Sequence[float] = (),
    epsilon: float = 0.0,
    radial_exponent: float = 0.0,
    tail: bool = True,
    nodes: int = config.RADIAL_NODES,
    angles: int = config.RADIAL_ANGLES,
    floor: float = config.RADIAL_FLOOR,
) -> float:
    """Integral of h(y) over R^n (or |y - x| > epsilon) via symmetric pairing.

    The integral is written as the sum over directions e of
    int_0^inf [h(x + z e) + h(x - z e)] z^(n-1) dz. Panels are geometric
    near zero, split at ``breakpoints`` and at box crossings, and closed by the
    substitution z = far * v^(-1/decay) beyond the exterior box. Without
    epsilon, the part below ``floor * diam`` is added as a power law with
    exponent ``radial_exponent``.

    Args:
        x: Evaluation point.
        density: Vectorized h on ``(k, n)`` points.
        domain: Domain providing geometry and the exterior box.
        decay: Decay exponent of the pairing beyond the box; None stops there.
        breakpoints: Radii where the pairing is not smooth.
        epsilon: Truncation radius; 0 means the full principal value.
        radial_exponent: Exponent alpha with pairing ~ z^alpha near 0.
        tail: Whether to add the substituted tail.

    Returns:
        The value of the integral.
    """
    n = domain.dim
    p = as_points(x, n)[0]
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    c = domain.center
    R = domain.r_ext
    scale = domain.diam
    start = epsilon if epsilon > 0 else floor * scale
    tv, tw = gauss_on(0.0, 1.0, config.TAIL_NODES)
    breaks = list(breakpoints)

    if n == 1:
        directions = [(np.array([1.0]), 1.0)]
    else:
        corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
        cuts = np.mod(np.arctan2(corners[:, 1] - p[1], corners[:, 0] - p[0]), np.pi)
        edges = np.unique(np.concatenate(([0.0, np.pi], cuts)))
        per_panel = max(2, angles // 4)
        directions = []
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a < 1e-14:
                continue
            th, wth = gauss_on(a, b, per_panel)
            directions.extend((np.array([math.cos(t), math.sin(t)]), w) for t, w in zip(th, wth))

    total = []
    for e, w_dir in directions:
        hits = []
        for sign in (1.0, -1.0):
            hits += _ray_box_hits(p, sign * e, lo, hi)
            hits += _ray_box_hits(p, sign * e, c - R, c + R)
        far = max([h for h in hits] + [R]) if hits else R
        z_edges = _radial_panels(start, far, breaks + hits)
        a, b = z_edges[:-1], z_edges[1:]
        xi, wi = gauss_legendre(nodes)
        z = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * xi[None, :]
        wz = (0.5 * (b - a))[:, None] * wi[None, :]
        z, wz = z.ravel(), wz.ravel()
        if tail and decay is not None:
            beta = 1.0 / decay
            zt = far * tv ** (-beta)
            wt = beta * far * tv ** (-beta - 1.0) * tw
            z = np.concatenate((z, zt))
            wz = np.concatenate((wz, wt))
        plus = p[None, :] + z[:, None] * e[None, :]
        minus = p[None, :] - z[:, None] * e[None, :]
        pairing = np.asarray(density(plus), dtype=float) + np.asarray(density(minus), dtype=float)
        jac = z ** (n - 1)
        values = pairing * jac
        if not np.all(np.isfinite(values)):
            raise NonfiniteIntegrandError(f"Radial integrand not finite at x={p.tolist()}")
        piece = float(np.dot(values, wz))
        if epsilon <= 0 and radial_exponent > -1.0:
            s0 = float(density(p[None, :] + start * e[None, :])[0]
                       + density(p[None, :] - start * e[None, :])[0])
            piece += s0 * start ** (n - 1) * start / (1.0 + radial_exponent)
        total.append(w_dir * piece)
    return math.fsum(total)


def extrapolate_epsilon(epsilons: Sequence[float], values: Sequence[float],
                        exponent: float) -> float:
    """Richardson extrapolation of V(eps) = V0 + C eps^exponent from the last two values."""
    if len(values) < 2:
        return float(values[-1])
    e1, e2 = float(epsilons[-2]), float(epsilons[-1])
    v1, v2 = float(values[-2]), float(values[-1])
    a1, a2 = e1 ** exponent, e2 ** exponent
    return (v2 * a1 - v1 * a2) / (a1 - a2)


def fractional_constant(n: int, s: float, mode: Optional[str] = None) -> float:
    """Normalization constant c_{n,s} of the fractional Laplacian."""
    mode = mode or config.NORMALIZATION
    if not 0.0 < s < 1.0:
        raise InvalidParameterError(f"s must lie in (0, 1), got {s}")
    if mode == "unit":
        return 1.0
    if mode != "standard":
        raise InvalidParameterError(f"Unsupported normalization: {mode}")
    return float(s * 4.0 ** s * special.gamma(0.5 * n + s)
                 / (np.pi ** (0.5 * n) * special.gamma(1.0 - s)))


def _kink_radii(u, p: np.ndarray) -> List[float]:
    radii = []
    for k in getattr(u, "kinks", ()) or ():
        d = float(np.linalg.norm(np.atleast_1d(k) - p))
        if d > 0:
            radii.append(d)
    return radii


def _check_operator_tail(u, s: float) -> None:
    if getattr(u, "affine_tail", False):
        return
    if getattr(u, "growth", 0.0) >= 2.0 * s:
        raise TailUnboundedError(
            f"Growth {u.growth} is not below 2s = {2 * s}; the operator tail diverges"
        )


def _fractional_density(u, p: np.ndarray, s: float, c: float) -> Callable[[np.ndarray], np.ndarray]:
    n = p.shape[0]
    ux = float(u(p[None, :])[0])

    def density(y: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(y - p[None, :], axis=1)
        return c * (ux - u(y)) * r ** (-n - 2.0 * s)

    return density


def fractional_laplacian_pv(u, x, s: float, c: Optional[float] = None) -> float:
    """(-Delta)^s u(x) through the symmetric second difference.

    Raises:
        InsufficientSmoothnessError: If u has no C2 patch at x.
        TailUnboundedError: If u grows too fast.
    """
    domain = u.domain
    p = as_points(x, domain.dim)[0]
    if not u.smooth_at(p):
        raise InsufficientSmoothnessError(f"No C2 patch declared at x={p.tolist()}")
    _check_operator_tail(u, s)
    c = fractional_constant(domain.dim, s) if c is None else c
    return radial_integral(
        p, _fractional_density(u, p, s, c), domain,
        decay=2.0 * s, breakpoints=_kink_radii(u, p), radial_exponent=1.0 - 2.0 * s,
    )


def truncated_fractional_laplacian(u, x, s: float, epsilon: float,
                                   c: Optional[float] = None) -> float:
    """c_{n,s} int_{|x-y|>epsilon} (u(x) - u(y)) |x - y|^(-n-2s) dy."""
    if epsilon <= 0:
        raise InvalidParameterError(f"Truncation radius must be positive, got {epsilon}")
    domain = u.domain
    p = as_points(x, domain.dim)[0]
    _check_operator_tail(u, s)
    c = fractional_constant(domain.dim, s) if c is None else c
    return radial_integral(
        p, _fractional_density(u, p, s, c), domain,
        decay=2.0 * s, breakpoints=_kink_radii(u, p), epsilon=epsilon,
    )


def cell_rule(domain: Domain, npts: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule over Omega with ``npts`` points per cell and axis."""
    edges = [domain.axis_edges(k) for k in range(domain.dim)]
    pts, w, _ = _cell_points(edges, npts)
    return pts, w


def node_weights(domain: Domain) -> np.ndarray:
    """Trapezoid weights of the vertex nodes, in ``node_points`` order."""
    per_axis = []
    for k in range(domain.dim):
        w = np.full(domain.cells[k] + 1, domain.spacing[k])
        w[0] = w[-1] = 0.5 * domain.spacing[k]
        per_axis.append(w)
    if domain.dim == 1:
        return per_axis[0]
    return np.outer(per_axis[0], per_axis[1]).ravel()
