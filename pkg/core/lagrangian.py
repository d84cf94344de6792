"""
Catalog of nonlocal and local Lagrangians.

This module provides:
- Kernels (fractional, truncated, Gaussian, custom) with a measured parity flag
- Reaction terms F(a, x) with first and second derivatives
- Local Lagrangians G_L(x, lambda, q) for mixed functionals
- ``make_lagrangian``: the family catalog, returning an immutable LagrangianSpec
- Structural certificates: pairwise symmetry, partial consistency,
  ellipticity (or its monotone substitute for the total-variation family)
  and convexity

Points are always ``(k, n)`` arrays; a, b are ``(k,)`` arrays. Families that
live on Omega x Omega take the indicator from the Domain passed at evaluation
time.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy import special
from scipy.stats import qmc

import config
from core.certificate import Certificate, Verdict
from core.errors import InvalidParameterError, KernelParityError, NotApplicableError
from core.mesh import Domain, as_points, fractional_constant

logger = logging.getLogger(__name__)

FAMILIES = (
    "fractional-quadratic",
    "fractional-p-dirichlet-with-reaction",
    "subgraph-perimeter",
    "peridynamic-difference",
    "convolution-reaction",
    "nonlocal-total-variation",
    "custom-table",
)

PointFn = Callable[[np.ndarray], np.ndarray]
ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _norm(z: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(z * z, axis=1))


def smoothed_sign(v: np.ndarray, delta: float = config.SIGN_SMOOTHING) -> np.ndarray:
    return v / np.sqrt(v * v + delta * delta)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """Interaction kernel K(z).

    Attributes:
        kind: fractional, truncated, gaussian or custom
        n: space dimension
        func: vectorized K on ``(k, n)`` arrays of z = x - y
        s: fractional order (fractional kernels)
        decay: K(z) ~ |z|^(-n-decay) at infinity; None for compact or fast decay
        support: radius beyond which K vanishes (or is negligible)
        even: whether K(z) = K(-z) held on the parity samples
    """

    kind: str
    n: int
    func: PointFn
    s: Optional[float] = None
    decay: Optional[float] = None
    support: Optional[float] = None
    even: bool = True
    scale: float = 1.0

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.func(as_points(z, self.n))


def _parity(func: PointFn, n: int) -> bool:
    z = qmc.Halton(d=n, seed=0).random(64) * 4.0 - 2.0
    return bool(np.array_equal(func(z), func(-z)))


def make_kernel(kind: str, n: int = 1, s: Optional[float] = None, radius: Optional[float] = None,
                width: Optional[float] = None, scale: Optional[float] = None,
                func: Optional[PointFn] = None) -> Kernel:
    """Build a kernel by kind.

    Raises:
        InvalidParameterError: If a parameter is missing or out of range.
    """
    if kind == "fractional":
        if s is None or not 0.0 < s < 1.0:
            raise InvalidParameterError(f"Fractional kernel needs s in (0, 1), got {s}")
        c = fractional_constant(n, s) if scale is None else float(scale)

        def fractional(z):
            return c * _norm(z) ** (-n - 2.0 * s)

        return Kernel("fractional", n, fractional, s=s, decay=2.0 * s, scale=c)
    if kind == "truncated":
        if radius is None or radius <= 0:
            raise InvalidParameterError(f"Truncated kernel needs a positive radius, got {radius}")
        c = 1.0 if scale is None else float(scale)

        def truncated(z):
            return np.where(_norm(z) < radius, c, 0.0)

        return Kernel("truncated", n, truncated, support=float(radius), scale=c)
    if kind == "gaussian":
        if width is None or width <= 0:
            raise InvalidParameterError(f"Gaussian kernel needs a positive width, got {width}")
        c = 1.0 if scale is None else float(scale)

        def gaussian(z):
            return c * np.exp(-np.sum(z * z, axis=1) / width ** 2)

        return Kernel("gaussian", n, gaussian, support=8.0 * width, scale=c)
    if kind == "custom":
        if func is None:
            raise InvalidParameterError("Custom kernel needs a callable")
        return Kernel("custom", n, func, support=radius, even=_parity(func, n))
    raise InvalidParameterError(f"Unsupported kernel kind: {kind}")


# ---------------------------------------------------------------------------
# Reactions and local Lagrangians
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reaction:
    """Reaction F(a, x) with its derivatives in a."""

    kind: str
    F: ScalarFn
    dF: ScalarFn
    d2F: ScalarFn


def make_reaction(kind: str, mu: float = 1.0, coefficient: Optional[PointFn] = None) -> Reaction:
    """Build a reaction term by kind.

    Kinds: zero, sine-layer (F' = sin(pi a) / pi), quadratic (mu a^2 / 2),
    quartic (mu a^4), linear (coefficient(x) * a).
    """
    zero = lambda a, x: np.zeros_like(np.asarray(a, dtype=float))
    if kind == "zero":
        return Reaction("zero", zero, zero, zero)
    if kind == "sine-layer":
        return Reaction(
            "sine-layer",
            lambda a, x: -(1.0 + np.cos(np.pi * a)) / np.pi ** 2,
            lambda a, x: np.sin(np.pi * a) / np.pi,
            lambda a, x: np.cos(np.pi * a),
        )
    if kind == "quadratic":
        return Reaction(
            "quadratic",
            lambda a, x: 0.5 * mu * a * a,
            lambda a, x: mu * a,
            lambda a, x: np.full_like(np.asarray(a, dtype=float), mu),
        )
    if kind == "quartic":
        return Reaction(
            "quartic",
            lambda a, x: mu * a ** 4,
            lambda a, x: 4.0 * mu * a ** 3,
            lambda a, x: 12.0 * mu * a ** 2,
        )
    if kind == "linear":
        if coefficient is None:
            raise InvalidParameterError("Linear reaction needs a coefficient function")
        return Reaction(
            "linear",
            lambda a, x: coefficient(x) * a,
            lambda a, x: coefficient(x) + 0.0 * a,
            zero,
        )
    raise InvalidParameterError(f"Unsupported reaction kind: {kind}")


@dataclass(frozen=True)
class LocalLagrangian:
    """Local Lagrangian G_L(x, lambda, q) with partials in lambda and q."""

    kind: str
    G: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    dG_lam: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    dG_q: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def make_local(kind: str, reaction: Optional[Reaction] = None) -> LocalLagrangian:
    """Dirichlet 1/2 |q|^2 or semilinear 1/2 |q|^2 - F(lambda, x)."""
    if kind == "dirichlet":
        return LocalLagrangian(
            "dirichlet",
            lambda x, lam, q: 0.5 * np.sum(q * q, axis=1),
            lambda x, lam, q: np.zeros(q.shape[0]),
            lambda x, lam, q: q,
        )
    if kind == "semilinear":
        if reaction is None:
            raise InvalidParameterError("Semilinear local Lagrangian needs a reaction")
        return LocalLagrangian(
            "semilinear",
            lambda x, lam, q: 0.5 * np.sum(q * q, axis=1) - reaction.F(lam, x),
            lambda x, lam, q: -reaction.dF(lam, x),
            lambda x, lam, q: q,
        )
    raise InvalidParameterError(f"Unsupported local Lagrangian: {kind}")


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

PairFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LagrangianSpec:
    """Immutable nonlocal Lagrangian G_N(x, y, a, b) with metadata.

    The pair part (``pair``, ``pair_da`` ...) excludes the reaction; the
    reaction enters as (kappa / |Omega|) 1_{Omega x Omega} (F(a, x) + F(b, y)),
    so it contributes kappa * int_Omega F(w) to the energy.
    """

    id: str
    n: int
    params: Dict[str, Any] = field(compare=False)
    pair: PairFn = field(compare=False)
    pair_da: PairFn = field(compare=False)
    pair_db: PairFn = field(compare=False)
    pair_daa: Optional[PairFn] = field(default=None, compare=False)
    pair_dbb: Optional[PairFn] = field(default=None, compare=False)
    pair_dab: Optional[PairFn] = field(default=None, compare=False)
    restricted: bool = False
    reaction: Optional[Reaction] = None
    reaction_coeff: float = 0.0
    kernel: Optional[Kernel] = None
    decay: Optional[float] = None
    support: Optional[float] = None
    growth_power: float = 2.0
    singular: bool = False
    radial_exponent: float = 0.0
    distributional: bool = False
    local_part: Optional[LocalLagrangian] = None

    # -- indicator handling -------------------------------------------------

    def _inside(self, x, y, domain: Optional[Domain]) -> Optional[np.ndarray]:
        if not (self.restricted or self.has_reaction):
            return None
        if domain is None:
            raise InvalidParameterError(f"{self.id} needs a domain for its Omega x Omega indicator")
        return domain.contains(x) & domain.contains(y)

    @property
    def has_reaction(self) -> bool:
        return self.reaction is not None and self.reaction.kind != "zero" and self.reaction_coeff != 0.0

    @property
    def has_second_partials(self) -> bool:
        return self.pair_dab is not None and self.pair_daa is not None and self.pair_dbb is not None

    # -- pair part ----------------------------------------------------------

    def pair_value(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        x, y = as_points(x, self.n), as_points(y, self.n)
        val = self.pair(x, y, np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        if self.restricted:
            val = np.where(self._inside(x, y, domain), val, 0.0)
        return val

    def pair_partial_a(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        x, y = as_points(x, self.n), as_points(y, self.n)
        val = self.pair_da(x, y, np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        if self.restricted:
            val = np.where(self._inside(x, y, domain), val, 0.0)
        return val

    def pair_partial_b(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        x, y = as_points(x, self.n), as_points(y, self.n)
        val = self.pair_db(x, y, np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        if self.restricted:
            val = np.where(self._inside(x, y, domain), val, 0.0)
        return val

    # -- full density -------------------------------------------------------

    def _reaction_term(self, fn: ScalarFn, x, a, inside, domain) -> np.ndarray:
        return np.where(inside, (self.reaction_coeff / domain.measure) * fn(a, x), 0.0)

    def g(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        """Energy density G_N(x, y, a, b)."""
        x, y = as_points(x, self.n), as_points(y, self.n)
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        val = self.pair_value(x, y, a, b, domain)
        if self.has_reaction:
            inside = self._inside(x, y, domain)
            val = val + self._reaction_term(self.reaction.F, x, a, inside, domain) \
                + self._reaction_term(self.reaction.F, y, b, inside, domain)
        return val

    def da_g(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        x, y = as_points(x, self.n), as_points(y, self.n)
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        val = self.pair_partial_a(x, y, a, b, domain)
        if self.has_reaction:
            val = val + self._reaction_term(self.reaction.dF, x, a, self._inside(x, y, domain), domain)
        return val

    def db_g(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        x, y = as_points(x, self.n), as_points(y, self.n)
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        val = self.pair_partial_b(x, y, a, b, domain)
        if self.has_reaction:
            val = val + self._reaction_term(self.reaction.dF, y, b, self._inside(x, y, domain), domain)
        return val

    def _second(self, fn: Optional[PairFn], x, y, a, b, domain) -> np.ndarray:
        if fn is None:
            raise NotApplicableError(f"{self.id} has no pointwise second partials")
        x, y = as_points(x, self.n), as_points(y, self.n)
        val = fn(x, y, np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        if self.restricted:
            val = np.where(self._inside(x, y, domain), val, 0.0)
        return val

    def daa_g(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        val = self._second(self.pair_daa, x, y, a, b, domain)
        if self.has_reaction:
            x, y = as_points(x, self.n), as_points(y, self.n)
            val = val + self._reaction_term(self.reaction.d2F, x, np.asarray(a, dtype=float),
                                            self._inside(x, y, domain), domain)
        return val

    def dbb_g(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        val = self._second(self.pair_dbb, x, y, a, b, domain)
        if self.has_reaction:
            x, y = as_points(x, self.n), as_points(y, self.n)
            val = val + self._reaction_term(self.reaction.d2F, y, np.asarray(b, dtype=float),
                                            self._inside(x, y, domain), domain)
        return val

    def dab_g(self, x, y, a, b, domain: Optional[Domain] = None) -> np.ndarray:
        return self._second(self.pair_dab, x, y, a, b, domain)

    # -- metadata -----------------------------------------------------------

    def tail_bounded(self, growth: float, affine_tail: bool = False) -> bool:
        """Whether the Omega x Omega^c tail of the density is finite for data of this growth.

        Affine exterior data is accepted for quadratic families: the tail
        nodes are placed symmetrically about Omega, so differences of
        energies between functions sharing the exterior data converge even
        though each energy is only defined up to a common constant.
        """
        if self.restricted or self.decay is None:
            return True
        if affine_tail and self.growth_power == 2.0 and growth <= 1.0:
            return True
        if self.id == "subgraph-perimeter":
            return growth < self.decay
        return self.growth_power * growth < self.decay

    def reaction_at(self, a, x) -> np.ndarray:
        if not self.has_reaction:
            return np.zeros(np.shape(a))
        return self.reaction.F(np.asarray(a, dtype=float), x)

    def reaction_slope(self, a, x) -> np.ndarray:
        if not self.has_reaction:
            return np.zeros(np.shape(a))
        return self.reaction.dF(np.asarray(a, dtype=float), x)

    def describe(self) -> Dict[str, Any]:
        out = {"id": self.id, "n": self.n}
        for key, value in sorted(self.params.items()):
            if isinstance(value, (int, float, str, bool)) or value is None:
                out[key] = value
        if self.reaction is not None:
            out["reaction"] = self.reaction.kind
        if self.kernel is not None:
            out["kernel"] = self.kernel.kind
        if self.local_part is not None:
            out["local_part"] = self.local_part.kind
        return out


def _swap(fn: PairFn) -> PairFn:
    """db(x, y, a, b) := da(y, x, b, a)."""
    return lambda x, y, a, b: fn(y, x, b, a)


def _check_s(s) -> float:
    if s is None or not 0.0 < float(s) < 1.0:
        raise InvalidParameterError(f"s must lie in (0, 1), got {s}")
    return float(s)


def _fractional_p(n: int, params: Dict[str, Any]) -> LagrangianSpec:
    s = _check_s(params.get("s"))
    p = float(params.get("p", 2.0))
    if p < 1.0:
        raise InvalidParameterError(f"p must be at least 1, got {p}")
    c = float(params["c"]) if params.get("c") is not None else fractional_constant(n, s)
    expo = -n - p * s

    def pair(x, y, a, b):
        return c * np.abs(a - b) ** p / (2.0 * p) * _norm(x - y) ** expo

    def da(x, y, a, b):
        d = a - b
        if p == 2.0:
            return 0.5 * c * d * _norm(x - y) ** expo
        if p < 2.0:
            mag = np.abs(d) ** (p - 1.0)
            return 0.5 * c * smoothed_sign(d) * mag * _norm(x - y) ** expo
        return 0.5 * c * np.abs(d) ** (p - 2.0) * d * _norm(x - y) ** expo

    second = None
    if p >= 2.0:
        def second(x, y, a, b):
            return 0.5 * c * (p - 1.0) * np.abs(a - b) ** (p - 2.0) * _norm(x - y) ** expo

    reaction = params.get("reaction")
    if isinstance(reaction, str):
        reaction = make_reaction(reaction, **params.get("reaction_params", {}))
    family = "fractional-quadratic" if params.get("_quadratic") else "fractional-p-dirichlet-with-reaction"
    clean = {k: v for k, v in params.items() if not k.startswith("_")}
    clean.update({"s": s, "p": p, "c": c})
    return LagrangianSpec(
        id=family, n=n, params=clean,
        pair=pair, pair_da=da, pair_db=_swap(da),
        pair_daa=second, pair_dbb=second,
        pair_dab=(lambda x, y, a, b: -second(x, y, a, b)) if second is not None else None,
        reaction=reaction, reaction_coeff=-0.5 if reaction is not None else 0.0,
        kernel=make_kernel("fractional", n, s=s, scale=c) if p == 2.0 else None,
        decay=p * s, growth_power=p, singular=True,
        radial_exponent=p - 1.0 - p * s, distributional=p < 2.0,
        local_part=params.get("local_part"),
    )


def _subgraph(n: int, params: Dict[str, Any]) -> LagrangianSpec:
    s = _check_s(params.get("s"))
    m = 0.5 * (n + s + 1.0)

    def gprime(tau):
        return tau * special.hyp2f1(0.5, m, 1.5, -tau * tau)

    def gfun(tau):
        return tau * gprime(tau) - ((1.0 + tau * tau) ** (1.0 - m) - 1.0) / (2.0 * (1.0 - m))

    def pair(x, y, a, b):
        r = _norm(x - y)
        return gfun((a - b) / r) * r ** (-(n + s - 1.0))

    def da(x, y, a, b):
        r = _norm(x - y)
        return gprime((a - b) / r) * r ** (-(n + s))

    def second(x, y, a, b):
        r = _norm(x - y)
        tau = (a - b) / r
        return (1.0 + tau * tau) ** (-m) * r ** (-(n + s + 1.0))

    return LagrangianSpec(
        id="subgraph-perimeter", n=n, params={"s": s},
        pair=pair, pair_da=da, pair_db=_swap(da),
        pair_daa=second, pair_dbb=second, pair_dab=lambda x, y, a, b: -second(x, y, a, b),
        decay=s, growth_power=1.0, singular=True, radial_exponent=-s,
    )


def _peridynamic(n: int, params: Dict[str, Any]) -> LagrangianSpec:
    kappa = float(params.get("kappa", 1.0))
    horizon = float(params.get("horizon", 0.5))
    if kappa <= 0 or horizon <= 0:
        raise InvalidParameterError("Peridynamic family needs positive kappa and horizon")

    def bond(x, y):
        r = _norm(x - y)
        return np.where(r < horizon, kappa / r, 0.0)

    def pair(x, y, a, b):
        return 0.5 * (a - b) ** 2 * bond(x, y)

    def da(x, y, a, b):
        return (a - b) * bond(x, y)

    return LagrangianSpec(
        id="peridynamic-difference", n=n, params={"kappa": kappa, "horizon": horizon},
        pair=pair, pair_da=da, pair_db=_swap(da),
        pair_daa=lambda x, y, a, b: bond(x, y), pair_dbb=lambda x, y, a, b: bond(x, y),
        pair_dab=lambda x, y, a, b: -bond(x, y),
        restricted=True, support=horizon, singular=True, radial_exponent=float(n),
    )


def _kernel_from(n: int, params: Dict[str, Any]) -> Kernel:
    kernel = params.get("kernel")
    if isinstance(kernel, Kernel):
        return kernel
    if isinstance(kernel, dict):
        return make_kernel(n=n, **kernel)
    raise InvalidParameterError("Family needs a kernel")


def _convolution(n: int, params: Dict[str, Any]) -> LagrangianSpec:
    kernel = _kernel_from(n, params)
    if not kernel.even:
        raise KernelParityError("Convolution family needs an even kernel")
    reaction = params.get("reaction") or make_reaction("zero")
    if isinstance(reaction, str):
        reaction = make_reaction(reaction, **params.get("reaction_params", {}))

    def pair(x, y, a, b):
        return -kernel.func(x - y) * a * b

    def da(x, y, a, b):
        return -kernel.func(x - y) * b

    zero = lambda x, y, a, b: np.zeros(np.shape(a))
    return LagrangianSpec(
        id="convolution-reaction", n=n, params={"kernel": kernel.kind},
        pair=pair, pair_da=da, pair_db=_swap(da),
        pair_daa=zero, pair_dbb=zero, pair_dab=lambda x, y, a, b: -kernel.func(x - y),
        restricted=True, reaction=reaction, reaction_coeff=0.5, kernel=kernel,
        support=kernel.support, growth_power=2.0, radial_exponent=float(n - 1),
    )


def _total_variation(n: int, params: Dict[str, Any]) -> LagrangianSpec:
    kernel = _kernel_from(n, params)
    delta = float(params.get("sign_smoothing", config.SIGN_SMOOTHING))

    def pair(x, y, a, b):
        return np.abs(a - b) * kernel.func(x - y)

    def da(x, y, a, b):
        return smoothed_sign(a - b, delta) * kernel.func(x - y)

    return LagrangianSpec(
        id="nonlocal-total-variation", n=n, params={"kernel": kernel.kind, "sign_smoothing": delta},
        pair=pair, pair_da=da, pair_db=_swap(da),
        kernel=kernel, decay=kernel.decay, support=kernel.support, growth_power=1.0,
        singular=kernel.kind == "fractional", radial_exponent=float(n - 1), distributional=True,
    )


CUSTOM_PRESETS = ("convex-nonelliptic", "asymmetric-example")


def _custom(n: int, params: Dict[str, Any]) -> LagrangianSpec:
    preset = params.get("preset")
    restricted = bool(params.get("restricted", False))
    if preset == "convex-nonelliptic":
        two = lambda x, y, a, b: np.full(np.shape(a), 2.0)
        g = lambda x, y, a, b: (a + b) ** 2
        da = lambda x, y, a, b: 2.0 * (a + b)
        db, daa, dbb, dab = da, two, two, two
        restricted = True
    elif preset == "asymmetric-example":
        zero = lambda x, y, a, b: np.zeros(np.shape(a))
        g = lambda x, y, a, b: a / _norm(x - y)
        da = lambda x, y, a, b: 1.0 / _norm(x - y)
        db, daa, dbb, dab = zero, zero, zero, zero
    elif preset is None:
        g = params.get("g")
        da = params.get("da")
        if g is None or da is None:
            raise InvalidParameterError("Custom spec needs g and da callables")
        db = params.get("db") or _swap(da)
        daa, dbb, dab = params.get("daa"), params.get("dbb"), params.get("dab")
    else:
        raise InvalidParameterError(f"Unknown custom preset: {preset}")

    if params.get("symmetrize"):
        raw_g, raw_da, raw_db = g, da, db
        g = lambda x, y, a, b: 0.5 * (raw_g(x, y, a, b) + raw_g(y, x, b, a))
        da = lambda x, y, a, b: 0.5 * (raw_da(x, y, a, b) + raw_db(y, x, b, a))
        db = _swap(da)
        if daa is not None and dbb is not None and dab is not None:
            raw_daa, raw_dbb, raw_dab = daa, dbb, dab
            daa = lambda x, y, a, b: 0.5 * (raw_daa(x, y, a, b) + raw_dbb(y, x, b, a))
            dbb = lambda x, y, a, b: daa(y, x, b, a)
            dab = lambda x, y, a, b: 0.5 * (raw_dab(x, y, a, b) + raw_dab(y, x, b, a))

    return LagrangianSpec(
        id="custom-table", n=n,
        params={"preset": preset, "symmetrize": bool(params.get("symmetrize", False)),
                "restricted": restricted},
        pair=g, pair_da=da, pair_db=db, pair_daa=daa, pair_dbb=dbb, pair_dab=dab,
        restricted=restricted, decay=params.get("decay"),
        growth_power=float(params.get("growth_power", 2.0)),
        singular=preset == "asymmetric-example", radial_exponent=float(n - 1),
        distributional=bool(params.get("distributional", False)),
    )


def make_lagrangian(id: str, params: Optional[Dict[str, Any]] = None) -> LagrangianSpec:
    """Build a Lagrangian from the catalog.

    Args:
        id: Family tag, one of ``FAMILIES``.
        params: Family parameters. Common keys: ``n`` (dimension, default 1),
            ``s``, ``p``, ``c``, ``reaction`` (name or Reaction),
            ``reaction_params``, ``kernel`` (Kernel or dict), ``local_part``.

    Returns:
        The immutable LagrangianSpec.

    Raises:
        InvalidParameterError: If parameters are outside the family's range.
        KernelParityError: If the convolution family gets an odd kernel.
    """
    params = dict(params or {})
    n = int(params.pop("n", 1))
    if n not in (1, 2):
        raise InvalidParameterError(f"Dimension must be 1 or 2, got {n}")
    if id == "fractional-quadratic":
        params.update({"p": 2.0, "_quadratic": True})
        params.pop("reaction", None)
        return _fractional_p(n, params)
    if id == "fractional-p-dirichlet-with-reaction":
        return _fractional_p(n, params)
    if id == "subgraph-perimeter":
        return _subgraph(n, params)
    if id == "peridynamic-difference":
        return _peridynamic(n, params)
    if id == "convolution-reaction":
        return _convolution(n, params)
    if id == "nonlocal-total-variation":
        return _total_variation(n, params)
    if id == "custom-table":
        return _custom(n, params)
    raise InvalidParameterError(f"Unsupported Lagrangian family: {id}")


def with_local_part(spec: LagrangianSpec, local: LocalLagrangian) -> LagrangianSpec:
    """Attach a local Lagrangian, giving the mixed functional E_M = E_N + E_L."""
    return replace(spec, local_part=local)


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------

def _default_domain(n: int) -> Domain:
    return Domain.box((0.0,) * n, (1.0,) * n, (4,) * n)


def _samples(spec: LagrangianSpec, count: int, domain: Domain, seed: int = 0):
    """Quasi-random (x, y, a, b) covering Omega and a band around it."""
    n = spec.n
    u = qmc.Halton(d=2 * n + 2, seed=seed).random(count)
    lo = np.asarray(domain.lower) - 0.5 * domain.widths
    width = 2.0 * domain.widths
    x = lo + width * u[:, :n]
    y = lo + width * u[:, n:2 * n]
    a = 4.0 * u[:, 2 * n] - 2.0
    b = 4.0 * u[:, 2 * n + 1] - 2.0
    keep = _norm(x - y) > 0.02 * domain.diam
    return x[keep], y[keep], a[keep], b[keep]


def _sample_payload(x, y, a, b, i: int) -> Dict[str, Any]:
    return {"x": x[i].tolist(), "y": y[i].tolist(), "a": float(a[i]), "b": float(b[i])}


def check_pairwise_symmetry(spec: LagrangianSpec, sample_count: int = config.STRUCTURE_SAMPLES,
                            domain: Optional[Domain] = None) -> Certificate:
    """Certify G(x, y, a, b) = G(y, x, b, a) on quasi-random samples."""
    if sample_count < 1:
        raise InvalidParameterError("sample_count must be at least 1")
    domain = domain or _default_domain(spec.n)
    x, y, a, b = _samples(spec, sample_count, domain)
    forward = spec.g(x, y, a, b, domain)
    backward = spec.g(y, x, b, a, domain)
    dev = np.abs(forward - backward) / np.maximum(1.0, np.abs(forward))
    worst = int(np.argmax(dev)) if dev.size else 0
    max_dev = float(dev[worst]) if dev.size else 0.0
    tol = config.SYMMETRY_TOL
    ok = max_dev <= tol
    logger.info(f"Pairwise symmetry of {spec.id}: max deviation {max_dev:.3e}")
    return Certificate(
        property_id="pairwise-symmetry",
        verdict=Verdict.PASS if ok else Verdict.FAIL,
        margin=tol - max_dev,
        tolerance=tol,
        counterexample=None if ok else _sample_payload(x, y, a, b, worst),
        details={"spec": spec.describe(), "samples": int(dev.size), "max_deviation": max_dev},
    )


def check_partials(spec: LagrangianSpec, sample_count: int = config.STRUCTURE_SAMPLES,
                   domain: Optional[Domain] = None) -> Certificate:
    """Compare da_g, db_g with centered differences and db_g with swapped da_g."""
    domain = domain or _default_domain(spec.n)
    x, y, a, b = _samples(spec, sample_count, domain, seed=1)
    if spec.distributional:
        keep = np.abs(a - b) > 1e-3
        x, y, a, b = x[keep], y[keep], a[keep], b[keep]
    ha = 1e-5 * (1.0 + np.abs(a))
    hb = 1e-5 * (1.0 + np.abs(b))
    fd_a = (spec.g(x, y, a + ha, b, domain) - spec.g(x, y, a - ha, b, domain)) / (2.0 * ha)
    fd_b = (spec.g(x, y, a, b + hb, domain) - spec.g(x, y, a, b - hb, domain)) / (2.0 * hb)
    da = spec.da_g(x, y, a, b, domain)
    db = spec.db_g(x, y, a, b, domain)
    floor = 1e-8 * max(1.0, float(np.max(np.abs(da), initial=0.0)))
    err_a = np.abs(fd_a - da) / np.maximum(np.maximum(np.abs(da), np.abs(fd_a)), floor)
    err_b = np.abs(fd_b - db) / np.maximum(np.maximum(np.abs(db), np.abs(fd_b)), floor)
    swap_dev = np.abs(db - spec.da_g(y, x, b, a, domain))
    worst = float(max(np.max(err_a, initial=0.0), np.max(err_b, initial=0.0)))
    tol = config.PARTIALS_RTOL
    ok = worst <= tol and float(np.max(swap_dev, initial=0.0)) == 0.0
    payload = None
    if not ok:
        i = int(np.argmax(np.maximum(err_a, err_b)))
        payload = _sample_payload(x, y, a, b, i)
    return Certificate(
        property_id="partial-consistency",
        verdict=Verdict.PASS if ok else Verdict.FAIL,
        margin=tol - worst,
        tolerance=tol,
        counterexample=payload,
        details={"spec": spec.describe(), "max_relative_error": worst,
                 "max_swap_deviation": float(np.max(swap_dev, initial=0.0))},
    )


def check_ellipticity(spec: LagrangianSpec, sample_count: int = config.STRUCTURE_SAMPLES,
                      domain: Optional[Domain] = None) -> Certificate:
    """Certify d2G/dadb <= 0, or monotonicity of b -> dG/da for distributional families.

    Raises:
        NotApplicableError: If neither second partials nor a monotone fallback exist.
    """
    domain = domain or _default_domain(spec.n)
    x, y, a, b = _samples(spec, sample_count, domain, seed=2)
    tol = config.ELLIPTICITY_TOL
    if spec.pair_dab is not None and not spec.distributional:
        dab = spec.dab_g(x, y, a, b, domain)
        i = int(np.argmax(dab))
        worst = float(dab[i])
        ok = worst <= tol
        worst = worst - tol
        mode = "mixed-partial"
    elif spec.distributional:
        grid = np.linspace(-2.0, 2.0, 33)
        k = x.shape[0]
        xs = np.repeat(x, grid.size, axis=0)
        ys = np.repeat(y, grid.size, axis=0)
        As = np.repeat(a, grid.size)
        Bs = np.tile(grid, k)
        da = spec.da_g(xs, ys, As, Bs, domain).reshape(k, grid.size)
        steps = np.diff(da, axis=1)
        rise = steps - tol * np.maximum(1.0, np.abs(da[:, 1:]))
        i = int(np.argmax(np.max(rise, axis=1)))
        worst = float(np.max(rise[i]))
        ok = worst <= 0.0
        mode = "monotone-partial"
    else:
        raise NotApplicableError(f"{spec.id} has neither a mixed partial nor a monotone fallback")
    logger.info(f"Ellipticity of {spec.id} ({mode}): worst {worst:.3e}")
    return Certificate(
        property_id="ellipticity",
        verdict=Verdict.PASS if ok else Verdict.FAIL,
        margin=-worst,
        tolerance=tol,
        counterexample=None if ok else _sample_payload(x, y, a, b, i),
        details={"spec": spec.describe(), "mode": mode, "worst": worst},
    )


def check_convexity(spec: LagrangianSpec, sample_count: int = config.STRUCTURE_SAMPLES,
                    domain: Optional[Domain] = None) -> Certificate:
    """Certify convexity of (a, b) -> G through the Hessian at samples.

    Raises:
        NotApplicableError: If second partials are not available.
    """
    if not spec.has_second_partials or spec.distributional:
        raise NotApplicableError(f"{spec.id} has no pointwise second partials")
    domain = domain or _default_domain(spec.n)
    x, y, a, b = _samples(spec, sample_count, domain, seed=3)
    daa = spec.daa_g(x, y, a, b, domain)
    dbb = spec.dbb_g(x, y, a, b, domain)
    dab = spec.dab_g(x, y, a, b, domain)
    scale = np.maximum(1.0, np.maximum(np.abs(daa), np.maximum(np.abs(dbb), np.abs(dab))))
    tol = config.CONVEXITY_TOL
    slack_diag = daa / scale + tol
    slack_det = (daa * dbb - dab * dab) / scale ** 2 + tol
    slack = np.minimum(slack_diag, slack_det)
    i = int(np.argmin(slack))
    ok = bool(slack[i] >= 0.0)
    return Certificate(
        property_id="convexity",
        verdict=Verdict.PASS if ok else Verdict.FAIL,
        margin=float(slack[i]) - tol,
        tolerance=tol,
        counterexample=None if ok else _sample_payload(x, y, a, b, i),
        details={"spec": spec.describe(), "min_scaled_slack": float(slack[i]) - tol},
    )
