"""
Experiment configuration and certifier dispatch.

This module provides:
- load_config: read an experiment YAML file
- parse_config: validate it into an ExperimentConfig (ConfigInvalidError names the key)
- Experiment: the objects a configuration describes (domain, Lagrangian,
  named functions, field, competitors), built lazily
- CERTIFIERS: certifier name -> runner, each returning a Certificate
- run_experiment: run every declared certifier and compare with the expected verdict

The schema is documented in docs/experiment_config.md.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import yaml

import config
from core.certificate import Certificate, Verdict, combine
from core.errors import ConfigInvalidError, InvalidParameterError
from core.field import DiscreteFunction, Field, affine_field, check_field, shift_field, translation_field
from core.lagrangian import (
    FAMILIES,
    LagrangianSpec,
    check_convexity,
    check_ellipticity,
    check_pairwise_symmetry,
    check_partials,
    make_lagrangian,
)
from core.mesh import Domain, QuadratureRule, fractional_laplacian_pv, refine
from core.nltv import NodeSet, coarea_check, nltv_calibration_crosscheck, nonlocal_mean_curvature
from core.verify import (
    CompetitorSet,
    bump_function,
    calibration_forms_check,
    certify_calibration,
    certify_calibration_refined,
    certify_minimality,
    layer_error,
    null_lagrangian_check,
    search_calibration_violation,
    solve_layer_1d,
    strong_comparison_probe,
    sub_super_field_check,
)
from core.viscosity import (
    ProbeConfig,
    barron_jensen_oracle,
    energy_comparison_check,
    one_sided_competitors,
    one_sided_minimizer_check,
    quadratic_probe,
    sliding_subsolution_experiment,
    sliding_weak_field,
    viscosity_subsolution_test,
    viscosity_supersolution_test,
)

logger = logging.getLogger(__name__)

EXPECTATIONS = tuple(v.value for v in Verdict)
RULE_KEYS = ("interior", "diagonal", "epsilon", "epsilon_schedule", "tail", "exterior", "tail_nodes", "t_nodes")
TOP_LEVEL_KEYS = ("name", "seed", "domain", "lagrangian", "rule", "functions", "field", "anchor",
                  "competitors", "refine", "certifiers", "description")


def load_config(path: str) -> Dict[str, Any]:
    """Load an experiment configuration from a YAML file.

    Raises:
        FileNotFoundError: If the file doesn't exist
        yaml.YAMLError: If the YAML is invalid
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Experiment configuration not found: {path}")
    except yaml.YAMLError as e:
        raise yaml.YAMLError(f"Invalid YAML in {path}: {str(e)}")
    if not isinstance(raw, dict):
        raise ConfigInvalidError(f"{path}: the top level must be a mapping")
    return raw


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertifierEntry:
    """One certifier run: registry name, expected verdict and parameters."""

    check: str
    expect: str = "pass"
    params: Dict[str, Any] = field(default_factory=dict)
    label: Optional[str] = None

    @property
    def name(self) -> str:
        return self.label or self.check


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration."""

    name: str
    domain: Dict[str, Any]
    lagrangian: Dict[str, Any]
    certifiers: List[CertifierEntry]
    seed: Optional[int] = None
    rule: Dict[str, Any] = field(default_factory=dict)
    functions: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    field_spec: Optional[Dict[str, Any]] = None
    anchor: float = 0.0
    competitors: Dict[str, Any] = field(default_factory=dict)
    refine: int = 0


def _require(raw: Dict[str, Any], key: str, kind, where: str = ""):
    path = f"{where}{key}"
    if key not in raw:
        raise ConfigInvalidError(f"Missing required key '{path}'")
    value = raw[key]
    if not isinstance(value, kind):
        raise ConfigInvalidError(f"Key '{path}' has the wrong type: {type(value).__name__}")
    return value


def _mapping(raw: Dict[str, Any], key: str) -> Dict[str, Any]:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigInvalidError(f"Key '{key}' must be a mapping")
    return value


def _parse_certifiers(items: List[Any]) -> List[CertifierEntry]:
    entries = []
    for i, item in enumerate(items):
        where = f"certifiers[{i}]."
        if not isinstance(item, dict):
            raise ConfigInvalidError(f"Key 'certifiers[{i}]' must be a mapping")
        check = _require(item, "check", str, where)
        if check not in CERTIFIERS:
            raise ConfigInvalidError(f"Key '{where}check' names an unknown certifier: {check}")
        expect = item.get("expect", "pass")
        if expect not in EXPECTATIONS:
            raise ConfigInvalidError(f"Key '{where}expect' must be one of {EXPECTATIONS}, got {expect}")
        params = item.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigInvalidError(f"Key '{where}params' must be a mapping")
        for key in REQUIRED_PARAMS.get(check, ()):
            if key not in params:
                raise ConfigInvalidError(f"Missing required key '{where}params.{key}'")
        entries.append(CertifierEntry(check, expect, params, item.get("label")))
    return entries


def parse_config(raw: Dict[str, Any], seed: Optional[int] = None,
                 refine_levels: Optional[int] = None) -> ExperimentConfig:
    """Validate a raw configuration; ``seed`` and ``refine_levels`` override the file.

    Raises:
        ConfigInvalidError: Naming the first offending key.
    """
    unknown = sorted(set(raw) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigInvalidError(f"Unknown top-level key '{unknown[0]}'")
    name = _require(raw, "name", str)
    domain = _require(raw, "domain", dict)
    for key in ("lower", "upper", "cells"):
        _require(domain, key, list, "domain.")
    if not len(domain["lower"]) == len(domain["upper"]) == len(domain["cells"]):
        raise ConfigInvalidError("Keys 'domain.lower', 'domain.upper' and 'domain.cells' differ in length")
    lagrangian = _require(raw, "lagrangian", dict)
    family = _require(lagrangian, "id", str, "lagrangian.")
    if family not in FAMILIES:
        raise ConfigInvalidError(f"Key 'lagrangian.id' names an unknown family: {family}")
    rule = _mapping(raw, "rule")
    bad_rule = sorted(set(rule) - set(RULE_KEYS))
    if bad_rule:
        raise ConfigInvalidError(f"Unknown key 'rule.{bad_rule[0]}'")
    functions = _mapping(raw, "functions")
    for fname, spec in functions.items():
        if not isinstance(spec, dict):
            raise ConfigInvalidError(f"Key 'functions.{fname}' must be a mapping")
        kind = _require(spec, "kind", str, f"functions.{fname}.")
        if kind not in FUNCTION_PRESETS:
            raise ConfigInvalidError(f"Key 'functions.{fname}.kind' names an unknown function: {kind}")
    fld = raw.get("field")
    if fld is not None:
        if not isinstance(fld, dict):
            raise ConfigInvalidError("Key 'field' must be a mapping")
        kind = _require(fld, "kind", str, "field.")
        if kind not in FIELD_KINDS:
            raise ConfigInvalidError(f"Key 'field.kind' names an unknown field: {kind}")
        if kind != "affine" and "function" not in fld:
            raise ConfigInvalidError(f"Missing required key 'field.function' for a {kind} field")
        ref = fld.get("function")
        if ref is not None and ref not in functions:
            raise ConfigInvalidError(f"Key 'field.function' references an undefined function: {ref}")
    certifiers = _parse_certifiers(_require(raw, "certifiers", list))
    if not certifiers:
        raise ConfigInvalidError("Key 'certifiers' must list at least one certifier")
    for i, entry in enumerate(certifiers):
        if entry.check in FIELD_CERTIFIERS and fld is None:
            raise ConfigInvalidError(f"Key 'certifiers[{i}]' ({entry.check}) needs the key 'field'")
        if entry.check in FUNCTION_CERTIFIERS and "function" not in entry.params and fld is None:
            raise ConfigInvalidError(f"Key 'certifiers[{i}].params.function' is required without a field")
        ref = entry.params.get("function")
        if ref is not None and ref not in functions:
            raise ConfigInvalidError(
                f"Key 'certifiers[{i}].params.function' references an undefined function: {ref}"
            )
    seed = raw.get("seed") if seed is None else seed
    if seed is not None and not isinstance(seed, int):
        raise ConfigInvalidError("Key 'seed' must be an integer")
    if seed is None and any(e.check in RANDOM_CERTIFIERS for e in certifiers):
        raise ConfigInvalidError("Key 'seed' is required by the randomized certifiers of this experiment")
    levels = int(raw.get("refine", 0)) if refine_levels is None else int(refine_levels)
    if not 0 <= levels <= 3:
        raise ConfigInvalidError(f"Key 'refine' must be between 0 and 3, got {levels}")
    return ExperimentConfig(
        name=name, domain=domain, lagrangian=lagrangian, certifiers=certifiers, seed=seed,
        rule=rule, functions=functions, field_spec=fld, anchor=float(raw.get("anchor", 0.0)),
        competitors=_mapping(raw, "competitors"), refine=levels,
    )


# ---------------------------------------------------------------------------
# Named functions and fields
# ---------------------------------------------------------------------------

def _coordinate(x: np.ndarray) -> np.ndarray:
    return x[:, 0]


def _affine(domain: Domain, p: Dict[str, Any]) -> DiscreteFunction:
    slope = np.asarray(p.get("slope", [1.0] + [0.0] * (domain.dim - 1)), dtype=float)
    offset = float(p.get("offset", 0.0))
    return DiscreteFunction.from_callable(domain, lambda x: x @ slope + offset,
                                          growth=1.0, affine_tail=True, lipschitz=float(np.linalg.norm(slope)))


def _arctan_layer(domain: Domain, p: Dict[str, Any]) -> DiscreteFunction:
    shift, scale = float(p.get("shift", 0.0)), float(p.get("scale", 1.0))
    return DiscreteFunction.from_callable(
        domain, lambda x: (2.0 / np.pi) * np.arctan((_coordinate(x) - shift) / scale),
        sup_bound=1.0, growth=0.0, lipschitz=2.0 / (np.pi * scale),
    )


def _arctan_dip(domain: Domain, p: Dict[str, Any]) -> DiscreteFunction:
    """The arctan layer minus a compact dip depth * (1 - ((x - center) / radius)^2)^4."""
    center, radius = float(p.get("center", 0.5)), float(p.get("radius", 0.5))
    depth = float(p.get("depth", 0.3))

    def func(x):
        z = (_coordinate(x) - center) / radius
        dip = np.where(np.abs(z) < 1.0, (1.0 - np.minimum(z * z, 1.0)) ** 4, 0.0)
        return (2.0 / np.pi) * np.arctan(_coordinate(x)) - depth * dip

    return DiscreteFunction.from_callable(domain, func, sup_bound=1.0 + depth, growth=0.0)


def _corner(domain: Domain, p: Dict[str, Any]) -> DiscreteFunction:
    center = float(p.get("center", 0.0))
    return DiscreteFunction.from_callable(
        domain, lambda x: np.abs(_coordinate(x) - center),
        growth=1.0, affine_tail=True, kinks=(center,), lipschitz=1.0,
        smooth=lambda q: bool(q[0] != center),
    )


def _clamped_ramp(domain: Domain, p: Dict[str, Any]) -> DiscreteFunction:
    slope = float(p.get("slope", 1.0))
    return DiscreteFunction.clamped(domain, lambda x: slope * _coordinate(x), lipschitz=abs(slope))


def _step(domain: Domain, p: Dict[str, Any]) -> DiscreteFunction:
    at = float(p.get("at", 0.0))
    return DiscreteFunction.from_callable(domain, lambda x: (_coordinate(x) > at).astype(float),
                                          sup_bound=1.0, growth=0.0, smooth=False, kinks=(at,))


def _bumped(domain: Domain, p: Dict[str, Any]) -> DiscreteFunction:
    """A clamped ramp plus a bump supported inside Omega."""
    base = _clamped_ramp(domain, p)
    center = np.atleast_1d(np.asarray(p.get("center", domain.center), dtype=float))
    radius = np.atleast_1d(np.asarray(p.get("radius", 0.25 * domain.widths), dtype=float))
    height = float(p.get("height", 0.1))
    bump = bump_function(center, radius)
    return base.with_formula(lambda x: base(x) + height * bump(x))


FUNCTION_PRESETS: Dict[str, Callable[[Domain, Dict[str, Any]], DiscreteFunction]] = {
    "affine": _affine,
    "arctan-layer": _arctan_layer,
    "arctan-dip": _arctan_dip,
    "corner": _corner,
    "clamped-ramp": _clamped_ramp,
    "clamped-ramp-bump": _bumped,
    "step": _step,
}

FIELD_KINDS = ("affine", "translation", "shift")


class Experiment:
    """The objects an ExperimentConfig describes, built on first use."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg

    @cached_property
    def domain(self) -> Domain:
        d = self.cfg.domain
        try:
            domain = Domain.box(d["lower"], d["upper"], d["cells"],
                                exterior_factor=d.get("exterior_factor"),
                                exterior_cells=d.get("exterior_cells"))
        except InvalidParameterError as e:
            raise ConfigInvalidError(f"Key 'domain' is invalid: {str(e)}")
        if self.cfg.refine:
            domain = refine(domain, 2 ** self.cfg.refine)
        return domain

    @cached_property
    def spec(self) -> LagrangianSpec:
        params = dict(self.cfg.lagrangian.get("params") or {})
        params.setdefault("n", self.domain.dim)
        try:
            return make_lagrangian(self.cfg.lagrangian["id"], params)
        except (InvalidParameterError, TypeError) as e:
            raise ConfigInvalidError(f"Key 'lagrangian.params' is invalid: {str(e)}")

    @cached_property
    def rule(self) -> QuadratureRule:
        try:
            return QuadratureRule(**self.cfg.rule)
        except InvalidParameterError as e:
            raise ConfigInvalidError(f"Key 'rule' is invalid: {str(e)}")

    @cached_property
    def functions(self) -> Dict[str, DiscreteFunction]:
        out = {}
        for name, spec in self.cfg.functions.items():
            params = {k: v for k, v in spec.items() if k != "kind"}
            out[name] = FUNCTION_PRESETS[spec["kind"]](self.domain, params)
        return out

    def function(self, name: Optional[str]) -> DiscreteFunction:
        """A named function; without a name, the anchor leaf of the field."""
        if name is None:
            return self.field.leaf_function(self.cfg.anchor, self.domain)
        return self.functions[name]

    @cached_property
    def field(self) -> Field:
        f = self.cfg.field_spec
        if f is None:
            raise ConfigInvalidError("Key 'field' is required here")
        t_range = tuple(f.get("t_range", (-1.0, 1.0)))
        n = self.domain.dim
        if f["kind"] == "affine":
            return affine_field(n, t_range, f.get("slope"))
        base = self.function(f.get("function"))
        if f["kind"] == "translation":
            return translation_field(base, int(f.get("axis", 0)), t_range, name=f.get("name", "translation"))
        return shift_field(base, lambda x: np.ones(x.shape[0]), t_range, n, name=f.get("name", "shift"))

    @cached_property
    def competitors(self) -> CompetitorSet:
        c = self.cfg.competitors
        return CompetitorSet(
            recipe=c.get("recipe", "bump"), count=int(c.get("count", config.DEFAULT_COMPETITORS)),
            seed=int(self.cfg.seed or 0), amplitude=float(c.get("amplitude", 0.1)),
            blend=float(c.get("blend", 0.0)),
        )

    @property
    def seed(self) -> int:
        return int(self.cfg.seed or 0)


# ---------------------------------------------------------------------------
# Certifiers
# ---------------------------------------------------------------------------

def _structure(check):
    def run(exp: Experiment, p: Dict[str, Any]) -> Certificate:
        return check(exp.spec, int(p.get("samples", config.STRUCTURE_SAMPLES)), exp.domain)
    return run


def _field_check(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    return check_field(exp.field, exp.domain, int(p.get("samples", 200)))


def _calibration(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    levels = int(p.get("levels", 1))
    if levels > 1:
        return certify_calibration_refined(exp.spec, exp.field, exp.cfg.anchor, exp.domain, exp.competitors,
                                           exp.rule, int(p.get("leaves", 5)), levels)
    return certify_calibration(exp.spec, exp.field, exp.cfg.anchor, exp.domain, exp.competitors,
                               exp.rule, int(p.get("leaves", 5)))


def _minimality(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    return certify_minimality(exp.spec, exp.field, exp.cfg.anchor, exp.domain, exp.competitors, exp.rule)


def _null_lagrangian(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    return null_lagrangian_check(exp.spec, exp.field, exp.cfg.anchor, exp.domain, exp.competitors,
                                 exp.rule, int(p.get("levels", 2)), float(p.get("rtol", config.SPREAD_RTOL)))


def _calibration_forms(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    return calibration_forms_check(exp.spec, exp.field, exp.cfg.anchor, exp.domain, exp.competitors, exp.rule)


def _violation_search(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    return search_calibration_violation(exp.spec, exp.field, exp.cfg.anchor, exp.domain,
                                        int(p.get("budget", 500)), exp.seed, exp.rule)


def _sub_super(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    return sub_super_field_check(exp.spec, exp.field, exp.cfg.anchor, exp.domain,
                                 int(p.get("leaves", 3)), int(p.get("points", 8)), float(p.get("tol", 1e-6)))


def _strong_comparison(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    """Ordered pairs u <= v = u + a (1 - exp(-|x - x0|^2 / r^2)) touching at random x0."""
    u = exp.function(p.get("function"))
    rng = np.random.default_rng(exp.seed)
    domain = exp.domain
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    margin = 0.1 * domain.widths
    parts = []
    for i in range(int(p.get("pairs", 100))):
        x0 = rng.uniform(lo + margin, hi - margin)
        a = rng.uniform(0.01, float(p.get("amplitude", 0.2)))
        r = rng.uniform(0.1, 0.5) * domain.diam

        def gap(x, x0=x0, a=a, r=r):
            return a * (1.0 - np.exp(-np.sum((x - x0) ** 2, axis=1) / r ** 2))

        v = DiscreteFunction.from_callable(domain, lambda x, gap=gap: u(x) + gap(x),
                                           growth=u.growth, affine_tail=False, kinks=u.kinks)
        cert = strong_comparison_probe(exp.spec, domain, u, v, x0, float(p.get("tol", 1e-8)))
        parts.append(Certificate(f"pair-{i}", cert.verdict, cert.margin, cert.tolerance,
                                 counterexample=cert.counterexample))
    return combine("strong-comparison", parts, details={"pairs": len(parts)})


def _layer_oracle(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    w = solve_layer_1d(exp.spec, float(p.get("half_width", config.LAYER_HALF_WIDTH)),
                       int(p.get("nodes", config.LAYER_NODES)), float(p.get("damping", config.LAYER_DAMPING)),
                       int(p.get("max_iter", config.LAYER_MAX_ITER)), p.get("guess", "odd"))
    err, shift = layer_error(w, p.get("window"))
    tol = float(p.get("tol", 1e-2))
    ok = err <= tol
    return Certificate(
        "layer-oracle", Verdict.PASS if ok else Verdict.FAIL, tol - err, tol,
        counterexample=None if ok else {"error": err, "shift": shift, "profile": w.to_csv()},
        details={"error": err, "shift": shift, "nodes": int(w.values.size)},
    )


def _operator_residual(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    """sup |(-Delta)^s u - F'(u)| over sampled interior points."""
    spec = exp.spec
    u = exp.function(p.get("function"))
    s, c = float(spec.params["s"]), float(spec.params["c"])
    count = int(p.get("points", 20))
    inset = float(p.get("inset", 0.1))
    lo, hi = np.asarray(exp.domain.lower), np.asarray(exp.domain.upper)
    pad = inset * exp.domain.widths
    xs = np.linspace(lo + pad, hi - pad, count)
    rows = []
    for x in xs:
        lhs = fractional_laplacian_pv(u, x, s, c)
        rhs = float(spec.reaction.dF(u(x[None, :]), x[None, :])[0]) if spec.has_reaction else 0.0
        rows.append({"x": x.tolist(), "residual": lhs - rhs})
    worst = max(abs(r["residual"]) for r in rows)
    tol = float(p.get("tol", 1e-3))
    ok = worst <= tol
    return Certificate(
        "operator-residual", Verdict.PASS if ok else Verdict.FAIL, tol - worst, tol,
        counterexample=None if ok else max(rows, key=lambda r: abs(r["residual"])),
        details={"points": rows},
    )


def _probe_setup(exp: Experiment, p: Dict[str, Any]):
    u = exp.function(p.get("function"))
    x0 = np.atleast_1d(np.asarray(p["x0"], dtype=float))
    g = np.atleast_1d(np.asarray(p.get("gradient", [0.0] * exp.domain.dim), dtype=float))
    u0 = float(u(x0[None, :])[0])
    phi = quadratic_probe(u0, x0, g, float(p.get("q", 1.0)), "below")
    return u, x0, phi


def _energy_comparison(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    u, x0, phi = _probe_setup(exp, p)
    delta = float(p.get("delta", 0.1))
    wf = sliding_weak_field(u, phi, x0, float(p.get("half_width", 0.15)), delta,
                            float(p.get("T", 0.0)), float(p.get("q", 1.0)))
    return energy_comparison_check(exp.spec, wf, eps_scale=delta,
                                   t_nodes=int(p.get("t_nodes", 6)), x_nodes=int(p.get("x_nodes", 6)))


def _sliding(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    u, x0, phi = _probe_setup(exp, p)
    return sliding_subsolution_experiment(
        exp.spec, u, phi, x0, float(p.get("half_width", 0.15)), float(p.get("delta", 0.1)),
        float(p.get("q", 1.0)), T=p.get("T"), t_nodes=int(p.get("t_nodes", 6)),
        x_nodes=int(p.get("x_nodes", 6)),
    )


def _probe_config(p: Dict[str, Any]) -> ProbeConfig:
    return ProbeConfig(
        gradients=int(p.get("gradients", config.PROBE_GRADIENTS)),
        openings=tuple(p.get("openings", config.PROBE_OPENINGS)),
        half_width=p.get("half_width"),
        points=int(p.get("count", 20)),
        dense_factor=int(p.get("dense_factor", 10)),
        tol=float(p.get("tol", config.VISCOSITY_TOL)),
    )


def _viscosity(test):
    def run(exp: Experiment, p: Dict[str, Any]) -> Certificate:
        u = exp.function(p.get("function"))
        points = p.get("points")
        if points is not None:
            points = np.asarray(points, dtype=float).reshape(-1, exp.domain.dim)
        return test(exp.spec, exp.domain, u, points, _probe_config(p))
    return run


def _one_sided(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    u = exp.function(p.get("function"))
    direction = p.get("direction", "above")
    competitors = one_sided_competitors(u, direction, int(p.get("count", 10)), exp.seed,
                                        float(p.get("amplitude", 0.05)))
    return one_sided_minimizer_check(exp.spec, exp.domain, u, direction, competitors, exp.rule)


def _barron_jensen(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    u = exp.function(p.get("function"))
    leaf = exp.field.leaf_function(float(p.get("leaf", exp.cfg.anchor)), exp.domain)
    return barron_jensen_oracle(exp.spec, exp.domain, u, leaf, exp.rule)


def _coarea(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    w = exp.function(p.get("function"))
    return coarea_check(exp.spec.kernel, exp.domain, w, tuple(p.get("counts", (64, 128))),
                        p.get("grid", "midpoint"), exp.rule, float(p.get("rtol", config.COAREA_RTOL)))


def _nltv_crosscheck(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    w = exp.function(p.get("function"))
    return nltv_calibration_crosscheck(exp.spec.kernel, exp.field, exp.cfg.anchor, exp.domain, w,
                                       tuple(p.get("counts", (64, 128))), exp.rule,
                                       float(p.get("rtol", config.COAREA_RTOL)))


def _mean_curvature(exp: Experiment, p: Dict[str, Any]) -> Certificate:
    """H_K of a box (interval in 1D) at a boundary point against a declared value."""
    E = NodeSet.box(exp.domain, p["lower"], p["upper"])
    value = nonlocal_mean_curvature(exp.spec.kernel, E, p["x"])
    expected = float(p["expected"])
    tol = float(p.get("tol", 1e-6)) * max(1.0, abs(expected))
    gap = abs(value - expected)
    ok = gap <= tol
    return Certificate(
        "mean-curvature", Verdict.PASS if ok else Verdict.FAIL, tol - gap, tol,
        counterexample=None if ok else {"value": value, "expected": expected},
        details={"value": value, "expected": expected, "set": E.describe()},
    )


CERTIFIERS: Dict[str, Callable[[Experiment, Dict[str, Any]], Certificate]] = {
    "symmetry": _structure(check_pairwise_symmetry),
    "partials": _structure(check_partials),
    "ellipticity": _structure(check_ellipticity),
    "convexity": _structure(check_convexity),
    "field": _field_check,
    "calibration": _calibration,
    "minimality": _minimality,
    "null-lagrangian": _null_lagrangian,
    "calibration-forms": _calibration_forms,
    "violation-search": _violation_search,
    "sub-super": _sub_super,
    "strong-comparison": _strong_comparison,
    "layer-oracle": _layer_oracle,
    "operator-residual": _operator_residual,
    "energy-comparison": _energy_comparison,
    "sliding-subsolution": _sliding,
    "viscosity-supersolution": _viscosity(viscosity_supersolution_test),
    "viscosity-subsolution": _viscosity(viscosity_subsolution_test),
    "one-sided-minimizer": _one_sided,
    "barron-jensen": _barron_jensen,
    "coarea": _coarea,
    "nltv-crosscheck": _nltv_crosscheck,
    "mean-curvature": _mean_curvature,
}

FIELD_CERTIFIERS = frozenset({
    "field", "calibration", "minimality", "null-lagrangian", "calibration-forms",
    "violation-search", "sub-super", "barron-jensen", "nltv-crosscheck",
})
FUNCTION_CERTIFIERS = frozenset({
    "strong-comparison", "operator-residual", "energy-comparison", "sliding-subsolution",
    "viscosity-supersolution", "viscosity-subsolution", "one-sided-minimizer", "coarea",
})
RANDOM_CERTIFIERS = frozenset({
    "calibration", "minimality", "null-lagrangian", "calibration-forms", "violation-search",
    "strong-comparison", "one-sided-minimizer",
})
REQUIRED_PARAMS: Dict[str, Tuple[str, ...]] = {
    "energy-comparison": ("x0",),
    "sliding-subsolution": ("x0",),
    "mean-curvature": ("lower", "upper", "x", "expected"),
}


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertifierResult:
    """Outcome of one certifier against its declared expectation."""

    entry: CertifierEntry
    certificate: Certificate

    @property
    def matched(self) -> bool:
        return self.certificate.verdict.value == self.entry.expect


def run_experiment(cfg: ExperimentConfig) -> List[CertifierResult]:
    """Run the certifiers of an experiment in order.

    Raises:
        ConfigInvalidError: If the configuration describes invalid objects.
    """
    exp = Experiment(cfg)
    results = []
    for entry in cfg.certifiers:
        logger.info(f"[{cfg.name}] running {entry.name}")
        cert = CERTIFIERS[entry.check](exp, entry.params)
        result = CertifierResult(entry, cert)
        level = logging.INFO if result.matched else logging.WARNING
        logger.log(level, f"[{cfg.name}] {entry.name}: {cert.verdict.value} (expected {entry.expect}), "
                          f"margin {cert.margin:.3e}")
        results.append(result)
    return results


def experiment_functions(cfg: ExperimentConfig) -> Dict[str, DiscreteFunction]:
    """The named functions of a configuration, for CSV export."""
    return Experiment(cfg).functions
