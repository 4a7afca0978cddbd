"""Batch front end: ``cpnquant {kernel,star,converge,pullback,odzi}``.

Every run reads one YAML (or JSON) config, validates it completely before any
computation, and writes a JSON report (with the resolved config and tool
version) plus CSV tables into ``--out``. Exit codes: 0 ok, 2 config error,
3 numerical failure; failures print a JSON error record on stderr and write
``error.json`` into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__, berezin, closed_forms, embedding, hilbert, odzijewicz, quadrature
from .cpn_core import QuantizationConfig

log = logging.getLogger("cpnquant")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    def __init__(self, field: str | None, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
        self.message = message


# --- schema -----------------------------------------------------------------

_MISSING = object()


class Field:
    """Leaf validator with an optional default (``_MISSING`` means required)."""

    def __init__(self, check: Callable[[Any, str], Any], default: Any = _MISSING):
        self.check = check
        self.default = default


class Block:
    def __init__(self, fields: dict, required: bool = False):
        self.fields = fields
        self.required = required


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def integer(lo: int | None = None):
    def check(v, name):
        if not _is_int(v):
            raise ConfigError(name, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(name, f"must be >= {lo}, got {v}")
        return v

    return check


def number(positive: bool = False):
    def check(v, name):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(name, f"expected a finite number, got {v!r}")
        if positive and v <= 0:
            raise ConfigError(name, f"must be positive, got {v}")
        return float(v)

    return check


def optional(check):
    def wrapped(v, name):
        return None if v is None else check(v, name)

    return wrapped


def choice(*options):
    def check(v, name):
        if v not in options:
            raise ConfigError(name, f"expected one of {list(options)}, got {v!r}")
        return v

    return check


def int_list(lo: int | None = None, ascending: bool = False, nonempty: bool = True):
    item = integer(lo)

    def check(v, name):
        if not isinstance(v, list) or (nonempty and not v):
            raise ConfigError(name, "expected a non-empty list of integers")
        out = [item(x, f"{name}[{k}]") for k, x in enumerate(v)]
        if ascending and any(b <= a for a, b in zip(out, out[1:])):
            raise ConfigError(name, "must be strictly ascending")
        return out

    return check


def complex_value(v, name) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        re, im = (number()(x, f"{name}[{k}]") for k, x in enumerate(v))
        return complex(re, im)
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(number()(v, name))
    raise ConfigError(name, f"expected a complex number as [re, im], got {v!r}")


def point_list(v, name):
    """List of points; each point is a list of [re, im] pairs (or one pair when n = 1)."""
    if not isinstance(v, list) or not v:
        raise ConfigError(name, "expected a non-empty list of points")
    return [_point(p, f"{name}[{k}]") for k, p in enumerate(v)]


def _point(p, name):
    if isinstance(p, list) and p and all(isinstance(c, list) for c in p):
        return [[z.real, z.imag] for z in (complex_value(c, f"{name}[{k}]") for k, c in enumerate(p))]
    z = complex_value(p, name)
    return [[z.real, z.imag]]


def point_value(v, name):
    return _point(v, name)


def anything(v, name):
    return v


QUANT = {
    "n": Field(integer(1)),
    "m": Field(integer(0)),
    "measure_scale": Field(optional(number(positive=True)), None),
    "tol": Field(number(positive=True), 1e-10),
    "weight_potential": Field(choice("fubini_study"), "fubini_study"),
}
QUANT_NO_M = {k: v for k, v in QUANT.items() if k != "m"}

QUAD = {
    "kind": Field(choice(*quadrature.KINDS), "gauss_radial_x_angular"),
    "R": Field(optional(integer(4)), None),
    "T": Field(optional(integer(4)), None),
    "S": Field(optional(integer(1000)), None),
    "seed": Field(optional(integer(0)), None),
}

POINTS = {
    "count": Field(integer(1), 8),
    "values": Field(optional(point_list), None),
    "scale": Field(number(positive=True), 1.0),
}

MANIFOLD = {
    "type": Field(optional(choice(*embedding.MANIFOLD_TYPES)), None),
    "params": Field(anything, {}),
    "sample_count": Field(integer(1), 64),
    "seed": Field(optional(integer(0)), None),
}

COMMON = {"command": Field(optional(choice("kernel", "star", "converge", "pullback", "odzi")), None),
          "seed": Field(optional(integer(0)), None)}

SCHEMAS = {
    "kernel": {
        **COMMON,
        "quantization": Block(QUANT, required=True),
        "quadrature": Block(QUAD),
        "points": Block(POINTS),
        "basis": Block({"indices": Field(optional(anything), None)}),
    },
    "star": {
        **COMMON,
        "quantization": Block(QUANT, required=True),
        "quadrature": Block(QUAD),
        "points": Block(POINTS),
        "operators": Block({"family": Field(choice("random_hermitian", "benchmark"), "random_hermitian"),
                            "count": Field(integer(1), 20)}),
    },
    "converge": {
        **COMMON,
        "quantization": Block(QUANT_NO_M, required=True),
        "quadrature": Block(QUAD),
        "m_list": Field(int_list(2, ascending=True)),
        "point": Field(optional(point_value), None),
        "manifold": Block(MANIFOLD),
        "parameter": Field(optional(anything), None),
        "rank_tol": Field(number(positive=True), 1e-10),
    },
    "pullback": {
        **COMMON,
        "quantization": Block(QUANT, required=True),
        "manifold": Block(MANIFOLD, required=True),
        "rank_tol": Field(number(positive=True), 1e-10),
        "pairs": Block({"count": Field(integer(1), 100), "min_overlap": Field(number(), 1e-2)}),
        "operators": Block({"family": Field(choice("random_hermitian", "benchmark"), "random_hermitian")}),
    },
    "odzi": {
        **COMMON,
        "quantization": Block(QUANT, required=True),
        "kernel_exponent": Field(choice("m", "twisted"), "m"),
        "monge_ampere": Block({"grid": Field(integer(2), 20), "extent": Field(number(positive=True), 2.0),
                               "offset": Field(optional(point_value), None)}),
        "holonomy": Block({"path": Field(anything, {"circle": {"center": [0.0, 0.0], "radius": 1.0,
                                                              "turns": 1, "samples": 64}}),
                           "steps_list": Field(optional(int_list(1, ascending=True)), [16, 32, 64, 128, 256])}),
        "metric": Block({"pairs": Field(integer(1), 1000), "scale": Field(number(positive=True), 1.0)}),
    },
}


def _validate_block(schema: dict, data: Any, prefix: str) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(prefix or None, f"expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(map(str, data)) - set(schema))
    if unknown:
        raise ConfigError(_join(prefix, unknown[0]), "unknown key")
    out = {}
    for key, spec in schema.items():
        name = _join(prefix, key)
        if isinstance(spec, Block):
            if key not in data and spec.required:
                raise ConfigError(name, "required section is missing")
            if key not in data and not spec.required:
                out[key] = _validate_block(spec.fields, {}, name)
                continue
            out[key] = _validate_block(spec.fields, data[key], name)
        elif key in data:
            out[key] = spec.check(data[key], name)
        elif spec.default is _MISSING:
            raise ConfigError(name, "required field is missing")
        else:
            out[key] = spec.default
    return out


def _join(prefix, key):
    return f"{prefix}.{key}" if prefix else str(key)


def load_config(command: str, path: str | None, seed_override: int | None) -> dict:
    """Parse and validate a config; returns the fully resolved dict."""
    if path is None:
        raise ConfigError("--config", "a config file is required")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"not valid YAML/JSON: {exc}") from None
    resolved = _validate_block(SCHEMAS[command], raw, "")
    if resolved["command"] not in (None, command):
        raise ConfigError("command", f"config is for {resolved['command']!r}, not {command!r}")
    resolved["command"] = command
    if seed_override is not None:
        resolved["seed"] = seed_override
    _cross_checks(command, resolved)
    return resolved


def _quant(resolved: dict, m: int | None = None) -> QuantizationConfig:
    q = dict(resolved["quantization"])
    if m is not None:
        q["m"] = m
    try:
        return QuantizationConfig(**q)
    except ValueError as exc:
        raise ConfigError("quantization", str(exc)) from None


def _cross_checks(command: str, cfg: dict) -> None:
    n = cfg["quantization"]["n"]
    quad = cfg.get("quadrature")
    if quad is not None and quad["kind"] == "monte_carlo":
        if quad["seed"] is None:
            if cfg["seed"] is None:
                raise ConfigError("quadrature.seed", "monte_carlo quadrature requires a seed (or --seed)")
            quad["seed"] = cfg["seed"]
        if quad["S"] is None:
            quad["S"] = 20000
    if "points" in cfg:
        if cfg["points"]["values"] is not None:
            for k, p in enumerate(cfg["points"]["values"]):
                if len(p) != n:
                    raise ConfigError(f"points.values[{k}]", f"expected {n} complex coordinates")
        elif cfg["seed"] is None:
            raise ConfigError("seed", "random points need a seed (set 'seed' or pass --seed)")
    if command == "kernel" and cfg["basis"]["indices"] is not None:
        _check_indices(cfg["basis"]["indices"], n, cfg["quantization"]["m"])
    if command in ("star", "pullback") and cfg["seed"] is None:
        raise ConfigError("seed", "random operators/pairs need a seed (set 'seed' or pass --seed)")
    if command == "odzi" and cfg["seed"] is None:
        raise ConfigError("seed", "random metric pairs need a seed (set 'seed' or pass --seed)")
    if command == "converge":
        if cfg["point"] is None and cfg["parameter"] is None:
            raise ConfigError("point", "give either 'point' or 'manifold' + 'parameter'")
        if cfg["parameter"] is not None:
            if not isinstance(cfg["parameter"], list):
                raise ConfigError("parameter", "expected a list of real parameters")
            for k, v in enumerate(cfg["parameter"]):
                number()(v, f"parameter[{k}]")
        if cfg["point"] is not None and len(cfg["point"]) != n:
            raise ConfigError("point", f"expected {n} complex coordinates")
    if command == "pullback" or (command == "converge" and cfg["parameter"] is not None):
        _check_manifold(cfg["manifold"], n, "manifold")
    if command == "odzi":
        off = cfg["monge_ampere"]["offset"]
        if off is not None and len(off) != n:
            raise ConfigError("monge_ampere.offset", f"expected {n} complex coordinates")
        try:
            odzijewicz.path_from_spec(cfg["holonomy"]["path"], n)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError("holonomy.path", str(exc)) from None
    cfg["quantization"]["measure_scale"] = _quant(cfg, 2 if command == "converge" else None).measure_scale


def _check_indices(indices, n, m):
    if not isinstance(indices, list) or not indices:
        raise ConfigError("basis.indices", "expected a non-empty list of multi-indices")
    for k, I in enumerate(indices):
        name = f"basis.indices[{k}]"
        if not isinstance(I, list) or len(I) != n or not all(_is_int(q) for q in I):
            raise ConfigError(name, f"expected a list of {n} integers, got {I!r}")
        if any(q < 0 for q in I):
            raise ConfigError(name, f"negative exponent in {I}")
        if sum(I) > m:
            raise ConfigError(name, f"degree {sum(I)} exceeds m={m}")


def _check_manifold(spec, n, name):
    if spec["type"] is None:
        raise ConfigError(f"{name}.type", "required field is missing")
    try:
        M = embedding.manifold_from_spec(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{name}.params", str(exc)) from None
    if M.n != n:
        raise ConfigError(f"{name}.type", f"{spec['type']} embeds into C^{M.n}, but quantization.n={n}")


# --- output helpers ---------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(np.real(obj))), _clean(float(np.imag(obj)))]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _report(command: str, cfg: dict, results: dict) -> dict:
    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    return {"tool": "cpnquant", "version": __version__, "command": command, "config": public, "results": results}


def _points(cfg: dict, n: int) -> np.ndarray:
    block = cfg["points"]
    if block["values"] is not None:
        return np.array([[complex(*z) for z in p] for p in block["values"]])
    rng = np.random.default_rng(cfg["seed"])
    z = rng.normal(size=(block["count"], n)) + 1j * rng.normal(size=(block["count"], n))
    return block["scale"] * z


def _rule(cfg: dict, qc: QuantizationConfig):
    quad = cfg["quadrature"]
    params = {k: quad[k] for k in ("R", "T", "S", "seed") if quad[k] is not None}
    return quadrature.build_rule(qc, quad["kind"], params)


def _hermitian(rng, dim):
    G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (G + G.conj().T) / 2


# --- commands ---------------------------------------------------------------


def cmd_kernel(cfg: dict, pool) -> dict:
    qc = _quant(cfg)
    basis = hilbert.BasisSpec.build(qc)
    rule = _rule(cfg, qc)
    pts = _points(cfg, qc.n)
    idx = cfg["basis"]["indices"]
    indices = [tuple(I) for I in idx] if idx is not None else list(basis.indices)

    def kernel_row(i):
        sums = hilbert.kernel_L(pts[i], pts, basis, method="sum")
        closed = hilbert.kernel_L(pts[i], pts, basis, method="closed")
        return [(i, j, sums[j], closed[j]) for j in range(len(pts))]

    rows = [r for block in pool.map(kernel_row, range(len(pts))) for r in block]
    kernel_rows = [(i, j, s.real, s.imag, c.real, c.imag, abs(s - c)) for i, j, s, c in rows]

    c_quad = quadrature.c_constant(qc, rule)
    D_rows = []
    for I in indices:
        Dc = closed_forms.dirichlet_D(I, qc.m)
        Dq = quadrature.normalization_D(I, qc, rule)
        D_rows.append((" ".join(map(str, I)), Dc, Dq, abs(Dq - Dc) / Dc))

    repro = [hilbert.reproducing_check(basis.unit(I), mu, basis, rule) for I in indices for mu in pts]
    units = [basis.unit(I) for I in indices]
    resol = [hilbert.resolution_identity_residual(u, v, basis, rule) for u in units for v in units]
    results = {
        "basis_dimension": len(basis),
        "c_closed": closed_forms.c_constant_exact(qc),
        "c_quadrature": c_quad,
        "points": pts,
        "quadrature": {"kind": rule.kind, "params": rule.params, "nodes": len(rule)},
        "kernel_max_abs_err": max(r[-1] for r in kernel_rows),
        "D_max_rel_err": max(r[-1] for r in D_rows),
        "reproducing_max_residual": max(repro),
        "resolution_max_residual": max(resol),
    }
    tables = {
        "kernel.csv": _csv(("i", "j", "sum_re", "sum_im", "closed_re", "closed_im", "abs_err"), kernel_rows),
        "normalization.csv": _csv(("index", "D_closed", "D_quadrature", "rel_err"), D_rows),
    }
    return {"results": results, "tables": tables}


def cmd_star(cfg: dict, pool) -> dict:
    qc = _quant(cfg)
    basis = hilbert.BasisSpec.build(qc)
    rule = _rule(cfg, qc)
    pts = _points(cfg, qc.n)
    fam = cfg["operators"]
    rng = np.random.default_rng([cfg["seed"], 1])
    if fam["family"] == "benchmark":
        f1, f2 = berezin.benchmark_pair()
        ops = [(berezin.toeplitz_operator(f1, basis, rule), berezin.toeplitz_operator(f2, basis, rule))]
    else:
        ops = [(_hermitian(rng, len(basis)), _hermitian(rng, len(basis))) for _ in range(fam["count"])]

    def task(k):
        A1, A2 = ops[k]
        s1, s2 = berezin.symbol_of(A1, basis), berezin.symbol_of(A2, basis)
        out = []
        for j, mu in enumerate(pts):
            integral = berezin.star_product(s1, s2, mu, basis, rule)
            comp = berezin.star_via_composition(A1, A2, mu, basis)
            out.append((k, j, integral.real, integral.imag, comp.real, comp.imag,
                        abs(integral - comp) / max(abs(comp), np.finfo(float).tiny)))
        return out

    rows = [r for block in pool.map(task, range(len(ops))) for r in block]
    results = {"pairs": len(ops), "points": pts, "max_rel_err": max(r[-1] for r in rows),
               "quadrature": {"kind": rule.kind, "params": rule.params, "nodes": len(rule)}}
    cols = ("pair", "point", "integral_re", "integral_im", "composition_re", "composition_im", "rel_err")
    return {"results": results, "tables": {"star.csv": _csv(cols, rows)}}


def cmd_converge(cfg: dict, pool) -> dict:
    base = _quant(cfg, 2)
    f1, f2 = berezin.benchmark_pair()
    quad = cfg["quadrature"]
    fixed = {k: quad[k] for k in ("R", "T", "S", "seed") if quad[k] is not None}
    kind = quad["kind"]

    def rule_params(m):
        return {**quadrature.default_params(base.with_m(m)), **fixed} if kind != "monte_carlo" else fixed

    if cfg["parameter"] is not None:
        if cfg["manifold"]["type"] is None:
            raise ConfigError("manifold.type", "required when 'parameter' is given")
        M = embedding.manifold_from_spec(cfg["manifold"])
        p = np.asarray(cfg["parameter"], dtype=float)
        report = embedding.induced_correspondence_study(f1, f2, p, cfg["m_list"], M, base, rule_params,
                                                        cfg["rank_tol"], pool)
        where = M.epsilon(p)
    else:
        where = np.array([complex(*z) for z in cfg["point"]])
        if kind == "monte_carlo":
            raise ConfigError("quadrature.kind", "the correspondence study needs the tensor rule")
        report = berezin.correspondence_study(f1, f2, where, cfg["m_list"], base, rule_params, pool)
    if not report.m:
        raise FloatingPointError(f"every level failed: {report.flags}")
    d = report.to_dict()
    rows = [(m, e0, e1, c[0], c[1], g) for m, e0, e1, c, g in
            zip(d["m"], d["e0"], d["e1"], d["commutator"], d["oracle_gap"])]
    cols = ("m", "e0", "e1", "commutator_re", "commutator_im", "oracle_gap")
    return {"results": {"mu": where, "report": d}, "tables": {"converge.csv": _csv(cols, rows)}}


def cmd_pullback(cfg: dict, pool) -> dict:
    qc = _quant(cfg)
    basis = hilbert.BasisSpec.build(qc)
    M = embedding.manifold_from_spec(cfg["manifold"])
    space = embedding.build_pullback(M, basis, cfg["rank_tol"])
    rng = np.random.default_rng([cfg["seed"], 2])
    if cfg["operators"]["family"] == "benchmark":
        rule = quadrature.build_rule(qc)
        A = berezin.toeplitz_operator(berezin.benchmark_pair()[0], basis, rule)
    else:
        A = _hermitian(rng, len(basis))
    B = embedding.induced_operator(A, space)
    lifted = embedding.lift_operator(B)

    P = len(M)
    want, min_ov = cfg["pairs"]["count"], cfg["pairs"]["min_overlap"]
    pairs, skipped = [], 0
    for _ in range(50 * want):
        if len(pairs) == want:
            break
        i, j = (int(v) for v in rng.integers(0, P, 2))
        ov = abs(berezin.normalized_overlap(M.sample_points[i], M.sample_points[j], qc.m))
        if ov < min_ov:
            skipped += 1
            continue
        pairs.append((i, j))

    def task(ij):
        i, j = ij
        p, q = M.samples[i], M.samples[j]
        b = embedding.x_symbol(B, p, q)
        a = berezin.covariant_symbol(A, M.epsilon(p), M.epsilon(q), basis)
        return (i, j, b.real, b.imag, a.real, a.imag, abs(b - a))

    rows = list(pool.map(task, pairs))
    norms = [embedding.pullback_norm(embedding.pullback_coherent_state(M.samples[k], space))
             for k in range(min(P, 16))]
    results = {
        "ambient_dimension": len(basis), "rank": space.rank, "nullity": space.nullity,
        "singular_values": space.sigma, "sample_count": P,
        "lift_frobenius_norm": lifted["frobenius_norm"], "lift_operator_norm": lifted["operator_norm"],
        "invariance_defect": embedding.invariance_defect(A, space),
        "pairs_used": len(rows), "pairs_skipped_low_overlap": skipped,
        "transfer_max_abs_err": max((r[-1] for r in rows), default=None),
        "coherent_state_norms": norms,
    }
    tables = {
        "pairs.csv": _csv(("p", "q", "x_symbol_re", "x_symbol_im", "ambient_re", "ambient_im", "abs_err"), rows),
        "singular_values.csv": _csv(("k", "sigma"), list(enumerate(space.sigma))),
    }
    return {"results": results, "tables": tables}


def cmd_odzi(cfg: dict, pool) -> dict:
    qc = _quant(cfg)
    n = qc.n
    kernel = (odzijewicz.LineBundleKernel.for_config(qc) if cfg["kernel_exponent"] == "m"
              else odzijewicz.LineBundleKernel.twisted(qc))

    ma = cfg["monge_ampere"]
    g, ext = ma["grid"], ma["extent"]
    axis = np.linspace(-ext, ext, g)
    offset = (np.zeros(n, complex) if ma["offset"] is None
              else np.array([complex(*z) for z in ma["offset"]]))
    consts = {r: odzijewicz.monge_ampere_constants(qc, r) for r in odzijewicz.READINGS}

    def ma_row(i):
        out = []
        for j in range(g):
            mu = offset.copy()
            mu[0] = complex(axis[i], axis[j])
            res = [float(odzijewicz.monge_ampere_residual(mu, *consts[r], qc, r)) for r in odzijewicz.READINGS]
            out.append((i, j, mu[0].real, mu[0].imag, *res))
        return out

    ma_rows = [r for block in pool.map(ma_row, range(g)) for r in block]
    ma_summary = {r: {"N": consts[r][0], "C": consts[r][1], "max_residual": max(row[4 + k] for row in ma_rows)}
                  for k, r in enumerate(odzijewicz.READINGS)}

    hol = cfg["holonomy"]
    path = odzijewicz.path_from_spec(hol["path"], n)
    if isinstance(hol["path"], dict):
        def factory(N):
            spec = {"circle": {**hol["path"]["circle"], "samples": N}}
            return odzijewicz.path_from_spec(spec, n)
        steps = hol["steps_list"] or [len(path) - 1]
    else:
        def factory(N):
            return path
        steps = [len(path) - 1]
    agreement = odzijewicz.holonomy_agreement(factory, steps, kernel)
    integral = odzijewicz.holonomy_integral(path, kernel)
    hol_summary = {"order": agreement.order, "integral": integral, "integral_abs": abs(integral),
                   "integral_phase": odzijewicz.holonomy_phase(path, kernel),
                   "discrete": odzijewicz.holonomy_discrete(path, kernel)}

    rng = np.random.default_rng([cfg["seed"], 3])
    K = cfg["metric"]["pairs"]
    sc = cfg["metric"]["scale"]
    mu = sc * (rng.normal(size=(K, n)) + 1j * rng.normal(size=(K, n)))
    nu = sc * (rng.normal(size=(K, n)) + 1j * rng.normal(size=(K, n)))
    d_fw = odzijewicz.cs_metric(mu, nu, kernel)
    d_bw = odzijewicz.cs_metric(nu, mu, kernel)
    mod = odzijewicz.transition_modulus(mu, nu, kernel)
    metric_summary = {
        "pairs": K,
        "max_self_distance": float(np.max(odzijewicz.cs_metric(mu, mu, kernel))),
        "max_asymmetry": float(np.max(np.abs(d_fw - d_bw))),
        "min_radicand": float(np.min(1.0 - mod)),
        "max_modulus": float(np.max(mod)),
    }
    metric_rows = [(k, d_fw[k], d_bw[k], mod[k]) for k in range(K)]
    results = {"kernel_exponent": kernel.exponent, "monge_ampere": ma_summary, "holonomy": hol_summary,
               "holonomy_table": agreement.rows, "metric": metric_summary}
    tables = {
        "monge_ampere.csv": _csv(("i", "j", "mu_re", "mu_im") + tuple(f"residual_{r}" for r in odzijewicz.READINGS),
                                 ma_rows),
        "holonomy.csv": agreement.to_csv(),
        "metric.csv": _csv(("pair", "d_forward", "d_backward", "modulus"), metric_rows),
    }
    return {"results": results, "tables": tables}


COMMANDS = {"kernel": cmd_kernel, "star": cmd_star, "converge": cmd_converge, "pullback": cmd_pullback,
            "odzi": cmd_odzi}

HELP = {
    "kernel": ("Kernel closed form, normalization constants, reproducing and resolution residuals.",
               "outputs: kernel.json\n"
               "  kernel.csv         i, j, sum_re, sum_im, closed_re, closed_im, abs_err\n"
               "  normalization.csv  index, D_closed, D_quadrature, rel_err"),
    "star": ("Star product integral against the composition oracle.",
             "outputs: star.json\n"
             "  star.csv  pair, point, integral_re, integral_im, composition_re, composition_im, rel_err"),
    "converge": ("Correspondence-principle convergence study (ambient point or manifold parameter).",
                 "outputs: converge.json (report: m, e0, e1, kappa_fit, slope_e0, slope_e1, r2, ...)\n"
                 "  converge.csv  m, e0, e1, commutator_re, commutator_im, oracle_gap"),
    "pullback": ("Pullback space ranks, lifted operator norms and symbol transfer residuals.",
                 "outputs: pullback.json\n"
                 "  pairs.csv            p, q, x_symbol_re, x_symbol_im, ambient_re, ambient_im, abs_err\n"
                 "  singular_values.csv  k, sigma"),
    "odzi": ("Monge-Ampere residual grid, holonomy agreement and coherent-state metric.",
             "outputs: odzi.json\n"
             "  monge_ampere.csv  i, j, mu_re, mu_im, residual_determinant, residual_printed\n"
             "  holonomy.csv      N, discrete_re, discrete_im, integral_re, integral_im, abs_err\n"
             "  metric.csv        pair, d_forward, d_backward, modulus"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpnquant", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="exit codes: 0 ok, 2 config error, 3 numerical failure")
    parser.add_argument("--version", action="version", version=f"cpnquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (desc, epilog) in HELP.items():
        p = sub.add_parser(name, help=desc, description=desc, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, metavar="PATH", help="YAML or JSON config file")
        p.add_argument("--out", default=".", metavar="DIR", help="output directory (created if missing)")
        p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads (default 1)")
        p.add_argument("--seed", type=int, default=None, metavar="S", help="overrides the config 'seed'")
    return parser


def _error_record(command, code, kind, field, exc):
    return {"status": "error", "exit_code": code, "kind": kind, "field": field,
            "command": command, "version": __version__,
            "exception": type(exc).__name__, "module": getattr(exc, "__module__", None) or type(exc).__module__,
            "message": getattr(exc, "message", None) or str(exc)}


def run(command: str, config: str, out: str, threads: int = 1, seed: int | None = None) -> int:
    out_dir = Path(out)
    try:
        if threads < 1:
            raise ConfigError("--threads", f"must be >= 1, got {threads}")
        cfg = load_config(command, config, seed)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            produced = COMMANDS[command](cfg, pool)
    except ConfigError as exc:
        return _fail(out_dir, _error_record(command, EXIT_CONFIG, "config", exc.field, exc))
    except NUMERIC_ERRORS as exc:
        return _fail(out_dir, _error_record(command, EXIT_NUMERIC, "numerical", None, exc))
    except ValueError as exc:
        return _fail(out_dir, _error_record(command, EXIT_CONFIG, "config", None, exc))
    except Exception as exc:
        log.exception("unexpected failure")
        return _fail(out_dir, _error_record(command, EXIT_NUMERIC, "internal", None, exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}.json").write_text(dumps(_report(command, cfg, produced["results"])))
    for name, text in produced["tables"].items():
        (out_dir / name).write_text(text)
    return EXIT_OK


def _fail(out_dir: Path, record: dict) -> int:
    text = dumps(record)
    sys.stderr.write(json.dumps(_clean(record), sort_keys=True) + "\n")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(text)
    except OSError:
        pass
    return record["exit_code"]


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
