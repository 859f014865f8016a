"""Command-line experiment runner.

Every subcommand resolves a flat config (defaults < preset < flags <
--config file), validates it, runs one experiment and writes a JSON (or CSV)
artifact that embeds the resolved config and the package version.

Exit codes: 0 ok, 2 validation error, 3 budget exceeded, 4 verdict FAIL.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from gmtlab import __version__
from gmtlab._parallel import set_threads
from gmtlab.errors import BudgetExceededError, ValidationError
from gmtlab.kplane import Constant, bound_ratio_experiment, compute_q, random_bumps
from gmtlab.measures import (
    CantorSpec,
    DiscreteMeasure,
    ProbePolicy,
    estimate_frostman_exponent,
    make_cantor_measure,
    measure_to_dict,
    point_mass,
    product_measure,
    read_measure,
    uniform_grid_measure,
)
from gmtlab.projections import (
    PLANE_LAYOUT,
    PlaneSet,
    ProjectionParam,
    check_duality_identity,
    duality_bound,
    embed_section_measure,
    slice_frostman_exponent,
    sphere_directions,
)
from gmtlab.spectral import (
    lemma_decay_report,
    rows_to_csv,
    shell_energy_profile,
    sobolev_dimension_estimate,
)
from gmtlab.unions import counterexample_set, occupancy_sweep, sumset_section, union_dimension_estimate

EXIT_OK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_FAIL = 0, 2, 3, 4

# keys that control how a run executes but never what it computes
RUNTIME_KEYS = ("threads", "output", "format", "timestamp", "config", "preset")

# --------------------------------------------------------------------------
# measure and list parsing


def _number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def parse_measure_spec(text: str) -> dict:
    """``cantor:branches=2,ratio=1/3,depth=10``, ``grid:dim=1,per_axis=256``,
    ``point:dim=1``, ``file:path=m.json``; ``A*B`` is a product."""
    parts = [p for p in text.split("*") if p.strip()]
    if len(parts) > 1:
        return {"kind": "product", "factors": [parse_measure_spec(p) for p in parts]}
    kind, _, rest = text.strip().partition(":")
    spec: dict[str, Any] = {"kind": kind}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        spec[key.strip()] = val.strip() if key.strip() == "path" else _number(val)
    return spec


def build_measure(spec: dict | str) -> DiscreteMeasure:
    if isinstance(spec, str):
        spec = parse_measure_spec(spec)
    kind = spec.get("kind")
    if kind == "cantor":
        return make_cantor_measure(CantorSpec(int(spec["branches"]), float(spec["ratio"]), int(spec["depth"])))
    if kind == "grid":
        return uniform_grid_measure(int(spec["dim"]), int(spec["per_axis"]))
    if kind == "point":
        at = spec.get("at")
        return point_mass(at if at is not None else [0.0] * int(spec.get("dim", 1)))
    if kind == "product":
        factors = [build_measure(f) for f in spec["factors"]]
        mu = factors[0]
        for f in factors[1:]:
            mu = product_measure(mu, f)
        return mu
    if kind == "file":
        return read_measure(spec["path"])
    raise ValidationError(f"unknown measure kind {kind!r}")


def build_plane_set(spec: dict) -> PlaneSet:
    d, k = int(spec["d"]), int(spec["k"])
    kind = spec["kind"]
    if kind == "counterexample":
        cs = CantorSpec(int(spec["branches"]), float(spec["ratio"]), int(spec["depth"]))
        return counterexample_set(d, k, cs, int(spec.get("fill_per_axis", 1)))
    if kind == "grid":
        return PlaneSet(d, k, uniform_grid_measure((k + 1) * (d - k), int(spec["per_axis"])))
    if kind == "plane":
        y = spec.get("y") or [0.0] * ((k + 1) * (d - k))
        return PlaneSet(d, k, point_mass(y))
    if kind == "measure":
        return PlaneSet(d, k, build_measure(spec["measure"]))
    raise ValidationError(f"unknown plane-set kind {kind!r}")


def _parse_list(text: str, cast=_number) -> list:
    """``3..8`` (inclusive range), ``3^-1..3^-7`` (powers) or ``a,b,c``."""
    text = text.strip()
    if ".." in text and "^" in text:
        a, b = text.split("..")
        base, e0 = a.split("^")
        _, e1 = b.split("^")
        e0, e1 = int(e0), int(e1)
        step = 1 if e1 >= e0 else -1
        return [float(_number(base)) ** e for e in range(e0, e1 + step, step)]
    if ".." in text:
        a, b = (int(t) for t in text.split(".."))
        return list(range(a, b + 1))
    return [cast(t) for t in text.split(",") if t.strip()]


def _powers(base: float, first: int, last: int) -> list[float]:
    return [float(base) ** -e for e in range(first, last + 1)]


# --------------------------------------------------------------------------
# commands


def _probe(cfg: dict) -> ProbePolicy:
    return ProbePolicy(max_centers=cfg.get("max_centers"), n_random=int(cfg.get("n_random", 0)),
                       seed=int(cfg["seed"]))


def _expect_verdict(value: float, cfg: dict) -> str | None:
    if cfg.get("expect") is None:
        return None
    return "PASS" if abs(value - float(cfg["expect"])) <= float(cfg["tolerance"]) else "FAIL"


def cmd_make_measure(cfg):
    mu = build_measure(cfg["measure"])
    rows = [dict({f"x{i}": v for i, v in enumerate(p)}, weight=w) for p, w in zip(mu.points.tolist(), mu.weights.tolist())]
    return measure_to_dict(mu), None, rows


def cmd_frostman(cfg):
    mu = build_measure(cfg["measure"])
    rep = estimate_frostman_exponent(mu, cfg["radii"], _probe(cfg))
    rows = [{"radius": r, "max_mass": m} for r, m in zip(rep.radii, rep.max_masses)]
    return rep.to_dict(), _expect_verdict(rep.exponent, cfg), rows


def cmd_verify_identity(cfg):
    rng = np.random.default_rng(int(cfg["seed"]))
    worst_res, worst_ratio, count = 0.0, 0.0, 0
    for n in cfg["n"]:
        ells = [int(cfg["l"])] if cfg["l"] else list(range(1, n))
        for ell in ells:
            if not 1 <= ell < n:
                raise ValidationError(f"need 1 <= l < n, got l={ell}, n={n}")
            for _ in range(int(cfg["trials"])):
                x = ProjectionParam(rng.standard_normal((ell, n - ell)))
                xi = rng.standard_normal(ell)
                p = rng.standard_normal(n)
                r = check_duality_identity(x, xi, p)
                worst_res = max(worst_res, r)
                worst_ratio = max(worst_ratio, r / duality_bound(x, xi, p))
                count += 1
    result = {"instances": count, "max_residual": worst_res, "max_residual_over_bound": worst_ratio}
    return result, ("PASS" if worst_ratio <= 1.0 else "FAIL"), [result]


def cmd_slice_frostman(cfg):
    d, k = int(cfg["d"]), int(cfg["k"])
    if cfg.get("lambda"):
        lam = build_measure(cfg["lambda"])
        ell = int(cfg["ell"])
    else:
        lam = embed_section_measure(uniform_grid_measure(k, int(cfg["per_axis"])), d, k)
        ell = d - k
    dirs = sphere_directions(ell, int(cfg["directions"]), int(cfg.get("random_directions", 0)), int(cfg["seed"]))
    rep = slice_frostman_exponent(lam, ell, cfg["radii"], dirs, _probe(cfg))
    rows = [{"radius": r, "max_tube_mass": m} for r, m in zip(rep.radii, rep.max_masses)]
    return rep.to_dict(), _expect_verdict(rep.exponent, cfg), rows


def cmd_shells(cfg):
    mu = build_measure(cfg["measure"])
    prof = shell_energy_profile(mu, cfg["j"], float(cfg["weight_exponent"]), int(cfg["samples"]), int(cfg["seed"]))
    return prof.to_dict(), None, prof.to_rows()


def cmd_sobolev_dim(cfg):
    mu = build_measure(cfg["measure"])
    est = sobolev_dimension_estimate(mu, cfg["j"], int(cfg["samples"]), int(cfg["seed"]),
                                     float(cfg["residual_threshold"]))
    verdict = None
    if cfg.get("min_sigma") is not None:
        verdict = "PASS" if est.sigma_max >= float(cfg["min_sigma"]) else "FAIL"
    return est.to_dict(), verdict, est.profile.to_rows()


def cmd_lemma_decay(cfg):
    mu = build_measure(cfg["mu"])
    lam = build_measure(cfg["lambda"])
    ell = int(cfg["ell"])
    probe = _probe(cfg)
    alpha = estimate_frostman_exponent(mu, cfg["alpha_radii"], probe)
    beta = slice_frostman_exponent(lam, ell, cfg["beta_radii"], probe=probe)
    rep = lemma_decay_report(mu, lam, ell, cfg["j"], alpha, beta, int(cfg["samples"]), int(cfg["seed"]),
                             tolerance=float(cfg["tolerance"]),
                             residual_threshold=float(cfg["residual_threshold"]))
    out = rep.to_dict()
    out["alpha_report"] = alpha.to_dict()
    out["beta_report"] = beta.to_dict()
    return out, ("PASS" if rep.passed else "FAIL"), rep.to_rows()


def cmd_kplane_ratio(cfg):
    S = PlaneSet(int(cfg["d"]), int(cfg["k"]), build_measure(cfg["plane_measure"]))
    alpha = estimate_frostman_exponent(S.measure, cfg["alpha_radii"], _probe(cfg))
    d, k = S.d, S.k
    fam: list = [Constant(1.0)] if cfg.get("include_constant") else []
    fam += random_bumps(int(cfg["bumps"]), d, k, int(cfg["seed"]),
                        [0.2] * k + [float(cfg["center_lo"])] * (d - k),
                        [0.8] * k + [float(cfg["center_hi"])] * (d - k))
    rep = bound_ratio_experiment(S, alpha, float(cfg["eps"]), fam, cfg["res"], nodes=int(cfg["nodes"]))
    out = rep.to_dict()
    out["alpha_report"] = alpha.to_dict()
    return out, ("PASS" if rep.passed else "FAIL"), rep.to_rows()


def cmd_compute_q(cfg):
    c = compute_q(int(cfg["d"]), int(cfg["k"]), float(cfg["alpha"]), float(cfg["eps"]))
    return c.to_dict(), None, [c.to_dict()]


def _clip(cfg):
    return (tuple(cfg["clip_lo"]), tuple(cfg["clip_hi"])) if cfg.get("clip_lo") else None


def cmd_union_sweep(cfg):
    S = build_plane_set(cfg["plane_set"])
    rep = occupancy_sweep(S, _clip(cfg), cfg["res"])
    verdict = None
    if cfg.get("expect_verdict"):
        verdict = "PASS" if rep.verdict == cfg["expect_verdict"] else "FAIL"
    return rep.to_dict(), verdict, rep.to_rows()


def cmd_union_dim(cfg):
    S = build_plane_set(cfg["plane_set"])
    fit = union_dimension_estimate(S, _clip(cfg), cfg["res"])
    rows = [{"log_per_axis": a, "log_count": b} for a, b in fit.sample_points]
    return {"dimension": fit.slope, "fit": fit.to_dict()}, _expect_verdict(fit.slope, cfg), rows


def cmd_counterexample(cfg):
    spec = dict(cfg["plane_set"], kind="counterexample")
    S = build_plane_set(spec)
    out = {"d": S.d, "k": S.k, "layout": PLANE_LAYOUT}
    out.update(measure_to_dict(S.measure))
    verdict = None
    if cfg.get("radii"):
        free = [i for i in range(S.measure.ambient_dim)
                if not np.all(S.measure.points[:, i] == S.measure.points[0, i])]
        # constant coordinates carry no dimension; estimate on the others
        reduced = DiscreteMeasure(S.measure.points[:, free], S.measure.weights, resolution=S.measure.resolution)
        rep = estimate_frostman_exponent(reduced, cfg["radii"], _probe(cfg))
        out["parameter_dimension"] = rep.to_dict()
        verdict = _expect_verdict(rep.exponent, cfg)
    rows = [dict({f"y{i}": v for i, v in enumerate(p)}, weight=w)
            for p, w in zip(S.measure.points.tolist(), S.measure.weights.tolist())]
    return out, verdict, rows


def cmd_sumset(cfg):
    A0 = build_measure(cfg["measure"])
    A1 = build_measure(cfg.get("measure1") or cfg["measure"])
    xs = cfg.get("x") or np.random.default_rng(int(cfg["seed"])).uniform(
        float(cfg["x_lo"]), float(cfg["x_hi"]), int(cfg["n_x"])).tolist()
    rows, passes = [], 0
    for x in xs:
        nu = sumset_section(A0, A1, float(x))
        est = sobolev_dimension_estimate(nu, cfg["j"], int(cfg["samples"]), int(cfg["seed"]))
        ok = est.sigma_max >= float(cfg["threshold"])
        passes += ok
        rows.append({"x": float(x), "sigma_max": est.sigma_max, "fit_residual": est.fit.residual,
                     "meets_threshold": bool(ok)})
    result = {"sections": rows, "passing": passes, "required": int(cfg["min_pass"]),
              "failed_x": [r["x"] for r in rows if not r["meets_threshold"]]}
    return result, ("PASS" if passes >= int(cfg["min_pass"]) else "FAIL"), rows


# --------------------------------------------------------------------------
# defaults and presets

CANTOR = {"kind": "cantor", "branches": 2, "ratio": 1 / 3}

COMMON = {"seed": 0, "max_centers": 4096, "n_random": 0}

COMMANDS: dict[str, tuple[Callable, dict, dict]] = {
    "make-measure": (cmd_make_measure, {"measure": dict(CANTOR, depth=10)}, {}),
    "frostman": (
        cmd_frostman,
        {"measure": dict(CANTOR, depth=10), "radii": _powers(3, 1, 7), "expect": None, "tolerance": 0.05},
        {
            "cantor": {"measure": dict(CANTOR, depth=10), "radii": _powers(3, 1, 7),
                       "expect": math.log(2) / math.log(3), "tolerance": 0.05},
            "grid": {"measure": {"kind": "grid", "dim": 1, "per_axis": 256}, "radii": _powers(2, 2, 6),
                     "expect": 1.0, "tolerance": 0.05},
            "product": {"measure": {"kind": "product", "factors": [dict(CANTOR, depth=7)] * 2},
                        "radii": _powers(3, 1, 5), "expect": 2 * math.log(2) / math.log(3), "tolerance": 0.1},
        },
    ),
    "verify-identity": (cmd_verify_identity, {"n": [5], "l": 2, "trials": 1000}, {
        "all": {"n": list(range(2, 9)), "l": 0, "trials": 10**4 // 28 + 1},
    }),
    "slice-frostman": (
        cmd_slice_frostman,
        {"d": 2, "k": 1, "per_axis": 512, "lambda": None, "ell": 1, "radii": _powers(2, 2, 6),
         "directions": 16, "random_directions": 0, "expect": None, "tolerance": 0.1},
        {
            "embed-d2k1": {"d": 2, "k": 1, "per_axis": 512, "radii": _powers(2, 2, 6), "expect": 1},
            "embed-d3k1": {"d": 3, "k": 1, "per_axis": 512, "radii": _powers(2, 2, 6), "expect": 1},
            "embed-d3k2": {"d": 3, "k": 2, "per_axis": 128, "radii": _powers(2, 2, 5), "expect": 2},
        },
    ),
    "shells": (
        cmd_shells,
        {"measure": dict(CANTOR, depth=12), "j": list(range(2, 14)), "samples": 4096, "weight_exponent": 0.0},
        {},
    ),
    "sobolev-dim": (
        cmd_sobolev_dim,
        {"measure": dict(CANTOR, depth=12), "j": list(range(2, 14)), "samples": 8192,
         "residual_threshold": 0.5, "min_sigma": None},
        {
            "cantor12": {"measure": dict(CANTOR, depth=12), "j": list(range(2, 14)), "min_sigma": 0.5},
            "lebesgue1d": {"measure": {"kind": "grid", "dim": 1, "per_axis": 4096}, "j": list(range(2, 8))},
            "point": {"measure": {"kind": "point", "dim": 1}, "j": list(range(0, 8))},
        },
    ),
    "lemma-decay": (
        cmd_lemma_decay,
        {"mu": {"kind": "product", "factors": [dict(CANTOR, depth=8)] * 2},
         "lambda": {"kind": "grid", "dim": 1, "per_axis": 512}, "ell": 1, "j": list(range(3, 9)),
         "samples": 20000, "alpha_radii": _powers(3, 1, 6), "beta_radii": _powers(2, 2, 7),
         "tolerance": 0.25, "residual_threshold": 0.5},
        {
            "cantor2d": {},
            "lebesgue2d-point": {"mu": {"kind": "grid", "dim": 2, "per_axis": 1024},
                                 "lambda": {"kind": "point", "dim": 1}, "j": list(range(1, 6)),
                                 "samples": 4096, "alpha_radii": _powers(2, 2, 6), "beta_radii": _powers(2, 2, 6),
                                 "max_centers": 512},
        },
    ),
    "kplane-ratio": (
        cmd_kplane_ratio,
        {"d": 2, "k": 1,
         "plane_measure": {"kind": "product", "factors": [dict(CANTOR, depth=6), {"kind": "grid", "dim": 1, "per_axis": 64}]},
         "alpha_radii": _powers(3, 1, 3), "eps": 0.3, "bumps": 20, "center_lo": 0.2, "center_hi": 1.8,
         "res": [64, 128, 256, 512], "nodes": 256, "include_constant": False},
        {"kplane-d2k1": {}},
    ),
    "compute-q": (cmd_compute_q, {"d": 2, "k": 1, "alpha": 1.5, "eps": 0.25}, {}),
    "union-sweep": (
        cmd_union_sweep,
        {"plane_set": {"kind": "grid", "d": 2, "k": 1, "per_axis": 512}, "res": [64, 128, 256, 512],
         "clip_lo": [0.0, 0.0], "clip_hi": [1.0, 2.0], "expect_verdict": None},
        {
            "counterexample-d2k1": {"plane_set": dict(CANTOR, kind="counterexample", d=2, k=1, depth=8),
                                    "res": [27, 81, 243], "clip_lo": [0.0, 0.0], "clip_hi": [1.0, 1.0],
                                    "expect_verdict": "null-consistent"},
            "full-square-d2k1": {"expect_verdict": "positive-measure-consistent"},
            "single-line-d2k1": {"plane_set": {"kind": "plane", "d": 2, "k": 1}, "clip_lo": [0.0, 0.0],
                                 "clip_hi": [1.0, 1.0], "expect_verdict": "null-consistent"},
        },
    ),
    "union-dim": (
        cmd_union_dim,
        {"plane_set": {"kind": "plane", "d": 2, "k": 1}, "res": [64, 128, 256, 512],
         "clip_lo": [0.0, 0.0], "clip_hi": [1.0, 1.0], "expect": None, "tolerance": 0.1},
        {
            "single-line-d2k1": {"expect": 1.0},
            "counterexample-d2k1": {"plane_set": dict(CANTOR, kind="counterexample", d=2, k=1, depth=8),
                                    "res": [27, 81, 243], "expect": 1 + math.log(2) / math.log(3)},
            "full-square-d2k1": {"plane_set": {"kind": "grid", "d": 2, "k": 1, "per_axis": 512},
                                 "clip_hi": [1.0, 2.0], "expect": 2.0},
        },
    ),
    "counterexample": (
        cmd_counterexample,
        {"plane_set": dict(CANTOR, d=2, k=1, depth=8, fill_per_axis=1), "radii": None,
         "expect": None, "tolerance": 0.1},
        {
            "d2k1": {},
            "d2k1-s861": {"plane_set": {"d": 2, "k": 1, "branches": 4, "ratio": 0.2, "depth": 6, "fill_per_axis": 1},
                          "radii": _powers(5, 1, 4), "expect": math.log(4) / math.log(5)},
        },
    ),
    "sumset": (
        cmd_sumset,
        {"measure": dict(CANTOR, depth=12), "measure1": None, "x": None, "n_x": 5, "x_lo": 0.5, "x_hi": 2.0,
         "j": list(range(4, 13)), "samples": 8192, "threshold": 1.06, "min_pass": 4},
        {"cantor12": {}},
    ),
}

_LIST_KEYS = {"j", "res", "radii", "alpha_radii", "beta_radii", "n", "x", "clip_lo", "clip_hi"}
_SPEC_KEYS = {"measure", "measure1", "mu", "lambda", "plane_measure"}


def _flag_value(key: str, text: str):
    if key in _LIST_KEYS:
        return _parse_list(text)
    if key in _SPEC_KEYS:
        return parse_measure_spec(text)
    if key == "plane_set":
        return json.loads(text)
    if key == "expect_verdict":
        return text
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return _number(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gmtlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gmtlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, defaults, presets) in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--preset", choices=sorted(presets) or None)
        p.add_argument("--config", help="JSON file whose keys override flags")
        p.add_argument("--seed", type=int)
        p.add_argument("--output", help="output path (stdout when omitted)")
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--timestamp", action="store_true", help="record the wall-clock time under metadata")
        for key in defaults:
            if key == "seed":
                continue
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest="cfg_" + key, default=None, metavar="VALUE")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    _, defaults, presets = COMMANDS[command]
    cfg = dict(COMMON)
    cfg.update(copy.deepcopy(defaults))
    if args.preset:
        cfg.update(copy.deepcopy(presets[args.preset]))
    for key in defaults:
        raw = getattr(args, "cfg_" + key, None)
        if raw is not None:
            cfg[key] = _flag_value(key, raw)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.config:
        try:
            override = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config file: {exc}") from exc
        for key, val in override.items():
            if key in RUNTIME_KEYS or key == "command":
                continue
            if key not in cfg:
                raise ValidationError(f"unknown config key {key!r} for {command}")
            cfg[key] = val
    cfg["seed"] = int(cfg["seed"])
    return cfg


def _render(command: str, cfg: dict, result: dict, verdict: str | None, rows: list[dict], fmt: str,
            timestamp: bool) -> str:
    provenance = {"artifact": "gmtlab", "version": __version__, "command": command, "config": cfg}
    if fmt == "csv":
        head = "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in provenance.items())
        if verdict is not None:
            head += f"# verdict: {verdict}\n"
        body = rows_to_csv(rows) if rows else ""
        return head + body
    doc = dict(provenance, verdict=verdict, result=result)
    if timestamp:
        doc["metadata"] = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    return json.dumps(doc, indent=2, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": {"type": kind, "message": message, "exit_code": code}}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        set_threads(args.threads)
        cfg = resolve_config(args.command, args)
        handler = COMMANDS[args.command][0]
        result, verdict, rows = handler(cfg)
        text = _render(args.command, cfg, result, verdict, rows, args.format, args.timestamp)
        if args.output:
            write_atomic(args.output, text)
        else:
            sys.stdout.write(text)
    except BudgetExceededError as exc:
        return _error("budget", str(exc), EXIT_BUDGET)
    except (ValidationError, ValueError, KeyError, TypeError) as exc:
        return _error("validation", f"{type(exc).__name__}: {exc}", EXIT_VALIDATION)
    return EXIT_FAIL if verdict == "FAIL" else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
