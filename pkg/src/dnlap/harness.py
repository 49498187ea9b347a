"""Run configuration, experiment execution, persistence and reporting.

A run is described by one JSON document. Keys are grouped by section::

    {"experiment": "march",
     "params": {"d": 1, "s": 0.5, "p": 3.0, "m": 1.0},
     "domain": {"mode": "full_line", "R": 40.0, "n": 512},
     "epsilon": 0.0,
     "time": {"schedule": "geometric", "t0": 0.001, "t1": 10.0, "steps": 200},
     "initial": {"kind": "box", "mass": 2.0, "support": 1.0},
     "solver": {"newton_tol": 1e-10, "max_newton": 100},
     "output": "runs/a"}

Sections ``extract``, ``barrier`` and ``verify`` tune the matching
experiments; ``exponent_overrides`` replaces derived exponents (fault
injection).
"""
from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
import os
from pathlib import Path

import numpy as np

from . import barrier as bar
from . import verify as ver
from .errors import ConfigError, LabError, MissingArtifact
from .exponents import DecayRegime, ExponentSet, ModelParams, derive_exponents
from .grid import (FULL_LINE, MODES, RADIAL, Field, box, box_of_mass, build_domain, cosine_bump,
                   lq_norm, mass, support_radius)
from .kernel import _diagonal_rule, assemble_kernel
from .resolvent import StepConfig, march
from .selfsim import ExtractionGrid, extract_barenblatt, write_profile_csv

log = logging.getLogger(__name__)

EXPERIMENTS = ("exponents", "march", "extract", "barrier", "verify-suite")
INITIAL_KINDS = ("zero", "box", "bump")
OUT_ENV = "DNLAP_OUT"

DEFAULTS = {
    "experiment": "march",
    "params": {"d": 1, "s": 0.5, "p": 3.0, "m": 1.0},
    "domain": {"mode": FULL_LINE, "R": 40.0, "n": 512},
    "epsilon": 0.0,
    "time": {"schedule": "geometric", "t0": 1e-3, "t1": 10.0, "steps": 200, "dt": None},
    "initial": {"kind": "box", "mass": 2.0, "support": 1.0, "height": None, "center": 0.0},
    "solver": {"newton_tol": 1e-10, "max_newton": 100, "ls_shrink": 0.5, "jac_floor": 1e-12},
    "extract": {"k_schedule": [1.0, 2.0, 4.0], "t_star": 1.0, "R": 60.0, "n": 512,
                "shape": "bump", "tail_window": None},
    "barrier": {"strict": True, "safety": 2.0, "check_trajectory": True},
    "verify": {"checks": ["contraction", "reflection", "radial_monotonicity", "mass", "time_decay",
                          "dissipation", "energy"],
               "partner_shift": 0.5},
    "exponent_overrides": {},
    "output": "run",
}


class RunConfig:
    """Validated run description; ``data`` keeps the merged JSON document."""

    def __init__(self, data: dict, source: str = "<config>"):
        self.source = source
        self.data = _merge(DEFAULTS, data, "")
        self._validate()

    # accessors -------------------------------------------------------------
    @property
    def experiment(self) -> str:
        return self.data["experiment"]

    @property
    def output(self) -> Path:
        return Path(self.data["output"])

    @property
    def params(self) -> ModelParams:
        p = self.data["params"]
        return ModelParams(int(p["d"]), float(p["s"]), float(p["p"]), float(p["m"]))

    def exponents(self) -> ExponentSet:
        exps = derive_exponents(self.params)
        ov = self.data["exponent_overrides"]
        if ov:
            vals = {k: (DecayRegime(v) if k == "regime" else float(v)) for k, v in ov.items()}
            exps = dataclasses.replace(exps, **vals)
        return exps

    def domain(self):
        d = self.data["domain"]
        return build_domain(d["mode"], self.params.d, float(d["R"]), int(d["n"]))

    def step_config(self, **extra) -> StepConfig:
        t = self.data["time"]
        s = self.data["solver"]
        kw = dict(schedule=t["schedule"], t0=float(t["t0"]), t1=float(t["t1"]), steps=int(t["steps"]),
                  dt=None if t["dt"] is None else float(t["dt"]),
                  newton_tol=float(s["newton_tol"]), max_newton=int(s["max_newton"]),
                  ls_shrink=float(s["ls_shrink"]), jac_floor=float(s["jac_floor"]))
        kw.update(extra)
        return StepConfig(**kw)

    def initial(self, domain=None, *, shift: float = 0.0) -> Field:
        dom = domain or self.domain()
        ini = self.data["initial"]
        kind = ini["kind"]
        if kind == "zero":
            return dom.zeros()
        R0 = float(ini["support"])
        c = float(ini["center"]) + shift
        if kind == "box" and ini["height"] is not None:
            if dom.mode == RADIAL:
                return box(dom, float(ini["height"]), hi=R0)
            return box(dom, float(ini["height"]), c - R0, c + R0)
        if kind == "box":
            return box_of_mass(dom, float(ini["mass"]), R0, c)
        f = cosine_bump(dom, float(ini["mass"]), R0)
        if c and dom.mode == FULL_LINE:
            f = Field(dom, np.interp(dom.nodes - c, dom.nodes, f.values, left=0.0, right=0.0))
        return f

    def extraction_grid(self) -> ExtractionGrid:
        e = self.data["extract"]
        return ExtractionGrid(float(e["R"]), int(e["n"]), float(self.data["epsilon"]))

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    # validation ------------------------------------------------------------
    def _fail(self, key: str, exc) -> None:
        raise ConfigError(f"{self.source}: {key}: {exc}") from (exc if isinstance(exc, Exception) else None)

    def _validate(self) -> None:
        d = self.data
        if d["experiment"] not in EXPERIMENTS:
            self._fail("experiment", f"unknown experiment {d['experiment']!r}; expected one of {EXPERIMENTS}")
        try:
            params = self.params
            derive_exponents(params)
        except (LabError, ValueError, TypeError) as exc:
            self._fail("params", exc)
        try:
            exps = self.exponents()
        except (LabError, ValueError, TypeError) as exc:
            self._fail("exponent_overrides", exc)
        if d["experiment"] == "exponents":
            return
        if d["domain"]["mode"] not in MODES:
            self._fail("domain.mode", f"unknown grid mode {d['domain']['mode']!r}")
        try:
            dom = self.domain()
        except (LabError, ValueError, TypeError) as exc:
            self._fail("domain", exc)
        try:
            _diagonal_rule(float(d["epsilon"]), dom.h, params)
        except (LabError, ValueError) as exc:
            self._fail("epsilon", exc)
        try:
            self.step_config()
        except (LabError, ValueError, TypeError) as exc:
            self._fail("time", exc)
        kind = d["initial"]["kind"]
        if kind not in INITIAL_KINDS:
            self._fail("initial.kind", f"unknown initial datum {kind!r}; expected one of {INITIAL_KINDS}")
        if kind != "zero":
            if not float(d["initial"]["support"]) > 0:
                self._fail("initial.support", "support radius must be positive")
            if float(d["initial"]["support"]) >= dom.R:
                self._fail("initial.support", "datum support must lie inside the truncation radius")
            if d["initial"]["height"] is None and not float(d["initial"]["mass"]) > 0:
                self._fail("initial.mass", "mass must be positive")
        if d["experiment"] in ("extract", "barrier") and exps.beta <= 0:
            self._fail("params.p", "p must exceed the critical exponent for this experiment")
        if d["experiment"] == "extract":
            e = d["extract"]
            ks = e["k_schedule"]
            if not ks or any(float(k) <= 0 for k in ks):
                self._fail("extract.k_schedule", "k values must be positive")
            if e["shape"] not in ("box", "bump"):
                self._fail("extract.shape", f"unknown shape {e['shape']!r}")
            if params.m < 1:
                self._fail("params.m", "extraction needs m >= 1")
        if d["experiment"] == "verify-suite":
            bad = set(d["verify"]["checks"]) - set(SUITE_CHECKS)
            if bad:
                self._fail("verify.checks", f"unknown checks {sorted(bad)}")


def _merge(base: dict, over: dict, prefix: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(base[k], dict) and base[k] and k != "exponent_overrides":
            if not isinstance(v, dict):
                raise ConfigError(f"{key}: expected an object")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(data: dict, assignment: str) -> dict:
    """Set ``a.b.c=value`` in a nested dict; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, text = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {path!r} descends into a non-object")
    node[keys[-1]] = _parse_value(text.strip())
    return data


def load_config(path=None, overrides=(), out: str | None = None) -> RunConfig:
    data = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"{path}: no such config file") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    for o in overrides:
        apply_override(data, o)
    out = out or os.environ.get(OUT_ENV)
    if out:
        data["output"] = out
    return RunConfig(data, source)


# --------------------------------------------------------------------------
# experiments

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def initial_stats(u0: Field) -> dict:
    return {"support_radius": support_radius(u0), "sup_norm": lq_norm(u0, math.inf), "mass": mass(u0)}


def _table(cfg: RunConfig, dom=None):
    return assemble_kernel(dom or cfg.domain(), float(cfg.data["epsilon"]), cfg.params)


def _march(cfg: RunConfig):
    dom = cfg.domain()
    table = _table(cfg, dom)
    traj = march(cfg.initial(dom), cfg.step_config(), table, cfg.params.m)
    return traj, table


def _run_march(cfg: RunConfig, out: Path) -> list:
    traj, _ = _march(cfg)
    traj.write_csv(out)
    return []


def _run_extract(cfg: RunConfig, out: Path) -> list:
    e = cfg.data["extract"]
    F = extract_barenblatt(cfg.params, float(cfg.data["initial"]["mass"]), e["k_schedule"],
                           cfg.step_config(), cfg.extraction_grid(), t_star=float(e["t_star"]),
                           shape=e["shape"])
    window = tuple(e["tail_window"]) if e["tail_window"] else ver.default_tail_window(F)
    write_profile_csv(F, out / "profile.csv", window)
    return []


def _run_barrier(cfg: RunConfig, out: Path) -> list:
    params = cfg.params
    exps = cfg.exponents()
    b = cfg.data["barrier"]
    dom = cfg.domain()
    u0 = cfg.initial(dom)
    c = bar.build_barrier(params, exps, initial_stats(u0), safety=float(b["safety"]),
                          strict=bool(b["strict"]))
    bar.write_barrier_csv(c, params, out / "barrier.csv", exps)
    reports = []
    tol_far = 1e-6 * exps.beta * c.A
    for region in ("near", "far"):
        if c.A == 0.0:
            break
        _, res = bar.sample_residuals(c, params, exps, region, bar.ResidualGrid())
        worst = float(np.min(res))
        ok = worst >= -tol_far if region == "far" else worst >= 0.0
        reports.append(ver.PropertyReport(f"barrier_{region}_residual", bool(ok),
                                          {"min_residual": worst}, tol_far if region == "far" else 0.0,
                                          "global barrier supersolution", {"constants": c.to_dict()}))
    if b["check_trajectory"]:
        traj = march(u0, cfg.step_config(), _table(cfg, dom), params.m)
        dr = bar.check_domination(traj, c, params, exps)
        reports.append(ver.PropertyReport(
            "barrier_domination", bool(dr.passed) and c.certified,
            {"max_violation": dr.max_violation, "worst_step": dr.worst_step,
             "worst_node": dr.worst_node, "certified": c.certified},
            dr.tolerance, "global barrier domination", {"constants": c.to_dict()}))
    return reports


SUITE_CHECKS = ("contraction", "reflection", "radial_monotonicity", "mass", "time_decay",
                "dissipation", "energy")


def _run_suite(cfg: RunConfig, out: Path) -> list:
    params = cfg.params
    exps = cfg.exponents()
    checks = cfg.data["verify"]["checks"]
    dom = cfg.domain()
    table = _table(cfg, dom)
    scfg = cfg.step_config()
    traj = march(cfg.initial(dom), scfg, table, params.m)
    reports = []

    def guarded(name, fn):
        try:
            res = fn()
        except LabError as exc:
            reports.append(ver.PropertyReport(name, False, {"error": f"{type(exc).__name__}: {exc}"},
                                              0.0, "precondition"))
            return
        reports.extend(res if isinstance(res, list) else [res])

    partner = None
    if "contraction" in checks or "dissipation" in checks:
        shift = float(cfg.data["verify"]["partner_shift"]) if dom.mode == FULL_LINE else 0.0
        u1 = cfg.initial(dom, shift=shift)
        if dom.mode == RADIAL or not shift:
            u1 = u1 * 0.5
        partner = march(u1, scfg, table, params.m)
    for name in checks:
        if name == "contraction":
            guarded(name, lambda: ver.check_contraction(traj, partner))
        elif name == "reflection":
            if dom.mode == FULL_LINE:
                guarded(name, lambda: ver.check_reflection(traj, float(cfg.data["initial"]["center"])))
        elif name == "radial_monotonicity":
            guarded(name, lambda: ver.check_radial_monotone(traj))
        elif name == "mass":
            guarded(name, lambda: ver.check_mass_conservation(
                traj, exps, informational=exps.regime == DecayRegime.SUBLINEAR))
        elif name == "time_decay":
            guarded(name, lambda: ver.fit_time_decay(traj, params, exps))
        elif name == "dissipation":
            guarded(name, lambda: ver.dissipation_report(traj, partner, table))
        elif name == "energy":
            for q in sorted({0.0, params.m, 1.0}):
                guarded(f"energy_q{q:g}", lambda q=q: ver.energy_estimate_check(traj, table, q))
    return reports


def run_experiment(cfg: RunConfig) -> Path:
    """Execute ``cfg`` and persist its artifacts; returns the run directory."""
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    _write_json(out / "exponents.json", cfg.exponents().to_dict())
    runner = {"exponents": lambda c, o: None, "march": _run_march, "extract": _run_extract,
              "barrier": _run_barrier, "verify-suite": _run_suite}[cfg.experiment]
    try:
        reports = runner(cfg, out)
    except LabError as exc:
        if exc.args and isinstance(exc.args[0], str):
            exc.args = (f"{cfg.source}: {exc.args[0]}",) + exc.args[1:]
        raise
    if reports is not None and cfg.experiment in ("barrier", "verify-suite"):
        _write_json(out / "report.json", [r.to_dict() for r in reports])
    return out


def load_reports(run_dir) -> list[dict]:
    path = Path(run_dir) / "report.json"
    if not path.exists():
        raise MissingArtifact(f"{run_dir}: no report.json")
    return json.loads(path.read_text())


def count_failures(reports) -> int:
    return sum(1 for r in reports if r.get("passed") is False)


def _fmt_measured(measured: dict) -> str:
    parts = []
    for k, v in measured.items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.6g}")
        elif isinstance(v, (int, bool, str)):
            parts.append(f"{k}={v}")
    return ", ".join(parts)


def emit_report(run_dir, stream=None) -> str:
    """Fixed-width table of a run's checks: name, measured, tolerance, status."""
    reports = load_reports(run_dir)
    rows = []
    for r in reports:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[r.get("passed")]
        rows.append((r["name"], _fmt_measured(r.get("measured", {}))[:70],
                     f"{float(r.get('tolerance', 0.0)):.3g}", status))
    head = ("check", "measured", "tolerance", "status")
    widths = [max(len(head[i]), *(len(row[i]) for row in rows)) if rows else len(head[i])
              for i in range(4)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text
