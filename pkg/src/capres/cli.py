"""Command line interface ``capres``.

Configuration files are line oriented::

    # comment
    problem.potential = piecewise
    problem.segments = 1:2:10
    contour.theta = 0.3

Unknown keys and duplicate keys are errors.  Artifacts go to
``<output.directory>/<config digest>/<stage>/``; the digest is the SHA-256 of
the canonical form (comments and whitespace removed, keys sorted), and a
stage that already completed is not recomputed unless ``--force`` is given.
``CAPRES_OUTPUT_DIR`` overrides ``output.directory``.

Exit codes: 0 success, 1 usage or configuration error, 2 compute error,
3 verification failure.  Errors are printed to stderr as JSON.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .contour import build_contour, verify_contour
from .discretize import CutoffSpec, Grid, assemble_davies, assemble_scaled_operator
from .dtn import Interface, choose_interface, count_resonances_dtn
from .eigen import eig_dense, eigenvalues, projection_rank
from .errors import CapresError, MissingArtifact, ParseError, RangeError, UnknownKey
from .model import FULL_LINE, HALF_LINE, THETA_MAX, ModelProblem, PotentialSpec
from .oracle import find_resonances
from .sweep import SweepConfig, cap_sweep, default_delta, filter_spurious, in_window, verify_convergence

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_VERIFY = 0, 1, 2, 3
DAVIES_TOL = 1e-6
CONTOUR_TOL = 1e-12


def _floats(text, n=None):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    vals = [float(p) for p in parts]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {len(vals)}")
    return tuple(vals)


def _segments(text):
    segs = []
    for part in text.split(";"):
        if not part.strip():
            continue
        lo, hi, v = (float(x) for x in part.split(":"))
        segs.append((lo, hi, v))
    return tuple(segs)


def _window(text):
    return _floats(text, 4)


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "problem": {
        "name": (str, "problem"),
        "geometry": (_choice(HALF_LINE, FULL_LINE), HALF_LINE),
        "potential": (_choice("zero", "piecewise", "rational"), "zero"),
        "segments": (_segments, ()),
        "beta": (float, 0.0),
        "metric_beta": (float, 0.0),
        "R0": (float, 2.0),
        "R1": (float, 3.0),
    },
    "contour": {
        "theta": (float, 0.3),
        "alpha0": (float, 0.1),
    },
    "discretization": {
        "L": (float, 30.0),
        "n_points": (int, 1501),
        "r_inner": (float, None),
        "r_outer": (float, None),
        "scheme": (_choice("FD4"), "FD4"),
    },
    "sweep": {
        "window": (_window, (2.0, 9.0, -1.5, 0.0)),
        "eps_max": (float, 1e-1),
        "eps_min": (float, 1e-5),
        "steps": (int, 9),
        "delta": (float, None),
        "matching_radius": (float, 0.02),
        "theta": (float, 0.0),
        "alpha0": (float, 0.1),
        "h": (float, 0.05),
        "L_min": (float, 20.0),
        "absorb_constant": (float, 125.0),
    },
    "oracle": {
        "window": (_window, (1.0, 9.0, -2.0, 0.0)),
    },
    "eigen": {
        "quadrature_points": (int, 32),
        "method": (_choice("auto", "qr", "lapack"), "auto"),
    },
    "dtn": {
        "candidates": (_floats, None),
        "h": (float, 0.02),
        "L": (float, None),
        "samples": (int, 64),
    },
    "davies": {
        "epsilon": (float, 1.0),
        "L": (float, 12.0),
        "n_points": (int, 1600),
        "thetas": (_floats, (0.0, 0.1)),
    },
    "output": {
        "directory": (str, "capres-runs"),
    },
}


@dataclass
class RunConfig:
    values: dict  # "section.key" -> parsed value
    raw: dict  # "section.key" -> canonical text
    path: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    @property
    def digest(self):
        return hashlib.sha256(canonical_text(self.raw).encode("utf-8")).hexdigest()

    def problem(self):
        v = self.values
        kind = v["problem.potential"]
        if kind == "zero":
            pot = PotentialSpec.zero()
        elif kind == "piecewise":
            pot = PotentialSpec.piecewise_constant(v["problem.segments"])
        else:
            pot = PotentialSpec.rational_decay(v["problem.beta"])
        return ModelProblem(v["problem.geometry"], pot, v["problem.metric_beta"], v["problem.R0"],
                            v["problem.R1"], v["problem.name"])

    def cutoff(self):
        ri = self.values["discretization.r_inner"]
        ro = self.values["discretization.r_outer"]
        ri = self.values["problem.R0"] if ri is None else ri
        ro = self.values["problem.R1"] if ro is None else ro
        return CutoffSpec(ri, ro)

    def grid(self):
        L = self.values["discretization.L"]
        n = self.values["discretization.n_points"]
        if self.values["problem.geometry"] == HALF_LINE:
            return Grid(0.0, L, n)
        return Grid(-L, L, n)

    def sweep_config(self, resonances=()):
        v = self.values
        delta = v["sweep.delta"]
        if delta is None:
            delta = default_delta(resonances)
        eps = tuple(np.geomspace(v["sweep.eps_max"], v["sweep.eps_min"], v["sweep.steps"]))
        return SweepConfig(v["sweep.window"], eps, delta, v["sweep.matching_radius"], v["sweep.theta"],
                           v["sweep.alpha0"], v["sweep.h"], v["sweep.L_min"], v["sweep.absorb_constant"])


def canonical_text(raw):
    return "\n".join(f"{k}={raw[k]}" for k in sorted(raw)) + "\n"


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def parse_config_text(text, path=None):
    """Parse configuration text; see :func:`parse_config`."""
    seen = {}
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line)
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in body.split("=", 1))
        key = "".join(key.split())
        if "." not in key:
            raise ParseError(f"line {lineno}: key {key!r} lacks a section")
        section, name = key.split(".", 1)
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise UnknownKey(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ParseError(f"duplicate key {key!r} on lines {seen[key]} and {lineno}")
        if not value:
            raise ParseError(f"line {lineno}: empty value for {key!r}")
        seen[key] = lineno
        raw[key] = " ".join(value.split())
    values = {}
    for section, keys in SCHEMA.items():
        for name, (parser, default) in keys.items():
            key = f"{section}.{name}"
            if key in raw:
                try:
                    values[key] = parser(raw[key])
                except ValueError as exc:
                    raise ParseError(f"line {seen[key]}: bad value for {key!r}: {exc}") from exc
            else:
                values[key] = default
    cfg = RunConfig(values, raw, path)
    validate_config(cfg)
    return cfg


def parse_config(path):
    """Read and validate a configuration file.

    Raises
    ------
    ParseError
        Malformed line, duplicate key (both line numbers are named) or
        unparsable value.
    UnknownKey
        Key not in the schema.
    RangeError
        Value outside its admissible range.
    """
    p = Path(path)
    if not p.exists():
        raise ParseError(f"configuration file {path} not found")
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not UTF-8") from exc
    return parse_config_text(text, str(p))


def validate_config(cfg):
    v = cfg.values

    def need(cond, msg):
        if not cond:
            raise RangeError(msg)

    need(0 < v["problem.R0"] < v["problem.R1"], "problem.R0 must satisfy 0 < R0 < R1")
    need(abs(v["problem.metric_beta"]) < 1, "problem.metric_beta must satisfy |beta| < 1")
    need(abs(v["problem.beta"]) < 1, "problem.beta must satisfy |beta| < 1")
    for key in ("contour.theta", "sweep.theta"):
        need(0 <= v[key] <= THETA_MAX - 1e-3,
             f"{key}={v[key]} outside the sector bound [0, pi/8 - 1e-3] ({THETA_MAX - 1e-3:.6f})")
    for key in ("contour.alpha0", "sweep.alpha0", "sweep.h", "sweep.matching_radius",
                "discretization.L", "davies.epsilon", "davies.L", "dtn.h"):
        need(v[key] > 0, f"{key} must be positive")
    need(v["discretization.n_points"] >= 50, "discretization.n_points must be at least 50")
    need(v["davies.n_points"] >= 50, "davies.n_points must be at least 50")
    need(0 < v["sweep.eps_min"] < v["sweep.eps_max"], "need 0 < sweep.eps_min < sweep.eps_max")
    need(v["sweep.steps"] >= 4, "sweep.steps must be at least 4")
    need(v["eigen.quadrature_points"] >= 8, "eigen.quadrature_points must be at least 8")
    need(v["dtn.samples"] >= 8, "dtn.samples must be at least 8")
    for th in v["davies.thetas"]:
        need(0 <= th < THETA_MAX, f"davies theta {th} outside [0, pi/8)")
    cut = cfg.cutoff()
    need(v["problem.R0"] <= cut.r_inner < cut.r_outer <= v["problem.R1"],
         "cutoff must satisfy R0 <= r_inner < r_outer <= R1")
    if v["problem.potential"] == "piecewise":
        need(len(v["problem.segments"]) > 0, "piecewise potential needs problem.segments")
    if v["dtn.candidates"] is not None:
        for a in v["dtn.candidates"]:
            need(v["problem.R0"] < a < v["problem.R1"], f"dtn candidate {a} outside (R0, R1)")


def default_config():
    return parse_config_text("")


# ---------------------------------------------------------------------------
# run directories


def fmt(x):
    return format(float(x), ".17g")


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def output_root(cfg):
    return Path(os.environ.get("CAPRES_OUTPUT_DIR") or cfg["output.directory"])


class RunDir:
    def __init__(self, cfg):
        self.cfg = cfg
        self.path = output_root(cfg) / cfg.digest
        self.manifest_path = self.path / "manifest.json"

    def manifest(self):
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text())
        return {"config_digest": self.cfg.digest, "tool_version": __version__, "stages": {}}

    def ensure(self):
        self.path.mkdir(parents=True, exist_ok=True)
        cfg_file = self.path / "config.canonical"
        if not cfg_file.exists():
            cfg_file.write_text(canonical_text(self.cfg.raw))

    def is_done(self, stage):
        return stage in self.manifest()["stages"]

    def stage_dir(self, stage):
        d = self.path / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def record(self, stage, files, start, status="ok"):
        m = self.manifest()
        m["stages"][stage] = {
            "start": start, "end": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "status": status,
            "files": {str(Path(f).relative_to(self.path)): _sha(f) for f in files},
        }
        self.manifest_path.write_text(json.dumps(m, indent=2, sort_keys=True))

    def lock(self):
        self.ensure()
        lock = self.path / ".lock"
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise CapresError(f"run directory {self.path} is locked by another process") from exc
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return lock


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages; each returns (exit code, list of files, summary for stdout)


def stage_contour(cfg, args, out):
    theta = args.theta if args.theta is not None else cfg["contour.theta"]
    r1 = args.r1 if args.r1 is not None else cfg["problem.R1"]
    alpha = args.alpha if args.alpha is not None else cfg["contour.alpha0"]
    c = build_contour(theta, r1, alpha)
    rep = verify_contour(c, 10_000)
    rows = [(p.name, p.max_violation, p.at_t) for p in rep]
    path = out / "contour.csv"
    write_csv(path, ["property", "max_violation", "at_t"], rows)
    text = path.read_text()
    code = EXIT_OK if all(p.max_violation < CONTOUR_TOL for p in rep) else EXIT_VERIFY
    return code, [path], text + f"T0,{fmt(c.T0)}\n"


def davies_rows(eps, L, n_points, thetas, k=6):
    rows = []
    exact = np.exp(-1j * np.pi / 4) * np.sqrt(eps) * (2 * np.arange(k) + 1)
    for th in thetas:
        A = assemble_davies(eps, th, Grid(-L, L, n_points))
        ev = eigenvalues(A)
        ev = ev[np.argsort(np.abs(ev))][:k]
        ev = ev[np.argsort(np.abs(ev))]
        for j in range(k):
            rows.append((float(th), j, ev[j].real, ev[j].imag, exact[j].real, exact[j].imag,
                         abs(ev[j] - exact[j]) / abs(exact[j])))
    return rows


def stage_davies(cfg, args, out):
    rows = davies_rows(cfg["davies.epsilon"], cfg["davies.L"], cfg["davies.n_points"], cfg["davies.thetas"])
    path = out / "davies.csv"
    write_csv(path, ["theta", "k", "re_z", "im_z", "re_exact", "im_exact", "rel_error"], rows)
    code = EXIT_OK if all(r[-1] < DAVIES_TOL for r in rows) else EXIT_VERIFY
    return code, [path], path.read_text()


def _oracle_supported(problem):
    return (problem.geometry == HALF_LINE and problem.is_flat
            and problem.potential.kind in ("zero", "piecewise"))


def stage_oracle(cfg, args, out):
    problem = cfg.problem()
    if not _oracle_supported(problem):
        raise CapresError("the transfer-matrix oracle needs a flat half-line problem with a "
                          "zero or piecewise-constant potential")
    window = tuple(args.window) if getattr(args, "window", None) else cfg["oracle.window"]
    res = find_resonances(problem, window)
    rows = [(e.k.real, e.k.imag, e.z.real, e.z.imag, e.multiplicity, e.residual) for e in res]
    path = out / "oracle.csv"
    write_csv(path, ["re_k", "im_k", "re_z", "im_z", "multiplicity", "residual"], rows)
    return EXIT_OK, [path], path.read_text()


def stage_scaling(cfg, args, out):
    problem = cfg.problem()
    contour = build_contour(cfg["contour.theta"], problem.R1, cfg["contour.alpha0"])
    A = assemble_scaled_operator(problem, contour, 0.0, cfg.cutoff(), cfg.grid())
    res = eig_dense(A, cfg["eigen.method"])
    ev = res.eigenvalues
    window = cfg["oracle.window"]
    sel = ev[in_window(ev, window)]
    sel = sel[np.lexsort((sel.imag, sel.real))]
    accessible = np.angle(sel) > -2 * contour.theta
    rows = [(z.real, z.imag, int(a)) for z, a in zip(sel, accessible)]
    path = out / "scaling.csv"
    write_csv(path, ["re_z", "im_z", "accessible"], rows)
    meta = out / "scaling.json"
    write_json(meta, {"theta": contour.theta, "T0": contour.T0, "n": A.n,
                      "backward_error": res.residual_bound, "backend": res.backend})
    return EXIT_OK, [path, meta], path.read_text()


def stage_sweep(cfg, args, out):
    problem = cfg.problem()
    refs, mode = [], "oracle"
    if _oracle_supported(problem):
        w = cfg["sweep.window"]
        refs = [e.z for e in find_resonances(problem, w)]
    else:
        mode = "cross-method"
        contour = build_contour(cfg["contour.theta"], problem.R1, cfg["contour.alpha0"])
        ev = eigenvalues(assemble_scaled_operator(problem, contour, 0.0, cfg.cutoff(), cfg.grid()))
        refs = list(ev[in_window(ev, cfg["sweep.window"]) & (np.angle(ev) > -2 * contour.theta + 0.05)])
    sc = cfg.sweep_config(refs)
    res = cap_sweep(problem, sc, cfg.cutoff())
    trs = res.trajectories
    traj_rows, limit_rows = [], []
    for tid, t in enumerate(trs):
        for eps, z, _ in t.points:
            traj_rows.append((tid, eps, z.real, z.imag, t.status))
        if t.extrapolated_limit is not None:
            z0 = t.extrapolated_limit
            limit_rows.append((tid, z0.real, z0.imag, t.fit_exponent, t.fit_residual))
    p1, p2, p3 = out / "trajectories.csv", out / "limits.csv", out / "report.json"
    write_csv(p1, ["trajectory_id", "epsilon", "re_z", "im_z", "status"], traj_rows)
    write_csv(p2, ["trajectory_id", "re_z0", "im_z0", "p", "fit_residual"], limit_rows)
    parts = filter_spurious(trs)
    rep = verify_convergence(trs, refs, sc.delta)
    report = {"mode": mode, "delta": sc.delta,
              "references": [[fmt(z.real), fmt(z.imag)] for z in refs],
              "partition": {k: len(v) for k, v in parts.items()},
              "verification": rep.to_dict()}
    write_json(p3, report)
    return (EXIT_OK if rep.passed else EXIT_VERIFY), [p1, p2, p3], json.dumps(report["verification"], indent=2)


def stage_dtn(cfg, args, out):
    problem = cfg.problem()
    theta = args.theta if args.theta is not None else cfg["contour.theta"]
    contour = build_contour(theta, problem.R1, cfg["contour.alpha0"])
    center = complex(*args.center)
    circle = (center, args.radius)
    L = cfg["dtn.L"]
    L = float(max(contour.T0, problem.R1) + 20.0) if L is None else L
    if args.interface is not None:
        iface = Interface(args.interface)
    else:
        cands = cfg["dtn.candidates"]
        if cands is None:
            cands = tuple(np.linspace(problem.R0, problem.R1, 11)[1:-1])
        iface = choose_interface(problem, contour, args.epsilon, circle, list(cands), L=L, h=0.05)
    res, samples = count_resonances_dtn(problem, contour, args.epsilon, iface, circle, cfg["dtn.samples"],
                                        L=L, h=cfg["dtn.h"], return_samples=True)
    d = res.to_dict()
    d["interface"] = iface.a
    d["epsilon"] = args.epsilon
    d["theta"] = theta
    # same circle on the scaled matrix of the configured grid
    A = assemble_scaled_operator(problem, contour, args.epsilon, cfg.cutoff(), cfg.grid())
    pr = projection_rank(A, center, args.radius, cfg["eigen.quadrature_points"])
    d["projection_rank"] = pr.rank
    d["projection_trace"] = [pr.trace_value.real, pr.trace_value.imag]
    files = []
    path = out / "count.json"
    write_json(path, d)
    files.append(path)
    if args.emit_samples:
        rows = [(z.real, z.imag, n.real, n.imag, float(np.angle(n))) for z, n in samples]
        write_csv(args.emit_samples, ["re_z", "im_z", "re_N", "im_N", "phase"], rows)
    return EXIT_OK, files, json.dumps(d, indent=2, sort_keys=True)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def build_report(run_dir):
    """Merge the artifacts of a run directory into one report dict.

    Raises
    ------
    MissingArtifact
        If the directory has no manifest or no stage outputs at all.
    """
    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json"
    if not mpath.exists():
        raise MissingArtifact(f"{run_dir}: missing manifest.json (required: manifest.json and at least "
                              f"one of oracle/oracle.csv, scaling/scaling.csv, sweep/limits.csv)")
    manifest = json.loads(mpath.read_text())
    stages = manifest.get("stages", {})
    have = {s for s in ("oracle", "scaling", "sweep") if s in stages}
    dtn_stages = sorted(s for s in stages if s.startswith("dtn"))
    if not have and not dtn_stages:
        raise MissingArtifact(f"{run_dir}: no stage artifacts recorded")
    oracle = []
    if "oracle" in have:
        oracle = [complex(float(r["re_z"]), float(r["im_z"])) for r in _read_csv(run_dir / "oracle" / "oracle.csv")]
    scaling = []
    if "scaling" in have:
        scaling = [complex(float(r["re_z"]), float(r["im_z"])) for r in _read_csv(run_dir / "scaling" / "scaling.csv")]
    limits = []
    if "sweep" in have:
        limits = [complex(float(r["re_z0"]), float(r["im_z0"])) for r in _read_csv(run_dir / "sweep" / "limits.csv")]
    counts = []
    for s in dtn_stages:
        d = json.loads((run_dir / s / "count.json").read_text())
        counts.append((complex(*d["center"]), d["radius"], d["winding"], d.get("projection_rank")))
    refs = oracle or scaling or limits
    rows = []
    for z in refs:
        row = {"oracle": [fmt(z.real), fmt(z.imag)] if oracle else None}

        def nearest(vals):
            return min(vals, key=lambda v: abs(v - z)) if vals else None

        zs, z0 = nearest(scaling), nearest(limits)
        row["scaling"] = None if zs is None else [fmt(zs.real), fmt(zs.imag)]
        row["extrapolated"] = None if z0 is None else [fmt(z0.real), fmt(z0.imag)]
        row["abs_z0_minus_ref"] = None if z0 is None else fmt(abs(z0 - z))
        cnt = [(w, pr) for c, r, w, pr in counts if abs(c - z) < r]
        row["dtn_count"] = cnt[0][0] if cnt else None
        row["projection_rank"] = cnt[0][1] if cnt else None
        rows.append(row)
    complete = {"oracle", "scaling", "sweep"} <= have and bool(dtn_stages)
    return {"config_digest": manifest.get("config_digest"), "complete": complete,
            "stages": sorted(have | set(dtn_stages)), "resonances": rows}


def report_table(rep):
    buf = io.StringIO()
    buf.write(f"run {rep['config_digest']}  complete={rep['complete']}  stages={','.join(rep['stages'])}\n")
    buf.write(f"{'oracle z*':>34} {'scaling z':>34} {'extrapolated z0':>34} {'|z0-z*|':>10} {'DtN':>4} {'rank':>4}\n")
    for r in rep["resonances"]:
        def c(v):
            return "-" if v is None else f"{float(v[0]):.10f}{float(v[1]):+.10f}i"
        d = "-" if r["abs_z0_minus_ref"] is None else f"{float(r['abs_z0_minus_ref']):.2e}"
        cnt = "-" if r["dtn_count"] is None else str(r["dtn_count"])
        rk = "-" if r["projection_rank"] is None else str(r["projection_rank"])
        buf.write(f"{c(r['oracle']):>34} {c(r['scaling']):>34} {c(r['extrapolated']):>34} {d:>10} {cnt:>4} {rk:>4}\n")
    return buf.getvalue()


STAGES = {
    ("contour", "check"): ("contour", stage_contour),
    ("davies", "validate"): ("davies", stage_davies),
    ("oracle", "find"): ("oracle", stage_oracle),
    ("scaling", "eig"): ("scaling", stage_scaling),
    ("cap", "sweep"): ("sweep", stage_sweep),
    ("dtn", "count"): ("dtn", stage_dtn),
}


def _flag_suffix(args, names):
    parts = [f"{n}={getattr(args, n)}" for n in names if getattr(args, n, None) is not None]
    if not parts:
        return ""
    return "-" + hashlib.sha256(";".join(parts).encode()).hexdigest()[:12]


def run(subcommand, cfg, args, stdout=None):
    """Dispatch one subcommand; returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stage, func = STAGES[subcommand]
    flag_names = {"contour": ("theta", "r1", "alpha"), "oracle": ("window",),
                  "dtn": ("center", "radius", "epsilon", "theta", "interface")}.get(stage, ())
    name = stage + _flag_suffix(args, flag_names)
    rd = RunDir(cfg)
    rd.ensure()
    if rd.is_done(name) and not getattr(args, "force", False):
        info = rd.manifest()["stages"][name]
        stdout.write(json.dumps({"status": "cached", "stage": name, "run_dir": str(rd.path)}) + "\n")
        return EXIT_VERIFY if info.get("status") == "verification-failed" else EXIT_OK
    lock = rd.lock()
    try:
        start = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        out = rd.stage_dir(name)
        code, files, summary = func(cfg, args, out)
        rd.record(name, files, start, "ok" if code == EXIT_OK else "verification-failed")
    finally:
        lock.unlink(missing_ok=True)
    stdout.write(summary if summary.endswith("\n") else summary + "\n")
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"kind": "UsageError", "message": message}) + "\n")
        raise SystemExit(EXIT_USAGE)


def _pair(text):
    return _floats(text, 2)


def build_parser():
    p = _Parser(prog="capres", description="Resonances by complex scaling, absorbing potentials and DtN counting.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def common(sp, need_config):
        sp.add_argument("--config", required=need_config, help="configuration file")
        sp.add_argument("--force", action="store_true", help="recompute even if cached")

    g = sub.add_parser("contour").add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = g.add_parser("check")
    common(sp, False)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--r1", type=float)
    sp.add_argument("--alpha", type=float)

    g = sub.add_parser("davies").add_subparsers(dest="action", required=True, parser_class=_Parser)
    common(g.add_parser("validate"), False)

    g = sub.add_parser("oracle").add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = g.add_parser("find")
    common(sp, True)
    sp.add_argument("--window", type=_window, help="re_lo,re_hi,im_lo,im_hi in the z-plane")

    g = sub.add_parser("scaling").add_subparsers(dest="action", required=True, parser_class=_Parser)
    common(g.add_parser("eig"), True)

    g = sub.add_parser("cap").add_subparsers(dest="action", required=True, parser_class=_Parser)
    common(g.add_parser("sweep"), True)

    g = sub.add_parser("dtn").add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = g.add_parser("count")
    common(sp, True)
    sp.add_argument("--center", type=_pair, required=True, help="X,Y")
    sp.add_argument("--radius", type=float, required=True)
    sp.add_argument("--epsilon", type=float, default=0.0)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--interface", type=float, help="skip the interface search and use this a")
    sp.add_argument("--emit-samples", dest="emit_samples")

    sp = sub.add_parser("report")
    sp.add_argument("run_dir")
    sp.add_argument("--json", dest="json_out", help="also write the JSON report here")
    return p


def _emit_error(exc, stream=None):
    stream = sys.stderr if stream is None else stream
    if isinstance(exc, CapresError):
        payload = exc.to_dict()
    else:
        payload = {"kind": type(exc).__name__, "message": str(exc)}
    stream.write(json.dumps(payload) + "\n")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.group == "report":
            rep = build_report(args.run_dir)
            text = json.dumps(rep, indent=2, sort_keys=True) + "\n"
            Path(args.run_dir, "report.json").write_text(text)
            if args.json_out:
                Path(args.json_out).write_text(text)
            sys.stdout.write(report_table(rep))
            return EXIT_OK
        try:
            cfg = parse_config(args.config) if args.config else default_config()
        except (ParseError, UnknownKey, RangeError) as exc:
            _emit_error(exc)
            return EXIT_USAGE
        return run((args.group, args.action), cfg, args)
    except (CapresError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _emit_error(exc)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
