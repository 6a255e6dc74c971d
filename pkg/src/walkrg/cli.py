"""Command-line front end: per-subcommand config schemas, artifacts, and run manifests."""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, WalkRGError

ENV_OUT = "WALKRG_OUT"
DEFAULT_OUT = "walkrg-out"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4


# --------------------------------------------------------------------------- schema


def _int_list(v):
    if isinstance(v, str):
        return [int(x) for x in v.split(",") if x.strip()]
    return [int(x) for x in v]


def _float_list(v):
    if isinstance(v, str):
        return [float(x) for x in v.split(",") if x.strip()]
    return [float(x) for x in v]


def _opt_float(v):
    return None if v is None or v == "" or v == "none" else float(v)


@dataclass(frozen=True)
class Key:
    kind: object  # converter
    default: object
    help: str = ""
    choices: tuple | None = None


SCHEMAS: dict[str, dict[str, Key]] = {
    "enumerate": {
        "d": Key(int, 3, "lattice dimension"),
        "n": Key(int, 10, "largest walk length"),
        "budget_seconds": Key(_opt_float, None, "stop deepening once this budget would be exceeded"),
    },
    "pivot": {
        "d": Key(int, 2, "lattice dimension"),
        "n_grid": Key(_int_list, [64, 128, 256, 512, 1024], "walk lengths"),
        "accepted": Key(int, 100_000, "accepted pivots per length"),
        "burn_in": Key(int, -1, "accepted burn-in moves (-1: 20 n)"),
    },
    "wsaw": {
        "mode": Key(str, "chi", "chi: susceptibility; c: c_{T,g}", ("chi", "c")),
        "g": Key(_float_list, [0.0], "couplings"),
        "nu": Key(float, 2.0, "ν for chi mode"),
        "T": Key(float, 1.0, "time horizon for c mode"),
        "T_max": Key(float, 16.0, "time cutoff for chi mode"),
        "dt": Key(float, 0.01, "time step for chi mode"),
        "samples": Key(int, 100_000, "walk paths"),
        "d": Key(int, 1, "lattice dimension (lattice mode)"),
        "graph_sites": Key(int, 0, "0: lattice walk; M > 0: path graph on M sites"),
    },
    "gaussian-check": {
        "d": Key(int, 1, "dimension"),
        "L": Key(int, 2, "block side"),
        "N": Key(int, 8, "number of scales"),
        "alpha": Key(float, 0.55, "fractional power"),
        "m2": Key(_opt_float, None, "mass squared (default L^{-αN})"),
        "n": Key(float, 1.0, "number of field components in β_j"),
        "observables": Key(int, 20, "random polynomials for the progressive identity"),
    },
    "polymer-check": {
        "instances": Key(int, 20, "random (I, I_+, K) instances"),
        "degree": Key(int, 2, "polynomial degree of random block observables"),
    },
    "rg-flow": {
        "eps": Key(float, 0.1, "ε"),
        "alpha": Key(float, 0.55, "α"),
        "n": Key(float, 1.0, "number of components"),
        "L": Key(int, 2, "block side"),
        "d": Key(int, 1, "dimension (β table source)"),
        "beta_source": Key(str, "constant", "constant a or per-scale table", ("constant", "table")),
        "a": Key(_opt_float, None, "constant β (default 1, or the table's tail average)"),
        "k_min": Key(int, 4, "m² = L^{-αk}, smallest k"),
        "k_max": Key(int, 17, "largest k"),
    },
    "phase-portrait": {
        "eps": Key(float, 0.1, "ε"),
        "a": Key(float, 1.0, "constant β"),
        "L": Key(int, 2, "block side"),
        "alpha": Key(float, 0.55, "α"),
        "n": Key(float, 1.0, "number of components"),
        "s0": Key(_float_list, [0.0, 0.02, 0.0669670084631926, 0.1], "initial s values"),
        "mu0": Key(_float_list, [-0.01, 0.0, 0.01], "initial μ values"),
        "j_max": Key(int, 60, "steps"),
    },
    "phi4": {
        "g": Key(_float_list, [0.25, 0.5, 1.0], "quartic couplings"),
        "nu0": Key(_float_list, [0.3, 0.5, 0.8], "ν₀ values"),
        "m2": Key(float, 0.4, "mass squared in the Z_N route"),
        "alpha": Key(float, 2.0, "power of -Δ"),
        "sites": Key(int, 2, "sites on the d = 1 torus"),
    },
    "susy-check": {
        "g": Key(_float_list, [0.5, 1.0], "couplings (g > 0)"),
        "nu": Key(_float_list, [0.5, 1.0], "ν values"),
        "sites": Key(_int_list, [1, 2], "path-graph sizes for the walk comparison"),
        "samples": Key(int, 100_000, "walk paths per comparison"),
    },
}

MODULE_OF = {
    "enumerate": "saw-enum", "pivot": "walk-mc", "wsaw": "wsaw-ct", "gaussian-check": "gaussian-field",
    "polymer-check": "polymer-algebra", "rg-flow": "rg-flow", "phase-portrait": "rg-flow",
    "phi4": "phi4-tiny", "susy-check": "susy-saw",
}


def validate(subcommand: str, raw: dict) -> dict:
    """Fill defaults and convert types; unknown keys and bad values raise with the field name."""
    schema = SCHEMAS[subcommand]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigurationError(f"{subcommand}: unknown config key(s) {', '.join(unknown)}")
    out = {}
    for name, key in schema.items():
        value = raw.get(name, key.default)
        try:
            value = key.kind(value) if value is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{subcommand}: field '{name}': {exc}") from None
        if key.choices and value not in key.choices:
            raise ConfigurationError(f"{subcommand}: field '{name}' must be one of {key.choices}")
        out[name] = value
    return out


# --------------------------------------------------------------------------- manifest


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    params: dict
    seed: int
    version: str
    started: str
    finished: str
    digests: dict = field(default_factory=dict)
    check: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def verify(self, out_dir: Path) -> dict[str, bool]:
        return {name: sha256((Path(out_dir) / name).read_bytes()) == d for name, d in self.digests.items()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")
    return buf.getvalue()


# --------------------------------------------------------------------------- subcommands


def run_enumerate(p, seed, threads):
    from .enumeration import count_saw, submultiplicativity_violations, reference_table

    res = count_saw(p["d"], p["n"], budget_seconds=p["budget_seconds"], workers=threads)
    bad = submultiplicativity_violations(res)
    summary = {"d": p["d"], "n_max": p["n"], "high_water": res.high_water, "complete": res.complete,
               "submultiplicativity_violations": bad}
    check = None
    if p["d"] == 3:
        ref = reference_table()
        top = min(res.high_water, ref.high_water)
        ok = res.counts[:top] == ref.counts[:top] and not bad
        check = {"ok": ok, "message": f"c_1..c_{top} {'match' if ok else 'differ from'} the d = 3 reference"}
    else:
        check = {"ok": not bad, "message": f"{len(bad)} submultiplicativity violations"}
    return {"counts.csv": res.to_csv(timing=False), "summary.json": _dump(summary)}, check


NU_WINDOWS = {2: (0.72, 0.78), 5: (0.46, 0.54)}


def run_pivot(p, seed, threads):
    from .pivot import estimate_nu

    est = estimate_nu(p["d"], p["n_grid"], p["accepted"], None if p["burn_in"] < 0 else p["burn_in"], seed)
    rows = [(s.n, s.mean_r2, s.stderr, s.count, s.acceptance) for s in est.samples]
    summary = {"d": est.d, "nu": est.nu, "stderr": est.stderr, "ci95": est.ci95, "amplitude": est.amplitude}
    check = None
    if p["d"] in NU_WINDOWS:
        lo, hi = NU_WINDOWS[p["d"]]
        check = {"ok": lo <= est.nu <= hi, "message": f"nu = {est.nu:.4f}, window [{lo}, {hi}]"}
    return {"r2.csv": _csv(["n", "mean_r2", "stderr", "count", "acceptance"], rows),
            "summary.json": _dump(summary)}, check


def _walk_generator(p):
    from .wsaw import GraphGenerator, path_graph_laplacian

    if p["graph_sites"] > 0:
        return GraphGenerator.from_laplacian(path_graph_laplacian(p["graph_sites"]))
    return None


def run_wsaw(p, seed, threads):
    from .wsaw import estimate_c, estimate_chi

    gen = _walk_generator(p)
    if p["mode"] == "c":
        est = estimate_c(np.array(p["g"]), p["T"], p["samples"], seed, gen, p["d"])
        ests = est if isinstance(est, list) else [est]
        rows = [(e.g, e.T, e.mean, e.stderr, e.n_samples) for e in ests]
        return {"c.csv": _csv(["g", "T", "c", "stderr", "samples"], rows),
                "summary.json": _dump({"mode": "c", "rows": rows})}, None
    rows = []
    check_ok, msgs = True, []
    for g in p["g"]:
        e = estimate_chi(g, p["nu"], p["T_max"], p["dt"], p["samples"], seed, gen, p["d"])
        rows.append((e.g, e.nu, e.chi, e.stderr, e.tail_bound))
        if g == 0.0:
            rel = abs(e.chi * p["nu"] - 1.0)
            check_ok &= rel <= 0.01
            msgs.append(f"chi(0, {p['nu']}) = {e.chi:.5f}, relative gap {rel:.2e}")
    check = {"ok": check_ok, "message": "; ".join(msgs)} if msgs else None
    return {"chi.csv": _csv(["g", "nu", "chi", "stderr", "tail_bound"], rows),
            "summary.json": _dump({"mode": "chi", "rows": rows})}, check


def run_gaussian_check(p, seed, threads):
    from .gaussian import beta_sequence, build_covariance, bulk_betas, decompose, progressive_check, tail_average
    from .lattice import TorusLattice
    from .polynomial import random_polynomial
    from .rng import stream

    torus = TorusLattice(p["d"], p["L"], p["N"])
    m2 = p["m2"] if p["m2"] is not None else float(p["L"]) ** (-p["alpha"] * p["N"])
    C = build_covariance(torus, p["alpha"], m2)
    dec = decompose(C)
    eps = 2 * p["alpha"] - p["d"]
    betas = beta_sequence(dec, p["n"], eps)
    zero_mode = abs(C.kernel.sum() - 1 / m2) * m2
    rng = stream(seed, 0, purpose=6)
    small = TorusLattice(1, 2, 2) if torus.n_sites > 4 else torus
    Cs = build_covariance(small, p["alpha"], m2)
    ds = decompose(Cs)
    half = max(1, ds.N // 2)
    C1 = sum(ds.piece(j).matrix for j in range(1, half + 1))
    C2 = Cs.matrix - C1
    residual = max(progressive_check(C1, C2, random_polynomial(rng, list(range(small.n_sites)), 6, 6))
                   for _ in range(p["observables"]))
    summary = {
        "m2": m2, "eps": eps, "reconstruction_error": dec.diagnostics["reconstruction_error"],
        "zero_mode_relative_error": zero_mode, "progressive_residual": residual,
        "min_piece_eigenvalue": min(dec.diagnostics["min_eigenvalue"]),
        "trace_fraction_min": min(dec.diagnostics["trace_fraction"]),
    }
    try:
        summary["a_estimate"] = tail_average(bulk_betas(betas, p["L"]))
    except ConfigurationError:
        summary["a_estimate"] = None
    ok = summary["reconstruction_error"] <= 1e-9 and zero_mode <= 1e-10 and residual <= 1e-9
    check = {"ok": ok, "message": f"reconstruction {summary['reconstruction_error']:.2e}, "
                                  f"zero mode {zero_mode:.2e}, progressive {residual:.2e}"}
    return {"betas.csv": _csv(["j", "beta"], list(enumerate(betas))),
            "kernels.csv": dec.kernel_rows_csv(), "summary.json": _dump(summary)}, check


def run_polymer_check(p, seed, threads):
    from .gaussian import banded_covariance
    from .lattice import TorusLattice
    from .polymer import (
        ExpectationContext, check_component_factorization, closure_counts, random_instance,
        reblock_identity_residual,
    )
    from .rng import stream

    rng = stream(seed, 0, purpose=7)
    t4 = TorusLattice(1, 2, 2)
    rows = []
    for i in range(p["instances"]):
        I, Ip, K = random_instance(t4, 0, rng, degree=p["degree"], n_terms=3)
        A = rng.normal(size=(4, 4))
        E = ExpectationContext(A @ A.T / 4)
        rows.append((i, reblock_identity_residual(t4, I, Ip, K, E)))
    t8 = TorusLattice(1, 2, 3)
    rep = check_component_factorization(t8, 0, 0.5 * np.eye(8), rng, control=banded_covariance(t8, 3))
    rep_wide = check_component_factorization(t8, 0, banded_covariance(t8, 3), rng)
    counts = closure_counts(t4, 0)
    worst = max(r[1] for r in rows) if rows else 0.0
    summary = {"identity_worst_residual": worst, "closure_total": sum(counts.values()),
               "blocks": len(t4.blocks(0)), "factorization": asdict(rep), "factorization_wide": asdict(rep_wide)}
    ok = worst <= 1e-9 and rep.ok and rep_wide.ok and sum(counts.values()) == 2 ** len(t4.blocks(0))
    check = {"ok": bool(ok), "message": f"identity residual {worst:.2e}; factorization {rep.ok and rep_wide.ok}"}
    return {"identity.csv": _csv(["instance", "residual"], rows), "summary.json": _dump(summary)}, check


def run_rg_flow(p, seed, threads):
    from .flow import extract_gamma

    grid = [float(p["L"]) ** (-p["alpha"] * k) for k in range(p["k_min"], p["k_max"] + 1)]
    fit = extract_gamma(p["eps"], p["alpha"], p["n"], p["L"], p["beta_source"], a=p["a"], d=p["d"],
                        m2_grid=grid)
    summary = fit.summary()
    ok = abs(fit.gamma - fit.target) <= 0.02
    check = {"ok": ok, "message": f"gamma = {fit.gamma:.4f} +/- {fit.slope_stderr:.1e}, target {fit.target:.4f}"}
    return {"fit.csv": _csv(["m2", "j_m", "mu0_c", "nu_N", "dnu_N_dnu0"], fit.rows),
            "summary.json": _dump(summary)}, check


def run_phase_portrait(p, seed, threads):
    from .flow import phase_portrait, portrait_csv

    starts = [(s, m) for s in p["s0"] for m in p["mu0"]]
    rows = phase_portrait(p["eps"], p["a"], p["L"], p["alpha"], p["n"], starts, p["j_max"])
    labels = {f"{r.start[0]!r},{r.start[1]!r}": r.label for r in rows}
    return {"trajectories.csv": portrait_csv(rows), "summary.json": _dump({"labels": labels})}, None


def run_phi4(p, seed, threads):
    from .phi4 import chi_direct, chi_via_ZN

    torus = (1, p["sites"])
    rows = []
    for g in p["g"]:
        for nu0 in p["nu0"]:
            a = chi_direct(torus, g, nu0 + p["m2"], alpha=p["alpha"])
            b = chi_via_ZN(torus, g, nu0, p["m2"], alpha=p["alpha"])
            rows.append((g, nu0, p["m2"], a.chi, b.chi, abs(a.chi - b.chi)))
    worst = max(r[5] for r in rows)
    check = {"ok": worst <= 1e-6, "message": f"largest |chi_direct - chi_ZN| = {worst:.2e}"}
    return {"chi.csv": _csv(["g", "nu0", "m2", "chi_direct", "chi_ZN", "gap"], rows),
            "summary.json": _dump({"worst_gap": worst})}, check


def run_susy_check(p, seed, threads):
    from .susy import evaluate_intrep, normalization, single_site_chi
    from .wsaw import GraphGenerator, estimate_chi, path_graph_laplacian

    norm_rows, ok = [], True
    for M in (1, 2):
        D = None if M == 1 else -path_graph_laplacian(M)
        for g in p["g"]:
            for nu in p["nu"]:
                v = normalization(M, g, nu, D)
                norm_rows.append((M, g, nu, v))
                ok &= abs(v - 1) <= 1e-4
    rep_rows = []
    g, nu = p["g"][-1], p["nu"][-1]
    for M in p["sites"]:
        if M == 1:
            form = evaluate_intrep(None, g, nu, M=1).chi
            walk, err, tol = single_site_chi(g, nu), 0.0, 1e-4
        else:
            form = evaluate_intrep(-path_graph_laplacian(M), g, nu, radial=16 if M == 3 else 24,
                                   angular=16 if M == 3 else 24).chi
            est = estimate_chi(g, nu, 16.0, 0.01, p["samples"], seed,
                               GraphGenerator.from_laplacian(path_graph_laplacian(M)))
            walk, err = est.chi, est.stderr
            tol = 4 * err + 1e-3
        rep_rows.append((M, g, nu, form, walk, err, abs(form - walk) <= tol))
        ok &= abs(form - walk) <= tol
    check = {"ok": bool(ok), "message": f"{len(norm_rows)} normalizations, {len(rep_rows)} walk comparisons"}
    return {"normalization.csv": _csv(["M", "g", "nu", "integral"], norm_rows),
            "intrep.csv": _csv(["M", "g", "nu", "form_side", "walk_side", "walk_stderr", "ok"], rep_rows),
            "summary.json": _dump({"normalization": norm_rows, "intrep": rep_rows})}, check


RUNNERS = {
    "enumerate": run_enumerate, "pivot": run_pivot, "wsaw": run_wsaw, "gaussian-check": run_gaussian_check,
    "polymer-check": run_polymer_check, "rg-flow": run_rg_flow, "phase-portrait": run_phase_portrait,
    "phi4": run_phi4, "susy-check": run_susy_check,
}


# --------------------------------------------------------------------------- driver


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def execute(subcommand: str, params: dict, seed: int, out_dir: Path, threads: int = 1) -> RunManifest:
    """Run one subcommand and write its artifacts and manifest into ``out_dir``."""
    params = validate(subcommand, params)
    started = _now()
    files, check = RUNNERS[subcommand](params, seed, threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in sorted(files.items()):
        data = text.encode()
        (out_dir / name).write_bytes(data)
        digests[name] = sha256(data)
    man = RunManifest(subcommand, params, seed, __version__, started, _now(), digests, check)
    (out_dir / "manifest.json").write_text(man.to_json() + "\n")
    return man


def _origin(exc: BaseException) -> str:
    """Name of the deepest package module in the traceback."""
    name = "walkrg"
    for frame in traceback.extract_tb(exc.__traceback__):
        path = Path(frame.filename)
        if path.parent.name == "walkrg":
            name = path.stem
    return name


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="walkrg", description="Lattice walks and RG flow toolkit.")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name, help=f"{MODULE_OF[name]} tools")
        _common(sp)
        for key, k in schema.items():
            sp.add_argument(f"--{key}", dest=f"cfg_{key}", default=None, help=k.help)
    rr = sub.add_parser("rerun", help="repeat a run from its manifest and compare digests")
    rr.add_argument("manifest")
    rr.add_argument("--out", default=None)
    rr.add_argument("--threads", type=int, default=1)
    return ap


def _common(sp):
    sp.add_argument("--config", default=None, help="JSON file with config keys")
    sp.add_argument("--out", default=None, help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1, help="worker cap")
    sp.add_argument("--check", action="store_true", help="exit 4 when the built-in check fails")


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(ENV_OUT) or DEFAULT_OUT)


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.subcommand == "rerun":
            man = RunManifest.from_json(Path(args.manifest).read_text())
            out = _out_dir(args.out)
            new = execute(man.subcommand, man.params, man.seed, out, args.threads)
            same = new.digests == man.digests
            print(json.dumps({"identical": same, "digests": new.digests}, sort_keys=True))
            return EXIT_OK if same else EXIT_CHECK
        raw = {}
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config file is not valid JSON: {exc}") from None
            if not isinstance(raw, dict):
                raise ConfigurationError("config file must hold a JSON object")
        for key in SCHEMAS[args.subcommand]:
            v = getattr(args, f"cfg_{key}")
            if v is not None:
                raw[key] = v
        params = validate(args.subcommand, raw)
        out = _out_dir(args.out)
        man = execute(args.subcommand, params, args.seed, out, args.threads)
    except ConfigurationError as exc:
        where = _origin(exc)
        tag = "" if where in ("cli", "walkrg") else f" [{where}]"
        print(f"config error{tag}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WalkRGError, ArithmeticError, MemoryError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = {"subcommand": man.subcommand, "out": str(out), "files": sorted(man.digests)}
    if man.check is not None:
        summary["check"] = man.check
    print(json.dumps(summary, sort_keys=True))
    if args.check and man.check is not None and not man.check["ok"]:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
