"""Command-line front end; every command writes deterministic CSV.

Each output starts with `#` comment lines carrying the toolkit version and
the fully resolved configuration as JSON.  Feeding an output file back via
`--config` reruns the same computation and reproduces it byte for byte.
Numbers are printed with 17 significant digits.

Exit codes: 0 success, 2 configuration error, 3 resource cap, 4 failed
verification.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .amp import generate_coupled_instance, generate_instance, run_amp
from .exceptions import DomainError, ResourceLimitError
from .oracle import CHECK_COLUMNS, trial_seeds, verify_suite
from .potential import (DEFAULT_GRID, DegenerateMinimumError, SystemParams,
                        analyze_potential, potential_scan, predicted_ymmse, thresholds)
from .prior import DiscretePrior, load_prior
from .state_evolution import (ENSEMBLE_KINDS, SEEDING_MODES, build_ensemble,
                              delta_amp_coupled, run_se, run_se_coupled)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_VERIFY = 4

# per-command configuration keys and their defaults
DEFAULTS = {
    "potential": {"prior": "binary", "alpha": 0.5, "delta": 1.0, "grid": DEFAULT_GRID},
    "thresholds": {"prior": "binary", "alpha": [0.25, 0.5, 1.0], "tol": 1e-4,
                   "grid": DEFAULT_GRID},
    "se": {"prior": "binary", "alpha": 0.5, "delta": 1.0, "max_iter": 10_000, "tol": 1e-12},
    "se-coupled": {"prior": "binary", "alpha": 0.5, "delta": 1.0, "gamma": 32, "w": 3,
                   "kind": "seeded", "seeding": "pinned", "max_iter": 10_000, "tol": 1e-10,
                   "sweep_w": None, "threshold_tol": 1e-4, "profile_tol": 1e-6},
    "amp": {"prior": "binary", "alpha": 1.0, "delta": 0.05, "L": 2000, "trials": 20,
            "seed": 0, "max_iter": 500, "tol": 1e-12, "damp": 0.0, "gamma": None,
            "w": None, "kind": "seeded"},
    "verify": {"prior": "binary", "alpha": 0.5, "delta": 1.0, "L": 12, "trials": 500,
               "seed": 0},
    "phase-diagram": {"prior": "binary", "alpha": [0.25, 0.5, 1.0],
                      "delta": "log:0.001:1:7", "grid": DEFAULT_GRID, "max_iter": 10_000},
}

LIST_KEYS = {("thresholds", "alpha"), ("phase-diagram", "alpha"), ("phase-diagram", "delta")}
INT_KEYS = {"grid", "max_iter", "gamma", "w", "L", "trials", "seed"}
STR_KEYS = {"kind", "seeding"}

COLUMNS = {
    "potential": ("E", "psi", "channel_mi", "i_rs"),
    "thresholds": ("alpha", "delta_amp", "delta_rs", "scenario"),
    "se": ("iter", "r", "E_r"),
    "se-coupled": ("iter", "r", "E_r"),
    "se-coupled-sweep": ("gamma", "w", "delta_amp_coupled"),
    "amp": ("trial", "iter", "mse", "ymmse"),
    "verify": CHECK_COLUMNS,
    "phase-diagram": ("alpha", "delta", "scenario", "e_tilde", "e_se", "predicted_ymmse",
                      "status"),
}


# ---------------------------------------------------------------------------
# formatting


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def render(config, columns, rows, footer=()):
    lines = [f"# rle {__version__}",
             "# config: " + json.dumps(config, sort_keys=True)]
    lines.append(",".join(columns))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    lines.extend(f"# {f}" for f in footer)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# configuration


def parse_grid(value):
    """Comma list, or `lin:lo:hi:n` / `log:lo:hi:n`, into a list of floats."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(x) for x in value]
    text = str(value).strip()
    try:
        if text.startswith(("lin:", "log:")):
            kind, lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1:
                raise DomainError(f"grid {text!r} needs n >= 1")
            if kind == "log":
                if not (lo > 0 and hi > 0):
                    raise DomainError(f"log grid {text!r} needs positive bounds")
                return [float(x) for x in np.geomspace(lo, hi, n)]
            return [float(x) for x in np.linspace(lo, hi, n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise DomainError(f"cannot parse grid {text!r}") from None


def read_config_file(path):
    """JSON config, or the `# config:` header line of a previous output."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc.strerror}") from None
    offset = 0
    body = text
    if text.lstrip().startswith("#"):
        for lineno, line in enumerate(text.splitlines(), 1):
            if line.startswith("# config: "):
                body, offset = line[len("# config: "):], lineno - 1
                break
        else:
            raise DomainError(f"{path}: no '# config:' header line")
    try:
        config = json.loads(body)
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}:{exc.lineno + offset}: invalid config JSON: {exc.msg}") from None
    if not isinstance(config, dict):
        raise DomainError(f"{path}:{offset + 1}: config must be a JSON object")
    return config


def _resolve_prior(value, B):
    if isinstance(value, dict):
        prior = DiscretePrior.from_config(value)
    else:
        prior = load_prior(value)
    if B is not None and int(B) != prior.B:
        raise DomainError(f"--B {B} does not match the prior's section dimension {prior.B}")
    return prior


def resolve_config(command, file_config=None, flags=None):
    """Merge defaults < config file < explicit flags, then normalize types."""
    defaults = DEFAULTS[command]
    merged = dict(defaults)
    B = None
    for source in (file_config or {}, flags or {}):
        for key, value in source.items():
            if key == "command":
                if value != command:
                    raise DomainError(f"config is for command {value!r}, not {command!r}")
                continue
            if key == "B":
                B = value
                continue
            if key not in defaults:
                raise DomainError(f"option {key!r} does not apply to {command}")
            merged[key] = value
    prior = _resolve_prior(merged["prior"], B)
    out = {"command": command, "prior": prior.to_config()}
    for key, value in merged.items():
        if key == "prior":
            continue
        try:
            if value is None:
                out[key] = None
            elif (command, key) in LIST_KEYS:
                out[key] = parse_grid(value)
                if not out[key]:
                    raise DomainError(f"{key} grid is empty")
            elif key == "sweep_w":
                out[key] = [int(x) for x in parse_grid(value)]
            elif key in INT_KEYS:
                out[key] = int(value)
            elif key in STR_KEYS:
                out[key] = str(value)
            else:
                out[key] = float(value)
        except (TypeError, ValueError):
            raise DomainError(f"invalid value {value!r} for {key}") from None
    return out


# ---------------------------------------------------------------------------
# workers (module level so they pickle)


def _pmap(fn, items, jobs):
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _threshold_row(task):
    prior, alpha, tol, grid = task
    rep = thresholds(prior, alpha, tol=tol, grid_size=grid)
    return (alpha, rep.delta_amp, rep.delta_rs, rep.scenario)


def _coupled_row(task):
    prior, alpha, gamma, w, kind, seeding, tol, profile_tol, max_iter, report = task
    value = delta_amp_coupled(prior, alpha, gamma, w, tol=tol, kind=kind, seeding=seeding,
                              profile_tol=profile_tol, max_iter=max_iter, report=report)
    return (gamma, w, value)


def _amp_trial(task):
    k, seed, cfg = task
    params = SystemParams(cfg["alpha"], cfg["delta"], DiscretePrior.from_config(cfg["prior"]))
    if cfg["gamma"] is not None:
        ens = build_ensemble(cfg["kind"], cfg["gamma"], cfg["w"] or 0)
        inst = generate_coupled_instance(ens, params, cfg["L"], seed)
    else:
        inst = generate_instance(params, cfg["L"], seed)
    traj = run_amp(inst, max_iter=cfg["max_iter"], tol=cfg["tol"], damping=cfg["damp"])
    return k, traj.mse_per_iter, traj.ymmse_per_iter, traj.converged, traj.diverged


def _phase_point(task):
    prior, alpha, delta, grid, max_iter = task
    try:
        params = SystemParams(alpha, delta, prior)
        analysis = analyze_potential(params, grid)
        e_se = float(run_se(params, max_iter=max_iter).final[0])
        try:
            pred = predicted_ymmse(params, grid)
            status = "ok"
        except DegenerateMinimumError:
            pred, status = math.nan, "degenerate"
        return (alpha, delta, analysis.scenario, analysis.e_tilde, e_se, pred, status)
    except (DomainError, ArithmeticError, ValueError) as exc:
        return (alpha, delta, "error", math.nan, math.nan, math.nan,
                type(exc).__name__)


# ---------------------------------------------------------------------------
# commands; each returns (columns, rows, footer, exit_code)


def _params(cfg):
    return SystemParams(cfg["alpha"], cfg["delta"], DiscretePrior.from_config(cfg["prior"]))


def cmd_potential(cfg, jobs=1):
    params = _params(cfg)
    rows = potential_scan(params, cfg["grid"])
    an = analyze_potential(params, cfg["grid"])
    footer = [f"e_tilde={fmt(an.e_tilde)} scenario={an.scenario} "
              f"stationary_points={';'.join(fmt(x) for x in an.stationary_points)}"]
    return COLUMNS["potential"], rows, footer, EXIT_OK


def cmd_thresholds(cfg, jobs=1):
    prior = DiscretePrior.from_config(cfg["prior"])
    tasks = [(prior, a, cfg["tol"], cfg["grid"]) for a in cfg["alpha"]]
    return COLUMNS["thresholds"], _pmap(_threshold_row, tasks, jobs), [], EXIT_OK


def cmd_se(cfg, jobs=1):
    traj = run_se(_params(cfg), max_iter=cfg["max_iter"], tol=cfg["tol"])
    rows = [(t, 0, float(E[0])) for t, E in enumerate(traj.profile_history)]
    footer = [f"converged={fmt(traj.converged)} iterations={traj.iterations}"]
    return COLUMNS["se"], rows, footer, EXIT_OK


def cmd_se_coupled(cfg, jobs=1):
    params = _params(cfg)
    if cfg["kind"] not in ENSEMBLE_KINDS:
        raise DomainError(f"kind must be one of {ENSEMBLE_KINDS}")
    if cfg["seeding"] not in SEEDING_MODES:
        raise DomainError(f"seeding must be one of {SEEDING_MODES}")
    if cfg["sweep_w"]:
        for w in cfg["sweep_w"]:
            build_ensemble(cfg["kind"], cfg["gamma"], w)
        report = thresholds(params.prior, params.alpha, tol=cfg["threshold_tol"])
        tasks = [(params.prior, params.alpha, cfg["gamma"], w, cfg["kind"], cfg["seeding"],
                  cfg["threshold_tol"], cfg["profile_tol"], cfg["max_iter"], report)
                 for w in cfg["sweep_w"]]
        footer = [f"delta_amp={fmt(report.delta_amp)} delta_rs={fmt(report.delta_rs)}"]
        return COLUMNS["se-coupled-sweep"], _pmap(_coupled_row, tasks, jobs), footer, EXIT_OK
    ens = build_ensemble(cfg["kind"], cfg["gamma"], cfg["w"])
    traj = run_se_coupled(ens, params, max_iter=cfg["max_iter"], tol=cfg["tol"],
                          seeding=cfg["seeding"])
    rows = [(t, r, float(e)) for t, prof in enumerate(traj.profile_history)
            for r, e in enumerate(prof)]
    footer = [f"converged={fmt(traj.converged)} iterations={traj.iterations}"]
    return COLUMNS["se-coupled"], rows, footer, EXIT_OK


def cmd_amp(cfg, jobs=1):
    if cfg["trials"] < 1:
        raise DomainError("trials must be >= 1")
    if cfg["gamma"] is None and cfg["w"] is not None:
        raise DomainError("--w needs --gamma")
    seeds = trial_seeds(cfg["seed"], cfg["trials"])
    # validate sizes up front so a resource error is raised before any work
    _amp_trial((0, int(seeds[0]), dict(cfg, max_iter=0)))
    results = _pmap(_amp_trial, [(k, int(s), cfg) for k, s in enumerate(seeds)], jobs)
    rows, footer = [], []
    for k, mse, ymse, converged, diverged in results:
        rows.extend((k, t, float(m), float(y)) for t, (m, y) in enumerate(zip(mse, ymse)))
        footer.append(f"trial={k} converged={fmt(converged)} diverged={fmt(diverged)} "
                      f"iterations={len(mse) - 1}")
    return COLUMNS["amp"], rows, footer, EXIT_OK


def cmd_verify(cfg, jobs=1):
    reports = verify_suite(_params(cfg), cfg["L"], cfg["trials"], cfg["seed"], jobs)
    rows = [r.row() for r in reports]
    footer = [f"{r.check}: gated={fmt(r.gated)} inconclusive={fmt(r.inconclusive)}"
              for r in reports]
    hard = [r.check for r in reports if r.gated and not r.passed and not r.inconclusive]
    if hard:
        footer.append("failed: " + ";".join(hard))
    return COLUMNS["verify"], rows, footer, EXIT_VERIFY if hard else EXIT_OK


def cmd_phase_diagram(cfg, jobs=1):
    prior = DiscretePrior.from_config(cfg["prior"])
    for key in ("alpha", "delta"):
        if any(not x > 0 for x in cfg[key]):
            raise DomainError(f"{key} grid values must be positive")
    tasks = [(prior, a, d, cfg["grid"], cfg["max_iter"])
             for a in cfg["alpha"] for d in cfg["delta"]]
    return COLUMNS["phase-diagram"], _pmap(_phase_point, tasks, jobs), [], EXIT_OK


COMMANDS = {
    "potential": cmd_potential,
    "thresholds": cmd_thresholds,
    "se": cmd_se,
    "se-coupled": cmd_se_coupled,
    "amp": cmd_amp,
    "verify": cmd_verify,
    "phase-diagram": cmd_phase_diagram,
}


def run(command, cfg, jobs=1):
    """Execute a resolved config; returns (csv_text, exit_code)."""
    columns, rows, footer, code = COMMANDS[command](cfg, jobs)
    return render(cfg, columns, rows, footer), code


# ---------------------------------------------------------------------------
# argument parsing


def _default_jobs():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--prior", default=S, help="binary, bernoulli:<rho> or a JSON file")
    common.add_argument("--alpha", default=S, help="measurement rate (grid for sweeps)")
    common.add_argument("--delta", default=S, help="noise variance (grid for phase-diagram)")
    common.add_argument("--L", dest="L", default=S, help="number of sections")
    common.add_argument("--B", dest="B", default=S, help="section dimension (checked against the prior)")
    common.add_argument("--gamma", default=S, help="number of coupling blocks")
    common.add_argument("--w", dest="w", default=S, help="coupling window")
    common.add_argument("--kind", default=S, help="periodic or seeded ensemble")
    common.add_argument("--seeding", default=S, help="pinned or revealed boundary")
    common.add_argument("--sweep-w", dest="sweep_w", default=S,
                        help="coupling windows for a threshold-saturation sweep")
    common.add_argument("--seed", default=S, help="64-bit base seed")
    common.add_argument("--trials", default=S)
    common.add_argument("--grid", default=S, help="E-grid size for root bracketing")
    common.add_argument("--tol", default=S)
    common.add_argument("--max-iter", dest="max_iter", default=S)
    common.add_argument("--damp", default=S, help="AMP damping in [0, 1)")
    common.add_argument("--config", default=None,
                        help="JSON config, or a previous output whose header is reused")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument("--out", default="-", help="output file (default stdout)")

    parser = argparse.ArgumentParser(prog="rle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    jobs = args.pop("jobs") or _default_jobs()
    out = args.pop("out")
    try:
        file_config = read_config_file(config_path) if config_path else None
        cfg = resolve_config(command, file_config, args)
        text, code = run(command, cfg, jobs)
    except ResourceLimitError as exc:
        print(f"rle: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except DomainError as exc:
        print(f"rle: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
