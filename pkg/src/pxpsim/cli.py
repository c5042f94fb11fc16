"""Command-line entry point: config parsing, validation, dispatch.

Configuration values come from defaults, then an optional JSON config file
(or a previous run's manifest, whose resolved config section is reused),
then explicit command-line flags. Exit codes: 0 success, 2 configuration
error, 3 capacity guard, 4 solver non-convergence, 5 postselection dead
end.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .basis import OBC, PBC, enumerate_basis
from .errors import CapacityError, ConfigError, ConvergenceError, ImpossibleOutcomeError
from .evolution import make_neel
from .fss import fit_collapse, make_dataset
from .measurement import DOWN, UP
from .protocols import (
    build_model,
    calibrate_period,
    run_periodic_monitoring,
    run_random_monitoring,
    rephasing_scan,
    scan_scar_weight,
    steady_state_scan,
    time_grid,
    velocity_experiment,
)
from .reporting import (
    check_out_dir,
    config_hash,
    emit_manifest,
    provenance_comments,
    write_csv,
)
from .scars import diagonalize, identify_scars, ladder_spacing, scar_weight

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_CONVERGENCE = 4
EXIT_DEADEND = 5

SCHEMAS = {
    "basis": {"n": 12, "bc": "obc", "dump": None},
    "scars": {"n": 14, "bc": "pbc", "engine": "auto", "dense_limit": 20000},
    "random-mon": {
        "n": 16,
        "bc": "obc",
        "initial": "neel",
        "gamma": 0.04,
        "t_max": 80.0,
        "grid_step": 0.05,
        "n_traj": 200,
        "seed": 0,
        "engine": "auto",
        "dense_limit": 20000,
    },
    "periodic-mon": {
        "n": 16,
        "bc": "obc",
        "mode": "postselect",
        "sites": [0],
        "n_periods": 10,
        "period": 4.72,
        "grid_step": 0.05,
        "n_traj": 200,
        "seed": 0,
        "engine": "auto",
        "dense_limit": 20000,
    },
    "scar-weight": {
        "n": 14,
        "bc": "pbc",
        "t_max": 20.0,
        "grid_step": 0.05,
        "site": 0,
        "engine": "auto",
        "dense_limit": 20000,
    },
    "rephase": {
        "n": 14,
        "bc": "pbc",
        "n_max": 10,
        "period": 4.72,
        "amp_floor": 0.005,
        "engine": "auto",
        "dense_limit": 20000,
    },
    "velocity": {
        "n": 16,
        "bc": "obc",
        "period": 4.72,
        "t_max": None,
        "grid_step": 0.05,
        "outcome": "down",
        "site": None,
        "engine": "auto",
        "dense_limit": 20000,
    },
    "steady-scan": {
        "sizes": [8, 10, 12],
        "gammas": [0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
        "bc": "obc",
        "window": [60.0, 80.0],
        "grid_step": 0.05,
        "n_traj": 100,
        "seed": 0,
        "engine": "auto",
        "dense_limit": 20000,
    },
    "fss": {"data": None, "nboot": 100, "seed": 0, "out": "fss.json", "init": None},
}

_LIST_FIELDS = {"sites": int, "sizes": int, "gammas": float, "window": float, "init": float}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pxpsim",
        description="Monitored dynamics of the constrained PXP chain",
    )
    parser.add_argument("--version", action="version", version=f"pxpsim {__version__}")
    sub = parser.add_subparsers(dest="command")
    for command, schema in SCHEMAS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="JSON config file or a previous manifest")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="trajectory workers")
        for field, default in schema.items():
            flag = "--" + field.replace("_", "-")
            if field in _LIST_FIELDS:
                p.add_argument(flag, type=str, default=None, help=f"default: {default}")
            elif field == "period":
                p.add_argument(flag, type=str, default=None, help="number or 'auto'")
            elif isinstance(default, bool):
                p.add_argument(flag, action="store_true", default=None)
            elif isinstance(default, int):
                p.add_argument(flag, type=int, default=None)
            elif isinstance(default, float):
                p.add_argument(flag, type=float, default=None)
            else:
                p.add_argument(flag, type=str, default=None)
    return parser


def _load_config_file(path, command):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from exc
    if isinstance(payload, dict) and "config" in payload and "subcommand" in payload:
        if payload["subcommand"] != command:
            raise ConfigError(
                f"config: manifest was produced by subcommand "
                f"{payload['subcommand']!r}, not {command!r}"
            )
        payload = payload["config"]
    if not isinstance(payload, dict):
        raise ConfigError(f"config: {path} must hold a JSON object")
    return payload


def _coerce_list(field, value):
    kind = _LIST_FIELDS[field]
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    try:
        return [kind(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{field}: expected a list of {kind.__name__}s") from exc


def resolve_config(command, args):
    """Defaults, then config file, then flags; unknown keys are rejected."""
    schema = SCHEMAS[command]
    cfg = dict(schema)
    if args.config:
        file_cfg = _load_config_file(args.config, command)
        unknown = set(file_cfg) - set(schema)
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)} for {command}")
        cfg.update(file_cfg)
    for field in schema:
        flag_value = getattr(args, field, None)
        if flag_value is not None:
            cfg[field] = flag_value
    for field in cfg:
        if field in _LIST_FIELDS and cfg[field] is not None:
            cfg[field] = _coerce_list(field, cfg[field])
    if "period" in cfg and cfg["period"] != "auto":
        try:
            cfg["period"] = float(cfg["period"])
        except (TypeError, ValueError):
            raise ConfigError(f"period: expected a number or 'auto', got {cfg['period']!r}")
    return cfg


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def validate_config(command, cfg):
    if "bc" in cfg:
        _require(cfg["bc"] in (OBC, PBC), f"bc: must be 'obc' or 'pbc', got {cfg['bc']!r}")
    if "n" in cfg:
        _require(cfg["n"] >= 1, f"n: need at least one site, got {cfg['n']}")
        if cfg["bc"] == PBC:
            _require(cfg["n"] >= 3, f"n: periodic chains need n >= 3, got {cfg['n']}")
    if command in ("scars", "scar-weight", "rephase"):
        _require(cfg["bc"] == PBC, f"bc: {command} is a scar analysis and requires pbc")
        _require(cfg["n"] % 2 == 0, f"n: scar analyses need even n, got {cfg['n']}")
    if command == "periodic-mon":
        _require(cfg["mode"] in ("unitary", "born", "postselect"),
                 f"mode: must be unitary, born, or postselect, got {cfg['mode']!r}")
        _require(len(cfg["sites"]) > 0, "sites: need at least one site to monitor")
        for s in cfg["sites"]:
            _require(0 <= s < cfg["n"], f"sites: site {s} out of range for n={cfg['n']}")
        _require(cfg["n_periods"] >= 1, "n_periods: need at least one period")
        _require(cfg["n"] % 2 == 0, "n: the alternating initial state needs even n")
    if command == "random-mon":
        _require(cfg["initial"] in ("neel", "unif"),
                 f"initial: must be 'neel' or 'unif', got {cfg['initial']!r}")
        if cfg["initial"] == "neel":
            _require(cfg["n"] % 2 == 0, "initial: neel requires even n")
        _require(cfg["gamma"] >= 0, f"gamma: must be non-negative, got {cfg['gamma']}")
        _require(cfg["t_max"] > 0, f"t_max: must be positive, got {cfg['t_max']}")
        _require(cfg["grid_step"] > 0, f"grid_step: must be positive, got {cfg['grid_step']}")
        _require(cfg["n_traj"] >= 1, f"n_traj: need at least one trajectory, got {cfg['n_traj']}")
    if command == "velocity":
        _require(cfg["n"] % 2 == 0, "n: the alternating initial state needs even n")
        _require(cfg["outcome"] in ("up", "down"),
                 f"outcome: must be 'up' or 'down', got {cfg['outcome']!r}")
        if cfg["site"] is None:
            _require((cfg["n"] // 2) % 2 == 0,
                     f"n: default mid-chain site needs n/2 even, got n={cfg['n']}")
    if command == "scar-weight":
        _require(0 <= cfg["site"] < cfg["n"], f"site: {cfg['site']} out of range for n={cfg['n']}")
        _require(cfg["t_max"] > 0, f"t_max: must be positive, got {cfg['t_max']}")
    if command == "rephase":
        _require(0 <= cfg["n_max"] <= cfg["n"],
                 f"n_max: must lie in [0, n]={cfg['n']}, got {cfg['n_max']}")
    if command == "steady-scan":
        _require(len(cfg["sizes"]) >= 1, "sizes: need at least one size")
        for n in cfg["sizes"]:
            _require(n >= 2 and n % 2 == 0, f"sizes: even sizes >= 2 required, got {n}")
        _require(len(cfg["gammas"]) >= 1, "gammas: need at least one rate")
        _require(len(cfg["window"]) == 2 and cfg["window"][0] < cfg["window"][1],
                 f"window: expected [lo, hi] with lo < hi, got {cfg['window']}")
    if command == "fss":
        _require(cfg["data"], "data: path to the input CSV is required")
        _require(cfg["nboot"] >= 0 and cfg["nboot"] != 1,
                 f"nboot: 0 (skip) or >= 2 required, got {cfg['nboot']}")
        if cfg["init"] is not None:
            _require(len(cfg["init"]) == 2, "init: expected gamma_c,nu")
    if "engine" in cfg:
        _require(cfg["engine"] in ("auto", "dense", "krylov"),
                 f"engine: must be auto, dense, or krylov, got {cfg['engine']!r}")


def _resolve_period(cfg, model):
    if cfg.get("period") == "auto":
        cfg["period"] = calibrate_period(model)
    return cfg["period"]


def _model_from_cfg(cfg):
    return build_model(cfg["n"], cfg["bc"], engine=cfg.get("engine", "auto"),
                       dense_limit=cfg.get("dense_limit", 20000))


def _scars_from_model(model, dense_limit):
    eig = diagonalize(model.ham, dim_max=dense_limit)
    return eig, identify_scars(eig, model.basis, make_neel(model.basis))


def _series_csvs(out_dir, command, cfg_hash, ens, dim):
    comments = provenance_comments(command, cfg_hash, [f"basis-dim: {dim}"])
    paths = []
    for name, mean, err in (
        ("fidelity", ens.fidelity_mean, ens.fidelity_err),
        ("entropy", ens.entropy_mean, ens.entropy_err),
    ):
        path = os.path.join(out_dir, f"{name}.csv")
        write_csv(path, ["time", name, "stderr"], [ens.times, mean, err], comments)
        paths.append(path)
    return paths


def _trajectory_summaries(records):
    return [
        {
            "index": r.index,
            "seed": list(r.seed_key) if r.seed_key is not None else None,
            "events": len(r.events),
            "status": "ok" if r.aborted_period is None else f"aborted@{r.aborted_period}",
        }
        for r in records
    ]


def cmd_basis(cfg, out_dir, threads):
    basis = enumerate_basis(cfg["n"], cfg["bc"])
    print(f"n={cfg['n']} bc={cfg['bc']} dim={basis.dim}")
    if cfg["dump"]:
        cfg_hash = config_hash("basis", cfg)
        path = cfg["dump"]
        with open(path, "w", encoding="utf-8") as fh:
            for line in provenance_comments("basis", cfg_hash, [f"basis-dim: {basis.dim}"]):
                fh.write(f"# {line}\n")
            for config in basis.configs:
                fh.write(basis.config_string(config) + "\n")
    return EXIT_OK


def cmd_scars(cfg, out_dir, threads):
    started = time.monotonic()
    model = _model_from_cfg(cfg)
    eig, scars = _scars_from_model(model, cfg["dense_limit"])
    cfg_hash = config_hash("scars", cfg)
    path = os.path.join(out_dir, "scars.csv")
    write_csv(
        path,
        ["index", "rung", "energy", "neel_overlap", "entropy"],
        [scars.indices, scars.rungs, scars.energies, scars.neel_overlaps, scars.entropies],
        provenance_comments("scars", cfg_hash, [f"basis-dim: {model.dim}"]),
    )
    emit_manifest(out_dir, "scars", cfg, {
        "dim": model.dim,
        "wall_time_s": time.monotonic() - started,
        "outputs": ["scars.csv"],
        "ladder_spacing": ladder_spacing(scars),
        "neel_weight": scar_weight(make_neel(model.basis), scars),
    })
    return EXIT_OK


def cmd_random_mon(cfg, out_dir, threads):
    started = time.monotonic()
    model = _model_from_cfg(cfg)
    ens = run_random_monitoring(
        model,
        cfg["initial"],
        cfg["gamma"],
        cfg["t_max"],
        grid_step=cfg["grid_step"],
        n_traj=cfg["n_traj"],
        master_seed=cfg["seed"],
        threads=threads,
    )
    cfg_hash = config_hash("random-mon", cfg)
    outputs = _series_csvs(out_dir, "random-mon", cfg_hash, ens, model.dim)
    emit_manifest(out_dir, "random-mon", cfg, {
        "dim": model.dim,
        "engine": model.engine,
        "wall_time_s": time.monotonic() - started,
        "outputs": [os.path.basename(p) for p in outputs],
        "trajectories": _trajectory_summaries(ens.records),
    })
    return EXIT_OK


def cmd_periodic_mon(cfg, out_dir, threads):
    started = time.monotonic()
    model = _model_from_cfg(cfg)
    _resolve_period(cfg, model)
    res = run_periodic_monitoring(
        model,
        mode=cfg["mode"],
        sites=cfg["sites"],
        n_periods=cfg["n_periods"],
        period=cfg["period"],
        grid_step=cfg["grid_step"],
        n_traj=cfg["n_traj"],
        master_seed=cfg["seed"],
        threads=threads,
    )
    cfg_hash = config_hash("periodic-mon", cfg)
    outputs = _series_csvs(out_dir, "periodic-mon", cfg_hash, res.ensemble, model.dim)
    periods_path = os.path.join(out_dir, "periods.csv")
    write_csv(
        periods_path,
        ["n", "time", "fidelity_pre", "fidelity_post", "entropy_pre", "entropy_post",
         "probability"],
        [
            np.arange(1, len(res.period_times) + 1),
            res.period_times,
            res.fidelity_pre,
            res.fidelity_post,
            res.entropy_pre,
            res.entropy_post,
            res.probability if res.probability is not None
            else np.full(len(res.period_times), np.nan),
        ],
        provenance_comments("periodic-mon", cfg_hash, [f"basis-dim: {model.dim}"]),
    )
    outputs.append(periods_path)
    emit_manifest(out_dir, "periodic-mon", cfg, {
        "dim": model.dim,
        "engine": model.engine,
        "wall_time_s": time.monotonic() - started,
        "outputs": [os.path.basename(p) for p in outputs],
        "trajectories": _trajectory_summaries(res.ensemble.records),
        "aborted": res.aborted,
    })
    if cfg["mode"] == "postselect" and res.aborted:
        print(f"postselection dead end at period {res.aborted[0][1]}", file=sys.stderr)
        return EXIT_DEADEND
    return EXIT_OK


def cmd_scar_weight(cfg, out_dir, threads):
    started = time.monotonic()
    model = _model_from_cfg(cfg)
    eig, scars = _scars_from_model(model, cfg["dense_limit"])
    scan = scan_scar_weight(model, scars, time_grid(cfg["t_max"], cfg["grid_step"]),
                            site=cfg["site"])
    cfg_hash = config_hash("scar-weight", cfg)
    path = os.path.join(out_dir, "weight.csv")
    write_csv(
        path,
        ["time", "weight_projected", "weight_reference"],
        [scan.times, scan.projected, np.full(len(scan.times), scan.reference)],
        provenance_comments("scar-weight", cfg_hash, [f"basis-dim: {model.dim}"]),
    )
    emit_manifest(out_dir, "scar-weight", cfg, {
        "dim": model.dim,
        "wall_time_s": time.monotonic() - started,
        "outputs": ["weight.csv"],
        "dead_ends": scan.dead_ends,
    })
    return EXIT_OK


def cmd_rephase(cfg, out_dir, threads):
    started = time.monotonic()
    model = _model_from_cfg(cfg)
    _resolve_period(cfg, model)
    eig, scars = _scars_from_model(model, cfg["dense_limit"])
    res = rephasing_scan(model, scars, cfg["n_max"], period=cfg["period"],
                         amp_floor=cfg["amp_floor"])
    cfg_hash = config_hash("rephase", cfg)
    rung_cols = [f"rung_{scars.rungs[i]:+d}" for i in res.scar_indices]
    energy_note = "scar energies: " + ", ".join(
        f"{c}={e!r}" for c, e in zip(rung_cols, res.scar_energies)
    )
    comments = provenance_comments("rephase", cfg_hash, [f"basis-dim: {model.dim}", energy_note])
    outputs = []
    for name, table in (("sin_phi", res.sin_phi), ("amp_sq", res.amp_sq)):
        path = os.path.join(out_dir, f"{name}.csv")
        write_csv(path, ["n"] + rung_cols, [res.n_measured] + list(table.T), comments)
        outputs.append(os.path.basename(path))
    path = os.path.join(out_dir, "weight.csv")
    write_csv(path, ["n", "weight"], [res.n_measured, res.weight], comments)
    outputs.append("weight.csv")
    emit_manifest(out_dir, "rephase", cfg, {
        "dim": model.dim,
        "wall_time_s": time.monotonic() - started,
        "outputs": outputs,
        "dead_end": res.dead_end,
    })
    if res.dead_end is not None:
        print(f"postselection dead end after {res.dead_end} sites", file=sys.stderr)
        return EXIT_DEADEND
    return EXIT_OK


def cmd_velocity(cfg, out_dir, threads):
    started = time.monotonic()
    model = _model_from_cfg(cfg)
    _resolve_period(cfg, model)
    res = velocity_experiment(
        model,
        period=cfg["period"],
        t_max=cfg["t_max"],
        grid_step=cfg["grid_step"],
        outcome=UP if cfg["outcome"] == "up" else DOWN,
        site=cfg["site"],
    )
    cfg_hash = config_hash("velocity", cfg)
    comments = provenance_comments("velocity", cfg_hash, [f"basis-dim: {model.dim}"])
    entropy_path = os.path.join(out_dir, "entropy.csv")
    write_csv(
        entropy_path,
        ["time", "entropy_unitary", "entropy_measured"],
        [res.times, res.entropy_unitary, res.entropy_measured],
        comments,
    )
    slopes_path = os.path.join(out_dir, "slopes.csv")
    write_csv(
        slopes_path,
        ["window_lo", "window_hi", "slope_unitary", "slope_measured", "site", "outcome",
         "probability"],
        [[res.fit_window[0]], [res.fit_window[1]], [res.slope_unitary], [res.slope_measured],
         [res.site], [res.outcome], [res.probability]],
        comments,
    )
    emit_manifest(out_dir, "velocity", cfg, {
        "dim": model.dim,
        "wall_time_s": time.monotonic() - started,
        "outputs": ["entropy.csv", "slopes.csv"],
        "slope_unitary": res.slope_unitary,
        "slope_measured": res.slope_measured,
    })
    return EXIT_OK


def cmd_steady_scan(cfg, out_dir, threads):
    started = time.monotonic()
    res = steady_state_scan(
        cfg["sizes"],
        cfg["gammas"],
        boundary=cfg["bc"],
        window=tuple(cfg["window"]),
        grid_step=cfg["grid_step"],
        n_traj=cfg["n_traj"],
        master_seed=cfg["seed"],
        engine=cfg["engine"],
        threads=threads,
    )
    cfg_hash = config_hash("steady-scan", cfg)
    path = os.path.join(out_dir, "steady.csv")
    write_csv(
        path,
        ["N", "gamma", "S", "S_err"],
        [res.sizes, res.gammas, res.entropy, res.entropy_err],
        provenance_comments("steady-scan", cfg_hash),
    )
    emit_manifest(out_dir, "steady-scan", cfg, {
        "wall_time_s": time.monotonic() - started,
        "outputs": ["steady.csv"],
        "skipped": res.skipped,
    })
    return EXIT_OK


def cmd_fss(cfg, out_dir, threads):
    started = time.monotonic()
    try:
        table = np.genfromtxt(cfg["data"], delimiter=",", names=True, comments="#")
    except OSError as exc:
        raise ConfigError(f"data: cannot read {cfg['data']}: {exc}") from exc
    for col in ("N", "gamma", "S", "S_err"):
        if table.dtype.names is None or col not in table.dtype.names:
            raise ConfigError(f"data: CSV must have columns N, gamma, S, S_err (missing {col})")
    ds = make_dataset(table["N"], table["gamma"], table["S"], table["S_err"])
    fit = fit_collapse(ds, init=cfg["init"], n_boot=cfg["nboot"], seed=cfg["seed"])
    payload = {
        "tool": "pxpsim",
        "version": __version__,
        "subcommand": "fss",
        "config": cfg,
        "config_hash": config_hash("fss", cfg),
        "gamma_c": fit.gamma_c,
        "nu": fit.nu,
        "gamma_c_err": fit.gamma_c_err,
        "nu_err": fit.nu_err,
        "quality": fit.quality,
        "n_boot": fit.n_boot,
        "scaled_points": [[float(x), float(y)] for x, y in zip(fit.scaled_x, fit.scaled_y)],
        "wall_time_s": time.monotonic() - started,
    }
    out_path = cfg["out"]
    if not os.path.isabs(out_path):
        out_path = os.path.join(out_dir, out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"gamma_c = {fit.gamma_c:.6g} +- {fit.gamma_c_err if fit.gamma_c_err else 0:.2g}, "
          f"nu = {fit.nu:.6g} +- {fit.nu_err if fit.nu_err else 0:.2g}")
    return EXIT_OK


HANDLERS = {
    "basis": cmd_basis,
    "scars": cmd_scars,
    "random-mon": cmd_random_mon,
    "periodic-mon": cmd_periodic_mon,
    "scar-weight": cmd_scar_weight,
    "rephase": cmd_rephase,
    "velocity": cmd_velocity,
    "steady-scan": cmd_steady_scan,
    "fss": cmd_fss,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve_config(args.command, args)
        validate_config(args.command, cfg)
        check_out_dir(args.out_dir)
        return HANDLERS[args.command](cfg, args.out_dir, args.threads)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ImpossibleOutcomeError as exc:
        print(f"postselection dead end: {exc}", file=sys.stderr)
        return EXIT_DEADEND


if __name__ == "__main__":
    sys.exit(main())
