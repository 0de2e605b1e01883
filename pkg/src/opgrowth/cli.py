"""Command-line experiment runner.

Subcommands: ``bounds``, ``protocol``, ``reduced``, ``verify``,
``oracle-compare`` and ``sweep``.  Parameters come from a flat ``key = value``
config file (``--config``) overridden by flags.  Every output embeds the fully
resolved config.  Exit codes: 0 success, 1 failed check, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, bounds, reduced, verify
from .protocol import ProtocolParams, VacuousRegimeWarning, assemble, derive_params, runtime

log = logging.getLogger("opgrowth")

COMMANDS = ("bounds", "protocol", "reduced", "verify", "oracle-compare", "sweep")

# key -> (type, default); shared by flags and config files
PARAMS: dict[str, tuple[type, Any]] = {
    "alpha": (float, 1.5),
    "d": (int, 1),
    "r": (float, None),
    "m": (int, None),
    "q_star": (int, None),
    "p": (float, 2.0),
    "delta": (float, 0.5),
    "epsilon": (float, None),
    "trials": (int, None),
    "seed": (int, 0),
    "truncation": (float, 0.0),
    "out": (str, None),
    "threads": (int, None),
    "lambda_threshold": (float, None),
    "adaptive_tau": (bool, False),
    "scale": (float, 1.0),
    "sweep_param": (str, "r"),
    "grid": (str, "geom:1000:1000000:7"),
}


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _convert(key: str, raw: str) -> Any:
    typ, _ = PARAMS[key]
    if raw.strip().lower() in ("", "none"):
        return None
    try:
        if typ is bool:
            return _parse_bool(raw)
        if typ is int:
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def read_config(path: str | os.PathLike) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    out: dict[str, Any] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in PARAMS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _convert(key, val)
    return out


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then config file, then explicit flags."""
    cfg = {k: v for k, (_, v) in PARAMS.items()}
    if args.config:
        cfg.update(read_config(args.config))
    for k in PARAMS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["threads"] is None:
        cfg["threads"] = reduced.default_threads()
    cfg["command"] = args.command
    cfg["version"] = __version__
    return cfg


# ----------------------------------------------------------------------------
# output helpers


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _emit(cfg: dict, name: str, text: str) -> None:
    if cfg["out"] is None:
        sys.stdout.write(text)
    else:
        atomic_write(Path(cfg["out"]) / name, text)


# ----------------------------------------------------------------------------
# parameter plumbing


def _chain_R(r: float) -> int:
    """Largest ``R = 2^k - 1 <= r`` (at least 1)."""
    k = max(1, int(math.floor(math.log2(r + 1))))
    return (1 << k) - 1


def _protocol_params(cfg: dict) -> ProtocolParams:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", VacuousRegimeWarning)
        if cfg["m"] is not None and cfg["q_star"] is not None:
            params = ProtocolParams(d=cfg["d"], alpha=cfg["alpha"], m=cfg["m"], q_star=cfg["q_star"],
                                    r=cfg["r"], seed=cfg["seed"])
        elif cfg["r"] is not None:
            params = derive_params(cfg["r"], cfg["alpha"], cfg["d"], m=cfg["m"], q_star=cfg["q_star"],
                                   seed=cfg["seed"])
        else:
            raise ConfigError("protocol parameters need r, or both m and q_star")
    for w in caught:
        log.warning("%s", w.message)
    return params


def _lambda(cfg: dict, params: ProtocolParams) -> float:
    if cfg["lambda_threshold"] is not None:
        return cfg["lambda_threshold"]
    lam, _ = reduced.lambda_eta(params.m, params.d, params.q_star)
    return lam[-1]


def _grid(spec: str) -> list[float]:
    """``geom:a:b:n``, ``lin:a:b:n`` or a comma-separated list."""
    parts = spec.split(":")
    try:
        if parts[0] in ("geom", "lin"):
            a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
            if n < 1:
                raise ConfigError("empty grid")
            vals = np.geomspace(a, b, n) if parts[0] == "geom" else np.linspace(a, b, n)
            return [float(v) for v in vals]
        vals = [float(v) for v in spec.split(",") if v.strip()]
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad grid {spec!r}") from exc
    if not vals:
        raise ConfigError("empty grid")
    return vals


# ----------------------------------------------------------------------------
# subcommands


def cmd_bounds(cfg: dict) -> int:
    if cfg["r"] is None:
        raise ConfigError("bounds needs --r")
    R = _chain_R(cfg["r"])
    rep = bounds.bound_report(cfg["alpha"], R, delta=cfg["delta"], d=cfg["d"], p=cfg["p"],
                              epsilon=cfg["epsilon"], r=cfg["r"])
    out = rep.to_dict()
    out["config"] = cfg
    _emit(cfg, "bounds.json", dump_json(out))
    if cfg["out"] is not None:
        c = rep.constants
        header = ["alpha", "d", "r", "R", "regime", "bound", "C", "rate_bound", "q_star"]
        row = [cfg["alpha"], cfg["d"], cfg["r"], R, rep.regime, rep.bound, c["C"], c["rate_bound"], c["q_star"]]
        atomic_write(Path(cfg["out"]) / "bounds.csv", _csv_text(header, [row]))
    print(f"bounds: regime={rep.regime} R={R} t_min={rep.bound:.6g}", file=sys.stderr)
    return 0


def cmd_protocol(cfg: dict) -> int:
    params = _protocol_params(cfg)
    sched = assemble(params)
    ts = runtime(params)
    out = {
        "config": cfg,
        "params": params.to_dict(),
        "n_sites": params.n_sites,
        "tau": [params.tau(q) for q in range(1, params.q_star + 1)],
        "t_q": ts,
        "counts": sched.counts(),
        "vacuous": params.vacuous,
    }
    _emit(cfg, "protocol.json", dump_json(out))
    if cfg["out"] is not None:
        atomic_write(Path(cfg["out"]) / "schedule.json", sched.to_json() + "\n")
    print(f"protocol: m={params.m} q*={params.q_star} t_q*={ts[-1]:.6g}", file=sys.stderr)
    return 0


def cmd_reduced(cfg: dict) -> int:
    params = _protocol_params(cfg)
    trials = cfg["trials"] or 100
    occ, dia = reduced.run_trials(params, trials, cfg["seed"], cfg["threads"], cfg["adaptive_tau"])
    lam = _lambda(cfg, params)
    est = reduced.estimate_success(params, trials, lam, data=(occ, dia))
    table = reduced.analytic_recursion(params)
    mean = occ.mean(axis=0)
    p05, p95 = np.percentile(occ, [5, 95], axis=0)
    rows = [[k, float(mean[k]), float(p05[k]), float(p95[k])] for k in range(occ.shape[1])]
    traj = _csv_text(["layer_index", "mean_occupancy", "p05", "p95"], rows)
    ends = assemble(params).level_ends()
    summary = {
        "config": cfg,
        "params": params.to_dict(),
        "success": est.__dict__,
        "level_mean_occupancy": [float(mean[e]) for e in ends],
        "final_mean_diameter": float(dia[:, -1].mean()),
        "analytic": {"rows": [r.__dict__ for r in table.rows], "floor": table.floor,
                     "vacuous": table.vacuous},
    }
    if cfg["out"] is None:
        sys.stdout.write(dump_json(summary))
    else:
        atomic_write(Path(cfg["out"]) / "trajectory.csv", traj)
        atomic_write(Path(cfg["out"]) / "summary.json", dump_json(summary))
    print(f"reduced: success={est.probability:.4f} [{est.low:.4f}, {est.high:.4f}] "
          f"eta={table.rows[-1].eta1:.4g}", file=sys.stderr)
    return 0


def cmd_verify(cfg: dict) -> int:
    reports = verify.run_all(seed=cfg["seed"], scale=cfg["scale"])
    ok = all(r.passed for r in reports)
    _emit(cfg, "verify.json", dump_json({"config": cfg, "passed": ok,
                                         "checks": [r.to_dict() for r in reports]}))
    for r in reports:
        print(r.line(), file=sys.stderr)
    return 0 if ok else 1


def cmd_oracle_compare(cfg: dict) -> int:
    trials = cfg["trials"] or 100
    br = verify.check_branching_vs_exact(trials, cfg["seed"], cfg["truncation"])
    tv = verify.check_reduced_vs_exact(trials=max(1000, int(100_000 * cfg["scale"])), seed=cfg["seed"])
    ok = br.passed and tv.passed
    _emit(cfg, "oracle.json", dump_json({"config": cfg, "passed": ok, "branching": br.to_dict(),
                                         "reduced_vs_exact": tv.to_dict()}))
    print(f"oracle-compare: max_error={br.max_slack:.3e} tvd={tv.details['tvd']:.4f}", file=sys.stderr)
    return 0 if ok else 1


SWEEP_COLUMNS = [
    ("alpha", "power-law exponent"),
    ("d", "lattice dimension"),
    ("r", "target distance"),
    ("m", "cube side ratio"),
    ("q_star", "recursion depth"),
    ("R", "chain end used for the Frobenius bound (largest 2^k-1 <= r)"),
    ("regime", "alpha regime"),
    ("frobenius_time", "Frobenius light-cone time at delta"),
    ("pnorm_time", "p-norm light-cone time with c'=1 (blank if alpha <= 3/2)"),
    ("t_qstar", "deterministic protocol runtime"),
    ("success", "Monte-Carlo success fraction (blank when trials=0)"),
    ("success_low", "Wilson 95% lower end"),
    ("success_high", "Wilson 95% upper end"),
    ("seed", "seed of the stochastic cells"),
]


def sweep(cfg: dict) -> tuple[list[str], list[list[Any]]]:
    key = cfg["sweep_param"].replace("-", "_")
    if key not in ("r", "alpha", "m", "q_star"):
        raise ConfigError(f"cannot sweep over {key!r}")
    grid = _grid(cfg["grid"])
    rows = []
    for g in grid:
        c = dict(cfg)
        c[key] = int(round(g)) if key in ("m", "q_star") else g
        params = _protocol_params(c)
        r = c["r"] if c["r"] is not None else float(params.n_sites)
        R = _chain_R(r)
        ft = bounds.frobenius_lightcone_time(c["alpha"], R, c["delta"])
        pt = bounds.pnorm_lightcone_time(c["alpha"], r, c["p"], c["delta"]) if c["alpha"] > 1.5 and r >= 4 else None
        row = [c["alpha"], c["d"], r, params.m, params.q_star, R, bounds.regime(c["alpha"]), ft, pt,
               runtime(params)[-1]]
        if c["trials"]:
            est = reduced.estimate_success(params, c["trials"], _lambda(c, params), seed=c["seed"],
                                           threads=c["threads"])
            row += [est.probability, est.low, est.high, c["seed"]]
        else:
            row += [None, None, None, None]
        rows.append(row)
    return [name for name, _ in SWEEP_COLUMNS], rows


def cmd_sweep(cfg: dict) -> int:
    header, rows = sweep(cfg)
    comments = [f"{name}: {desc}" for name, desc in SWEEP_COLUMNS]
    comments.append("config: " + json.dumps(_jsonable(cfg), sort_keys=True))
    _emit(cfg, "sweep.csv", _csv_text(header, rows, comments))
    print(f"sweep: {len(rows)} rows over {cfg['sweep_param']}", file=sys.stderr)
    return 0


HANDLERS = {
    "bounds": cmd_bounds,
    "protocol": cmd_protocol,
    "reduced": cmd_reduced,
    "verify": cmd_verify,
    "oracle-compare": cmd_oracle_compare,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--alpha", type=float)
    common.add_argument("--d", type=int)
    common.add_argument("--r", type=float)
    common.add_argument("--m", type=int)
    common.add_argument("--q-star", dest="q_star", type=int)
    common.add_argument("--p", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--truncation", type=float)
    common.add_argument("--out", help="output directory (default: JSON to stdout)")
    common.add_argument("--threads", type=int)
    common.add_argument("--lambda-threshold", dest="lambda_threshold", type=float)
    common.add_argument("--adaptive-tau", dest="adaptive_tau", action="store_const", const=True)
    common.add_argument("--scale", type=float, help="multiplier on verify trial counts")
    common.add_argument("--sweep-param", dest="sweep_param")
    common.add_argument("--grid", help="geom:a:b:n, lin:a:b:n or a comma list")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="opgrowth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on unknown flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"opgrowth: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"opgrowth: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
