"""Command-line front end.

Subcommands::

    sweep-fidelity    closed-form fidelities over a range of x_d
    sweep-postselect  post-selected fidelity and success probability on an (x_d, y) grid
    simulate          Monte Carlo process fidelity of one protocol
    verify-oracle     branch simulator vs truncated Fock oracle

Ranges are written ``start:stop:step`` (stop included when it lands on the
grid), a comma list, or a single number. Settings can also come from a JSON
file given with ``--config``; flags on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass

import numpy as np

from .fidelity import (
    PROTOCOLS,
    NoAcceptedTrials,
    csign_fidelity_closed,
    csign_postselected_closed,
    postselect_contour,
    process_fidelity_mc,
    rep_fidelity_closed,
    rep_postselected_closed,
    teleport_fidelity_closed,
    teleport_postselected_closed,
)
from .fock_oracle import CutoffError, LeakageError, run_equivalence_suite
from .hybrid_state import ProtocolParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_ACCEPTED = 3
EXIT_ORACLE = 4

COMMANDS = ("sweep-fidelity", "sweep-postselect", "simulate", "verify-oracle")
DEFAULT_XD = "0:8:0.1"
DEFAULT_Y = "0:3:0.25"


class ConfigError(ValueError):
    """Bad or inconsistent run settings."""


@dataclass
class RunConfig:
    command: str
    alpha: float | None = None
    theta: float | None = None
    xd: str | None = None
    y: str | None = None
    n: int = 3
    trials: int = 10_000
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    protocol: str = "teleport"
    cutoff: int = 40
    workers: int = 1
    contours: bool = False
    target_fidelity: float = 0.9
    target_probability: float = 0.5


_CONFIG_KEYS = {f for f in RunConfig.__dataclass_fields__ if f != "command"}
_ALIASES = {"x_d": "xd", "n_trials": "trials", "N": "n", "output_path": "out", "output_format": "format"}


def parse_range(text) -> np.ndarray:
    """``start:stop:step``, ``a,b,c`` or a single number -> float array."""
    if isinstance(text, (int, float)):
        return np.array([float(text)])
    if isinstance(text, (list, tuple)):
        return np.array([float(v) for v in text])
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return start + step * np.arange(count)
        values = np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError:
        raise ConfigError(f"malformed range {text!r}") from None
    if values.size == 0:
        raise ConfigError("empty range")
    return values


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    out = {}
    for key, value in raw.items():
        key = _ALIASES.get(key, key)
        if key == "command":
            continue
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = value
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = _load_config(args.config) if args.config else {}
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = flag
    try:
        cfg = RunConfig(command=args.command, **values)
        cfg.n, cfg.trials, cfg.seed, cfg.cutoff, cfg.workers = (
            int(cfg.n), int(cfg.trials), int(cfg.seed), int(cfg.cutoff), int(cfg.workers)
        )
        for name in ("alpha", "theta"):
            if getattr(cfg, name) is not None:
                setattr(cfg, name, float(getattr(cfg, name)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"unknown format {cfg.format!r}")
    if cfg.n < 1:
        raise ConfigError("n must be at least 1")
    has_pair = cfg.alpha is not None or cfg.theta is not None
    if cfg.command in ("sweep-fidelity", "sweep-postselect"):
        if has_pair and cfg.xd is not None:
            raise ConfigError("give either --xd or --alpha/--theta, not both")
        if has_pair and (cfg.alpha is None or cfg.theta is None):
            raise ConfigError("--alpha and --theta go together")
    if cfg.command == "simulate":
        if cfg.alpha is None or cfg.theta is None:
            raise ConfigError("simulate needs both --alpha and --theta")
        if cfg.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {cfg.protocol!r}")
        if cfg.trials < 1:
            raise ConfigError("trials must be at least 1")
    if cfg.command == "verify-oracle":
        alpha = 2.0 if cfg.alpha is None else cfg.alpha
        if not 0 < alpha <= 3:
            raise ConfigError("the oracle runs only for 0 < alpha <= 3")


def _xd_values(cfg: RunConfig) -> np.ndarray:
    if cfg.alpha is not None:
        return np.array([ProtocolParams(cfg.alpha, cfg.theta).x_d])
    return parse_range(cfg.xd if cfg.xd is not None else DEFAULT_XD)


def _y_value(cfg: RunConfig) -> float:
    if cfg.y is None:
        return 0.0
    ys = parse_range(cfg.y)
    if ys.size != 1:
        raise ConfigError("simulate takes a single --y")
    return float(ys[0])


# -- commands ---------------------------------------------------------------


def cmd_sweep_fidelity(cfg: RunConfig) -> dict:
    cols = ["x_d", "F_p", "F_CSIGN", "F_REP3", "F_REP9"]
    rows = []
    for xd in _xd_values(cfg):
        rows.append(
            [
                xd,
                teleport_fidelity_closed(xd),
                csign_fidelity_closed(xd),
                rep_fidelity_closed(3, xd),
                rep_fidelity_closed(9, xd),
            ]
        )
    return {"columns": cols, "rows": rows}


def cmd_sweep_postselect(cfg: RunConfig) -> dict:
    n = cfg.n
    xds = _xd_values(cfg)
    if cfg.contours:
        cols = ["x_d"]
        for label, power in (("p", 1), ("CSIGN", 2), (f"REP{n}", n)):
            cols += [f"y_F_{label}", f"y_P_{label}"]
        rows = []
        for xd in xds:
            row = [xd]
            for power in (1, 2, n):
                row.append(postselect_contour(xd, cfg.target_fidelity, "fidelity", power))
                row.append(postselect_contour(xd, cfg.target_probability, "probability", power))
            rows.append(row)
        return {
            "columns": cols,
            "rows": rows,
            "targets": {"fidelity": cfg.target_fidelity, "probability": cfg.target_probability},
        }
    ys = parse_range(cfg.y if cfg.y is not None else DEFAULT_Y)
    if np.any(ys < 0):
        raise ConfigError("y must be nonnegative")
    cols = ["x_d", "y", "F_p_y", "P", "F_CSIGN_y", "P_CSIGN", f"F_REP{n}_y", f"P_REP{n}"]
    rows = []
    for xd in xds:
        for y in ys:
            p, f = teleport_postselected_closed(xd, y)
            pc, fc = csign_postselected_closed(xd, y)
            pr, fr = rep_postselected_closed(n, xd, y)
            rows.append([xd, y, f, p, fc, pc, fr, pr])
    return {"columns": cols, "rows": rows}


def cmd_simulate(cfg: RunConfig) -> dict:
    try:
        params = ProtocolParams(cfg.alpha, cfg.theta, _y_value(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = process_fidelity_mc(
        cfg.protocol, params, cfg.trials, seed=cfg.seed, n=cfg.n, workers=cfg.workers
    )
    return {"report": report.as_dict()}


def cmd_verify_oracle(cfg: RunConfig) -> dict:
    alpha = 2.0 if cfg.alpha is None else cfg.alpha
    theta = 0.6 if cfg.theta is None else cfg.theta
    report = run_equivalence_suite(alpha, theta, cfg.cutoff, seed=cfg.seed)
    return {"report": report.as_dict()}


# -- output -----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if math.isfinite(v) else ""
    if v is None:
        return ""
    return str(v)


def _plain(obj):
    """Recursively turn numpy scalars into Python ones for JSON."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list) and not any(isinstance(e, (dict, list)) for e in v):
            for i, e in enumerate(v):
                out[f"{key}.{i}"] = e
        else:
            out[key] = v
    return out


def render(cfg: RunConfig, result: dict) -> str:
    """Serialize a command result; deterministic for equal inputs."""
    if cfg.format == "json":
        body = {"config": asdict(cfg)}
        if "rows" in result:
            body["columns"] = result["columns"]
            body["rows"] = result["rows"]
            for k, v in result.items():
                if k not in ("columns", "rows"):
                    body[k] = v
        else:
            body["report"] = result["report"]
        return json.dumps(_plain(body), indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if "rows" in result:
        writer.writerow(result["columns"])
        for row in result["rows"]:
            writer.writerow([_fmt(v) for v in row])
    else:
        flat = _flatten(result["report"])
        if "checks" in result["report"]:
            flat = {k: v for k, v in flat.items() if not k.startswith("checks")}
        writer.writerow(list(flat))
        writer.writerow([_fmt(v) for v in flat.values()])
        if "checks" in result["report"]:
            writer.writerow([])
            writer.writerow(["check", "error", "tolerance", "passed"])
            for c in result["report"]["checks"]:
                writer.writerow([c["name"], _fmt(c["error"]), _fmt(c["tolerance"]), _fmt(c["passed"])])
    return buf.getvalue()


def _emit(cfg: RunConfig, text: str):
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _error(cfg_format: str, code: int, kind: str, message: str) -> int:
    """Structured failure: JSON on stdout when asked for, always a line on stderr."""
    if cfg_format == "json":
        sys.stdout.write(json.dumps({"error": {"kind": kind, "message": message, "exit_code": code}}) + "\n")
    print(f"error ({kind}): {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qubus", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with settings; flags override it")
        p.add_argument("--alpha", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--xd", help="x_d value or range start:stop:step")
        p.add_argument("--y", help="post-selection half-width, value or range")
        p.add_argument("--n", type=int, help="repetition / GHZ size")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        if name == "simulate":
            p.add_argument("--protocol", choices=PROTOCOLS)
            p.add_argument("--workers", type=int)
        if name == "verify-oracle":
            p.add_argument("--cutoff", type=int)
        if name == "sweep-postselect":
            p.add_argument("--contours", action="store_true", default=None)
            p.add_argument("--target-fidelity", dest="target_fidelity", type=float)
            p.add_argument("--target-probability", dest="target_probability", type=float)
    return parser


_RUNNERS = {
    "sweep-fidelity": cmd_sweep_fidelity,
    "sweep-postselect": cmd_sweep_postselect,
    "simulate": cmd_simulate,
    "verify-oracle": cmd_verify_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = args.format or "csv"
    try:
        cfg = build_config(args)
        fmt = cfg.format
        result = _RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        return _error(fmt, EXIT_CONFIG, "invalid_config", str(exc))
    except NoAcceptedTrials as exc:
        return _error(fmt, EXIT_NO_ACCEPTED, "no_accepted_trials", str(exc))
    except (CutoffError, LeakageError) as exc:
        return _error(fmt, EXIT_ORACLE, "oracle_cutoff", str(exc))
    _emit(cfg, render(cfg, result))
    if cfg.command == "verify-oracle" and not result["report"]["passed"]:
        print("oracle equivalence failed", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
