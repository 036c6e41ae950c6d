"""Command-line entry point: visibility, capacity, train, bound and report subcommands."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import aggregation as agg
from .channel import PathClass, capacity, per_satellite_rate, transmission_latency
from .config import PRESETS, Config, ConfigError
from .geometry import ARCHITECTURES, topology_rows
from .orbital import build_constellation
from .report import plot_accuracy, plot_capacity, plot_visibility, read_table, write_table
from .simkernel import SCHEMES, run

ENV_PREFIX = "LEOFL_"

VIS_COLUMNS = ("inclination_deg", "num_sats", "architecture", "visible_count", "visible_fraction",
               "mean_window_s", "instantaneous_fraction")
CAP_COLUMNS = ("power_dbm", "distance_km", "total_capacity_bps", "n_sharing", "per_satellite_bps",
               "payload_bytes", "latency_s")


class UsageError(Exception):
    pass


def power_dbm(text: str) -> float:
    """dBm value, or "off" for a silent transmitter (0 W)."""
    return -math.inf if text.strip().lower() == "off" else float(text)


def _env_defaults(parser: argparse.ArgumentParser, prefix: str = ENV_PREFIX) -> None:
    """Let LEOFL_<DEST> override any option default."""
    for action in parser._actions:
        if action.dest in ("help", argparse.SUPPRESS) or not action.option_strings:
            continue
        raw = os.environ.get(prefix + action.dest.upper())
        if raw is None:
            continue
        conv = action.type or str
        if action.nargs in ("*", "+") or isinstance(action, argparse._AppendAction):
            action.default = [conv(v) for v in raw.split(",") if v]
        elif isinstance(action, argparse._StoreTrueAction):
            action.default = raw.lower() in ("1", "true", "yes", "on")
        else:
            action.default = conv(raw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leofl", description="Topology-aware two-stage federated learning "
                                "over LEO-HAP-GS links: topology, capacity, training and bound studies.")
    p.add_argument("--config", help="TOML scenario file (schema = 1) merged over the preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("visibility", help="visibility census and contact windows")
    v.add_argument("--inclination", type=float, nargs="+", help="degrees; default: configured sweep")
    v.add_argument("--nsats", type=int, nargs="+", help="constellation sizes; default: configured sweep")
    v.add_argument("--architecture", choices=ARCHITECTURES + ("all",), default="all")
    v.add_argument("--out", default="visibility.csv")

    c = sub.add_parser("capacity", help="capacity, per-satellite rate and latency against distance")
    c.add_argument("--power-dbm", type=power_dbm, nargs="*", help="dBm values; 'off' means 0 W")
    c.add_argument("--distance-km", type=float, nargs="*")
    c.add_argument("--payload-bytes", type=float)
    c.add_argument("--n-sharing", type=int)
    c.add_argument("--out", default="capacity.csv")

    t = sub.add_parser("train", help="end-to-end federated run under one aggregation scheme")
    t.add_argument("--preset", choices=sorted(PRESETS), default="default")
    t.add_argument("--scheme", choices=SCHEMES, default="proposed")
    t.add_argument("--horizon", type=float, help="simulated seconds; default: preset value")
    t.add_argument("--out", default="train")

    b = sub.add_parser("bound", help="delayed-gradient descent check against the convergence bound")
    b.add_argument("--L", type=float, default=1.0, dest="L")
    b.add_argument("--sigma", type=float, default=0.1)
    b.add_argument("--eta", type=float, default=0.25)
    b.add_argument("--tau-max", type=int, default=2)
    b.add_argument("--K", type=int, default=200, dest="K")
    b.add_argument("--seeds", type=int, default=100)
    b.add_argument("--dim", type=int, default=4)
    b.add_argument("--delay-mode", choices=("uniform", "max"), default="uniform")
    b.add_argument("--out", default="bound.json")

    r = sub.add_parser("report", help="tables plus figures; missing tables are produced first")
    r.add_argument("--nsats", type=int, nargs="+", help="constellation sizes for the visibility table")
    r.add_argument("--schemes", nargs="*", default=[], help="train schemes to run when absent")
    r.add_argument("--horizon", type=float)

    for sp in (p, v, c, t, b, r):
        _env_defaults(sp)
    return p


# -- commands -------------------------------------------------------------

def cmd_visibility(cfg: Config, args, out_dir: Path) -> list[Path]:
    sweep = cfg.section("sweep")
    incls = args.inclination or sweep["inclinations_deg"]
    sizes = args.nsats or sweep["num_sats"]
    archs = ARCHITECTURES if args.architecture == "all" else (args.architecture,)
    if not incls or not sizes:
        raise UsageError("empty visibility sweep")
    vis = cfg.visibility()
    step = float(cfg.section("visibility").get("epoch_step_s", 300.0))
    rows = []
    for incl in incls:
        for n in sizes:
            const = build_constellation(cfg.constellation_spec(inclination_deg=incl, num_sats=n))
            res = topology_rows(const, cfg.assets(), vis, archs, epoch_step=step)
            for arch in archs:
                row = res[arch]
                rows.append((float(incl), int(n), arch, row.visible_count, row.visible_fraction,
                             row.mean_window_s, row.instantaneous_fraction))
    return [write_table(out_dir / args.out, "visibility", VIS_COLUMNS, rows)]


def capacity_rows(cfg: Config, powers, distances, payload, n_sharing) -> list[tuple]:
    if not powers or not distances:
        raise UsageError("empty capacity sweep")
    if payload <= 0 or n_sharing < 1:
        raise UsageError("payload must be positive and n_sharing at least 1")
    am, pm = cfg.absorption(), cfg.pointing()
    rows = []
    if any(not d > 0 for d in distances) or any(math.isnan(p) or p == math.inf for p in powers):
        raise UsageError("distances must be positive and powers finite or -inf")
    for p_dbm in powers:
        lb = cfg.link(PathClass.SPACE_AIR).with_power_dbm(p_dbm)
        for d in distances:
            total = capacity(lb, am, pm, d * 1000.0)
            rate = per_satellite_rate(total, n_sharing)
            lat = transmission_latency(payload, rate) if rate > 0 else math.inf
            rows.append((float(p_dbm), float(d), total, n_sharing, rate, float(payload), lat))
    return rows


def cmd_capacity(cfg: Config, args, out_dir: Path) -> list[Path]:
    c = cfg.section("capacity")
    powers = c["powers_dbm"] if args.power_dbm is None else args.power_dbm
    distances = c["distances_km"] if args.distance_km is None else args.distance_km
    payload = args.payload_bytes or float(c["payload_bytes"])
    n_sharing = args.n_sharing or int(cfg.section("link")["n_sharing"])
    rows = capacity_rows(cfg, powers, distances, payload, n_sharing)
    return [write_table(out_dir / args.out, "capacity", CAP_COLUMNS, rows)]


def cmd_train(cfg: Config, args, out_dir: Path) -> list[Path]:
    sc = cfg.scenario(args.seed, args.horizon)
    log = run(sc, args.scheme)
    for w in log.warnings:
        print(f"warning: {w}", file=sys.stderr)
    dest = out_dir / args.out / args.scheme
    return log.write(dest)


def cmd_bound(cfg: Config, args, out_dir: Path) -> list[Path]:
    if args.L <= 0 or args.eta <= 0 or args.K < 1 or args.seeds < 1 or args.sigma < 0 or args.tau_max < 0:
        raise UsageError("L, eta, K and seeds must be positive; sigma and tau_max non-negative")
    if args.eta > 1.0 / (2.0 * args.L):
        raise UsageError(f"eta={args.eta} exceeds 1/(2L)={1.0 / (2.0 * args.L):.6g}")
    rng = np.random.default_rng(args.seed)
    obj = agg.QuadraticObjective.random(args.dim, args.L, rng)
    taus = agg.delay_schedule(args.K, args.tau_max, rng, args.delay_mode)
    rep = agg.run_descent_check(obj, np.full(args.K, args.eta), taus, args.sigma,
                                [args.seed * 100003 + s for s in range(args.seeds)])
    body = {"schema": 1, "L": args.L, "sigma": args.sigma, "eta": args.eta, "tau_max": args.tau_max,
            "K": args.K, "seeds": args.seeds, "dim": args.dim, "delay_mode": args.delay_mode,
            "bound_closed_form": agg.convergence_bound(obj.value(np.zeros(args.dim)), args.L,
                                                       args.sigma ** 2, np.full(args.K, args.eta),
                                                       args.tau_max),
            **rep.to_dict()}
    path = out_dir / args.out
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return [path]


def cmd_report(cfg: Config, args, out_dir: Path) -> list[Path]:
    written = []
    vis_path = out_dir / "visibility.csv"
    if not vis_path.exists():
        ns = argparse.Namespace(inclination=None, nsats=args.nsats, architecture="all", out="visibility.csv")
        written += cmd_visibility(cfg, ns, out_dir)
    cap_path = out_dir / "capacity.csv"
    if not cap_path.exists():
        ns = argparse.Namespace(power_dbm=None, distance_km=None, payload_bytes=None, n_sharing=None,
                                out="capacity.csv")
        written += cmd_capacity(cfg, ns, out_dir)
    _, vrows = read_table(vis_path, "visibility")
    written.append(plot_visibility(out_dir / "fig_visibility.png", vrows))
    _, crows = read_table(cap_path, "capacity")
    powers = sorted({float(r["power_dbm"]) for r in crows})
    dists = sorted({float(r["distance_km"]) for r in crows})
    curves = {p: [float(r["total_capacity_bps"]) for r in crows if float(r["power_dbm"]) == p]
              for p in powers}
    written.append(plot_capacity(out_dir / "fig_capacity.png", dists, curves))
    acc_curves = {}
    for scheme in SCHEMES:
        path = out_dir / "train" / scheme / "accuracy.csv"
        if not path.exists() and scheme in args.schemes:
            ns = argparse.Namespace(seed=args.seed, horizon=args.horizon, scheme=scheme, out="train")
            written += cmd_train(cfg, ns, out_dir)
        if path.exists():
            _, rows = read_table(path, f"train-{scheme}")
            acc_curves[scheme] = _mean_curve(rows)
    if acc_curves:
        written.append(plot_accuracy(out_dir / "fig_accuracy.png", acc_curves))
    return written


def _mean_curve(rows) -> list[tuple[float, float]]:
    """Running mean over satellites of each satellite's latest accuracy."""
    latest: dict[str, float] = {}
    out = []
    for r in sorted(rows, key=lambda r: float(r["time_s"])):
        latest[r["sat_id"]] = float(r["accuracy"])
        out.append((float(r["time_s"]), float(np.mean(list(latest.values())))))
    return out


COMMANDS = {
    "visibility": cmd_visibility,
    "capacity": cmd_capacity,
    "train": cmd_train,
    "bound": cmd_bound,
    "report": cmd_report,
}


def _validate(paths: Sequence[Path]) -> None:
    for path in paths:
        if path.suffix == ".csv":
            read_table(path)
        elif path.suffix == ".json":
            json.loads(path.read_text())
        elif not path.exists() or path.stat().st_size == 0:
            raise RuntimeError(f"{path} was not written")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        preset_name = getattr(args, "preset", "default")
        cfg = Config.load(args.config, preset_name)
        out_dir = Path(args.out_dir)
        paths = COMMANDS[args.command](cfg, args, out_dir)
        _validate(paths)
    except (UsageError, ConfigError) as exc:
        parser.error(str(exc))  # exits with status 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"leofl: error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
