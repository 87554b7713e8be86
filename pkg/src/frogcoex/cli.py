"""Batch command-line interface: tables, threshold scans, coexistence experiments.

Exit codes: 0 success, 1 failed check or run guard, 2 usage or validation error.
Set ``SOURCE_DATE_EPOCH`` to pin manifest timestamps for byte-identical reruns.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__, coupling, frog, percolation, verify
from .lattice import LatticeError
from .randfield import EtaSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- parsing helpers ----------------------------------------------------------

def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_range(text: str) -> list[int]:
    """``"0:5"`` is 0..5 inclusive; a comma list is taken as is."""
    if ":" in text:
        a, b = text.split(":", 1)
        return list(range(int(a), int(b) + 1))
    return _ints(text)


def _site(text: str) -> tuple[int, ...]:
    return tuple(_ints(text))


def _sites(text: str) -> list[tuple[int, ...]]:
    return [_site(chunk) for chunk in text.split(";") if chunk.strip()]


def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    stamp = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return stamp.isoformat(timespec="seconds")


def _resolve_seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(32)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def manifest(args: argparse.Namespace, started: str, outputs: Sequence[str]) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {
        "subcommand": args.command,
        "params": params,
        "seed": params.get("seed"),
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": list(outputs),
    }


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _eta_from(args: argparse.Namespace, M: int | None) -> EtaSpec | None:
    if args.theta_eta is None:
        return None
    if M is None:
        raise UsageError("--theta-eta needs an explicit --M")
    return EtaSpec.two_point(M, args.theta_eta)


# -- subcommands --------------------------------------------------------------

def cmd_g_table(args: argparse.Namespace) -> int:
    started = _now()
    ds, Ms, ps = _ints(args.d), _int_range(args.M), _floats(args.p_list)
    if not ds or not Ms or not ps:
        raise UsageError("d, M and p grids must be non-empty")
    buf = io.StringIO()
    buf.write("# manifest: " + _dumps(manifest(args, started, [args.out or "-"])) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "M", "p", "g_exact", "g_lower_bound"])
    for d in ds:
        for M in Ms:
            for p in ps:
                w.writerow([d, M, p, repr(percolation.g_exact(M, p, d)), repr(percolation.g_lower_bound(M, p, d))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_threshold(args: argparse.Namespace) -> int:
    started = _now()
    seed = _resolve_seed(args)
    res = percolation.estimate_threshold(args.d, args.depth, args.trials, args.tol, seed)
    body = res.to_dict()
    body["manifest"] = manifest(args, started, [args.out or "-"])
    _emit(_dumps(body) + "\n", args.out)
    return EXIT_OK


def _stream(args: argparse.Namespace, setup, started: str) -> int:
    seed = _resolve_seed(args)
    outs = coupling.coexistence_trials(setup, args.trials, args.forced, seed, args.workers)
    est = coupling.summarize(setup, outs, args.forced, seed)
    bad = est.provenance["counterexamples"]
    lines = [_dumps({"kind": "manifest", **manifest(args, started, [args.out or "-"])})]
    for i, o in enumerate(outs):
        lines.append(_dumps({"kind": "trial", "trial": i, **o.to_dict()}))
    lines.append(_dumps({"kind": "summary", **est.to_dict()}))
    _emit("\n".join(lines) + "\n", args.out)
    if args.summary_csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setup", "mode", "trials", "successes", "point", "ci_lo", "ci_hi", "counterexamples", "seed"])
        w.writerow([args.command, est.provenance["mode"], est.trials, est.successes, est.point, est.wilson_lo, est.wilson_hi, bad, seed])
        Path(args.summary_csv).write_text(buf.getvalue())
    return EXIT_OK


def cmd_two_type(args: argparse.Namespace) -> int:
    started = _now()
    setup = coupling.TwoTypeSetup(
        d=args.d, y=_site(args.y) if args.y else (1,) + (0,) * (args.d - 1), p1=args.p1, p2=args.p2, m=args.m,
        M=args.M, eta_spec=_eta_from(args, args.M), depth=args.depth, tie_break=args.tie_break,
    )
    return _stream(args, setup, started)


def cmd_multi_type(args: argparse.Namespace) -> int:
    started = _now()
    starts = _sites(args.starts) if args.starts else None
    if starts is None:
        raise UsageError("--starts is required, e.g. '0,0;1,0;0,1;1,1'")
    laziness = _floats(args.p_list) if args.p_list else [1.0] * len(starts)
    setup = coupling.MultiTypeSetup(
        d=args.d, starts=tuple(starts), laziness=tuple(laziness), m=args.m, M=args.M,
        eta_spec=_eta_from(args, args.M), depth=args.depth, tie_break=args.tie_break,
    )
    return _stream(args, setup, started)


def cmd_slab(args: argparse.Namespace) -> int:
    started = _now()
    laziness = tuple(_floats(args.p_list)) if args.p_list else None
    k = len(laziness) if laziness else args.k
    setup = coupling.SlabSetup(
        d=args.d, heights=tuple(range(k)), laziness=laziness, M=args.M,
        eta_spec=_eta_from(args, args.M), depth=args.depth,
    )
    return _stream(args, setup, started)


# flat key = value config for ``simulate``; each parser validates its value
def _types(text: str) -> tuple[frog.TypeSpec, ...]:
    out = []
    for chunk in text.split(","):
        i, p = chunk.split(":")
        out.append(frog.TypeSpec(int(i), float(p)))
    return tuple(out)


def _actives(text: str) -> tuple[tuple[tuple[int, ...], int], ...]:
    out = []
    for chunk in text.split(";"):
        s, i = chunk.split(":")
        out.append((_site(s), int(i)))
    return tuple(out)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low not in ("true", "false", "1", "0", "yes", "no"):
        raise ValueError(f"not a boolean: {text!r}")
    return low in ("true", "1", "yes")


SIM_SCHEMA: dict[str, Callable[[str], Any]] = {
    "d": int,
    "seed": int,
    "horizon": int,
    "types": _types,
    "actives": _actives,
    "eta_kind": str,
    "eta_m0": int,
    "eta_prob": float,
    "eta_else": int,
    "tie_break": frog.TieBreak,
    "activate_initial_eta": _bool,
    "record_locations": _bool,
}
SIM_REQUIRED = ("d", "types", "actives", "eta_m0", "horizon")


def parse_sim_config(text: str) -> dict[str, Any]:
    vals: dict[str, Any] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SIM_SCHEMA:
            raise UsageError(f"line {n}: unknown key {key!r}")
        if key in vals:
            raise UsageError(f"line {n}: duplicate key {key!r}")
        try:
            vals[key] = SIM_SCHEMA[key](value)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"line {n}: bad value for {key}: {exc}") from None
    missing = [k for k in SIM_REQUIRED if k not in vals]
    if missing:
        raise UsageError(f"missing keys: {', '.join(missing)}")
    return vals


def sim_config_from(vals: dict[str, Any], seed: int) -> frog.SimConfig:
    kind = vals.get("eta_kind", "deterministic")
    if kind == "deterministic":
        eta = EtaSpec.deterministic(vals["eta_m0"])
    elif kind == "twopoint":
        eta = EtaSpec.two_point(vals["eta_m0"], vals.get("eta_prob", 1.0), vals.get("eta_else", 0))
    else:
        raise UsageError(f"eta_kind must be deterministic or twopoint, got {kind!r}")
    return frog.SimConfig(
        d=vals["d"],
        type_specs=vals["types"],
        initial_actives=vals["actives"],
        eta_spec=eta,
        tie_break=vals.get("tie_break", frog.TieBreak.LOWEST),
        horizon=vals["horizon"],
        seed=seed,
        record_locations=vals.get("record_locations", False),
        activate_initial_eta=vals.get("activate_initial_eta", False),
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    started = _now()
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    vals = parse_sim_config(text)
    args.config_text = text  # echoed so the manifest alone can reproduce the run
    if args.horizon is not None:
        vals["horizon"] = args.horizon
    if args.seed is None and "seed" in vals:
        args.seed = vals["seed"]
    seed = _resolve_seed(args)
    cfg = sim_config_from(vals, seed)
    try:
        record = frog.run(cfg)
    except frog.MemoryGuardError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    body = record.to_dict(include_locations=cfg.record_locations)
    body["manifest"] = manifest(args, started, [args.out or "-"])
    _emit(_dumps(body) + "\n", args.out)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = verify.run_checks(Path(args.vectors) if args.vectors else None)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<{width}}  {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.ok]
    if failed:
        print("failed checks: " + ", ".join(failed))
        return EXIT_FAIL
    print("all checks passed")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _experiment_flags(p: argparse.ArgumentParser, d_default: int, depth_default: int) -> None:
    p.add_argument("--d", type=int, default=d_default)
    p.add_argument("--M", type=int, default=None, help="percolation parameter; smallest supercritical value if omitted")
    p.add_argument("--theta-eta", type=float, default=None, help="use two-point eta: M w.p. theta, else 0")
    p.add_argument("--depth", type=int, default=depth_default, help="percolation depth L")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--forced", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="JSON-lines output path (stdout if omitted)")
    p.add_argument("--summary-csv", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frogcoex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("g-table", help="CSV table of g(M, p) and its lower bound")
    p.add_argument("--d", default="1,2,3", help="comma list of dimensions")
    p.add_argument("--M", default="0:5", help="range a:b (inclusive) or comma list")
    p.add_argument("--p-list", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_g_table)

    p = sub.add_parser("threshold", help="finite-size crossing threshold by bisection")
    p.add_argument("--d", type=int, default=2, help="dimension of the percolation lattice")
    p.add_argument("--depth", "--L", dest="depth", type=int, default=64)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("two-type", help="two-type coexistence trials")
    _experiment_flags(p, 2, 16)
    p.add_argument("--y", default=None, help="type-2 start, e.g. '1,0'")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--p1", type=float, default=1.0)
    p.add_argument("--p2", type=float, default=0.6)
    p.add_argument("--tie-break", choices=[t.value for t in frog.TieBreak], default="low")
    p.set_defaults(func=cmd_two_type)

    p = sub.add_parser("multi-type", help="2^d-type corner construction")
    _experiment_flags(p, 2, 12)
    p.add_argument("--starts", default=None, help="semicolon-separated sites, e.g. '0,0;1,0;0,1;1,1'")
    p.add_argument("--p-list", default=None, help="laziness per type")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--tie-break", choices=[t.value for t in frog.TieBreak], default="low")
    p.set_defaults(func=cmd_multi_type)

    p = sub.add_parser("slab", help="many types on slab orthants, d >= 3")
    _experiment_flags(p, 3, 8)
    p.add_argument("--k", type=int, default=8, help="number of types when --p-list is omitted")
    p.add_argument("--p-list", default=None, help="laziness per type")
    p.set_defaults(func=cmd_slab)

    p = sub.add_parser("simulate", help="run one frog simulation from a key = value config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="reduced-scale self checks")
    p.add_argument("--vectors", default=None, help="alternative rand-field test-vector file")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (coupling.SetupError, LatticeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
