"""Command line: ``d2dcoop sweep | verify | pair``.

Exit codes: 0 success, 1 usage error, 2 config error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelGains
from .config import ConfigError, config_items, load_config, parse_config
from .matching import build_preferences, deferred_acceptance
from .rates import budget_arrays
from .simulation import METRICS, SCHEMES, DropError, ScenarioConfig, prepare_drop, run_sweep
from .stackelberg import solve_batch
from .verify import run_verification

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3
OUT_DIR_ENV = "D2DCOOP_OUT_DIR"
CSV_COLUMNS = ("scheme", "n", "metric", "mean", "stderr", "drops", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def fmt(x: float) -> str:
    """12 significant digits, locale independent."""
    return format(float(x), ".12g")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _scheme_list(text: str) -> tuple[str, ...]:
    schemes = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise argparse.ArgumentTypeError(f"schemes must be among {', '.join(SCHEMES)}")
    return schemes


def _load(args) -> ScenarioConfig:
    if getattr(args, "manifest", None):
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        text = "".join(f"{k} = {v}\n" for k, v in manifest["config"].items())
        return parse_config(text, str(args.manifest))
    if args.config:
        return load_config(args.config)
    return ScenarioConfig()


def results_csv(result) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for scheme in result.schemes:
        for n in result.config.n_values:
            for metric in METRICS:
                st = result.stat(scheme, n, metric)
                writer.writerow([scheme, n, metric, fmt(st.mean), fmt(st.stderr), st.drops,
                                 result.config.master_seed])
    return buf.getvalue()


def manifest(result) -> dict:
    cfg = result.config
    return {
        "tool": "d2dcoop",
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "master_seed": cfg.master_seed,
        "schemes": list(result.schemes),
        "config": config_items(cfg),
        "drops_per_cell": {f"{s}:{n}": len(drops) for (s, n), drops in result.samples.items()},
    }


def cmd_sweep(args) -> int:
    cfg = _load(args)
    overrides = {}
    if args.n_values is not None:
        overrides["n_values"] = args.n_values
    if args.drops is not None:
        overrides["drops"] = args.drops
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.c_fixed is not None:
        overrides["c_fixed"] = args.c_fixed
    if args.no_condition_outage:
        overrides["condition_outage"] = False
    schemes = args.scheme
    if schemes is None and args.manifest:
        with open(args.manifest, encoding="utf-8") as fh:
            schemes = tuple(json.load(fh)["schemes"])
    schemes = schemes or SCHEMES
    try:
        cfg = replace(cfg, scheme=schemes[0], **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    result = run_sweep(cfg, schemes, workers=args.workers)
    out_dir = Path(args.out_dir or os.environ.get(OUT_DIR_ENV, "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(results_csv(result), encoding="utf-8", newline="")
    (out_dir / "manifest.json").write_text(json.dumps(manifest(result), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out_dir / 'results.csv'} and {out_dir / 'manifest.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    checks = run_verification(args.instances, args.grid_alpha, args.grid_c, args.seed,
                              base=cfg.game, matching_instances=args.matching_instances,
                              perturb_alpha=args.perturb_alpha)
    failed = False
    for check in checks:
        print(check.line())
        for dump in check.dumps:
            print(f"    instance: {dump}")
        failed |= check.failures > 0
    return EXIT_VERIFY if failed else EXIT_OK


def _load_gains(path) -> ChannelGains:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return ChannelGains(**{k: np.asarray(data[k], dtype=float) for k in ("h_ib", "h_ij", "g_jb", "g_j")})
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad gains file: {exc}", source=str(path)) from None


def pair_trace(cfg: ScenarioConfig, n: int, drop_index: int, scheme: str,
               gains: ChannelGains | None = None, dump_preferences: bool = False) -> str:
    """Verbose text trace of one drop: outcomes, preferences, DA rounds, matching."""
    game = cfg.game
    kind = "fixed" if scheme == "stable_fixed_price" else "stackelberg"
    c_fixed = cfg.fixed_price if kind == "fixed" else None
    if gains is None:
        state = prepare_drop(cfg, n, drop_index, (scheme,), with_logs=True)
        out, (ceu_prefs, d2d_prefs) = state.outcomes[kind], state.preferences[kind]
        matching, log = state.matchings[scheme], state.logs.get(scheme)
        m = cfg.m
    else:
        budgets = budget_arrays(gains, game.p_c, game.p_d, game.n0)
        out = solve_batch(budgets["r_c"], budgets["r_d"], game, c_fixed)
        ceu_prefs, d2d_prefs = build_preferences(out)
        log = []
        matching = deferred_acceptance(ceu_prefs, d2d_prefs, log)
        m, n = gains.m, gains.n

    lines = [f"# scheme={scheme} m={m} n={n} drop_index={drop_index} seed={cfg.master_seed}",
             "[pairs]", "ceu d2d feasible c_star alpha_star u_ceu u_d2d r_ceu r_d2d"]
    for i in range(m):
        for j in range(n):
            lines.append(" ".join([str(i), str(j), str(bool(out["feasible"][i, j])).lower()]
                                  + [fmt(out[k][i, j]) for k in
                                     ("c_star", "alpha_star", "u_ceu", "u_d2d", "r_ceu", "r_d2d")]))
    if dump_preferences:
        lines.append("[ceu_preferences]")
        lines += [f"{p.owner}: {' '.join(map(str, p.ranked))}".rstrip() for p in ceu_prefs]
        lines.append("[d2d_preferences]")
        lines += [f"{p.owner}: {' '.join(map(str, p.ranked))}".rstrip() for p in d2d_prefs]
    if log is not None:
        lines.append("[rounds]")
        for k, rnd in enumerate(log, start=1):
            props = " ".join(f"{i}->{j}" for i, j in rnd.proposals)
            rej = " ".join(f"{j}x{i}" for i, j in rnd.rejections) or "-"
            lines.append(f"round {k}: propose {props} | reject {rej}")
    lines.append("[matching]")
    lines += [f"{i} {j}" for i, j in matching.pairs()]
    return "\n".join(lines) + "\n"


def cmd_pair(args) -> int:
    cfg = _load(args)
    overrides = {}
    if args.m is not None:
        overrides["m"] = args.m
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    try:
        cfg = replace(cfg, scheme=args.scheme, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    gains = _load_gains(args.gains) if args.gains else None
    n = args.n if args.n is not None else cfg.n_values[0]
    text = pair_trace(cfg, n, args.drop_index, args.scheme, gains, args.dump_preferences)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="d2dcoop", description="CEU/D2D cooperative spectrum sharing simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key = value scenario file (defaults: built-in scenario)")

    p = sub.add_parser("sweep", help="Monte Carlo sweep over D2D counts; writes results.csv + manifest.json")
    common(p)
    p.add_argument("--manifest", help="rerun the configuration recorded in a manifest.json")
    p.add_argument("--scheme", type=_scheme_list, help="comma-separated schemes (default: all three)")
    p.add_argument("--n-values", type=_int_list)
    p.add_argument("--drops", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--c-fixed", type=float, help="price for the stable_fixed_price scheme")
    p.add_argument("--no-condition-outage", action="store_true",
                   help="do not force every CEU's direct link into outage")
    p.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or ./results)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check closed forms and matching against brute-force oracles")
    common(p)
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--grid-alpha", type=float, default=1e-5)
    p.add_argument("--grid-c", type=float, default=1e-4)
    p.add_argument("--matching-instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb-alpha", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("pair", help="verbose trace of a single drop")
    common(p)
    p.add_argument("--n", type=int, help="number of D2D pairs (default: first scenario.n_values)")
    p.add_argument("--m", type=int)
    p.add_argument("--drop-index", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=SCHEMES, default="proposed")
    p.add_argument("--gains", help="JSON file with h_ib, h_ij, g_jb, g_j instead of a random drop")
    p.add_argument("--dump-preferences", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pair)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
