"""Command-line entry point: ``targets``, ``solve`` and ``sweep``.

Powers are reported linearly and in dB relative to a unit reference power
(``10*log10(p / 1)``).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__, games, receivers
from .games import ALL_GAMES, GameKind, ScenarioModel
from .montecarlo import SweepSpec, SweepSummary, run_sweep
from .scenario import SystemConfig, draw_scenario

EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_UNWRITABLE = 4

CSV_COLUMNS = ("game", "K", "mean_utility", "mean_power_linear", "mean_power_db",
               "frac_at_max", "nonconverged", "trials", "seed")

# run-level keys accepted in a config file next to the SystemConfig fields
RUN_KEYS = {"trials": int, "users": str, "games": str, "workers": int}
DEFAULT_TRIALS = 5000


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunManifest:
    config: SystemConfig
    subcommand: str
    seed: int
    output: str
    version: str = __version__

    def lines(self) -> list[str]:
        out = [f"tool: cdma_ee {self.version}", f"subcommand: {self.subcommand}",
               f"seed: {self.seed}", f"output: {self.output}",
               "power_db: 10*log10(p / 1 unit)"]
        for f in dataclasses.fields(self.config):
            out.append(f"config.{f.name}: {getattr(self.config, f.name)!r}")
        return out


def _convert(name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(SystemConfig)}
    if name in RUN_KEYS:
        typ = RUN_KEYS[name]
    elif name in fields:
        typ = type(getattr(SystemConfig(), name))
    else:
        raise ConfigError(f"unknown config key {name!r}")
    raw = raw.strip()
    try:
        if typ is tuple:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = _convert(key, raw)
    return values


def resolve(args: argparse.Namespace) -> tuple[SystemConfig, dict]:
    values: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        values.update(parse_config_text(text))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = _convert(key.strip(), raw)
    for key in ("seed", "trials", "users", "games", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val if key != "seed" else int(val)
    run = {k: values.pop(k) for k in list(values) if k in RUN_KEYS}
    try:
        cfg = SystemConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, run


def parse_games(spec: str | None) -> tuple[GameKind, ...]:
    if spec is None or spec.strip().lower() == "all":
        return ALL_GAMES
    try:
        return tuple(GameKind.parse(s) for s in spec.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_users(spec, default: Sequence[int]) -> tuple[int, ...]:
    if spec is None:
        return tuple(default)
    try:
        Ks = tuple(int(s) for s in str(spec).split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"bad user list {spec!r}") from exc
    if not Ks or any(K < 1 for K in Ks):
        raise ConfigError("user counts must be positive")
    return Ks


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def cmd_targets(config: SystemConfig, users: int | None = None, trial: int = 0) -> str:
    f = games.EfficiencyFunction(config.B)
    g = games.common_target_sinr(f)
    lines = [f"B={config.B}", f"common_target_linear={g:.12g}", f"common_target_db={_db(g):.6f}"]
    if users:
        model = ScenarioModel.from_scenario(draw_scenario(config, users, trial), config)
        lines.append("user a_k b_k mf_target_linear mf_target_db")
        for k in range(users):
            a, b = receivers.mf_coefficients(k, model.signatures)
            t = games.mf_target_sinr(a, b, f)
            lines.append(f"{k} {a:.6e} {b:.6e} {t:.12g} {_db(t):.6f}")
    return "\n".join(lines) + "\n"


def cmd_solve(config: SystemConfig, K: int, trial: int,
              kinds: Sequence[GameKind]) -> tuple[str, bool]:
    model = ScenarioModel.from_scenario(draw_scenario(config, K, trial), config)
    out = io.StringIO()
    ok = True
    for kind in kinds:
        eq = games.run_game(kind, model)
        ok &= eq.converged
        out.write(f"[{kind.value}] converged={eq.converged} iterations={eq.iterations}\n")
        out.write("user power_db sinr_db utility at_max\n")
        for k in range(K):
            out.write(f"{k} {_db(eq.powers[k]):.6f} {_db(eq.sinrs[k]):.6f} "
                      f"{eq.utilities[k]:.6e} {int(eq.at_max[k])}\n")
    return out.getvalue(), ok


def format_sweep_csv(summary: SweepSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in summary.rows:
        w.writerow([r.game.value, r.K, f"{r.mean_utility:.12g}", f"{r.mean_power_linear:.12g}",
                    f"{r.mean_power_db:.12g}", f"{r.frac_at_max:.12g}", r.nonconverged,
                    r.trials, summary.seed])
    return buf.getvalue()


def cmd_sweep(config: SystemConfig, Ks: Sequence[int], trials: int, kinds: Sequence[GameKind],
              out: str, workers: int = 1, manifest: RunManifest | None = None) -> SweepSummary:
    summary = run_sweep(SweepSpec(tuple(kinds), tuple(Ks), trials, config), workers=workers)
    text = format_sweep_csv(summary)
    path = Path(out)
    path.write_text(text)
    if manifest is not None:
        Path(str(path) + ".manifest").write_text("\n".join(manifest.lines()) + "\n")
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdma-ee", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file with SystemConfig fields")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("targets", parents=[common], help="print target SINRs")
    p.add_argument("--users", type=int, help="also print per-user matched-filter targets")
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("solve", parents=[common], help="equilibria of one scenario")
    p.add_argument("--users", type=int, default=None)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--games", default=None, help="comma list or 'all'")

    p = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep to CSV")
    p.add_argument("--users", default=None, help="comma list of user counts")
    p.add_argument("--trials", type=int)
    p.add_argument("--games", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, run = resolve(args)
        header = "".join(f"# {line}\n" for line in
                         RunManifest(cfg, args.command, cfg.seed, "stdout").lines())
        if args.command == "targets":
            sys.stdout.write(header + cmd_targets(cfg, args.users, args.trial))
            return 0
        kinds = parse_games(run.get("games"))
        if args.command == "solve":
            K = int(run.get("users") or 1)
            if K < 1:
                raise ConfigError("--users must be positive")
            text, ok = cmd_solve(cfg, K, args.trial, kinds)
            sys.stdout.write(header + text)
            return 0 if ok else EXIT_NONCONVERGED
        Ks = parse_users(run.get("users"), (2, 4, 6, 8, 10, 12))
        trials = int(run.get("trials", DEFAULT_TRIALS))
        workers = int(run.get("workers", 1))
        if trials < 1:
            raise ConfigError("--trials must be positive")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    if out.is_dir() or not out.parent.exists():
        print(f"error: cannot write {out}", file=sys.stderr)
        return EXIT_UNWRITABLE
    manifest = RunManifest(cfg, "sweep", cfg.seed, str(out))
    try:
        summary = cmd_sweep(cfg, Ks, trials, kinds, str(out), workers, manifest)
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE
    if any(r.nonconverged for r in summary.rows):
        return EXIT_NONCONVERGED
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
