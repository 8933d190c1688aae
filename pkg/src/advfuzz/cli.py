"""Command line: ``advfuzz fuzz | bench | report``.

Every campaign option can also be given in a flat ``key = value`` file passed
with ``--config``; command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from advfuzz.errors import ConfigError
from advfuzz.orchestrator import ADVERSARIAL, BASELINE, CampaignConfig, run_campaign
from advfuzz.targets import BUILTIN

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

TABLE_COLUMNS = [
    "Average Executions Per Second",
    "Total Executions (Millions)",
    "Levels of Mutation",
    "Paths Found",
    "Unique Crashes Found",
    "Edges Covered",
]

# flag dest -> CampaignConfig field
_FLAG_FIELDS = {
    "target": "target",
    "mode": "mode",
    "budget_secs": "budget_secs",
    "budget_execs": "budget_execs",
    "seed": "seed",
    "out": "out",
    "n_targets": "n_targets",
    "theta": "theta",
    "max_iters": "max_iters",
    "retrain_threshold": "retrain_threshold",
}


class UsageError(Exception):
    pass


def _coerce(name: str, raw: str):
    fieldmap = {f.name: f for f in dataclasses.fields(CampaignConfig)}
    if name not in fieldmap:
        raise UsageError(f"unknown config key {name!r}")
    kind = str(fieldmap[name].type)
    raw = raw.strip()
    if raw.lower() in ("", "none", "null") and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise UsageError(f"bad value for {name}: {raw!r}") from None
    return raw


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, raw = line.split("=", 1)
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, raw)
    return values


def build_config(args: argparse.Namespace, **fixed) -> CampaignConfig:
    values = read_config_file(args.config) if args.config else {}
    for dest, name in _FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[name] = value
    values.update(fixed)
    if "target" not in values:
        raise UsageError("a target is required (--target or 'target' in the config file)")
    if values["target"] not in BUILTIN:
        raise UsageError(f"unknown target {values['target']!r}; choose from {', '.join(sorted(BUILTIN))}")
    if values.get("budget_execs") is None and values.get("budget_secs") is None:
        raise UsageError("a budget is required (--budget-secs or --budget-execs)")
    cfg = CampaignConfig(**values)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _campaign_flags(p: argparse.ArgumentParser, with_mode: bool = True) -> None:
    p.add_argument("--target", help="built-in target name (goat, loop)")
    if with_mode:
        p.add_argument("--mode", choices=[BASELINE, ADVERSARIAL])
    budget = p.add_mutually_exclusive_group()
    budget.add_argument("--budget-secs", type=float)
    budget.add_argument("--budget-execs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--n-targets", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--retrain-threshold", type=int)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="advfuzz", description="coverage-guided fuzzing with a neural surrogate")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fuzz = sub.add_parser("fuzz", help="run one campaign")
    _campaign_flags(fuzz)

    bench = sub.add_parser("bench", help="paired baseline/adversarial trials")
    _campaign_flags(bench, with_mode=False)
    bench.add_argument("--trials", type=int, default=5)

    report = sub.add_parser("report", help="merge stats.csv timelines into one long CSV")
    report.add_argument("runs", nargs="+", help="campaign output directories")
    report.add_argument("--output", "-o", help="CSV path (default: stdout)")
    return parser


# -- commands -----------------------------------------------------------------


def cmd_fuzz(args) -> int:
    cfg = build_config(args)
    if cfg.out is None:
        cfg.out = "out"
    stats = run_campaign(cfg)
    print(json.dumps(stats.as_dict(), indent=2))
    return EXIT_OK


def _row(summary: dict) -> dict:
    return {
        "Average Executions Per Second": summary["execs_per_sec"],
        "Total Executions (Millions)": summary["execs_total"] / 1e6,
        "Levels of Mutation": summary["max_depth"],
        "Paths Found": summary["paths_found"],
        "Unique Crashes Found": summary["unique_crashes"],
        "Edges Covered": summary["edges_covered"],
    }


def bench_table(trials: dict[str, list[dict]]) -> list[dict]:
    """Per-mode means of the table columns, baseline first."""
    rows = []
    for mode in (BASELINE, ADVERSARIAL):
        runs = [_row(s) for s in trials.get(mode, [])]
        if not runs:
            continue
        row = {"Fuzzer": mode}
        for col in TABLE_COLUMNS:
            row[col] = sum(r[col] for r in runs) / len(runs)
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    header = ["Fuzzer", *TABLE_COLUMNS]
    cells = [header]
    for row in rows:
        cells.append([row["Fuzzer"], *(f"{row[c]:.2f}" if isinstance(row[c], float) else str(row[c])
                                       for c in TABLE_COLUMNS)])
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_bench(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    base = build_config(args, mode=BASELINE)
    out = Path(base.out or "bench-out")
    trials: dict[str, list[dict]] = {BASELINE: [], ADVERSARIAL: []}
    per_trial = []
    for trial in range(args.trials):
        for mode in (BASELINE, ADVERSARIAL):
            cfg = dataclasses.replace(base, mode=mode, trial=trial, seed=base.seed + trial,
                                      out=str(out / f"{mode}_{trial}"))
            logging.getLogger("advfuzz").info("trial %d %s", trial, mode)
            run_campaign(cfg)
            summary = json.loads((Path(cfg.out) / "summary.json").read_text())
            trials[mode].append(summary)
            per_trial.append({"mode": mode, "trial": trial, "seed": cfg.seed, **_row(summary),
                              "mean_depth": summary["mean_depth"]})
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trials.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(per_trial[0]))
        writer.writeheader()
        writer.writerows(per_trial)
    rows = bench_table(trials)
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["Fuzzer", *TABLE_COLUMNS])
        writer.writeheader()
        writer.writerows(rows)
    table = format_table(rows)
    (out / "bench.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


REPORT_FIELDS = ["t", "mode", "trial", "paths", "crashes", "edges"]


def merge_timelines(run_dirs) -> list[dict]:
    rows = []
    for run in run_dirs:
        run = Path(run)
        stats_path = run / "stats.csv"
        if not stats_path.is_file():
            raise UsageError(f"{stats_path} not found")
        mode, trial = BASELINE, 0
        summary_path = run / "summary.json"
        if summary_path.is_file():
            summary = json.loads(summary_path.read_text())
            mode, trial = summary.get("mode", mode), summary.get("trial", trial)
        with open(stats_path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append({"t": rec["t_seconds"], "mode": mode, "trial": trial,
                             "paths": rec["paths"], "crashes": rec["crashes"], "edges": rec["edges"]})
    return rows


def cmd_report(args) -> int:
    rows = merge_timelines(args.runs)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


COMMANDS = {"fuzz": cmd_fuzz, "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"advfuzz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except (ConfigError, OSError, RuntimeError, KeyError) as exc:
        print(f"advfuzz: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
