"""``dqc-forge`` command-line entry point.

Usage::

    dqc-forge <command> --config <path> --seed <int> --out <dir> [--jobs N]

Exit codes: 0 success, 2 configuration error, 3 finished with results but at
least one optimization did not converge.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import shutil
import sys
import time
from pathlib import Path

from . import experiments as ex

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3

log = logging.getLogger("dqcforge")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dqc-forge",
                                description="Train dynamic quantum circuits and reproduce the "
                                            "benchmark experiments.")
    p.add_argument("command", choices=ex.COMMANDS)
    p.add_argument("--config", required=True, help="YAML or JSON experiment config")
    p.add_argument("--seed", type=int, required=True, help="base seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_manifest(out: Path, cfg: ex.ExperimentConfig, seed: int, jobs: int, table, files,
                    status: str, started: str, elapsed: float, timings: dict) -> None:
    manifest = {
        "command": cfg.experiment,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": seed,
        "jobs": jobs,
        "schema": ex.SCHEMA_VERSION,
        "status": status,
        "flags": dict(sorted(table.flags.items())),
        "rows": len(table.rows),
        "files": sorted(files),
        "versions": ex.environment_versions(),
        # the only field that changes between identical runs
        "timestamp": {"started_utc": started, "wall_seconds": round(elapsed, 3), **timings},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run(command: str, config_path, seed: int, out_dir, jobs: int = 1) -> int:
    try:
        cfg = ex.load_config(config_path, command)
    except ex.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staging = out / ".staging"
    started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    timings: dict = {}
    files = ["results.csv", "manifest.json"]
    if command == "realtime":
        table, reports, latencies = ex.cmd_realtime(cfg, seed, jobs, staging)
        (out / "sessions.txt").write_text("\n".join(reports))
        files.append("sessions.txt")
        timings["decode_ms"] = [round(x, 3) for x in latencies]
    elif command == "nn-train":
        table = ex.cmd_nn_train(cfg, seed, jobs, staging, out)
        files += sorted(p.name for p in out.glob("decoder_w*_s*.json"))
    else:
        table = ex.RUNNERS[command](cfg, seed, jobs, staging)
    ex.validate_schema(table)
    added = table.append_to(out / "results.csv")
    shutil.rmtree(staging, ignore_errors=True)
    status = "nonconverged" if table.flags.get("nonconverged") else "ok"
    _write_manifest(out, cfg, seed, jobs, table, files, status, started,
                    time.perf_counter() - t0, timings)
    log.info("%s: %d rows (%d new) -> %s", command, len(table.rows), added, out)
    return EXIT_NONCONVERGED if status == "nonconverged" else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.command, args.config, args.seed, args.out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
