"""Command-line entry point.

    ghostsim --scenario two_hole --out results/two_hole [--config file.ini]
             [--seed N] [--realizations N] [--workers N]

Exit status: 0 when every check passes, 1 when a check fails, 2 on any error.
Files written to the output directory:

- ``summary.txt``: verdict table (plain text)
- ``config.resolved.ini``: every setting used, re-readable with ``--config``
- ``*.csv``: data curves (UTF-8, header row). Correlation maps use the columns
  ``x_m,g2,covariance,stderr``
- ``*.pgm``: ghost images as ASCII P2 (maxval 255, scaled to the data maximum)
  and intensity frames as binary 16-bit P5
- ``manifest.txt``: the files above, one per line

Run time and worker count are printed but never written, so output files are
byte-identical for a fixed seed whatever the worker count.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .configfile import format_config, parse_config
from .errors import GhostSimError, OutputError
from .pgm import write_pgm_p2, write_pgm_p5
from .scenarios import SCENARIOS, ScenarioConfig, ScenarioResult, ScenarioVerdict, default_config, run_scenario

__all__ = ["RunRequest", "RunSummary", "run", "write_outputs", "format_verdict", "main"]


@dataclass(frozen=True)
class RunRequest:
    scenario: Optional[str] = None
    config_path: Optional[str] = None
    out_dir: Optional[str] = None
    seed: Optional[int] = None
    realizations: Optional[int] = None
    workers: int = 1


@dataclass
class RunSummary:
    config: ScenarioConfig
    verdict: ScenarioVerdict
    manifest: list = field(default_factory=list)
    runtime: float = 0.0
    version: str = __version__

    @property
    def exit_code(self) -> int:
        return 0 if self.verdict.passed else 1


def resolve_config(request: RunRequest) -> ScenarioConfig:
    if request.config_path is not None:
        cfg = parse_config(request.config_path, request.scenario)
    elif request.scenario is not None:
        cfg = default_config(request.scenario)
    else:
        raise GhostSimError(f"no scenario given; choose one of {', '.join(SCENARIOS)}")
    changes = {}
    if request.seed is not None:
        changes["master_seed"] = request.seed
    if request.realizations is not None:
        changes["n_realizations"] = request.realizations
    if changes:
        cfg = cfg.replace("ensemble", **changes)
    return cfg.validate()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def format_verdict(verdict: ScenarioVerdict) -> str:
    """Plain-text verdict table (no timing, so it is reproducible)."""
    lines = [
        f"scenario: {verdict.scenario}",
        f"mode: {verdict.mode}",
        f"master_seed: {verdict.seed}",
        f"verdict: {'PASS' if verdict.passed else 'FAIL'}",
        "",
        "checks:",
    ]
    width = max((len(c.name) for c in verdict.checks), default=10)
    for c in verdict.checks:
        lo = "-inf" if c.lower == -math.inf else f"{c.lower:.6g}"
        hi = "inf" if c.upper == math.inf else f"{c.upper:.6g}"
        lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name:<{width}}  {c.value:.6g}  in [{lo}, {hi}]"
                     + (f"  ({c.basis})" if c.basis else ""))
    lines += ["", "measured:"]
    for k, val in verdict.measured.items():
        lines.append(f"  {k}: {_fmt(val)}")
    return "\n".join(lines) + "\n"


def write_outputs(result: ScenarioResult, cfg: ScenarioConfig, out_dir) -> list:
    """Write every data product of ``result``; returns the manifest (file names)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    written = []

    def text(name, content):
        path = out / name
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(content)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
        written.append(name)

    text("summary.txt", format_verdict(result.verdict))
    text("config.resolved.ini", format_config(cfg))
    for name, table in result.tables.items():
        path = out / name
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(table.columns)
                for row in table.rows:
                    w.writerow([_cell(v) for v in row])
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
        written.append(name)
    for name, image in result.images.items():
        write_pgm_p2(out / name, image)
        written.append(name)
    for name, frame in result.frames.items():
        write_pgm_p5(out / name, frame)
        written.append(name)
    text("manifest.txt", "".join(f"{n}\n" for n in written))
    return written


def run(request: RunRequest) -> RunSummary:
    """Resolve the config, run the scenario and write its outputs."""
    t0 = time.perf_counter()
    cfg = resolve_config(request)
    result = run_scenario(cfg, request.workers)
    out = request.out_dir if request.out_dir is not None else f"ghostsim-{cfg.scenario}"
    manifest = write_outputs(result, cfg, out)
    return RunSummary(cfg, result.verdict, manifest, time.perf_counter() - t0)


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ghostsim", description="Ghost-imaging simulations with pseudo-thermal light.")
    p.add_argument("--scenario", choices=SCENARIOS, help="scenario to run (or set 'scenario =' in the config)")
    p.add_argument("--config", help="config file; unset keys take the scenario defaults")
    p.add_argument("--out", help="output directory (default: ./ghostsim-<scenario>)")
    p.add_argument("--seed", type=_seed, help="override ensemble.master_seed")
    # n >= 1 passes argument parsing; n < 2 is rejected later as insufficient data.
    p.add_argument("--realizations", type=int, help="override ensemble.n_realizations")
    p.add_argument("--workers", type=_positive, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    request = RunRequest(args.scenario, args.config, args.out, args.seed, args.realizations, args.workers)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                summary = run(request)
            finally:
                for msg in dict.fromkeys(str(w.message) for w in caught):
                    print(f"ghostsim: warning: {msg}", file=sys.stderr)
    except (GhostSimError, OSError) as exc:
        print(f"ghostsim: error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(format_verdict(summary.verdict))
    print(f"\nfiles: {len(summary.manifest)} written to {request.out_dir or 'ghostsim-' + summary.config.scenario}")
    print(f"runtime: {summary.runtime:.1f} s with {request.workers} worker(s); ghostsim {summary.version}")
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
