"""Command line: ``bubbletree run|validate|gen``."""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bubble_tree import (TreeConfig, build_tree, dumps, mass_accounting, thick_thin, thick_thin_document,
                          tree_document)
from .concentration import DetectionConfig
from .errors import BubbleTreeError, ConfigError, GeometryError, SequenceFormatError
from .families import FAMILIES, FamilySpec, generate
from .grid_metric.types import CHART_KINDS, DomainChart
from .io import Scenario, load_scenario, read_btseq, write_btseq
from .renormalize import BlowupConfig

logger = logging.getLogger("bubbletree")

EXIT_OK, EXIT_CONFIG, EXIT_ANALYSIS = 0, 2, 3
THREADS_ENV = "BUBBLETREE_THREADS"


class _WarningLog(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(record.getMessage())


def thread_cap() -> int | None:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError as err:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer") from err
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer")
    return n


def tree_config(sc: Scenario) -> TreeConfig:
    a = sc.analysis
    det = DetectionConfig(tail_window=a.tail_window, eta=a.eta, merge_radius=a.merge_radius, min_area=a.min_area,
                          r0=a.r0, levels=a.levels, eps0=a.eps0)
    blow = BlowupConfig(filter_eps=a.filter_eps, eps0=a.eps0, r2=a.r2, min_r2=a.min_r2, tail_window=a.tail_window)
    return TreeConfig(det, blow, a.max_depth, a.vanish_threshold, mass_tol=a.mass_tol,
                      efficiency_tol=a.efficiency_tol)


def _csv_real(x: float) -> str:
    return format(float(x), ".17g") if np.isfinite(x) else "nan"


def profiles_csv(tree) -> str:
    lines = ["n,r,center_x,center_y,area,energy,circle_length"]
    for _, prof in tree.profiles:
        for n, r, cx, cy, a, e, L in prof.rows():
            lines.append(",".join([str(n)] + [_csv_real(v) for v in (r, cx, cy, a, e, L)]))
    return "\n".join(lines) + "\n"


def load_sequence(sc: Scenario):
    if sc.sequence_file is not None:
        seq = read_btseq(sc.sequence_file)
        if seq.chart != sc.chart:
            raise ConfigError("saved sequence chart differs from the [domain] section")
        return seq
    return generate(sc.family)


@dataclass
class RunOutput:
    """Everything one scenario run produces; ``texts`` holds the artifact bodies."""

    texts: dict[str, str]
    timings: dict[str, float]
    warnings: list[str]
    tree: object = field(repr=False)
    sequence: object = field(repr=False)
    accounting: dict = field(repr=False)
    decomposition: object = field(repr=False)


def analyse(sc: Scenario) -> RunOutput:
    """Run the pipeline and render every artifact except run.json."""
    timings = {}
    t0 = time.perf_counter()
    seq = load_sequence(sc)
    timings["sequence"] = time.perf_counter() - t0
    cfg = tree_config(sc)
    t0 = time.perf_counter()
    tree = build_tree(seq, cfg)
    timings["tree"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    report = mass_accounting(tree, seq, sc.analysis.mass_tol)
    timings["accounting"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    tt = thick_thin(tree, seq, sc.analysis.thin_eps)
    timings["thick_thin"] = time.perf_counter() - t0
    texts = {
        "tree.json": dumps(tree_document(tree)),
        "thick_thin.json": dumps(thick_thin_document(tree, tt)),
        "profiles.csv": profiles_csv(tree),
        "accounting.json": dumps(report),
    }
    warns = list(tree.warnings)
    for key in ("area_identity", "energy_inequality", "conservation"):
        if not report[key]["pass"]:
            warns.append(f"mass-accounting: {key} residual {report[key]['residual']:.6g} exceeds mass_tol")
    return RunOutput(texts, timings, warns, tree, seq, report, tt)


def run_scenario(path, out_dir=None) -> int:
    started = time.perf_counter()
    try:
        sc = load_scenario(path)
        cap = thread_cap()
    except (ConfigError, GeometryError) as err:
        print(f"config error [{getattr(err, 'invariant', 'config')}]: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir) if out_dir is not None else sc.output_dir
    log = _WarningLog()
    root_logger = logging.getLogger("bubbletree")
    root_logger.addHandler(log)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cap):
            result = analyse(sc)
    except (ConfigError, SequenceFormatError) as err:
        print(f"config error [{err.invariant}]: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as err:
        # geometry failures here come from the scenario's chart or family
        print(f"config error [{err.invariant}]: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except BubbleTreeError as err:
        print(f"analysis failed [{err.invariant}]: {err}", file=sys.stderr)
        return EXIT_ANALYSIS
    finally:
        root_logger.removeHandler(log)
    wanted = [a for a in sc.artifacts if a != "run.json"]
    texts = result.texts
    checksums = {name: hashlib.sha256(texts[name].encode()).hexdigest() for name in wanted}
    warnings = sorted(set(result.warnings + log.messages))
    record = {
        "scenario_sha256": hashlib.sha256(sc.source_text.encode()).hexdigest(),
        "tool_version": __version__,
        "wall_time": time.perf_counter() - started,
        "timings": result.timings,
        "warnings": warnings,
        "artifacts": checksums,
    }
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    try:
        for name in wanted:
            (staging / name).write_text(texts[name])
        if "run.json" in sc.artifacts:
            (staging / "run.json").write_text(dumps(record))
        for f in staging.iterdir():
            os.replace(f, out / f.name)
    except OSError as err:
        print(f"cannot write artifacts: {err}", file=sys.stderr)
        return EXIT_ANALYSIS
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return EXIT_OK


def validate_scenario(path) -> int:
    try:
        sc = load_scenario(path)
        if sc.sequence_file is not None and not sc.sequence_file.exists():
            raise ConfigError(f"sequence file {sc.sequence_file} does not exist")
    except (ConfigError, GeometryError) as err:
        print(f"config error [{getattr(err, 'invariant', 'config')}]: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def _csv(text, conv):
    return tuple(conv(t) for t in text.split(",") if t.strip())


def gen_sequence(args) -> int:
    try:
        chart = DomainChart(args.kind, _csv(args.center, float), args.outer_radius, args.inner_radius, args.grid_n)
        spec = FamilySpec(args.family, _csv(args.n, int), beta=args.beta, roots=_csv(args.roots, float),
                          offset_exp=args.offset_exp, seed=args.seed, chart=chart, normalized=not args.raw,
                          amplitude=args.amplitude, concentrate=args.concentrate)
        seq = generate(spec)
    except (ConfigError, GeometryError, ValueError) as err:
        print(f"config error [{getattr(err, 'invariant', 'config')}]: {err}", file=sys.stderr)
        return EXIT_CONFIG
    text = write_btseq(seq)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bubbletree", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write its artifacts")
    r.add_argument("scenario")
    r.add_argument("-o", "--out", help="override the [output] directory")
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario")
    g = sub.add_parser("gen", help="write a family as a BTSEQ file")
    g.add_argument("family", choices=FAMILIES)
    g.add_argument("--n", default="10,100,1000", help="comma-separated n values")
    g.add_argument("--kind", default="disk", choices=CHART_KINDS)
    g.add_argument("--center", default="0,0")
    g.add_argument("--outer-radius", type=float, default=2.0)
    g.add_argument("--inner-radius", type=float, default=0.0)
    g.add_argument("--grid-n", type=int, default=256)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--roots", default="1,2")
    g.add_argument("--offset-exp", type=float, default=0.33)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--amplitude", type=float, default=1.0)
    g.add_argument("--concentrate", action="store_true")
    g.add_argument("--raw", action="store_true", help="example1 without the factor 4")
    g.add_argument("-o", "--output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return run_scenario(args.scenario, args.out)
    if args.command == "validate":
        return validate_scenario(args.scenario)
    return gen_sequence(args)


if __name__ == "__main__":
    sys.exit(main())
