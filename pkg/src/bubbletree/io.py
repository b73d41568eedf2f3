"""Scenario files and the BTSEQ text format for saved metric sequences."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeometryError, SequenceFormatError
from .families import FAMILIES, FamilySpec
from .grid_metric.types import CHART_KINDS, DomainChart, MetricGrid, MetricSequence

BTSEQ_HEADER = "BTSEQ 1"
ARTIFACTS = ("tree.json", "thick_thin.json", "profiles.csv", "accounting.json", "run.json")

DOMAIN_KEYS = {"kind", "center", "outer_radius", "inner_radius", "grid_n"}
SEQUENCE_KEYS = {"family", "file", "n_values", "beta", "roots", "offset_exp", "seed", "normalized", "amplitude",
                 "concentrate"}
ANALYSIS_KEYS = {"filter_eps", "eps0", "eta", "tail_window", "max_depth", "mass_tol", "efficiency_tol",
                 "thick_thin_eps", "r0", "r2", "min_r2", "vanish_threshold", "merge_radius", "min_area",
                 "levels"}
OUTPUT_KEYS = {"directory", "artifacts"}
SECTIONS = {"domain": DOMAIN_KEYS, "sequence": SEQUENCE_KEYS, "analysis": ANALYSIS_KEYS, "output": OUTPUT_KEYS}


@dataclass(frozen=True)
class Analysis:
    filter_eps: float = 0.5
    eps0: float = 1.0
    eta: float = 0.25
    tail_window: int = 3
    max_depth: int = 4
    mass_tol: float = 0.05
    efficiency_tol: float = 0.05 * 4.0 * np.pi
    thick_thin_eps: float | None = None
    r0: float | None = None
    r2: float = 8.0
    min_r2: float = 2.0
    vanish_threshold: float = -8.0
    merge_radius: float | None = None
    min_area: float = 0.05 * 4.0 * np.pi
    levels: int = 16

    def __post_init__(self):
        if not self.filter_eps < self.eps0:
            raise ConfigError("filter_eps < eps0 is required (filter must sit below the no-bubble threshold)")
        if not self.filter_eps > 0:
            raise ConfigError("filter_eps must be positive")
        if not 0 < self.eta < 1:
            raise ConfigError("0 < eta < 1 is required")
        if self.tail_window < 2:
            raise ConfigError("tail_window >= 2 is required")
        if self.max_depth < 1:
            raise ConfigError("max_depth >= 1 is required")
        if self.thick_thin_eps is not None and self.thick_thin_eps < self.filter_eps:
            raise ConfigError("thick_thin_eps >= filter_eps is required")

    @property
    def thin_eps(self) -> float:
        return self.filter_eps if self.thick_thin_eps is None else self.thick_thin_eps


@dataclass(frozen=True)
class Scenario:
    chart: DomainChart
    family: FamilySpec | None
    sequence_file: Path | None
    analysis: Analysis
    output_dir: Path
    artifacts: tuple[str, ...] = ARTIFACTS
    source_text: str = field(default="", repr=False)


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())
    except ValueError as err:
        raise ConfigError(f"{key}: expected comma-separated reals") from err


def _real(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError as err:
        raise ConfigError(f"{key}: expected a real, got {text!r}") from err


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError as err:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from err


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _optional(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else text


def parse_chart(sec) -> DomainChart:
    kind = sec.get("kind", "disk").strip()
    if kind not in CHART_KINDS:
        raise ConfigError(f"domain.kind must be one of {CHART_KINDS}")
    center = _floats(sec.get("center", "0, 0"), "domain.center")
    if len(center) != 2:
        raise ConfigError("domain.center needs two coordinates")
    try:
        return DomainChart(kind, center, _real(sec.get("outer_radius", "1"), "domain.outer_radius"),
                           _real(sec.get("inner_radius", "0"), "domain.inner_radius"),
                           _int(sec.get("grid_n", "256"), "domain.grid_n"))
    except GeometryError as err:
        raise ConfigError(f"domain: {err}") from err


def parse_scenario_text(text: str, base: Path = Path(".")) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"unreadable scenario: {err}") from err
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - SECTIONS[name]
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    for name in ("domain", "sequence", "analysis"):
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")
    chart = parse_chart(cp["domain"])

    seq = cp["sequence"]
    family = None
    seq_file = None
    if "file" in seq:
        if "family" in seq:
            raise ConfigError("[sequence] takes either family or file, not both")
        seq_file = (base / seq["file"].strip()).resolve()
    else:
        fam = seq.get("family", "").strip()
        if fam not in FAMILIES:
            raise ConfigError(f"sequence.family must be one of {FAMILIES}")
        kw = {"family": fam, "chart": chart}
        if "n_values" in seq:
            kw["n_values"] = tuple(_int(t.strip(), "sequence.n_values") for t in seq["n_values"].split(",") if t.strip())
        for key in ("beta", "offset_exp", "amplitude"):
            if key in seq:
                kw[key] = _real(seq[key], f"sequence.{key}")
        if "roots" in seq:
            kw["roots"] = _floats(seq["roots"], "sequence.roots")
        if "seed" in seq:
            kw["seed"] = _int(seq["seed"], "sequence.seed")
        for key in ("normalized", "concentrate"):
            if key in seq:
                kw[key] = _bool(seq[key], f"sequence.{key}")
        family = FamilySpec(**kw)

    an = cp["analysis"]
    akw = {}
    types = {f.name: f.type for f in fields(Analysis)}
    for key, raw in an.items():
        t = types[key]
        val = _optional(raw)
        if val is None:
            akw[key] = None
        elif "int" in str(t):
            akw[key] = _int(val, f"analysis.{key}")
        else:
            akw[key] = _real(val, f"analysis.{key}")
    analysis = Analysis(**akw)

    out = cp["output"] if "output" in cp else {}
    directory = (base / out.get("directory", "out").strip()).resolve()
    artifacts = ARTIFACTS
    if "artifacts" in out:
        artifacts = tuple(a.strip() for a in out["artifacts"].split(",") if a.strip())
        bad = set(artifacts) - set(ARTIFACTS)
        if bad:
            raise ConfigError(f"unknown artifacts {sorted(bad)}")
    return Scenario(chart, family, seq_file, analysis, directory, artifacts, text)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read scenario {path}: {err}") from err
    return parse_scenario_text(text, path.parent)


# ------------------------------------------------------------------ BTSEQ

def _r(x: float) -> str:
    return format(float(x), ".17g")


def write_btseq(seq: MetricSequence, path=None) -> str:
    """Text form: header, chart line, then each frame's label and row-major samples."""
    ch = seq.chart
    lines = [BTSEQ_HEADER,
             f"chart {ch.kind} {_r(ch.center[0])} {_r(ch.center[1])} {_r(ch.outer_radius)} "
             f"{_r(ch.inner_radius)} {ch.grid_n}",
             f"frames {len(seq)}"]
    for n, g in zip(seq.labels, seq.frames):
        lines.append(f"frame {n}")
        if g.vanished:
            lines.append("VANISHED")
            continue
        for row in g.phi:
            lines.append(" ".join(_r(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_btseq(source) -> MetricSequence:
    if isinstance(source, (str, Path)) and not str(source).startswith(BTSEQ_HEADER):
        try:
            text = Path(source).read_text()
        except OSError as err:
            raise SequenceFormatError(f"cannot read {source}: {err}") from err
    else:
        text = str(source)
    lines = text.splitlines()
    if not lines or lines[0].strip() != BTSEQ_HEADER:
        raise SequenceFormatError("missing 'BTSEQ 1' header")
    try:
        tok = lines[1].split()
        if tok[0] != "chart" or len(tok) != 7:
            raise SequenceFormatError("second line must be 'chart kind cx cy outer inner grid_n'")
        chart = DomainChart(tok[1], (float(tok[2]), float(tok[3])), float(tok[4]), float(tok[5]), int(tok[6]))
        tok = lines[2].split()
        if tok[0] != "frames":
            raise SequenceFormatError("third line must be 'frames count'")
        count = int(tok[1])
        pos = 3
        frames, labels = [], []
        n = chart.grid_n
        for _ in range(count):
            tok = lines[pos].split()
            if tok[0] != "frame":
                raise SequenceFormatError(f"line {pos + 1}: expected 'frame label'")
            labels.append(int(tok[1]))
            pos += 1
            if lines[pos].strip() == "VANISHED":
                frames.append(MetricGrid.zero_metric(chart))
                pos += 1
                continue
            rows = [np.array(lines[pos + k].split(), dtype=float) for k in range(n)]
            if any(r.shape != (n,) for r in rows):
                raise SequenceFormatError(f"frame {labels[-1]}: each row needs {n} samples")
            frames.append(MetricGrid(chart, np.vstack(rows), note=f"btseq(n={labels[-1]})"))
            pos += n
        if any(line.strip() for line in lines[pos:]):
            raise SequenceFormatError("trailing content after the last frame")
        return MetricSequence(tuple(frames), tuple(labels))
    except SequenceFormatError:
        raise
    except (IndexError, ValueError) as err:
        raise SequenceFormatError(f"malformed BTSEQ content: {err}") from err
