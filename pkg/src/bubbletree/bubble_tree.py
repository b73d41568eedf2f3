"""Recursive bubble-tree construction, mass accounting and thick/thin split."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .concentration import (BubbleCandidate, ConcentrationProfile, DetectionConfig, bubble_count_bound,
                            detect_bubbles, sequence_totals)
from .errors import BubbleTreeError, ConfigError, NoConcentration, ThinViolation
from .grid_metric.operators import functionals
from .grid_metric.types import MetricSequence
from .renormalize import BlowupConfig, BlowupResult, _lengths, blowup

logger = logging.getLogger(__name__)

FOUR_PI_SQ = 4.0 * np.pi**2
VERTEX_KINDS = ("base", "bubble", "ghost")
CHART_NOTES = ("domain", "sphere_minus_infty")


class GhostLawViolated(BubbleTreeError):
    invariant = "non-root-ghost-has->=2-edges"


class TreeInvariantViolated(BubbleTreeError):
    invariant = "tree-structure"


@dataclass(frozen=True)
class TreeConfig:
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    blowup: BlowupConfig = field(default_factory=BlowupConfig)
    max_depth: int = 4
    vanish_threshold: float = -8.0
    vanish_slope: float = -0.5
    mass_tol: float = 0.05
    efficiency_tol: float = 0.05 * 4.0 * np.pi

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError("max_depth must be at least 1")

    @property
    def edge_floor(self) -> float:
        return FOUR_PI_SQ * (1.0 - self.detection.eta) ** 2


@dataclass
class BubbleVertex:
    id: int
    kind: str
    vanished: bool
    area: float
    energy: float
    chart: str = "domain"
    depth: int = 0
    truncated: bool = False


@dataclass
class BubbleEdge:
    parent: int
    child: int
    point: tuple[float, float]
    area_mass: float
    energy_mass: float
    area_loss: float
    efficient: bool


@dataclass
class BubbleTree:
    vertices: list[BubbleVertex]
    edges: list[BubbleEdge]
    root: int
    totals: tuple[float, float]
    warnings: list[str] = field(default_factory=list)
    # analysis by-products kept in memory only (not serialized)
    blowups: dict = field(default_factory=dict, repr=False, compare=False)
    profiles: list = field(default_factory=list, repr=False, compare=False)
    vertex_sequences: dict = field(default_factory=dict, repr=False, compare=False)

    def children(self, vid: int) -> list[BubbleEdge]:
        return [e for e in self.edges if e.parent == vid]

    def vertex(self, vid: int) -> BubbleVertex:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def valence(self, vid: int) -> int:
        return sum(1 for e in self.edges if vid in (e.parent, e.child))


@dataclass
class ThickThinDecomposition:
    thick: list[dict]
    thin: list[dict]
    eps: float

    @property
    def n_thick(self) -> int:
        return len(self.thick)

    @property
    def n_thin(self) -> int:
        return len(self.thin)


# ------------------------------------------------------------------ build

def _outside_mask(seq: MetricSequence, frame_index: int, bubbles: list[BubbleCandidate]):
    chart = seq.chart
    X, Y = chart.mesh()
    mask = chart.contains(X, Y)
    for b in bubbles:
        c = b.profile.frame_centers[frame_index]
        mask &= np.hypot(X - c[0], Y - c[1]) > b.profile.star_radius
    return mask


def _sup_outside(seq: MetricSequence, frame_index: int, bubbles) -> float:
    g = seq.frames[frame_index]
    if g.vanished:
        return -np.inf
    mask = _outside_mask(seq, frame_index, bubbles)
    return float(np.max(g.phi[mask])) if mask.any() else -np.inf


def vanishing(seq: MetricSequence, bubbles, window: int, threshold: float, slope: float) -> tuple[bool, float, float]:
    """Whether the metric away from the bubbles tends to zero along the tail.

    Returns (vanished, last sup of phi, fitted slope of sup phi against ln n).
    """
    W = max(2, min(window, len(seq)))
    idx = list(range(len(seq) - W, len(seq)))
    sups = np.array([_sup_outside(seq, i, bubbles) for i in idx])
    last = float(sups[-1])
    if not np.all(np.isfinite(sups)):
        return True, last, -np.inf
    logn = np.log(np.array([seq.labels[i] for i in idx], dtype=float))
    fit = float(np.polyfit(logn, sups, 1)[0])
    return bool(last < threshold or fit <= slope), last, fit


def _limit_summary(seq: MetricSequence, bubbles) -> tuple[float, float]:
    """Last-frame area and energy outside the bubble disks."""
    g = seq.frames[-1]
    if g.vanished:
        return 0.0, 0.0
    area, energy = functionals(g, seq.chart)
    for b in bubbles:
        area -= float(b.profile.area_at[-1, b.profile.star_index])
        energy -= float(b.profile.energy_at[-1, b.profile.star_index])
    return max(area, 0.0), max(energy, 0.0)


def build_tree(seq: MetricSequence, cfg: TreeConfig | None = None) -> BubbleTree:
    """Detect, blow up and recurse until no bubbles remain or the budget runs out."""
    cfg = cfg or TreeConfig()
    C1, C2 = sequence_totals(seq)
    tree = BubbleTree([], [], 0, (C1, C2))
    budget = [C1 * C2]

    def visit(s: MetricSequence, depth: int, chart_note: str, totals) -> int:
        vid = len(tree.vertices)
        vertex = BubbleVertex(vid, "base", False, 0.0, 0.0, chart_note, depth)
        tree.vertices.append(vertex)
        tree.vertex_sequences[vid] = s
        bubbles = detect_bubbles(s, cfg.detection, totals=totals)
        for b in bubbles:
            tree.profiles.append((vid, b.profile))
        vanished, sup_last, fit = vanishing(s, bubbles, cfg.detection.tail_window, cfg.vanish_threshold,
                                           cfg.vanish_slope)
        area, energy = _limit_summary(s, bubbles)
        vertex.vanished = vanished
        vertex.kind = "ghost" if vanished else ("base" if depth == 0 else "bubble")
        vertex.area, vertex.energy = (0.0, 0.0) if vanished else (area, energy)
        if not bubbles:
            return vid
        if depth >= cfg.max_depth:
            vertex.truncated = True
            msg = f"depth<=max_depth: vertex {vid} truncated with {len(bubbles)} unexpanded bubbles"
            logger.warning(msg)
            tree.warnings.append(msg)
            return vid
        for b in bubbles:
            if budget[0] < cfg.edge_floor * (1 - 1e-9):
                msg = f"bubble-budget: product budget exhausted at vertex {vid}"
                logger.warning(msg)
                tree.warnings.append(msg)
                break
            try:
                res = blowup(s, b, cfg.blowup)
            except NoConcentration as err:
                msg = f"neck-exists: bubble at {b.center} of vertex {vid} has no neck ({err})"
                logger.warning(msg)
                tree.warnings.append(msg)
                continue
            budget[0] -= cfg.edge_floor
            child_totals = sequence_totals(res.child)
            cid = visit(res.child, depth + 1, "sphere_minus_infty", child_totals)
            edge = BubbleEdge(vid, cid, (float(b.center[0]), float(b.center[1])), float(b.area_conc),
                              float(b.energy_conc), float(res.area_loss),
                              bool(res.area_loss <= cfg.efficiency_tol))
            tree.blowups[len(tree.edges)] = res
            tree.edges.append(edge)
        return vid

    visit(seq, 0, "domain", (C1, C2))
    # children are appended depth-first; order edges by child id for stable output
    order = sorted(range(len(tree.edges)), key=lambda k: tree.edges[k].child)
    tree.blowups = {new: tree.blowups[old] for new, old in enumerate(order)}
    tree.edges = [tree.edges[k] for k in order]
    check_tree(tree, cfg)
    return tree


def check_tree(tree: BubbleTree, cfg: TreeConfig | None = None, tol: float = 0.05) -> None:
    """Hard structural checks: tree shape, ghost law, edge law and mass bounds."""
    cfg = cfg or TreeConfig()
    ids = {v.id for v in tree.vertices}
    if tree.root not in ids:
        raise TreeInvariantViolated("root is not a vertex")
    if len(tree.edges) != len(tree.vertices) - 1:
        raise TreeInvariantViolated("edge count must be vertex count minus one")
    parents = {}
    for e in tree.edges:
        if e.child in parents or e.child == tree.root or e.parent not in ids or e.child not in ids:
            raise TreeInvariantViolated(f"edge {e.parent}->{e.child} breaks the tree shape")
        parents[e.child] = e.parent
    for vid in ids:
        seen, cur = set(), vid
        while cur != tree.root:
            if cur in seen or cur not in parents:
                raise TreeInvariantViolated(f"vertex {vid} is not connected to the root")
            seen.add(cur)
            cur = parents[cur]
    if tree.vertex(tree.root).kind not in ("base", "ghost"):
        raise TreeInvariantViolated("root must be a base or ghost vertex")
    for v in tree.vertices:
        if (v.kind == "ghost") != v.vanished:
            raise TreeInvariantViolated(f"vertex {v.id}: ghost kind and vanished flag disagree")
        if v.kind == "ghost" and v.id != tree.root and len(tree.children(v.id)) < 2 and not v.truncated:
            raise GhostLawViolated(f"ghost vertex {v.id} has {len(tree.children(v.id))} edges")
    for e in tree.edges:
        if e.area_mass * e.energy_mass < cfg.edge_floor * (1 - 1e-9):
            raise TreeInvariantViolated(f"edge {e.parent}->{e.child}: a*e below 4 pi^2 (1-eta)^2")
    C1, C2 = tree.totals
    top = tree.children(tree.root)
    if sum(e.area_mass for e in top) > C1 * (1 + tol) or sum(e.energy_mass for e in top) > C2 * (1 + tol):
        raise TreeInvariantViolated("edge masses exceed the sequence totals")
    if len(tree.edges) > bubble_count_bound(C1, C2) * max(1, len(tree.vertices)):
        raise TreeInvariantViolated("more edges than the count bound allows")
    odd = sum(1 for v in tree.vertices if tree.valence(v.id) != 2)
    if odd > np.sqrt(C1 * C2) + 1:
        raise TreeInvariantViolated("too many vertices of valence other than 2")


# ------------------------------------------------------------- accounting

def mass_accounting(tree: BubbleTree, seq: MetricSequence, mass_tol: float = 0.05) -> dict:
    """Area identity and energy inequality for the root, with residuals."""
    g = seq.frames[-1]
    total_area, total_energy = (0.0, 0.0) if g.vanished else functionals(g, seq.chart)
    root = tree.vertex(tree.root)
    top = tree.children(tree.root)
    sum_a = sum(e.area_mass for e in top)
    sum_e = sum(e.energy_mass for e in top)
    scale_a = max(total_area, 1e-300)
    scale_e = max(total_energy, 1e-300)
    area_res = (total_area - root.area - sum_a) / scale_a if total_area > 0 else 0.0
    energy_gap = (total_energy - root.energy - sum_e) / scale_e if total_energy > 0 else 0.0
    vertex_area = sum(v.area for v in tree.vertices)
    loss = sum(e.area_loss for e in tree.edges)
    cons_res = (total_area - vertex_area - loss) / scale_a if total_area > 0 else 0.0
    return {
        "total_area": total_area,
        "total_energy": total_energy,
        "root_area": root.area,
        "root_energy": root.energy,
        "edges": [{"parent": e.parent, "child": e.child, "area_mass": e.area_mass, "energy_mass": e.energy_mass,
                   "area_loss": e.area_loss} for e in tree.edges],
        "area_identity": {"residual": area_res, "pass": bool(abs(area_res) <= mass_tol)},
        "energy_inequality": {"residual": energy_gap, "pass": bool(energy_gap >= -mass_tol)},
        "conservation": {"residual": cons_res, "pass": bool(abs(cons_res) <= mass_tol)},
        "mass_tol": mass_tol,
    }


# -------------------------------------------------------------- thick/thin

def neck_max_length(res: BlowupResult, window: int = 3, per_octave: int = 64) -> float:
    """Largest circle length over the neck annulus delta*r2 <= r <= r1 in the tail frames."""
    rec = res.recentered
    r1 = res.neck.r1
    W = min(window, len(res.labels))
    best = 0.0
    by_label = dict(zip(rec.labels, rec.frames))
    for lab, d in list(zip(res.labels, res.neck.delta))[-W:]:
        inner = d * res.neck.r2
        if inner >= r1:
            continue
        octaves = np.log2(r1 / inner)
        rs = r1 * 2.0 ** -np.linspace(0.0, octaves, max(2, int(np.ceil(octaves * per_octave)) + 1))
        best = max(best, float(np.max(_lengths(by_label[lab], (0.0, 0.0), rs))))
    return best


def thick_thin(tree: BubbleTree, seq: MetricSequence, eps: float) -> ThickThinDecomposition:
    """One thick piece per vertex and one thin neck per edge."""
    if tree.edges and not tree.blowups:
        raise ConfigError("thick/thin needs a tree built in this session (necks are not serialized)")
    thick = [{"component": k, "vertex": v.id, "description": f"{v.kind} vertex at depth {v.depth}"}
             for k, v in enumerate(tree.vertices)]
    thin = []
    for k, e in enumerate(tree.edges):
        res = tree.blowups[k]
        if eps < res.neck.filter_eps:
            raise ConfigError("thick/thin eps must be at least the blow-up filter")
        L = neck_max_length(res)
        if not L < eps:
            raise ThinViolation(f"neck of edge {k} has circle length {L:.6g} >= {eps:g}")
        thin.append({"edge": k, "parent": e.parent, "child": e.child, "r1": res.neck.r1,
                     "inner": res.neck.delta[-1] * res.neck.r2, "max_circle_length": L})
    if len(thick) != len(thin) + 1:
        raise TreeInvariantViolated("a tree decomposition has one more thick piece than thin pieces")
    return ThickThinDecomposition(thick, thin, float(eps))


# ---------------------------------------------------------- serialization

def fmt_real(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError("cannot serialize a non-finite real")
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _emit(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_real(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{json.dumps(str(k))}: {_emit(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_emit(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _emit(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text with reals at 17 significant digits."""
    return _emit(obj) + "\n"


def tree_document(tree: BubbleTree) -> dict:
    return {
        "totals": {"C1": float(tree.totals[0]), "C2": float(tree.totals[1])},
        "root": tree.root,
        "vertices": [{"id": v.id, "kind": v.kind, "vanished": v.vanished, "area": float(v.area),
                      "energy": float(v.energy), "chart": v.chart} for v in tree.vertices],
        "edges": [{"parent": e.parent, "child": e.child, "point": [float(e.point[0]), float(e.point[1])],
                   "area_mass": float(e.area_mass), "energy_mass": float(e.energy_mass),
                   "area_loss": float(e.area_loss), "efficient": e.efficient} for e in tree.edges],
    }


def serialize(tree: BubbleTree) -> str:
    return dumps(tree_document(tree))


def parse(text: str) -> BubbleTree:
    doc = json.loads(text)
    try:
        vertices = [BubbleVertex(int(v["id"]), str(v["kind"]), bool(v["vanished"]), float(v["area"]),
                                 float(v["energy"]), str(v["chart"])) for v in doc["vertices"]]
        edges = [BubbleEdge(int(e["parent"]), int(e["child"]), (float(e["point"][0]), float(e["point"][1])),
                            float(e["area_mass"]), float(e["energy_mass"]), float(e["area_loss"]),
                            bool(e["efficient"])) for e in doc["edges"]]
        totals = (float(doc["totals"]["C1"]), float(doc["totals"]["C2"]))
        root = int(doc["root"])
    except (KeyError, TypeError, IndexError) as err:
        raise ConfigError(f"malformed tree document: {err}") from err
    for v in vertices:
        if v.kind not in VERTEX_KINDS or v.chart not in CHART_NOTES:
            raise ConfigError(f"vertex {v.id}: bad kind or chart")
    return BubbleTree(vertices, edges, root, totals)


def thick_thin_document(tree: BubbleTree, tt: ThickThinDecomposition) -> dict:
    doc = tree_document(tree)
    doc["eps"] = tt.eps
    doc["N_thick"] = tt.n_thick
    doc["N_thin"] = tt.n_thin
    doc["thick"] = [{"component": t["component"], "vertex": t["vertex"]} for t in tt.thick]
    doc["thin"] = [{"edge": t["edge"], "max_circle_length": float(t["max_circle_length"])} for t in tt.thin]
    return doc


def same_tree(a: BubbleTree, b: BubbleTree) -> bool:
    """Equality of everything the tree document records."""
    return tree_document(a) == tree_document(b)
