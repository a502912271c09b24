"""Rooted-tree data model, spec-file parsing and the return-probability transform.

Vertex ids are opaque strings; internally every vertex is a dense integer
index so the simulation loops stay array-indexed.  Each non-root vertex
identifies its parent edge, which is how directed conductances and crossing
counts are stored throughout the package.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateTransform,
    DomainError,
    ParseError,
    SingularSystem,
    ValidationError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RootedTree:
    """Finite rooted tree with directed conductances and a killing measure.

    Immutable after construction; safe to share across concurrent replicas.
    ``cond_down[c]`` is the conductance parent->child of the edge above
    vertex ``c``, ``cond_up[c]`` the conductance child->parent, and
    ``cstar[c]`` their geometric mean (symmetric by construction).
    """

    ids: tuple[str, ...]
    root: int
    parent: np.ndarray
    children: tuple[tuple[int, ...], ...]
    cond_down: np.ndarray
    cond_up: np.ndarray
    killing: np.ndarray
    cstar: np.ndarray = field(init=False)
    neighbors: tuple[tuple[int, ...], ...] = field(init=False)
    index: dict = field(init=False)

    def __post_init__(self):
        cstar = np.sqrt(self.cond_down * self.cond_up)
        nbrs = tuple(
            tuple(([] if v == self.root else [int(self.parent[v])]) + list(self.children[v]))
            for v in range(len(self.ids))
        )
        object.__setattr__(self, "cstar", cstar)
        object.__setattr__(self, "neighbors", nbrs)
        object.__setattr__(self, "index", {vid: i for i, vid in enumerate(self.ids)})
        for arr in (self.parent, self.cond_down, self.cond_up, self.killing, self.cstar):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.ids)

    @property
    def symmetric(self) -> bool:
        return bool(np.all(self.cond_down == self.cond_up))

    def conductance(self, x: int, y: int) -> float:
        """Directed conductance C_{x -> y} for adjacent x, y."""
        if self.parent[y] == x:
            return float(self.cond_down[y])
        if self.parent[x] == y:
            return float(self.cond_up[x])
        raise DomainError(f"{self.ids[x]} and {self.ids[y]} are not adjacent")

    def cstar_edge(self, x: int, y: int) -> float:
        c = y if self.parent[y] == x else x
        return float(self.cstar[c])

    def total_rate(self, x: int) -> float:
        """k_x plus the sum of outgoing conductances at x."""
        out = self.killing[x]
        if x != self.root:
            out += self.cond_up[x]
        out += sum(self.cond_down[c] for c in self.children[x])
        return float(out)

    def depth_order(self) -> list[int]:
        """Vertices in root-first order (every parent before its children)."""
        order = [self.root]
        for v in order:
            order.extend(self.children[v])
        return order

    def edge_children(self) -> list[int]:
        """Child vertex of every edge, i.e. all non-root vertices."""
        return [v for v in range(self.n_vertices) if v != self.root]

    def path_from_root(self, i: int) -> list[int]:
        """Vertices on the unique path root -> i, inclusive."""
        chain = []
        v = i
        while v != self.root:
            chain.append(v)
            v = int(self.parent[v])
        chain.append(self.root)
        return chain[::-1]


def build_tree(root_id: str, edges, killing=None) -> RootedTree:
    """Assemble a tree from ``(parent_id, child_id, c_down, c_up)`` records.

    ``killing`` maps vertex id to a nonnegative rate; missing entries are 0.
    """
    killing = dict(killing or {})
    ids = [root_id]
    seen = {root_id}
    parent_of = {}
    cond = {}
    for rec in edges:
        p, c, down, up = rec
        if c in seen:
            raise ValidationError(f"vertex {c!r} has two parents or duplicates the root")
        if p not in seen:
            raise ValidationError(f"edge parent {p!r} appears before being attached")
        seen.add(c)
        ids.append(c)
        parent_of[c] = p
        cond[c] = (float(down), float(up))
    ids_sorted = [root_id] + sorted(i for i in ids if i != root_id)
    index = {vid: i for i, vid in enumerate(ids_sorted)}
    n = len(ids_sorted)
    parent = np.full(n, -1, dtype=np.int64)
    cond_down = np.zeros(n)
    cond_up = np.zeros(n)
    kill = np.zeros(n)
    children = [[] for _ in range(n)]
    for c, p in parent_of.items():
        ci, pi = index[c], index[p]
        parent[ci] = pi
        children[pi].append(ci)
        cond_down[ci], cond_up[ci] = cond[c]
    for vid, k in killing.items():
        if vid not in index:
            raise ValidationError(f"killing entry for unknown vertex {vid!r}")
        kill[index[vid]] = float(k)
    tree = RootedTree(
        ids=tuple(ids_sorted),
        root=index[root_id],
        parent=parent,
        children=tuple(tuple(sorted(ch)) for ch in children),
        cond_down=cond_down,
        cond_up=cond_up,
        killing=kill,
    )
    _validate(tree)
    return tree


def _validate(tree: RootedTree) -> None:
    n = tree.n_vertices
    if n == 0:
        raise ValidationError("empty tree")
    reached = set(tree.depth_order())
    if len(reached) != n:
        missing = sorted(set(tree.ids) - {tree.ids[v] for v in reached})
        raise ValidationError(f"vertices {missing} unreachable from the root")
    for v in range(n):
        if v == tree.root:
            continue
        if tree.cond_down[v] <= 0 or tree.cond_up[v] <= 0:
            raise ValidationError(
                f"edge {tree.ids[int(tree.parent[v])]!r}-{tree.ids[v]!r} has nonpositive conductance"
            )
    if np.any(tree.killing < 0):
        bad = tree.ids[int(np.argmin(tree.killing))]
        raise ValidationError(f"vertex {bad!r} has negative killing")


# ---------------------------------------------------------------------------
# Tree-spec documents (JSON)


def parse_tree_spec(text: str) -> RootedTree:
    """Parse and validate a JSON tree-spec document.

    Top-level keys: ``root``, ``vertices`` (``{id, parent, killing}``) and
    ``edges`` (``{from, to, c_fwd, c_bwd}`` or symmetric ``{a, b, c}``).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    for key in ("root", "vertices", "edges"):
        if key not in doc:
            raise ParseError(f"missing top-level key {key!r}")
    root_id = doc["root"]
    if not isinstance(root_id, str):
        raise ParseError("root must be a vertex id string")

    records = {}
    killing = {}
    for rec in doc["vertices"]:
        if not isinstance(rec, dict) or "id" not in rec:
            raise ParseError(f"vertex record without id: {rec!r}")
        vid = rec["id"]
        if vid in records:
            raise ValidationError(f"duplicate vertex id {vid!r}")
        records[vid] = rec.get("parent")
        killing[vid] = float(rec.get("killing", 0.0))
    if root_id not in records:
        raise ValidationError(f"root {root_id!r} has no vertex record")
    if records[root_id] is not None:
        raise ValidationError(f"root {root_id!r} must not declare a parent")
    for vid, p in records.items():
        if vid == root_id:
            continue
        if p is None:
            raise ValidationError(f"vertex {vid!r} has no parent")
        if p not in records:
            raise ValidationError(f"vertex {vid!r} names unknown parent {p!r}")

    # cycle check: every parent chain must reach the root
    for vid in records:
        seen = set()
        v = vid
        while v != root_id:
            if v in seen:
                raise ValidationError(f"cycle through vertex {v!r}")
            seen.add(v)
            v = records[v]

    conductances = {}
    for rec in doc["edges"]:
        if not isinstance(rec, dict):
            raise ParseError(f"edge record must be an object: {rec!r}")
        if {"a", "b", "c"} <= rec.keys():
            u, v, fwd, bwd = rec["a"], rec["b"], float(rec["c"]), float(rec["c"])
        elif {"from", "to", "c_fwd", "c_bwd"} <= rec.keys():
            u, v, fwd, bwd = rec["from"], rec["to"], float(rec["c_fwd"]), float(rec["c_bwd"])
        else:
            raise ParseError(f"edge record with unknown shape: {rec!r}")
        for w in (u, v):
            if w not in records:
                raise ValidationError(f"edge references unknown vertex {w!r}")
        if records.get(v) == u:
            child, down, up = v, fwd, bwd
        elif records.get(u) == v:
            child, down, up = u, bwd, fwd
        else:
            raise ValidationError(f"edge {u!r}-{v!r} does not join a parent/child pair")
        if child in conductances:
            raise ValidationError(f"duplicate edge at vertex {child!r}")
        conductances[child] = (down, up)

    missing = [vid for vid in records if vid != root_id and vid not in conductances]
    if missing:
        raise ValidationError(f"edges missing for vertices {sorted(missing)}")

    ordered = []
    for vid in sorted(records):
        if vid == root_id:
            continue
        down, up = conductances[vid]
        ordered.append((records[vid], vid, down, up))
    # build_tree needs parents before children
    by_depth = sorted(ordered, key=lambda r: _depth(records, r[1], root_id))
    return build_tree(root_id, by_depth, killing)


def _depth(records: dict, vid: str, root_id: str) -> int:
    d = 0
    while vid != root_id:
        vid = records[vid]
        d += 1
    return d


def serialize_tree_spec(tree: RootedTree) -> str:
    """Canonical JSON document for a tree, stable-ordered by vertex id."""
    vertices = []
    for vid in sorted(tree.ids):
        v = tree.index[vid]
        rec = {"id": vid, "killing": float(tree.killing[v])}
        if v != tree.root:
            rec["parent"] = tree.ids[int(tree.parent[v])]
        vertices.append(rec)
    edges = []
    for c in sorted(tree.edge_children(), key=lambda c: tree.ids[c]):
        edges.append(
            {
                "from": tree.ids[int(tree.parent[c])],
                "to": tree.ids[c],
                "c_fwd": float(tree.cond_down[c]),
                "c_bwd": float(tree.cond_up[c]),
            }
        )
    doc = {"root": tree.ids[tree.root], "vertices": vertices, "edges": edges}
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Local-time fields


@dataclass(frozen=True)
class LocalTimeField:
    """Nonnegative seconds of local time per vertex."""

    tree: RootedTree
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.tree.n_vertices,):
            raise DomainError("field length does not match the tree")
        if np.any(vals < 0):
            raise DomainError("local-time field has negative entries")
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)

    def value_of(self, vid: str) -> float:
        return float(self.values[self.tree.index[vid]])

    def as_dict(self) -> dict:
        return {vid: float(self.values[i]) for i, vid in enumerate(self.tree.ids)}


def field_values(tree: RootedTree, lam) -> np.ndarray:
    """Accept a LocalTimeField, a mapping id -> value, or an array."""
    if isinstance(lam, LocalTimeField):
        if lam.tree is not tree and lam.tree.ids != tree.ids:
            raise DomainError("field belongs to a different tree")
        return lam.values
    if isinstance(lam, dict):
        vals = np.zeros(tree.n_vertices)
        for vid, v in lam.items():
            vals[tree.index[vid]] = float(v)
        return vals
    vals = np.asarray(lam, dtype=float)
    if vals.shape != (tree.n_vertices,):
        raise DomainError("field length does not match the tree")
    return vals


def field_in_domain(tree: RootedTree, lam, alpha: float) -> bool:
    """Membership in the admissible set of conditioning fields.

    Positive at the root always; for alpha = 0 the support must in addition
    be a connected subtree; for alpha > 0 every vertex must carry time.
    """
    vals = field_values(tree, lam)
    if vals[tree.root] <= 0.0:
        return False
    if alpha > 0.0:
        return bool(np.all(vals > 0.0))
    for v in range(tree.n_vertices):
        if vals[v] > 0.0 and v != tree.root and vals[int(tree.parent[v])] <= 0.0:
            return False
    return True


def require_field_in_domain(tree: RootedTree, lam, alpha: float) -> np.ndarray:
    vals = field_values(tree, lam)
    if not field_in_domain(tree, vals, alpha):
        raise DomainError("local-time field outside the admissible set")
    return vals


# ---------------------------------------------------------------------------
# Paths


@dataclass(frozen=True)
class PathRecord:
    """A right-continuous nearest-neighbour jump path with its lifetime."""

    tree: RootedTree
    start: int
    times: np.ndarray
    targets: np.ndarray
    lifetime: float
    killed: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        targets = np.asarray(self.targets, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "targets", targets)
        if len(times) != len(targets):
            raise DomainError("jump times and targets differ in length")
        if len(times) and (np.any(np.diff(times) <= 0) or times[0] <= 0):
            raise DomainError("jump times must be strictly increasing and positive")
        if math.isfinite(self.lifetime) and len(times) and self.lifetime < times[-1]:
            raise DomainError("lifetime precedes the last jump")
        cur = self.start
        for tgt in targets:
            if self.tree.parent[tgt] != cur and self.tree.parent[cur] != tgt:
                raise DomainError(
                    f"jump {self.tree.ids[cur]!r} -> {self.tree.ids[int(tgt)]!r} is not nearest-neighbour"
                )
            cur = int(tgt)
        times.setflags(write=False)
        targets.setflags(write=False)

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    @property
    def end(self) -> int:
        return int(self.targets[-1]) if len(self.targets) else self.start

    def holding_times(self) -> np.ndarray:
        """Durations of the constant segments, final one closed by the lifetime."""
        edges = np.concatenate(([0.0], self.times, [self.lifetime]))
        return np.diff(edges)

    def segment_vertices(self) -> np.ndarray:
        return np.concatenate(([self.start], self.targets)).astype(np.int64)

    def local_time(self) -> np.ndarray:
        """Occupation seconds per vertex up to the lifetime."""
        occ = np.zeros(self.tree.n_vertices)
        np.add.at(occ, self.segment_vertices(), self.holding_times())
        return occ

    def print_on(self, vertices) -> "PathRecord":
        """The path watched only while inside ``vertices`` (print/time change)."""
        keep = {int(v) for v in vertices}
        if self.start not in keep:
            raise DomainError("print requires the start vertex in the kept set")
        segs = self.segment_vertices()
        holds = self.holding_times()
        t = 0.0
        cur = self.start
        times, targets = [], []
        for v, h in zip(segs, holds):
            v = int(v)
            if v not in keep:
                continue
            if v != cur:
                times.append(t)
                targets.append(v)
                cur = v
            t += h
        return PathRecord(
            tree=self.tree,
            start=self.start,
            times=np.asarray(times),
            targets=np.asarray(targets),
            lifetime=t,
            killed=self.killed,
        )


# ---------------------------------------------------------------------------
# Return probability and the recurrent reduction


def hitting_probability(tree: RootedTree) -> np.ndarray:
    """P_x(hit the root before being killed), by leaf-to-root elimination.

    Solves the harmonic system (k_x + sum_y C_xy) h(x) = sum_y C_xy h(y)
    off the root with h(root) = 1.
    """
    n = tree.n_vertices
    slope = np.ones(n)
    order = tree.depth_order()
    for v in reversed(order):
        if v == tree.root:
            continue
        total = tree.killing[v] + tree.cond_up[v]
        acc = 0.0
        for c in tree.children[v]:
            total += tree.cond_down[c]
            acc += tree.cond_down[c] * slope[c]
        denom = total - acc
        if denom <= 0.0:
            raise SingularSystem(f"elimination failed at vertex {tree.ids[v]!r}")
        slope[v] = tree.cond_up[v] / denom
    h = np.ones(n)
    for v in order:
        if v != tree.root:
            h[v] = slope[v] * h[int(tree.parent[v])]
    return h


def h_transform(tree: RootedTree) -> RootedTree:
    """Recurrent tree of the chain conditioned to return to the root.

    Conductances become C_xy * h(y)/h(x) and the killing measure is dropped;
    the directed product C_xy C_yx (hence C*) is invariant.  Vertices with
    h = 0 cannot be visited by the conditioned chain and are pruned with a
    warning.
    """
    h = hitting_probability(tree)
    if h[tree.root] <= 0.0:
        raise DegenerateTransform("root return probability is zero")
    keep = h > 0.0
    if not np.all(keep):
        pruned = [tree.ids[v] for v in range(tree.n_vertices) if not keep[v]]
        logger.warning("pruning unreachable vertices %s in the return transform", pruned)
    edges = []
    for v in tree.depth_order():
        if v == tree.root or not keep[v]:
            continue
        p = int(tree.parent[v])
        if not keep[p]:
            continue
        down = tree.cond_down[v] * h[v] / h[p]
        up = tree.cond_up[v] * h[p] / h[v]
        edges.append((tree.ids[p], tree.ids[v], down, up))
    return build_tree(tree.ids[tree.root], edges)


def is_recurrent(tree: RootedTree) -> bool:
    """True when no vertex off the root carries killing."""
    mask = np.ones(tree.n_vertices, dtype=bool)
    mask[tree.root] = False
    return not np.any(tree.killing[mask] > 0)


def drop_root_killing(tree: RootedTree) -> RootedTree:
    """Identical tree with the root's killing zeroed (identity laws ignore it)."""
    if tree.killing[tree.root] == 0:
        return tree
    edges = [
        (tree.ids[int(tree.parent[v])], tree.ids[v], float(tree.cond_down[v]), float(tree.cond_up[v]))
        for v in tree.depth_order()
        if v != tree.root
    ]
    killing = {tree.ids[v]: float(tree.killing[v]) for v in range(tree.n_vertices) if v != tree.root}
    return build_tree(tree.ids[tree.root], edges, killing)


def ensure_recurrent(tree: RootedTree) -> RootedTree:
    """Apply the return transform when needed; identity commands call this."""
    work = drop_root_killing(tree)
    if is_recurrent(work):
        return work
    logger.info("transient tree: applying the return-probability transform")
    return h_transform(work)
