"""Crossing-count networks: sampling, exact pmf, and live remaining-state bookkeeping.

A network assigns a nonnegative integer to every directed edge.  Because each
non-root vertex owns the edge to its parent, the two directions are stored as
``down[c]`` (parent -> c) and ``up[c]`` (c -> parent).  The checked counts add
``alpha - 1`` to the parent direction, which is how the intensity parameter
enters every jump-chain formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, NoCrossingLeft, TimeOverdraft, ValidationError
from .specfun import bessel_log_pmf, log_bessel_i, sample_bessel
from .trees import RootedTree, field_values, require_field_in_domain


@dataclass(frozen=True)
class CrossingNetwork:
    """Directed crossing counts on a tree; ``alpha`` only enters on demand."""

    tree: RootedTree
    down: np.ndarray
    up: np.ndarray

    def __post_init__(self):
        down = np.asarray(self.down, dtype=np.int64)
        up = np.asarray(self.up, dtype=np.int64)
        n = self.tree.n_vertices
        if down.shape != (n,) or up.shape != (n,):
            raise ValidationError("crossing arrays do not match the tree")
        if np.any(down < 0) or np.any(up < 0):
            raise ValidationError("negative crossing count")
        if down[self.tree.root] or up[self.tree.root]:
            raise ValidationError("root has no parent edge")
        object.__setattr__(self, "down", down)
        object.__setattr__(self, "up", up)
        down.setflags(write=False)
        up.setflags(write=False)

    def count(self, x: int, y: int) -> int:
        """n(x -> y) for adjacent x, y."""
        if self.tree.parent[y] == x:
            return int(self.down[y])
        if self.tree.parent[x] == y:
            return int(self.up[x])
        raise DomainError("not an edge")

    def degree(self, x: int) -> int:
        """n(x), total outgoing crossings at x."""
        total = int(self.up[x]) if x != self.tree.root else 0
        for c in self.tree.children[x]:
            total += int(self.down[c])
        return total

    def checked_degree(self, x: int, alpha: float) -> float:
        """n-checked(x): the parent direction carries the alpha - 1 offset."""
        d = self.degree(x)
        return d + (alpha - 1.0) if x != self.tree.root else float(d)

    def is_sourceless(self) -> bool:
        return bool(np.all(self.down == self.up))

    def source_endpoint(self) -> int:
        """The vertex i with sources (root, i); the root itself when sourceless.

        Raises ValidationError when the imbalance pattern is not a root path.
        """
        imbalance = self.up - self.down
        if np.any((imbalance != 0) & (imbalance != 1)):
            raise ValidationError("directed imbalance must be 0 or 1 toward the parent")
        marked = {int(v) for v in np.nonzero(imbalance == 1)[0]}
        if not marked:
            return self.tree.root
        deepest = max(marked, key=lambda v: len(self.tree.path_from_root(v)))
        chain = set(self.tree.path_from_root(deepest)) - {self.tree.root}
        if chain != marked:
            raise ValidationError("imbalanced edges do not form a root path")
        return deepest

    def total(self) -> int:
        return int(self.down.sum() + self.up.sum())

    def as_dict(self) -> dict:
        """Directed-edge -> count map keyed by ``"x->y"`` id pairs."""
        out = {}
        ids = self.tree.ids
        for c in self.tree.edge_children():
            p = int(self.tree.parent[c])
            out[f"{ids[p]}->{ids[c]}"] = int(self.down[c])
            out[f"{ids[c]}->{ids[p]}"] = int(self.up[c])
        return out


def network_from_counts(tree: RootedTree, counts: dict) -> CrossingNetwork:
    """Build a network from a ``"x->y" -> count`` mapping (missing edges are 0)."""
    down = np.zeros(tree.n_vertices, dtype=np.int64)
    up = np.zeros(tree.n_vertices, dtype=np.int64)
    for key, value in counts.items():
        a, b = key.split("->")
        x, y = tree.index[a], tree.index[b]
        if tree.parent[y] == x:
            down[y] = int(value)
        elif tree.parent[x] == y:
            up[x] = int(value)
        else:
            raise ValidationError(f"{key!r} is not a directed edge of the tree")
    return CrossingNetwork(tree, down, up)


def sample_alpha_network(
    tree: RootedTree,
    lam,
    alpha: float,
    rng: np.random.Generator,
    source=None,
) -> CrossingNetwork:
    """Draw the independent discrete-Bessel crossing counts given a field.

    ``source=None`` gives the sourceless law (all edges at order alpha - 1);
    naming a vertex i forces the unit imbalance along the root-to-i path and
    promotes those edges to order alpha.
    """
    if alpha < 0:
        raise DomainError(f"negative intensity {alpha}")
    vals = require_field_in_domain(tree, lam, alpha)
    if source is None:
        src = tree.root
    else:
        src = tree.index[source] if isinstance(source, str) else int(source)
        if vals[src] <= 0.0:
            raise DomainError("source endpoint must carry local time")
    on_path = np.zeros(tree.n_vertices, dtype=bool)
    for v in tree.path_from_root(src):
        if v != tree.root:
            on_path[v] = True
    down = np.zeros(tree.n_vertices, dtype=np.int64)
    up = np.zeros(tree.n_vertices, dtype=np.int64)
    for c in tree.edge_children():
        p = int(tree.parent[c])
        z = 2.0 * tree.cstar[c] * math.sqrt(vals[p] * vals[c])
        order = alpha if on_path[c] else alpha - 1.0
        draw = sample_bessel(order, z, rng)
        down[c] = draw
        up[c] = draw + (1 if on_path[c] else 0)
    return CrossingNetwork(tree, down, up)


def network_log_pmf(tree: RootedTree, lam, alpha: float, network: CrossingNetwork, source=None) -> float:
    """Exact log probability of a crossing network given a field.

    Product over vertices and directed edges with the path-ordered Bessel
    normalizers; networks with the wrong source pair or with crossings on
    zero-field edges get ``-inf``.
    """
    if alpha < 0:
        raise DomainError(f"negative intensity {alpha}")
    vals = require_field_in_domain(tree, lam, alpha)
    src = tree.root if source is None else (
        tree.index[source] if isinstance(source, str) else int(source)
    )
    try:
        endpoint = network.source_endpoint()
    except ValidationError:
        return -math.inf
    if endpoint != src:
        return -math.inf

    on_path = np.zeros(tree.n_vertices, dtype=bool)
    for v in tree.path_from_root(src):
        if v != tree.root:
            on_path[v] = True

    support = vals > 0.0
    log_sigma = 0.0
    for c in tree.edge_children():
        p = int(tree.parent[c])
        if not (support[c] and support[p]):
            # Dirac convention off the field support: only empty edges allowed
            if network.down[c] or network.up[c]:
                return -math.inf
            continue
        z = 2.0 * tree.cstar[c] * math.sqrt(vals[p] * vals[c])
        order = alpha if on_path[c] else alpha - 1.0
        log_sigma += log_bessel_i(order, z)

    total = -log_sigma + 0.5 * (math.log(vals[tree.root]) - math.log(vals[src]))
    for x in range(tree.n_vertices):
        if not support[x]:
            continue
        deg = sum(1 for c in tree.children[x] if support[c])
        if x != tree.root and support[int(tree.parent[x])]:
            deg += 1
        total += (network.degree(x) + 0.5 * (alpha - 1.0) * deg) * math.log(vals[x])
    for c in tree.edge_children():
        p = int(tree.parent[c])
        if not (support[c] and support[p]):
            continue
        log_cstar = math.log(tree.cstar[c])
        checked_down = float(network.down[c])
        checked_up = network.up[c] + alpha - 1.0
        for checked in (checked_down, checked_up):
            if checked + 1.0 <= 0.0:
                return -math.inf
            total += checked * log_cstar - math.lgamma(checked + 1.0)
    return total


def network_log_pmf_factorized(tree: RootedTree, lam, alpha: float, network: CrossingNetwork, source=None) -> float:
    """Same law as ``network_log_pmf`` via the per-edge Bessel factorization.

    Kept as an independent evaluation route for cross-checking.
    """
    vals = require_field_in_domain(tree, lam, alpha)
    src = tree.root if source is None else (
        tree.index[source] if isinstance(source, str) else int(source)
    )
    try:
        endpoint = network.source_endpoint()
    except ValidationError:
        return -math.inf
    if endpoint != src:
        return -math.inf
    on_path = np.zeros(tree.n_vertices, dtype=bool)
    for v in tree.path_from_root(src):
        if v != tree.root:
            on_path[v] = True
    total = 0.0
    for c in tree.edge_children():
        p = int(tree.parent[c])
        z = 2.0 * tree.cstar[c] * math.sqrt(vals[p] * vals[c])
        order = alpha if on_path[c] else alpha - 1.0
        total += bessel_log_pmf(order, z, int(network.down[c]))
        if total == -math.inf:
            return -math.inf
    return total


# ---------------------------------------------------------------------------
# Live bookkeeping shared by the inversion processes


@dataclass(frozen=True)
class RemainingState:
    """Remaining crossings and local time while running an inversion process."""

    theta: CrossingNetwork
    lambda_rem: np.ndarray
    current: int
    clock: float = 0.0

    def __post_init__(self):
        rem = np.asarray(self.lambda_rem, dtype=float)
        if np.any(rem < 0):
            raise ValidationError("negative remaining local time")
        object.__setattr__(self, "lambda_rem", rem)
        rem.setflags(write=False)


def theta_apply_jump(state: RemainingState, target: int) -> RemainingState:
    """Consume one crossing current -> target and move there.

    Keeps the source pair glued to (root, current position); the caller can
    assert that invariant with ``state.theta.source_endpoint()``.
    """
    tree = state.theta.tree
    x, y = state.current, int(target)
    if tree.parent[y] == x:
        arr, idx = "down", y
    elif tree.parent[x] == y:
        arr, idx = "up", x
    else:
        raise DomainError(f"{tree.ids[x]!r} -> {tree.ids[y]!r} is not an edge")
    counts = getattr(state.theta, arr)
    if counts[idx] < 1:
        raise NoCrossingLeft(
            f"no remaining crossing {tree.ids[x]!r} -> {tree.ids[y]!r}"
        )
    new = counts.copy()
    new[idx] -= 1
    theta = replace(state.theta, **{arr: new})
    return replace(state, theta=theta, current=y)


def theta_consume_time(state: RemainingState, dt: float) -> RemainingState:
    """Eat ``dt`` seconds of local time at the current vertex."""
    if dt < 0:
        raise DomainError("negative time increment")
    rem = state.lambda_rem[state.current]
    if dt > rem:
        raise TimeOverdraft(
            f"consuming {dt} at {state.theta.tree.ids[state.current]!r} "
            f"exceeds the remaining {rem}"
        )
    new = state.lambda_rem.copy()
    new[state.current] = rem - dt
    return replace(state, lambda_rem=new, clock=state.clock + dt)
