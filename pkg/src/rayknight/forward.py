"""Forward simulation: the CTMC run to an inverse local time, the loop-soup
occupation field via the Poisson-Gamma tree recursion, and assembled triples.

The loop-soup side never builds loop objects: every downstream identity
consumes only the occupation field and the crossing counts, and those have an
exact O(|V|) top-down sampler.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExplosionCap
from .networks import CrossingNetwork
from .specfun import sample_pd_sticks
from .trees import (
    LocalTimeField,
    PathRecord,
    RootedTree,
    ensure_recurrent,
    is_recurrent,
)

logger = logging.getLogger(__name__)

MAX_JUMPS_DEFAULT = 10_000_000


def simulate_ctmc_to_tau_u(tree: RootedTree, u: float, rng: np.random.Generator,
                           max_jumps: int = MAX_JUMPS_DEFAULT) -> PathRecord:
    """Run the conductance CTMC from the root until its root local time hits u.

    Requires a recurrent tree (no killing off the root; killing at the root
    is ignored, since no law in the package depends on it).
    """
    if u <= 0.0:
        raise DomainError(f"target root local time {u} must be positive")
    if not is_recurrent(tree):
        raise DomainError("tree has killing off the root; reduce it first")
    n = tree.n_vertices
    totals = np.empty(n)
    cums = []
    targets_of = []
    for x in range(n):
        nbrs = tree.neighbors[x]
        rates = np.array([tree.conductance(x, y) for y in nbrs])
        totals[x] = rates.sum()
        cums.append(np.cumsum(rates) / rates.sum())
        targets_of.append(np.asarray(nbrs, dtype=np.int64))

    root = tree.root
    x = root
    t = 0.0
    budget = u
    times, path_targets = [], []
    exp = rng.exponential
    uniform = rng.random
    while True:
        hold = exp(1.0 / totals[x])
        if x == root:
            if hold >= budget:
                t += budget
                break
            budget -= hold
        t += hold
        y = int(targets_of[x][np.searchsorted(cums[x], uniform())])
        times.append(t)
        path_targets.append(y)
        x = y
        if len(times) >= max_jumps:
            raise ExplosionCap(f"CTMC exceeded {max_jumps} jumps before tau_u")
    return PathRecord(tree=tree, start=root, times=np.asarray(times),
                      targets=np.asarray(path_targets), lifetime=t)


def sample_loop_field_and_network(tree: RootedTree, alpha: float, root_value: float,
                                  rng: np.random.Generator):
    """Top-down Poisson-Gamma recursion for the occupation field and crossings.

    At each edge below a vertex carrying time ell, the downward crossing
    count is Poisson(ell * C_down) and the child's time is Gamma(count +
    alpha, C_up); with ``root_value = 0`` this samples the boundary-0
    loop-soup pair, with ``root_value = u`` the full boundary-u pair.
    """
    if alpha < 0 or root_value < 0:
        raise DomainError("alpha and root_value must be nonnegative")
    n = tree.n_vertices
    field = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    field[tree.root] = root_value
    for x in tree.depth_order():
        for c in tree.children[x]:
            if field[x] > 0.0:
                k = int(rng.poisson(field[x] * tree.cond_down[c]))
            else:
                k = 0
            counts[c] = k
            shape = k + alpha
            field[c] = rng.gamma(shape, 1.0 / tree.cond_up[c]) if shape > 0 else 0.0
    network = CrossingNetwork(tree, down=counts, up=counts.copy())
    return field, network


def crossing_network(path: PathRecord) -> CrossingNetwork:
    """Directed crossing counts of a path; sourceless iff it ends where it began."""
    tree = path.tree
    down = np.zeros(tree.n_vertices, dtype=np.int64)
    up = np.zeros(tree.n_vertices, dtype=np.int64)
    cur = path.start
    parent = tree.parent
    for tgt in path.targets:
        tgt = int(tgt)
        if parent[tgt] == cur:
            down[tgt] += 1
        else:
            up[cur] += 1
        cur = tgt
    return CrossingNetwork(tree, down=down, up=up)


@dataclass(frozen=True)
class RayKnightTriple:
    """Boundary-0 field, independent path to tau_u, and their aggregate."""

    tree: RootedTree
    alpha: float
    u: float
    phi0: np.ndarray
    path: PathRecord
    phiU: np.ndarray
    n0: CrossingNetwork
    nU: CrossingNetwork

    def __post_init__(self):
        occ = self.path.local_time()
        if not np.allclose(self.phiU, self.phi0 + occ, rtol=1e-9, atol=1e-12):
            raise DomainError("aggregate field does not match phi0 + path local time")
        if abs(self.phiU[self.tree.root] - self.u) > 1e-9 * max(1.0, self.u):
            raise DomainError("root aggregate local time differs from u")
        if not self.nU.is_sourceless():
            raise DomainError("aggregate crossing network has sources")

    def to_document(self) -> dict:
        ids = self.tree.ids
        return {
            "alpha": self.alpha,
            "u": self.u,
            "phi0": {ids[i]: float(v) for i, v in enumerate(self.phi0)},
            "phiU": {ids[i]: float(v) for i, v in enumerate(self.phiU)},
            "n0": self.n0.as_dict(),
            "nU": self.nU.as_dict(),
            "path": {
                "start": ids[self.path.start],
                "jumps": [[float(t), ids[int(v)]] for t, v in zip(self.path.times, self.path.targets)],
                "lifetime": float(self.path.lifetime),
            },
        }


def make_triple(tree: RootedTree, alpha: float, u: float, rng: np.random.Generator) -> RayKnightTriple:
    """Sample a full triple: independent boundary-0 pair plus a fresh path.

    Transient trees are reduced to the recurrent case first (logged)."""
    work = ensure_recurrent(tree)
    phi0, n0 = sample_loop_field_and_network(work, alpha, 0.0, rng)
    path = simulate_ctmc_to_tau_u(work, u, rng)
    occ = path.local_time()
    theta = crossing_network(path)
    phiU = phi0 + occ
    nU = CrossingNetwork(work, down=n0.down + theta.down, up=n0.up + theta.up)
    return RayKnightTriple(tree=work, alpha=alpha, u=u, phi0=phi0, path=path,
                           phiU=phiU, n0=n0, nU=nU)


def pd_partition_path(path: PathRecord, u: float, alpha: float,
                      rng: np.random.Generator, epsilon: float = 1e-9) -> list[PathRecord]:
    """Cut a root-to-tau_u path into loops at Poisson-Dirichlet local-time marks.

    Only loop-count statistics downstream consume the result.
    """
    tree = path.tree
    root = tree.root
    sticks = sample_pd_sticks(alpha, 1.0, epsilon, rng)
    levels = u * np.cumsum(sticks)[:-1]
    cut_times = _root_inverse_local_times(path, levels)
    loops = []
    bounds = [0.0] + list(cut_times) + [path.lifetime]
    segs = path.segment_vertices()
    holds = path.holding_times()
    abs_times = np.concatenate(([0.0], np.asarray(path.times)))
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b <= a:
            continue
        times, targets = [], []
        for idx in range(len(segs)):
            jt = abs_times[idx]
            if idx > 0 and a < jt <= b:
                times.append(jt - a)
                targets.append(int(segs[idx]))
        loops.append(PathRecord(tree=tree, start=root, times=np.asarray(times),
                                targets=np.asarray(targets), lifetime=b - a))
    return loops


def _root_inverse_local_times(path: PathRecord, levels) -> list[float]:
    """Absolute times at which root local time first exceeds each level."""
    tree = path.tree
    root = tree.root
    segs = path.segment_vertices()
    holds = path.holding_times()
    starts = np.concatenate(([0.0], np.asarray(path.times)))
    out = []
    it = iter(sorted(levels))
    level = next(it, None)
    acc = 0.0
    for v, h, s in zip(segs, holds, starts):
        if level is None:
            break
        if int(v) != root:
            continue
        while level is not None and acc + h >= level:
            out.append(s + (level - acc))
            level = next(it, None)
        acc += h
    while level is not None:
        out.append(path.lifetime)
        level = next(it, None)
    return out


def field_of(tree: RootedTree, values: np.ndarray) -> LocalTimeField:
    return LocalTimeField(tree=tree, values=np.asarray(values, dtype=float))
