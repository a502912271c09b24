"""Percolation layer: edge configurations given fields, the forward
walker-plus-opening process, and the reversed percolation-vertex repelling
process.

All clocks are inverted exactly.  The forward opening hazard has the
primitive (1-alpha)*log(w) + log K_{1-alpha}(w) in the growing Bessel
argument w of the edge.  In the reversed process the two parent cases share
the plain repelling hazard of the vertex process and are split at the firing
time by the no-crossing closure weight, and the two child cases combine to
the ratio I_{-alpha}/I_{1-alpha}, whose primitive is the parent-type one at
order 1-alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import (
    CAUSE_PERC_CLOSE,
    CAUSE_PERC_OPEN,
    CAUSE_RATE_CLOCK,
    Caps,
    EventLog,
    TERMINAL_EXPLOSION,
    TERMINAL_ROOT_EXHAUSTED,
)
from .errors import DomainError
from .forward import sample_loop_field_and_network
from .specfun import (
    log_bessel_i,
    log_bessel_k,
    log_bessel_k_normalized,
    log_i_pair,
)
from .inversion import _solve_monotone
from .trees import PathRecord, RootedTree, field_values, is_recurrent, require_field_in_domain


def _require_percolation_regime(tree: RootedTree, alpha: float):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"percolation layer needs 0 < alpha < 1, got {alpha}")
    if not tree.symmetric:
        raise DomainError("percolation layer needs symmetric conductances")


@dataclass(frozen=True)
class EdgeConfiguration:
    """{0,1} field on the undirected edges, stored per child vertex."""

    tree: RootedTree
    open_edges: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.open_edges, dtype=bool)
        if arr.shape != (self.tree.n_vertices,):
            raise DomainError("configuration length does not match the tree")
        if arr[self.tree.root]:
            raise DomainError("root slot of a configuration must stay clear")
        object.__setattr__(self, "open_edges", arr)
        arr.setflags(write=False)

    def is_open(self, child: int) -> bool:
        return bool(self.open_edges[child])

    def n_open(self) -> int:
        return int(self.open_edges.sum())

    def as_dict(self) -> dict:
        ids = self.tree.ids
        return {
            f"{ids[int(self.tree.parent[c])]}-{ids[c]}": int(self.open_edges[c])
            for c in self.tree.edge_children()
        }


def open_probability(c_edge: float, ell_x: float, ell_y: float, alpha: float) -> float:
    """Conditional open probability of one edge given endpoint local times."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    z = 2.0 * c_edge * math.sqrt(ell_x * ell_y)
    if z == 0.0:
        return 0.0
    return math.exp(log_bessel_i(1.0 - alpha, z) - log_bessel_i(alpha - 1.0, z))


def closure_prob_no_crossing(c_edge: float, ell_x: float, ell_y: float, alpha: float) -> float:
    """Probability the metric-graph field vanishes somewhere on an uncrossed edge."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    z = 2.0 * c_edge * math.sqrt(ell_x * ell_y)
    if z == 0.0:
        return 1.0
    return math.exp(log_bessel_k_normalized(1.0 - alpha, z))


def prob_no_crossing(c_edge: float, ell_x: float, ell_y: float, alpha: float) -> float:
    """Mass at zero of the edge crossing count given the endpoint times."""
    z = 2.0 * c_edge * math.sqrt(ell_x * ell_y)
    if z == 0.0:
        return 1.0
    return math.exp((alpha - 1.0) * math.log(0.5 * z) - math.lgamma(alpha)
                    - log_bessel_i(alpha - 1.0, z))


def sample_config_given_field(tree: RootedTree, ell, alpha: float,
                              rng: np.random.Generator) -> EdgeConfiguration:
    """Open edges independently with the conditional Bessel-ratio probability."""
    _require_percolation_regime(tree, alpha)
    vals = field_values(tree, ell)
    arr = np.zeros(tree.n_vertices, dtype=bool)
    for c in tree.edge_children():
        p = int(tree.parent[c])
        prob = open_probability(float(tree.cstar[c]), vals[p], vals[c], alpha)
        arr[c] = rng.random() < prob
    return EdgeConfiguration(tree, arr)


@dataclass(frozen=True)
class PercRun:
    """Joint walker/configuration run with per-event causes."""

    tree: RootedTree
    alpha: float
    path: PathRecord
    event_log: EventLog
    initial_field: np.ndarray
    terminal_field: np.ndarray
    initial_config: EdgeConfiguration
    terminal_config: EdgeConfiguration

    @property
    def lifetime(self) -> float:
        return self.path.lifetime

    def config_change_times(self, cause: str) -> list[float]:
        return [t for t, _, _, c in self.event_log.events if c == cause]


# ---------------------------------------------------------------------------
# Forward process: walker opening edges


_GK_SOLVE_TOL = 1e-12


def _g_k(alpha: float, w: float) -> float:
    """(1-alpha)*log(w) + log K_{1-alpha}(w); strictly decreasing in w."""
    return (1.0 - alpha) * math.log(w) + log_bessel_k(1.0 - alpha, w)


def _g_k_origin(alpha: float) -> float:
    """Limit of the opening-hazard primitive as the edge argument drops to 0."""
    return math.lgamma(1.0 - alpha) - alpha * math.log(2.0)


def _solve_gk_drop(alpha: float, w0: float, g0: float, drop: float) -> float:
    """w* >= w0 with g_k(w*) = g0 - drop (the opening clock inversion)."""
    target = g0 - drop

    def eval_g(u):
        w = math.exp(u)
        g = _g_k(alpha, w)
        ratio = math.exp(log_bessel_k(alpha, w) - log_bessel_k(1.0 - alpha, w))
        return g, -w * ratio  # dG/du, negative

    u_lo = math.log(w0) if w0 > 0.0 else -6.0
    if w0 > 0.0:
        g_lo = _g_k(alpha, w0)
    else:
        g_lo, _ = eval_g(u_lo)
        while abs(g_lo - g0) > 1e-9 * (1.0 + abs(g0)):
            u_lo -= 3.0
            if u_lo < -600.0:
                break
            g_lo, _ = eval_g(u_lo)
    u_hi = u_lo + 1.0
    g_hi, _ = eval_g(u_hi)
    while g_hi > target:
        u_lo, g_lo = u_hi, g_hi
        u_hi += max(1.0, (g_hi - target))
        g_hi, _ = eval_g(u_hi)
    u = 0.5 * (u_lo + u_hi)
    for _ in range(80):
        g, slope = eval_g(u)
        if g > target:
            u_lo = u
        else:
            u_hi = u
        if abs(g - target) <= _GK_SOLVE_TOL * (1.0 + abs(target)):
            break
        if slope < 0.0:
            nxt = u - (g - target) / slope
            u = nxt if u_lo < nxt < u_hi else 0.5 * (u_lo + u_hi)
        else:
            u = 0.5 * (u_lo + u_hi)
        if u_hi - u_lo < 1e-14:
            break
    return math.exp(u)


def run_forward_percolation(tree: RootedTree, alpha: float, u: float,
                            rng: np.random.Generator, caps: Caps | None = None,
                            phi0=None, init_config: EdgeConfiguration | None = None) -> PercRun:
    """Walker plus percolation run from the root until root local time u.

    Crossed edges open instantly; each closed edge below the walker opens
    without a jump at the K-ratio rate.  ``phi0``/``init_config`` may be
    supplied to continue a known boundary pair; by default they are sampled.
    """
    _require_percolation_regime(tree, alpha)
    if not is_recurrent(tree):
        raise DomainError("forward percolation needs a recurrent tree")
    if u <= 0.0:
        raise DomainError("u must be positive")
    caps = caps or Caps()

    if phi0 is None:
        phi0, _ = sample_loop_field_and_network(tree, alpha, 0.0, rng)
    else:
        phi0 = field_values(tree, phi0).copy()
    if init_config is None:
        init_config = sample_config_given_field(tree, phi0, alpha, rng)
    config = init_config.open_edges.copy()

    phi = phi0.copy()
    root = tree.root
    parent = tree.parent
    children = tree.children
    x = root
    t = 0.0
    budget = u
    times, targets = [], []
    log = EventLog()
    exp = rng.exponential

    while True:
        if len(times) >= caps.max_jumps:
            log.terminal = TERMINAL_EXPLOSION
            break
        # competing clocks for this stay segment
        best_s = math.inf
        best_kind = None  # ("jump", y) or ("open", c)
        for y in tree.neighbors[x]:
            s = exp(1.0) / tree.conductance(x, y)
            if s < best_s:
                best_s, best_kind = s, ("jump", y)
        for c in children[x]:
            if config[c] or phi[c] <= 0.0:
                continue
            w0 = 2.0 * tree.cstar[c] * math.sqrt(phi[x] * phi[c])
            g0 = _g_k(alpha, w0) if w0 > 0.0 else _g_k_origin(alpha)
            w_star = _solve_gk_drop(alpha, w0, g0, exp(1.0))
            s = (w_star * w_star) / (4.0 * tree.cstar[c] ** 2 * phi[c]) - phi[x]
            if s < best_s:
                best_s, best_kind = s, ("open", c)
        cap = budget if x == root else math.inf
        if best_s >= cap:
            phi[x] += cap
            t += cap
            log.terminal = TERMINAL_ROOT_EXHAUSTED
            break
        phi[x] += best_s
        t += best_s
        if x == root:
            budget -= best_s
        kind, target = best_kind
        if kind == "open":
            config[target] = True
            log.append(t, x, target, CAUSE_PERC_OPEN)
            continue
        y = target
        edge_child = y if parent[y] == x else x
        if not config[edge_child]:
            config[edge_child] = True
            log.append(t, x, y, CAUSE_PERC_OPEN)
        times.append(t)
        targets.append(y)
        log.append(t, x, y, CAUSE_RATE_CLOCK)
        x = y

    path = PathRecord(tree=tree, start=root, times=np.asarray(times),
                      targets=np.asarray(targets), lifetime=t)
    return PercRun(
        tree=tree, alpha=alpha, path=path, event_log=log,
        initial_field=phi0, terminal_field=phi,
        initial_config=init_config,
        terminal_config=EdgeConfiguration(tree, config),
    )


# ---------------------------------------------------------------------------
# Reversed process: percolation-vertex repelling


def run_percolation_vertex_repelling(tree: RootedTree, lam, config: EdgeConfiguration,
                                     alpha: float, rng: np.random.Generator,
                                     caps: Caps | None = None) -> PercRun:
    """Simulate the reversed joint dynamics from (root, config) given a field.

    Per stay segment the open parent edge carries one combined clock (jump
    keeping the configuration, or jump with closure, split by the
    no-crossing weight at the firing argument) and every open child edge
    carries one combined clock (jump keeping the configuration, or closure
    without a jump, split by I_alpha/I_{-alpha}).  Closed edges are inert,
    so the configuration only loses edges.
    """
    _require_percolation_regime(tree, alpha)
    caps = caps or Caps()
    lam_init = require_field_in_domain(tree, lam, alpha)
    lam_rem = lam_init.copy()
    open_edges = config.open_edges.copy()
    root = tree.root
    parent = tree.parent
    children = tree.children
    x = root
    t = 0.0
    times, targets = [], []
    log = EventLog()
    exp = rng.exponential
    uniform = rng.random

    while True:
        if len(times) >= caps.max_jumps:
            log.terminal = TERMINAL_EXPLOSION
            break
        rem_x = lam_rem[x]
        best_s = math.inf
        best = None  # ("parent", y) | ("child", c)
        if x != root and open_edges[x]:
            y = int(parent[x])
            s = _repelling_clock(tree, alpha, rem_x, lam_rem[y], tree.cstar[x],
                                 exp(1.0), parent_type_order=alpha)
            if s is not None and s < best_s:
                best_s, best = s, ("parent", y)
        for c in children[x]:
            if not open_edges[c] or lam_rem[c] <= 0.0:
                continue
            s = _repelling_clock(tree, alpha, rem_x, lam_rem[c], tree.cstar[c],
                                 exp(1.0), parent_type_order=1.0 - alpha)
            if s is not None and s < best_s:
                best_s, best = s, ("child", c)

        if best_s >= rem_x:
            # exhaustion boundary: terminal at the root, unreachable elsewhere
            t += rem_x
            lam_rem[x] = 0.0
            if x == root:
                log.terminal = TERMINAL_ROOT_EXHAUSTED
                break
            raise DomainError(
                f"local time exhausted off the root at {tree.ids[x]!r}; "
                "inconsistent (field, configuration) input"
            )
        t += best_s
        lam_rem[x] = rem_x - best_s
        kind, other = best
        w_star = 2.0 * (tree.cstar[other if kind == "child" else x]
                        ) * math.sqrt(lam_rem[x] * lam_rem[other])
        if kind == "parent":
            _, log_lo = log_i_pair(alpha, w_star)            # I_{alpha-1}
            keep_prob = math.exp(log_bessel_i(1.0 - alpha, w_star) - log_lo)
            times.append(t)
            targets.append(other)
            log.append(t, x, other, CAUSE_RATE_CLOCK)
            if uniform() >= keep_prob:
                open_edges[x] = False
                log.append(t, x, other, CAUSE_PERC_CLOSE)
            x = other
        else:
            c = other
            _, log_lo = log_i_pair(1.0 - alpha, w_star)       # I_{-alpha}
            jump_prob = math.exp(log_bessel_i(alpha, w_star) - log_lo)
            if uniform() < jump_prob:
                times.append(t)
                targets.append(c)
                log.append(t, x, c, CAUSE_RATE_CLOCK)
                x = c
            else:
                open_edges[c] = False
                log.append(t, x, c, CAUSE_PERC_CLOSE)

    path = PathRecord(tree=tree, start=root, times=np.asarray(times),
                      targets=np.asarray(targets), lifetime=t)
    return PercRun(
        tree=tree, alpha=alpha, path=path, event_log=log,
        initial_field=lam_init, terminal_field=lam_rem,
        initial_config=config, terminal_config=EdgeConfiguration(tree, open_edges),
    )


def _repelling_clock(tree: RootedTree, alpha: float, rem_x: float, rem_y: float,
                     cstar: float, gamma: float, parent_type_order: float):
    """Stay after which the combined edge hazard reaches ``gamma``.

    The hazard primitive is order*log(w) + log I_order(w) evaluated along the
    shrinking argument w; ``parent_type_order`` is alpha for the real parent
    edge (total rate I_{alpha-1}/I_alpha) and 1-alpha for a child edge
    (total rate I_{-alpha}/I_{1-alpha}).
    """
    if rem_x <= 0.0 or rem_y <= 0.0:
        return None
    a = parent_type_order
    w0 = 2.0 * cstar * math.sqrt(rem_x * rem_y)
    u0 = math.log(w0)
    g0 = a * u0 + log_i_pair(a, w0)[0]
    target = g0 - gamma
    # total hazard is infinite for a > 0 (the argument can reach 0), so the
    # clock always has a solution; a == 0 cannot occur for alpha in (0,1)
    u_star = _solve_monotone(a, True, target, u0, g0)
    w_star = math.exp(u_star)
    s = rem_x - (w_star * w_star) / (4.0 * cstar * cstar * rem_y)
    if s <= 0.0:
        return 1e-300
    if s >= rem_x:
        # the solved argument underflowed; the event still precedes exhaustion
        s = rem_x * (1.0 - 1e-15)
    return s
