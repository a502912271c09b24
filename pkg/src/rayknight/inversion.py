"""Inversion samplers: the reversed jump chain, the vertex-edge repelling
process with exact Beta holding times, and the vertex repelling process both
as a crossing-network mixture and by direct rate simulation.

The direct simulator never touches quadrature: for both jump directions the
integrated hazard has a primitive of the form ``nu*log(w) + log I_nu(w)`` in
the running Bessel argument, so each exponential clock is inverted by a
safeguarded Newton iteration on that monotone function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .engine import (
    CAUSE_RATE_CLOCK,
    CAUSE_RESURRECT,
    Caps,
    EventLog,
    TERMINAL_EXPLOSION,
    TERMINAL_ROOT_EXHAUSTED,
    TerminatedRateSpec,
    run_with_resurrection,
)
from .errors import (
    DomainError,
    IncompatibleInputs,
    NoCrossingLeft,
    StuckState,
    TooLarge,
)
from .networks import CrossingNetwork, sample_alpha_network
from .specfun import log_i_pair
from .trees import PathRecord, RootedTree, require_field_in_domain

MODE_CHAIN = "jump-chain-only"
MODE_VERTEX_EDGE = "vertex-edge"
MODE_MIXTURE = "mixture"
MODE_DIRECT = "direct-rate"


@dataclass(frozen=True)
class InversionRun:
    """One realized inversion path with its bookkeeping."""

    path: PathRecord
    event_log: EventLog
    alpha: float
    mode: str
    initial_lambda: np.ndarray
    terminal_lambda: np.ndarray
    initial_network: CrossingNetwork | None = None
    terminal_theta: CrossingNetwork | None = None

    @property
    def lifetime(self) -> float:
        return self.path.lifetime

    @property
    def n_jumps(self) -> int:
        return self.path.n_jumps

    @property
    def resurrect_count(self) -> int:
        return self.event_log.count(CAUSE_RESURRECT)

    @property
    def exploded(self) -> bool:
        return self.event_log.terminal == TERMINAL_EXPLOSION


# ---------------------------------------------------------------------------
# Jump chain


def jump_chain_step(theta: CrossingNetwork, x: int, alpha: float,
                    rng: np.random.Generator) -> int:
    """One step of the reversed jump chain from x given remaining crossings.

    Proportional to the checked counts when their sum is positive, the forced
    parent jump when it vanishes (alpha = 0 only); at the root a vanishing
    sum means the chain is finished and stepping is a caller bug.
    """
    tree = theta.tree
    weights = []
    targets = []
    if x != tree.root:
        w = theta.up[x] + alpha - 1.0
        if w < -1e-12:
            raise StuckState(f"negative checked parent count at {tree.ids[x]!r}")
        weights.append(max(w, 0.0))
        targets.append(int(tree.parent[x]))
    for c in tree.children[x]:
        weights.append(float(theta.down[c]))
        targets.append(c)
    total = sum(weights)
    if total <= 0.0:
        if x == tree.root:
            raise StuckState("chain at the root with no checked crossings left")
        if theta.up[x] < 1:
            raise NoCrossingLeft(f"forced parent jump at {tree.ids[x]!r} without a crossing")
        return int(tree.parent[x])
    r = rng.random() * total
    acc = 0.0
    for w, y in zip(weights, targets):
        acc += w
        if r <= acc:
            return y
    return targets[-1]


def run_jump_chain(tree: RootedTree, n: CrossingNetwork, alpha: float,
                   rng: np.random.Generator, max_steps: int = 10_000_000) -> list[int]:
    """Vertex sequence of the chain run from the root until its stopping time."""
    down = n.down.copy()
    up = n.up.copy()
    root = tree.root
    parent = tree.parent
    children = tree.children
    seq = [root]
    x = root
    for _ in range(max_steps):
        theta_children = sum(down[c] for c in children[x])
        if x == root:
            if theta_children == 0:
                return seq
            m = float(theta_children)
        else:
            m = theta_children + up[x] + alpha - 1.0
        if m <= 0.0:
            if up[x] < 1:
                raise NoCrossingLeft(f"forced jump at {tree.ids[x]!r} without a crossing")
            up[x] -= 1
            y = int(parent[x])
        else:
            r = rng.random() * m
            y = -1
            acc = up[x] + alpha - 1.0 if x != root else 0.0
            if x != root and r <= acc:
                y = int(parent[x])
                up[x] -= 1
            else:
                for c in children[x]:
                    acc += down[c]
                    if r <= acc:
                        y = c
                        down[c] -= 1
                        break
                else:
                    y = int(parent[x])
                    up[x] -= 1
        seq.append(y)
        x = y
    raise TooLarge(f"jump chain exceeded {max_steps} steps")


# ---------------------------------------------------------------------------
# Vertex-edge repelling process (exact Beta holding times)


def run_vertex_edge_repelling(tree: RootedTree, lam, n: CrossingNetwork, alpha: float,
                              rng: np.random.Generator, caps: Caps | None = None) -> InversionRun:
    """Consume the given crossings and local time with exact holding laws.

    At each visit the holding is the remaining local time scaled by a
    Beta(1, m) variable, m being the current checked outgoing count; m = 0
    consumes everything and forces the parent jump.  The run stops at the
    root once its outgoing crossings are gone, eating the leftover root time.
    """
    caps = caps or Caps()
    lam_init = require_field_in_domain(tree, lam, alpha)
    if not n.is_sourceless():
        raise DomainError("initial crossing network must be sourceless")
    support = lam_init > 0.0
    for c in tree.edge_children():
        if n.down[c] > 0 and not (support[c] and support[int(tree.parent[c])]):
            raise IncompatibleInputs(
                f"crossings on edge above {tree.ids[c]!r} outside the field support"
            )

    lam_rem = lam_init.copy()
    down = n.down.copy()
    up = n.up.copy()
    parent = tree.parent
    children = tree.children
    root = tree.root
    log = EventLog()
    times, targets = [], []
    x = root
    t = 0.0
    random = rng.random

    while True:
        if len(times) >= caps.max_jumps or t >= caps.max_time:
            log.terminal = TERMINAL_EXPLOSION
            break
        theta_children = 0
        for c in children[x]:
            theta_children += down[c]
        if x == root:
            if theta_children == 0:
                t += lam_rem[root]
                lam_rem[root] = 0.0
                log.terminal = TERMINAL_ROOT_EXHAUSTED
                break
            m = float(theta_children)
        else:
            m = theta_children + up[x] + alpha - 1.0

        if m <= 0.0:
            # alpha = 0 with one parent crossing left: eat everything, resurrect
            t += lam_rem[x]
            lam_rem[x] = 0.0
            if up[x] < 1:
                raise NoCrossingLeft(f"resurrect at {tree.ids[x]!r} without a parent crossing")
            up[x] -= 1
            y = int(parent[x])
            times.append(t)
            targets.append(y)
            log.append(t, x, y, CAUSE_RESURRECT)
            x = y
            continue

        hold = lam_rem[x] * (1.0 - random() ** (1.0 / m))
        t += hold
        lam_rem[x] -= hold

        r = random() * m
        y = -1
        if x != root:
            acc = up[x] + alpha - 1.0
            if r <= acc:
                y = int(parent[x])
                up[x] -= 1
        else:
            acc = 0.0
        if y < 0:
            for c in children[x]:
                acc += down[c]
                if r <= acc:
                    y = c
                    down[c] -= 1
                    break
            else:
                y = int(parent[x])
                up[x] -= 1
        times.append(t)
        targets.append(y)
        log.append(t, x, y, CAUSE_RATE_CLOCK)
        x = y

    path = PathRecord(tree=tree, start=root, times=np.asarray(times),
                      targets=np.asarray(targets), lifetime=t)
    return InversionRun(
        path=path, event_log=log, alpha=alpha, mode=MODE_VERTEX_EDGE,
        initial_lambda=lam_init, terminal_lambda=lam_rem,
        initial_network=n, terminal_theta=CrossingNetwork(tree, down, up),
    )


def run_vertex_repelling_mixture(tree: RootedTree, lam, alpha: float,
                                 rng: np.random.Generator, caps: Caps | None = None) -> InversionRun:
    """Sample a sourceless crossing network, then run the vertex-edge process."""
    n = sample_alpha_network(tree, lam, alpha, rng)
    run = run_vertex_edge_repelling(tree, lam, n, alpha, rng, caps)
    object.__setattr__(run, "mode", MODE_MIXTURE)
    return run


# ---------------------------------------------------------------------------
# Direct rate simulation


def _solve_monotone(alpha: float, toward_parent: bool, target: float,
                    u_hi: float, g_hi: float) -> float:
    """Solve g(e^u) = target for u <= u_hi, g the direction's hazard primitive.

    Toward the parent g(w) = alpha*log(w) + log I_alpha(w) with slope
    I_{alpha-1}/I_alpha; toward a child g(w) = (1-alpha)*log(w) +
    log I_{alpha-1}(w) with slope I_alpha/I_{alpha-1}.  Both are strictly
    increasing in w, so a bracketed Newton iteration is safe.
    """
    nu_exp = alpha if toward_parent else 1.0 - alpha

    def eval_g(u):
        w = math.exp(u)
        log_hi, log_lo = log_i_pair(alpha, w)  # orders alpha, alpha - 1
        if toward_parent:
            g = nu_exp * u + log_hi
            slope = w * math.exp(log_lo - log_hi)
        else:
            g = nu_exp * u + log_lo
            slope = w * math.exp(log_hi - log_lo)
        return g, slope

    u_lo = u_hi
    g_lo = g_hi
    step = 1.0
    while g_lo > target:
        u_lo -= step
        step *= 2.0
        g_lo, _ = eval_g(u_lo)
        if u_lo < -750.0:
            return u_lo
    u = 0.5 * (u_lo + u_hi)
    for _ in range(80):
        g, slope = eval_g(u)
        if g > target:
            u_hi = u
        else:
            u_lo = u
        if abs(g - target) <= 1e-12 * (1.0 + abs(target)):
            return u
        if slope > 0.0:
            nxt = u - (g - target) / slope
            u = nxt if u_lo < nxt < u_hi else 0.5 * (u_lo + u_hi)
        else:
            u = 0.5 * (u_lo + u_hi)
        if u_hi - u_lo < 1e-14:
            return u
    return u


def direct_rate(tree: RootedTree, lam_rem: np.ndarray, x: int, y: int, alpha: float,
                stay: float = 0.0) -> float:
    """Instantaneous repelling rate x -> y after ``stay`` further seconds at x."""
    rem_x = lam_rem[x] - stay
    rem_y = lam_rem[y]
    if rem_x <= 0.0:
        raise DomainError("rate requested past the exhaustion boundary")
    if rem_y <= 0.0:
        return 0.0
    cstar = tree.cstar_edge(x, y)
    w = 2.0 * cstar * math.sqrt(rem_x * rem_y)
    log_hi, log_lo = log_i_pair(alpha, w)  # orders alpha, alpha - 1
    if tree.parent[x] == y:
        ratio = math.exp(log_lo - log_hi)
    else:
        ratio = math.exp(log_hi - log_lo)
    return cstar * math.sqrt(rem_y / rem_x) * ratio


def _direct_spec(tree: RootedTree, alpha: float, lam_init: np.ndarray) -> TerminatedRateSpec:
    """Engine spec for the vertex repelling process with closed-form clocks.

    For a stay at x the only moving quantity is the remaining time at x, so
    with w the running Bessel argument of the edge the integrated hazard
    toward the parent is the increment of alpha*log(w) + log I_alpha(w) and
    toward a child that of (1-alpha)*log(w) + log I_{alpha-1}(w); both are
    inverted exactly.
    """
    parent = tree.parent
    root = tree.root
    cstar = tree.cstar

    def neighbors(state):
        rem = state.user
        return tuple(y for y in tree.neighbors[state.current] if rem[y] > 0.0)

    def rate(state, y, s):
        return direct_rate(tree, state.user, state.current, y, alpha, s)

    def stay_limit(state):
        return float(state.user[state.current])

    def clock(state, y, gamma):
        rem = state.user
        x = state.current
        rem_x = rem[x]
        rem_y = rem[y]
        if rem_x <= 0.0 or rem_y <= 0.0:
            return None
        cs = cstar[y] if parent[y] == x else cstar[x]
        w0 = 2.0 * cs * math.sqrt(rem_x * rem_y)
        u0 = math.log(w0)
        toward_parent = parent[x] == y
        nu_exp = alpha if toward_parent else 1.0 - alpha
        log_hi, log_lo = log_i_pair(alpha, w0)
        g0 = nu_exp * u0 + (log_hi if toward_parent else log_lo)
        target = g0 - gamma
        # hazard floor: finite total hazard means the clock may never fire
        if toward_parent:
            if alpha == 0.0 and target < 0.0:
                return None
        else:
            if alpha > 0.0:
                floor = -(alpha - 1.0) * math.log(2.0) - math.lgamma(alpha)
                if target <= floor:
                    return None
        u_star = _solve_monotone(alpha, toward_parent, target, u0, g0)
        w_star = math.exp(u_star)
        s = rem_x - (w_star * w_star) / (4.0 * cs * cs * rem_y)
        if s <= 0.0:
            return 1e-300
        if s >= rem_x:
            # the solved argument underflowed; the jump still precedes exhaustion
            s = rem_x * (1.0 - 1e-15)
        return s

    def on_advance(state, s):
        state.user[state.current] = max(state.user[state.current] - s, 0.0)

    return TerminatedRateSpec(
        neighbors=neighbors,
        rate=rate,
        stay_limit=stay_limit,
        clock=clock,
        is_final_death=lambda state: state.current == root,
        resurrect_target=lambda state: int(parent[state.current]),
        on_advance=on_advance,
    )


def run_vertex_repelling_direct(tree: RootedTree, lam, alpha: float,
                                rng: np.random.Generator, caps: Caps | None = None) -> InversionRun:
    """Simulate the vertex repelling process from its jump rates directly."""
    lam_init = require_field_in_domain(tree, lam, alpha)
    spec = _direct_spec(tree, alpha, lam_init)
    path, log, state = run_with_resurrection(
        spec, tree.root, rng, caps or Caps(), tree=tree, user=lam_init.copy()
    )
    return InversionRun(
        path=path, event_log=log, alpha=alpha, mode=MODE_DIRECT,
        initial_lambda=lam_init, terminal_lambda=state.user,
    )


# ---------------------------------------------------------------------------
# Brute-force first-step oracle


def pairing_oracle_first_step(n: CrossingNetwork, x: int, alpha: float) -> dict:
    """Exact first-step distribution at x by exhaustive enumeration.

    alpha = 0: enumerate every completion consuming all crossings and ending
    at the root (each is equally likely).  alpha > 0 off the root: enumerate
    the pairings of the remaining bridges at x weighted by alpha^(#loops) and
    marginalize the bridge glued to the walker; at the root the crossings all
    belong to the path part, so exit orders are counted uniformly.
    """
    tree = n.tree
    total = n.total()
    if total > 10:
        raise TooLarge(f"{total} crossings exceed the enumeration budget")
    if alpha == 0.0:
        return _oracle_exhaust_paths(n, x)
    if x == tree.root:
        return _oracle_exit_orders(n, x)
    return _oracle_bridge_pairings(n, x, alpha)


def _oracle_exhaust_paths(n: CrossingNetwork, x: int) -> dict:
    tree = n.tree
    root = tree.root
    from functools import lru_cache

    children = tree.children
    parent = tree.parent

    @lru_cache(maxsize=None)
    def completions(cur, down, up) -> int:
        total = sum(down) + sum(up)
        if total == 0:
            return 1 if cur == root else 0
        count = 0
        if cur != root and up[cur] > 0:
            new_up = list(up)
            new_up[cur] -= 1
            count += completions(int(parent[cur]), down, tuple(new_up))
        for c in children[cur]:
            if down[c] > 0:
                new_down = list(down)
                new_down[c] -= 1
                count += completions(c, tuple(new_down), up)
        return count

    down0 = tuple(int(v) for v in n.down)
    up0 = tuple(int(v) for v in n.up)
    out = {}
    for y in tree.neighbors[x]:
        if parent[x] == y and up0[x] > 0:
            new_up = list(up0)
            new_up[x] -= 1
            out[y] = completions(y, down0, tuple(new_up))
        elif parent[y] == x and down0[y] > 0:
            new_down = list(down0)
            new_down[y] -= 1
            out[y] = completions(y, tuple(new_down), up0)
        else:
            out[y] = 0
    z = sum(out.values())
    if z == 0:
        raise StuckState("no admissible completion from this state")
    return {y: c / z for y, c in out.items()}


def _oracle_exit_orders(n: CrossingNetwork, x: int) -> dict:
    """Count relative orders of the outgoing crossings at x by their first entry."""
    tree = n.tree
    slots = []
    for y in tree.neighbors[x]:
        slots.extend([y] * n.count(x, y))
    if not slots:
        raise StuckState("no outgoing crossings to order")
    counts = {}
    for perm in set(itertools.permutations(slots)):
        counts[perm[0]] = counts.get(perm[0], 0) + 1
    z = sum(counts.values())
    return {y: counts.get(y, 0) / z for y in tree.neighbors[x]}


def _oracle_bridge_pairings(n: CrossingNetwork, x: int, alpha: float) -> dict:
    """alpha^(#loops)-weighted pairings of the remaining bridges at x.

    Bridge j's first edge leaves x toward a neighbour; one distinguished
    bridge (the one the walker is inside) leads to the parent.  A pairing is
    a permutation matching bridge ends to bridge starts; its loop count is
    the cycle count.  The walker's next step follows the bridge paired to its
    own, so the first-step law is the cycle-weighted marginal of pi(1).
    """
    tree = n.tree
    r = n.degree(x)
    if r > 8:
        raise TooLarge(f"{r} bridges exceed the pairing enumeration budget")
    if n.count(x, int(tree.parent[x])) < 1:
        raise StuckState("sourced state must keep a parent crossing")
    heads = [int(tree.parent[x])]
    for y in tree.neighbors[x]:
        extra = n.count(x, y) - (1 if y == int(tree.parent[x]) else 0)
        heads.extend([y] * extra)
    prob = {y: 0.0 for y in tree.neighbors[x]}
    z = 0.0
    for perm in itertools.permutations(range(r)):
        weight = alpha ** _cycle_count(perm)
        z += weight
        prob[heads[perm[0]]] += weight
    return {y: p / z for y, p in prob.items()}


def _cycle_count(perm) -> int:
    seen = [False] * len(perm)
    cycles = 0
    for i in range(len(perm)):
        if seen[i]:
            continue
        cycles += 1
        j = i
        while not seen[j]:
            seen[j] = True
            j = perm[j]
    return cycles


def jump_chain_probabilities(theta: CrossingNetwork, x: int, alpha: float) -> dict:
    """The checked-count transition law the chain implements, for comparison."""
    tree = theta.tree
    out = {}
    m = theta.checked_degree(x, alpha)
    if m <= 0.0:
        if x == tree.root:
            raise StuckState("no transition law at an exhausted root")
        return {y: (1.0 if y == int(tree.parent[x]) else 0.0) for y in tree.neighbors[x]}
    for y in tree.neighbors[x]:
        w = theta.count(x, y) + (alpha - 1.0 if y == int(tree.parent[x]) else 0.0)
        out[y] = max(w, 0.0) / m
    return out
