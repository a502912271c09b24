"""Dyadic-grid repelling processes and cross-refinement convergence diagnostics.

A level-k grid stands in for the half line: spacing 2^-k, conductance 2^(k-1)
per edge, no killing.  The level-k repelling process in macroscopic time is
the plain vertex repelling process on the grid tree run in its own time and
then slowed by 2^k (local time is consumed at rate 2^k); that equivalence is
asserted as a rate identity in the tests.  The continuum limit itself is
never simulated: acceptance is Cauchy-style shrinkage of Wasserstein
distances between consecutive levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import Caps, EventLog
from .errors import DomainError, InsufficientLevels, TooFine
from .inversion import (
    InversionRun,
    run_vertex_repelling_direct,
    run_vertex_repelling_mixture,
)
from .stats import wasserstein_1d
from .trees import PathRecord, RootedTree, build_tree

MAX_LEVEL = 14


@dataclass(frozen=True)
class DyadicGrid:
    """Path tree on the grid 2^-k * {0..n} with conductances 2^(k-1)."""

    level: int
    span: float
    tree: RootedTree
    positions: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.tree.n_vertices - 1

    @property
    def conductance(self) -> float:
        return 2.0 ** (self.level - 1)

    @property
    def time_scale(self) -> float:
        """Macroscopic seconds per unit of grid-process time."""
        return 2.0 ** (-self.level)


def build_dyadic_grid(k: int, span: float) -> DyadicGrid:
    if k < 0 or k > MAX_LEVEL:
        raise TooFine(f"grid level {k} outside [0, {MAX_LEVEL}]")
    if span <= 0.0:
        raise DomainError("span must be positive")
    n_edges = int(round(span * 2.0 ** k))
    if n_edges < 1:
        raise DomainError("span shorter than one grid cell")
    cond = 2.0 ** (k - 1)
    # zero-padded ids keep the canonical id order equal to the spatial order
    width = len(str(n_edges))
    ids = [str(i).zfill(width) for i in range(n_edges + 1)]
    edges = [(ids[i], ids[i + 1], cond, cond) for i in range(n_edges)]
    tree = build_tree(ids[0], edges)
    positions = np.array([int(v) for v in tree.ids], dtype=float) * 2.0 ** (-k)
    return DyadicGrid(level=k, span=span, tree=tree, positions=positions)


def restrict_field(grid: DyadicGrid, lam) -> np.ndarray:
    """Evaluate a field on the grid: a callable on positions or an array."""
    if callable(lam):
        return np.array([max(float(lam(x)), 0.0) for x in grid.positions])
    vals = np.asarray(lam, dtype=float)
    if vals.shape != (grid.tree.n_vertices,):
        raise DomainError("tabulated field length does not match the grid")
    return vals


def tent_field(height: float = 1.0, width: float = 1.0):
    """The admissible tent profile height * (1 - x / width)^+."""
    return lambda x: height * max(1.0 - x / width, 0.0)


def run_mesh_repelling(lam, k: int, alpha: float, rng: np.random.Generator,
                       span: float = 2.0, mode: str = "mixture",
                       caps: Caps | None = None, grid: DyadicGrid | None = None) -> InversionRun:
    """Level-k repelling process for a continuum field, in macroscopic time."""
    if grid is None:
        grid = build_dyadic_grid(k, span)
    values = restrict_field(grid, lam)
    runner = run_vertex_repelling_direct if mode == "direct" else run_vertex_repelling_mixture
    run = runner(grid.tree, values, alpha, rng, caps)
    return _rescale_run(run, grid.time_scale)


def _rescale_run(run: InversionRun, scale: float) -> InversionRun:
    path = PathRecord(
        tree=run.path.tree,
        start=run.path.start,
        times=run.path.times * scale,
        targets=run.path.targets,
        lifetime=run.path.lifetime * scale,
        killed=run.path.killed,
    )
    log = EventLog(
        events=[(t * scale, a, b, c) for t, a, b, c in run.event_log.events],
        terminal=run.event_log.terminal,
    )
    return InversionRun(
        path=path, event_log=log, alpha=run.alpha, mode=run.mode,
        initial_lambda=run.initial_lambda, terminal_lambda=run.terminal_lambda,
        initial_network=run.initial_network, terminal_theta=run.terminal_theta,
    )


def run_summary(grid: DyadicGrid, run: InversionRun, half_span: float | None = None) -> tuple:
    """(lifetime, sup displacement, occupation of [0, span/2]) in macro units."""
    half = grid.span / 2.0 if half_span is None else half_span
    visited = set(run.path.segment_vertices().tolist())
    sup_disp = max(grid.positions[v] for v in visited)
    consumed = run.initial_lambda - run.terminal_lambda
    occupation = float(consumed[grid.positions <= half].sum()) * grid.time_scale
    return (float(run.lifetime), float(sup_disp), occupation)


def collect_level_summaries(lam, levels, alpha: float, reps: int, rng: np.random.Generator,
                            span: float = 2.0, mode: str = "mixture") -> dict:
    """Per-level arrays of (lifetime, sup displacement, occupation) triples."""
    out = {}
    for k in levels:
        grid = build_dyadic_grid(k, span)
        rows = []
        for _ in range(reps):
            run = run_mesh_repelling(lam, k, alpha, rng, span=span, mode=mode, grid=grid)
            rows.append(run_summary(grid, run))
        out[k] = np.asarray(rows)
    return out


STAT_NAMES = ("lifetime", "sup_displacement", "occupation_half_span")


def convergence_diagnostics(runs_by_level: dict) -> dict:
    """Pairwise Wasserstein distances between consecutive levels, per statistic.

    PASS means the distances shrink as the mesh refines (Cauchy behaviour
    consistent with weak convergence); no external truth is available.
    """
    levels = sorted(runs_by_level)
    if len(levels) < 3:
        raise InsufficientLevels("need at least three consecutive levels")
    if any(b - a != 1 for a, b in zip(levels, levels[1:])):
        raise InsufficientLevels("levels must be consecutive")
    report = {"levels": levels, "distances": {}, "decreasing": {}}
    for j, name in enumerate(STAT_NAMES):
        dists = []
        for a, b in zip(levels, levels[1:]):
            da = np.asarray(runs_by_level[a])[:, j]
            db = np.asarray(runs_by_level[b])[:, j]
            dists.append(wasserstein_1d(da, db))
        report["distances"][name] = dists
        report["decreasing"][name] = all(x > y for x, y in zip(dists, dists[1:]))
    report["pass"] = all(report["decreasing"].values())
    return report
