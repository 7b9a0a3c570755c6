"""Multigrid-reduction-in-time with a full approximation scheme.

The all-at-once system on every level is block lower bidiagonal:

    u_0 = g_0,    u_i - step(u_{i-1}) = g_i ,

relaxation solves single blocks exactly (F-sweeps walk the points between
C-points, C-updates solve at C-points), and the coarse level receives the
injected iterate together with the full-approximation right-hand side
A_c(R u) + R (g - A u), optionally restricted to a coarser spatial grid.
Corrections come back through ideal interpolation: C-points are corrected
and F-points follow by propagation.

Storage is the part worth explaining.  Workers persist a level's iterate
only at the closing C-points of their intervals; every F-value is
recomputed on the fly by the sweep that needs it, and each coarse level
adds two full vectors (the kept restricted iterate and the right-hand
side).  Index 0 never needs a slot: on every level the iterate there
equals the restricted initial value, which the problem hands out per
grid.  The measured peak in StorageReport counts exactly these workspace
states; running states inside a sweep, Newton temporaries, and the
transient buffers of the coarsest-level gather are not persistent and are
not charged, mirroring how the serial baseline is charged a single
running state.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NewtonConvergenceError
from .problems import joule_loss
from .runtime import (
    Decomposition, NullTransport, gather_to_root, reduce_max, reduce_norm,
    scatter_from_root,
)
from .spatial import assign_spatial_levels
from .state import BlockState, SpaceTimeVector

CYCLE_KINDS = ("two-level", "V", "F")
STOPPING_KINDS = ("residual-norm", "qoi-change")
QOI_FLOOR = 1e-30


@dataclass(frozen=True)
class CycleSpec:
    kind: str = "V"
    gamma: int = 1
    max_iters: int = 50
    spatial_strategy: str = "none"
    nested_iterations: bool = False

    def __post_init__(self):
        if self.kind not in CYCLE_KINDS:
            raise ValueError(f"cycle kind must be one of {CYCLE_KINDS}, "
                             f"got {self.kind!r}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class StoppingCriterion:
    kind: str = "residual-norm"
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.kind not in STOPPING_KINDS:
            raise ValueError(f"stopping kind must be one of {STOPPING_KINDS}, "
                             f"got {self.kind!r}")
        if self.tolerance <= 0.0:
            raise ValueError(f"tolerance must be positive, "
                             f"got {self.tolerance}")


def qoi_change(p_new, p_old, floor=QOI_FLOOR):
    """Largest relative change between two per-C-point loss samples."""
    p_new = np.asarray(p_new, dtype=float)
    p_old = np.asarray(p_old, dtype=float)
    if p_new.shape != p_old.shape:
        raise ValueError(f"sample shapes differ: {p_new.shape} vs {p_old.shape}")
    if p_new.size == 0:
        return 0.0
    return float(np.max(np.abs(p_new - p_old)
                        / np.maximum(np.abs(p_old), floor)))


def storage_estimate(n_levels, n_fine_steps, factors, n_workers, sizes=None,
                     coarsest_factor=None):
    """Peak per-worker stored states of the lean layout.

    Level l keeps its iterate at owned C-points (about
    N_t / (M_{l+1} p) of them, where M_l is the product of the first l
    splitting factors), and every coarse level keeps two full vectors of
    its owned points.  ``factors`` are the n_levels - 1 inter-level
    factors; the coarsest level's own splitting reuses the last one
    unless ``coarsest_factor`` says otherwise.  ``sizes`` weights each
    level's states (defaults to 1 each: a state count).
    """
    factors = list(factors)
    if len(factors) != n_levels - 1:
        raise ValueError(f"{n_levels} levels need {n_levels - 1} factors, "
                         f"got {len(factors)}")
    if sizes is None:
        sizes = [1] * n_levels
    if len(sizes) != n_levels:
        raise ValueError(f"need one size per level, got {len(sizes)}")
    if coarsest_factor is None:
        coarsest_factor = factors[-1] if factors else 2
    prods = [1]
    for m in factors:
        prods.append(prods[-1] * m)
    prods.append(prods[-1] * coarsest_factor)
    total = 0
    for l in range(n_levels):
        total += math.ceil(n_fine_steps / (prods[l + 1] * n_workers)) * sizes[l]
        if l >= 1:
            total += 2 * math.ceil(n_fine_steps / (prods[l] * n_workers)) * sizes[l]
    return total


@dataclass
class StorageReport:
    per_level: list
    total: int
    estimate: int


@dataclass
class SolverRun:
    converged: bool = False
    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    qoi_changes: list = field(default_factory=list)
    iteration_seconds: list = field(default_factory=list)
    initial_residual: float = 0.0
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0
    level_seconds: list = field(default_factory=list)
    storage: StorageReport | None = None
    n_workers: int = 1
    failure: str | None = None

    @property
    def total_seconds(self):
        return self.setup_seconds + self.solve_seconds


# --- reference operations on materialized vectors --------------------------------
#
# These state the relaxation and cycle contracts in the plainest possible
# form; the distributed engine below is cross-checked against them.

@dataclass(frozen=True)
class LevelContext:
    """One level's grid, splitting, and bound propagator."""

    grid: object
    splitting: object
    step: object  # step(u_prev, t_prev, t_next) -> BlockState

    def times(self):
        return self.grid.points


def level_context(problem, grid, splitting, spatial_level=0, smooth=False):
    def step(u_prev, t_prev, t_next):
        out, _ = problem.step(u_prev, t_prev, t_next, spatial_level,
                              guess=u_prev, smooth=smooth)
        return out
    return LevelContext(grid=grid, splitting=splitting, step=step)


def _relax(ctx, u, g, indices):
    t = ctx.times()
    out = u.clone()
    targets = set(int(i) for i in indices)
    for i in range(1, len(t)):
        if i in targets:
            upd = ctx.step(out[i - 1], float(t[i - 1]), float(t[i]))
            if g is not None:
                upd.add_scaled(g[i], 1.0)
            out[i] = upd
    return out


def f_relaxation(ctx, u, g=None):
    """Solve all F-point blocks given current C-values."""
    return _relax(ctx, u, g, ctx.splitting.f_indices)


def c_relaxation(ctx, u, g=None):
    """Solve all C-point blocks (index 0 stays: it is the initial value)."""
    c = [i for i in ctx.splitting.c_indices if i > 0]
    return _relax(ctx, u, g, c)


def two_level_cycle(fine, coarse, u, g, gamma=0, spatial=None):
    """One full-approximation two-grid pass over a materialized iterate.

    ``spatial`` is None or (hierarchy, fine_grid_index): when given, the
    restricted iterate and residual move one spatial grid down and the
    correction is interpolated back up.
    """
    u = f_relaxation(fine, u, g)
    for _ in range(gamma):
        u = c_relaxation(fine, u, g)
        u = f_relaxation(fine, u, g)

    t = fine.times()
    c_idx = [int(i) for i in fine.splitting.c_indices]
    u2, res = [], []
    for j, c in enumerate(c_idx):
        u2.append(u[c].clone())
        if c == 0:
            res.append(g[0] - u[0])
        else:
            prop = fine.step(u[c - 1], float(t[c - 1]), float(t[c]))
            res.append(g[c] - (u[c] - prop))
    if spatial is not None:
        hier, _ = spatial
        u2 = [hier.restrict_state(s) for s in u2]
        res = [hier.restrict_state(s) for s in res]

    tc = coarse.times()
    rhs = [u2[0] + res[0]]
    for j in range(1, len(c_idx)):
        prop = coarse.step(u2[j - 1], float(tc[j - 1]), float(tc[j]))
        rhs.append(u2[j] - prop + res[j])
    v = [rhs[0]]
    for j in range(1, len(c_idx)):
        v.append(coarse.step(v[j - 1], float(tc[j - 1]), float(tc[j])) + rhs[j])

    out = u.clone()
    for j, c in enumerate(c_idx):
        if c == 0:
            continue
        e = v[j] - u2[j]
        if spatial is not None:
            e = spatial[0].prolong_error(e)
        out[c] = out[c] + e
    return f_relaxation(fine, out, g)


# --- the distributed engine --------------------------------------------------------

class _Level:
    """Per-worker workspace of one time level."""

    def __init__(self, solver, index, grid, splitting, spatial_level):
        self.index = index
        self.grid = grid
        self.splitting = splitting
        self.spatial_level = spatial_level
        self.decomp = Decomposition(splitting, solver.transport.size)
        rank = solver.transport.rank
        self.c_idx = [int(c) for c in self.decomp.c_points(rank)]
        self.own_lo, self.own_hi = self.decomp.owned_range(rank)
        self.left_index = (self.decomp.left_boundary_index(rank)
                           if not self.decomp.is_empty(rank) else 0)
        self.anchor = solver.problem.initial_state(spatial_level)
        nf = solver.problem.spatial.size(spatial_level)
        ns = solver.problem.n_scalars
        alloc = solver._alloc_state
        self.c_store = [alloc(index, nf, ns, spatial_level)
                        for _ in self.c_idx]
        self.u_keep = None
        self.rhs = None
        if index > 0:
            n_owned = max(self.own_hi - self.own_lo, 0)
            self.u_keep = [alloc(index, nf, ns, spatial_level)
                           for _ in range(n_owned)]
            self.rhs = [alloc(index, nf, ns, spatial_level)
                        for _ in range(n_owned)]
        self.use_rhs = False  # plain initial-value level until a descent fills it
        self.seconds = 0.0

    def kept(self, i):
        return self.u_keep[i - self.own_lo]

    def rhs_at(self, i):
        return self.rhs[i - self.own_lo] if self.use_rhs else None


class MgritSolver:
    """Parallel-in-time solve of a problem over a time hierarchy."""

    def __init__(self, problem, hierarchy, cycle=None, stopping=None,
                 transport=None):
        t_setup = time.perf_counter()
        self.problem = problem
        self.hierarchy = hierarchy
        self.cycle = cycle if cycle is not None else CycleSpec()
        self.stopping = stopping if stopping is not None else StoppingCriterion()
        self.transport = transport if transport is not None else NullTransport()

        n_levels = hierarchy.n_levels
        if self.cycle.kind == "two-level" and n_levels > 2:
            n_levels = 2
        self.n_levels = n_levels
        self.assignment = assign_spatial_levels(
            self.cycle.spatial_strategy, n_levels, problem.spatial.n_grids)

        self._counts = [0] * n_levels
        self.levels = [
            _Level(self, l, hierarchy[l], hierarchy.splittings[l],
                   self.assignment[l])
            for l in range(n_levels)]
        self._loss_weights = problem.loss_weights(self.assignment[0])
        self._smooth = False
        self.setup_seconds = time.perf_counter() - t_setup

    # --- storage accounting ---

    def _alloc_state(self, level, nf, ns, spatial_level):
        self._counts[level] += 1
        return BlockState.zeros(nf, ns, spatial_level)

    def storage_report(self):
        est = storage_estimate(
            self.n_levels, self.hierarchy[0].n_steps,
            self.hierarchy.factors[:self.n_levels - 1],
            self.transport.size,
            coarsest_factor=self.levels[-1].splitting.factor)
        return StorageReport(per_level=list(self._counts),
                             total=sum(self._counts), estimate=est)

    # --- communication helpers ---

    def _rankwise(self, lvl):
        rank = self.transport.rank
        return rank, lvl.decomp

    def _exchange_left(self, lvl):
        """Send the last owned C-value right, fetch the left boundary."""
        rank, d = self._rankwise(lvl)
        if d.is_empty(rank):
            return None
        right = d.right_neighbor(rank)
        if right is not None and lvl.c_store:
            self.transport.send(right, lvl.c_store[-1])
        left = d.left_neighbor(rank)
        if left is None:
            return lvl.anchor
        return self.transport.recv(left)

    def _coarse_owner(self, nxt, j):
        for w in nxt.decomp.active_ranks():
            lo, hi = nxt.decomp.owned_range(w)
            if lo <= j < hi:
                return w
        raise RuntimeError(f"coarse point {j} has no owner")

    # --- sweeps ---

    def _step(self, lvl, u_prev, i):
        t = lvl.grid.points
        out, _ = self.problem.step(u_prev, float(t[i - 1]), float(t[i]),
                                   lvl.spatial_level, guess=u_prev,
                                   smooth=self._smooth)
        return out

    def _walk_frun(self, lvl, start_state, i_from, i_to):
        """Propagate over points (i_from, i_to): the F-run interior."""
        cur = start_state
        for i in range(i_from + 1, i_to):
            cur = self._step(lvl, cur, i)
            r = lvl.rhs_at(i)
            if r is not None:
                cur.add_scaled(r, 1.0)
        return cur

    def _fc_sweep(self, lvl):
        """Fused F-then-C relaxation over the owned units."""
        t0 = time.perf_counter()
        boundary = self._exchange_left(lvl)
        start = boundary
        prev_c = lvl.left_index
        for k, c in enumerate(lvl.c_idx):
            last_f = self._walk_frun(lvl, start, prev_c, c)
            next_start = lvl.c_store[k].clone()  # pre-update value
            upd = self._step(lvl, last_f, c)
            r = lvl.rhs_at(c)
            if r is not None:
                upd.add_scaled(r, 1.0)
            lvl.c_store[k].copy_from(upd)
            start, prev_c = next_start, c
        lvl.seconds += time.perf_counter() - t0

    def _restrict_sweep(self, lvl, nxt):
        """Final F-sweep fused with residual injection and the coarse fill.

        Computes, for every owned unit's closing C-point c with coarse
        index j = c / m: the kept restricted iterate and the coarse FAS
        right-hand side, then redistributes both to the coarse owner and
        seeds the coarse iterate with the kept values.
        """
        t0 = time.perf_counter()
        coarsen = nxt.spatial_level != lvl.spatial_level
        hier = self.problem.spatial
        rank, d = self._rankwise(lvl)
        boundary = self._exchange_left(lvl)

        outgoing = []  # (dest, j, kept, rhs)
        if not d.is_empty(rank):
            start = boundary
            prev_c = lvl.left_index
            left_kept = hier.restrict_state(start) if coarsen else start
            for k, c in enumerate(lvl.c_idx):
                last_f = self._walk_frun(lvl, start, prev_c, c)
                prop = self._step(lvl, last_f, c)
                res = prop - lvl.c_store[k]
                r = lvl.rhs_at(c)
                if r is not None:
                    res.add_scaled(r, 1.0)
                kept = (hier.restrict_state(lvl.c_store[k]) if coarsen
                        else lvl.c_store[k].clone())
                j = d.first_unit(rank) + k + 1
                rhs = kept - self._step(nxt, left_kept, j)
                rhs.add_scaled(hier.restrict_state(res) if coarsen else res,
                               1.0)
                dest = self._coarse_owner(nxt, j)
                if dest == rank:
                    nxt.kept(j).copy_from(kept)
                    nxt.rhs[j - nxt.own_lo].copy_from(rhs)
                else:
                    outgoing.append((dest, j, kept, rhs))
                start, prev_c, left_kept = lvl.c_store[k], c, kept
        for dest, j, kept, rhs in outgoing:
            self.transport.send(dest, (j, kept, rhs))
        # collect what other ranks computed for my coarse points
        for j in range(max(nxt.own_lo, 1), nxt.own_hi):
            src = lvl.decomp.unit_owner(j - 1)
            if src == rank:
                continue
            jj, kept, rhs = self.transport.recv(src)
            if jj != j:
                raise RuntimeError(f"restriction order broke: {jj} != {j}")
            nxt.kept(j).copy_from(kept)
            nxt.rhs[j - nxt.own_lo].copy_from(rhs)
        nxt.use_rhs = True
        # seed the coarse iterate at its own C-points
        for k, c in enumerate(nxt.c_idx):
            nxt.c_store[k].copy_from(nxt.kept(c))
        lvl.seconds += time.perf_counter() - t0

    def _coarsest_solve(self, lvl, nested=False):
        """Gather, sequential forward solve on rank 0, scatter.  In the
        main phase the kept slots then hold v - kept (the error); during
        nested iterations they hold v itself."""
        t0 = time.perf_counter()
        rank = self.transport.rank
        chunk = ([s.clone() for s in lvl.rhs] if lvl.use_rhs
                 else [None] * max(lvl.own_hi - lvl.own_lo, 0))
        gathered = gather_to_root(self.transport, (lvl.own_lo, chunk))
        if rank == 0:
            n = lvl.grid.n_points
            full = [None] * n
            for lo, part in gathered:
                for off, s in enumerate(part):
                    full[lo + off] = s
            v = lvl.anchor
            for i in range(1, n):
                nv = self._step(lvl, v, i)
                if full[i] is not None:
                    nv.add_scaled(full[i], 1.0)
                full[i] = nv
                v = nv
            chunks = []
            for w in range(self.transport.size):
                lo, hi = lvl.decomp.owned_range(w)
                chunks.append(full[lo:hi])
        else:
            chunks = None
        mine = scatter_from_root(self.transport, chunks)
        for off, vi in enumerate(mine):
            i = lvl.own_lo + off
            slot = lvl.u_keep[off]
            if nested:
                slot.copy_from(vi)
            else:
                slot.field[:] = vi.field - slot.field
                slot.scalars[:] = vi.scalars - slot.scalars
            # deposit the solution at the coarsest level's own C-points
        for k, c in enumerate(lvl.c_idx):
            if nested:
                lvl.c_store[k].copy_from(lvl.kept(c))
            else:
                lvl.c_store[k].add_scaled(lvl.kept(c), 1.0)
        lvl.seconds += time.perf_counter() - t0

    def _ascend(self, coarse, fine, inject=False, solved=False):
        """Carry corrections (or, for nested iterations, values) from a
        coarse level into the fine C-store.

        ``solved`` marks the coarsest level, whose kept slots already
        hold the payload for every owned point; otherwise an F-walk
        reconstructs the coarse iterate and emits v - kept on the fly.
        """
        t0 = time.perf_counter()
        coarsen = coarse.spatial_level != fine.spatial_level
        hier = self.problem.spatial
        rank = self.transport.rank
        d = coarse.decomp

        def emit(j, payload, outgoing):
            dest = fine.decomp.unit_owner(j - 1)
            if dest == rank:
                self._apply_payload(fine, j, payload, inject, coarsen, hier)
            else:
                outgoing.append((dest, j, payload))

        outgoing = []
        if not d.is_empty(rank):
            if solved:
                for i in range(max(coarse.own_lo, 1), coarse.own_hi):
                    emit(i, coarse.kept(i).clone(), outgoing)
            else:
                boundary = self._exchange_left(coarse)
                start = boundary
                prev_c = coarse.left_index
                closes = list(coarse.c_idx)
                spans = list(zip([coarse.left_index] + closes[:-1], closes))
                if closes and coarse.own_hi - 1 > closes[-1]:
                    spans.append((closes[-1], coarse.own_hi - 1))
                elif not closes:
                    spans = [(coarse.left_index, coarse.own_hi - 1)]
                for si, (lo_c, hi_c) in enumerate(spans):
                    cur = start
                    for i in range(lo_c + 1, hi_c + 1):
                        at_c = si < len(coarse.c_idx) and i == hi_c
                        if at_c:
                            cur = coarse.c_store[si]
                        else:
                            cur = self._step(coarse, cur, i)
                            r = coarse.rhs_at(i)
                            if r is not None:
                                cur.add_scaled(r, 1.0)
                        if inject:
                            emit(i, cur.clone(), outgoing)
                        else:
                            emit(i, cur - coarse.kept(i), outgoing)
                    start = cur
        for dest, j, payload in outgoing:
            self.transport.send(dest, (j, payload))
        for k in range(len(fine.c_idx)):
            j = fine.decomp.first_unit(rank) + k + 1
            src = self._coarse_owner(coarse, j)
            if src == rank:
                continue
            jj, payload = self.transport.recv(src)
            if jj != j:
                raise RuntimeError(f"ascent order broke: {jj} != {j}")
            self._apply_payload(fine, j, payload, inject, coarsen, hier)
        coarse.seconds += time.perf_counter() - t0

    def _apply_payload(self, fine, j, payload, inject, coarsen, hier):
        k = j - fine.decomp.first_unit(self.transport.rank) - 1
        if not 0 <= k < len(fine.c_idx):
            return
        if coarsen:
            payload = hier.prolong_error(payload)
        if inject:
            fine.c_store[k].copy_from(payload)
        else:
            fine.c_store[k].add_scaled(payload, 1.0)

    def _probe(self, lvl):
        """Measure the fine residual and per-C-point losses without
        touching stored state (F-values are recomputed transiently)."""
        t0 = time.perf_counter()
        rank, d = self._rankwise(lvl)
        sum_sq = 0.0
        losses = np.zeros(len(lvl.c_idx))
        if not d.is_empty(rank):
            boundary = self._exchange_left(lvl)
            start = boundary
            prev_c = lvl.left_index
            dt_world = lvl.grid.points
            for k, c in enumerate(lvl.c_idx):
                last_f = self._walk_frun(lvl, start, prev_c, c)
                prop = self._step(lvl, last_f, c)
                res = prop - lvl.c_store[k]
                r = lvl.rhs_at(c)
                if r is not None:
                    res.add_scaled(r, 1.0)
                sum_sq += res.norm_sq()
                dt = float(dt_world[c] - dt_world[c - 1])
                losses[k] = joule_loss(last_f, lvl.c_store[k], dt,
                                       self._loss_weights)
                start, prev_c = lvl.c_store[k], c
        lvl.seconds += time.perf_counter() - t0
        return sum_sq, losses

    # --- cycles ---

    def _descend(self, l):
        lvl = self.levels[l]
        for _ in range(self.cycle.gamma):
            self._fc_sweep(lvl)
        self._restrict_sweep(lvl, self.levels[l + 1])

    def _vcycle(self, l):
        if l == self.n_levels - 1:
            self._coarsest_solve(self.levels[l])
            return
        self._descend(l)
        self._vcycle(l + 1)
        self._ascend(self.levels[l + 1], self.levels[l],
                     solved=(l + 1 == self.n_levels - 1))

    def _fcycle(self, l):
        if l == self.n_levels - 1:
            self._coarsest_solve(self.levels[l])
            return
        self._descend(l)
        self._fcycle(l + 1)
        self._ascend(self.levels[l + 1], self.levels[l],
                     solved=(l + 1 == self.n_levels - 1))
        if l > 0:
            self._vcycle(l)

    def _iterate_once(self):
        if self.n_levels == 1:
            self._coarsest_solve_single()
            return
        if self.cycle.kind == "F":
            self._fcycle(0)
        else:
            self._vcycle(0)

    def _coarsest_solve_single(self):
        """Degenerate 1-level hierarchy: plain sequential walk depositing
        the C-point values (everything else stays transient)."""
        lvl = self.levels[0]
        t0 = time.perf_counter()
        rank, d = self._rankwise(lvl)
        if not d.is_empty(rank):
            # sequential dependence: wait for the finished left value
            left = d.left_neighbor(rank)
            start = lvl.anchor if left is None else self.transport.recv(left)
            prev_c = lvl.left_index
            for k, c in enumerate(lvl.c_idx):
                last_f = self._walk_frun(lvl, start, prev_c, c)
                lvl.c_store[k].copy_from(self._step(lvl, last_f, c))
                start, prev_c = lvl.c_store[k], c
            right = d.right_neighbor(rank)
            if right is not None and lvl.c_store:
                self.transport.send(right, lvl.c_store[-1])
        lvl.seconds += time.perf_counter() - t0

    # --- nested iterations ---

    def _nested_iterations(self):
        self._smooth = True
        try:
            bottom = self.levels[-1]
            if self.n_levels == 1:
                self._coarsest_solve_single()
                return
            bottom.use_rhs = False
            self._coarsest_solve(bottom, nested=True)
            for l in range(self.n_levels - 2, -1, -1):
                self._ascend(self.levels[l + 1], self.levels[l], inject=True,
                             solved=(l + 1 == self.n_levels - 1))
                if l > 0:
                    self.levels[l].use_rhs = False
                    self._vcycle(l)
        finally:
            self._smooth = False

    # --- driver ---

    def _initialize_guess(self):
        for lvl in self.levels:
            for s in lvl.c_store:
                s.copy_from(lvl.anchor)
            lvl.use_rhs = False

    def seed(self, trajectory):
        """Load the fine-level C-store from a full trajectory (every rank
        passes the same global SpaceTimeVector)."""
        lvl = self.levels[0]
        for k, c in enumerate(lvl.c_idx):
            lvl.c_store[k].copy_from(trajectory[c])

    def solve(self, gather_solution=True, initial_guess=None):
        """Run cycles until the stopping test passes or max_iters is hit.

        Returns (run, solution); the materialized fine trajectory arrives
        on rank 0 (None elsewhere, and None when gather_solution=False).
        A given initial_guess replaces both the constant-anchor start and
        the nested-iteration setup phase.
        """
        run = SolverRun(n_workers=self.transport.size)
        t_setup = time.perf_counter()
        self._initialize_guess()
        if initial_guess is not None:
            self.seed(initial_guess)
        elif self.cycle.nested_iterations and self.n_levels > 1:
            try:
                self._nested_iterations()
            except NewtonConvergenceError as e:
                if self.transport.size > 1:
                    raise
                run.failure = str(e)
        run.setup_seconds = self.setup_seconds + (time.perf_counter() - t_setup)

        t_solve = time.perf_counter()
        if run.failure is None:
            try:
                run.initial_residual, prev_losses = self._measure()
            except NewtonConvergenceError as e:
                if self.transport.size > 1:
                    raise
                run.failure = str(e)
        if run.failure is None:
            for it in range(1, self.cycle.max_iters + 1):
                try:
                    self._iterate_once()
                    norm, losses = self._measure()
                except NewtonConvergenceError as e:
                    if self.transport.size > 1:
                        raise
                    run.failure = str(e)
                    break
                change = self._loss_change(losses, prev_losses)
                prev_losses = losses
                run.iterations = it
                run.residual_norms.append(norm)
                run.qoi_changes.append(change)
                run.iteration_seconds.append(time.perf_counter() - t_solve)
                if self.n_levels == 1:
                    run.converged = True
                    break
                value = norm if self.stopping.kind == "residual-norm" else change
                if value < self.stopping.tolerance:
                    run.converged = True
                    break
        run.solve_seconds = time.perf_counter() - t_solve
        run.level_seconds = [lvl.seconds for lvl in self.levels]
        run.storage = self.storage_report()

        solution = None
        if gather_solution and run.failure is None:
            solution = self._materialize()
        return run, solution

    def _measure(self):
        sum_sq, losses = self._probe(self.levels[0])
        norm = reduce_norm(self.transport, sum_sq)
        return norm, losses

    def _loss_change(self, losses, prev):
        local = qoi_change(losses, prev) if losses.size else 0.0
        return reduce_max(self.transport, local)

    def _materialize(self):
        """Walk out the full fine trajectory and gather it on rank 0."""
        lvl = self.levels[0]
        rank, d = self._rankwise(lvl)
        chunk = []
        if not d.is_empty(rank):
            boundary = self._exchange_left(lvl)
            start = boundary
            prev_c = lvl.left_index
            closes = list(lvl.c_idx)
            spans = list(zip([lvl.left_index] + closes[:-1], closes))
            if closes and lvl.own_hi - 1 > closes[-1]:
                spans.append((closes[-1], lvl.own_hi - 1))
            elif not closes:
                spans = [(lvl.left_index, lvl.own_hi - 1)]
            for si, (lo_c, hi_c) in enumerate(spans):
                cur = start
                for i in range(lo_c + 1, hi_c + 1):
                    if si < len(closes) and i == hi_c:
                        cur = lvl.c_store[si]
                    else:
                        cur = self._step(lvl, cur, i)
                    chunk.append(cur.clone())
                start = cur
        gathered = gather_to_root(self.transport, (lvl.own_lo, chunk))
        if rank != 0:
            return None
        states = [lvl.anchor.clone()]
        parts = sorted(gathered, key=lambda t: t[0])
        for lo, part in parts:
            states.extend(part)
        return SpaceTimeVector(states, 0)


def mgrit_solve(problem, hierarchy, cycle=None, stopping=None, transport=None,
                gather_solution=True, initial_guess=None):
    solver = MgritSolver(problem, hierarchy, cycle, stopping, transport)
    return solver.solve(gather_solution=gather_solution,
                        initial_guess=initial_guess)
