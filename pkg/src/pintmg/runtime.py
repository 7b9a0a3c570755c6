"""Worker decomposition and message transports.

Time points are dealt out as whole C-intervals: unit k of a level is the
half-open point run (c_k, c_{k+1}] ending at its closing C-point, so a
worker boundary never splits an F-run and the state a worker needs from
outside is exactly the C-point immediately left of its range.  Unit
counts are balanced with the remainder going to the lowest ranks, which
keeps worker 0 owner of index 0 (the anchor) on every level; ranks beyond
the unit count idle on that level.

Two transports share one protocol (send/recv between ranks with per-pair
FIFO order): an in-process one running workers as threads, used by the
test suite, and a multiprocessing one for scaling runs.  The thread
transport deep-copies payloads so both have message-passing semantics.
"""

from __future__ import annotations

import copy
import pickle
import queue
import threading
from bisect import bisect_right
from dataclasses import dataclass

from .errors import TransportError

DEFAULT_TIMEOUT = 120.0


class Decomposition:
    """Ownership of one level's C-intervals across n_workers ranks."""

    def __init__(self, splitting, n_workers):
        if n_workers < 1:
            raise ValueError(f"n_workers must be >= 1, got {n_workers}")
        self.splitting = splitting
        self.n_workers = n_workers
        k = splitting.n_intervals
        base, rem = divmod(k, n_workers)
        self._n_units = [base + 1 if w < rem else base
                         for w in range(n_workers)]
        self._first_unit = [0] * n_workers
        for w in range(1, n_workers):
            self._first_unit[w] = self._first_unit[w - 1] + self._n_units[w - 1]
        self._last_rank = max(
            (w for w in range(n_workers) if self._n_units[w] > 0), default=0)

    def n_units(self, rank):
        return self._n_units[rank]

    def first_unit(self, rank):
        return self._first_unit[rank]

    def unit_owner(self, unit):
        """Rank whose unit range contains the given global unit index."""
        if not 0 <= unit < self.splitting.n_intervals:
            raise ValueError(f"unit {unit} out of range")
        ends = [self._first_unit[w] + self._n_units[w]
                for w in range(self.n_workers)]
        return bisect_right(ends, unit)

    def is_empty(self, rank):
        return self._n_units[rank] == 0 and not (
            rank == 0 and self.splitting.n_intervals == 0)

    def c_points(self, rank):
        """Global indices of the closing C-points of rank's units."""
        c = self.splitting.c_indices
        first = self._first_unit[rank]
        return c[first + 1: first + 1 + self._n_units[rank]]

    def left_boundary_index(self, rank):
        """The C-point immediately left of rank's owned range."""
        return int(self.splitting.c_indices[self._first_unit[rank]])

    def owned_range(self, rank):
        """Owned points as [start, stop); the last active rank also owns
        any F-tail trailing the final C-point."""
        if self.is_empty(rank):
            return (0, 0)
        c = self.splitting.c_indices
        lo = self.left_boundary_index(rank) + 1
        if self.splitting.n_intervals == 0:
            return (1, self.splitting.n_points) if rank == 0 else (0, 0)
        hi = int(c[self._first_unit[rank] + self._n_units[rank]]) + 1
        if rank == self._last_rank:
            hi = self.splitting.n_points
        return (lo, hi)

    def active_ranks(self):
        return [w for w in range(self.n_workers) if not self.is_empty(w)]

    def left_neighbor(self, rank):
        """Closest lower active rank, or None for the first active one."""
        for w in range(rank - 1, -1, -1):
            if not self.is_empty(w):
                return w
        return None

    def right_neighbor(self, rank):
        for w in range(rank + 1, self.n_workers):
            if not self.is_empty(w):
                return w
        return None


# --- transports ---------------------------------------------------------------

class NullTransport:
    """Single worker: no peers to talk to."""

    rank = 0
    size = 1

    def send(self, dst, payload):
        raise TransportError("no peers in a single-worker run")

    def recv(self, src):
        raise TransportError("no peers in a single-worker run")


class _InboxTransport:
    """Shared recv logic: one inbox per rank, (src, payload) messages,
    out-of-order arrivals stashed per source."""

    def __init__(self, rank, size, inboxes, failure, timeout):
        self.rank = rank
        self.size = size
        self._inboxes = inboxes
        self._stash = {}
        self._failure = failure
        self._timeout = timeout

    def _put(self, dst, item):
        self._inboxes[dst].put(item)

    def send(self, dst, payload):
        if not 0 <= dst < self.size or dst == self.rank:
            raise TransportError(f"rank {self.rank} cannot send to {dst}")
        self._put(dst, (self.rank, self._encode(payload)))

    def recv(self, src):
        if not 0 <= src < self.size or src == self.rank:
            raise TransportError(f"rank {self.rank} cannot recv from {src}")
        stash = self._stash.get(src)
        if stash:
            return stash.pop(0)
        waited = 0.0
        while True:
            if self._failure is not None and self._failure.is_set():
                raise TransportError(f"rank {self.rank}: a peer failed")
            try:
                sender, payload = self._inboxes[self.rank].get(timeout=0.2)
            except queue.Empty:
                waited += 0.2
                if waited >= self._timeout:
                    raise TransportError(
                        f"rank {self.rank} timed out waiting for {src}")
                continue
            if sender == src:
                return payload
            self._stash.setdefault(sender, []).append(payload)

    def _encode(self, payload):
        # snapshot at send time: thread queues pass references and
        # multiprocessing queues pickle lazily in a feeder thread, so
        # without this the sender could mutate a message in flight
        return copy.deepcopy(payload)


class ThreadTransport(_InboxTransport):
    """In-process channels for same-process workers."""


class ProcessTransport(_InboxTransport):
    """Multiprocessing queues for separate worker processes."""


def thread_channels(n_workers, timeout=DEFAULT_TIMEOUT):
    failure = threading.Event()
    inboxes = [queue.Queue() for _ in range(n_workers)]
    return [ThreadTransport(w, n_workers, inboxes, failure, timeout)
            for w in range(n_workers)], failure


# --- collectives ----------------------------------------------------------------

def reduce_norm(transport, local_sum_sq):
    """Square root of the rank-ascending sum of per-worker partial sums
    of squares; every rank returns the same value."""
    if transport.size == 1:
        return float(local_sum_sq) ** 0.5
    if transport.rank == 0:
        total = float(local_sum_sq)
        for src in range(1, transport.size):
            total += float(transport.recv(src))
        norm = total ** 0.5
        for dst in range(1, transport.size):
            transport.send(dst, norm)
        return norm
    transport.send(0, float(local_sum_sq))
    return float(transport.recv(0))


def reduce_max(transport, local_value):
    if transport.size == 1:
        return float(local_value)
    if transport.rank == 0:
        total = float(local_value)
        for src in range(1, transport.size):
            total = max(total, float(transport.recv(src)))
        for dst in range(1, transport.size):
            transport.send(dst, total)
        return total
    transport.send(0, float(local_value))
    return float(transport.recv(0))


def gather_to_root(transport, payload):
    """Rank-ordered gather; returns the list on rank 0, None elsewhere."""
    if transport.size == 1:
        return [payload]
    if transport.rank == 0:
        out = [payload]
        for src in range(1, transport.size):
            out.append(transport.recv(src))
        return out
    transport.send(0, payload)
    return None


def scatter_from_root(transport, items):
    """Inverse of gather: rank 0 deals items[w] to each rank w."""
    if transport.size == 1:
        return items[0]
    if transport.rank == 0:
        if len(items) != transport.size:
            raise TransportError(
                f"scatter needs {transport.size} items, got {len(items)}")
        for dst in range(1, transport.size):
            transport.send(dst, items[dst])
        return items[0]
    return transport.recv(0)


def broadcast_from_root(transport, payload=None):
    if transport.size == 1:
        return payload
    if transport.rank == 0:
        for dst in range(1, transport.size):
            transport.send(dst, payload)
        return payload
    return transport.recv(0)


# --- SPMD drivers ----------------------------------------------------------------

def run_spmd_threads(n_workers, fn, payload, timeout=DEFAULT_TIMEOUT):
    """Run fn(transport, payload) on n_workers threads; returns the
    per-rank results, re-raising the first worker failure."""
    if n_workers == 1:
        return [fn(NullTransport(), payload)]
    transports, failure = thread_channels(n_workers, timeout)
    results = [None] * n_workers
    errors = [None] * n_workers

    def entry(rank):
        try:
            results[rank] = fn(transports[rank], payload)
        except BaseException as e:  # propagate to the driver
            errors[rank] = e
            failure.set()

    threads = [threading.Thread(target=entry, args=(w,), daemon=True)
               for w in range(n_workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=timeout + 10.0)
    for e in errors:
        if e is not None:
            raise e
    if any(t.is_alive() for t in threads):
        raise TransportError("worker threads did not finish")
    return results


def _process_entry(rank, size, fn, payload, inboxes, result_queue, timeout):
    transport = ProcessTransport(rank, size, inboxes, None, timeout)
    try:
        result_queue.put((rank, True, fn(transport, payload)))
    except BaseException as e:
        result_queue.put((rank, False, f"{type(e).__name__}: {e}"))


def run_spmd_processes(n_workers, fn, payload, timeout=DEFAULT_TIMEOUT):
    """Run fn(transport, payload) on n_workers OS processes.  fn and its
    result must be picklable."""
    import multiprocessing as mp

    if n_workers == 1:
        return [fn(NullTransport(), payload)]
    pickle.dumps(payload)  # fail fast with a clear origin
    ctx = mp.get_context("fork")
    inboxes = [ctx.Queue() for _ in range(n_workers)]
    result_queue = ctx.Queue()
    procs = [ctx.Process(target=_process_entry,
                         args=(w, n_workers, fn, payload, inboxes,
                               result_queue, timeout), daemon=True)
             for w in range(n_workers)]
    for p in procs:
        p.start()
    results = [None] * n_workers
    try:
        for _ in range(n_workers):
            rank, ok, value = result_queue.get(timeout=timeout)
            if not ok:
                raise TransportError(f"worker {rank} failed: {value}")
            results[rank] = value
    except queue.Empty:
        raise TransportError("worker processes did not report back")
    finally:
        for p in procs:
            p.join(timeout=5.0)
            if p.is_alive():
                p.terminate()
    return results


def run_spmd(n_workers, fn, payload, backend="thread",
             timeout=DEFAULT_TIMEOUT):
    if backend == "thread":
        return run_spmd_threads(n_workers, fn, payload, timeout)
    if backend == "process":
        return run_spmd_processes(n_workers, fn, payload, timeout)
    raise ValueError(f"unknown backend {backend!r}; use thread or process")
