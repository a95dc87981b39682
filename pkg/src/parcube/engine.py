"""Parallel execution engine: group scheduling, reductions, accumulators.

Mirrors a work-group launch on a data-parallel device: independent work
items are dispatched to a thread pool, and all floating-point merges use
a fixed pairwise tree so results are bit-identical for any worker count.
Thread workers suit the vectorized kernels here because numpy releases
the GIL inside its ufuncs.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

WORKERS_ENV_VAR = "PARCUBE_WORKERS"

DETERMINISTIC_TREE = "deterministic-tree"
UNORDERED = "unordered"


class GroupTaskError(RuntimeError):
    """A task failed; carries the lowest failing group id."""

    def __init__(self, group_id: int, cause: BaseException):
        self.group_id = group_id
        self.cause = cause
        super().__init__(f"task for group {group_id} failed: {cause!r}")


@dataclass(frozen=True)
class ExecConfig:
    """Worker count (0 = auto), reduction determinism, and chunking.

    `chunk` is the number of work items handed to one scheduling unit;
    0 lets the dispatcher pick.  Chunking never affects results, only
    scheduling granularity.
    """

    workers: int = 0
    deterministic: bool = True
    chunk: int = 0

    def __post_init__(self):
        if self.workers < 0:
            raise ValueError("workers must be >= 0")

    def resolve_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        env = os.environ.get(WORKERS_ENV_VAR)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ValueError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}")
            if n > 0:
                return n
        return os.cpu_count() or 1

    @property
    def reduction_mode(self) -> str:
        return DETERMINISTIC_TREE if self.deterministic else UNORDERED


def tree_sum(values, axis: int = -1):
    """Sum along `axis` with a fixed pairwise binary tree.

    Odd levels are padded with zeros (x + 0.0 == x exactly), so the tree
    shape depends only on the extent being reduced.  Returns a float when
    the input is 1-d.
    """
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0 and a.ndim == 1:
        return 0.0
    a = np.moveaxis(a, axis, -1)
    while a.shape[-1] > 1:
        if a.shape[-1] % 2:
            pad = [(0, 0)] * (a.ndim - 1) + [(0, 1)]
            a = np.pad(a, pad)
        a = a[..., 0::2] + a[..., 1::2]
    out = a[..., 0]
    return float(out) if out.ndim == 0 else out


def reduce(values, mode: str = DETERMINISTIC_TREE) -> float:
    """Sum a list of reals; empty input gives 0.

    `deterministic-tree` uses the fixed pairwise tree of `tree_sum`;
    `unordered` makes no ordering promise (plain left-to-right here).
    """
    if mode == DETERMINISTIC_TREE:
        a = np.asarray(values, dtype=np.float64).ravel()
        return tree_sum(a) if a.size else 0.0
    if mode == UNORDERED:
        total = 0.0
        for v in np.asarray(values, dtype=np.float64).ravel():
            total += v
        return float(total)
    raise ValueError(f"unknown reduction mode {mode!r}")


def parallel_for_groups(n_groups: int, task, cfg: ExecConfig | None = None) -> list:
    """Run `task(group_id)` for every id in [0, n_groups), results in id order.

    Distribution is static: contiguous chunks of ids go to pool workers.
    The first failing group (lowest id among failures) aborts the call and
    is surfaced as GroupTaskError; no partial results are returned.
    """
    cfg = cfg or ExecConfig()
    n_groups = int(n_groups)
    if n_groups < 0:
        raise ValueError("n_groups must be >= 0")
    if n_groups == 0:
        return []
    workers = cfg.resolve_workers()

    if workers == 1:
        results = []
        for gid in range(n_groups):
            try:
                results.append(task(gid))
            except Exception as exc:  # noqa: BLE001 - contract surfaces any task error
                raise GroupTaskError(gid, exc) from exc
        return results

    chunk = cfg.chunk if cfg.chunk > 0 else max(1, -(-n_groups // (workers * 4)))
    cancelled = threading.Event()

    def run_chunk(start: int, stop: int):
        out = []
        for gid in range(start, stop):
            if cancelled.is_set():
                return start, None, None
            try:
                out.append(task(gid))
            except Exception as exc:  # noqa: BLE001
                cancelled.set()
                return start, None, (gid, exc)
        return start, out, None

    starts = list(range(0, n_groups, chunk))
    results = [None] * n_groups
    first_failure = None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_chunk, s, min(s + chunk, n_groups)) for s in starts]
        for fut in futures:
            start, out, failure = fut.result()
            if failure is not None:
                gid, exc = failure
                if first_failure is None or gid < first_failure[0]:
                    first_failure = (gid, exc)
            elif out is not None:
                results[start : start + len(out)] = out
    if first_failure is not None:
        gid, exc = first_failure
        raise GroupTaskError(gid, exc) from exc
    return results


def parallel_map_chunks(n_items: int, chunk: int, task, cfg: ExecConfig | None = None) -> list:
    """Run `task(start, stop)` over fixed-size item ranges, results in range order.

    The chunk size is part of the caller's configuration, never derived
    from the worker count, so per-chunk computations (and therefore any
    chunk-internal float accumulation) are identical for any pool size.
    """
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    starts = list(range(0, n_items, chunk))
    return parallel_for_groups(
        len(starts),
        lambda i: task(starts[i], min(starts[i] + chunk, n_items)),
        cfg,
    )


class DeterministicAccumulator:
    """Indexed accumulation via per-stream partial buffers.

    Each `add` targets a logical stream (default 0); `snapshot` merges the
    per-stream partials in ascending stream order with a pairwise tree, so
    the result depends only on the logical add order within each stream,
    not on which thread performed the add.
    """

    def __init__(self, size):
        self._shape = (size,) if np.isscalar(size) else tuple(size)
        self._partials: dict = {}
        self._lock = threading.Lock()

    def _buffer(self, stream):
        with self._lock:
            buf = self._partials.get(stream)
            if buf is None:
                buf = np.zeros(self._shape)
                self._partials[stream] = buf
            return buf

    def add(self, index, value, stream=0):
        buf = self._buffer(stream)
        buf[index] += value

    def add_array(self, values, stream=0):
        values = np.asarray(values, dtype=float)
        if values.shape != self._shape:
            raise IndexError(f"expected shape {self._shape}, got {values.shape}")
        buf = self._buffer(stream)
        buf += values

    def snapshot(self) -> np.ndarray:
        with self._lock:
            keys = sorted(self._partials)
            if not keys:
                return np.zeros(self._shape)
            stacked = np.stack([self._partials[k] for k in keys], axis=0)
        return tree_sum(stacked, axis=0) if len(keys) > 1 else stacked[0].copy()


class UnorderedAccumulator:
    """Shared-buffer accumulation, add order unspecified (atomic-add analogue)."""

    def __init__(self, size):
        self._shape = (size,) if np.isscalar(size) else tuple(size)
        self._buf = np.zeros(self._shape)
        self._lock = threading.Lock()

    def add(self, index, value, stream=0):
        with self._lock:
            self._buf[index] += value

    def add_array(self, values, stream=0):
        values = np.asarray(values, dtype=float)
        if values.shape != self._shape:
            raise IndexError(f"expected shape {self._shape}, got {values.shape}")
        with self._lock:
            self._buf += values

    def snapshot(self) -> np.ndarray:
        with self._lock:
            return self._buf.copy()


def accumulator(size, mode: str = DETERMINISTIC_TREE):
    """Create a shared accumulation handle for the given index space."""
    if mode == DETERMINISTIC_TREE:
        return DeterministicAccumulator(size)
    if mode == UNORDERED:
        return UnorderedAccumulator(size)
    raise ValueError(f"unknown accumulation mode {mode!r}")
