"""Time-tag post-processing.

Tags are integer picosecond timestamps. A stream is a nondecreasing int64
array per detector, or a merged pair of ``(channels, times)`` arrays.

Post-selection replaces the hardware dead time by a longer software one,
``tau_sel``, which removes afterpulses and makes the dead time the same for
every event:

* singles: a tag is kept iff it lies at least ``tau_sel`` after the last
  kept tag of the same detector;
* coincidences: a kept tag on either detector blocks *both* detectors for
  ``tau_sel``; a blocked tag is still kept if it is on the other detector
  and within the coincidence window of the tag that opened the block. Such
  a partner restarts the block.

Coincidence counting pairs tags with ``|t_a - (t_b + offset)| <= window/2``,
each tag used at most once. Pairs are formed greedily in time order, always
taking the earliest unused partner; with equal-length windows this yields
the largest possible number of disjoint pairs, so the count does not depend
on which stream is called ``a``.

Every kernel here is a single pass that carries a few integers of state, so
arbitrarily long streams can be processed chunk by chunk.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .errors import StreamOrderError

PS_PER_US = 10 ** 6
PS_PER_S = 10 ** 12
_NEVER = -(2 ** 62)

# selector state slots
_BLOCK_END, _LAST_TIME, _LAST_CH, _PAIRED, _BLOCKED = range(5)


def check_ordered(times, what="stream"):
    times = np.asarray(times)
    if times.size > 1 and np.any(times[1:] < times[:-1]):
        raise StreamOrderError(f"{what} is not time-ordered")


def _ps(tau_us):
    if tau_us < 0:
        raise ValueError("tau_sel must be nonnegative")
    return int(round(tau_us * PS_PER_US))


@numba.njit(cache=True)
def _singles_kernel(times, tau, last_kept):
    keep = np.zeros(times.size, dtype=np.bool_)
    for k in range(times.size):
        t = times[k]
        if t - last_kept >= tau:
            keep[k] = True
            last_kept = t
    return keep, last_kept


@numba.njit(cache=True)
def _pair_kernel(times, is_b, tau, window, state):
    keep = np.zeros(times.size, dtype=np.bool_)
    partner = np.zeros(times.size, dtype=np.bool_)
    block_end = state[0]
    last_t = state[1]
    last_ch = state[2]
    paired = state[3]
    blocked = state[4]
    for k in range(times.size):
        t = times[k]
        ch = np.int64(is_b[k])
        if paired == 0 and ch != last_ch and 2 * (t - last_t) <= window:
            keep[k] = True
            partner[k] = True
            paired = 1
        elif t >= block_end:
            keep[k] = True
            last_t = t
            last_ch = ch
            paired = 0
        else:
            continue
        new_end = t + tau
        blocked += new_end - max(block_end, t)
        block_end = new_end
    state[0] = block_end
    state[1] = last_t
    state[2] = last_ch
    state[3] = paired
    state[4] = blocked
    return keep, partner


@numba.njit(cache=True)
def _match_kernel(a, b, window, stop):
    """Earliest-partner matching of ``a[:stop]`` against ``b``.

    Returns (matches, next a index, first b index still usable)."""
    j = 0
    n_b = b.size
    count = 0
    for i in range(stop):
        t = a[i]
        while j < n_b and 2 * (t - b[j]) > window:
            j += 1
        if j < n_b and 2 * (b[j] - t) <= window:
            count += 1
            j += 1
    return count, stop, j


@numba.njit(cache=True)
def _herald_kernel(h, arm1, arm2, window, stop):
    j1 = 0
    j2 = 0
    c13 = 0
    c23 = 0
    c123 = 0
    for i in range(stop):
        t = h[i]
        while j1 < arm1.size and 2 * (t - arm1[j1]) > window:
            j1 += 1
        while j2 < arm2.size and 2 * (t - arm2[j2]) > window:
            j2 += 1
        hit1 = j1 < arm1.size and 2 * (arm1[j1] - t) <= window
        hit2 = j2 < arm2.size and 2 * (arm2[j2] - t) <= window
        if hit1:
            c13 += 1
        if hit2:
            c23 += 1
        if hit1 and hit2:
            c123 += 1
    return c13, c23, c123, j1, j2


def _i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


def _window(window_ps):
    window = int(window_ps)
    if window < 0:
        raise ValueError("coincidence window must be nonnegative")
    return window


# ---------------------------------------------------------------- singles

def postselect_singles(tags, tau_sel):
    """Keep a tag iff it is at least ``tau_sel`` (us) after the last kept one."""
    tags = _i64(tags)
    check_ordered(tags)
    if tags.size == 0:
        return tags.copy()
    keep, _ = _singles_kernel(tags, np.int64(_ps(tau_sel)), np.int64(_NEVER))
    return tags[keep]


def ready_time(tags_kept, tau_sel, total_time):
    """Time (s) a detector was ready after post-selection.

    ``tags_kept`` may be the kept stream or just its length.
    """
    n = tags_kept if np.ndim(tags_kept) == 0 else len(tags_kept)
    return max(float(total_time) - n * tau_sel * 1e-6, 0.0)


# ----------------------------------------------------------- coincidences

@dataclass(frozen=True)
class PairSelection:
    kept_a: np.ndarray
    kept_b: np.ndarray
    coincidences: int
    blocked_ps: int

    def ready_time(self, total_time):
        """Time (s) both detectors were ready, given the total time in s."""
        return max(float(total_time) - self.blocked_ps / PS_PER_S, 0.0)


def _merge(tags_a, tags_b):
    times = np.concatenate([tags_a, tags_b])
    is_b = np.concatenate([np.zeros(tags_a.size, np.uint8), np.ones(tags_b.size, np.uint8)])
    order = np.argsort(times, kind="stable")
    return times[order], is_b[order]


def _new_pair_state():
    return np.array([_NEVER, _NEVER, -1, 1, 0], dtype=np.int64)


def select_coincidence_pair(tags_a, tags_b, tau_sel, window_ps, duration_ps=None):
    """Joint post-selection of two detectors; see the module docstring.

    ``blocked_ps`` is the length of the union of blocked intervals, clipped
    to ``duration_ps`` when given.
    """
    tags_a, tags_b = _i64(tags_a), _i64(tags_b)
    check_ordered(tags_a, "stream a")
    check_ordered(tags_b, "stream b")
    times, is_b = _merge(tags_a, tags_b)
    state = _new_pair_state()
    keep, partner = _pair_kernel(times, is_b, np.int64(_ps(tau_sel)), np.int64(_window(window_ps)), state)
    blocked = int(state[_BLOCKED])
    if duration_ps is not None:
        blocked -= max(int(state[_BLOCK_END]) - int(duration_ps), 0)
    kb = is_b.astype(bool)
    return PairSelection(
        kept_a=times[keep & ~kb], kept_b=times[keep & kb],
        coincidences=int(partner.sum()), blocked_ps=max(blocked, 0))


def postselect_coincidence_pair(tags_a, tags_b, tau_sel, window_ps):
    sel = select_coincidence_pair(tags_a, tags_b, tau_sel, window_ps)
    return sel.kept_a, sel.kept_b


def count_coincidences(tags_a, tags_b, window_ps, offset_ps=0):
    """Number of disjoint pairs with ``|t_a - (t_b + offset)| <= window/2``."""
    tags_a, tags_b = _i64(tags_a), _i64(tags_b)
    check_ordered(tags_a, "stream a")
    check_ordered(tags_b, "stream b")
    count, _, _ = _match_kernel(tags_a, tags_b + np.int64(offset_ps), np.int64(_window(window_ps)), tags_a.size)
    return int(count)


class TripleCounts(NamedTuple):
    c13: int
    c23: int
    c123: int
    r3: int


def count_triples(tags1, tags2, tags3_herald, window_ps):
    """Herald-conditioned coincidences for a heralded g2 measurement.

    For every herald tag, ``c13``/``c23`` count whether arm 1/2 fired within
    the window, ``c123`` whether both did. ``r3`` is the number of heralds.
    """
    t1, t2, t3 = _i64(tags1), _i64(tags2), _i64(tags3_herald)
    for t, name in ((t1, "arm 1"), (t2, "arm 2"), (t3, "herald")):
        check_ordered(t, name)
    c13, c23, c123, _, _ = _herald_kernel(t3, t1, t2, np.int64(_window(window_ps)), t3.size)
    return TripleCounts(int(c13), int(c23), int(c123), int(t3.size))


# -------------------------------------------------------------- streaming

class SinglesSelector:
    """Chunked :func:`postselect_singles` for one detector."""

    def __init__(self, tau_sel):
        self.tau = np.int64(_ps(tau_sel))
        self.last_kept = np.int64(_NEVER)
        self.n_raw = 0
        self.n_kept = 0

    def feed(self, times):
        keep, self.last_kept = _singles_kernel(times, self.tau, self.last_kept)
        self.n_raw += times.size
        self.n_kept += int(keep.sum())
        return keep


class PairSelector:
    """Chunked joint post-selection of channels ``a`` and ``b``.

    With a nonzero ``offset_ps`` the ``b`` tags are delayed by the offset
    before selection, which turns true coincidences into accidental ones.
    Tags are buffered until no later chunk can precede them.
    """

    def __init__(self, tau_sel, window_ps, offset_ps=0):
        self.tau = np.int64(_ps(tau_sel))
        self.window = np.int64(_window(window_ps))
        self.offset = int(offset_ps)
        self.state = _new_pair_state()
        self.n_kept = [0, 0]
        self.coincidences = 0
        self._times = np.empty(0, np.int64)
        self._is_b = np.empty(0, np.uint8)

    def _run(self, times, is_b):
        if times.size:
            keep, partner = _pair_kernel(times, is_b, self.tau, self.window, self.state)
            kb = is_b.astype(bool)
            self.n_kept[0] += int((keep & ~kb).sum())
            self.n_kept[1] += int((keep & kb).sum())
            self.coincidences += int(partner.sum())

    def feed(self, a, b, horizon):
        """``horizon``: no future raw tag is earlier than this time."""
        times = np.concatenate([self._times, a, b + self.offset])
        is_b = np.concatenate([self._is_b, np.zeros(a.size, np.uint8), np.ones(b.size, np.uint8)])
        if times.size == 0:
            return
        order = np.argsort(times, kind="stable")
        times, is_b = times[order], is_b[order]
        limit = horizon + min(self.offset, 0)
        cut = int(np.searchsorted(times, limit, side="left"))
        self._run(times[:cut], is_b[:cut])
        self._times, self._is_b = times[cut:], is_b[cut:]

    def finish(self, duration_ps):
        self._run(self._times, self._is_b)
        self._times = self._times[:0]
        self._is_b = self._is_b[:0]
        blocked = int(self.state[_BLOCKED]) - max(int(self.state[_BLOCK_END]) - int(duration_ps), 0)
        return max(blocked, 0)


class CoincidenceCounter:
    """Chunked :func:`count_coincidences`."""

    def __init__(self, window_ps, offset_ps=0):
        self.window = np.int64(_window(window_ps))
        self.offset = np.int64(offset_ps)
        self.count = 0
        self._a = np.empty(0, np.int64)
        self._b = np.empty(0, np.int64)

    def feed(self, a, b, horizon=None):
        self._a = np.concatenate([self._a, a])
        self._b = np.concatenate([self._b, b + self.offset])
        if horizon is None:
            stop = self._a.size
        else:
            # a is final once every b within reach has arrived
            bound = 2 * (int(horizon) + int(self.offset)) - int(self.window)
            stop = int(np.searchsorted(2 * self._a, bound, side="left"))
        n, ia, jb = _match_kernel(self._a, self._b, self.window, stop)
        self.count += int(n)
        self._a = self._a[ia:]
        self._b = self._b[jb:]
        if horizon is not None:
            # b tags out of reach of every future a
            lower = int(self._a[0]) if self._a.size else int(horizon)
            self._b = self._b[np.searchsorted(2 * self._b, 2 * lower - int(self.window), side="left"):]

    def finish(self):
        self.feed(np.empty(0, np.int64), np.empty(0, np.int64), None)
        return self.count


class TripleCounter:
    """Chunked :func:`count_triples`."""

    def __init__(self, window_ps):
        self.window = np.int64(_window(window_ps))
        self.c13 = self.c23 = self.c123 = self.r3 = 0
        self._h = np.empty(0, np.int64)
        self._a1 = np.empty(0, np.int64)
        self._a2 = np.empty(0, np.int64)

    def feed(self, arm1, arm2, herald, horizon=None):
        self._h = np.concatenate([self._h, herald])
        self._a1 = np.concatenate([self._a1, arm1])
        self._a2 = np.concatenate([self._a2, arm2])
        if horizon is None:
            stop = self._h.size
        else:
            stop = int(np.searchsorted(2 * self._h, 2 * int(horizon) - int(self.window), side="left"))
        c13, c23, c123, j1, j2 = _herald_kernel(self._h, self._a1, self._a2, self.window, stop)
        self.c13 += int(c13)
        self.c23 += int(c23)
        self.c123 += int(c123)
        self.r3 += stop
        self._h = self._h[stop:]
        self._a1 = self._a1[j1:]
        self._a2 = self._a2[j2:]
        if horizon is not None:
            lower = 2 * (int(self._h[0]) if self._h.size else int(horizon)) - int(self.window)
            self._a1 = self._a1[np.searchsorted(2 * self._a1, lower, side="left"):]
            self._a2 = self._a2[np.searchsorted(2 * self._a2, lower, side="left"):]

    def finish(self):
        self.feed(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64), None)
        return TripleCounts(self.c13, self.c23, self.c123, self.r3)
