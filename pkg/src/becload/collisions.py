"""Energy-conserving shell-collision channels and their occupancy-dependent rates.

Collisions redistribute two atoms between energy shells while conserving the
shell-index sum (m1 + m2 = m3 + m4). Under the ergodic assumption the rate of
a directed channel depends only on the shell occupation numbers and
degeneracies; bosonic enhancement enters through the (N + g) factors on the
outgoing shells.
"""

from typing import NamedTuple

import numpy as np

from .units import shell_degeneracy


class ShellOccupancy:
    """Integer atom counts per energy shell, with cached totals.

    counts[m] is the number of atoms in shell m for m = 0..S-1 (including any
    virtual shells above the trap cutoff). The total atom number N and the
    index-weighted sum U = sum(m * N_m) are maintained incrementally so the
    total energy E = (U + 1.5 N) hbar*omega_g is available in O(1) and exactly
    conserved by collisions.
    """

    __slots__ = ("counts", "_n", "_u")

    def __init__(self, counts):
        arr = np.array(counts, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("counts must be a non-empty 1D sequence")
        if (arr < 0).any():
            raise ValueError("occupation numbers must be non-negative")
        self.counts = arr
        self._n = int(arr.sum())
        self._u = int((arr * np.arange(arr.size, dtype=np.int64)).sum())

    @classmethod
    def empty(cls, shells):
        return cls(np.zeros(shells, dtype=np.int64))

    @property
    def shells(self):
        return self.counts.size

    @property
    def total_atoms(self):
        return self._n

    @property
    def energy(self):
        """Total energy in units of hbar*omega_g: sum N_m (m + 3/2)."""
        return self._u + 1.5 * self._n

    @property
    def weighted_sum(self):
        """sum(m * N_m), an exact integer."""
        return self._u

    def add(self, m, k=1):
        self.counts[m] += k
        self._n += k
        self._u += m * k

    def remove(self, m, k=1):
        if self.counts[m] < k:
            raise ValueError("shell %d holds %d atoms, cannot remove %d"
                             % (m, self.counts[m], k))
        self.counts[m] -= k
        self._n -= k
        self._u -= m * k

    def copy(self):
        return ShellOccupancy(self.counts)

    def validate(self):
        """Recompute the cached totals and fail loudly on any mismatch."""
        n = int(self.counts.sum())
        u = int((self.counts * np.arange(self.counts.size, dtype=np.int64)).sum())
        if n != self._n or u != self._u:
            raise AssertionError("cached totals out of sync: N %d vs %d, U %d vs %d"
                                 % (self._n, n, self._u, u))
        if (self.counts < 0).any():
            raise AssertionError("negative occupation encountered")

    def __repr__(self):
        return "ShellOccupancy(N=%d, E=%.1f, counts=%s)" % (
            self._n, self.energy, self.counts.tolist())


class CollisionChannel(NamedTuple):
    """Directed collision (m1, m2) -> (m3, m4) with m1<=m2, m3<=m4, equal sums."""

    m1: int
    m2: int
    m3: int
    m4: int


def enumerate_channels(S):
    """All directed, non-identity, sum-conserving channels among S shells.

    Each unordered in-pair/out-pair combination appears once per direction,
    so (0,2)->(1,1) and (1,1)->(0,2) are distinct entries. Channels that
    leave the pair unchanged are omitted since they would not alter the
    occupation distribution.
    """
    if S < 1:
        raise ValueError("shell count must be at least 1")
    channels = []
    for m1 in range(S):
        for m2 in range(m1, S):
            total = m1 + m2
            lo = max(0, total - (S - 1))
            for m3 in range(lo, total // 2 + 1):
                m4 = total - m3
                if m3 == m1 and m4 == m2:
                    continue
                channels.append(CollisionChannel(m1, m2, m3, m4))
    return channels


def channel_rate(state, ch, delta):
    """Event rate of one directed collision channel.

    rate = delta * (mj+1)(mj+2) * N1 (N2 - d12) (N3 + g3) (N4 + g4 + d34)
           / (g1 g2 g3 g4)

    with mj the smallest of the four shell indices and d the Kronecker deltas
    for coinciding in- or out-shells. The numerator is assembled in integer
    arithmetic; only the final division is floating point.
    """
    c = state.counts
    n1 = int(c[ch.m1])
    n2 = int(c[ch.m2]) - (1 if ch.m2 == ch.m1 else 0)
    if n1 <= 0 or n2 <= 0:
        return 0.0
    g1 = shell_degeneracy(ch.m1)
    g2 = shell_degeneracy(ch.m2)
    g3 = shell_degeneracy(ch.m3)
    g4 = shell_degeneracy(ch.m4)
    b3 = int(c[ch.m3]) + g3
    b4 = int(c[ch.m4]) + g4 + (1 if ch.m4 == ch.m3 else 0)
    mj = ch.m1 if ch.m1 <= ch.m3 else ch.m3
    num = (mj + 1) * (mj + 2) * n1 * n2 * b3 * b4
    return delta * num / (g1 * g2 * g3 * g4)


class ChannelIndex:
    """Channel enumeration for S shells plus shell-to-channel adjacency."""

    def __init__(self, S):
        self.S = S
        self.channels = enumerate_channels(S)
        by_shell = [[] for _ in range(S)]
        for i, ch in enumerate(self.channels):
            for m in set(ch):
                by_shell[m].append(i)
        self.by_shell = [np.array(ix, dtype=np.int64) for ix in by_shell]

    def __len__(self):
        return len(self.channels)

    def affected_channels(self, ch):
        """Indices of every channel whose rate an event on ch can change.

        A channel's rate depends only on the occupancies of its own four
        shells, so this is the union of the adjacency lists of the shells
        the event touches.
        """
        return self.affected_by_shells(set(ch))

    def affected_by_shells(self, shells):
        out = set()
        for m in shells:
            out.update(self.by_shell[m].tolist())
        return out


class RateTable:
    """Non-negative event weights with O(log C) update and weighted sampling.

    A Fenwick (binary indexed) tree holds prefix sums over the weight array.
    Incremental updates apply signed deltas to the tree; to bound the
    floating-point drift this accumulates, the tree is rebuilt from the
    stored weights every rebuild_every updates.
    """

    def __init__(self, size, rebuild_every=100000):
        if size < 1:
            raise ValueError("rate table needs at least one slot")
        self.size = size
        self.rebuild_every = rebuild_every
        self.values = np.zeros(size, dtype=np.float64)
        self._tree = np.zeros(size + 1, dtype=np.float64)
        self._updates = 0
        self._top_bit = 1 << (size.bit_length() - 1)
        if self._top_bit > size:
            self._top_bit >>= 1

    def set_value(self, i, v):
        if v < 0:
            raise ValueError("rates must be non-negative")
        delta = v - self.values[i]
        if delta == 0.0:
            return
        self.values[i] = v
        j = i + 1
        while j <= self.size:
            self._tree[j] += delta
            j += j & (-j)
        self._updates += 1
        if self._updates >= self.rebuild_every:
            self.rebuild()

    def value(self, i):
        return self.values[i]

    def total(self):
        return self.prefix_sum(self.size)

    def prefix_sum(self, count):
        """Sum of the first count weights."""
        s = 0.0
        j = count
        while j > 0:
            s += self._tree[j]
            j -= j & (-j)
        return s

    def sample(self, u):
        """Index whose cumulative-weight interval contains u * total().

        u must lie in [0, 1). Zero-weight slots are never returned as long as
        the total is positive.
        """
        target = u * self.total()
        pos = 0
        bit = self._top_bit
        while bit:
            nxt = pos + bit
            if nxt <= self.size and self._tree[nxt] <= target:
                target -= self._tree[nxt]
                pos = nxt
            bit >>= 1
        if pos >= self.size:
            pos = self.size - 1
        if self.values[pos] == 0.0:
            # numerical edge case: target landed on a zero-weight boundary
            lo = pos - 1
            while lo >= 0 and self.values[lo] == 0.0:
                lo -= 1
            if lo >= 0:
                return lo
            hi = pos + 1
            while hi < self.size and self.values[hi] == 0.0:
                hi += 1
            if hi < self.size:
                return hi
        return pos

    def rebuild(self):
        self._tree[:] = 0.0
        for i, v in enumerate(self.values):
            j = i + 1
            while j <= self.size:
                self._tree[j] += v
                j += j & (-j)
        self._updates = 0

    def drift(self):
        """Relative difference between the tree total and the exact sum."""
        exact = float(self.values.sum())
        if exact == 0.0:
            return abs(self.total())
        return abs(self.total() - exact) / exact
