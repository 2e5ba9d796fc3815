"""Counter-based random streams keyed by lattice position.

Every random quantity in the package is a pure function of
``(seed, substream, tag, replicate, position)``.  The generator is
Philox4x64-10 evaluated on whole numpy arrays of counters, so a bond's
uniform variate does not depend on the box it was sampled in, on iteration
order, or on which worker produced it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_MASK64 = (1 << 64) - 1


class Tag(enum.IntEnum):
    """Independent random fields carried by one stream."""

    ENV_H = 1
    ENV_V = 2
    BOND_H = 3
    BOND_V = 4
    SITE = 5
    WORD_OMEGA = 6
    WORD_PHI = 7
    AUX = 8


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # 64x64 -> 128 bit product from 32-bit limbs
    a_lo, a_hi = a & _MASK32, a >> _S32
    b_lo, b_hi = b & _MASK32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    lo = a * b
    return hi, lo


def philox4x64(counter: np.ndarray, key: tuple[int, int]) -> np.ndarray:
    """Philox4x64-10 block function.

    ``counter`` has shape ``(..., 4)`` of uint64; the result has the same
    shape.  Matches ``numpy.random.Philox`` bit for bit (numpy increments its
    counter before producing a block).
    """
    c = np.asarray(counter, dtype=np.uint64)
    c0, c1, c2, c3 = (c[..., i].copy() for i in range(4))
    k0 = np.uint64(key[0] & _MASK64)
    k1 = np.uint64(key[1] & _MASK64)
    with np.errstate(over="ignore"):
        for rnd in range(10):
            if rnd:
                k0 = np.uint64((int(k0) + int(_W0)) & _MASK64)
                k1 = np.uint64((int(k1) + int(_W1)) & _MASK64)
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1)


def _to_unit(x: np.ndarray) -> np.ndarray:
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class Stream:
    """A reproducible source of position-keyed uniforms.

    ``seed`` and ``substream`` form the Philox key; ``replicate`` and the tag
    go into the counter together with the position, so replicates are
    independent and disjoint.
    """

    seed: int
    replicate: int = 0
    substream: int = 0

    def for_replicate(self, replicate: int) -> "Stream":
        return Stream(self.seed, replicate, self.substream)

    def child(self, substream: int) -> "Stream":
        return Stream(self.seed, self.replicate, substream)

    def uniform(self, tag: int, rows: int, cols: int, row0: int = 0) -> np.ndarray:
        """Uniforms ``U[a, b]`` for ``row0 <= a < row0 + rows``, ``0 <= b < cols``.

        ``U[a, b]`` depends only on ``(a, b)`` and the stream, never on
        ``rows``, ``cols`` or ``row0``.
        """
        return self.uniform_replicates(tag, rows, cols, [self.replicate], row0)[0]

    def uniform_replicates(self, tag: int, rows: int, cols: int, replicates,
                           row0: int = 0) -> np.ndarray:
        """``uniform`` for several replicates at once, stacked on a leading axis.

        Slice ``i`` equals ``self.for_replicate(replicates[i]).uniform(...)``
        bit for bit; one call amortizes the per-call overhead over many
        small fields.
        """
        reps = np.asarray(replicates, dtype=np.uint64).reshape(-1)
        if rows <= 0 or cols <= 0:
            return np.zeros((reps.size, max(rows, 0), max(cols, 0)))
        nblk = (cols + 3) // 4
        ctr = np.empty((reps.size, rows, nblk, 4), dtype=np.uint64)
        ctr[..., 0] = np.arange(nblk, dtype=np.uint64)[None, None, :]
        ctr[..., 1] = np.arange(row0, row0 + rows, dtype=np.uint64)[None, :, None]
        ctr[..., 2] = np.uint64(int(tag))
        ctr[..., 3] = reps[:, None, None]
        out = philox4x64(ctr, (self.seed, self.substream))
        return _to_unit(out.reshape(reps.size, rows, nblk * 4)[:, :, :cols])

    def uniform_vector(self, tag: int, n: int) -> np.ndarray:
        return self.uniform(tag, 1, n)[0]
