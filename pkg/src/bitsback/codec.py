"""Quantized discrete distributions and symbol-level coding over AnsMessage.

A ``QuantizedPmf`` stores a distribution as integer counts summing exactly to
``2**r``.  The inverse CDF maps a residue ``u`` to the unique symbol ``z``
with ``cum[z] <= u < cum[z+1]``, so the sets ``U(z) = {u : inv_cdf(u) = z}``
partition ``[0, 2**r)`` into contiguous runs of length ``counts[z]``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .ans import AnsMessage, PRECISION_CAP


class DegenerateDistributionError(ValueError):
    """All supported weights are zero: nothing can be apportioned."""


class QuantizedPmf:
    """Immutable integer-count distribution at precision ``r``."""

    __slots__ = ("counts", "r", "cum", "_log2", "_point_mass")

    def __init__(self, counts, r: int):
        counts = np.asarray(counts, dtype=np.int64)
        if r > PRECISION_CAP:
            raise ValueError(f"precision {r} exceeds cap {PRECISION_CAP}")
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError("counts must be a 1-D non-negative array")
        if int(counts.sum()) != 1 << r:
            raise ValueError(f"counts sum to {counts.sum()}, expected {1 << r}")
        self.counts = counts
        self.r = r
        self.cum = np.zeros(len(counts) + 1, dtype=np.int64)
        np.cumsum(counts, out=self.cum[1:])
        self._log2 = None
        self._point_mass = None

    def __len__(self) -> int:
        return len(self.counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedPmf):
            return NotImplemented
        return self.r == other.r and np.array_equal(self.counts, other.counts)

    def inv_cdf(self, u: int) -> int:
        """The unique symbol whose cumulative run contains ``u``."""
        return int(np.searchsorted(self.cum, u, side="right")) - 1

    def inv_cdf_many(self, us) -> np.ndarray:
        return np.searchsorted(self.cum, us, side="right") - 1

    def interval(self, z: int) -> tuple[int, int]:
        """(start, freq) of symbol ``z``; freq may be 0 off support."""
        return int(self.cum[z]), int(self.counts[z])

    def locate(self, u: int) -> tuple[int, int]:
        """(start, freq) of the interval containing residue ``u``."""
        return self.interval(self.inv_cdf(u))

    def u_set_range(self, z: int) -> tuple[int, int]:
        """Half-open residue range ``[lo, hi)`` mapped to ``z`` by inv_cdf."""
        lo, hi = int(self.cum[z]), int(self.cum[z + 1])
        if hi == lo:
            raise ValueError(f"symbol {z} has zero count")
        return lo, hi

    @property
    def log2_probs(self) -> np.ndarray:
        """log2(counts) - r, with -inf off support."""
        if self._log2 is None:
            with np.errstate(divide="ignore"):
                self._log2 = np.log2(self.counts) - self.r
        return self._log2

    def log2_prob(self, z: int) -> float:
        return float(self.log2_probs[z])

    @property
    def probs(self) -> np.ndarray:
        return self.counts / float(1 << self.r)

    @property
    def is_point_mass(self) -> bool:
        if self._point_mass is None:
            self._point_mass = bool(self.counts.max() == 1 << self.r)
        return self._point_mass

    @property
    def mode(self) -> int:
        return int(self.counts.argmax())

    def sample(self, rng: np.random.Generator, size=None):
        """Exact draws from the quantized law via uniform residues."""
        u = rng.integers(0, 1 << self.r, size=size)
        out = self.inv_cdf_many(u)
        return int(out) if size is None else out


def quantize_pmf(weights, r: int, support=None) -> QuantizedPmf:
    """Apportion ``2**r`` counts proportionally to ``weights``.

    Largest-remainder apportionment with every supported symbol floored to a
    count of at least 1; ties break toward the smallest index.  The result
    is invariant under rescaling of ``weights``.
    """
    w = np.asarray(weights, dtype=np.float64)
    if support is None:
        support = w > 0
    else:
        support = np.asarray(support, dtype=bool)
        if np.any(w[support] <= 0):
            raise ValueError("supported weights must be strictly positive")
    if not np.any(support):
        raise DegenerateDistributionError("no positive supported weight")
    total = 1 << r
    if int(support.sum()) > total:
        raise ValueError(f"support size {support.sum()} exceeds 2**{r}")

    wmax = w[support].max()
    target = np.where(support, w / wmax, 0.0)
    target *= total / target.sum()
    counts = np.where(support, np.maximum(np.floor(target), 1.0), 0.0).astype(np.int64)

    idx = np.arange(len(w))
    rem = total - int(counts.sum())
    if rem > 0:
        frac = np.where(support, target - counts, -np.inf)
        order = np.lexsort((idx, -frac))
        counts[order[:rem]] += 1
    while rem < 0:
        over = np.where(counts >= 2, counts - target, -np.inf)
        order = np.lexsort((idx, -over))
        take = order[: min(-rem, int((counts >= 2).sum()))]
        counts[take] -= 1
        rem += len(take)
    return QuantizedPmf(counts, r)


def uniform_pmf(k: int, r: int) -> QuantizedPmf:
    """Uniform over ``k`` symbols; exact when ``k`` divides ``2**r``."""
    return quantize_pmf(np.ones(k), r)


def point_mass_pmf(k: int, z: int, r: int) -> QuantizedPmf:
    counts = np.zeros(k, dtype=np.int64)
    counts[z] = 1 << r
    return QuantizedPmf(counts, r)


def encode_symbol(msg: AnsMessage, z: int, pmf: QuantizedPmf) -> None:
    """Push symbol ``z``; costs ``r - log2(counts[z])`` bits amortized."""
    start, freq = pmf.interval(z)
    msg.push(start, freq, pmf.r)


def decode_symbol(msg: AnsMessage, pmf: QuantizedPmf) -> int:
    """Pop a symbol: exact inverse of ``encode_symbol``."""
    u = msg.pop(pmf.r, pmf.locate)
    return pmf.inv_cdf(u)


def push_uniform(msg: AnsMessage, u: int, r: int) -> None:
    """Encode residue ``u`` with the full uniform on ``[0, 2**r)``: r bits."""
    msg.push(u, 1, r)


def pop_uniform(msg: AnsMessage, r: int) -> int:
    """Decode a residue uniform on ``[0, 2**r)``: removes r bits."""
    return msg.pop(r, lambda u: (u, 1))


def push_uniform_in_set(msg: AnsMessage, u: int, pmf: QuantizedPmf) -> int:
    """Encode ``u`` with the uniform over ``U(z)`` where ``z = inv_cdf(u)``.

    Realized exactly as push-full-uniform followed by a pop with ``pmf``;
    the composition grows the message by ``log2(counts[z])`` bits and is the
    exact inverse of ``pop_uniform_in_set``.  Returns ``z``.
    """
    push_uniform(msg, u, pmf.r)
    return decode_symbol(msg, pmf)


def pop_uniform_in_set(msg: AnsMessage, z: int, pmf: QuantizedPmf) -> int:
    """Decode a residue uniform over ``U(z)``: removes ``log2(counts[z])`` bits."""
    encode_symbol(msg, z, pmf)
    return pop_uniform(msg, pmf.r)


# -- decode-as-sampler ---------------------------------------------------------
#
# Message bits written by a push are recoverable by construction, which makes
# the residue a pop reads right after a push at the same precision largely
# *deterministic*: its upper bits are the pushed symbol's interval start.  A
# coder that decodes its proposal draws straight from its own pushes then
# produces badly correlated "samples" (a uniform-posterior pop after a prior
# push has a fixed point and sticks to one latent).  Sampling pops therefore
# run the residue through a fixed bijection first: pop the raw residue, push
# its scrambled image, then pop with the target PMF.  The pair costs exactly
# zero bits, is bit-exact invertible, and decorrelates the draw from the
# neighbouring pushes.  Distribution-side (model) coding never scrambles.

_MIX_MULT = 0x9E3779B1
_MIX_ADD = 0x85EBCA6B
_REV16 = [int(f"{u:016b}"[::-1], 2) for u in range(1 << 16)]


def _bit_reverse(u: int, r: int) -> int:
    if r <= 16:
        return _REV16[u << (16 - r)]
    return ((_REV16[u & 0xFFFF] << 16) | _REV16[u >> 16]) >> (32 - r)


@lru_cache(maxsize=None)
def _mix_constants(r: int) -> tuple[int, int, int]:
    mod = 1 << r
    mult = _MIX_MULT % mod | 1
    return mult, pow(mult, -1, mod), _MIX_ADD % mod


def scramble_residue(u: int, tweak: int, r: int) -> int:
    """Bijection on ``[0, 2**r)``: tweaked affine mix then bit reversal.

    The tweak folds in state *beneath* the scrambled word, so a matched
    sample/unsample pair agrees on it while unrelated push/pop encounters of
    the same stack position (whose underlying state differs) do not: without
    that, a coder's own returned bits would unscramble right back into the
    particles they came from.
    """
    mult, _, add = _mix_constants(r)
    mask = (1 << r) - 1
    return _bit_reverse(((u + tweak) * mult + add) & mask, r)


def unscramble_residue(w: int, tweak: int, r: int) -> int:
    _, mult_inv, add = _mix_constants(r)
    mask = (1 << r) - 1
    return (((_bit_reverse(w, r) - add) * mult_inv) - tweak) & mask


def _tweak(msg: AnsMessage) -> int:
    return msg.head & 0xFFFFFFFF


def sample_symbol(msg: AnsMessage, pmf: QuantizedPmf) -> int:
    """Decode a symbol as a clean draw from ``pmf``.

    Same net cost and distribution as ``decode_symbol``, but the residue is
    scrambled first so the draw does not alias bits the coder itself pushed.
    Point masses consume no bits and touch nothing.
    """
    if pmf.is_point_mass:
        return pmf.mode
    u = pop_uniform(msg, pmf.r)
    push_uniform(msg, scramble_residue(u, _tweak(msg), pmf.r), pmf.r)
    return decode_symbol(msg, pmf)


def unsample_symbol(msg: AnsMessage, z: int, pmf: QuantizedPmf) -> None:
    """Exact inverse of ``sample_symbol``: returns the borrowed bits."""
    if pmf.is_point_mass:
        return
    encode_symbol(msg, z, pmf)
    w = pop_uniform(msg, pmf.r)
    push_uniform(msg, unscramble_residue(w, _tweak(msg), pmf.r), pmf.r)


def sample_uniform(msg: AnsMessage, r: int) -> int:
    """Decode a clean uniform residue on ``[0, 2**r)``."""
    u = pop_uniform(msg, r)
    return scramble_residue(u, _tweak(msg), r)


def unsample_uniform(msg: AnsMessage, u: int, r: int) -> None:
    push_uniform(msg, unscramble_residue(u, _tweak(msg), r), r)
