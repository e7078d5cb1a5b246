"""Streaming rANS message: a 64-bit integer head over a stack of 32-bit words.

The message is a last-in-first-out store of bits.  ``push`` appends a symbol
interval ``[start, start + freq)`` out of ``2**precision`` and grows the
message by ``precision - log2(freq)`` bits amortized; ``pop`` is its exact
inverse.  After every operation the head lies in ``[2**32, 2**64)``; all
remaining bits live on the word stack.  Because push and pop are exact
inverses, a message can also act as a source of randomness: popping with any
distribution draws an (approximate) sample while removing the matching
number of bits.
"""

from __future__ import annotations

import struct

import numpy as np

WORD_BITS = 32
WORD_MASK = (1 << WORD_BITS) - 1
RANS_L = 1 << 32  # lower edge of the head renormalization interval
PRECISION_CAP = 31

_PAD_BLOCK = 256  # words drawn per RNG block in ans_init


class AnsUnderflowError(Exception):
    """Raised when a pop drains the word stack.

    Signals that the message does not hold enough bits for the requested
    decode (typically: the initial pad was too small).  The message state is
    unspecified afterwards; callers must surface the error, never pad
    silently, and retry from a fresh message if they want a bigger pad.
    """


class AnsMessage:
    """Mutable rANS coder state.

    Single-owner: mutate sequentially, never share mutably across threads.
    """

    __slots__ = ("head", "tail")

    def __init__(self, head: int = RANS_L, tail: list[int] | None = None):
        self.head = head
        self.tail = [] if tail is None else tail

    def push(self, start: int, freq: int, precision: int) -> None:
        """Append the interval ``[start, start+freq)`` at ``precision`` bits.

        Costs ``precision - log2(freq)`` bits amortized.  ``freq == 0`` would
        encode an impossible symbol and is rejected.
        """
        start = int(start)
        freq = int(freq)
        if precision > PRECISION_CAP:
            raise ValueError(f"precision {precision} exceeds cap {PRECISION_CAP}")
        if freq <= 0 or start < 0 or start + freq > (1 << precision):
            raise ValueError(
                f"invalid interval start={start} freq={freq} precision={precision}"
            )
        x = self.head
        x_max = (1 << (64 - precision)) * freq
        if x >= x_max:
            self.tail.append(x & WORD_MASK)
            x >>= WORD_BITS
        self.head = ((x // freq) << precision) + start + (x % freq)

    def pop(self, precision: int, locate) -> int:
        """Pop a residue ``u`` in ``[0, 2**precision)`` and advance the state.

        ``locate(u)`` must return the ``(start, freq)`` interval containing
        ``u``; the state advances by the exact inverse of ``push`` on that
        interval.  Returns ``u``.
        """
        if precision > PRECISION_CAP:
            raise ValueError(f"precision {precision} exceeds cap {PRECISION_CAP}")
        u = self.head & ((1 << precision) - 1)
        start, freq = locate(u)
        start = int(start)
        freq = int(freq)
        if not start <= u < start + freq:
            raise ValueError(f"locate returned [{start},{start + freq}) not containing {u}")
        x = freq * (self.head >> precision) + u - start
        if x < RANS_L:
            if not self.tail:
                raise AnsUnderflowError(
                    "word stack exhausted during pop; message has too few bits"
                )
            x = (x << WORD_BITS) | self.tail.pop()
        self.head = x
        return u

    @property
    def bit_length(self) -> int:
        """Total bits held: floor(log2 head) plus 32 per stacked word."""
        return (self.head.bit_length() - 1) + WORD_BITS * len(self.tail)

    def copy(self) -> "AnsMessage":
        return AnsMessage(self.head, list(self.tail))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnsMessage):
            return NotImplemented
        return self.head == other.head and self.tail == other.tail

    def __repr__(self) -> str:
        return f"AnsMessage(head={self.head:#x}, words={len(self.tail)})"

    def to_bytes(self) -> bytes:
        """Serialize: 1-byte word width, little-endian tail words, then head."""
        parts = [bytes([WORD_BITS])]
        parts.extend(struct.pack("<I", w) for w in self.tail)
        parts.append(struct.pack("<Q", self.head))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "AnsMessage":
        if len(data) < 9 or data[0] != WORD_BITS:
            raise ValueError("malformed message blob")
        body = data[1:]
        n_words, rem = divmod(len(body) - 8, 4)
        if rem:
            raise ValueError("malformed message blob")
        tail = [struct.unpack_from("<I", body, 4 * i)[0] for i in range(n_words)]
        (head,) = struct.unpack_from("<Q", body, 4 * n_words)
        return cls(head, tail)


def ans_init(seed: int, pad_words: int) -> AnsMessage:
    """Fresh message: minimal head plus ``pad_words`` seeded random words.

    The pad is drawn from a deterministic per-seed word stream, stored so
    that the stream's first word sits at the top of the stack.  Growing
    ``pad_words`` therefore only adds words at the bottom: pops consume the
    identical word sequence regardless of pad size, which makes "does this
    pad underflow" monotone in ``pad_words``.
    """
    if pad_words < 0:
        raise ValueError("pad_words must be >= 0")
    words: list[int] = []
    block = 0
    while len(words) < pad_words:
        rng = np.random.default_rng([seed, block])
        words.extend(int(w) for w in rng.integers(0, 1 << WORD_BITS, _PAD_BLOCK, dtype=np.uint64))
        block += 1
    return AnsMessage(RANS_L, words[:pad_words][::-1])
