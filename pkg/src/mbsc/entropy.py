"""Adaptive Golomb coding of prediction errors.

Signed errors are folded to nonnegative integers with a Rice mapping and
coded with power-of-two Golomb orders.  The order is chosen per codeword
from two running statistics, the sum of absolute coded errors ``A`` and the
sample count ``N``, both halved every ``F`` samples so the code tracks
recent behaviour.  Codewords longer than a fixed budget are escaped: the
maximum quotient is transmitted as a run of one-bits and the value follows
raw, so no sample ever costs more than ``tau`` bits.
"""

from dataclasses import dataclass

from .bitio import BitSink, BitSource
from .errors import EndOfStream, MalformedStream

DEFAULT_HALVING_INTERVAL = 16


@dataclass
class GolombContext:
    """Running error statistics for one coding context."""

    A: int = 2
    N: int = 1
    F: int = DEFAULT_HALVING_INTERVAL

    @classmethod
    def initialized(cls, error_range: int, F: int = DEFAULT_HALVING_INTERVAL) -> "GolombContext":
        """Fresh context for errors drawn from an alphabet of ``error_range`` symbols.

        Starting ``A`` at a fraction of the range avoids locking onto k=0
        when the very first errors are large.
        """
        return cls(A=max(2, error_range // 32), N=1, F=F)

    def update(self, e_magnitude: int) -> None:
        self.A += e_magnitude
        self.N += 1
        if self.N >= self.F:
            self.A //= 2
            self.N = max(1, self.N // 2)

    def copy(self) -> "GolombContext":
        return GolombContext(self.A, self.N, self.F)


@dataclass(frozen=True)
class EscapeSpec:
    """Code-length budget: ``tau`` bits max per sample, ``b_e`` raw bits per escape."""

    tau: int
    b_e: int

    def __post_init__(self) -> None:
        if self.q_lim < 1:
            raise ValueError(f"tau={self.tau} leaves no room for a unary quotient")

    @property
    def q_lim(self) -> int:
        return self.tau - self.b_e - 1

    @classmethod
    def for_error_range(cls, error_range: int, tau: int) -> "EscapeSpec":
        """Escape spec for reduced errors in ``[-floor(D/2), ceil(D/2)-1]``.

        The largest Rice-mapped value is ``D - 1``, which needs
        ``bit_length(D - 1)`` raw bits.
        """
        b_e = max(1, (error_range - 1).bit_length())
        return cls(tau=tau, b_e=b_e)


def rice_map(e: int) -> int:
    """Fold a signed integer onto the nonnegatives: 0,-1,1,-2,2 -> 0,1,2,3,4."""
    return 2 * e if e >= 0 else -2 * e - 1


def rice_unmap(v: int) -> int:
    return v >> 1 if (v & 1) == 0 else -((v + 1) >> 1)


def select_order(ctx: GolombContext) -> int:
    """Smallest k with ``N * 2**k >= A``; the Golomb order used is ``2**k``."""
    k = 0
    nk = ctx.N
    while nk < ctx.A:
        nk <<= 1
        k += 1
    return k


def code_length(v: int, k: int, esc: EscapeSpec) -> int:
    """Bits the codeword for mapped value ``v`` takes under parameter ``k``."""
    q = v >> k
    if q < esc.q_lim:
        return q + 1 + k
    return esc.q_lim + esc.b_e


def encode_error(sink: BitSink, e: int, ctx: GolombContext, esc: EscapeSpec) -> int:
    """Emit the codeword for ``e`` and update ``ctx``; returns bits written."""
    v = rice_map(e)
    k = select_order(ctx)
    q = v >> k
    if q < esc.q_lim:
        sink.write_unary(q)
        if k:
            sink.write_bits(v & ((1 << k) - 1), k)
        nbits = q + 1 + k
    else:
        # Escape: q_lim one-bits (no terminator), then the raw mapped value.
        qq = esc.q_lim
        while qq >= 32:
            sink.write_bits(0xFFFFFFFF, 32)
            qq -= 32
        sink.write_bits((1 << qq) - 1, qq)
        sink.write_bits(v, esc.b_e)
        nbits = esc.q_lim + esc.b_e
    ctx.update(abs(e))
    return nbits


def decode_error(source: BitSource, ctx: GolombContext, esc: EscapeSpec) -> int:
    """Inverse of :func:`encode_error`, with the identical context update."""
    k = select_order(ctx)
    q = 0
    while q < esc.q_lim:
        if source.read_bit() == 0:
            break
        q += 1
    if q < esc.q_lim:
        r = source.read_bits(k) if k else 0
        v = (q << k) | r
    else:
        try:
            v = source.read_bits(esc.b_e)
        except EndOfStream as exc:
            raise MalformedStream(
                f"unary run reached the escape limit {esc.q_lim} but the "
                f"{esc.b_e}-bit raw payload is missing") from exc
    e = rice_unmap(v)
    ctx.update(abs(e))
    return e
