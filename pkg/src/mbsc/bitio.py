"""Bit-level reader/writer over byte buffers.

Bits are packed MSB-first within each byte.  Padding with zero bits happens
only when a finished stream is snapshot with :meth:`BitSink.flush`; nothing
is ever padded between writes, so concatenated codewords stay decodable.
"""

from .errors import EndOfStream

_MAX_BITS = 64


class BitSink:
    """Growable bit buffer for writing, MSB-first."""

    __slots__ = ("_buf", "_cur", "_ncur")

    def __init__(self) -> None:
        self._buf = bytearray()
        self._cur = 0      # partial byte, high bits first
        self._ncur = 0     # bits held in _cur, 0..7

    @property
    def bitpos(self) -> int:
        """Total bits written so far."""
        return 8 * len(self._buf) + self._ncur

    def write_bits(self, value: int, n: int) -> None:
        """Append the ``n`` low-order bits of ``value``, MSB first."""
        if n < 0 or n > _MAX_BITS:
            raise ValueError(f"bit count must be in 0..{_MAX_BITS}, got {n}")
        if value < 0 or (n < _MAX_BITS and value >> n):
            raise ValueError(f"value {value} does not fit in {n} bits")
        cur, ncur = self._cur, self._ncur
        while n > 0:
            take = min(n, 8 - ncur)
            n -= take
            cur = (cur << take) | ((value >> n) & ((1 << take) - 1))
            ncur += take
            if ncur == 8:
                self._buf.append(cur)
                cur, ncur = 0, 0
        self._cur, self._ncur = cur, ncur

    def write_unary(self, q: int) -> None:
        """``q`` one-bits followed by a terminating zero-bit."""
        while q >= 32:
            self.write_bits(0xFFFFFFFF, 32)
            q -= 32
        self.write_bits((1 << q) - 1, q)
        self.write_bits(0, 1)

    def flush(self) -> bytes:
        """Snapshot the stream, zero-padding the final partial byte.

        Does not mutate state: flushing twice yields the same bytes, and
        writing may continue afterwards.
        """
        out = bytes(self._buf)
        if self._ncur:
            out += bytes([(self._cur << (8 - self._ncur)) & 0xFF])
        return out


class BitSource:
    """Bit cursor over an immutable byte buffer, MSB-first."""

    __slots__ = ("_data", "_pos", "_nbits")

    def __init__(self, data: bytes, nbits: int | None = None) -> None:
        self._data = data
        self._pos = 0
        self._nbits = 8 * len(data) if nbits is None else nbits

    @property
    def cursor(self) -> int:
        return self._pos

    @property
    def bits_remaining(self) -> int:
        return self._nbits - self._pos

    def read_bits(self, n: int) -> int:
        if n < 0 or n > _MAX_BITS:
            raise ValueError(f"bit count must be in 0..{_MAX_BITS}, got {n}")
        if self._pos + n > self._nbits:
            raise EndOfStream(f"requested {n} bits, {self.bits_remaining} remain")
        pos = self._pos
        v = 0
        remaining = n
        while remaining > 0:
            byte = self._data[pos >> 3]
            avail = 8 - (pos & 7)
            take = min(remaining, avail)
            shift = avail - take
            v = (v << take) | ((byte >> shift) & ((1 << take) - 1))
            pos += take
            remaining -= take
        self._pos = pos
        return v

    def read_bit(self) -> int:
        return self.read_bits(1)
