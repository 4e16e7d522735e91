"""Signal and layout ingestion, plus synthetic test-signal generation.

Two on-disk signal formats: plain numeric CSV (one row per time instant,
one column per channel) and raw little-endian int16 with a JSON sidecar
declaring the channel count and bit depth.  12-bit sources ride in 16-bit
raw containers; the sidecar carries the true depth.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (InvalidLayout, MissingSidecarField, NonInteger,
                     OutOfDeclaredRange, RaggedRows, SizeNotMultiple)
from .topology import LAYOUT_DIRECTION, LAYOUT_POSITION, SensorLayout

STANDARD_WIDTHS = (8, 12, 16)


@dataclass
class SignalMatrix:
    """m-channel integer signal: ``data[channel, time]``."""

    data: np.ndarray
    bits: int
    rate: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64)
        if self.data.ndim != 2:
            raise ValueError(f"signal must be 2-D, got shape {self.data.shape}")
        lo, hi = -(1 << (self.bits - 1)), (1 << (self.bits - 1)) - 1
        if self.data.size and (self.data.min() < lo or self.data.max() > hi):
            raise OutOfDeclaredRange(
                f"samples outside [{lo}, {hi}] for declared {self.bits}-bit depth")

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


def infer_bits(values: np.ndarray) -> int:
    """Smallest standard width whose signed range covers the data."""
    if values.size == 0:
        return STANDARD_WIDTHS[0]
    lo, hi = int(values.min()), int(values.max())
    for b in STANDARD_WIDTHS:
        if lo >= -(1 << (b - 1)) and hi <= (1 << (b - 1)) - 1:
            return b
    raise OutOfDeclaredRange(
        f"values in [{lo}, {hi}] exceed the widest supported depth "
        f"({STANDARD_WIDTHS[-1]} bits)")


def load_csv(path, bits: int | None = None, rate: float | None = None) -> SignalMatrix:
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise RaggedRows(
                    f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
            try:
                rows.append([int(f.strip()) for f in fields])
            except ValueError as exc:
                raise NonInteger(f"{path}:{lineno}: {exc}") from exc
    data = np.asarray(rows, dtype=np.int64).T if rows else np.zeros((0, 0), dtype=np.int64)
    b = bits if bits is not None else infer_bits(data)
    return SignalMatrix(data=data, bits=b, rate=rate)


def store_csv(path, signal: SignalMatrix) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in range(signal.n_samples):
            fh.write(",".join(str(int(v)) for v in signal.data[:, t]))
            fh.write("\n")


def load_raw(path, sidecar) -> SignalMatrix:
    """Little-endian int16, channel-interleaved per time instant."""
    if isinstance(sidecar, (str, os.PathLike)):
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    else:
        meta = dict(sidecar)
    for key in ("channels", "bits"):
        if key not in meta:
            raise MissingSidecarField(f"sidecar missing required field {key!r}")
    m = int(meta["channels"])
    bits = int(meta["bits"])
    rate = float(meta["rate"]) if "rate" in meta and meta["rate"] is not None else None
    blob = open(path, "rb").read()
    if len(blob) % (2 * m) != 0:
        raise SizeNotMultiple(
            f"{path}: {len(blob)} bytes is not a multiple of 2*{m}")
    flat = np.frombuffer(blob, dtype="<i2").astype(np.int64)
    data = flat.reshape(-1, m).T
    return SignalMatrix(data=data, bits=bits, rate=rate)


def store_raw(path, signal: SignalMatrix, sidecar_path=None) -> None:
    flat = signal.data.T.astype("<i2")
    if np.any(flat.astype(np.int64) != signal.data.T):
        raise OutOfDeclaredRange("samples do not fit in the 16-bit raw container")
    with open(path, "wb") as fh:
        fh.write(flat.tobytes())
    if sidecar_path is not None:
        meta = {"channels": signal.m, "bits": signal.bits}
        if signal.rate is not None:
            meta["rate"] = signal.rate
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh)
            fh.write("\n")


def load_layout(path) -> SensorLayout:
    """CSV with columns name,kind,x,y,z; one row per channel."""
    names, kinds, coords = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if lineno == 1 and fields[:2] == ["name", "kind"]:
                continue
            if len(fields) != 5:
                raise InvalidLayout(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
            names.append(fields[0])
            kinds.append(fields[1])
            try:
                coords.append([float(v) for v in fields[2:5]])
            except ValueError as exc:
                raise InvalidLayout(f"{path}:{lineno}: {exc}") from exc
    if not names:
        raise InvalidLayout(f"{path}: empty layout file")
    uniq = set(kinds)
    if len(uniq) != 1:
        raise InvalidLayout(f"{path}: mixed layout kinds {sorted(uniq)}")
    kind = kinds[0]
    if kind not in (LAYOUT_POSITION, LAYOUT_DIRECTION):
        raise InvalidLayout(f"{path}: unknown kind {kind!r}")
    return SensorLayout(kind=kind, coords=np.asarray(coords), names=tuple(names))


def store_layout(path, layout: SensorLayout) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name,kind,x,y,z\n")
        for i in range(layout.m):
            name = layout.names[i] if i < len(layout.names) else f"ch{i}"
            x, y, z = (float(v) for v in layout.coords[i])
            fh.write(f"{name},{layout.kind},{x!r},{y!r},{z!r}\n")


# -- synthetic signals -------------------------------------------------------

_AR_POLES = (0.9, np.pi / 5, 0.6)  # complex pair (radius, angle) + real pole


def _ar3_coeffs():
    r, th, p = _AR_POLES
    a1 = 2 * r * np.cos(th) + p
    a2 = -(r * r + 2 * r * np.cos(th) * p)
    a3 = r * r * p
    return a1, a2, a3


def synth_mvar(seed: int, m: int, N: int, bits: int = 16,
               coupling: str = "chain", noise_scale: float = 1.0,
               alpha: float = 0.95, mix=(0.2, 0.6, 0.2),
               amplitude_frac: float = 0.2, white_frac: float = 0.1) -> SignalMatrix:
    """Deterministic multichannel signal with decaying inter-channel coupling.

    Channel 0 is a stable AR(3) process.  Each later channel is
    ``alpha * (lag 0..2 mix of its reference)`` plus an independent noise
    term scaled by ``noise_scale``; the reference is channel i-1 for chain
    coupling and channel 0 for star coupling.  The noise is AR with a white
    floor (``white_frac``), like sensor noise riding on a smooth process.
    Everything is rounded and clamped to the alphabet at the end, so
    correlations decay with chain distance but the samples stay integers in
    range.
    """
    if m < 1:
        raise ValueError("need at least one channel")
    if coupling not in ("chain", "star"):
        raise ValueError(f"coupling must be 'chain' or 'star', got {coupling!r}")
    rng = np.random.default_rng(seed)
    a1, a2, a3 = _ar3_coeffs()
    amp = amplitude_frac * ((1 << (bits - 1)) - 1)

    def ar3(n, scale):
        w = rng.standard_normal(n)
        z = np.zeros(n)
        for t in range(n):
            z[t] = w[t]
            if t >= 1:
                z[t] += a1 * z[t - 1]
            if t >= 2:
                z[t] += a2 * z[t - 2]
            if t >= 3:
                z[t] += a3 * z[t - 3]
        sd = z.std()
        return z * (scale / sd) if sd > 0 else z

    def noise_term(scale):
        if scale <= 0:
            return 0.0
        return ar3(N, scale * (1.0 - white_frac)) + rng.standard_normal(N) * (scale * white_frac)

    proto = np.zeros((m, N))
    proto[0] = ar3(N, amp) + noise_term(amp * white_frac)
    w0, w1, w2 = mix
    for i in range(1, m):
        ref = proto[i - 1] if coupling == "chain" else proto[0]
        shifted1 = np.concatenate(([0.0], ref[:-1]))
        shifted2 = np.concatenate(([0.0, 0.0], ref[:-2])) if N >= 2 else np.zeros(N)
        coupled = alpha * (w0 * ref + w1 * shifted1 + w2 * shifted2)
        proto[i] = coupled + noise_term(amp * 0.5 * noise_scale)
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    data = np.clip(np.floor(proto + 0.5), lo, hi).astype(np.int64)
    return SignalMatrix(data=data, bits=bits)
