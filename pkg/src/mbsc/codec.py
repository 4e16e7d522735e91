"""Encoder/decoder for the multi-channel bitstream container.

The stream is a fixed header (config and, in fixed-tree mode, the coding
tree) followed by one Golomb codeword per scalar sample in coding-tree
order.  In adaptive-tree mode nothing about the learned trees is
transmitted: the decoder maintains the same pair statistics as the encoder,
rebuilds the same spanning arborescence every block, and applies the same
stopping rule, so both sides switch trees in lockstep.

Near-lossless operation quantizes each prediction error to a bin of width
``2*delta + 1``; predictors on both sides are fed the reconstruction, never
the original, which keeps the per-sample error bounded by ``delta`` without
accumulation.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import _engine
from .errors import (BadMagic, ConfigMismatch, EndOfStream, MalformedStream,
                     SampleOutOfRange, VersionUnsupported)
from .signalio import SignalMatrix
from .topology import CodingTree, StoppingState, build_geometry_tree, check_stopping, dmst, star_tree, tree_weight

MAGIC = b"MBSC"
VERSION = 1
MODE_FIXED = "fixed"
MODE_ADAPTIVE = "adaptive"

_FLAG_ADAPTIVE = 0x01
_HEADER_FMT = "<4sBBHBBQHBddHHHBdI"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_DEBUG_MAGIC = b"MBSCDBG1"


@dataclass(frozen=True)
class AlphabetSpec:
    """Signed integer sample alphabet for a given bit depth."""

    bits: int

    def __post_init__(self):
        if not (8 <= self.bits <= 16):
            raise ConfigMismatch(f"bit depth must be 8..16, got {self.bits}")

    @property
    def xmin(self) -> int:
        return -(1 << (self.bits - 1))

    @property
    def xmax(self) -> int:
        return (1 << (self.bits - 1)) - 1

    @property
    def size(self) -> int:
        return 1 << self.bits

    def contains(self, values) -> bool:
        v = np.asarray(values)
        return bool(v.size == 0 or (v.min() >= self.xmin and v.max() <= self.xmax))


@dataclass(frozen=True)
class CodecConfig:
    """All knobs that both sides must agree on; serialized verbatim."""

    delta: int = 0
    mode: str = MODE_FIXED
    root: int = 0
    P: int = 7
    lam: float = 0.99
    c0: float = 32.0
    F: int = 16
    B: int = 50
    V: int = 5
    gamma: float = 0.03
    N_s: int = 3000

    def __post_init__(self):
        if self.delta < 0 or self.delta > 255:
            raise ConfigMismatch(f"delta must be 0..255, got {self.delta}")
        if self.mode not in (MODE_FIXED, MODE_ADAPTIVE):
            raise ConfigMismatch(f"unknown mode {self.mode!r}")
        if not (1 <= self.P <= 15):
            raise ConfigMismatch(f"max order must be 1..15, got {self.P}")
        if not (0.0 < self.lam < 1.0):
            raise ConfigMismatch(f"forgetting factor must be in (0,1), got {self.lam}")
        if self.B < 1 or self.V < 1 or self.N_s < 1:
            raise ConfigMismatch("block size, window, and learning cap must be >= 1")


def tau_for(alphabet: AlphabetSpec) -> int:
    """Per-sample code length budget: four times the sample depth."""
    return 4 * alphabet.bits


def quantize_error(e: int, delta: int) -> int:
    """Uniform mid-tread quantizer index with bin width ``2*delta + 1``."""
    s = 2 * delta + 1
    if e >= 0:
        return (e + delta) // s
    return -((-e + delta) // s)


def dequantize_error(q: int, delta: int) -> int:
    return q * (2 * delta + 1)


def error_range(alphabet: AlphabetSpec, delta: int) -> int:
    """Number of distinct quantized-error values any prediction can see.

    For a prediction inside the alphabet the quantized error spans at most
    ``floor((|X| - 1 + 2*delta) / (2*delta + 1)) + 1`` consecutive integers
    (worst-case bin alignment), so residues modulo that count are uniquely
    invertible.  At delta=0 this is exactly the alphabet size.
    """
    s = 2 * delta + 1
    return (alphabet.size - 1 + 2 * delta) // s + 1


def reduce_modulo(q: int, alphabet: AlphabetSpec, delta: int) -> int:
    """Centered residue of the quantized index in [-floor(D/2), ceil(D/2)-1]."""
    D = error_range(alphabet, delta)
    half = D >> 1
    return (q + half) % D - half


def unreduce_modulo(e: int, xhat: int, alphabet: AlphabetSpec, delta: int) -> int:
    """Recover the quantized index from its residue, given the prediction."""
    D = error_range(alphabet, delta)
    q_lo = quantize_error(alphabet.xmin - xhat, delta)
    return q_lo + (e - q_lo) % D


@dataclass(frozen=True)
class StreamHeader:
    mode: str
    m: int
    bits: int
    delta: int
    n_samples: int
    root: int
    P: int
    lam: float
    c0: float
    F: int
    tau: int
    B: int
    V: int
    gamma: float
    N_s: int
    parents: tuple | None = None  # fixed mode only

    def config(self) -> CodecConfig:
        return CodecConfig(delta=self.delta, mode=self.mode, root=self.root,
                           P=self.P, lam=self.lam, c0=self.c0, F=self.F,
                           B=self.B, V=self.V, gamma=self.gamma, N_s=self.N_s)


def pack_header(hdr: StreamHeader) -> bytes:
    flags = _FLAG_ADAPTIVE if hdr.mode == MODE_ADAPTIVE else 0
    out = struct.pack(_HEADER_FMT, MAGIC, VERSION, flags, hdr.m, hdr.bits,
                      hdr.delta, hdr.n_samples, hdr.root, hdr.P, hdr.lam,
                      hdr.c0, hdr.F, hdr.tau, hdr.B, hdr.V, hdr.gamma, hdr.N_s)
    if hdr.mode == MODE_FIXED and hdr.m > 1:
        if hdr.parents is None:
            raise ConfigMismatch("fixed mode requires a tree in the header")
        out += struct.pack(f"<{hdr.m - 1}H",
                           *(p for ch, p in enumerate(hdr.parents) if ch != hdr.root))
    return out


def parse_header(data: bytes) -> tuple[StreamHeader, int]:
    if len(data) < _HEADER_SIZE:
        raise MalformedStream(f"stream too short for header: {len(data)} bytes")
    (magic, version, flags, m, bits, delta, n_samples, root, P, lam, c0,
     F, tau, B, V, gamma, N_s) = struct.unpack_from(_HEADER_FMT, data, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"stream version {version}, expected {VERSION}")
    mode = MODE_ADAPTIVE if (flags & _FLAG_ADAPTIVE) else MODE_FIXED
    if m < 1:
        raise MalformedStream("channel count must be >= 1")
    if not (8 <= bits <= 16):
        raise MalformedStream(f"unsupported bit depth {bits}")
    if not (0 <= root < m):
        raise MalformedStream(f"root {root} out of range")
    if tau <= bits + 2:
        raise MalformedStream(f"tau={tau} too small for {bits}-bit samples")
    size = _HEADER_SIZE
    parents = None
    if mode == MODE_FIXED and m > 1:
        need = 2 * (m - 1)
        if len(data) < size + need:
            raise MalformedStream("stream too short for tree descriptor")
        raw = struct.unpack_from(f"<{m - 1}H", data, size)
        size += need
        parents_list = []
        it = iter(raw)
        for ch in range(m):
            parents_list.append(-1 if ch == root else next(it))
        parents = tuple(parents_list)
        try:
            CodingTree.from_parents(parents, root)
        except ValueError as exc:
            raise MalformedStream(f"invalid tree in header: {exc}") from exc
    hdr = StreamHeader(mode=mode, m=m, bits=bits, delta=delta,
                       n_samples=n_samples, root=root, P=P, lam=lam, c0=c0,
                       F=F, tau=tau, B=B, V=V, gamma=gamma, N_s=N_s,
                       parents=parents)
    return hdr, size


@dataclass
class CodecRunInfo:
    """Instrumentation from one encode or decode run."""

    tree: CodingTree
    n_s: int | None = None
    learn_pair_ops: int = 0
    post_pair_ops: int = 0
    learn_steps: int = 0
    post_steps: int = 0
    payload_bits: int = 0
    state_snapshot: bytes = b""
    reconstruction: np.ndarray | None = None


class _PairTables:
    """Index maps for the maintained (reference, target) pair states."""

    def __init__(self, m: int, root: int, adaptive: bool, tree: CodingTree | None):
        self.m, self.root = m, root
        tgt, ref, kind = [], [], []
        self.edge_pid = {}
        self.root_pid = {}
        if m == 1:
            tgt, ref, kind = [root], [root], [_engine.KIND_SOLO]
            self.solo = 0
        elif adaptive:
            for i in range(m):
                if i == root:
                    continue
                for j in range(m):
                    if j == i:
                        continue
                    self.edge_pid[(j, i)] = len(tgt)
                    tgt.append(i)
                    ref.append(j)
                    kind.append(_engine.KIND_EDGE)
            for q in range(m):
                if q == root:
                    continue
                self.root_pid[q] = len(tgt)
                tgt.append(root)
                ref.append(q)
                kind.append(_engine.KIND_ROOT)
        else:
            first_child = tree.edges[0][1]
            self.root_pid[first_child] = 0
            tgt, ref, kind = [root], [first_child], [_engine.KIND_ROOT]
            for p, c in tree.edges:
                self.edge_pid[(p, c)] = len(tgt)
                tgt.append(c)
                ref.append(p)
                kind.append(_engine.KIND_EDGE)
        self.tgt = np.asarray(tgt, dtype=np.int64)
        self.ref = np.asarray(ref, dtype=np.int64)
        self.kind = np.asarray(kind, dtype=np.int64)
        self.n_pairs = len(tgt)

    def order_for(self, tree: CodingTree) -> tuple[np.ndarray, np.ndarray]:
        m = self.m
        order_ch = np.empty(m, dtype=np.int64)
        order_pid = np.empty(m, dtype=np.int64)
        order_ch[0] = self.root
        if m == 1:
            order_pid[0] = 0
            return order_ch, order_pid
        order_pid[0] = self.root_pid[tree.edges[0][1]]
        for t, (p, c) in enumerate(tree.edges, start=1):
            order_ch[t] = c
            order_pid[t] = self.edge_pid[(p, c)]
        return order_ch, order_pid


class _CodecState:
    """All mutable per-run state, shared verbatim by encoder and decoder."""

    def __init__(self, hdr: StreamHeader, tables: _PairTables):
        self.hdr = hdr
        self.tables = tables
        alphabet = AlphabetSpec(hdr.bits)
        self.alphabet = alphabet
        self.D = error_range(alphabet, hdr.delta)
        self.b_e = max(1, (self.D - 1).bit_length())
        self.q_lim = hdr.tau - self.b_e - 1
        if self.q_lim < 1:
            raise MalformedStream(f"tau={hdr.tau} leaves no unary budget")
        n_pairs = tables.n_pairs
        nE = hdr.P + 1
        maxdim = 2 * nE
        self.W = np.zeros((n_pairs, nE, maxdim))
        self.Pm = np.zeros((n_pairs, nE, maxdim, maxdim))
        inv = 1.0 / 1e-3
        for pid in range(n_pairs):
            for j in range(nE):
                d = _engine.dim_of(int(tables.kind[pid]), j)
                for a in range(d):
                    self.Pm[pid, j, a, a] = inv
        self.abs_err = np.zeros((n_pairs, nE))
        self.cvals = np.full(n_pairs, float(hdr.c0))
        A0 = max(2, self.D // 32)
        self.gA = np.full(n_pairs, A0, dtype=np.int64)
        self.gN = np.ones(n_pairs, dtype=np.int64)
        self.cum = np.zeros((tables.m, tables.m), dtype=np.int64)
        self.phis = np.zeros((n_pairs, maxdim))
        self.preds = np.zeros((n_pairs, nE))
        self.coded = np.zeros(n_pairs, dtype=np.bool_)
        self.e_act = np.zeros(tables.m, dtype=np.int64)
        self.len_act = np.zeros(tables.m, dtype=np.int64)
        self.mus = np.zeros(nE)
        self.pi = np.zeros(maxdim)
        self.gv = np.zeros(maxdim)
        self.tgt_lags = np.zeros(nE)
        self.ref_lags = np.zeros(nE)

    def run(self, encode: bool, x, xrec, n0: int, n1: int,
            order_ch, order_pid, active, learning: bool,
            buf, wst, rst, nbits_total: int) -> int:
        hdr = self.hdr
        err, ops = _engine.run_steps(
            encode, x, xrec, n0, n1,
            order_ch, order_pid, hdr.root,
            self.tables.tgt, self.tables.ref, self.tables.kind, active,
            self.W, self.Pm, self.abs_err, self.cvals, hdr.P, hdr.lam,
            self.gA, self.gN, hdr.F,
            hdr.delta, self.D, self.b_e, self.q_lim,
            self.alphabet.xmin, self.alphabet.xmax,
            learning, self.cum,
            buf, wst, rst, nbits_total,
            self.phis, self.preds, self.coded, self.e_act, self.len_act,
            self.mus, self.pi, self.gv, self.tgt_lags, self.ref_lags)
        if err != 0:
            raise EndOfStream("compressed payload ended mid-codeword")
        return ops

    def snapshot(self) -> bytes:
        """Byte-exact serialization of predictor + Golomb state, for tests."""
        parts = [a.tobytes() for a in (self.W, self.Pm, self.abs_err,
                                       self.cvals, self.gA, self.gN)]
        return b"".join(parts)


def _drive(encode: bool, hdr: StreamHeader, x, xrec, initial_tree: CodingTree,
           buf, wst, rst, nbits_total) -> CodecRunInfo:
    """Run the full stream, learning and all, identically on both sides."""
    m, N = hdr.m, hdr.n_samples
    adaptive = hdr.mode == MODE_ADAPTIVE and m > 1
    tables = _PairTables(m, hdr.root, adaptive, initial_tree)
    state = _CodecState(hdr, tables)
    tree = star_tree(m, hdr.root) if adaptive else initial_tree
    order_ch, order_pid = tables.order_for(tree)
    info = CodecRunInfo(tree=tree)
    if not adaptive:
        active = np.arange(tables.n_pairs, dtype=np.int64)
        ops = state.run(encode, x, xrec, 0, N, order_ch, order_pid, active,
                        False, buf, wst, rst, nbits_total)
        info.post_pair_ops = ops
        info.post_steps = N
        info.tree = tree
        info.state_snapshot = state.snapshot()
        if hdr.mode == MODE_ADAPTIVE:
            info.n_s = 0  # single channel: nothing to learn
        return info

    stop = StoppingState(B=hdr.B, V=hdr.V, gamma=hdr.gamma, N_s=hdr.N_s)
    active = np.arange(tables.n_pairs, dtype=np.int64)
    n = 0
    i_block = 0
    n_s = None
    while n < N and n_s is None:
        boundary = (i_block + 1) * hdr.B
        seg_end = min(N, boundary, hdr.N_s)
        ops = state.run(encode, x, xrec, n, seg_end, order_ch, order_pid,
                        active, True, buf, wst, rst, nbits_total)
        info.learn_pair_ops += ops
        info.learn_steps += seg_end - n
        n = seg_end
        if n == boundary:
            i_block += 1
            weights = state.cum / n
            tree = dmst(weights, hdr.root)
            stop.record(tree_weight(tree, weights))
            order_ch, order_pid = tables.order_for(tree)
            if check_stopping(stop, i_block):
                n_s = n
        elif n == hdr.N_s:
            # cap reached mid-block; freeze on the stats gathered so far
            weights = state.cum / n
            tree = dmst(weights, hdr.root)
            stop.record(tree_weight(tree, weights))
            order_ch, order_pid = tables.order_for(tree)
            n_s = n
    if n_s is not None:
        active = order_pid.copy()
    if n < N:
        ops = state.run(encode, x, xrec, n, N, order_ch, order_pid, active,
                        False, buf, wst, rst, nbits_total)
        info.post_pair_ops += ops
        info.post_steps += N - n
    info.tree = tree
    info.n_s = n_s
    info.state_snapshot = state.snapshot()
    return info


@dataclass
class EncodeResult:
    data: bytes
    info: CodecRunInfo


def encode_stream(signal, config: CodecConfig | None = None, *,
                  bits: int | None = None, tree: CodingTree | None = None,
                  layout=None, emit_debug_tree: bool = False) -> EncodeResult:
    """Compress an integer signal matrix into a self-describing stream."""
    if config is None:
        config = CodecConfig()
    if isinstance(signal, SignalMatrix):
        data, b = signal.data, signal.bits
    else:
        data = np.asarray(signal, dtype=np.int64)
        if bits is None:
            raise ConfigMismatch("bit depth required when not passing a SignalMatrix")
        b = bits
    if data.ndim != 2:
        raise ConfigMismatch(f"signal must be m x N, got shape {data.shape}")
    m, N = data.shape
    alphabet = AlphabetSpec(b)
    if not alphabet.contains(data):
        raise SampleOutOfRange(
            f"samples exceed the {b}-bit alphabet [{alphabet.xmin}, {alphabet.xmax}]")
    root = config.root
    if tree is not None:
        if tree.m != m:
            raise ConfigMismatch(f"tree covers {tree.m} channels, signal has {m}")
        root = tree.root
    if not (0 <= root < m):
        raise ConfigMismatch(f"root {root} out of range for {m} channels")
    if config.mode == MODE_FIXED and m > 1:
        if tree is None:
            if layout is None:
                raise ConfigMismatch("fixed mode needs a coding tree or a sensor layout")
            if layout.m != m:
                raise ConfigMismatch(f"layout covers {layout.m} channels, signal has {m}")
            tree = build_geometry_tree(layout, root)
        tree.validate()
    else:
        tree = star_tree(m, root)
    hdr = StreamHeader(mode=config.mode, m=m, bits=b, delta=config.delta,
                       n_samples=N, root=root, P=config.P, lam=config.lam,
                       c0=config.c0, F=config.F, tau=tau_for(alphabet),
                       B=config.B, V=config.V, gamma=config.gamma,
                       N_s=config.N_s,
                       parents=tuple(tree.parents()) if config.mode == MODE_FIXED and m > 1 else None)
    header_bytes = pack_header(hdr)
    worst_bytes = (N * m * hdr.tau) // 8 + 64
    buf = np.zeros(worst_bytes, dtype=np.uint8)
    wst = np.zeros(3, dtype=np.int64)
    rst = np.zeros(2, dtype=np.int64)
    xrec = np.zeros_like(data)
    info = _drive(True, hdr, data, xrec, tree, buf, wst, rst, 0)
    info.payload_bits = int(wst[0]) * 8 + int(wst[2])
    used = _engine.flush_writer(buf, wst)
    out = header_bytes + bytes(buf[:used])
    if emit_debug_tree:
        payload = json.dumps({
            "n_s": info.n_s,
            "parents": [int(p) for p in info.tree.parents()],
            "root": info.tree.root,
        }).encode()
        out += _DEBUG_MAGIC + struct.pack("<I", len(payload)) + payload
    info.reconstruction = xrec
    return EncodeResult(data=out, info=info)


def decode_stream(data: bytes, *, return_info: bool = False):
    """Reconstruct the signal matrix from a compressed stream."""
    hdr, hsize = parse_header(data)
    if hdr.mode == MODE_FIXED and hdr.m > 1:
        tree = CodingTree.from_parents(hdr.parents, hdr.root)
    else:
        tree = star_tree(hdr.m, hdr.root)
    payload = np.frombuffer(data, dtype=np.uint8, offset=hsize).copy()
    nbits_total = payload.shape[0] * 8
    xrec = np.zeros((hdr.m, hdr.n_samples), dtype=np.int64)
    buf = payload if payload.size else np.zeros(1, dtype=np.uint8)
    wst = np.zeros(3, dtype=np.int64)
    rst = np.zeros(2, dtype=np.int64)
    info = _drive(False, hdr, xrec, xrec, tree, buf, wst, rst, nbits_total)
    info.payload_bits = int(rst[0])
    signal = SignalMatrix(data=xrec, bits=hdr.bits)
    if return_info:
        return signal, info
    return signal


def read_debug_tree(data: bytes) -> dict | None:
    """Parse the optional trailing tree block written by ``emit_debug_tree``."""
    idx = data.rfind(_DEBUG_MAGIC)
    if idx < 0:
        return None
    off = idx + len(_DEBUG_MAGIC)
    if off + 4 > len(data):
        return None
    (length,) = struct.unpack_from("<I", data, off)
    blob = data[off + 4: off + 4 + length]
    if len(blob) != length:
        return None
    return json.loads(blob.decode())
