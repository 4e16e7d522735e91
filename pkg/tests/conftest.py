"""Shared test helpers: fuzz signal corpus and TSGD sampling."""

import numpy as np
import pytest

from mbsc.signalio import SignalMatrix, synth_mvar


def tsgd_samples(rng, theta: float, n: int, d: float = 0.0) -> np.ndarray:
    """Two-sided geometric draws: P(x) proportional to theta**|x + d|."""
    assert d == 0.0, "only the symmetric case is sampled here"
    p0 = (1 - theta) / (1 + theta)
    u = rng.random(n)
    mag = np.where(u < p0, 0,
                   1 + np.floor(np.log(rng.random(n)) / np.log(theta))).astype(np.int64)
    sign = rng.integers(0, 2, n) * 2 - 1
    return mag * sign


def _content(rng, kind: str, m: int, N: int, bits: int) -> np.ndarray:
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if kind == "uniform":
        return rng.integers(lo, hi + 1, size=(m, N))
    if kind == "constant":
        return np.full((m, N), int(rng.integers(lo, hi + 1)))
    if kind == "zero":
        return np.zeros((m, N), dtype=np.int64)
    if kind == "impulse":
        data = np.zeros((m, N), dtype=np.int64)
        if N:
            data[:, rng.integers(0, N)] = hi
        return data
    if kind == "ramp":
        base = np.arange(N, dtype=np.int64) % (hi + 1)
        return np.tile(base, (m, 1))
    if kind == "alternating":
        base = np.empty(N, dtype=np.int64)
        base[0::2] = lo
        base[1::2] = hi
        return np.tile(base, (m, 1))
    if kind == "walk":
        steps = rng.integers(-8, 9, size=(m, N))
        return np.clip(np.cumsum(steps, axis=1), lo, hi)
    if kind == "mvar":
        return synth_mvar(int(rng.integers(0, 2**31)), m, N, bits=bits,
                          noise_scale=float(rng.uniform(0.2, 2.0))).data
    raise ValueError(kind)


FUZZ_KINDS = ("uniform", "constant", "zero", "impulse", "ramp",
              "alternating", "walk", "mvar")


def fuzz_corpus(seed: int, count: int):
    """Deterministic stream of (SignalMatrix, mode) fuzz cases.

    Sizes are log-uniform in N and uniform in m so edge cases stay cheap to
    cover; the first four cases pin the corners of the parameter box.
    """
    rng = np.random.default_rng(seed)
    forced = [(1, 1), (16, 5000), (1, 5000), (16, 1)]
    for i in range(count):
        if i < len(forced):
            m, N = forced[i]
        else:
            m = int(rng.integers(1, 17))
            N = int(np.exp(rng.uniform(0.0, np.log(5000.0))))
        bits = int(rng.choice([8, 12, 16]))
        kind = FUZZ_KINDS[int(rng.integers(0, len(FUZZ_KINDS)))]
        data = _content(rng, kind, m, N, bits)
        mode = "adaptive" if i % 2 == 0 else "fixed"
        yield SignalMatrix(data=data, bits=bits), mode


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
