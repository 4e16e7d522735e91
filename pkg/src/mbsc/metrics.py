"""Evaluation measures and rate-distortion sweeps."""

import math
import time
from dataclasses import dataclass

import numpy as np

from .codec import CodecConfig, decode_stream, encode_stream
from .errors import ShapeMismatch

CSV_HEADER = "delta,cr_bps,mae,mae_uv,snr_db,mstarae,n_s,enc_us,dec_us"


@dataclass
class EvalReport:
    delta: int
    cr_bps: float
    mae: float
    mae_uv: float | None
    snr_db: float
    mstarae: int
    n_s: int | None
    enc_us: float
    dec_us: float

    def csv_row(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                if math.isinf(v):
                    return "inf"
                return f"{v:.6g}"
            return str(v)
        return ",".join(fmt(v) for v in (
            self.delta, self.cr_bps, self.mae, self.mae_uv, self.snr_db,
            self.mstarae, self.n_s, self.enc_us, self.dec_us))


def compression_ratio(total_bits: int, total_scalar_samples: int) -> float:
    """Bits per scalar sample; lower is better."""
    if total_scalar_samples <= 0:
        raise ValueError("sample count must be positive")
    return total_bits / total_scalar_samples


def distortion(original, reconstructed, scale: float | None = None):
    """(MAE, SNR in dB, max absolute error); SNR is +inf at zero distortion.

    ``scale`` converts counts to microvolts for the optional scaled MAE; it
    does not affect the returned count-domain values.
    """
    x = np.asarray(original, dtype=np.float64)
    y = np.asarray(reconstructed, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    diff = x - y
    mae = float(np.mean(np.abs(diff))) if x.size else 0.0
    err_power = float(np.sum(diff * diff))
    sig_power = float(np.sum(x * x))
    if err_power == 0.0:
        snr = math.inf
    elif sig_power == 0.0:
        snr = -math.inf
    else:
        snr = 10.0 * math.log10(sig_power / err_power)
    mstarae = int(np.max(np.abs(diff))) if x.size else 0
    mae_uv = mae * scale if scale is not None else None
    return mae, mae_uv, snr, mstarae


def evaluate_once(signal, config: CodecConfig, *, tree=None, layout=None,
                  scale: float | None = None) -> EvalReport:
    """One encode/decode/measure cycle."""
    t0 = time.perf_counter()
    enc = encode_stream(signal, config, tree=tree, layout=layout)
    t1 = time.perf_counter()
    recon = decode_stream(enc.data)
    t2 = time.perf_counter()
    n_scalar = signal.m * signal.n_samples
    cr = compression_ratio(8 * len(enc.data), n_scalar)
    mae, mae_uv, snr, mstarae = distortion(signal.data, recon.data, scale)
    n_vec = max(1, signal.n_samples)
    return EvalReport(delta=config.delta, cr_bps=cr, mae=mae, mae_uv=mae_uv,
                      snr_db=snr, mstarae=mstarae, n_s=enc.info.n_s,
                      enc_us=(t1 - t0) * 1e6 / n_vec,
                      dec_us=(t2 - t1) * 1e6 / n_vec)


def rd_sweep(signal, config: CodecConfig, deltas, *, tree=None, layout=None,
             scale: float | None = None) -> list[EvalReport]:
    """Full rate-distortion protocol: one evaluation per distortion bound."""
    reports = []
    for d in deltas:
        cfg = CodecConfig(delta=int(d), mode=config.mode, root=config.root,
                          P=config.P, lam=config.lam, c0=config.c0,
                          F=config.F, B=config.B, V=config.V,
                          gamma=config.gamma, N_s=config.N_s)
        reports.append(evaluate_once(signal, cfg, tree=tree, layout=layout,
                                     scale=scale))
    return reports


def per_channel_distortion(original, reconstructed, scale: float | None = None):
    """Per-channel (MAE, MAE_uv, SNR, M*AE) rows."""
    x = np.asarray(original)
    y = np.asarray(reconstructed)
    if x.shape != y.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    return [distortion(x[ch], y[ch], scale) for ch in range(x.shape[0])]


def sweep_csv(reports: list[EvalReport]) -> str:
    lines = [CSV_HEADER]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"
