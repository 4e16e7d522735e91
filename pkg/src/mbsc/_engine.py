"""Jitted numeric core for the codec.

One vector sample at a time, the engine predicts each channel from its
(reference, target) pair state, codes the quantized prediction error, and
feeds the reconstruction back into every maintained pair.  Encoder and
decoder run the same kernels in the same order, which is what guarantees
their predictor and Golomb states stay bit-identical.

Pair kinds:
  0 (edge)  target predicted from its own past plus the reference's current
            and past samples; expert j is the order-j predictor, j = 0..P.
  1 (root)  no current-sample term; expert j is the order-(j+1) predictor.
  2 (solo)  single-channel root: own past only, expert j is order j+1.

Regressor layout (shared by all callers; expert j uses a prefix):
  edge: [ref(n), tgt(n-1), ref(n-1), tgt(n-2), ref(n-2), ...]
  root: [tgt(n-1), ref(n-1), tgt(n-2), ref(n-2), ...]
  solo: [tgt(n-1), tgt(n-2), ...]
Samples before time 0 read as zero.
"""

import math

import numpy as np
from numba import njit

KIND_EDGE = 0
KIND_ROOT = 1
KIND_SOLO = 2

W_CAP = 1e150    # keeps predictions finite on pathological inputs
P_CAP = 1e250    # keeps inverse-covariance finite on long degenerate runs
C_FLOOR = 32.0   # baseline mixture temperature


@njit(cache=True)
def dim_of(kind, j):
    if kind == KIND_EDGE:
        return 2 * j + 1
    elif kind == KIND_ROOT:
        return 2 * j + 2
    else:
        return j + 1


@njit(cache=True)
def fill_regressor(phi, kind, tgt_lags, ref_lags, ref_cur, P):
    """Write the maximum-order regressor for one pair into ``phi``.

    ``tgt_lags[l-1]`` / ``ref_lags[l-1]`` hold the sample at lag ``l``.
    """
    if kind == KIND_EDGE:
        phi[0] = ref_cur
        for l in range(1, P + 1):
            phi[2 * l - 1] = tgt_lags[l - 1]
            phi[2 * l] = ref_lags[l - 1]
    elif kind == KIND_ROOT:
        for l in range(1, P + 2):
            phi[2 * l - 2] = tgt_lags[l - 1]
            phi[2 * l - 1] = ref_lags[l - 1]
    else:
        for l in range(1, P + 2):
            phi[l - 1] = tgt_lags[l - 1]


@njit(cache=True)
def predict_pair(W, pid, kind, phi, P, preds):
    """Per-expert linear predictions ``w_j . phi[:d_j]``."""
    for j in range(P + 1):
        d = dim_of(kind, j)
        acc = 0.0
        for t in range(d):
            acc += W[pid, j, t] * phi[t]
        preds[pid, j] = acc


@njit(cache=True)
def mixture_predict(preds, abs_err, cvals, pid, P, xmin, xmax, mus):
    """Performance-weighted average of the expert predictions, as an integer.

    Weights are exp(-abs_err/c).  The temperature c doubles whenever the
    normalization mass underflows and halves (never below the baseline)
    whenever it saturates, then persists in ``cvals``.
    """
    nE = P + 1
    lo = 1e-300 * nE
    hi = 0.1 * nE
    c = cvals[pid]
    M = 0.0
    while True:
        M = 0.0
        for j in range(nE):
            mus[j] = math.exp(-abs_err[pid, j] / c)
            M += mus[j]
        if M < lo:
            c = c * 2.0
            continue
        if M > hi and c > C_FLOOR:
            c = c / 2.0
            if c < C_FLOOR:
                c = C_FLOOR
            continue
        break
    cvals[pid] = c
    s = 0.0
    for j in range(nE):
        s += mus[j] * preds[pid, j]
    xf = s / M
    if xf != xf:  # NaN guard; unreachable on finite state but keeps coding total
        return np.int64(0)
    if xf >= xmax:
        return np.int64(xmax)
    if xf <= xmin:
        return np.int64(xmin)
    xi = np.int64(math.floor(xf + 0.5))
    if xi > xmax:
        xi = np.int64(xmax)
    if xi < xmin:
        xi = np.int64(xmin)
    return xi


@njit(cache=True)
def observe_pair(W, Pm, abs_err, pid, kind, phi, preds, y, lam, P, pi, gv):
    """Fold the described value ``y`` into one pair's state.

    Exponentially decayed absolute-error accumulators drive the mixture;
    each expert's weights advance by one recursive least-squares step with
    forgetting factor ``lam``.  The inverse covariance moves in the Joseph
    form ((I-g.phi')P(I-g.phi')' + lam g.g')/lam, which is algebraically the
    plain RLS update but keeps P positive semidefinite under roundoff;
    near-collinear regressors (smooth signals) wind the plain form up into
    divergence within a few thousand steps.
    """
    for j in range(P + 1):
        abs_err[pid, j] = lam * abs_err[pid, j] + abs(y - preds[pid, j])
    for j in range(P + 1):
        d = dim_of(kind, j)
        quad = 0.0
        for a in range(d):
            acc = 0.0
            for t in range(d):
                acc += Pm[pid, j, a, t] * phi[t]
            pi[a] = acc
        for a in range(d):
            quad += phi[a] * pi[a]
        denom = lam + quad
        if not (denom > 0.0) or denom == np.inf:
            continue  # numerically broken step: skip, deterministically
        alpha = y - preds[pid, j]
        for a in range(d):
            gv[a] = pi[a] / denom
        for a in range(d):
            w = W[pid, j, a] + gv[a] * alpha
            if w > W_CAP:
                w = W_CAP
            elif w < -W_CAP:
                w = -W_CAP
            W[pid, j, a] = w
        for a in range(d):
            ga = gv[a]
            bphi_a = pi[a] - ga * quad
            for t in range(a, d):
                v = (Pm[pid, j, a, t] - ga * pi[t] - bphi_a * gv[t]
                     + lam * ga * gv[t]) / lam
                if v > P_CAP:
                    v = P_CAP
                elif v < -P_CAP:
                    v = -P_CAP
                Pm[pid, j, a, t] = v
                Pm[pid, j, t, a] = v


@njit(cache=True)
def quantize(e, delta):
    s = 2 * delta + 1
    if e >= 0:
        return (e + delta) // s
    return -((-e + delta) // s)


@njit(cache=True)
def reduce_centered(q, D):
    half = D >> 1
    r = (q + half) % D
    if r < 0:
        r += D
    return r - half


@njit(cache=True)
def unreduce(e, xhat, delta, D, xmin):
    q_lo = quantize(xmin - xhat, delta)
    t = (e - q_lo) % D
    if t < 0:
        t += D
    return q_lo + t


@njit(cache=True)
def select_k(A, N):
    k = 0
    nk = N
    while nk < A:
        nk <<= 1
        k += 1
    return k


@njit(cache=True)
def ctx_update(gA, gN, pid, emag, F):
    gA[pid] += emag
    gN[pid] += 1
    if gN[pid] >= F:
        gA[pid] >>= 1
        n2 = gN[pid] >> 1
        if n2 < 1:
            n2 = 1
        gN[pid] = n2


@njit(cache=True)
def golomb_len(v, k, q_lim, b_e):
    q = v >> k
    if q < q_lim:
        return q + 1 + k
    return q_lim + b_e


@njit(cache=True)
def _w_bits(buf, wst, value, n):
    # wst = [byte position, pending bits value, pending bit count]
    pos = wst[0]
    acc = wst[1]
    nacc = wst[2]
    while n > 24:
        hi = n - 24
        chunk = (value >> hi) & 0xFFFFFF
        acc = (acc << 24) | chunk
        nacc += 24
        while nacc >= 8:
            nacc -= 8
            buf[pos] = (acc >> nacc) & 0xFF
            pos += 1
        acc &= (1 << nacc) - 1
        n = hi
        value &= (1 << hi) - 1
    acc = (acc << n) | (value & ((1 << n) - 1))
    nacc += n
    while nacc >= 8:
        nacc -= 8
        buf[pos] = (acc >> nacc) & 0xFF
        pos += 1
    acc &= (1 << nacc) - 1
    wst[0] = pos
    wst[1] = acc
    wst[2] = nacc


@njit(cache=True)
def _w_ones(buf, wst, q):
    while q >= 24:
        _w_bits(buf, wst, 0xFFFFFF, 24)
        q -= 24
    _w_bits(buf, wst, (1 << q) - 1, q)


@njit(cache=True)
def emit_code(buf, wst, v, k, q_lim, b_e):
    q = v >> k
    if q < q_lim:
        _w_ones(buf, wst, q)
        _w_bits(buf, wst, 0, 1)
        if k > 0:
            _w_bits(buf, wst, v & ((1 << k) - 1), k)
        return q + 1 + k
    _w_ones(buf, wst, q_lim)
    _w_bits(buf, wst, 0, 0)  # no unary terminator in the escape path
    _w_bits(buf, wst, v, b_e)
    return q_lim + b_e


@njit(cache=True)
def flush_writer(buf, wst):
    """Zero-pad the final partial byte; returns total bytes used."""
    pos = wst[0]
    if wst[2] > 0:
        buf[pos] = (wst[1] << (8 - wst[2])) & 0xFF
        pos += 1
        wst[0] = pos
        wst[1] = 0
        wst[2] = 0
    return pos


@njit(cache=True)
def _r_bits(buf, rst, n, nbits_total):
    pos = rst[0]
    if pos + n > nbits_total:
        rst[1] = 1
        return 0
    v = 0
    for _ in range(n):
        byte = buf[pos >> 3]
        v = (v << 1) | ((byte >> (7 - (pos & 7))) & 1)
        pos += 1
    rst[0] = pos
    return v


@njit(cache=True)
def parse_code(buf, rst, k, q_lim, b_e, nbits_total):
    """Read one codeword; returns (mapped value, bit count)."""
    q = 0
    while q < q_lim:
        pos = rst[0]
        if pos >= nbits_total:
            rst[1] = 1
            return 0, 0
        bit = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
        rst[0] = pos + 1
        if bit == 0:
            break
        q += 1
    if q < q_lim:
        r = _r_bits(buf, rst, k, nbits_total) if k > 0 else 0
        if rst[1] != 0:
            return 0, 0
        return (q << k) | r, q + 1 + k
    v = _r_bits(buf, rst, b_e, nbits_total)
    if rst[1] != 0:
        return 0, 0
    return v, q_lim + b_e


@njit(cache=True)
def run_steps(encode, x, xrec, n0, n1,
              order_ch, order_pid, root,
              pair_tgt, pair_ref, pair_kind, active,
              W, Pm, abs_err, cvals, P, lam,
              gA, gN, F,
              delta, D, b_e, q_lim, xmin, xmax,
              learning, cum,
              buf, wst, rst, nbits_total,
              phis, preds, coded, e_act, len_act,
              mus, pi, gv, tgt_lags, ref_lags):
    """Advance the codec through vector samples ``n0 .. n1-1``.

    Per step: (A) describe each channel in coding-tree order, emitting or
    parsing one codeword; (B) charge every active pair one code length
    (actual for tree pairs, hypothetical against the reconstruction for the
    rest) and update its Golomb statistics; (C) fold the reconstructions
    into every active pair's predictor state.

    Returns (error flag, number of pair updates performed).
    """
    m = order_ch.shape[0]
    n_active = active.shape[0]
    ops = 0
    step = 2 * delta + 1
    for n in range(n0, n1):
        for ii in range(n_active):
            coded[active[ii]] = False
        # -- phase A: code the channels in tree order
        for t in range(m):
            ch = order_ch[t]
            pid = order_pid[t]
            kind = pair_kind[pid]
            tgt = pair_tgt[pid]
            ref = pair_ref[pid]
            for l in range(1, P + 2):
                idx = n - l
                if idx >= 0:
                    tgt_lags[l - 1] = float(xrec[tgt, idx])
                    ref_lags[l - 1] = float(xrec[ref, idx])
                else:
                    tgt_lags[l - 1] = 0.0
                    ref_lags[l - 1] = 0.0
            ref_cur = float(xrec[ref, n]) if kind == KIND_EDGE else 0.0
            fill_regressor(phis[pid], kind, tgt_lags, ref_lags, ref_cur, P)
            predict_pair(W, pid, kind, phis[pid], P, preds)
            xhat = mixture_predict(preds, abs_err, cvals, pid, P, xmin, xmax, mus)
            k = select_k(gA[pid], gN[pid])
            if encode:
                eps = x[ch, n] - xhat
                q = quantize(eps, delta)
                e = reduce_centered(q, D)
                v = 2 * e if e >= 0 else -2 * e - 1
                L = emit_code(buf, wst, v, k, q_lim, b_e)
            else:
                v, L = parse_code(buf, rst, k, q_lim, b_e, nbits_total)
                if rst[1] != 0:
                    return 1, ops
                e = v >> 1 if (v & 1) == 0 else -((v + 1) >> 1)
                q = unreduce(e, xhat, delta, D, xmin)
            xt = xhat + q * step
            if xt < xmin:
                xt = xmin
            elif xt > xmax:
                xt = xmax
            xrec[ch, n] = xt
            coded[pid] = True
            e_act[ch] = e
            len_act[ch] = L
        # -- phase B: code lengths and Golomb statistics for every active pair
        for ii in range(n_active):
            pid = active[ii]
            tgt = pair_tgt[pid]
            if coded[pid]:
                e = e_act[tgt]
                L = len_act[tgt]
            else:
                kind = pair_kind[pid]
                ref = pair_ref[pid]
                for l in range(1, P + 2):
                    idx = n - l
                    if idx >= 0:
                        tgt_lags[l - 1] = float(xrec[tgt, idx])
                        ref_lags[l - 1] = float(xrec[ref, idx])
                    else:
                        tgt_lags[l - 1] = 0.0
                        ref_lags[l - 1] = 0.0
                ref_cur = float(xrec[ref, n]) if kind == KIND_EDGE else 0.0
                fill_regressor(phis[pid], kind, tgt_lags, ref_lags, ref_cur, P)
                predict_pair(W, pid, kind, phis[pid], P, preds)
                xhat = mixture_predict(preds, abs_err, cvals, pid, P, xmin, xmax, mus)
                eps = xrec[tgt, n] - xhat
                q = quantize(eps, delta)
                e = reduce_centered(q, D)
                v = 2 * e if e >= 0 else -2 * e - 1
                k = select_k(gA[pid], gN[pid])
                L = golomb_len(v, k, q_lim, b_e)
            if learning and tgt != root:
                cum[pair_ref[pid], tgt] += L
            ctx_update(gA, gN, pid, e if e >= 0 else -e, F)
        # -- phase C: fold reconstructions into predictor state
        for ii in range(n_active):
            pid = active[ii]
            y = float(xrec[pair_tgt[pid], n])
            observe_pair(W, Pm, abs_err, pid, pair_kind[pid], phis[pid],
                         preds, y, lam, P, pi, gv)
            ops += 1
    return 0, ops
