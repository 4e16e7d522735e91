"""Sequential two-channel linear prediction with order mixing.

A :class:`PairPredictor` keeps, for one (reference, target) channel pair,
the exponentially-weighted recursive least-squares state of every model
order up to ``P`` at once, plus decayed absolute-error accumulators that
weight the per-order predictions into a single integer prediction.

The recursion solves, at every step, the ridge problem

    min_w  sum_j lam**(n-j) * (y_j - w . phi_j)**2  +  lam**n * eps * |w|**2

with ``eps`` fixed by the startup covariance.  :func:`oracle_wls_fit` solves
the same kind of problem directly from the normal equations and is the
independent reference the recursion is tested against.
"""

import numpy as np

from . import _engine
from .errors import SingularSystem

KIND_EDGE = _engine.KIND_EDGE
KIND_ROOT = _engine.KIND_ROOT
KIND_SOLO = _engine.KIND_SOLO

DEFAULT_MAX_ORDER = 7
DEFAULT_FORGETTING = 0.99
DEFAULT_TEMPERATURE = 32.0
INIT_INV_COV = 1e-3  # startup covariance is (1/INIT_INV_COV) * identity


def regressor_dim(kind: int, expert: int) -> int:
    """Regressor length of expert ``expert`` for a pair of the given kind."""
    if kind == KIND_EDGE:
        return 2 * expert + 1
    if kind == KIND_ROOT:
        return 2 * expert + 2
    return expert + 1


def expert_order(kind: int, expert: int) -> int:
    """Model order of expert ``expert``: j for edge pairs, j+1 otherwise."""
    return expert if kind == KIND_EDGE else expert + 1


def build_regressor(kind: int, P: int, tgt_lags, ref_lags, ref_cur: float = 0.0) -> np.ndarray:
    """Maximum-order regressor vector; expert j reads a prefix of it.

    ``tgt_lags[l-1]`` / ``ref_lags[l-1]`` are the samples at lag ``l``;
    short histories are zero-padded.
    """
    tl = np.zeros(P + 1)
    rl = np.zeros(P + 1)
    ntl = min(len(tgt_lags), P + 1)
    nrl = min(len(ref_lags), P + 1)
    tl[:ntl] = np.asarray(tgt_lags, dtype=np.float64)[:ntl]
    rl[:nrl] = np.asarray(ref_lags, dtype=np.float64)[:nrl]
    phi = np.zeros(2 * (P + 1))
    _engine.fill_regressor(phi, kind, tl, rl, float(ref_cur), P)
    return phi


class PairPredictor:
    """All-order sequential predictor for one channel pair."""

    def __init__(self, kind: int = KIND_EDGE, P: int = DEFAULT_MAX_ORDER,
                 lam: float = DEFAULT_FORGETTING, c0: float = DEFAULT_TEMPERATURE,
                 eps: float = INIT_INV_COV):
        if kind not in (KIND_EDGE, KIND_ROOT, KIND_SOLO):
            raise ValueError(f"unknown pair kind {kind}")
        self.kind = kind
        self.P = P
        self.lam = lam
        self.eps = eps
        self.maxdim = 2 * (P + 1)
        nE = P + 1
        self.W = np.zeros((1, nE, self.maxdim))
        self.Pm = np.zeros((1, nE, self.maxdim, self.maxdim))
        for j in range(nE):
            d = regressor_dim(kind, j)
            for a in range(d):
                self.Pm[0, j, a, a] = 1.0 / eps
        self.abs_err = np.zeros((1, nE))
        self.cvals = np.full(1, float(c0))
        self._phi = np.zeros(self.maxdim)
        self._preds = np.zeros((1, nE))
        self._mus = np.zeros(nE)
        self._pi = np.zeros(self.maxdim)
        self._gv = np.zeros(self.maxdim)
        self._have_prediction = False

    @property
    def c(self) -> float:
        return float(self.cvals[0])

    def predict_all_orders(self, tgt_lags, ref_lags, ref_cur: float = 0.0) -> np.ndarray:
        """Per-expert predictions for the next sample; caches the regressor."""
        self._phi[:] = build_regressor(self.kind, self.P, tgt_lags, ref_lags, ref_cur)
        _engine.predict_pair(self.W, 0, self.kind, self._phi, self.P, self._preds)
        self._have_prediction = True
        return self._preds[0].copy()

    def mix_predictions(self, xmin: int, xmax: int) -> int:
        """Weighted integer prediction from the cached per-expert predictions."""
        if not self._have_prediction:
            raise RuntimeError("predict_all_orders must run first")
        return int(_engine.mixture_predict(self._preds, self.abs_err, self.cvals,
                                           0, self.P, xmin, xmax, self._mus))

    def mixture_weights(self) -> np.ndarray:
        """Current normalized weights (read-only; does not adapt c).

        Weights are shift-invariant in the accumulated error, so subtracting
        the minimum changes nothing mathematically but avoids underflow.
        """
        e = self.abs_err[0]
        mus = np.exp(-(e - e.min()) / self.cvals[0])
        return mus / mus.sum()

    def observe(self, actual: float) -> None:
        """Advance all experts with the value that was actually described."""
        if not self._have_prediction:
            raise RuntimeError("predict_all_orders must run first")
        _engine.observe_pair(self.W, self.Pm, self.abs_err, 0, self.kind,
                             self._phi, self._preds, float(actual), self.lam,
                             self.P, self._pi, self._gv)
        self._have_prediction = False

    def coefficients(self, expert: int) -> np.ndarray:
        d = regressor_dim(self.kind, expert)
        return self.W[0, expert, :d].copy()


def _design_matrix(kind: int, order: int, target, reference):
    """Rows phi_j and responses y_j for j = 1..n, zero-padded history."""
    target = np.asarray(target, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    n = len(target)
    if kind == KIND_EDGE:
        d = 2 * order + 1
    elif kind == KIND_ROOT:
        d = 2 * order
    else:
        d = order
    X = np.zeros((n, max(d, 1)))
    for j in range(n):
        col = 0
        if kind == KIND_EDGE:
            X[j, col] = reference[j]
            col += 1
        for l in range(1, order + 1):
            tv = target[j - l] if j - l >= 0 else 0.0
            rv = reference[j - l] if j - l >= 0 else 0.0
            if kind == KIND_SOLO:
                X[j, col] = tv
                col += 1
            else:
                X[j, col] = tv
                X[j, col + 1] = rv
                col += 2
    return X[:, :d] if d > 0 else X[:, :0], target


def oracle_wls_fit(target, reference, lam: float, order: int,
                   kind: int = KIND_EDGE, ridge: float | None = None) -> np.ndarray:
    """Exact exponentially-weighted least-squares coefficients.

    Solves the normal equations of
    ``sum_j lam**(n-j) (y_j - w.phi_j)**2 + ridge * |w|**2`` directly.
    ``ridge=None`` picks 1e-6 times the signal power; pass
    ``lam**n * eps`` to reproduce the sequential recursion's startup prior
    exactly, or 0 to disable (raises :class:`SingularSystem` when the
    design matrix is rank-deficient).
    """
    X, y = _design_matrix(kind, order, target, reference)
    n, d = X.shape
    if d == 0:
        return np.zeros(0)
    wts = lam ** (n - 1 - np.arange(n))
    R = (X * wts[:, None]).T @ X
    p = (X * wts[:, None]).T @ y
    if ridge is None:
        power = float(np.mean(np.square(y))) if n else 0.0
        ridge = 1e-6 * max(power, 1e-12)
    A = R + ridge * np.eye(d)
    if ridge == 0.0 and np.linalg.matrix_rank(R) < d:
        raise SingularSystem(f"rank-deficient design matrix, order {order}")
    try:
        return np.linalg.solve(A, p)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def oracle_predict(target, reference, lam: float, order: int,
                   kind: int = KIND_EDGE, ridge: float | None = None,
                   ref_cur: float = 0.0) -> float:
    """Prediction for time n+1 using oracle coefficients fit through time n."""
    w = oracle_wls_fit(target, reference, lam, order, kind=kind, ridge=ridge)
    target = np.asarray(target, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    n = len(target)
    phi = []
    if kind == KIND_EDGE:
        phi.append(ref_cur)
    for l in range(1, order + 1):
        tv = target[n - l] if n - l >= 0 else 0.0
        rv = reference[n - l] if n - l >= 0 else 0.0
        if kind == KIND_SOLO:
            phi.append(tv)
        else:
            phi.extend((tv, rv))
    return float(np.dot(w, np.asarray(phi))) if len(phi) else 0.0
