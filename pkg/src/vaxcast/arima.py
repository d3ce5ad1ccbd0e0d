"""ARMA/ARIMA estimation by exact Gaussian likelihood.

The likelihood is evaluated with a Kalman filter on the Harvey state-space
form, started from the stationary state covariance.  Coefficients are
optimized in an unconstrained space that maps onto the stationary and
invertible regions through partial autocorrelations, so no constrained
optimizer is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize

from .errors import DomainError, EstimationError
from .series_core import ONE_DAY, DatedSeries

MAX_ITER = 500
REL_TOL = 1e-8
BOUNDARY_TOL = 1e-4


@dataclass(frozen=True, order=True)
class ArimaSpec:
    p: int
    d: int = 0
    q: int = 0

    def __post_init__(self):
        for name in ("p", "d", "q"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise DomainError(f"{name} must be a nonnegative integer, got {v!r}")
        if self.p + self.q < 1:
            raise DomainError("p + q must be at least 1")
        if self.d not in (0, 1):
            raise DomainError("only d in {0, 1} is supported")

    @property
    def n_params(self) -> int:
        """Intercept, AR and MA weights, and the innovation variance."""
        return self.p + self.q + 2

    def __str__(self) -> str:
        if self.q == 0 and self.d == 0:
            return f"AR({self.p})"
        return f"ARIMA({self.p},{self.d},{self.q})"


# --------------------------------------------------------------------------
# stationarity-preserving reparameterization


def pacf_to_ar(partials: np.ndarray) -> np.ndarray:
    """AR coefficients (``1 - sum phi_i z^i``) from partial autocorrelations."""
    phi = np.zeros(0)
    for a in partials:
        phi = np.concatenate((phi - a * phi[::-1], [a]))
    return phi


def ar_to_pacf(phi: np.ndarray) -> np.ndarray:
    """Step-down recursion; inverse of :func:`pacf_to_ar`."""
    phi = np.array(phi, dtype=float)
    out = np.zeros(phi.size)
    for k in range(phi.size - 1, -1, -1):
        a = phi[k]
        out[k] = a
        if k == 0:
            break
        if abs(a) >= 1:
            raise DomainError("coefficients are not stationary")
        phi = (phi[:k] + a * phi[:k][::-1]) / (1 - a * a)
    return out


def _squash(x):
    return x / np.sqrt(1.0 + x * x)


def _unsquash(r):
    return r / np.sqrt(1.0 - r * r)


def constrain_ar(x: np.ndarray) -> np.ndarray:
    return pacf_to_ar(_squash(np.asarray(x, dtype=float)))


def unconstrain_ar(phi: np.ndarray) -> np.ndarray:
    return _unsquash(ar_to_pacf(phi))


def constrain_ma(x: np.ndarray) -> np.ndarray:
    return -constrain_ar(x)


def unconstrain_ma(theta: np.ndarray) -> np.ndarray:
    return unconstrain_ar(-np.asarray(theta, dtype=float))


def _min_root_modulus(poly_tail: np.ndarray, sign: float) -> float:
    """Smallest root modulus of ``1 + sign * sum c_i z^i``."""
    c = np.asarray(poly_tail, dtype=float)
    # negligible trailing terms only add spurious roots
    nz = np.flatnonzero(np.abs(c) > 1e-13 * max(1.0, float(np.abs(c).max(initial=0.0))))
    if nz.size == 0:
        return math.inf
    c = c[: nz[-1] + 1]
    coeffs = np.concatenate(([1.0], sign * c))[::-1]
    return float(np.min(np.abs(np.roots(coeffs))))


def ar_root_modulus(phi) -> float:
    return _min_root_modulus(phi, -1.0)


def ma_root_modulus(theta) -> float:
    return _min_root_modulus(theta, 1.0)


def _pull_inside(coef: np.ndarray, sign: float, margin: float = 1.01) -> np.ndarray:
    # scaling c_i by s^i moves every root outward by 1/s
    coef = np.array(coef, dtype=float)
    powers = np.arange(1, coef.size + 1)
    for _ in range(200):
        if _min_root_modulus(coef, sign) > margin:
            return coef
        coef = coef * 0.95**powers
    return np.zeros_like(coef)


# --------------------------------------------------------------------------
# exact likelihood


@njit(cache=True)
def arma_autocovariance(phi, theta, nlags):
    """Autocovariances ``0..nlags`` of a unit-variance-innovation ARMA."""
    p = phi.size
    q = theta.size
    m = max(p, q) + nlags + 1
    psi = np.zeros(m)
    psi[0] = 1.0
    for k in range(1, m):
        v = theta[k - 1] if k <= q else 0.0
        for i in range(1, min(k, p) + 1):
            v += phi[i - 1] * psi[k - i]
        psi[k] = v
    # c_k = sum_{j>=k} theta_j psi_{j-k}, theta_0 = 1
    c = np.zeros(max(p, q) + nlags + 1)
    for k in range(q + 1):
        s = 0.0
        for j in range(k, q + 1):
            tj = 1.0 if j == 0 else theta[j - 1]
            s += tj * psi[j - k]
        c[k] = s
    gamma = np.zeros(max(p, nlags) + 1)
    M = np.zeros((p + 1, p + 1))
    for k in range(p + 1):
        M[k, k] += 1.0
        for i in range(1, p + 1):
            M[k, abs(k - i)] -= phi[i - 1]
    g0 = np.linalg.solve(M, c[: p + 1].copy())
    for k in range(p + 1):
        gamma[k] = g0[k]
    for k in range(p + 1, gamma.size):
        v = c[k]
        for i in range(1, p + 1):
            v += phi[i - 1] * gamma[k - i]
        gamma[k] = v
    return gamma[: nlags + 1], psi


@njit(cache=True)
def stationary_state_cov(phi, theta):
    """Unconditional covariance of the Harvey-form ARMA state (unit variance).

    State element ``j`` (0-based) is a fixed combination of ``y_{t-s}`` and
    ``eps_{t-s}`` for ``s = 0..r``, so its covariance follows from the
    autocovariances and the psi weights.
    """
    p = phi.size
    q = theta.size
    r = max(p, q + 1)
    gamma, psi = arma_autocovariance(phi, theta, r + 1)
    A = np.zeros((r, r + 1))
    B = np.zeros((r, r + 1))
    A[0, 0] = 1.0
    for j in range(1, r):
        for i in range(j + 1, r + 1):
            if i <= p:
                A[j, i - j] += phi[i - 1]
        for i in range(j, r):
            if i <= q:
                B[j, i - j] += theta[i - 1]
    G = np.empty((r + 1, r + 1))
    Psi = np.zeros((r + 1, r + 1))
    for s in range(r + 1):
        for u in range(r + 1):
            G[s, u] = gamma[abs(s - u)]
            if u >= s:
                Psi[s, u] = psi[u - s]
    AG = A @ G
    APB = A @ Psi @ B.T
    return AG @ A.T + APB + APB.T + B @ B.T


@njit(cache=True)
def _kalman(y, phi, theta):
    """Innovations ``v_t`` and variances ``F_t`` (unit innovation variance).

    Only the upper triangle of the state covariance is updated; the extra
    zero row and column absorb the shift part of the transition matrix.
    """
    n = y.size
    p = phi.size
    q = theta.size
    r = max(p, q + 1)
    T0 = np.zeros(r + 1)
    T0[:p] = phi
    Rv = np.zeros(r + 1)
    Rv[0] = 1.0
    Rv[1 : q + 1] = theta
    P = np.zeros((r + 1, r + 1))
    P[:r, :r] = stationary_state_cov(phi, theta)
    a = np.zeros(r + 1)
    row0 = np.zeros(r + 1)
    K = np.zeros(r + 1)
    v = np.empty(n)
    F = np.empty(n)
    steady = False
    Fs = 0.0
    for t in range(n):
        vt = y[t] - a[0]
        if not steady:
            Fs = P[0, 0]
            if not Fs > 0.0:
                v[:] = np.nan
                F[:] = np.nan
                return v, F
            for j in range(r + 1):
                row0[j] = P[0, j]
            p00 = row0[0]
            for i in range(r):
                K[i] = (T0[i] * p00 + row0[i + 1]) / Fs
        v[t] = vt
        F[t] = Fs
        a0 = a[0]
        for i in range(r):
            a[i] = T0[i] * a0 + a[i + 1] + K[i] * vt
        if steady:
            continue
        diff = 0.0
        for i in range(r):
            ti = T0[i]
            ri = Rv[i]
            ki = K[i] * Fs
            ci = ti * p00 + row0[i + 1]
            for j in range(i, r):
                val = T0[j] * ci + ti * row0[j + 1] + P[i + 1, j + 1] + ri * Rv[j] - ki * K[j]
                d = abs(val - P[i, j])
                if d > diff:
                    diff = d
                P[i, j] = val
        if diff < 1e-13:
            steady = True
    return v, F


def _concentrated_loglike(z, phi, theta):
    v, F = _kalman(z, phi, theta)
    if not np.all(np.isfinite(F)):
        return -np.inf, v, F, np.nan
    n = z.size
    s2 = float(np.sum(v * v / F) / n)
    if not s2 > 0:
        return -np.inf, v, F, np.nan
    ll = -0.5 * n * (math.log(2 * math.pi) + 1.0 + math.log(s2)) - 0.5 * float(np.sum(np.log(F)))
    return ll, v, F, s2


def arma_loglike(series, mean: float, ar, ma) -> float:
    """Exact Gaussian log-likelihood with the innovation variance profiled out."""
    y = np.asarray(series.values if isinstance(series, DatedSeries) else series, dtype=float)
    ll, *_ = _concentrated_loglike(
        y - mean, np.asarray(ar, dtype=float), np.asarray(ma, dtype=float)
    )
    return ll


# --------------------------------------------------------------------------
# starting values


def _lagmat(x, lags, start):
    return np.column_stack([x[start - k : x.size - k] for k in range(1, lags + 1)])


def hannan_rissanen(z: np.ndarray, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-stage regression estimates used as optimizer starting values."""
    n = z.size
    phi, theta = np.zeros(p), np.zeros(q)
    try:
        if q == 0:
            Xl = _lagmat(z, p, p)
            phi = np.linalg.lstsq(Xl, z[p:], rcond=None)[0]
        else:
            m = min(n // 3, max(p + q, int(math.ceil(math.log(n) ** 2))))
            Xl = _lagmat(z, m, m)
            a = np.linalg.lstsq(Xl, z[m:], rcond=None)[0]
            e = np.zeros(n)
            e[m:] = z[m:] - Xl @ a
            start = m + max(p, q)
            if n - start <= 2 * (p + q):
                raise np.linalg.LinAlgError("too few rows")
            cols = []
            if p:
                cols.append(_lagmat(z, p, start))
            cols.append(_lagmat(e, q, start))
            coef = np.linalg.lstsq(np.column_stack(cols), z[start:], rcond=None)[0]
            phi, theta = coef[:p], coef[p:]
    except np.linalg.LinAlgError:
        phi, theta = np.zeros(p), np.zeros(q)
    phi = _pull_inside(phi, -1.0) if p else phi
    theta = _pull_inside(theta, 1.0) if q else theta
    return phi, theta


# --------------------------------------------------------------------------
# fit


@dataclass
class ArimaFit:
    """Estimated model.

    ``intercept`` is the constant of the regression form
    ``E(t) = intercept + sum ar_i E(t-i) + sum ma_k e(t-k)``, so the process
    mean is ``intercept / (1 - sum ar_i)``.  ``history`` is the series the
    model was fitted on (before differencing).
    """

    spec: ArimaSpec
    intercept: float
    ar_weights: np.ndarray
    ma_weights: np.ndarray
    innovation_variance: float
    residuals: np.ndarray
    log_likelihood: float
    n_obs: int
    history: DatedSeries
    converged: bool = True
    iterations: int = 0
    boundary: bool = False
    message: str = ""

    @property
    def mean(self) -> float:
        return self.intercept / (1.0 - float(np.sum(self.ar_weights)))

    @property
    def modeled(self) -> np.ndarray:
        """The series the ARMA part describes (differenced when d = 1)."""
        y = self.history.values
        return np.diff(y) if self.spec.d == 1 else y

    def fitted(self) -> DatedSeries:
        """One-step-ahead in-sample predictions on the history's dates."""
        pred = self.modeled - self.residuals
        if self.spec.d == 1:
            y = self.history.values
            return DatedSeries(self.history.start_date + ONE_DAY, y[:-1] + pred, "fitted")
        return self.history.with_values(pred, name="fitted")

    def to_dict(self) -> dict:
        return {
            "spec": {"p": self.spec.p, "d": self.spec.d, "q": self.spec.q},
            "intercept": self.intercept,
            "ar_weights": [float(x) for x in self.ar_weights],
            "ma_weights": [float(x) for x in self.ma_weights],
            "innovation_variance": self.innovation_variance,
            "log_likelihood": self.log_likelihood,
            "n_obs": self.n_obs,
            "converged": self.converged,
            "iterations": self.iterations,
            "boundary": self.boundary,
            "message": self.message,
            "residuals": [float(x) for x in self.residuals],
            "history": {
                "start_date": self.history.start_date.isoformat(),
                "name": self.history.name,
                "values": [float(x) for x in self.history.values],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArimaFit":
        h = d["history"]
        return cls(
            spec=ArimaSpec(**d["spec"]),
            intercept=d["intercept"],
            ar_weights=np.array(d["ar_weights"], dtype=float),
            ma_weights=np.array(d["ma_weights"], dtype=float),
            innovation_variance=d["innovation_variance"],
            residuals=np.array(d["residuals"], dtype=float),
            log_likelihood=d["log_likelihood"],
            n_obs=d["n_obs"],
            history=DatedSeries(h["start_date"], h["values"], h["name"]),
            converged=d.get("converged", True),
            iterations=d.get("iterations", 0),
            boundary=d.get("boundary", False),
            message=d.get("message", ""),
        )


def _unpack(x, p, q):
    return x[0], constrain_ar(x[1 : 1 + p]), constrain_ma(x[1 + p :])


def fit_arima(series: DatedSeries, spec: ArimaSpec | tuple, max_iter: int = MAX_ITER) -> ArimaFit:
    """Exact maximum-likelihood ARIMA(p, d, q) with a constant."""
    if not isinstance(spec, ArimaSpec):
        spec = ArimaSpec(*spec)
    p, q = spec.p, spec.q
    y = series.values
    w = np.diff(y) if spec.d == 1 else y
    n = w.size
    if n <= 3 * (p + q) + 10:
        raise DomainError(f"{spec} needs more than {3 * (p + q) + 10} observations, got {n}")
    center = float(w.mean())
    scale = float(w.std())
    if not scale > 1e-12 * max(1.0, abs(center)):
        raise DomainError("series is constant")
    z = (w - center) / scale

    phi0, theta0 = hannan_rissanen(z, p, q)
    x0 = np.concatenate(([0.0], unconstrain_ar(phi0), unconstrain_ma(theta0)))

    def objective(x):
        m, phi, theta = _unpack(x, p, q)
        ll, *_ = _concentrated_loglike(z - m, phi, theta)
        return -ll / n if np.isfinite(ll) else 1e10

    history = []

    def track(intermediate_result):
        history.append(intermediate_result.fun)
        if len(history) >= 2:
            change = abs(history[-1] - history[-2]) / max(abs(history[-2]), 1e-12)
            if change < REL_TOL:
                raise StopIteration

    res_nm = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"maxiter": max_iter, "xatol": 1e-6, "fatol": 1e-10, "adaptive": True},
    )
    res = optimize.minimize(
        objective, res_nm.x, method="BFGS", callback=track, options={"maxiter": max_iter, "gtol": 1e-6}
    )
    x_best = res.x if res.fun <= res_nm.fun else res_nm.x
    f_best = min(res.fun, res_nm.fun)
    if len(history) >= 2:
        last_change = abs(history[-1] - history[-2]) / max(abs(history[-2]), 1e-12)
    else:
        last_change = 0.0
    converged = bool(res.success or res.status in (2, 99) or last_change < REL_TOL)
    if not np.isfinite(f_best) or f_best >= 1e10:
        raise EstimationError(f"{spec}: likelihood could not be evaluated", last_iterate=x_best)

    m, phi, theta = _unpack(x_best, p, q)
    ll_z, v, F, s2 = _concentrated_loglike(z - m, phi, theta)
    if not converged:
        raise EstimationError(
            f"{spec}: optimizer did not converge in {max_iter} iterations ({res.message})",
            last_iterate={"mean": center + scale * m, "ar": phi.tolist(), "ma": theta.tolist()},
        )
    mean = center + scale * m
    boundary = (p and ar_root_modulus(phi) < 1 + BOUNDARY_TOL) or (
        q and ma_root_modulus(theta) < 1 + BOUNDARY_TOL
    )
    return ArimaFit(
        spec=spec,
        intercept=float(mean * (1.0 - phi.sum())),
        ar_weights=phi,
        ma_weights=theta,
        innovation_variance=float(s2 * scale * scale),
        residuals=v * scale,
        log_likelihood=float(ll_z - n * math.log(scale)),
        n_obs=n,
        history=series,
        converged=converged,
        iterations=int(res_nm.nit + res.nit),
        boundary=bool(boundary),
        message=str(res.message),
    )


def fit_ar(series: DatedSeries, p: int) -> ArimaFit:
    """Pure autoregression of order ``p``."""
    if p < 1:
        raise DomainError("AR order must be positive")
    if len(series) <= 3 * p:
        raise DomainError(f"AR({p}) needs more than {3 * p} observations")
    return fit_arima(series, ArimaSpec(p, 0, 0))


# --------------------------------------------------------------------------
# information criteria and order selection


@dataclass(frozen=True)
class ModelScore:
    spec: ArimaSpec
    aic: float
    bic: float
    dof: int
    n_obs: int = 0
    log_likelihood: float = float("nan")
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def information_criteria(fit: ArimaFit) -> ModelScore:
    k = fit.spec.n_params
    ll = fit.log_likelihood
    return ModelScore(
        spec=fit.spec,
        aic=-2.0 * ll + 2.0 * k,
        bic=-2.0 * ll + math.log(fit.n_obs) * k,
        dof=k,
        n_obs=fit.n_obs,
        log_likelihood=ll,
    )


CRITERIA = ("AIC", "BIC", "parsimony")

DEFAULT_P_CANDIDATES = (1, 3, 5, 6, 7)
DEFAULT_Q_CANDIDATES = (8, 15, 21, 28)


def _try_fit(series, spec):
    try:
        return fit_arima(series, spec), None
    except (EstimationError, DomainError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _choose(scores: list[ModelScore], criterion: str) -> int:
    ok = [i for i, s in enumerate(scores) if s.ok]
    if criterion == "AIC":
        return min(ok, key=lambda i: (scores[i].aic, i))
    best = min(ok, key=lambda i: (scores[i].bic, scores[i].dof, i))
    if criterion == "BIC":
        return best
    # parsimony: a smaller model whose AIC is within 1 of the BIC winner's
    near = [
        i for i in ok
        if scores[i].dof < scores[best].dof and abs(scores[i].aic - scores[best].aic) < 1.0
    ]
    if near:
        return min(near, key=lambda i: (scores[i].dof, scores[i].bic, i))
    return best


def select_model(
    series: DatedSeries,
    p_candidates=DEFAULT_P_CANDIDATES,
    q_candidates=DEFAULT_Q_CANDIDATES,
    criterion: str = "parsimony",
    d: int = 0,
    n_jobs: int = 1,
):
    """Fit every (p, q) pair and pick one by information criterion.

    Returns ``(winner_fit, scores)``; ``scores`` lists every candidate in
    grid order (p outer, q inner), failures included with ``error`` set.
    """
    if criterion not in CRITERIA:
        raise DomainError(f"criterion must be one of {CRITERIA}")
    ps, qs = sorted(set(p_candidates)), sorted(set(q_candidates))
    if not ps or not qs:
        raise DomainError("candidate sets must be non-empty")
    specs = [ArimaSpec(p, d, q) for p in ps for q in qs if p + q >= 1]
    if not specs:
        raise DomainError("grid contains no valid (p, q) pair")
    if n_jobs == 1:
        results = [_try_fit(series, s) for s in specs]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_try_fit)(series, s) for s in specs)
    scores = []
    for spec, (fit, err) in zip(specs, results):
        if fit is None:
            nan = float("nan")
            scores.append(ModelScore(spec, nan, nan, spec.n_params, error=err))
        else:
            scores.append(information_criteria(fit))
    if not any(s.ok for s in scores):
        raise EstimationError(
            "no candidate model could be estimated",
            diagnostics={str(s.spec): s.error for s in scores},
        )
    winner = _choose(scores, criterion)
    return results[winner][0], scores


# --------------------------------------------------------------------------
# forecasting


def forecast(fit: ArimaFit, horizon: int) -> DatedSeries:
    """Iterated conditional-expectation forecasts after the fitted history.

    Future innovations are zero; past innovations are the fit residuals.
    """
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    p, q = fit.spec.p, fit.spec.q
    w = list(fit.modeled)
    e = list(fit.residuals)
    out = []
    for _ in range(horizon):
        val = fit.intercept
        for i in range(1, p + 1):
            val += fit.ar_weights[i - 1] * w[-i]
        for k in range(1, q + 1):
            val += fit.ma_weights[k - 1] * e[-k]
        w.append(val)
        e.append(0.0)
        out.append(val)
    out = np.array(out)
    if fit.spec.d == 1:
        out = fit.history.values[-1] + np.cumsum(out)
    return DatedSeries(fit.history.end_date + ONE_DAY, out, "forecast")
