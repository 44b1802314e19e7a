"""Generalized Pareto distribution (GPD) with shape k, scale sigma, location theta.

Density, distribution function, quantiles and inverse-transform sampling are
implemented directly from the closed forms; fitting uses a two step scheme:
the location is pinned to the sample minimum, then (k, sigma) are estimated by
maximum likelihood on the strictly positive shifted values.  The exponential
boundary k = 0 is excluded from the parameter space; values that would round
to zero are nudged to +/-1e-8 and the stable log1p/expm1 forms keep every
formula well behaved through that region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

# |k| below this is pushed away from the excluded k = 0 boundary.
_K_EPS = 1e-8
# Feasibility buffer: 1 + k*(x - theta)/sigma must exceed this for every
# observation; keeps log terms finite right up to the support boundary.
_SUPPORT_MARGIN = 1e-10
# The likelihood is unbounded for k <= -1 (no MLE exists there), so the
# search space is capped just above that boundary.
_K_FLOOR = -1.0 + 1e-8


class FitError(RuntimeError):
    """Maximum-likelihood fit did not converge.

    Carries the best parameters found so far in ``params`` (a (k, sigma)
    tuple) and solver diagnostics in ``diagnostics``.
    """

    def __init__(self, message: str, params=None, diagnostics=None):
        super().__init__(message)
        self.params = params
        self.diagnostics = diagnostics or {}


def _nudge_k(k: float) -> float:
    if abs(k) < _K_EPS:
        return _K_EPS if k >= 0 else -_K_EPS
    return float(k)


@dataclass(frozen=True)
class GpdParams:
    """Location theta, shape k (nonzero), scale sigma (> 0)."""

    theta: float
    k: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.k) and math.isfinite(self.sigma)):
            raise ValueError("GPD parameters must be finite")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "k", _nudge_k(self.k))

    @property
    def upper_endpoint(self) -> float:
        """Right end of the support: finite only for negative shape."""
        if self.k < 0:
            return self.theta - self.sigma / self.k
        return math.inf

    def as_dict(self) -> dict:
        return {"theta": self.theta, "k": self.k, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "GpdParams":
        return cls(theta=float(d["theta"]), k=float(d["k"]), sigma=float(d["sigma"]))


@dataclass
class GofStats:
    """Goodness of fit of a GPD against an empirical sample.

    ``r_squared_adj`` compares the model CDF with the empirical CDF at the
    order statistics (Hazen plotting positions (i - 0.5)/n), adjusted for the
    two free parameters of the fit.  ``qq_points`` pairs each retained order
    statistic with the model quantile at its plotting position.
    """

    r_squared_adj: float
    n: int
    qq_points: list = field(default_factory=list)


def pdf(x, p: GpdParams):
    """GPD density; 0 below theta and beyond the upper endpoint."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    z = np.atleast_1d((x - p.theta) / p.sigma)
    t = 1.0 + p.k * z
    inside = (z >= 0.0) & (t > 0.0)
    out = np.zeros_like(z)
    # (1 + k z)^(-1/k - 1) / sigma, evaluated in log space for stability
    out[inside] = np.exp((-1.0 / p.k - 1.0) * np.log1p(p.k * z[inside])) / p.sigma
    return float(out[0]) if scalar else out


def cdf(x, p: GpdParams):
    """GPD distribution function, clamped to [0, 1]."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    z = np.atleast_1d((x - p.theta) / p.sigma)
    t = 1.0 + p.k * z
    out = np.zeros_like(z)
    inside = (z >= 0.0) & (t > 0.0)
    # 1 - (1 + k z)^(-1/k)
    out[inside] = -np.expm1((-1.0 / p.k) * np.log1p(p.k * z[inside]))
    out[(z >= 0.0) & (t <= 0.0)] = 1.0  # at or beyond the finite endpoint (k < 0)
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def _quantile_unchecked(q, p: GpdParams):
    q = np.asarray(q, dtype=float)
    # theta + (sigma/k) * ((1-q)^(-k) - 1), via expm1 for small |k|
    return p.theta + (p.sigma / p.k) * np.expm1(-p.k * np.log1p(-q))


def quantile(q, p: GpdParams):
    """Inverse CDF for q in the open interval (0, 1)."""
    qa = np.asarray(q, dtype=float)
    if np.any((qa <= 0.0) | (qa >= 1.0)):
        raise ValueError("quantile requires 0 < q < 1")
    out = _quantile_unchecked(qa, p)
    return float(out) if qa.ndim == 0 else out


def sample(p: GpdParams, n: int, seed: int) -> np.ndarray:
    """Inverse-transform sample of size n, deterministic for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return _quantile_unchecked(rng.random(n), p)


def _neg_loglik(kv: float, log_sigma: float, x: np.ndarray) -> float:
    """Negative log-likelihood of GPD(k, sigma, theta=0) on positive data."""
    if kv < _K_FLOOR:
        return math.inf
    k = _nudge_k(kv)
    sigma = math.exp(log_sigma)
    t = k * x / sigma
    if np.min(t) <= -1.0 + _SUPPORT_MARGIN:
        return math.inf
    return x.size * log_sigma + (1.0 / k + 1.0) * float(np.sum(np.log1p(t)))


def loglik(data, k: float, sigma: float) -> float:
    """Log-likelihood of GPD(k, sigma, theta=0); -inf outside the feasible set."""
    x = np.asarray(data, dtype=float)
    if sigma <= 0:
        return -math.inf
    return -_neg_loglik(k, math.log(sigma), x)


def _moment_start(x: np.ndarray) -> tuple[float, float]:
    """Method-of-moments (k0, sigma0); falls back to (0.1, mean) if infeasible.

    k0 is clamped above the k = -1 search floor so the starting point (and
    the initial simplex grown from it toward larger k and sigma) is feasible.
    """
    m = float(np.mean(x))
    v = float(np.var(x))
    if v > 0.0:
        k0 = max(0.5 * (1.0 - m * m / v), -0.95)
        s0 = m * (1.0 - k0)
        if s0 > 0.0 and np.min(1.0 + k0 * x / s0) > _SUPPORT_MARGIN:
            return k0, s0
    return 0.1, m


def _score(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Log-likelihood gradient in (k, log sigma); zero vector if infeasible."""
    k = _nudge_k(w[0])
    sigma = math.exp(w[1])
    z = x / sigma
    t = 1.0 + k * z
    if np.min(t) <= _SUPPORT_MARGIN:
        return np.zeros(2)
    s1 = float(np.sum(z / t))
    big_l = float(np.sum(np.log1p(k * z)))
    g_k = big_l / (k * k) - (1.0 / k + 1.0) * s1
    g_u = -float(x.size) + (1.0 + k) * s1
    return np.array([g_k, g_u])


def _newton_polish(w: np.ndarray, x: np.ndarray, max_steps: int = 40) -> np.ndarray:
    """Sharpen a near-optimal point by Newton steps on the score equations.

    Nelder-Mead localizes the optimum only to the function-value noise floor
    (~1e-8 in the parameters); the score gradient does not suffer that limit,
    so a few guarded Newton steps recover the last digits.  Steps that leave
    the feasible region or lower the likelihood are backtracked, and any
    breakdown returns the best point seen, so this never degrades the input.
    """
    w = np.array(w, dtype=float)
    f_best = -_neg_loglik(w[0], w[1], x)
    for _ in range(max_steps):
        g = _score(w, x)
        if not np.all(np.isfinite(g)) or np.max(np.abs(g)) < 1e-10 * (1.0 + x.size):
            break
        h = 1e-7 * (1.0 + np.abs(w))
        jac = np.empty((2, 2))
        for j in range(2):
            wp, wm = w.copy(), w.copy()
            wp[j] += h[j]
            wm[j] -= h[j]
            jac[:, j] = (_score(wp, x) - _score(wm, x)) / (2.0 * h[j])
        try:
            step = np.linalg.solve(jac, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        improved = False
        for damp in (1.0, 0.5, 0.25, 0.125):
            w_try = w - damp * step
            f_try = -_neg_loglik(w_try[0], w_try[1], x)
            if math.isfinite(f_try) and f_try >= f_best - 1e-9:
                w, f_best = w_try, max(f_try, f_best)
                improved = True
                break
        if not improved or np.max(np.abs(step)) < 1e-13:
            break
    return w


def fit_two_param_mle(data, max_iter: int = 2000) -> tuple[float, float]:
    """Maximum-likelihood (k, sigma) for zero-location GPD on positive data.

    Derivative-free Nelder-Mead search over (k, log sigma), started at the
    method-of-moments point; the support constraint 1 + k x/sigma > 0 is
    enforced by an infinite objective outside the feasible region.

    Raises:
        ValueError: non-positive or non-finite input.
        FitError: the search hit the iteration cap without meeting the
            simplex tolerances; carries the best (k, sigma) found.
    """
    x = np.asarray(data, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("data must be finite and non-empty")
    if np.min(x) <= 0.0:
        raise ValueError("two-parameter fit requires strictly positive values")

    k0, s0 = _moment_start(x)
    u0 = math.log(s0)
    # grow the simplex toward larger k and sigma, which stays feasible
    simplex = np.array([[k0, u0], [k0 + 0.05, u0], [k0, u0 + 0.05]])
    res = minimize(
        lambda w: _neg_loglik(w[0], w[1], x),
        x0=np.array([k0, u0]),
        method="Nelder-Mead",
        options={
            "maxiter": max_iter,
            "maxfev": 2 * max_iter,
            "xatol": 1e-10,
            "fatol": 1e-10,
            "initial_simplex": simplex,
        },
    )
    if not res.success:
        raise FitError(
            f"GPD MLE did not converge within {max_iter} iterations",
            params=(_nudge_k(float(res.x[0])), float(math.exp(res.x[1]))),
            diagnostics={"message": res.message, "nit": res.nit, "nfev": res.nfev},
        )
    w = _newton_polish(res.x, x)
    return _nudge_k(float(w[0])), float(math.exp(w[1]))


def fit_three_param(data) -> tuple[GpdParams, GofStats]:
    """Shift-then-fit estimation of (theta, k, sigma).

    theta is pinned to the sample minimum; the values are shifted so the
    minimum is zero, exact zeros are dropped, and (k, sigma) come from the
    two-parameter MLE on the remainder.  The returned GofStats is computed
    on the full input against the fitted three-parameter distribution.

    Raises:
        ValueError: fewer than 50 values strictly above the minimum.
        FitError: MLE non-convergence; ``params`` holds the best GpdParams.
    """
    x = np.asarray(data, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("data must be finite and non-empty")
    theta = float(np.min(x))
    shifted = x - theta
    positive = shifted[shifted > 0.0]
    if positive.size < 50:
        raise ValueError(
            f"need at least 50 values strictly above the minimum, got {positive.size}"
        )
    try:
        k_hat, sigma_hat = fit_two_param_mle(positive)
    except FitError as err:
        k_b, s_b = err.params
        raise FitError(
            str(err),
            params=GpdParams(theta=theta, k=k_b, sigma=s_b),
            diagnostics=err.diagnostics,
        ) from err
    params = GpdParams(theta=theta, k=k_hat, sigma=sigma_hat)
    return params, gof_adjusted_r2(x, params)


def gof_adjusted_r2(data, p: GpdParams, max_qq_points: int = 500) -> GofStats:
    """Adjusted R-squared between the empirical and fitted CDFs.

    With sorted data x_(1..n) and plotting positions F_i = (i - 0.5)/n:
    R^2 = 1 - sum((Fhat - F)^2) / sum((F - mean F)^2), then adjusted with
    parameter count 2 (theta is set by the minimum, not estimated).
    """
    x = np.sort(np.asarray(data, dtype=float))
    n = x.size
    if n < 10:
        raise ValueError(f"need at least 10 values, got {n}")
    f_emp = (np.arange(1, n + 1) - 0.5) / n
    f_hat = cdf(x, p)
    ss_res = float(np.sum((f_hat - f_emp) ** 2))
    ss_tot = float(np.sum((f_emp - f_emp.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / (n - 2 - 1)
    if n <= max_qq_points:
        idx = np.arange(n)
    else:
        idx = np.unique(np.linspace(0, n - 1, max_qq_points).round().astype(int))
    model_q = _quantile_unchecked(f_emp[idx], p)
    qq_points = [(float(a), float(b)) for a, b in zip(x[idx], model_q)]
    return GofStats(r_squared_adj=float(r2_adj), n=int(n), qq_points=qq_points)
