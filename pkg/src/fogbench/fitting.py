"""Least-squares fit of the illumination-shifted scattering model.

Fits ``I(d) = i0 exp(-beta (d - d0)) + i_inf (1 - exp(-beta_a (d - d0)))``
to a binned target trace with ``beta`` fixed from the visibility.  Free
parameters are ``(i0, i_inf, d0, beta_a)``.  Bins before ``d0`` are compared
against the clamped value ``i0``, which keeps ``d0`` identifiable.

The solver is a damped Gauss-Newton (Levenberg-Marquardt) iteration with
Marquardt diagonal scaling, bound projection after every step and
multiplicative damping control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .atmosphere import adapted_intensity
from .errors import DomainError, ValidationError
from .scene import TargetTrace

N_PARAMS = 4
MIN_BINS = 4

INITIAL_DAMPING = 1e-3
DAMPING_FACTOR = 10.0
MAX_DAMPING = 1e16
MAX_ITERATIONS = 200
RTOL_OBJECTIVE = 1e-10
XTOL_STEP = 1e-12
STD_FLOOR = 1e-6


class FitParams(NamedTuple):
    i0: float
    i_inf: float
    d0_m: float
    beta_a_per_m: float


@dataclass
class FitProblem:
    """A binned trace, the fixed attenuation coefficient and per-bin weights.

    ``weights`` default to ``1 / std`` for bins with a positive std (floored
    at ``STD_FLOOR``) and 1 otherwise.
    """

    trace: TargetTrace
    beta_per_m: float
    weights: np.ndarray | None = None
    depth_m: np.ndarray = field(init=False, repr=False)
    mean: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = self.trace.binned
        self.depth_m = np.asarray(b.center_m, dtype=float)
        self.mean = np.asarray(b.mean, dtype=float)
        if not self.beta_per_m > 0:
            raise ValidationError("beta_per_m must be positive", "beta_per_m")
        if len(self.depth_m) < MIN_BINS:
            raise ValidationError(f"need at least {MIN_BINS} bins to fit {N_PARAMS} parameters, got {len(self.depth_m)}", "trace")
        if self.weights is None:
            std = np.asarray(b.std, dtype=float)
            self.weights = np.where(std > 0, 1.0 / np.maximum(std, STD_FLOOR), 1.0)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.depth_m.shape:
                raise ValidationError("one weight per bin is required", "weights")
            if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
                raise ValidationError("weights must be finite and non-negative", "weights")
        if np.count_nonzero(self.weights) < MIN_BINS:
            raise ValidationError(f"need at least {MIN_BINS} bins with non-zero weight", "weights")

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([0.0, 0.0, self.depth_m.min(), 0.0])
        hi = np.array([np.inf, np.inf, self.depth_m.max(), np.inf])
        return lo, hi


@dataclass(frozen=True)
class FitResult:
    i0: float
    i_inf: float
    d0_m: float
    beta_a_per_m: float
    rms_residual: float
    iterations: int
    converged: bool
    covariance_diag: tuple[float, float, float, float] | None = None
    beta_per_m: float = float("nan")

    @property
    def params(self) -> FitParams:
        return FitParams(self.i0, self.i_inf, self.d0_m, self.beta_a_per_m)

    def evaluate(self, d):
        """Fitted intensity at depth(s) d; usable beyond the fitted range."""
        return adapted_intensity(self.i0, self.i_inf, self.d0_m, self.beta_per_m, self.beta_a_per_m, d)


def model(params, problem: FitProblem) -> np.ndarray:
    i0, i_inf, d0, beta_a = params
    return adapted_intensity(i0, i_inf, d0, problem.beta_per_m, beta_a, problem.depth_m)


def residuals(params, problem: FitProblem) -> np.ndarray:
    """Weighted residuals ``w_k (mean_k - I(d_k))``."""
    return problem.weights * (problem.mean - model(params, problem))


def jacobian(params, problem: FitProblem) -> np.ndarray:
    """Analytic partial derivatives of the model intensity, shape (bins, 4).

    Column order ``(i0, i_inf, d0, beta_a)``.  For bins before ``d0`` the
    model is the constant ``i0``, so only the first column is non-zero there.
    """
    i0, i_inf, d0, beta_a = params
    beta = problem.beta_per_m
    x = problem.depth_m - d0
    active = x > 0
    xa = np.where(active, x, 0.0)
    att = np.exp(-beta * xa)
    air = np.exp(-beta_a * xa)
    jac = np.empty((len(x), N_PARAMS))
    jac[:, 0] = att
    jac[:, 1] = np.where(active, -np.expm1(-beta_a * xa), 0.0)
    jac[:, 2] = np.where(active, beta * i0 * att - beta_a * i_inf * air, 0.0)
    jac[:, 3] = np.where(active, i_inf * xa * air, 0.0)
    return jac


def initial_guess(problem: FitProblem) -> np.ndarray:
    """Peak depth for d0, peak minus tail level for i0, tail level for i_inf, beta for beta_a."""
    mean = problem.mean
    k = int(np.argmax(mean))
    n_tail = max(1, int(np.ceil(0.1 * len(mean))))
    tail = float(np.mean(mean[-n_tail:]))
    return np.array([max(mean[k] - tail, 0.0), max(tail, 0.0), problem.depth_m[k], problem.beta_per_m])


def _covariance_diag(jr: np.ndarray, r: np.ndarray):
    n, p = jr.shape
    if n <= p:
        return None
    try:
        cov = np.linalg.inv(jr.T @ jr) * float(r @ r) / (n - p)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(cov)
    if not np.all(np.isfinite(diag)):
        return None
    return tuple(float(v) for v in diag)


def fit_adapted_model(problem: FitProblem, x0=None, max_iterations: int = MAX_ITERATIONS) -> FitResult:
    """Minimize the weighted sum of squared residuals over ``(i0, i_inf, d0, beta_a)``.

    A step is accepted only if it lowers the objective, so the objective is
    non-increasing over accepted iterates.  If the iteration cap is reached
    the best parameters so far are returned with ``converged=False``.
    """
    lo, hi = problem.bounds
    x = np.clip(initial_guess(problem) if x0 is None else np.asarray(x0, dtype=float), lo, hi)
    r = residuals(x, problem)
    cost = float(r @ r)
    lam = INITIAL_DAMPING
    converged = False
    iterations = 0
    w = problem.weights[:, None]

    while iterations < max_iterations:
        if cost == 0.0:
            converged = True
            break
        iterations += 1
        jr = w * jacobian(x, problem)  # derivative of -r
        g = jr.T @ r
        a = jr.T @ jr
        diag = np.diag(a).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam <= MAX_DAMPING:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= DAMPING_FACTOR
                continue
            x_new = np.clip(x + step, lo, hi)
            r_new = residuals(x_new, problem)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                accepted = True
                break
            lam *= DAMPING_FACTOR
        if not accepted:
            # no damping level lowers the objective: x is a (bounded) stationary point
            converged = True
            break
        taken = x_new - x
        rel_change = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / DAMPING_FACTOR, 1e-12)
        if rel_change < RTOL_OBJECTIVE or np.max(np.abs(taken)) < XTOL_STEP:
            converged = True
            break

    plain = problem.mean - model(x, problem)
    rms = float(np.sqrt(np.mean(plain**2)))
    cov = _covariance_diag(w * jacobian(x, problem), r) if np.isfinite(cost) else None
    return FitResult(
        i0=float(x[0]),
        i_inf=float(x[1]),
        d0_m=float(x[2]),
        beta_a_per_m=float(x[3]),
        rms_residual=rms,
        iterations=iterations,
        converged=converged and bool(np.isfinite(rms)),
        covariance_diag=cov,
        beta_per_m=problem.beta_per_m,
    )


def fit_trace(trace: TargetTrace, beta_per_m: float, weights=None) -> FitResult:
    return fit_adapted_model(FitProblem(trace, beta_per_m, weights))


def synthetic_trace(params: FitParams, beta_per_m: float, depth_m, noise_std: float = 0.0, rng=None, rho: float = 0.9) -> TargetTrace:
    """Binned trace generated from known parameters, optionally with Gaussian noise.

    One sample per bin, so the bins carry std 0 and fit with unit weights.
    """
    depth = np.asarray(depth_m, dtype=float)
    if np.any(depth <= 0):
        raise DomainError("depths must be positive")
    mean = adapted_intensity(params.i0, params.i_inf, params.d0_m, beta_per_m, params.beta_a_per_m, depth)
    if noise_std > 0:
        rng = np.random.default_rng(rng)
        mean = mean + rng.normal(0.0, noise_std, size=depth.shape)
    return TargetTrace.from_bins(rho, depth, mean)
