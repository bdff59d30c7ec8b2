"""Random-intercept logistic regression via marginal maximum likelihood.

The per-group integral over the Gaussian random intercept is evaluated with
adaptive Gauss-Hermite quadrature centered and scaled at each group's
posterior mode (one node reproduces the Laplace approximation). The outer
optimization over (beta, log sigma) is quasi-Newton (L-BFGS-B) on the
negative marginal log-likelihood with an analytic gradient computed from
posterior expectations at the same quadrature nodes. Standard errors come
from the numerically differentiated Hessian at the optimum.

Also provides Wald odds-ratio inference, likelihood-ratio tests for nested
fits, variance inflation factors, and the latent-scale marginal/conditional
variance-explained decomposition (logistic residual variance pi^2/3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.special import erfc, expit

from srltrace.errors import SrlTraceError
from srltrace.stats import chi2_sf

_BETA_BOUND = 20.0
_SEPARATION_THRESHOLD = 15.0
_LOG_SIGMA_BOUNDS = (-10.0, 3.0)
_SIGMA_EFFECTIVELY_ZERO = 1e-4
_LOGISTIC_RESIDUAL_VAR = math.pi ** 2 / 3.0


class ConstantColumn(SrlTraceError):
    """A column slated for z-scoring has zero variance."""


class RankDeficientDesign(SrlTraceError):
    """The fixed-effects design matrix is not full rank."""


class SeparationDetected(SrlTraceError):
    """A coefficient diverged beyond +-15 on the log-odds scale."""


class TooFewGroups(SrlTraceError):
    """Estimating the random-intercept SD needs at least two groups."""


class NotNested(SrlTraceError):
    """LRT models are not nested or were fit on different rows."""


class UnconvergedModel(SrlTraceError):
    """An operation requiring a converged fit got an unconverged one."""


class PerfectCollinearity(SrlTraceError):
    """A predictor is an exact linear combination of the others."""


@dataclass(frozen=True)
class ModelSpec:
    """What to regress on what, and which columns to z-score first."""

    outcome: str
    fixed_terms: tuple[str, ...] = ()
    random_intercept_group: str = "student_id"
    standardize: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if len(set(self.fixed_terms)) != len(self.fixed_terms):
            raise ValueError("duplicate fixed terms")
        if self.outcome in self.fixed_terms:
            raise ValueError("outcome cannot appear among fixed terms")


@dataclass(frozen=True)
class LrtResult:
    """Likelihood-ratio test of a smaller model inside a bigger one."""

    chi2: float
    df: int
    p: float


@dataclass(frozen=True)
class FittedModel:
    """Fixed coefficients, Wald inference, and random-intercept SD."""

    terms: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    sigma: float
    sigma_se: float | None
    loglik: float
    n_obs: int
    n_groups: int
    converged: bool
    iterations: int
    message: str
    quadrature_nodes: int
    sigma_pinned: bool
    odds_ratios: np.ndarray
    or_ci_low: np.ndarray
    or_ci_high: np.ndarray
    p_values: np.ndarray
    standardization: dict[str, dict[str, float]]

    @property
    def n_params(self) -> int:
        return len(self.beta) + 1

    @property
    def sigma_effectively_zero(self) -> bool:
        return self.sigma < _SIGMA_EFFECTIVELY_ZERO

    def report(self) -> dict:
        """JSON-ready coefficient table and convergence block.

        Non-finite values (unbounded CI ends from near-singular designs)
        become null so the output stays strict JSON.
        """

        def _num(x: float) -> float | None:
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "terms": [
                {
                    "name": t,
                    "beta": _num(self.beta[i]),
                    "se": _num(self.se[i]),
                    "odds_ratio": _num(self.odds_ratios[i]),
                    "ci_low": _num(self.or_ci_low[i]),
                    "ci_high": _num(self.or_ci_high[i]),
                    "p": _num(self.p_values[i]),
                }
                for i, t in enumerate(self.terms)
            ],
            "sigma": float(self.sigma),
            "sigma_se": None if self.sigma_se is None else float(self.sigma_se),
            "sigma_effectively_zero": self.sigma_effectively_zero,
            "loglik": float(self.loglik),
            "n_obs": self.n_obs,
            "n_groups": self.n_groups,
            "n_params": self.n_params,
            "standardization": self.standardization,
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "message": self.message,
                "quadrature_nodes": self.quadrature_nodes,
                "sigma_pinned": self.sigma_pinned,
            },
        }


def standardize(
    rows: pd.DataFrame, columns: set[str] | frozenset[str]
) -> tuple[pd.DataFrame, dict[str, dict[str, float]]]:
    """Z-score the named columns (mean 0, sd 1 with the n-1 denominator).

    Returns the transformed copy and a per-column {mean, sd} record kept
    for reporting. Zero-variance columns raise ConstantColumn.
    """
    out = rows.copy()
    record: dict[str, dict[str, float]] = {}
    for col in sorted(columns):
        values = out[col].to_numpy(dtype=float)
        mean = float(np.mean(values))
        sd = float(np.std(values, ddof=1))
        if sd == 0.0 or not math.isfinite(sd):
            raise ConstantColumn(f"column {col!r} has zero variance")
        out[col] = (values - mean) / sd
        record[col] = {"mean": mean, "sd": sd}
    return out, record


class _MarginalLikelihood:
    """Negative marginal log-likelihood and gradient for one design.

    Group posterior modes are found by safeguarded Newton (vectorized over
    groups, warm-started across evaluations); the integral uses Gauss-Hermite
    nodes recentred at the mode and rescaled by the mode curvature. Rows are
    sorted by group once so per-group sums are contiguous reduceat calls,
    keeping the summation order fixed and the result reproducible.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, group_idx: np.ndarray,
                 n_groups: int, nodes: int):
        order = np.argsort(group_idx, kind="stable")
        self.X = X[order]
        self.y = y[order]
        self.gi = group_idx[order]
        self.G = n_groups
        counts = np.bincount(self.gi, minlength=n_groups)
        self.starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        self.y_sums = np.add.reduceat(self.y, self.starts)
        z, w = np.polynomial.hermite.hermgauss(nodes)
        self.z = z
        self.logw_z2 = np.log(w) + z * z
        self.b_hat = np.zeros(n_groups)

    def _group_sum(self, values: np.ndarray) -> np.ndarray:
        return np.add.reduceat(values, self.starts, axis=0)

    def _find_modes(self, eta0: np.ndarray, inv_s2: float) -> tuple[np.ndarray, np.ndarray]:
        """Maximize each group's integrand over b; returns (modes, curvatures)."""
        b = self.b_hat.copy()
        y_eta0 = self._group_sum(self.y * eta0)

        def h_parts(bvec: np.ndarray):
            eta = eta0 + bvec[self.gi]
            p = expit(eta)
            ll = y_eta0 + bvec * self.y_sums - self._group_sum(np.logaddexp(0.0, eta))
            h = ll - 0.5 * inv_s2 * bvec * bvec
            score = self.y_sums - self._group_sum(p) - inv_s2 * bvec
            curv = self._group_sum(p * (1.0 - p)) + inv_s2
            return h, score, curv

        h, score, curv = h_parts(b)
        for _ in range(100):
            step = score / curv
            if np.max(np.abs(step)) < 1e-11:
                break
            b_new = b + step
            h_new, score_new, curv_new = h_parts(b_new)
            # Backtrack groups whose objective decreased (strict concavity
            # in b makes the Newton direction an ascent direction).
            for _ in range(60):
                worse = h_new < h - 1e-13
                if not np.any(worse):
                    break
                step = np.where(worse, 0.5 * step, step)
                b_new = b + step
                h_new, score_new, curv_new = h_parts(b_new)
            b, h, score, curv = b_new, h_new, score_new, curv_new
        self.b_hat = b
        return b, curv

    def value_and_grad(self, beta: np.ndarray, log_sigma: float) -> tuple[float, np.ndarray]:
        """(negative loglik, negative gradient) at (beta, log sigma)."""
        sigma = math.exp(log_sigma)
        inv_s2 = 1.0 / (sigma * sigma)
        eta0 = self.X @ beta
        b_hat, curv = self._find_modes(eta0, inv_s2)
        tau = 1.0 / np.sqrt(curv)

        B = b_hat[:, None] + math.sqrt(2.0) * tau[:, None] * self.z[None, :]
        eta = eta0[:, None] + B[self.gi, :]
        p_nodes = expit(eta)
        # sum_j y_j eta_j decomposes as [sum y eta0]_g + b_g [sum y]_g, so
        # only the softplus term needs a full per-node group sum.
        y_eta = self._group_sum(self.y * eta0)[:, None] + B * self.y_sums[:, None]
        ll = y_eta - self._group_sum(np.logaddexp(0.0, eta))
        u = self.logw_z2[None, :] + ll - 0.5 * inv_s2 * B * B \
            - log_sigma - 0.5 * math.log(2.0 * math.pi)

        u_max = np.max(u, axis=1)
        sumexp = np.sum(np.exp(u - u_max[:, None]), axis=1)
        log_integral = 0.5 * math.log(2.0) + np.log(tau) + u_max + np.log(sumexp)
        loglik = float(np.sum(log_integral))

        omega = np.exp(u - u_max[:, None]) / sumexp[:, None]
        p_bar = np.sum(omega[self.gi, :] * p_nodes, axis=1)
        grad_beta = self.X.T @ (self.y - p_bar)
        grad_log_sigma = float(np.sum(np.sum(omega * B * B, axis=1) * inv_s2 - 1.0))
        grad = np.append(grad_beta, grad_log_sigma)
        return -loglik, -grad


def _plain_value_and_grad(X: np.ndarray, y: np.ndarray, beta: np.ndarray
                          ) -> tuple[float, np.ndarray]:
    """Negative loglik and gradient of ordinary logistic regression."""
    eta = X @ beta
    loglik = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    grad = X.T @ (y - expit(eta))
    return -loglik, -grad


def _rough_beta_start(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """A few damped Newton steps on the plain logistic loglik.

    Only a starting point for the marginal-likelihood optimizer; the final
    estimates never depend on it.
    """
    beta = np.zeros(X.shape[1])
    for _ in range(3):
        eta = X @ beta
        p = expit(eta)
        w = np.maximum(p * (1.0 - p), 1e-6)
        H = (X * w[:, None]).T @ X
        g = X.T @ (y - p)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        beta = beta + np.clip(step, -2.0, 2.0)
    return np.clip(beta, -5.0, 5.0)


def _wald_blocks(beta: np.ndarray, se: np.ndarray) -> tuple[np.ndarray, ...]:
    # A near-singular information matrix yields huge SEs; the unbounded CI
    # end comes out as inf, reported downstream as null/inf, not an error.
    z = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
    p = erfc(np.abs(z) / math.sqrt(2.0))
    with np.errstate(over="ignore"):
        return (np.exp(beta), np.exp(beta - 1.96 * se),
                np.exp(beta + 1.96 * se), p)


def _se_from_information(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(covariance diagonal, SEs) from an observed-information matrix.

    A non-positive diagonal (information not PD at a flat or boundary
    solution) produces NaN SEs rather than a crash; reports render them
    as undefined.
    """
    cov = np.linalg.inv(H)
    diag = np.diag(cov).copy()
    with np.errstate(invalid="ignore"):
        se = np.sqrt(diag)
    return cov, se


def _fd_hessian(grad_fn, theta: np.ndarray) -> np.ndarray:
    """Central-difference Hessian from an analytic gradient."""
    dim = len(theta)
    H = np.empty((dim, dim))
    for i in range(dim):
        h = 1e-5 * max(1.0, abs(theta[i]))
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        H[:, i] = (grad_fn(up) - grad_fn(down)) / (2.0 * h)
    return 0.5 * (H + H.T)


def _newton_polish(objective, theta: np.ndarray, lower: np.ndarray,
                   upper: np.ndarray) -> np.ndarray:
    """Push the gradient toward zero after the quasi-Newton stop.

    L-BFGS-B can halt on function decrease with the gradient still around
    1e-4; a few damped Newton steps on the free (non-bound) coordinates
    restore a near-stationary solution. Bound-pinned coordinates with an
    outward-pointing gradient are left alone.
    """
    for _ in range(10):
        fval, grad = objective(theta)
        at_low = (theta - lower < 1e-9) & (grad > 0)
        at_high = (upper - theta < 1e-9) & (grad < 0)
        free = ~(at_low | at_high)
        if not np.any(free) or np.max(np.abs(grad[free])) < 1e-7:
            break
        idx = np.flatnonzero(free)

        def free_grad(th_free: np.ndarray) -> np.ndarray:
            th = theta.copy()
            th[idx] = th_free
            return objective(th)[1][idx]

        H = _fd_hessian(free_grad, theta[idx])
        try:
            step = np.linalg.solve(H, grad[idx])
        except np.linalg.LinAlgError:
            break
        improved = False
        for _ in range(8):
            cand = theta.copy()
            cand[idx] = np.clip(theta[idx] - step, lower[idx], upper[idx])
            fc = objective(cand)[0]
            if fc <= fval + 1e-10:
                theta = cand
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return theta


def fit(
    spec: ModelSpec,
    rows: pd.DataFrame,
    quadrature_nodes: int = 15,
    tol: float = 1e-8,
    max_iter: int = 200,
    pin_sigma_zero: bool = False,
) -> FittedModel:
    """Maximize the marginal likelihood of a random-intercept logistic model.

    With ``pin_sigma_zero`` the random intercept is held at 0 and the model
    degenerates to ordinary logistic regression fit by the same quasi-Newton
    path; this is the only mode in which fewer than two groups is legal.
    Failure to converge is reported on the result, never raised; genuinely
    ill-posed inputs (rank deficiency, separation, too few groups) raise.
    """
    if quadrature_nodes < 1:
        raise ValueError("quadrature_nodes must be >= 1")

    data = rows
    record: dict[str, dict[str, float]] = {}
    if spec.standardize:
        data, record = standardize(rows, spec.standardize)

    y = data[spec.outcome].to_numpy(dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError(f"outcome {spec.outcome!r} must be binary 0/1")

    terms = ("(intercept)",) + tuple(spec.fixed_terms)
    X = np.column_stack(
        [np.ones(len(data))]
        + [data[t].to_numpy(dtype=float) for t in spec.fixed_terms]
    )
    n_obs, n_fixed = X.shape
    if np.linalg.matrix_rank(X) < n_fixed:
        raise RankDeficientDesign(
            f"design matrix with terms {terms} is rank deficient"
        )

    group_codes, group_levels = pd.factorize(data[spec.random_intercept_group])
    n_groups = len(group_levels)
    if not pin_sigma_zero and n_groups < 2:
        raise TooFewGroups(
            f"{n_groups} group(s) in {spec.random_intercept_group!r}; "
            "estimating sigma needs >= 2 (or pin_sigma_zero)"
        )

    if pin_sigma_zero:
        beta0 = np.zeros(n_fixed)
        bounds_lo = np.full(n_fixed, -_BETA_BOUND)
        bounds_hi = np.full(n_fixed, _BETA_BOUND)
        res = minimize(
            lambda th: _plain_value_and_grad(X, y, th),
            beta0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(-_BETA_BOUND, _BETA_BOUND)] * n_fixed,
            options={"maxiter": max_iter, "ftol": min(tol, 1e-12), "gtol": 1e-7},
        )
        beta_hat = _newton_polish(
            lambda th: _plain_value_and_grad(X, y, th), res.x, bounds_lo, bounds_hi
        )
        if np.any(np.abs(beta_hat) > _SEPARATION_THRESHOLD):
            raise SeparationDetected(
                f"coefficient beyond +-{_SEPARATION_THRESHOLD} log-odds; "
                "outcomes are (quasi-)separated"
            )
        H = _fd_hessian(lambda th: _plain_value_and_grad(X, y, th)[1], beta_hat)
        _, se = _se_from_information(H)
        ors, lo, hi, p = _wald_blocks(beta_hat, se)
        return FittedModel(
            terms=terms, beta=beta_hat, se=se, sigma=0.0, sigma_se=None,
            loglik=-float(res.fun), n_obs=n_obs, n_groups=n_groups,
            converged=bool(res.success), iterations=int(res.nit),
            message=str(res.message), quadrature_nodes=quadrature_nodes,
            sigma_pinned=True, odds_ratios=ors, or_ci_low=lo, or_ci_high=hi,
            p_values=p, standardization=record,
        )

    ml = _MarginalLikelihood(X, y, group_codes, n_groups, quadrature_nodes)

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        return ml.value_and_grad(theta[:n_fixed], theta[n_fixed])

    theta0 = np.append(_rough_beta_start(X, y), math.log(0.5))
    res = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(-_BETA_BOUND, _BETA_BOUND)] * n_fixed + [_LOG_SIGMA_BOUNDS],
        options={"maxiter": max_iter, "ftol": min(tol, 1e-12), "gtol": 1e-7},
    )
    bounds_lo = np.append(np.full(n_fixed, -_BETA_BOUND), _LOG_SIGMA_BOUNDS[0])
    bounds_hi = np.append(np.full(n_fixed, _BETA_BOUND), _LOG_SIGMA_BOUNDS[1])
    theta_hat = _newton_polish(objective, res.x, bounds_lo, bounds_hi)
    beta_hat = theta_hat[:n_fixed]
    log_sigma_hat = theta_hat[n_fixed]
    sigma_hat = math.exp(log_sigma_hat)
    if np.any(np.abs(beta_hat) > _SEPARATION_THRESHOLD):
        raise SeparationDetected(
            f"coefficient beyond +-{_SEPARATION_THRESHOLD} log-odds; "
            "outcomes are (quasi-)separated"
        )

    at_sigma_floor = sigma_hat < _SIGMA_EFFECTIVELY_ZERO
    if at_sigma_floor:
        # The log-sigma direction is flat at the boundary; invert only the
        # beta block so Wald SEs stay meaningful.
        def beta_grad(b: np.ndarray) -> np.ndarray:
            return objective(np.append(b, log_sigma_hat))[1][:n_fixed]

        H = _fd_hessian(beta_grad, beta_hat)
        _, se = _se_from_information(H)
        sigma_se = None
    else:
        H = _fd_hessian(lambda th: objective(th)[1], theta_hat)
        _, se_all = _se_from_information(H)
        se = se_all[:n_fixed]
        # Delta method from log sigma back to sigma.
        ls_se = se_all[n_fixed]
        sigma_se = float(ls_se * sigma_hat) if math.isfinite(ls_se) else None

    ors, lo, hi, p = _wald_blocks(beta_hat, se)
    return FittedModel(
        terms=terms, beta=beta_hat, se=se, sigma=sigma_hat, sigma_se=sigma_se,
        loglik=-float(res.fun), n_obs=n_obs, n_groups=n_groups,
        converged=bool(res.success), iterations=int(res.nit),
        message=str(res.message), quadrature_nodes=quadrature_nodes,
        sigma_pinned=False, odds_ratios=ors, or_ci_low=lo, or_ci_high=hi,
        p_values=p, standardization=record,
    )


def lrt(small: FittedModel, big: FittedModel) -> LrtResult:
    """Likelihood-ratio test: chi2 = 2 * (loglik_big - loglik_small).

    The smaller model's terms must be a strict subset of the bigger one's,
    both fit on the same rows and both converged. The statistic is clamped
    at 0 against numerical jitter of equal fits.
    """
    if not small.converged or not big.converged:
        raise UnconvergedModel("both models must have converged for an LRT")
    if small.n_obs != big.n_obs:
        raise NotNested(
            f"models fit on different rows ({small.n_obs} vs {big.n_obs})"
        )
    if not set(small.terms) <= set(big.terms):
        raise NotNested(f"{small.terms} is not a subset of {big.terms}")
    df = big.n_params - small.n_params
    if df < 1:
        raise NotNested("bigger model adds no parameters")
    chi2 = max(0.0, 2.0 * (big.loglik - small.loglik))
    return LrtResult(chi2=chi2, df=df, p=chi2_sf(chi2, df))


def vif(rows: pd.DataFrame, terms: list[str]) -> dict[str, float]:
    """Variance inflation factors: 1 / (1 - R^2) of each term on the rest.

    Each term is regressed by OLS on the remaining terms plus an intercept.
    Exact linear dependence raises PerfectCollinearity.
    """
    if len(terms) < 2:
        raise ValueError("vif needs at least two terms")
    cols = {t: rows[t].to_numpy(dtype=float) for t in terms}
    out: dict[str, float] = {}
    for term in terms:
        target = cols[term]
        others = np.column_stack(
            [np.ones(len(target))] + [cols[t] for t in terms if t != term]
        )
        coef, _, _, _ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ coef
        ss_tot = float(np.sum((target - target.mean()) ** 2))
        if ss_tot == 0.0:
            raise PerfectCollinearity(f"term {term!r} is constant")
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot
        if r2 > 1.0 - 1e-10:
            raise PerfectCollinearity(
                f"term {term!r} is an exact combination of the others"
            )
        out[term] = 1.0 / (1.0 - r2)
    return out


def r2_nakagawa(model: FittedModel, rows: pd.DataFrame) -> dict[str, float]:
    """Marginal and conditional variance explained on the latent scale.

    r2_marginal = V_f / (V_f + sigma^2 + pi^2/3) with V_f the variance of
    the fixed-effect linear predictor; r2_conditional adds sigma^2 to the
    numerator. ``beyond_fixed`` is their difference, the share attributable
    to the random intercepts.
    """
    if not model.converged:
        raise UnconvergedModel("r2 requires a converged model")
    data = rows
    if model.standardization:
        data = rows.copy()
        for col, tr in model.standardization.items():
            data[col] = (data[col].to_numpy(dtype=float) - tr["mean"]) / tr["sd"]
    X = np.column_stack(
        [np.ones(len(data))]
        + [data[t].to_numpy(dtype=float) for t in model.terms[1:]]
    )
    linpred = X @ model.beta
    v_fixed = float(np.var(linpred, ddof=1)) if len(linpred) > 1 else 0.0
    s2 = model.sigma ** 2
    denom = v_fixed + s2 + _LOGISTIC_RESIDUAL_VAR
    r2_marginal = v_fixed / denom
    r2_conditional = (v_fixed + s2) / denom
    return {
        "r2_marginal": r2_marginal,
        "r2_conditional": r2_conditional,
        "beyond_fixed": r2_conditional - r2_marginal,
    }
