"""Linear conditional-quantile estimation and inference.

Fitting minimises the pinball (check) loss sum via a Frisch-Newton
interior point method on the LP dual

    max y'a   s.t.  X'a = (1 - tau) X'1,   a in [0,1]^n,

with Mehrotra predictor-corrector steps (Portnoy & Koenker 1997).  The
start a = (1-tau)·1 is exactly feasible and both residuals are kept at
zero by construction, so only the complementarity gap is driven down.
scipy's HiGHS LP solver is the fallback when the interior point fails;
an intercept-only design is solved analytically (the lower empirical
quantile, the left endpoint of the minimiser interval).

Inference is bootstrap-based throughout (xy-pair resampling): coefficient
standard errors, the Wald-type restriction test on the unrestricted fit,
and the across-quantile slope-equality (location-shift) test that reuses
one resample per replicate for every quantile level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog
from scipy.stats import chi2, f as f_dist, norm

from .errors import (
    BootstrapError,
    CovarianceError,
    DegenerateInputError,
    DomainError,
    LengthError,
    SingularDesignError,
    SolverError,
)
from .features import QuantDesign

__all__ = [
    "QrFit",
    "BootReport",
    "JointBootReport",
    "RollResult",
    "pinball",
    "fit",
    "bootstrap",
    "joint_bootstrap",
    "pseudo_r1",
    "xi_w_test",
    "slope_equality_test",
    "roll",
    "n_windows",
]


def pinball(u, tau: float):
    """Check loss u·(tau - 1{u<0}); scalar in, scalar out, array in, array out."""
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie strictly inside (0, 1)")
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 0, tau * u, (tau - 1.0) * u)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QrFit:
    """One quantile fit: coefficients, attained objective and diagnostics."""

    tau: float
    beta: np.ndarray
    objective: float
    n_obs: int
    column_names: tuple[str, ...]
    solver: str = "frisch-newton"
    degenerate: bool = False


def _lower_quantile(y: np.ndarray, tau: float) -> float:
    """Left endpoint of the pinball minimiser set of a constant fit."""
    n = len(y)
    pos = n * tau
    j = int(round(pos)) if math.isclose(pos, round(pos), abs_tol=1e-9) else math.ceil(pos)
    j = min(max(j, 1), n)
    return float(np.partition(y, j - 1)[j - 1])


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _fn_interior_point(
    X: np.ndarray, y: np.ndarray, tau: float, tol: float = 1e-10, max_iter: int = 100
) -> np.ndarray | None:
    n, p = X.shape
    a = np.full(n, 1.0 - tau)
    b = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ b
    eps0 = max(1e-8, 1e-6 * float(np.abs(r).mean()))
    z = np.maximum(r, 0.0) + eps0
    w = np.maximum(-r, 0.0) + eps0
    scale = 1.0 + float(np.abs(y).sum())
    for _ in range(max_iter):
        s = 1.0 - a
        gap = z @ s + w @ a
        if gap < tol * scale:
            return b
        q = 1.0 / (z / s + w / a)
        rzw = z - w
        Xq = X * q[:, None]
        M = X.T @ Xq
        try:
            cf = cho_factor(M)
        except (np.linalg.LinAlgError, ValueError):
            return None
        db_aff = cho_solve(cf, Xq.T @ rzw)
        da_aff = q * (rzw - X @ db_aff)
        dz_aff = -z + (z / s) * da_aff
        dw_aff = -w - (w / a) * da_aff
        ap = min(_max_step(a, da_aff), _max_step(s, -da_aff))
        ad = min(_max_step(z, dz_aff), _max_step(w, dw_aff))
        g_aff = (z + ad * dz_aff) @ (s - ap * da_aff) + (w + ad * dw_aff) @ (a + ap * da_aff)
        mu = (max(g_aff, 0.0) / gap) ** 3 * gap / (2.0 * n)
        corr_z = -da_aff * dz_aff
        corr_w = da_aff * dw_aff
        rhs = rzw - (mu - corr_z) / s + (mu - corr_w) / a
        db = cho_solve(cf, Xq.T @ rhs)
        da = q * (rhs - X @ db)
        dz = (mu - corr_z) / s - z + (z / s) * da
        dw = (mu - corr_w) / a - w - (w / a) * da
        ap = min(1.0, 0.99995 * min(_max_step(a, da), _max_step(1.0 - a, -da)))
        ad = min(1.0, 0.99995 * min(_max_step(z, dz), _max_step(w, dw)))
        a = a + ap * da
        b = b + ad * db
        z = z + ad * dz
        w = w + ad * dw
    return None


def _linprog_fallback(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    n, p = X.shape
    c = np.concatenate([np.zeros(p), tau * np.ones(n), (1.0 - tau) * np.ones(n)])
    A = sparse.hstack([sparse.csc_matrix(X), sparse.eye(n), -sparse.eye(n)], format="csc")
    res = linprog(
        c,
        A_eq=A,
        b_eq=y,
        bounds=[(None, None)] * p + [(0, None)] * (2 * n),
        method="highs",
    )
    if not res.success:
        raise SolverError(f"quantile LP failed: {res.message}")
    return res.x[:p]


def _fit_xy(
    X: np.ndarray, y: np.ndarray, tau: float, check_rank: bool = False
) -> tuple[np.ndarray, str]:
    n, p = X.shape
    if check_rank and np.linalg.matrix_rank(X) < p:
        raise SingularDesignError("design matrix is rank deficient")
    if p == 1 and np.all(X[:, 0] == X[0, 0]) and X[0, 0] != 0:
        return np.array([_lower_quantile(y, tau) / X[0, 0]]), "analytic"
    beta = _fn_interior_point(X, y, tau)
    if beta is not None and np.all(np.isfinite(beta)):
        return beta, "frisch-newton"
    return _linprog_fallback(X, y, tau), "highs"


def fit(design: QuantDesign, tau: float) -> QrFit:
    """Pinball-minimising coefficients for one quantile level."""
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie strictly inside (0, 1)")
    X, y = design.X, design.y
    n, p = X.shape
    if n <= 2 * p:
        raise LengthError(f"need n > 2(k+1) = {2 * p}, got {n}")
    beta, solver = _fit_xy(X, y, tau, check_rank=True)
    resid = y - X @ beta
    objective = float(pinball(resid, tau).sum())
    on_plane = int(np.sum(np.abs(resid) <= 1e-9 * (1.0 + np.abs(y).mean())))
    return QrFit(
        tau=tau,
        beta=beta,
        objective=objective,
        n_obs=n,
        column_names=design.column_names,
        solver=solver,
        degenerate=on_plane > p,
    )


@dataclass(frozen=True)
class BootReport:
    """xy-pair bootstrap spread of one quantile fit."""

    se: np.ndarray
    p_values: np.ndarray
    B: int
    seed: int
    cov: np.ndarray
    n_failed: int


def _boot_indices(n: int, B: int, seed: int):
    for child in np.random.SeedSequence(seed).spawn(B):
        yield np.random.default_rng(child).integers(0, n, n)


def bootstrap(design: QuantDesign, tau: float, B: int, seed: int) -> BootReport:
    """Resample (x, y) rows with replacement and refit; normal-approx p-values.

    Replicates whose refit fails are skipped and counted; more than 10%
    failures aborts.  Deterministic for a given seed.
    """
    if B < 200:
        raise DomainError("bootstrap needs B >= 200")
    base = fit(design, tau)
    X, y = design.X, design.y
    n = len(y)
    betas = []
    failed = 0
    for idx in _boot_indices(n, B, seed):
        try:
            beta, _ = _fit_xy(X[idx], y[idx], tau)
        except (SolverError, np.linalg.LinAlgError):
            failed += 1
            continue
        betas.append(beta)
    if failed > 0.1 * B:
        raise BootstrapError(f"{failed}/{B} bootstrap refits failed")
    betas = np.array(betas)
    se = betas.std(axis=0, ddof=1)
    cov = np.cov(betas, rowvar=False, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        zstat = np.where(se > 0, np.abs(base.beta) / se, np.inf)
    p_values = 2.0 * norm.sf(zstat)
    return BootReport(se=se, p_values=p_values, B=B, seed=seed,
                      cov=np.atleast_2d(cov), n_failed=failed)


@dataclass(frozen=True)
class JointBootReport:
    """Bootstrap of several quantile levels on shared resamples.

    ``betas`` has shape (replicates, len(taus), k+1); ``cov`` is the
    covariance of the stacked coefficient vector.
    """

    taus: tuple[float, ...]
    betas: np.ndarray
    cov: np.ndarray
    B: int
    seed: int
    n_failed: int


def joint_bootstrap(design: QuantDesign, taus, B: int, seed: int) -> JointBootReport:
    if B < 200:
        raise DomainError("bootstrap needs B >= 200")
    taus = tuple(float(t) for t in taus)
    X, y = design.X, design.y
    n = len(y)
    reps = []
    failed = 0
    for idx in _boot_indices(n, B, seed):
        Xb, yb = X[idx], y[idx]
        try:
            stack = [_fit_xy(Xb, yb, t)[0] for t in taus]
        except (SolverError, np.linalg.LinAlgError):
            failed += 1
            continue
        reps.append(stack)
    if failed > 0.1 * B:
        raise BootstrapError(f"{failed}/{B} joint bootstrap replicates failed")
    betas = np.array(reps)
    flat = betas.reshape(len(reps), -1)
    cov = np.cov(flat, rowvar=False, ddof=1)
    return JointBootReport(taus=taus, betas=betas, cov=cov, B=B, seed=seed,
                           n_failed=failed)


def pseudo_r1(qr_fit: QrFit, y, tau: float) -> float:
    """1 - (restricted pinball sum) / (pinball sum around the raw quantile).

    The unconditional benchmark uses the same lower-quantile convention as
    an intercept-only fit, so the intercept-only model scores exactly 0.
    """
    y = np.asarray(y, dtype=float)
    q_hat = _lower_quantile(y, tau)
    tasw = float(pinball(y - q_hat, tau).sum())
    if tasw == 0.0:
        raise DegenerateInputError("response is constant: TASW is zero")
    return 1.0 - qr_fit.objective / tasw


def xi_w_test(qr_fit: QrFit, boot: BootReport, restriction) -> dict[str, float]:
    """Wald test that the named non-intercept coefficients are jointly zero."""
    names = tuple(restriction)
    if not names:
        raise DomainError("restriction must name at least one coefficient")
    if "const" in names:
        raise DomainError("restriction applies to non-intercept coefficients")
    idx = []
    for name in names:
        if name not in qr_fit.column_names:
            raise DomainError(f"unknown coefficient {name!r}")
        idx.append(qr_fit.column_names.index(name))
    beta_r = qr_fit.beta[idx]
    cov_r = boot.cov[np.ix_(idx, idx)]
    try:
        sol = np.linalg.solve(cov_r, beta_r)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("restricted bootstrap covariance is singular") from exc
    if not np.all(np.isfinite(sol)):
        raise CovarianceError("restricted bootstrap covariance is singular")
    stat = float(beta_r @ sol)
    df = len(idx)
    return {"stat": stat, "df": df, "p_value": float(chi2.sf(stat, df))}


def slope_equality_test(fits, jboot: JointBootReport) -> dict:
    """Location-shift test: are non-intercept slopes equal across quantiles?

    Wald statistic on consecutive-quantile slope differences with the joint
    bootstrap covariance, referred to F(rank, n - q(k+1)); also reports a
    per-coefficient test on each slope's own equality restriction.
    """
    fits = list(fits)
    q = len(fits)
    if q < 2:
        raise DomainError("slope equality needs at least two quantile fits")
    names = fits[0].column_names
    if any(f.column_names != names for f in fits):
        raise DomainError("fits must share the same design columns")
    if tuple(f.tau for f in fits) != jboot.taus:
        raise DomainError("fits and joint bootstrap disagree on quantile levels")
    p = len(names)
    slope_idx = [i for i, c in enumerate(names) if c != "const"]
    k = len(slope_idx)
    if k == 0:
        raise DomainError("no non-intercept coefficients to compare")
    theta = np.concatenate([f.beta for f in fits])

    # rows: beta_j(tau_l) - beta_j(tau_{l+1}) for every slope j and level pair
    rows = []
    for j in slope_idx:
        for l in range(q - 1):
            row = np.zeros(q * p)
            row[l * p + j] = 1.0
            row[(l + 1) * p + j] = -1.0
            rows.append(row)
    R = np.array(rows)
    n = fits[0].n_obs
    df2 = n - q * p
    if df2 <= 0:
        raise DomainError("not enough observations for the F reference")

    def wald_f(R_sub: np.ndarray) -> tuple[float, float]:
        v = R_sub @ jboot.cov @ R_sub.T
        delta = R_sub @ theta
        try:
            sol = np.linalg.solve(v, delta)
        except np.linalg.LinAlgError as exc:
            raise CovarianceError("joint bootstrap covariance is singular") from exc
        if not np.all(np.isfinite(sol)):
            raise CovarianceError("joint bootstrap covariance is singular")
        waldstat = float(delta @ sol)
        rank = np.linalg.matrix_rank(R_sub)
        fstat = waldstat / rank
        return fstat, float(f_dist.sf(fstat, rank, df2))

    stat, p_value = wald_f(R)
    per_coef = {}
    for pos, j in enumerate(slope_idx):
        block = R[pos * (q - 1) : (pos + 1) * (q - 1)]
        _, pv = wald_f(block)
        per_coef[names[j]] = pv
    return {"stat": stat, "p_value": p_value, "per_coefficient": per_coef,
            "df": (int(np.linalg.matrix_rank(R)), int(df2))}


def n_windows(n_obs: int, window: int, step: int) -> int:
    """floor((n - window)/step) + 1 rolling windows."""
    if window > n_obs:
        raise DomainError("window exceeds the sample")
    if step < 1:
        raise DomainError("step must be >= 1")
    return (n_obs - window) // step + 1


@dataclass(frozen=True)
class RollResult:
    """Rolling coefficients: cube indexed (window_end, tau, coefficient)."""

    taus: tuple[float, ...]
    window: int
    step: int
    end_dates: np.ndarray
    coef_cube: np.ndarray
    column_names: tuple[str, ...]
    failures: list

    @property
    def count(self) -> int:
        return self.coef_cube.shape[0]


def roll(design: QuantDesign, taus, window: int, step: int) -> RollResult:
    """Fit every quantile level on each rolling window of the design.

    Failed window/tau fits are recorded with their window end date and do
    not abort the run; their coefficients are NaN in the cube.
    """
    taus = tuple(float(t) for t in taus)
    total = n_windows(design.n_obs, window, step)
    p = design.X.shape[1]
    cube = np.full((total, len(taus), p), np.nan)
    end_dates = []
    failures = []
    for w_i in range(total):
        start = w_i * step
        stop = start + window
        end_dates.append(design.dates[stop - 1])
        Xw, yw = design.X[start:stop], design.y[start:stop]
        for t_i, tau in enumerate(taus):
            try:
                beta, _ = _fit_xy(Xw, yw, tau)
                cube[w_i, t_i] = beta
            except (SolverError, np.linalg.LinAlgError) as exc:
                failures.append((design.dates[stop - 1], tau, str(exc)))
    return RollResult(
        taus=taus,
        window=window,
        step=step,
        end_dates=np.array(end_dates),
        coef_cube=cube,
        column_names=design.column_names,
        failures=failures,
    )
