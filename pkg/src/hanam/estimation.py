"""MAP fitting, two-stage least squares initialization, and intervals.

Every fit maximizes its objective over the internal coordinates
(beta, gamma, rho, log sigma2) with a box-constrained limited-memory
quasi-Newton method (scipy's L-BFGS-B). For the Bayesian fits the
internal objective is the log posterior density of the *transformed*
parameters, i.e. it includes the +log sigma2 change-of-variables term;
this makes the MAP under flat priors coincide exactly with the maximum
likelihood point. The observed (negative) Hessian at the optimum, from
central finite differences of the analytic gradient, drives the normal
approximation behind the credible intervals.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import norm

from ._threads import single_threaded_blas
from .exceptions import (
    AllStartsFailedError,
    IndefiniteHessianError,
    RankDeficientInstrumentsError,
    SingularSecondStageError,
    ValidationError,
)
from .models import (
    HANE,
    HAND,
    NAM_DISTURBANCES,
    NAM_EFFECTS,
    ModelFamily,
    ParamVector,
    _evaluate,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "init_2sls",
    "map_fit",
    "nam_mle",
    "credible_intervals",
]


@dataclass(frozen=True)
class FitConfig:
    """Optimizer and interval settings.

    ``rho_bounds`` is intersected with the stability region
    ``|rho| < 0.999 / lambda1(A)`` at fit time (row normalization does
    not cap the spectral norm at 1, so |rho| < 1 alone would not keep
    the likelihood defined). ``sigma2_bounds`` bound the internal
    log-sigma2 coordinate away from overflow. ``multistart`` extra
    starts jitter the initializer by N(0, 0.1^2) per coordinate.
    Setting both ``rho_bounds`` endpoints equal pins rho.
    """

    rho_bounds: tuple = (-0.999, 0.999)
    max_iters: int = 500
    grad_tol: float = 1e-6
    history_size: int = 10
    hessian_step: float = 1e-5
    multistart: int = 2
    seed: int = 0
    level: float = 0.95
    sigma2_bounds: tuple = (1e-10, 1e10)
    track_objective: bool = False

    def __post_init__(self):
        lo, hi = self.rho_bounds
        if not (-1.0 < lo <= hi < 1.0):
            raise ValidationError(
                f"rho_bounds must lie strictly inside (-1, 1), got {self.rho_bounds}"
            )
        if self.grad_tol <= 0 or self.hessian_step <= 0:
            raise ValidationError("tolerances must be positive")
        if self.max_iters < 1 or self.history_size < 1 or self.multistart < 0:
            raise ValidationError("iteration settings must be positive")
        if not (0.0 < self.level < 1.0):
            raise ValidationError(f"level must be in (0, 1), got {self.level}")
        if not (0.0 < self.sigma2_bounds[0] < self.sigma2_bounds[1]):
            raise ValidationError("sigma2_bounds must be positive and ordered")


@dataclass
class FitResult:
    """Outcome of one MAP or MLE fit.

    ``hessian`` is the observed negative Hessian of the objective at the
    optimum over the internal coordinates (beta, gamma, rho, log
    sigma2). ``intervals`` maps parameter names to (lower, upper) at
    ``level``; it is None when the Hessian was not positive definite.
    """

    theta_map: ParamVector
    log_post: float
    hessian: np.ndarray
    intervals: dict | None
    converged: bool
    n_iters: int
    init_used: ParamVector
    family: ModelFamily
    level: float
    param_names: list
    grad_norm: float
    n_failed_starts: int = 0
    objective_trace: list | None = None


def _param_names(data, D):
    names = list(data.column_names)
    names += [f"gamma{j + 1}" for j in range(D)]
    names += ["rho", "sigma2"]
    return names


def init_2sls(data, net, latent=None, rho_bounds=(-0.999, 0.999)):
    """Two-stage least squares starting values.

    Regresses y on [X, Lambda, Ay] treating the network lag Ay as
    endogenous, instrumented by [X, Lambda, AX, A Lambda, A^2 X]; the
    intercept column of X is excluded from the lagged instruments
    because A maps constants to constants on non-isolated rows. sigma2
    starts at the structural residual variance. For the families without
    a latent component pass ``latent=None``. The same construction is
    used for the disturbances families, where it serves only as a
    starting point.

    Returns
    -------
    ParamVector

    Raises
    ------
    RankDeficientInstrumentsError
        If the instrument matrix is rank deficient.
    SingularSecondStageError
        If the second-stage regressor matrix is singular.
    """
    y, X, A = data.y, data.X, net.A
    Lambda = latent.Lambda if latent is not None else np.zeros((data.n, 0))
    D = Lambda.shape[1]
    Ay = A @ y
    X_nonconst = X[:, 1:]
    lag_basis = np.hstack([X_nonconst, Lambda]) if D else X_nonconst
    Z_parts = [X, Lambda, A @ lag_basis, A @ (A @ X_nonconst)]
    Z = np.hstack([z for z in Z_parts if z.shape[1] > 0])
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise RankDeficientInstrumentsError(
            f"instrument matrix has rank {np.linalg.matrix_rank(Z)} "
            f"< {Z.shape[1]} columns"
        )
    # first stage: project the endogenous lag onto the instruments
    coef, _, _, _ = np.linalg.lstsq(Z, Ay, rcond=None)
    Ay_hat = Z @ coef
    G = np.hstack([X, Lambda, Ay_hat[:, None]])
    GtG = G.T @ G
    try:
        ch = cho_factor(GtG)
        sol = cho_solve(ch, G.T @ y)
    except np.linalg.LinAlgError:
        raise SingularSecondStageError(
            "second-stage regressor matrix is singular"
        ) from None
    beta = sol[: data.p]
    gamma = sol[data.p: data.p + D]
    rho = float(np.clip(sol[-1], rho_bounds[0], rho_bounds[1]))
    resid = y - X @ beta - (Lambda @ gamma if D else 0.0) - rho * Ay
    dof = max(data.n - data.p - D - 1, 1)
    sigma2 = max(float(resid @ resid) / dof, 1e-8)
    return ParamVector(beta, gamma, rho, sigma2)


def _effective_rho_bounds(cfg, net):
    cap = 0.999 / max(net.spectral_norm(), 1e-12)
    lo = max(cfg.rho_bounds[0], -cap)
    hi = min(cfg.rho_bounds[1], cap)
    if lo > hi:
        lo = hi = 0.0
    return lo, hi


def _to_internal(theta):
    return np.concatenate(
        [theta.beta, theta.gamma, [theta.rho], [np.log(theta.sigma2)]]
    )


def _from_internal(x, p, D):
    return ParamVector(x[:p], x[p:p + D], x[p + D], np.exp(x[p + D + 1]))


def _make_objective(family, data, net, priors, jacobian_term):
    p = data.p
    D = family.D

    def fun(x):
        theta = _from_internal(x, p, D)
        value, grad = _evaluate(theta, family, data, net, priors, want_grad=True)
        g = np.array(grad)
        g[-1] *= theta.sigma2          # chain rule for log sigma2
        if jacobian_term:
            value += x[-1]
            g[-1] += 1.0
        return -value, -g

    return fun


def _projected_grad_norm(g, x, bounds):
    # g is the ascent gradient of the maximized objective: at an active
    # bound the outward-pointing component is blocked and drops out.
    pg = np.array(g)
    for j, (lo, hi) in enumerate(bounds):
        if lo is not None and x[j] <= lo and pg[j] < 0:
            pg[j] = 0.0
        if hi is not None and x[j] >= hi and pg[j] > 0:
            pg[j] = 0.0
    return float(np.max(np.abs(pg)))


def _fd_hessian(fun, x, step):
    m = x.size
    H = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = step
        _, gp = fun(x + e)
        _, gm = fun(x - e)
        H[j] = (gp - gm) / (2.0 * step)
    return 0.5 * (H + H.T)


def _optimize(fun, starts, bounds, cfg):
    best = None
    trace = [] if cfg.track_objective else None
    n_failed = 0
    for x0 in starts:
        x0 = np.array(x0, dtype=float)
        for j, (lo, hi) in enumerate(bounds):
            if lo is not None:
                x0[j] = max(x0[j], lo)
            if hi is not None:
                x0[j] = min(x0[j], hi)
        local_trace = []
        callback = None
        if cfg.track_objective:
            callback = lambda xk: local_trace.append(-fun(xk)[0])  # noqa: E731
        res = minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=callback,
            options={
                "maxiter": cfg.max_iters,
                "maxcor": cfg.history_size,
                "gtol": cfg.grad_tol,
                # the projected gradient is the stopping contract; keep
                # the objective-change rule from firing first
                "ftol": 1e-16,
            },
        )
        if not np.isfinite(res.fun):
            n_failed += 1
            continue
        if best is None or res.fun < best.fun:
            best = res
            if cfg.track_objective:
                trace = local_trace
    if best is None:
        raise AllStartsFailedError(
            f"all {len(starts)} optimizer starts ended with a non-finite objective"
        )
    return best, n_failed, trace


def _newton_polish(fun, x, H, bounds, grad_tol, max_steps=8):
    # L-BFGS-B line searches stall once objective improvements drop
    # below the floating-point resolution of f; Newton steps off the
    # analytic gradient are not resolution-limited and finish the job.
    _, g = fun(x)
    pg = _projected_grad_norm(-g, x, bounds)
    try:
        ch = cho_factor(H)
    except np.linalg.LinAlgError:
        return x, pg
    for _ in range(max_steps):
        if pg < grad_tol:
            break
        step = cho_solve(ch, -g)
        scale = 1.0
        improved = False
        for _ in range(4):
            cand = x + scale * step
            for j, (lo, hi) in enumerate(bounds):
                if lo is not None:
                    cand[j] = max(cand[j], lo)
                if hi is not None:
                    cand[j] = min(cand[j], hi)
            try:
                _, g_cand = fun(cand)
            except Exception:
                scale *= 0.5
                continue
            pg_cand = _projected_grad_norm(-g_cand, cand, bounds)
            if np.isfinite(pg_cand) and pg_cand < pg:
                x, g, pg = cand, g_cand, pg_cand
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    return x, pg


def _fit(fun, init_theta, data, net, family, cfg, jacobian_term):
    p, D = data.p, family.D
    rho_lo, rho_hi = _effective_rho_bounds(cfg, net)
    ls_lo, ls_hi = np.log(cfg.sigma2_bounds)
    bounds = [(None, None)] * (p + D) + [(rho_lo, rho_hi), (ls_lo, ls_hi)]

    x0 = _to_internal(init_theta)
    rng = np.random.default_rng(cfg.seed)
    starts = [x0]
    for _ in range(cfg.multistart):
        starts.append(x0 + 0.1 * rng.standard_normal(x0.size))

    with single_threaded_blas():
        best, n_failed, trace = _optimize(fun, starts, bounds, cfg)
        x_hat = best.x
        # fun returns the negated gradient, so differencing it yields
        # the negative Hessian of the objective directly.
        H = _fd_hessian(fun, x_hat, cfg.hessian_step)
        f_val, g_val = fun(x_hat)
        pg = _projected_grad_norm(-g_val, x_hat, bounds)
        if pg >= cfg.grad_tol:
            x_hat, pg = _newton_polish(fun, x_hat, H, bounds, cfg.grad_tol)
            H = _fd_hessian(fun, x_hat, cfg.hessian_step)
            f_val, _ = fun(x_hat)
    converged = bool(pg < cfg.grad_tol)
    theta_hat = _from_internal(x_hat, p, D)
    names = _param_names(data, D)
    result = FitResult(
        theta_map=theta_hat,
        log_post=-f_val,
        hessian=H,
        intervals=None,
        converged=converged,
        n_iters=int(best.nit),
        init_used=init_theta,
        family=family,
        level=cfg.level,
        param_names=names,
        grad_norm=pg,
        n_failed_starts=n_failed,
        objective_trace=trace,
    )
    try:
        result.intervals = credible_intervals(result, cfg.level)
    except IndefiniteHessianError:
        result.intervals = None
    return result


def map_fit(data, net, family, priors, cfg=None):
    """Maximum a posteriori fit with a normal-approximation summary.

    Runs ``1 + multistart`` L-BFGS-B starts (the two-stage least squares
    initializer plus jittered copies) over (beta, gamma, rho, log
    sigma2) and keeps the best. ``converged`` reports whether the
    projected gradient max-norm fell below ``grad_tol``.

    Parameters
    ----------
    data : Dataset
    net : RowNormalizedNetwork
    family : ModelFamily
    priors : Priors
    cfg : FitConfig, optional

    Returns
    -------
    FitResult
    """
    cfg = cfg or FitConfig()
    init = init_2sls(
        data,
        net,
        latent=family.latent,
        rho_bounds=_effective_rho_bounds(cfg, net),
    )
    fun = _make_objective(family, data, net, priors, jacobian_term=True)
    return _fit(fun, init, data, net, family, cfg, jacobian_term=True)


def nam_mle(data, net, kind=NAM_EFFECTS, cfg=None):
    """Maximum likelihood fit of a classical NAM.

    Same optimizer scaffolding as :func:`map_fit` but maximizing the
    exact log likelihood with no priors and no reparameterization
    density term; the reported intervals are Wald intervals from the
    observed information.
    """
    if kind not in (NAM_EFFECTS, NAM_DISTURBANCES):
        raise ValidationError(f"kind must be a NAM family, got {kind!r}")
    cfg = cfg or FitConfig()
    family = ModelFamily(kind)
    init = init_2sls(
        data, net, latent=None, rho_bounds=_effective_rho_bounds(cfg, net)
    )
    fun = _make_objective(family, data, net, priors=None, jacobian_term=False)
    return _fit(fun, init, data, net, family, cfg, jacobian_term=False)


def credible_intervals(fit, level=0.95):
    """Normal-approximation intervals from the observed Hessian.

    On the internal scale each parameter gets ``theta_j +/- z *
    sqrt((H^{-1})_jj)``; the log-sigma2 interval is exponentiated
    endpointwise and the rho interval truncated to (-1, 1).

    Raises
    ------
    IndefiniteHessianError
        If the (symmetrized) Hessian is not positive definite; the
        exception carries the eigenvalues.
    """
    if not (0.0 < level < 1.0):
        raise ValidationError(f"level must be in (0, 1), got {level}")
    H = 0.5 * (fit.hessian + fit.hessian.T)
    try:
        ch = cho_factor(H)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(H)
        raise IndefiniteHessianError(
            f"Hessian not positive definite; eigenvalues in "
            f"[{eigs[0]:.3e}, {eigs[-1]:.3e}]",
            eigenvalues=eigs,
        ) from None
    cov = cho_solve(ch, np.eye(H.shape[0]))
    sd = np.sqrt(np.maximum(np.diagonal(cov), 0.0))
    z = norm.ppf(0.5 * (1.0 + level))
    x_hat = _to_internal(fit.theta_map)
    intervals = {}
    for j, name in enumerate(fit.param_names):
        lo = x_hat[j] - z * sd[j]
        hi = x_hat[j] + z * sd[j]
        if name == "sigma2":
            lo, hi = np.exp(lo), np.exp(hi)
        elif name == "rho":
            lo, hi = max(lo, -1.0), min(hi, 1.0)
        intervals[name] = (float(lo), float(hi))
    return intervals
