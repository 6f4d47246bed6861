"""Log posteriors and analytic gradients for the four model families.

HANE (homophily-adjusted network effects) and HAND (homophily-adjusted
network disturbances) marginalize the latent positions through a fitted
matrix-normal approximation; the classical NAM effects and disturbances
families are their reductions with no latent component. All densities
are exact multivariate normals (constants included), with prior terms
added up to the priors' own normalizing constants.

With M = (I - rho*A)^{-1} and q = gamma' Psi gamma:

* HANE: y ~ N(M (Lambda gamma + X beta), M (q*Omega + sigma2*I) M')
* HAND: y ~ N(Lambda gamma + X beta, q*Omega + sigma2*M M')

Covariance work goes through Cholesky factors; inverses are never
formed except for M itself, which is needed explicitly for the trace
terms.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import (
    BadShapeError,
    FactorizationFailureError,
    UnstableError,
    ValidationError,
)
from .network import check_stability

__all__ = [
    "HANE",
    "HAND",
    "NAM_EFFECTS",
    "NAM_DISTURBANCES",
    "FAMILIES",
    "Dataset",
    "ParamVector",
    "Priors",
    "ModelFamily",
    "log_posterior",
    "grad_log_posterior",
    "nam_loglik",
]

HANE = "HANE"
HAND = "HAND"
NAM_EFFECTS = "NAM_EFFECTS"
NAM_DISTURBANCES = "NAM_DISTURBANCES"
FAMILIES = (HANE, HAND, NAM_EFFECTS, NAM_DISTURBANCES)

_LOG_2PI = float(np.log(2.0 * np.pi))


class Dataset:
    """Outcome vector and design matrix (intercept in the first column).

    The design matrix is expected to have full column rank; operations
    that rely on it (the two-stage least squares initializer) raise if
    it does not.
    """

    def __init__(self, y, X, column_names=None):
        y = np.asarray(y, dtype=float).reshape(-1)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise BadShapeError(
                f"X has shape {X.shape} for outcome of length {y.shape[0]}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise BadShapeError("outcome and design entries must be finite")
        if column_names is None:
            column_names = ["intercept"] + [
                f"x{j}" for j in range(1, X.shape[1])
            ]
        column_names = [str(c) for c in column_names]
        if len(column_names) != X.shape[1]:
            raise BadShapeError(
                f"{len(column_names)} column names for {X.shape[1]} columns"
            )
        y = y.copy()
        X = X.copy()
        y.setflags(write=False)
        X.setflags(write=False)
        self.y = y
        self.X = X
        self.n = y.shape[0]
        self.p = X.shape[1]
        self.column_names = column_names


class ParamVector:
    """Model parameters (beta, gamma, rho, sigma2).

    ``gamma`` is empty for the NAM families. ``sigma2`` must be
    positive. ``rho`` is only required to be finite here; the stability
    requirement |rho|*lambda1(A) < 1 (which implies |rho| < 1 for the
    networks used by the models) is enforced where a likelihood is
    evaluated, so that the forward simulator can demonstrate divergence
    at the boundary.
    """

    def __init__(self, beta, gamma, rho, sigma2):
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float)) if np.size(gamma) else np.empty(0)
        rho = float(rho)
        sigma2 = float(sigma2)
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))):
            raise ValidationError("beta and gamma must be finite")
        if not np.isfinite(rho):
            raise ValidationError("rho must be finite")
        if not (np.isfinite(sigma2) and sigma2 > 0):
            raise ValidationError(f"sigma2 must be positive, got {sigma2}")
        beta.setflags(write=False)
        gamma.setflags(write=False)
        self.beta = beta
        self.gamma = gamma
        self.rho = rho
        self.sigma2 = sigma2

    def to_array(self):
        """Flat array ordered (beta, gamma, rho, sigma2)."""
        return np.concatenate([self.beta, self.gamma, [self.rho], [self.sigma2]])

    @classmethod
    def from_array(cls, arr, p, D):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (p + D + 2,):
            raise BadShapeError(
                f"expected array of length {p + D + 2}, got {arr.shape}"
            )
        return cls(arr[:p], arr[p:p + D], arr[p + D], arr[p + D + 1])


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the prior distributions.

    beta ~ N(0, sigma_beta^2 I), gamma ~ N(0, sigma_gamma^2 I),
    rho ~ truncated N(mu_rho, sigma_rho^2) on (-1, 1), and
    sigma2 ~ inverse gamma with shape a/2 and scale b/2. Defaults are
    the weakly regularizing choices used throughout the simulation
    study.
    """

    sigma_beta: float = 2.25
    sigma_gamma: float = 2.25
    mu_rho: float = 0.36
    sigma_rho: float = 0.7
    a: float = 2.0
    b: float = 2.0

    def __post_init__(self):
        for name in ("sigma_beta", "sigma_gamma", "sigma_rho", "a", "b"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if not np.isfinite(self.mu_rho):
            raise ValidationError("mu_rho must be finite")


class ModelFamily:
    """One of the four families, with the latent summary where required."""

    def __init__(self, kind, latent=None):
        if kind not in FAMILIES:
            raise ValidationError(f"unknown family {kind!r}")
        needs_latent = kind in (HANE, HAND)
        if needs_latent and latent is None:
            raise ValidationError(f"{kind} requires a fitted latent summary")
        if not needs_latent and latent is not None:
            raise ValidationError(f"{kind} must not carry a latent summary")
        self.kind = kind
        self.latent = latent

    @property
    def effects_form(self):
        return self.kind in (HANE, NAM_EFFECTS)

    @property
    def D(self):
        return 0 if self.latent is None else self.latent.D


@dataclass
class _Working:
    """Per-evaluation cache of the factored covariance pieces."""

    B: np.ndarray            # I - rho*A
    logdet_B: float
    Sigma_cho: tuple
    logdet_Sigma: float
    r: np.ndarray
    alpha: np.ndarray        # Sigma^{-1} r
    M: np.ndarray | None = None
    G: np.ndarray | None = None   # M M' (disturbances covariance kernel)
    extras: dict = field(default_factory=dict)


def _latent_pieces(family, n):
    if family.latent is None:
        return np.zeros((n, 0)), np.zeros((n, n)), np.zeros((0, 0))
    lat = family.latent
    if lat.n != n:
        raise BadShapeError(
            f"latent summary is for {lat.n} nodes, data has {n}"
        )
    return lat.Lambda, lat.Omega, lat.Psi


def _cho(mat, what):
    try:
        c = cho_factor(mat, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationFailureError(
            f"{what} is numerically non-positive-definite: {exc}"
        ) from None
    diag = np.diagonal(c[0])
    if not np.all(np.isfinite(diag)):
        raise FactorizationFailureError(f"{what} factorization is non-finite")
    return c, 2.0 * float(np.sum(np.log(diag)))


def _check_inputs(theta, family, data, net):
    if data.n != net.n:
        raise BadShapeError(f"data has {data.n} rows, network has {net.n} nodes")
    if theta.beta.shape[0] != data.p:
        raise BadShapeError(
            f"beta has length {theta.beta.shape[0]}, design has {data.p} columns"
        )
    D = family.D
    if theta.gamma.shape[0] != D:
        raise BadShapeError(
            f"gamma has length {theta.gamma.shape[0]}, family expects {D}"
        )
    if not check_stability(theta.rho, net):
        raise UnstableError(
            f"|rho|*lambda1(A) = {abs(theta.rho) * net.spectral_norm():.6f} >= 1"
        )


def _assemble(theta, family, data, net, need_M):
    n = net.n
    A = net.A
    Lambda, Omega, Psi = _latent_pieces(family, n)
    gamma = theta.gamma
    q = float(gamma @ Psi @ gamma) if gamma.size else 0.0
    B = np.eye(n) - theta.rho * A
    sign, logdet_B = np.linalg.slogdet(B)
    if sign <= 0 or not np.isfinite(logdet_B):
        raise FactorizationFailureError(
            "det(I - rho*A) is not positive; system is numerically unstable"
        )
    mean_free = (Lambda @ gamma if gamma.size else 0.0) + data.X @ theta.beta
    M = None
    G = None
    if family.effects_form:
        Sigma = q * Omega + theta.sigma2 * np.eye(n)
        r = B @ data.y - mean_free
        if need_M:
            M = np.linalg.solve(B, np.eye(n))
    else:
        M = np.linalg.solve(B, np.eye(n))
        G = M @ M.T
        Sigma = q * Omega + theta.sigma2 * G
        r = data.y - mean_free
    Sigma_cho, logdet_Sigma = _cho(Sigma, "model covariance")
    alpha = cho_solve(Sigma_cho, r)
    work = _Working(
        B=B,
        logdet_B=logdet_B,
        Sigma_cho=Sigma_cho,
        logdet_Sigma=logdet_Sigma,
        r=r,
        alpha=alpha,
        M=M,
        G=G,
    )
    return work, Lambda, Omega, Psi


def _prior_terms(theta, family, priors):
    lp = -0.5 * float(theta.beta @ theta.beta) / priors.sigma_beta**2
    if theta.gamma.size:
        lp -= 0.5 * float(theta.gamma @ theta.gamma) / priors.sigma_gamma**2
    lp -= 0.5 * (theta.rho - priors.mu_rho) ** 2 / priors.sigma_rho**2
    lp += (-priors.a / 2.0 - 1.0) * np.log(theta.sigma2)
    lp -= priors.b / (2.0 * theta.sigma2)
    return lp


def _evaluate(theta, family, data, net, priors, want_grad):
    _check_inputs(theta, family, data, net)
    n = net.n
    work, Lambda, Omega, Psi = _assemble(theta, family, data, net, want_grad)
    r, alpha = work.r, work.alpha
    value = -0.5 * n * _LOG_2PI - 0.5 * work.logdet_Sigma - 0.5 * float(r @ alpha)
    if family.effects_form:
        # -log det M = +log det (I - rho*A)
        value += work.logdet_B
    if priors is not None:
        value += _prior_terms(theta, family, priors)
    if not want_grad:
        return value, None

    X = data.X
    grad_beta = X.T @ alpha
    if priors is not None:
        grad_beta = grad_beta - theta.beta / priors.sigma_beta**2

    D = family.D
    if D:
        Sinv_Omega = cho_solve(work.Sigma_cho, Omega)
        tr_Sinv_Omega = float(np.trace(Sinv_Omega))
        quad_Omega = float(alpha @ (Omega @ alpha))
        psi_gamma = Psi @ theta.gamma
        grad_gamma = (
            Lambda.T @ alpha
            - psi_gamma * tr_Sinv_Omega
            + psi_gamma * quad_Omega
        )
        if priors is not None:
            grad_gamma = grad_gamma - theta.gamma / priors.sigma_gamma**2
    else:
        grad_gamma = np.empty(0)

    if family.effects_form:
        # tr(A M) without the full product
        grad_rho = -float(np.sum(net.A * work.M.T)) + float(
            (net.A @ data.y) @ alpha
        )
    else:
        M = work.M
        P = M @ (net.A @ M)
        kernel = P @ M.T
        kernel = kernel + kernel.T    # M (A M + M' A') M'
        Sinv_kernel = cho_solve(work.Sigma_cho, kernel)
        grad_rho = 0.5 * theta.sigma2 * (
            -float(np.trace(Sinv_kernel)) + float(alpha @ (kernel @ alpha))
        )
    if priors is not None:
        grad_rho -= (theta.rho - priors.mu_rho) / priors.sigma_rho**2

    if family.effects_form:
        tr_Sinv = float(np.trace(cho_solve(work.Sigma_cho, np.eye(n))))
        grad_sigma2 = -0.5 * tr_Sinv + 0.5 * float(alpha @ alpha)
    else:
        Sinv_G = cho_solve(work.Sigma_cho, work.G)
        grad_sigma2 = -0.5 * float(np.trace(Sinv_G)) + 0.5 * float(
            alpha @ (work.G @ alpha)
        )
    if priors is not None:
        grad_sigma2 += (
            -(priors.a / 2.0 + 1.0) / theta.sigma2
            + priors.b / (2.0 * theta.sigma2**2)
        )

    grad = np.concatenate([grad_beta, grad_gamma, [grad_rho], [grad_sigma2]])
    return value, grad


def log_posterior(theta, family, data, net, priors):
    """Log posterior of theta under the given family, up to prior constants.

    The likelihood part is the exact multivariate normal log density
    (normalizing constant included); the prior terms drop their own
    normalizers (including the truncated-normal constant for rho, which
    does not depend on rho). Repeated calls are therefore directly
    comparable within and across the four families.

    Parameters
    ----------
    theta : ParamVector
    family : ModelFamily
    data : Dataset
    net : RowNormalizedNetwork
    priors : Priors

    Returns
    -------
    float

    Raises
    ------
    UnstableError
        If |rho|*lambda1(A) >= 1.
    FactorizationFailureError
        If the model covariance is numerically non-positive-definite.
    """
    value, _ = _evaluate(theta, family, data, net, priors, want_grad=False)
    return value


def grad_log_posterior(theta, family, data, net, priors):
    """Analytic gradient of :func:`log_posterior`.

    Returns
    -------
    ndarray
        Flat gradient ordered (beta, gamma, rho, sigma2), with gamma
        components absent for the NAM families.
    """
    _, grad = _evaluate(theta, family, data, net, priors, want_grad=True)
    return grad


def nam_loglik(theta, data, net, kind):
    """Exact multivariate-normal log likelihood of a classical NAM.

    Parameters
    ----------
    theta : ParamVector
        Must have empty gamma.
    kind : str
        ``NAM_EFFECTS`` or ``NAM_DISTURBANCES``.
    """
    if kind not in (NAM_EFFECTS, NAM_DISTURBANCES):
        raise ValidationError(f"kind must be a NAM family, got {kind!r}")
    if theta.gamma.size:
        raise ValidationError("NAM likelihood takes a gamma-free parameter vector")
    value, _ = _evaluate(
        theta, ModelFamily(kind), data, net, priors=None, want_grad=False
    )
    return value


def grad_nam_loglik(theta, data, net, kind):
    """Analytic gradient of :func:`nam_loglik` over (beta, rho, sigma2)."""
    if kind not in (NAM_EFFECTS, NAM_DISTURBANCES):
        raise ValidationError(f"kind must be a NAM family, got {kind!r}")
    _, grad = _evaluate(
        theta, ModelFamily(kind), data, net, priors=None, want_grad=True
    )
    return grad
