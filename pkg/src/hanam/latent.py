"""Posterior draws of latent homophily positions and their matrix-normal summary.

The influence models need a matrix-normal approximation to the posterior
of the n x D latent position matrix. Draws can come from the built-in
latent-distance sampler (:func:`sample_latent_posterior`), from a draws
file written by any other latent space model software
(:func:`read_draws`), or be constructed directly. Draws are aligned with
:func:`procrustes_align` before :func:`fit_matrix_normal` collapses them
to the location matrix and the row/column covariance pair.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._threads import single_threaded_blas
from .exceptions import (
    BadShapeError,
    ChainDivergedError,
    DegenerateDrawsError,
    NotPositiveDefiniteError,
    RankDeficientError,
    ValidationError,
)

__all__ = [
    "LatentDraws",
    "LatentSamplerConfig",
    "MatrixNormalApprox",
    "sample_latent_posterior",
    "procrustes_align",
    "fit_matrix_normal",
    "matrix_normal_loglik",
    "dyadic_covariates",
    "read_draws",
    "write_draws",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


class LatentDraws:
    """A stack of K posterior draws of the n x D latent position matrix.

    Parameters
    ----------
    draws : (K, n, D) array_like
        Posterior draws; K >= 2, all entries finite.
    aligned : bool
        Whether the draws share a common orientation (set by
        :func:`procrustes_align`).
    diagnostics : dict, optional
        Sampler diagnostics such as acceptance rates.
    """

    def __init__(self, draws, aligned=False, diagnostics=None):
        draws = np.asarray(draws, dtype=float)
        if draws.ndim != 3:
            raise BadShapeError(
                f"draws must have shape (K, n, D), got {draws.shape}"
            )
        K, n, D = draws.shape
        if K < 2:
            raise BadShapeError(f"need at least 2 draws, got {K}")
        if D < 1 or n < 1:
            raise BadShapeError(f"invalid draw shape {draws.shape}")
        if not np.all(np.isfinite(draws)):
            raise BadShapeError("draws contain non-finite entries")
        draws = draws.copy()
        draws.setflags(write=False)
        self.draws = draws
        self.K = K
        self.n = n
        self.D = D
        self.aligned = bool(aligned)
        self.diagnostics = dict(diagnostics or {})


@dataclass(frozen=True)
class LatentSamplerConfig:
    """Settings for the random-walk Metropolis latent-distance sampler.

    ``intercept`` fixes the edge intercept instead of sampling it, which
    is mainly useful for prior-recovery checks.
    """

    D: int = 2
    burn_in: int = 500
    thin: int = 5
    n_draws: int = 200
    step_size: float = 0.3
    prior_scale_positions: float = 2.0
    prior_scale_coeffs: float = 5.0
    seed: int = 0
    intercept: float | None = None

    def __post_init__(self):
        if self.n_draws < 2:
            raise ValidationError(f"n_draws must be >= 2, got {self.n_draws}")
        if self.step_size <= 0:
            raise ValidationError("step_size must be positive")
        if self.D < 1:
            raise ValidationError("latent dimension D must be >= 1")
        if self.burn_in < 0 or self.thin < 1:
            raise ValidationError("burn_in must be >= 0 and thin >= 1")
        if self.prior_scale_positions <= 0 or self.prior_scale_coeffs <= 0:
            raise ValidationError("prior scales must be positive")


class MatrixNormalApprox:
    """Fitted matrix-normal approximation MN(Lambda, Omega, Psi).

    ``Omega`` (n x n row covariance) and ``Psi`` (D x D column
    covariance) are symmetric positive definite with ``Omega[0, 0] == 1``
    fixing the scale split between the two.
    """

    def __init__(self, Lambda, Omega, Psi, fit_loglik, iterations,
                 loglik_trace=None):
        Lambda = np.asarray(Lambda, dtype=float)
        Omega = np.asarray(Omega, dtype=float)
        Psi = np.asarray(Psi, dtype=float)
        n, D = Lambda.shape
        if Omega.shape != (n, n) or Psi.shape != (D, D):
            raise BadShapeError(
                f"inconsistent shapes: Lambda {Lambda.shape}, "
                f"Omega {Omega.shape}, Psi {Psi.shape}"
            )
        if not np.allclose(Omega, Omega.T) or not np.allclose(Psi, Psi.T):
            raise BadShapeError("Omega and Psi must be symmetric")
        if Omega[0, 0] != 1.0:
            raise BadShapeError(
                f"Omega[0, 0] must be exactly 1, got {Omega[0, 0]!r}"
            )
        for name, mat in (("Omega", Omega), ("Psi", Psi)):
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError(
                    f"{name} is not positive definite"
                ) from None
        if not np.isfinite(fit_loglik):
            raise ValidationError("fit_loglik must be finite")
        for arr in (Lambda, Omega, Psi):
            arr.setflags(write=False)
        self.Lambda = Lambda
        self.Omega = Omega
        self.Psi = Psi
        self.n = n
        self.D = D
        self.fit_loglik = float(fit_loglik)
        self.iterations = int(iterations)
        self.loglik_trace = (
            None if loglik_trace is None else np.asarray(loglik_trace, dtype=float)
        )


def dyadic_covariates(X, categorical=()):
    """Build the (n, n, q) dyad covariate array from node covariates.

    Continuous columns contribute ``|x_i - x_j|``; columns listed in
    ``categorical`` contribute the shared-attribute indicator
    ``1{x_i == x_j}``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, q = X.shape
    categorical = set(categorical)
    W = np.empty((n, n, q))
    for c in range(q):
        col = X[:, c]
        if c in categorical:
            W[:, :, c] = (col[:, None] == col[None, :]).astype(float)
        else:
            W[:, :, c] = np.abs(col[:, None] - col[None, :])
    return W


def _pairwise_distances(U):
    diff = U[:, None, :] - U[None, :, :]
    return np.sqrt(np.maximum(np.einsum("ijk,ijk->ij", diff, diff), 0.0))


def _edge_loglik_terms(eta, edges, offdiag):
    # Bernoulli log likelihood over ordered dyads; logaddexp avoids
    # overflow for large |eta|.
    ll = edges * eta - np.logaddexp(0.0, eta)
    return float(ll[offdiag].sum())


def sample_latent_posterior(net, X, cfg):
    """Random-walk Metropolis draws from a latent-distance network model.

    The edge model is ``logit P(A_ij = 1) = theta0 - ||u_i - u_j|| +
    theta_w' w_ij`` over ordered dyads, with dyadic covariates ``w_ij``
    built by :func:`dyadic_covariates` from the node covariates ``X``.
    Positions have independent N(0, prior_scale_positions^2) priors and
    coefficients N(0, prior_scale_coeffs^2) priors. One sweep updates
    every position row and then the coefficients; draws are recorded
    every ``thin`` sweeps after ``burn_in`` sweeps.

    Parameters
    ----------
    net : RowNormalizedNetwork
        The network; its raw adjacency is binarized for the edge model.
    X : (n, q) array_like or None
        Node covariates for the dyadic terms; None for no covariates.
        Pass column indices via ``categorical`` in
        :func:`dyadic_covariates` by pre-building and supplying
        ``dyads`` instead.
    cfg : LatentSamplerConfig

    Returns
    -------
    LatentDraws
        ``aligned=False``; acceptance rates in ``diagnostics``.
    """
    return _sample_latent(net, X, cfg, categorical=())


def _sample_latent(net, X, cfg, categorical=(), dyads=None):
    n = net.n
    edges = net.raw.binary()
    if dyads is not None:
        W = np.asarray(dyads, dtype=float)
        if W.shape[:2] != (n, n):
            raise BadShapeError(f"dyad array has shape {W.shape}, expected ({n}, {n}, q)")
    elif X is None:
        W = np.empty((n, n, 0))
    else:
        X = np.asarray(X, dtype=float)
        Xmat = X[:, None] if X.ndim == 1 else X
        if Xmat.shape[0] != n:
            raise BadShapeError(
                f"covariate matrix has {Xmat.shape[0]} rows for {n} nodes"
            )
        W = dyadic_covariates(Xmat, categorical)
    q = W.shape[2]
    rng = np.random.default_rng(cfg.seed)
    offdiag = ~np.eye(n, dtype=bool)

    s_u = cfg.prior_scale_positions
    s_c = cfg.prior_scale_coeffs
    fixed_intercept = cfg.intercept is not None

    U = rng.standard_normal((n, cfg.D)) * s_u
    theta0 = cfg.intercept if fixed_intercept else rng.standard_normal() * 0.1
    theta_w = np.zeros(q)

    dist = _pairwise_distances(U)
    wterm = W @ theta_w if q else np.zeros((n, n))
    eta = theta0 - dist + wterm
    loglik = _edge_loglik_terms(eta, edges, offdiag)

    def total_logpost():
        lp = loglik - 0.5 * float(np.sum(U * U)) / s_u**2
        lp -= 0.5 * float(theta_w @ theta_w) / s_c**2
        if not fixed_intercept:
            lp -= 0.5 * theta0**2 / s_c**2
        return lp

    n_sweeps = cfg.burn_in + cfg.n_draws * cfg.thin
    draws = np.empty((cfg.n_draws, n, cfg.D))
    stored = 0
    node_prop = node_acc = 0
    coef_prop = coef_acc = 0

    for sweep in range(n_sweeps):
        for i in range(n):
            u_new = U[i] + cfg.step_size * rng.standard_normal(cfg.D)
            d_new = np.sqrt(np.maximum(((U - u_new) ** 2).sum(axis=1), 0.0))
            d_new[i] = 0.0
            d_old = dist[i].copy()
            eta_row_new = eta[i] + (d_old - d_new)
            eta_col_new = eta[:, i] + (d_old - d_new)
            mask = np.ones(n, dtype=bool)
            mask[i] = False
            ll_delta = float(
                np.sum(edges[i, mask] * (eta_row_new[mask] - eta[i, mask])
                       - np.logaddexp(0.0, eta_row_new[mask])
                       + np.logaddexp(0.0, eta[i, mask]))
                + np.sum(edges[mask, i] * (eta_col_new[mask] - eta[mask, i])
                         - np.logaddexp(0.0, eta_col_new[mask])
                         + np.logaddexp(0.0, eta[mask, i]))
            )
            prior_delta = 0.5 * float(U[i] @ U[i] - u_new @ u_new) / s_u**2
            node_prop += 1
            if np.log(rng.uniform()) < ll_delta + prior_delta:
                node_acc += 1
                U[i] = u_new
                dist[i] = d_new
                dist[:, i] = d_new
                eta[i] = eta_row_new
                eta[:, i] = eta_col_new
                loglik += ll_delta
        # coefficient updates share one full-likelihood recomputation each
        if not fixed_intercept:
            t_new = theta0 + cfg.step_size * rng.standard_normal()
            eta_new = eta + (t_new - theta0)
            ll_new = _edge_loglik_terms(eta_new, edges, offdiag)
            delta = ll_new - loglik + 0.5 * (theta0**2 - t_new**2) / s_c**2
            coef_prop += 1
            if np.log(rng.uniform()) < delta:
                coef_acc += 1
                theta0 = t_new
                eta = eta_new
                loglik = ll_new
        for c in range(q):
            t_new = theta_w.copy()
            t_new[c] += cfg.step_size * rng.standard_normal()
            eta_new = eta + (t_new[c] - theta_w[c]) * W[:, :, c]
            ll_new = _edge_loglik_terms(eta_new, edges, offdiag)
            delta = ll_new - loglik + 0.5 * (
                theta_w[c] ** 2 - t_new[c] ** 2
            ) / s_c**2
            coef_prop += 1
            if np.log(rng.uniform()) < delta:
                coef_acc += 1
                theta_w = t_new
                eta = eta_new
                loglik = ll_new
        if not np.isfinite(total_logpost()):
            raise ChainDivergedError(
                f"log posterior non-finite at sweep {sweep}"
            )
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0:
            if stored < cfg.n_draws:
                draws[stored] = U
                stored += 1

    diagnostics = {
        "accept_rate_positions": node_acc / max(node_prop, 1),
        "accept_rate_coefficients": coef_acc / max(coef_prop, 1),
        "intercept": float(theta0),
        "coefficients": theta_w.copy(),
    }
    return LatentDraws(draws[:stored], aligned=False, diagnostics=diagnostics)


def _procrustes_to(U, ref):
    # Optimal orthogonal rotation (reflections allowed) plus translation
    # of U onto ref.
    u_mean = U.mean(axis=0)
    r_mean = ref.mean(axis=0)
    Uc = U - u_mean
    C = Uc.T @ (ref - r_mean)
    P, _, Qt = np.linalg.svd(C)
    R = P @ Qt
    return Uc @ R + r_mean


def procrustes_align(draws, max_iters=100, tol=1e-10):
    """Align draws to a common orientation by generalized Procrustes.

    Every draw is replaced by its optimal orthogonal-rotation-plus-
    translation alignment to a running reference: the first draw, then
    iteratively the mean of the aligned draws until the reference
    stabilizes. Pairwise distances within each draw are unchanged up to
    roundoff.

    Parameters
    ----------
    draws : LatentDraws

    Returns
    -------
    LatentDraws
        With ``aligned=True``.

    Raises
    ------
    RankDeficientError
        If any draw has zero variance in every column.
    """
    stack = np.array(draws.draws)
    for k in range(draws.K):
        if np.all(stack[k] == stack[k].mean(axis=0)):
            raise RankDeficientError(
                f"draw {k} has zero variance in every column"
            )
    ref = stack[0]
    aligned = np.stack([_procrustes_to(U, ref) for U in stack])
    for _ in range(max_iters):
        ref_new = aligned.mean(axis=0)
        aligned = np.stack([_procrustes_to(U, ref_new) for U in aligned])
        shift = np.linalg.norm(ref_new - ref) / max(np.linalg.norm(ref_new), 1.0)
        ref = ref_new
        if shift < tol:
            break
    return LatentDraws(aligned, aligned=True, diagnostics=draws.diagnostics)


def matrix_normal_loglik(draws_array, Lambda, Omega, Psi):
    """Total matrix-normal log likelihood of a (K, n, D) stack of draws."""
    E = np.asarray(draws_array, dtype=float) - Lambda
    K, n, D = E.shape
    omega_cho = cho_factor(Omega, lower=True)
    psi_cho = cho_factor(Psi, lower=True)
    logdet_omega = 2.0 * float(np.sum(np.log(np.diagonal(omega_cho[0]))))
    logdet_psi = 2.0 * float(np.sum(np.log(np.diagonal(psi_cho[0]))))
    EM = E.transpose(1, 0, 2).reshape(n, K * D)
    OinvE = cho_solve(omega_cho, EM).reshape(n, K, D)
    T = np.einsum("nkd,nke->de", E.transpose(1, 0, 2), OinvE)
    quad = float(np.trace(cho_solve(psi_cho, T)))
    return (
        -0.5 * K * n * D * _LOG_2PI
        - 0.5 * K * D * logdet_omega
        - 0.5 * K * n * logdet_psi
        - 0.5 * quad
    )


def _repair_pd(mat, name, repaired_flags):
    eigs = np.linalg.eigvalsh(mat)
    if eigs[0] >= 1e-10:
        return mat
    if repaired_flags.get(name):
        raise NotPositiveDefiniteError(
            f"{name} lost positive definiteness again after ridge repair "
            f"(min eigenvalue {eigs[0]:.3e})"
        )
    repaired_flags[name] = True
    return mat + 1e-8 * np.eye(mat.shape[0])


def fit_matrix_normal(draws, tol=1e-8, max_iters=500, omega_update_s11="pre"):
    """Fit the constrained matrix-normal approximation to aligned draws.

    The location matrix is the draw mean. The row covariance Omega and
    column covariance Psi alternate between their closed-form updates
    until the relative changes of the matrix-normal log likelihood and
    of both covariance iterates fall below ``tol``, or ``max_iters`` is
    reached. The scale ambiguity
    (c*Omega, Psi/c) is resolved by constraining Omega[0, 0] = 1 through
    a three-step update: compute S = sum_k (U_k - Lambda) Psi^{-1}
    (U_k - Lambda)', divide S by its leading entry, then shrink the
    trailing block toward the leading column's outer product with weight
    1 - S11/(K*D).

    ``omega_update_s11`` selects which value of S11 drives step three:
    ``"pre"`` (default) uses the leading entry of S before the division,
    ``"post"`` the literal value after it (which is 1). Only the default
    keeps the log likelihood non-decreasing.

    Parameters
    ----------
    draws : LatentDraws
        Must have ``aligned=True``.

    Returns
    -------
    MatrixNormalApprox

    Raises
    ------
    DegenerateDrawsError
        If all draws are identical.
    NotPositiveDefiniteError
        If an iterate loses positive definiteness after one ridge repair.
    """
    if not draws.aligned:
        raise ValidationError("draws must be aligned before fitting")
    if omega_update_s11 not in ("pre", "post"):
        raise ValidationError(
            f"omega_update_s11 must be 'pre' or 'post', got {omega_update_s11!r}"
        )
    K, n, D = draws.K, draws.n, draws.D
    if K * D <= 1:
        raise ValidationError("need K*D > 1 draws-by-dimensions")
    Lambda = draws.draws.mean(axis=0)
    E = draws.draws - Lambda
    if np.max(np.abs(E)) == 0.0:
        raise DegenerateDrawsError("all draws identical; covariance undefined")
    with single_threaded_blas():
        return _flip_flop(draws, Lambda, E, tol, max_iters, omega_update_s11)


def _flip_flop(draws, Lambda, E, tol, max_iters, omega_update_s11):
    K, n, D = draws.K, draws.n, draws.D

    # Equivariant warm start: the sample column scatter at Omega = I.
    Psi = np.einsum("kad,kae->de", E, E) / (K * n)
    Psi = 0.5 * (Psi + Psi.T)
    repaired = {}
    trace = []
    loglik = -np.inf
    iterations = 0
    prev_Omega = None
    prev_Psi = None
    En = E.transpose(1, 0, 2).reshape(n, K * D)
    for iterations in range(1, max_iters + 1):
        # --- Omega update (three steps) ---
        psi_cho = cho_factor(Psi, lower=True)
        PsiInv = cho_solve(psi_cho, np.eye(D))
        A2 = (E @ PsiInv).transpose(1, 0, 2).reshape(n, K * D)
        S = A2 @ En.T
        S = 0.5 * (S + S.T)
        s11 = S[0, 0]
        if s11 <= 0.0:
            raise DegenerateDrawsError(
                "leading entry of the scatter matrix is not positive"
            )
        S = S / s11
        w = (s11 if omega_update_s11 == "pre" else 1.0) / (K * D)
        S[1:, 1:] = w * S[1:, 1:] + (1.0 - w) * np.outer(S[1:, 0], S[1:, 0])
        Omega = 0.5 * (S + S.T)
        Omega = _repair_pd(Omega, "Omega", repaired)
        if Omega[0, 0] != 1.0:
            Omega = Omega / Omega[0, 0]
        # --- Psi update ---
        omega_cho = cho_factor(Omega, lower=True)
        OmegaInv = cho_solve(omega_cho, np.eye(n))
        OinvE = (OmegaInv @ En).reshape(n, K, D)
        T = np.einsum("nkd,nke->de", E.transpose(1, 0, 2), OinvE)
        Psi = 0.5 * (T + T.T) / (K * n)
        Psi = _repair_pd(Psi, "Psi", repaired)

        logdet_omega = 2.0 * float(np.sum(np.log(np.diagonal(omega_cho[0]))))
        psi_cho_new = cho_factor(Psi, lower=True)
        logdet_psi = 2.0 * float(np.sum(np.log(np.diagonal(psi_cho_new[0]))))
        quad = float(np.trace(cho_solve(psi_cho_new, T)))
        new_loglik = (
            -0.5 * K * n * D * _LOG_2PI
            - 0.5 * K * D * logdet_omega
            - 0.5 * K * n * logdet_psi
            - 0.5 * quad
        )
        trace.append(new_loglik)
        # The log likelihood flattens out quadratically near the fixed
        # point, so require the iterates themselves to stabilize too;
        # otherwise the parameters stop ~sqrt(tol) away from the MLE.
        if prev_Omega is not None:
            ll_settled = abs(new_loglik - loglik) <= tol * max(
                1.0, abs(new_loglik)
            )
            omega_settled = np.linalg.norm(Omega - prev_Omega) <= tol * max(
                1.0, np.linalg.norm(Omega)
            )
            psi_settled = np.linalg.norm(Psi - prev_Psi) <= tol * max(
                1.0, np.linalg.norm(Psi)
            )
            if ll_settled and omega_settled and psi_settled:
                loglik = new_loglik
                break
        prev_Omega, prev_Psi = Omega, Psi
        loglik = new_loglik

    return MatrixNormalApprox(
        Lambda, Omega, Psi, loglik, iterations, loglik_trace=trace
    )


def write_draws(path, draws):
    """Write draws in the package's text format.

    One header line ``n,D,K`` followed by K blocks of n rows of D
    comma-separated values.
    """
    lines = [f"{draws.n},{draws.D},{draws.K}"]
    for k in range(draws.K):
        for i in range(draws.n):
            lines.append(",".join(repr(float(v)) for v in draws.draws[k, i]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_draws(path):
    """Read a draws file; rejects any shape mismatch with a line-numbered error."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValidationError("empty draws file", path=path, line=1)
    header = lines[0].split(",")
    if len(header) != 3:
        raise ValidationError(
            f"header must be 'n,D,K', got {lines[0]!r}", path=path, line=1
        )
    try:
        n, D, K = (int(x) for x in header)
    except ValueError:
        raise ValidationError(
            f"header must contain three integers, got {lines[0]!r}",
            path=path,
            line=1,
        ) from None
    if n < 1 or D < 1 or K < 2:
        raise ValidationError(
            f"invalid dimensions n={n}, D={D}, K={K} (need n,D >= 1, K >= 2)",
            path=path,
            line=1,
        )
    body = [ln for ln in lines[1:] if ln.strip() != ""]
    expected = K * n
    if len(body) != expected:
        raise ValidationError(
            f"expected {expected} data rows for K={K} blocks of n={n}, "
            f"found {len(body)}",
            path=path,
            line=len(lines),
        )
    draws = np.empty((K, n, D))
    for idx, ln in enumerate(body):
        fields = ln.split(",")
        if len(fields) != D:
            raise ValidationError(
                f"expected {D} values per row, got {len(fields)}",
                path=path,
                line=idx + 2,
            )
        try:
            row = np.array([float(x) for x in fields])
        except ValueError:
            raise ValidationError(
                f"non-numeric value in row {ln!r}", path=path, line=idx + 2
            ) from None
        if not np.all(np.isfinite(row)):
            raise ValidationError(
                "non-finite value in draws", path=path, line=idx + 2
            )
        draws[idx // n, idx % n] = row
    return LatentDraws(draws, aligned=False)
