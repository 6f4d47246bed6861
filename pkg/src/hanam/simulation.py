"""Synthetic networks, limiting-law outcome draws, forward simulation of
the longitudinal influence process, and the scenario study harness.

The network generator plants latent positions in a Gaussian-mixture
layout and draws directed edges from a logistic latent-distance model,
calibrating the edge intercept to a target mean out-degree. Outcomes
come either from the exact limiting law (one draw per dataset, as in the
scenario study) or by iterating the longitudinal recursion, which is how
the limiting law itself is validated.
"""

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from ._threads import single_threaded_blas
from .estimation import FitConfig, map_fit, nam_mle
from .exceptions import (
    BadShapeError,
    DivergingError,
    EmptyNetworkError,
    NumericalError,
    UnstableError,
    ValidationError,
)
from .latent import LatentDraws, fit_matrix_normal, procrustes_align, read_draws
from .latent import LatentSamplerConfig, sample_latent_posterior
from .models import (
    HAND,
    HANE,
    NAM_DISTURBANCES,
    NAM_EFFECTS,
    Dataset,
    ModelFamily,
    Priors,
)
from .network import Adjacency, check_stability, row_normalize

__all__ = [
    "NetParams",
    "ScenarioConfig",
    "ForwardSimConfig",
    "LimitReport",
    "MetricsTable",
    "generate_network",
    "draw_limiting_outcome",
    "forward_simulate",
    "validate_limit",
    "run_scenario",
    "run_replicate",
    "mix_seed",
]

_DIVERGE_LIMIT = 1e12

METRICS_COLUMNS = (
    "scenario_id",
    "method",
    "parameter",
    "bias",
    "mse",
    "coverage",
    "mcse_bias",
    "n_ok",
    "n_failed",
)


def mix_seed(*parts):
    """Deterministic seed mixing: hash arbitrary parts into a SeedSequence."""
    ints = []
    for part in parts:
        if isinstance(part, (int, np.integer)):
            ints.append(int(part) & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(part).encode()).digest()
            ints.append(int.from_bytes(digest[:4], "big"))
    return np.random.SeedSequence(ints)


def _seed_int(*parts):
    return int(mix_seed(*parts).generate_state(1)[0])


@dataclass(frozen=True)
class NetParams:
    """Settings of the synthetic network generator.

    Latent positions follow a D-dimensional Gaussian mixture with
    ``n_clusters`` components whose means are N(0, cluster_mean_scale^2)
    and whose within-cluster spread is ``within_scale``. The node
    covariate is N(covariate_mean, covariate_sd^2). Directed edges are
    Bernoulli with ``logit P(A_ij=1) = intercept - ||u_i - u_j|| +
    covariate_coef * |x_i - x_j|``; a None intercept is calibrated so
    the expected mean out-degree hits ``target_out_degree``.
    """

    n: int = 159
    D: int = 3
    n_clusters: int = 6
    cluster_mean_scale: float = 3.0
    within_scale: float = 0.75
    edge_intercept: float | None = None
    covariate_coef: float = 0.5
    target_out_degree: float = 5.0
    covariate_mean: float = 2.0
    covariate_sd: float = 1.0

    def __post_init__(self):
        if self.n < 2 or self.D < 1 or self.n_clusters < 1:
            raise ValidationError("n >= 2, D >= 1, n_clusters >= 1 required")
        if self.within_scale <= 0 or self.covariate_sd <= 0:
            raise ValidationError("scales must be positive")
        if self.target_out_degree <= 0 or self.target_out_degree >= self.n - 1:
            raise ValidationError(
                f"target_out_degree must be in (0, n-1), got {self.target_out_degree}"
            )


def generate_network(net_params, seed):
    """Draw (raw adjacency, covariate vector, true latent positions).

    Returns
    -------
    (Adjacency, ndarray, ndarray)
        The raw 0/1 adjacency, the length-n covariate, and the n x D
        latent position matrix.

    Raises
    ------
    EmptyNetworkError
        If no dyad produced an edge (pathological intercept).
    """
    np_ = net_params
    rng = np.random.default_rng(mix_seed(seed))
    means = rng.standard_normal((np_.n_clusters, np_.D)) * np_.cluster_mean_scale
    labels = rng.integers(0, np_.n_clusters, size=np_.n)
    U = means[labels] + rng.standard_normal((np_.n, np_.D)) * np_.within_scale
    x = np_.covariate_mean + np_.covariate_sd * rng.standard_normal(np_.n)

    diff = U[:, None, :] - U[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    score = -dist + np_.covariate_coef * np.abs(x[:, None] - x[None, :])
    offdiag = ~np.eye(np_.n, dtype=bool)

    if np_.edge_intercept is None:
        target_edges = np_.target_out_degree * np_.n

        def excess(theta0):
            return expit(theta0 + score[offdiag]).sum() - target_edges

        theta0 = brentq(excess, -60.0, 60.0, xtol=1e-8)
    else:
        theta0 = np_.edge_intercept

    prob = expit(theta0 + score)
    edges = (rng.uniform(size=prob.shape) < prob) & offdiag
    if not edges.any():
        raise EmptyNetworkError(
            f"no edges drawn at intercept {theta0:.2f}"
        )
    return Adjacency(edges.astype(float)), x, U


@dataclass(frozen=True)
class ForwardSimConfig:
    """Schedules of the longitudinal recursion.

    The persistent-noise scale is constant at ``sigma_alpha`` unless an
    explicit length-T ``sigma_alpha_t`` is given; the injected-noise
    scale decays geometrically, ``sigma_eps0 * decay**t``, unless
    ``sigma_eps_t`` overrides it. ``decay`` may be 1.0, which holds the
    injected noise constant: that deliberately violates the vanishing-
    noise condition behind the limiting law and exists for negative
    controls.
    """

    T: int = 500
    sigma_alpha: float = 1.0
    sigma_eps0: float = 1.0
    decay: float = 0.97
    sigma_alpha_t: tuple | None = None
    sigma_eps_t: tuple | None = None
    y0: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValidationError("horizon T must be >= 1")
        if not (0.0 < self.decay <= 1.0):
            raise ValidationError(f"decay must be in (0, 1], got {self.decay}")
        if self.sigma_alpha < 0 or self.sigma_eps0 < 0:
            raise ValidationError("noise scales must be nonnegative")
        for name in ("sigma_alpha_t", "sigma_eps_t"):
            sched = getattr(self, name)
            if sched is not None:
                arr = np.asarray(sched, dtype=float)
                if arr.shape != (self.T,) or not np.all(np.isfinite(arr)):
                    raise ValidationError(
                        f"{name} must be a finite length-T schedule"
                    )
        if self.y0 is not None and not np.all(np.isfinite(self.y0)):
            raise ValidationError("y0 must be finite")

    def alpha_schedule(self):
        if self.sigma_alpha_t is not None:
            return np.asarray(self.sigma_alpha_t, dtype=float)
        return np.full(self.T, self.sigma_alpha)

    def eps_schedule(self):
        if self.sigma_eps_t is not None:
            return np.asarray(self.sigma_eps_t, dtype=float)
        return self.sigma_eps0 * self.decay ** np.arange(1, self.T + 1)


def _mean_structure(net, U, X, theta, family):
    U = np.asarray(U, dtype=float)
    X = np.asarray(X, dtype=float)
    z = X @ theta.beta
    if theta.gamma.size:
        z = z + U @ theta.gamma
    return z


def draw_limiting_outcome(net, U, X, theta, family, seed, size=1):
    """Exact draw(s) from the limiting outcome law.

    Effects-style scenarios draw from N(M z, sigma2 M M') and
    disturbances-style from N(z, sigma2 M M'), where z = U gamma +
    X beta and M = (I - rho A)^{-1}. Sampling goes through the lower
    Cholesky factor of the covariance.

    Returns
    -------
    ndarray
        Shape (n,) when size == 1, else (size, n).
    """
    if family not in (HANE, HAND, NAM_EFFECTS, NAM_DISTURBANCES):
        raise ValidationError(f"unknown family {family!r}")
    if not check_stability(theta.rho, net):
        raise UnstableError(
            f"|rho|*lambda1(A) >= 1 at rho={theta.rho}"
        )
    n = net.n
    z = _mean_structure(net, U, X, theta, family)
    M = np.linalg.solve(np.eye(n) - theta.rho * net.A, np.eye(n))
    mean = M @ z if family in (HANE, NAM_EFFECTS) else z
    cov = theta.sigma2 * (M @ M.T)
    L = np.linalg.cholesky(cov)
    rng = np.random.default_rng(mix_seed(seed))
    draws = mean + (L @ rng.standard_normal((n, size))).T
    return draws[0] if size == 1 else draws


def _iterate_paths(net, z, rho, effects_form, fwd, n_paths, rng):
    n = net.n
    A = net.A
    sig_a = fwd.alpha_schedule()
    sig_e = fwd.eps_schedule()
    if fwd.y0 is None:
        Y = np.zeros((n, n_paths))
    else:
        y0 = np.asarray(fwd.y0, dtype=float).reshape(-1)
        if y0.shape[0] != n:
            raise BadShapeError(f"y0 has length {y0.shape[0]}, expected {n}")
        Y = np.tile(y0[:, None], (1, n_paths))
    alpha = rng.standard_normal((n, n_paths))
    zc = z[:, None]
    yield 0, Y
    for t in range(1, fwd.T + 1):
        eps = rng.standard_normal((n, n_paths))
        lag = rho * (A @ Y) if effects_form else rho * (A @ (Y - zc))
        Y = zc + lag + sig_a[t - 1] * alpha + sig_e[t - 1] * eps
        if np.max(np.abs(Y)) > _DIVERGE_LIMIT:
            raise DivergingError(
                f"trajectory exceeded {_DIVERGE_LIMIT:.0e} at step {t}"
            )
        yield t, Y


def forward_simulate(net, U, X, theta, fwd, family=HANE, stride=1):
    """Iterate the longitudinal recursion for one trajectory.

    The persistent deviation alpha is drawn once; the injected noise is
    fresh at every step. Effects-style uses ``y_t = z + rho A y_{t-1} +
    noise``; disturbances-style lags the deviation from the mean
    instead of the outcome.

    Parameters
    ----------
    stride : int
        Keep every stride-th time point (time 0 and T always included).

    Returns
    -------
    ndarray
        Array of shape (n_kept, n) of outcome snapshots.

    Raises
    ------
    DivergingError
        If any entry exceeds 1e12 in magnitude (expected whenever the
        stability condition fails).
    """
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    z = _mean_structure(net, U, X, theta, family)
    rng = np.random.default_rng(mix_seed(fwd.seed))
    effects = family in (HANE, NAM_EFFECTS)
    kept = []
    for t, Y in _iterate_paths(net, z, theta.rho, effects, fwd, 1, rng):
        if t % stride == 0 or t == fwd.T:
            kept.append(Y[:, 0].copy())
    return np.asarray(kept)


@dataclass
class LimitReport:
    """Outcome of the empirical limiting-law check."""

    family: str
    n_paths: int
    max_mean_z: float
    max_cov_z: float
    frac_cov_within: float
    mean_pass: bool
    cov_pass: bool
    passed: bool


def validate_limit(net, U, X, theta, fwd, n_paths, family=HANE):
    """Compare forward-simulated endpoints with the limiting law.

    Runs ``n_paths`` independent trajectories to time T and checks the
    empirical mean coordinatewise and the empirical covariance
    entrywise against the limiting normal's moments, each at four Monte
    Carlo standard errors. The covariance check passes when at least
    95 percent of entries are within the band.

    Returns
    -------
    LimitReport
    """
    z = _mean_structure(net, U, X, theta, family)
    n = net.n
    M = np.linalg.solve(np.eye(n) - theta.rho * net.A, np.eye(n))
    effects = family in (HANE, NAM_EFFECTS)
    target_mean = M @ z if effects else z
    sigma_lim = fwd.alpha_schedule()[-1]
    target_cov = sigma_lim**2 * (M @ M.T)

    rng = np.random.default_rng(mix_seed(fwd.seed, "paths"))
    Y_final = None
    with single_threaded_blas():
        for t, Y in _iterate_paths(net, z, theta.rho, effects, fwd,
                                   n_paths, rng):
            Y_final = Y
    samples = Y_final.T  # (n_paths, n)

    emp_mean = samples.mean(axis=0)
    se_mean = np.sqrt(np.diagonal(target_cov) / n_paths)
    mean_z = np.abs(emp_mean - target_mean) / np.maximum(se_mean, 1e-300)
    emp_cov = np.cov(samples, rowvar=False, ddof=1)
    var_cov = (
        np.outer(np.diagonal(target_cov), np.diagonal(target_cov))
        + target_cov**2
    ) / n_paths
    cov_z = np.abs(emp_cov - target_cov) / np.maximum(np.sqrt(var_cov), 1e-300)

    frac_within = float(np.mean(cov_z <= 4.0))
    mean_pass = bool(np.all(mean_z <= 4.0))
    cov_pass = bool(frac_within >= 0.95)
    return LimitReport(
        family=family,
        n_paths=n_paths,
        max_mean_z=float(mean_z.max()),
        max_cov_z=float(cov_z.max()),
        frac_cov_within=frac_within,
        mean_pass=mean_pass,
        cov_pass=cov_pass,
        passed=mean_pass and cov_pass,
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the simulation study.

    ``family`` selects the outcome law (HANE-style effects or HAND-style
    disturbances). ``beta`` includes the intercept as its first entry
    and one coefficient per node covariate (the generator produces one
    covariate). ``gamma`` must match ``net_params.D``.
    """

    family: str = HANE
    rho: float = 0.3
    beta: tuple = (0.5, 0.5)
    gamma: tuple = (0.06, 0.1, -0.2)
    sigma2: float = 1.0
    n_reps: int = 50
    network_source: str = "fixed_pool"
    pool_size: int = 20
    net_params: NetParams = field(default_factory=NetParams)
    seed: int = 0

    def __post_init__(self):
        if self.family not in (HANE, HAND):
            raise ValidationError(
                f"scenario family must be {HANE} or {HAND}, got {self.family!r}"
            )
        if self.network_source not in ("fixed_pool", "regenerate"):
            raise ValidationError(
                f"network_source must be 'fixed_pool' or 'regenerate', "
                f"got {self.network_source!r}"
            )
        if len(self.gamma) != self.net_params.D:
            raise ValidationError(
                f"gamma has {len(self.gamma)} entries for D={self.net_params.D}"
            )
        if len(self.beta) != 2:
            raise ValidationError(
                "beta must be (intercept, covariate coefficient)"
            )
        if self.sigma2 <= 0 or self.n_reps < 1 or self.pool_size < 1:
            raise ValidationError("sigma2 > 0, n_reps >= 1, pool_size >= 1 required")

    def canonical(self):
        d = asdict(self)
        return json.dumps(d, sort_keys=True)

    def scenario_id(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]

    def truth(self):
        t = {"intercept": self.beta[0], "x1": self.beta[1]}
        for j, g in enumerate(self.gamma):
            t[f"gamma{j + 1}"] = g
        t["rho"] = self.rho
        t["sigma2"] = self.sigma2
        return t


@dataclass
class MetricsTable:
    """Per-scenario, per-method, per-parameter summary rows."""

    rows: list
    config_hash: str = ""
    master_seed: int = 0

    def to_csv(self, path):
        lines = [
            f"# config_hash={self.config_hash} master_seed={self.master_seed}",
            ",".join(METRICS_COLUMNS),
        ]
        for row in self.rows:
            lines.append(
                ",".join(_format_cell(row[c]) for c in METRICS_COLUMNS)
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def cell(self, method, parameter):
        for row in self.rows:
            if row["method"] == method and row["parameter"] == parameter:
                return row
        raise KeyError(f"no row for ({method}, {parameter})")


def _format_cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --- scenario execution -------------------------------------------------

_METHOD_NAMES = ("HANE", "HAND", "NAM_BAYES", "NAM_MLE")


@dataclass
class _ScenarioContext:
    sc: ScenarioConfig
    methods: list
    networks: list          # list of (net, design, names, U_true)
    latents: list           # MatrixNormalApprox or None per network
    priors: Priors
    fit_cfg: FitConfig
    n_regenerated: int


def _needs_latent(methods):
    return any(m in ("HANE", "HAND") for m in methods if isinstance(m, str))


def _build_latent(net, x, U_true, latent_source, sc, idx, oracle_tau,
                  oracle_draws, sampler_cfg, draws_files):
    sid = sc.scenario_id()
    if latent_source == "oracle_perturbed":
        rng = np.random.default_rng(mix_seed(sc.seed, sid, "latent", idx))
        K = oracle_draws
        noise = oracle_tau * rng.standard_normal((K,) + U_true.shape)
        draws = LatentDraws(U_true[None] + noise, aligned=True)
    elif latent_source == "sampler":
        cfg = sampler_cfg or LatentSamplerConfig(D=sc.net_params.D)
        cfg = LatentSamplerConfig(
            **{**asdict(cfg), "D": sc.net_params.D,
               "seed": _seed_int(sc.seed, sid, "latent", idx)}
        )
        draws = sample_latent_posterior(net, x, cfg)
        draws = procrustes_align(draws)
    elif latent_source == "file":
        if not draws_files:
            raise ValidationError("latent_source='file' requires draws_files")
        draws = read_draws(draws_files[idx % len(draws_files)])
        if draws.n != net.n:
            raise BadShapeError(
                f"draws file has n={draws.n}, network has {net.n}"
            )
        draws = procrustes_align(draws)
    else:
        raise ValidationError(f"unknown latent_source {latent_source!r}")
    return fit_matrix_normal(draws)


def _build_context(sc, methods, latent_source, priors, fit_cfg, oracle_tau,
                   oracle_draws, sampler_cfg, draws_files):
    for m in methods:
        if isinstance(m, str) and m not in _METHOD_NAMES:
            raise ValidationError(f"unknown method {m!r}")
    sid = sc.scenario_id()
    n_networks = (
        sc.pool_size if sc.network_source == "fixed_pool" else sc.n_reps
    )
    networks = []
    latents = []
    n_regen = 0
    theta_gamma = np.asarray(sc.gamma, dtype=float)
    want_latent = _needs_latent(methods)
    for idx in range(n_networks):
        attempt = 0
        while True:
            raw, x, U = generate_network(
                sc.net_params, mix_seed(sc.seed, sid, "net", idx, attempt)
            )
            net = row_normalize(raw)
            if check_stability(sc.rho, net):
                break
            attempt += 1
            n_regen += 1
            if attempt > 100:
                raise UnstableError(
                    f"could not generate a stable network at rho={sc.rho}"
                )
        design = np.column_stack([np.ones(net.n), x])
        networks.append((net, design, ["intercept", "x1"], U))
        if want_latent:
            latents.append(
                _build_latent(net, x, U, latent_source, sc, idx, oracle_tau,
                              oracle_draws, sampler_cfg, draws_files)
            )
        else:
            latents.append(None)
    return _ScenarioContext(
        sc=sc,
        methods=list(methods),
        networks=networks,
        latents=latents,
        priors=priors or Priors(),
        fit_cfg=fit_cfg or FitConfig(),
        n_regenerated=n_regen,
    )


def _method_label(method):
    if callable(method):
        return getattr(method, "__name__", "custom")
    return method


def _fit_one(method, data, net, approx, ctx, r):
    sc = ctx.sc
    sid = sc.scenario_id()
    fit_seed = _seed_int(sc.seed, sid, "fit", r, _method_label(method))
    cfg = FitConfig(**{**asdict(ctx.fit_cfg), "seed": fit_seed})
    if callable(method):
        return method(data, net, approx)
    if method == "HANE":
        fit = map_fit(data, net, ModelFamily(HANE, approx), ctx.priors, cfg)
    elif method == "HAND":
        fit = map_fit(data, net, ModelFamily(HAND, approx), ctx.priors, cfg)
    elif method == "NAM_BAYES":
        kind = NAM_EFFECTS if sc.family == HANE else NAM_DISTURBANCES
        fit = map_fit(data, net, ModelFamily(kind), ctx.priors, cfg)
    elif method == "NAM_MLE":
        kind = NAM_EFFECTS if sc.family == HANE else NAM_DISTURBANCES
        fit = nam_mle(data, net, kind, cfg)
    else:
        raise ValidationError(f"unknown method {method!r}")
    if not fit.converged or fit.intervals is None:
        raise NumericalError(
            f"{method} fit failed (converged={fit.converged})"
        )
    est = dict(zip(fit.param_names, fit.theta_map.to_array()))
    return {
        name: (est[name], fit.intervals[name][0], fit.intervals[name][1])
        for name in fit.param_names
    }


def _replicate(ctx, r):
    sc = ctx.sc
    sid = sc.scenario_id()
    idx = r % len(ctx.networks)
    net, design, names, U = ctx.networks[idx]
    approx = ctx.latents[idx]
    theta = _scenario_theta(sc)
    y = draw_limiting_outcome(
        net, U, design, theta, sc.family, mix_seed(sc.seed, sid, "y", r)
    )
    data = Dataset(y, design, names)
    out = {}
    for method in ctx.methods:
        label = _method_label(method)
        try:
            out[label] = {"ok": True,
                          "params": _fit_one(method, data, net, approx,
                                             ctx, r)}
        except NumericalError as exc:
            out[label] = {"ok": False, "error": str(exc)}
    return out


def _scenario_theta(sc):
    from .models import ParamVector

    return ParamVector(
        np.asarray(sc.beta, dtype=float),
        np.asarray(sc.gamma, dtype=float),
        sc.rho,
        sc.sigma2,
    )


_WORKER_CTX = None


def _worker_init(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_run(r):
    return r, _replicate(_WORKER_CTX, r)


def run_replicate(sc, r, methods, latent_source="oracle_perturbed",
                  priors=None, fit_cfg=None, oracle_tau=0.1,
                  oracle_draws=100, sampler_cfg=None, draws_files=None):
    """Run a single replicate in isolation; reproduces the same record
    the full scenario run produces for index ``r``."""
    ctx = _build_context(sc, methods, latent_source, priors, fit_cfg,
                         oracle_tau, oracle_draws, sampler_cfg, draws_files)
    return _replicate(ctx, r)


def run_scenario(sc, methods, latent_source="oracle_perturbed", jobs=1,
                 priors=None, fit_cfg=None, oracle_tau=0.1, oracle_draws=100,
                 sampler_cfg=None, draws_files=None):
    """Execute one scenario cell and aggregate bias/MSE/coverage.

    Networks come from a fixed pool reused round-robin across
    replicates (or fresh per replicate with
    ``network_source='regenerate'``); each network's latent summary is
    fitted once and shared. Per-replicate failures (non-convergence,
    indefinite Hessian, numerical errors) are excluded from the
    aggregates and counted in ``n_failed``.

    Parameters
    ----------
    sc : ScenarioConfig
    methods : list
        Method names among HANE, HAND, NAM_BAYES, NAM_MLE, or callables
        ``f(data, net, approx) -> {param: (est, lo, hi)}``.
    latent_source : str
        'sampler' (built-in chain), 'oracle_perturbed' (true positions
        plus N(0, oracle_tau^2) noise), or 'file'.
    jobs : int
        Worker processes for the replicate queue; aggregation is a
        deterministic fold in replicate order either way.

    Returns
    -------
    MetricsTable
    """
    ctx = _build_context(sc, methods, latent_source, priors, fit_cfg,
                         oracle_tau, oracle_draws, sampler_cfg, draws_files)
    records = [None] * sc.n_reps
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_worker_init, initargs=(ctx,)
        ) as pool:
            for r, rec in pool.map(_worker_run, range(sc.n_reps)):
                records[r] = rec
    else:
        for r in range(sc.n_reps):
            records[r] = _replicate(ctx, r)
    return _aggregate(sc, ctx, records)


def _aggregate(sc, ctx, records):
    truth = sc.truth()
    sid = sc.scenario_id()
    rows = []
    for method in ctx.methods:
        label = _method_label(method)
        ok_recs = [rec[label]["params"] for rec in records if rec[label]["ok"]]
        n_ok = len(ok_recs)
        n_failed = sc.n_reps - n_ok
        if not ok_recs:
            continue
        params = list(ok_recs[0].keys())
        for name in params:
            if name not in truth:
                continue
            ests = np.array([rec[name][0] for rec in ok_recs])
            lows = np.array([rec[name][1] for rec in ok_recs])
            highs = np.array([rec[name][2] for rec in ok_recs])
            bias = float(np.mean(ests) - truth[name])
            mse = float(np.mean((ests - truth[name]) ** 2))
            coverage = float(
                np.mean((lows <= truth[name]) & (truth[name] <= highs))
            )
            mcse = float(np.std(ests, ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else 0.0
            rows.append(
                {
                    "scenario_id": sid,
                    "method": label,
                    "parameter": name,
                    "bias": bias,
                    "mse": mse,
                    "coverage": coverage,
                    "mcse_bias": mcse,
                    "n_ok": n_ok,
                    "n_failed": n_failed,
                }
            )
    return MetricsTable(
        rows,
        config_hash=hashlib.sha256(sc.canonical().encode()).hexdigest()[:16],
        master_seed=sc.seed,
    )
