"""Command-line surface for batch fitting and the simulation study.

Subcommands: ``fit``, ``simulate``, ``validate-limit``, ``scenarios``,
``sample-latent``. Every run writes a ``manifest.json`` (resolved
config, config hash, master seed, package version) that enables exact
re-runs via ``--from-manifest``. Exit codes: 0 success, 2 input
validation, 3 numerical failure, 4 internal error.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .config import (
    COMMAND_KEYS,
    config_hash,
    load_config_file,
    print_config,
    resolve_config,
)
from .estimation import FitConfig, map_fit, nam_mle
from .exceptions import (
    HanamError,
    NumericalError,
    ValidationError,
)
from .io import (
    atomic_write_text,
    read_covariates,
    read_edge_list,
    read_outcome,
    write_csv_rows,
    write_json,
)
from .latent import (
    LatentSamplerConfig,
    fit_matrix_normal,
    procrustes_align,
    read_draws,
    write_draws,
    _sample_latent,
)
from .models import (
    FAMILIES,
    HAND,
    HANE,
    NAM_DISTURBANCES,
    NAM_EFFECTS,
    Dataset,
    ModelFamily,
    ParamVector,
    Priors,
)
from .simulation import (
    ForwardSimConfig,
    NetParams,
    ScenarioConfig,
    generate_network,
    draw_limiting_outcome,
    mix_seed,
    run_scenario,
    validate_limit,
)
from .network import row_normalize

FORMAT_VERSION = 1

_FULL_GRID_WARNING = (
    "--full-grid requests the complete study grid "
    "(2 families x 7 rho x 3 beta x 2 gamma x 200 replicates = 16,800 fits); "
    "expect hours to days of runtime."
)


def _write_manifest(outdir, command, resolved):
    payload = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in resolved.items()},
        "config_hash": config_hash(resolved),
        "master_seed": resolved.get("seed", 0),
        "package_version": __version__,
    }
    write_json(os.path.join(outdir, "manifest.json"), payload)
    return payload


def _resolve(args, command):
    file_values = None
    if getattr(args, "from_manifest", None):
        try:
            with open(args.from_manifest) as fh:
                manifest = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(
                f"manifest not found: {args.from_manifest}"
            ) from None
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"manifest is not valid JSON: {exc}", path=args.from_manifest
            ) from None
        if manifest.get("command") != command:
            raise ValidationError(
                f"manifest is for command {manifest.get('command')!r}, "
                f"not {command!r}"
            )
        keys = COMMAND_KEYS[command]
        file_values = {}
        for k, v in manifest.get("config", {}).items():
            if k in keys:
                file_values[k] = tuple(v) if isinstance(v, list) else v
    elif getattr(args, "config", None):
        file_values = load_config_file(args.config, command)
    overrides = {}
    for key in COMMAND_KEYS[command]:
        if hasattr(args, key.replace("-", "_")):
            overrides[key] = getattr(args, key.replace("-", "_"))
    return resolve_config(command, file_values, overrides)


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".write_probe")
    try:
        atomic_write_text(probe, "")
        os.unlink(probe)
    except OSError as exc:
        raise ValidationError(f"output directory not writable: {exc}") from None


def _priors_from(cfg):
    return Priors(
        sigma_beta=cfg["prior_sigma_beta"],
        sigma_gamma=cfg["prior_sigma_gamma"],
        mu_rho=cfg["prior_mu_rho"],
        sigma_rho=cfg["prior_sigma_rho"],
        a=cfg["prior_a"],
        b=cfg["prior_b"],
    )


def _fit_config_from(cfg, seed):
    return FitConfig(
        rho_bounds=(cfg["rho_min"], cfg["rho_max"]),
        max_iters=cfg["max_iters"],
        grad_tol=cfg["grad_tol"],
        history_size=cfg["history_size"],
        hessian_step=cfg["hessian_step"],
        multistart=cfg["multistart"],
        seed=seed,
        level=cfg["level"],
    )


def _sampler_config_from(cfg, seed):
    return LatentSamplerConfig(
        D=cfg["latent_dim"],
        burn_in=cfg["burn_in"],
        thin=cfg["thin"],
        n_draws=cfg["n_draws"],
        step_size=cfg["step_size"],
        prior_scale_positions=cfg["prior_scale_positions"],
        prior_scale_coeffs=cfg["prior_scale_coeffs"],
        seed=seed,
    )


def _net_params_from(cfg):
    intercept = cfg["edge_intercept"]
    return NetParams(
        n=cfg["n"],
        D=cfg["latent_dim"],
        n_clusters=cfg["clusters"],
        cluster_mean_scale=cfg["cluster_scale"],
        within_scale=cfg["within_scale"],
        edge_intercept=None if intercept == "auto" else intercept,
        covariate_coef=cfg["covariate_coef"],
        target_out_degree=cfg["target_degree"],
        covariate_mean=cfg["covariate_mean"],
        covariate_sd=cfg["covariate_sd"],
    )


# --- fit -----------------------------------------------------------------


def cmd_fit(args):
    cfg = _resolve(args, "fit")
    for key in ("network", "covariates", "outcome"):
        if not cfg[key]:
            raise ValidationError(f"missing required input path: --{key}")
    _ensure_outdir(args.out)
    family_kind = cfg["family"]
    if family_kind not in FAMILIES:
        raise ValidationError(
            f"family must be one of {', '.join(FAMILIES)}, got {family_kind!r}"
        )
    if cfg["mle"] and family_kind in (HANE, HAND):
        raise ValidationError("--mle applies only to the NAM families")

    cov = read_covariates(cfg["covariates"], standardize=cfg["standardize"])
    net = read_edge_list(cfg["network"], cov.ids)
    y = read_outcome(cfg["outcome"], cov.ids)
    data = Dataset(y, cov.design, cov.column_names)

    latent = None
    if family_kind in (HANE, HAND):
        if cfg["draws"]:
            draws = read_draws(cfg["draws"])
            if draws.n != net.n:
                raise ValidationError(
                    f"draws file has n={draws.n}, network has {net.n} nodes",
                    path=cfg["draws"],
                )
        else:
            raw, categorical = cov.raw_matrix()
            draws = _sample_latent(
                net,
                raw if raw.shape[1] else None,
                _sampler_config_from(cfg, cfg["seed"]),
                categorical=categorical,
            )
        draws = procrustes_align(draws)
        latent = fit_matrix_normal(draws)

    fit_cfg = _fit_config_from(cfg, cfg["seed"])
    if cfg["mle"]:
        fit = nam_mle(data, net, family_kind, fit_cfg)
    else:
        fit = map_fit(
            data, net, ModelFamily(family_kind, latent),
            _priors_from(cfg), fit_cfg,
        )

    manifest = _write_manifest(args.out, "fit", cfg)
    estimates = dict(zip(fit.param_names, map(float, fit.theta_map.to_array())))
    report = {
        "format_version": FORMAT_VERSION,
        "family": family_kind,
        "mle": cfg["mle"],
        "estimates": estimates,
        "intervals": fit.intervals,
        "level": fit.level,
        "log_post": fit.log_post,
        "converged": fit.converged,
        "n_iters": fit.n_iters,
        "grad_norm": fit.grad_norm,
        "init": dict(zip(fit.param_names, map(float, fit.init_used.to_array()))),
        "config": manifest["config"],
        "config_hash": manifest["config_hash"],
        "master_seed": manifest["master_seed"],
    }
    write_json(os.path.join(args.out, "fit.json"), report)
    rows = []
    for name in fit.param_names:
        lo, hi = (fit.intervals or {}).get(name, (float("nan"), float("nan")))
        rows.append(
            {"parameter": name, "estimate": estimates[name],
             "lower": float(lo), "upper": float(hi)}
        )
    write_csv_rows(
        os.path.join(args.out, "fit.csv"),
        ("parameter", "estimate", "lower", "upper"),
        rows,
        header_comment=(
            f"config_hash={manifest['config_hash']} "
            f"master_seed={manifest['master_seed']}"
        ),
    )
    if not fit.converged:
        raise NumericalError(
            f"optimizer did not converge (projected gradient {fit.grad_norm:.2e})"
        )
    return 0


# --- simulate ------------------------------------------------------------


def _write_network_files(outdir, net, x, U, manifest):
    n = net.n
    ids = [f"v{i}" for i in range(n)]
    comment = (
        f"config_hash={manifest['config_hash']} "
        f"master_seed={manifest['master_seed']}"
    )
    edge_rows = []
    raw = net.raw.entries
    for i in range(n):
        for j in range(n):
            if raw[i, j] > 0:
                edge_rows.append({"src": ids[i], "dst": ids[j]})
    write_csv_rows(os.path.join(outdir, "network.csv"), ("src", "dst"),
                   edge_rows, header_comment=comment)
    write_csv_rows(
        os.path.join(outdir, "covariates.csv"),
        ("id", "x1"),
        [{"id": ids[i], "x1": float(x[i])} for i in range(n)],
        header_comment=comment,
    )
    cols = ("id",) + tuple(f"u{d + 1}" for d in range(U.shape[1]))
    write_csv_rows(
        os.path.join(outdir, "latent_true.csv"),
        cols,
        [dict({"id": ids[i]},
              **{f"u{d + 1}": float(U[i, d]) for d in range(U.shape[1])})
         for i in range(n)],
        header_comment=comment,
    )
    return ids


def cmd_simulate(args):
    cfg = _resolve(args, "simulate")
    _ensure_outdir(args.out)
    if cfg["family"] not in (HANE, HAND):
        raise ValidationError(
            f"simulate family must be {HANE} or {HAND}, got {cfg['family']!r}"
        )
    if len(cfg["gamma"]) != cfg["latent_dim"]:
        raise ValidationError(
            f"gamma has {len(cfg['gamma'])} entries for latent_dim={cfg['latent_dim']}"
        )
    params = _net_params_from(cfg)
    raw, x, U = generate_network(params, mix_seed(cfg["seed"], "network"))
    net = row_normalize(raw)
    design = np.column_stack([np.ones(net.n), x])
    theta = ParamVector(
        (cfg["beta0"], cfg["beta_x"]), cfg["gamma"], cfg["rho"], cfg["sigma2"]
    )
    y = draw_limiting_outcome(
        net, U, design, theta, cfg["family"], mix_seed(cfg["seed"], "outcome")
    )
    manifest = _write_manifest(args.out, "simulate", cfg)
    ids = _write_network_files(args.out, net, x, U, manifest)
    write_csv_rows(
        os.path.join(args.out, "outcome.csv"),
        ("id", "y"),
        [{"id": ids[i], "y": float(y[i])} for i in range(net.n)],
        header_comment=(
            f"config_hash={manifest['config_hash']} "
            f"master_seed={manifest['master_seed']}"
        ),
    )
    return 0


# --- validate-limit ------------------------------------------------------


def cmd_validate_limit(args):
    cfg = _resolve(args, "validate-limit")
    _ensure_outdir(args.out)
    if len(cfg["gamma"]) != cfg["latent_dim"]:
        raise ValidationError(
            f"gamma has {len(cfg['gamma'])} entries for latent_dim={cfg['latent_dim']}"
        )
    params = _net_params_from(cfg)
    raw, x, U = generate_network(params, mix_seed(cfg["seed"], "network"))
    net = row_normalize(raw)
    design = np.column_stack([np.ones(net.n), x])
    theta = ParamVector(
        (cfg["beta0"], cfg["beta_x"]), cfg["gamma"], cfg["rho"], cfg["sigma2"]
    )
    fwd = ForwardSimConfig(
        T=cfg["T"],
        sigma_alpha=cfg["sigma_alpha"],
        sigma_eps0=cfg["sigma_eps0"],
        decay=cfg["decay"],
        seed=cfg["seed"],
    )
    report = validate_limit(
        net, U, design, theta, fwd, cfg["n_paths"], family=cfg["family"]
    )
    manifest = _write_manifest(args.out, "validate-limit", cfg)
    payload = {
        "format_version": FORMAT_VERSION,
        "passed": report.passed,
        "mean_pass": report.mean_pass,
        "cov_pass": report.cov_pass,
        "max_mean_z": report.max_mean_z,
        "max_cov_z": report.max_cov_z,
        "frac_cov_within": report.frac_cov_within,
        "n_paths": report.n_paths,
        "config_hash": manifest["config_hash"],
        "master_seed": manifest["master_seed"],
    }
    write_json(os.path.join(args.out, "report.json"), payload)
    write_csv_rows(
        os.path.join(args.out, "report.csv"),
        ("passed", "mean_pass", "cov_pass", "max_mean_z", "max_cov_z",
         "frac_cov_within", "n_paths"),
        [{k: payload[k] for k in (
            "passed", "mean_pass", "cov_pass", "max_mean_z", "max_cov_z",
            "frac_cov_within", "n_paths")}],
        header_comment=(
            f"config_hash={manifest['config_hash']} "
            f"master_seed={manifest['master_seed']}"
        ),
    )
    print(f"limit check {'PASS' if report.passed else 'FAIL'}: "
          f"max mean z={report.max_mean_z:.2f}, "
          f"cov within 4 SE: {report.frac_cov_within:.1%}")
    return 0


# --- scenarios -----------------------------------------------------------


def _scenario_cells(cfg, full_grid):
    if full_grid:
        warnings.warn(_FULL_GRID_WARNING, stacklevel=2)
        print(f"warning: {_FULL_GRID_WARNING}", file=sys.stderr)
        families = (HANE, HAND)
        rhos = tuple(round(0.1 * k, 1) for k in range(7))
        betas = (0.0, 0.5, 1.0)
        gammas = ((0.03, 0.05, -0.1), (0.06, 0.1, -0.2))
        n_reps, pool, n = 200, 200, 159
    else:
        families = (cfg["family"],)
        rhos = cfg["rho_grid"]
        betas = (cfg["beta_x"],)
        gammas = (cfg["gamma"],)
        n_reps, pool, n = cfg["n_reps"], cfg["pool_size"], cfg["n"]
    base_params = _net_params_from({**cfg, "n": n})
    cells = []
    for family in families:
        for gamma in gammas:
            for beta_x in betas:
                for rho in rhos:
                    cells.append(
                        ScenarioConfig(
                            family=family,
                            rho=rho,
                            beta=(cfg["beta0"], beta_x),
                            gamma=tuple(gamma),
                            sigma2=cfg["sigma2"],
                            n_reps=n_reps,
                            network_source=cfg["network_source"],
                            pool_size=pool,
                            net_params=base_params,
                            seed=cfg["seed"],
                        )
                    )
    return cells


def cmd_scenarios(args):
    cfg = _resolve(args, "scenarios")
    _ensure_outdir(args.out)
    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    if not methods:
        raise ValidationError("methods list is empty")
    cells = _scenario_cells(cfg, getattr(args, "full_grid", False))
    manifest = _write_manifest(args.out, "scenarios", cfg)
    all_rows = []
    cell_index = {}
    for cell in cells:
        table = run_scenario(
            cell,
            methods,
            latent_source=cfg["latent_source"],
            jobs=cfg["jobs"],
            priors=_priors_from(cfg),
            fit_cfg=_fit_config_from(cfg, cfg["seed"]),
            oracle_tau=cfg["oracle_tau"],
            oracle_draws=cfg["oracle_draws"],
        )
        all_rows.extend(table.rows)
        cell_index[cell.scenario_id()] = json.loads(cell.canonical())
    from .simulation import METRICS_COLUMNS

    write_csv_rows(
        os.path.join(args.out, "metrics.csv"),
        METRICS_COLUMNS,
        all_rows,
        header_comment=(
            f"config_hash={manifest['config_hash']} "
            f"master_seed={manifest['master_seed']}"
        ),
    )
    write_json(os.path.join(args.out, "scenarios.json"), cell_index)
    print(f"wrote {len(all_rows)} metric rows for {len(cells)} cells "
          f"to {os.path.join(args.out, 'metrics.csv')}")
    return 0


# --- sample-latent -------------------------------------------------------


def cmd_sample_latent(args):
    cfg = _resolve(args, "sample-latent")
    for key in ("network", "covariates"):
        if not cfg[key]:
            raise ValidationError(f"missing required input path: --{key}")
    _ensure_outdir(args.out)
    cov = read_covariates(cfg["covariates"], standardize=cfg["standardize"])
    net = read_edge_list(cfg["network"], cov.ids)
    raw, categorical = cov.raw_matrix()
    draws = _sample_latent(
        net,
        raw if raw.shape[1] else None,
        _sampler_config_from(cfg, cfg["seed"]),
        categorical=categorical,
    )
    manifest = _write_manifest(args.out, "sample-latent", cfg)
    out_path = os.path.join(args.out, "draws.csv")
    write_draws(out_path, draws)
    write_json(
        os.path.join(args.out, "sampler_diagnostics.json"),
        {
            "format_version": FORMAT_VERSION,
            "accept_rate_positions": draws.diagnostics["accept_rate_positions"],
            "accept_rate_coefficients": draws.diagnostics["accept_rate_coefficients"],
            "config_hash": manifest["config_hash"],
            "master_seed": manifest["master_seed"],
        },
    )
    print(f"wrote {draws.K} draws ({draws.n} x {draws.D}) to {out_path}")
    return 0


# --- parser --------------------------------------------------------------


def _add_common(sub, command):
    sub.add_argument("--config", help="flat key-value config file")
    sub.add_argument("--from-manifest", dest="from_manifest",
                     help="re-run from a manifest.json")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--print-config", action="store_true",
                     help="print all keys with defaults and exit")
    sub.add_argument("--seed", type=int, default=None, help="master seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hanam",
        description=(
            "Homophily-adjusted network autocorrelation models: fitting, "
            "simulation, and scenario studies."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit a model to network/covariate/outcome files")
    _add_common(fit, "fit")
    fit.add_argument("--network", help="edge list CSV (src,dst[,weight])")
    fit.add_argument("--covariates", help="node covariates CSV (id,...)")
    fit.add_argument("--outcome", help="outcome CSV (id,y)")
    fit.add_argument("--family", choices=FAMILIES, default=None)
    fit.add_argument("--draws", default=None,
                     help="latent draws file (default: run the built-in sampler)")
    fit.add_argument("--mle", action="store_const", const=True, default=None,
                     help="maximum likelihood instead of MAP (NAM families)")
    fit.add_argument("--standardize", action="store_const", const=True,
                     default=None, help="standardize continuous covariates")
    fit.add_argument("--level", type=float, default=None)
    fit.set_defaults(func=cmd_fit)

    sim = subs.add_parser("simulate", help="generate one synthetic dataset")
    _add_common(sim, "simulate")
    sim.add_argument("--family", choices=(HANE, HAND), default=None)
    sim.add_argument("--rho", type=float, default=None)
    sim.add_argument("--n", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    val = subs.add_parser("validate-limit",
                          help="check the limiting law by forward simulation")
    _add_common(val, "validate-limit")
    val.add_argument("--rho", type=float, default=None)
    val.add_argument("--T", type=int, default=None)
    val.add_argument("--decay", type=float, default=None)
    val.add_argument("--n-paths", dest="n_paths", type=int, default=None)
    val.add_argument("--family", choices=(HANE, HAND), default=None)
    val.set_defaults(func=cmd_validate_limit)

    sce = subs.add_parser("scenarios", help="run a grid of simulation cells")
    _add_common(sce, "scenarios")
    sce.add_argument("--jobs", type=int, default=None,
                     help="parallel worker processes")
    sce.add_argument("--full-grid", action="store_true",
                     help="run the complete 16,800-fit study grid (slow)")
    sce.add_argument("--methods", default=None)
    sce.add_argument("--n-reps", dest="n_reps", type=int, default=None)
    sce.set_defaults(func=cmd_scenarios)

    lat = subs.add_parser("sample-latent",
                          help="draw latent positions for a network")
    _add_common(lat, "sample-latent")
    lat.add_argument("--network", help="edge list CSV (src,dst[,weight])")
    lat.add_argument("--covariates", help="node covariates CSV (id,...)")
    lat.add_argument("--n-draws", dest="n_draws", type=int, default=None)
    lat.set_defaults(func=cmd_sample_latent)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "print_config", False):
        print_config(args.command, sys.stdout)
        return 0
    try:
        return args.func(args) or 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except HanamError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
