"""Flat key-value run configuration for the CLI.

Config files contain ``key = value`` lines (``#`` comments, blank lines
ignored). Every key is optional and has a documented default; the
resolution order is command-line flag > HANAM_SEED environment variable
(seed only) > config file > default. ``--print-config`` on any
subcommand prints the keys, defaults, and help text.
"""

import hashlib
import json
import os
from dataclasses import dataclass

from .exceptions import ValidationError

__all__ = ["ConfigKey", "COMMAND_KEYS", "load_config_file", "resolve_config",
           "config_hash", "print_config"]


@dataclass(frozen=True)
class ConfigKey:
    default: object
    kind: str  # int | float | bool | str | floats | maybe_float
    help: str


_PRIOR_KEYS = {
    "prior_sigma_beta": ConfigKey(2.25, "float", "prior sd of each beta coefficient"),
    "prior_sigma_gamma": ConfigKey(2.25, "float", "prior sd of each gamma coefficient"),
    "prior_mu_rho": ConfigKey(0.36, "float", "truncated-normal prior mean of rho"),
    "prior_sigma_rho": ConfigKey(0.7, "float", "truncated-normal prior sd of rho"),
    "prior_a": ConfigKey(2.0, "float", "inverse-gamma shape parameter (a in IG(a/2, b/2))"),
    "prior_b": ConfigKey(2.0, "float", "inverse-gamma scale parameter (b in IG(a/2, b/2))"),
}

_FIT_KEYS = {
    "rho_min": ConfigKey(-0.999, "float", "lower box bound for rho"),
    "rho_max": ConfigKey(0.999, "float", "upper box bound for rho"),
    "max_iters": ConfigKey(500, "int", "optimizer iteration cap"),
    "grad_tol": ConfigKey(1e-6, "float", "projected-gradient stopping tolerance"),
    "history_size": ConfigKey(10, "int", "quasi-Newton memory"),
    "hessian_step": ConfigKey(1e-5, "float", "finite-difference step for the Hessian"),
    "multistart": ConfigKey(2, "int", "extra jittered optimizer restarts"),
    "level": ConfigKey(0.95, "float", "credible/confidence interval level"),
}

_SAMPLER_KEYS = {
    "latent_dim": ConfigKey(2, "int", "latent space dimension D"),
    "burn_in": ConfigKey(500, "int", "sampler burn-in sweeps"),
    "thin": ConfigKey(5, "int", "keep every thin-th sweep"),
    "n_draws": ConfigKey(200, "int", "stored posterior draws"),
    "step_size": ConfigKey(0.3, "float", "random-walk proposal scale"),
    "prior_scale_positions": ConfigKey(2.0, "float", "prior sd of latent positions"),
    "prior_scale_coeffs": ConfigKey(5.0, "float", "prior sd of edge coefficients"),
}

_NET_KEYS = {
    "n": ConfigKey(159, "int", "number of nodes"),
    "clusters": ConfigKey(6, "int", "latent clusters in the generator"),
    "cluster_scale": ConfigKey(3.0, "float", "sd of cluster means"),
    "within_scale": ConfigKey(0.75, "float", "within-cluster position sd"),
    "edge_intercept": ConfigKey("auto", "maybe_float",
                                "edge intercept; 'auto' calibrates to target_degree"),
    "covariate_coef": ConfigKey(0.5, "float", "coefficient of |x_i - x_j| in the edge model"),
    "target_degree": ConfigKey(5.0, "float", "target mean out-degree for calibration"),
    "covariate_mean": ConfigKey(2.0, "float", "mean of the node covariate"),
    "covariate_sd": ConfigKey(1.0, "float", "sd of the node covariate"),
}

_THETA_KEYS = {
    "family": ConfigKey("HANE", "str", "outcome law: HANE or HAND style"),
    "rho": ConfigKey(0.3, "float", "influence coefficient"),
    "beta0": ConfigKey(0.5, "float", "intercept"),
    "beta_x": ConfigKey(0.5, "float", "covariate coefficient"),
    "gamma": ConfigKey((0.06, 0.1, -0.2), "floats", "latent feature coefficients"),
    "sigma2": ConfigKey(1.0, "float", "noise variance"),
}

COMMAND_KEYS = {
    "fit": {
        "seed": ConfigKey(0, "int", "master seed"),
        "family": ConfigKey("HANE", "str",
                            "HANE, HAND, NAM_EFFECTS, or NAM_DISTURBANCES"),
        "mle": ConfigKey(False, "bool", "fit the NAM by maximum likelihood"),
        "standardize": ConfigKey(False, "bool", "standardize continuous covariates"),
        "network": ConfigKey("", "str", "edge list CSV path"),
        "covariates": ConfigKey("", "str", "node covariates CSV path"),
        "outcome": ConfigKey("", "str", "outcome CSV path"),
        "draws": ConfigKey("", "str", "latent draws file (empty: use the sampler)"),
        **_PRIOR_KEYS,
        **_FIT_KEYS,
        **_SAMPLER_KEYS,
    },
    "simulate": {
        "seed": ConfigKey(0, "int", "master seed"),
        "latent_dim": ConfigKey(3, "int", "latent space dimension D"),
        **_NET_KEYS,
        **_THETA_KEYS,
    },
    "validate-limit": {
        "seed": ConfigKey(0, "int", "master seed"),
        "latent_dim": ConfigKey(3, "int", "latent space dimension D"),
        "T": ConfigKey(500, "int", "forward-simulation horizon"),
        "sigma_alpha": ConfigKey(1.0, "float", "persistent-noise scale"),
        "sigma_eps0": ConfigKey(1.0, "float", "initial injected-noise scale"),
        "decay": ConfigKey(0.97, "float",
                           "geometric decay of injected noise (1.0 = negative control)"),
        "n_paths": ConfigKey(2000, "int", "independent trajectories"),
        **{k: v for k, v in _NET_KEYS.items() if k != "n"},
        "n": ConfigKey(30, "int", "number of nodes"),
        **_THETA_KEYS,
    },
    "scenarios": {
        "seed": ConfigKey(0, "int", "master seed"),
        "latent_dim": ConfigKey(3, "int", "latent space dimension D"),
        "rho_grid": ConfigKey((0.0, 0.3, 0.6), "floats", "rho values of the grid"),
        "beta0": ConfigKey(0.5, "float", "intercept"),
        "beta_x": ConfigKey(0.5, "float", "covariate coefficient"),
        "gamma": ConfigKey((0.06, 0.1, -0.2), "floats", "latent feature coefficients"),
        "sigma2": ConfigKey(1.0, "float", "noise variance"),
        "family": ConfigKey("HANE", "str", "outcome law: HANE or HAND style"),
        "n_reps": ConfigKey(50, "int", "replicates per cell"),
        "pool_size": ConfigKey(20, "int", "size of the reused network pool"),
        "network_source": ConfigKey("fixed_pool", "str",
                                    "'fixed_pool' or 'regenerate'"),
        "methods": ConfigKey("HANE,NAM_BAYES", "str",
                             "comma list of HANE, HAND, NAM_BAYES, NAM_MLE"),
        "latent_source": ConfigKey("oracle_perturbed", "str",
                                   "sampler, oracle_perturbed, or file"),
        "oracle_tau": ConfigKey(0.1, "float",
                                "noise sd of the oracle-perturbed latent draws"),
        "oracle_draws": ConfigKey(100, "int", "draw count for the oracle source"),
        "jobs": ConfigKey(1, "int", "parallel worker processes"),
        **{k: v for k, v in _NET_KEYS.items() if k != "n"},
        "n": ConfigKey(150, "int", "number of nodes"),
        **_PRIOR_KEYS,
        **_FIT_KEYS,
    },
    "sample-latent": {
        "seed": ConfigKey(0, "int", "master seed"),
        "network": ConfigKey("", "str", "edge list CSV path"),
        "covariates": ConfigKey("", "str", "node covariates CSV path"),
        "standardize": ConfigKey(False, "bool", "standardize continuous covariates"),
        **_SAMPLER_KEYS,
    },
}


def _parse_value(key, spec, raw):
    raw = raw.strip()
    try:
        if spec.kind == "int":
            return int(raw)
        if spec.kind == "float":
            return float(raw)
        if spec.kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if spec.kind == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip() != "")
        if spec.kind == "maybe_float":
            return "auto" if raw == "auto" else float(raw)
        return raw
    except ValueError:
        raise ValidationError(
            f"bad value for {key}: {raw!r} (expected {spec.kind})"
        ) from None


def load_config_file(path, command):
    """Parse a flat config file; unknown keys are rejected."""
    keys = COMMAND_KEYS[command]
    values = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    for lineno, ln in enumerate(lines, start=1):
        stripped = ln.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(
                f"expected 'key = value', got {ln!r}", path=path, line=lineno
            )
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in keys:
            raise ValidationError(
                f"unknown key {key!r} for command {command!r}",
                path=path,
                line=lineno,
            )
        values[key] = _parse_value(key, keys[key], raw)
    return values


def resolve_config(command, file_values=None, overrides=None):
    """Merge defaults, config-file values, the environment, and flags."""
    keys = COMMAND_KEYS[command]
    resolved = {k: spec.default for k, spec in keys.items()}
    if file_values:
        resolved.update(file_values)
    env_seed = os.environ.get("HANAM_SEED")
    if env_seed is not None and "seed" in keys:
        try:
            resolved["seed"] = int(env_seed)
        except ValueError:
            raise ValidationError(
                f"HANAM_SEED must be an integer, got {env_seed!r}"
            ) from None
    if overrides:
        for k, v in overrides.items():
            if v is None:
                continue
            if k not in keys:
                raise ValidationError(f"unknown config key {k!r}")
            resolved[k] = v
    return resolved


def config_hash(resolved):
    """Stable short hash of a resolved configuration."""
    canon = json.dumps(resolved, sort_keys=True, default=list)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def print_config(command, stream):
    keys = COMMAND_KEYS[command]
    stream.write(f"# defaults for '{command}' (key = value  # help)\n")
    for key, spec in keys.items():
        default = spec.default
        if isinstance(default, tuple):
            default = ",".join(repr(v) for v in default)
        stream.write(f"{key} = {default}  # {spec.help}\n")
