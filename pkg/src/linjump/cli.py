"""Command-line interface: reproducible runs with machine-readable outputs.

Every command resolves its configuration from (in increasing precedence)
built-in defaults, a JSON config file (--config), environment variables
prefixed LINJUMP_, and explicit flags, then echoes the fully resolved
configuration as JSON on stdout so a run can be reproduced by feeding the
echo back through --config.  Exit codes: 0 success, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .bounds import BoundsConfig, decay_fit, estimate_M, lemma_bounds_check, perturbed_pair
from .density import score_vector, log_transition_density
from .lan import (
    LanConfig,
    decompose_terms,
    limit_checks,
    log_likelihood_ratio,
    run_lan_experiment,
)
from .mle import OptimizerConfig, fit_mle, init_moments
from .model import GridScheme, ModelParams, Perturbation, SamplingGrid, fisher_matrix
from .simulate import SeedSpec, read_path_csv, simulate_path, write_path_csv

SCHEMA_VERSION = 1
ENV_PREFIX = "LINJUMP_"


class ConfigError(Exception):
    pass


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# field spec: name -> (type_tag, default, required, help); default None + not
# required means "optional, absent unless provided"
_COMMON = {
    "seed": ("int", None, True, "root seed for all randomness"),
    "jobs": ("int", 1, False, "worker threads (results are independent of this)"),
    "out": ("str", None, False, "output file path"),
}

_PARAMS = {
    "theta": ("float", None, True, "drift per unit time"),
    "sigma": ("float", None, True, "diffusion scale (> 0)"),
    "lambda": ("float", None, True, "jump intensity per unit time (> 0)"),
}

_Z = {
    "u": ("float", None, True, "drift perturbation"),
    "v": ("float", None, True, "diffusion perturbation"),
    "w": ("float", None, True, "intensity perturbation"),
}

_FIELDS: dict[str, dict] = {
    "simulate": {
        **_PARAMS,
        "n": ("int", None, True, "number of increments"),
        "delta": ("float", None, True, "step size (0 < delta <= 1)"),
        "x0": ("float", 0.0, False, "initial value"),
        "replicates": ("int", 1, False, "number of independent paths"),
        **_COMMON,
        "out": ("str", None, True, "CSV output path"),
    },
    "density": {
        **_PARAMS,
        "delta": ("float", None, True, "step size"),
        "x": ("float", 0.0, False, "starting state"),
        "y": ("float", None, False, "ending state (alternative to dx)"),
        "dx": ("float", None, False, "observed increment y - x"),
        "format": ("str", "json", False, "output format: json or csv"),
        "out": ("str", None, False, "optional output path"),
    },
    "score": {
        **_PARAMS,
        "delta": ("float", None, True, "step size"),
        "dx": ("float", None, True, "observed increment"),
        "format": ("str", "json", False, "output format: json or csv"),
        "out": ("str", None, False, "optional output path"),
    },
    "fisher": {
        "sigma": ("float", None, True, "diffusion scale (> 0)"),
        "lambda": ("float", None, True, "jump intensity (> 0)"),
        "format": ("str", "json", False, "output format: json or csv"),
        "out": ("str", None, False, "optional output path"),
    },
    "lan": {
        **_PARAMS,
        **_Z,
        "c": ("float", 1.0, False, "scheme constant: delta = c * n**-beta"),
        "beta": ("float", 0.4, False, "scheme exponent in (0, 1)"),
        "n_list": ("int_list", None, True, "comma-separated n values"),
        "replicates": ("int", 2000, False, "Monte Carlo replicates per n"),
        "quadrature_order": ("int", 16, False, "Gauss-Legendre order"),
        "decomp_subsample": ("int", 10, False, "paths checked for the exact expansion"),
        "lr_out": ("str", None, False, "optional CSV of per-replicate ratios"),
        **_COMMON,
        "out": ("str", None, True, "JSON report path"),
    },
    "limits": {
        **_PARAMS,
        **_Z,
        "c": ("float", 1.0, False, "scheme constant"),
        "beta": ("float", 0.4, False, "scheme exponent"),
        "n_list": ("int_list", None, True, "comma-separated n values"),
        "replicates": ("int", 128, False, "path replicates for the vanishing-sum check"),
        "quadrature_order": ("int", 16, False, "Gauss-Legendre order"),
        "inner_draws": ("int", 512, False, "inner Monte Carlo draws per step"),
        "inner_replicates": ("int", 4, False, "independent repeats of the inner sums"),
        **_COMMON,
        "out": ("str", None, True, "JSON report path"),
    },
    "decompose": {
        **_PARAMS,
        **_Z,
        "n": ("int", None, True, "number of increments"),
        "delta": ("float", None, True, "step size"),
        "quadrature_order": ("int", 16, False, "Gauss-Legendre order"),
        **_COMMON,
        "out": ("str", None, False, "optional JSON output path"),
    },
    "bounds": {
        "theta": ("float", 1.0, False, "drift per unit time"),
        "sigma": ("float", 1.0, False, "diffusion scale"),
        "lambda": ("float", 1.0, False, "jump intensity"),
        "alpha": ("float", 0.25, False, "Brownian threshold exponent in (0, 0.5)"),
        "p": ("int", 0, False, "moment order of the mismatch sums"),
        "deltas": ("float_list", None, True, "comma-separated step sizes"),
        "draws": ("int", 100000, False, "Monte Carlo draws per delta"),
        "j_max": ("int", 8, False, "largest jump count evaluated"),
        "big_c": ("float", 1.0, False, "perturbation budget C"),
        "n": ("int", None, False, "observations count (default ceil(delta**-1.5))"),
        "summary_out": ("str", None, False, "optional JSON summary path"),
        **_COMMON,
        "out": ("str", None, True, "CSV output path"),
    },
    "mle": {
        "input": ("str", None, True, "CSV of increments (see README for format)"),
        "delta": ("float", None, False, "step size (overrides the CSV header)"),
        "path_csv": ("bool", False, False, "treat input as a simulate path CSV"),
        "grad_tolerance": ("float", 1e-8, False, "rate-normalized gradient tolerance"),
        "max_iterations": ("int", 200, False, "quasi-Newton iteration cap"),
        "out": ("str", None, False, "optional JSON output path"),
    },
}

# commands whose outputs involve randomness and therefore require a seed
_STOCHASTIC = {"simulate", "lan", "limits", "decompose", "bounds"}


def _coerce(tag: str, raw, key: str):
    try:
        if tag == "int":
            if isinstance(raw, bool):
                raise ValueError
            return int(raw)
        if tag == "float":
            if isinstance(raw, bool):
                raise ValueError
            return float(raw)
        if tag == "str":
            return str(raw)
        if tag == "bool":
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("1", "true", "yes"):
                return True
            if str(raw).lower() in ("0", "false", "no"):
                return False
            raise ValueError
        if tag == "int_list":
            if isinstance(raw, (list, tuple)):
                return [int(v) for v in raw]
            return [int(v) for v in str(raw).split(",") if v != ""]
        if tag == "float_list":
            if isinstance(raw, (list, tuple)):
                return [float(v) for v in raw]
            return [float(v) for v in str(raw).split(",") if v != ""]
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key!r}: {raw!r} (expected {tag})")
    raise ConfigError(f"unknown field type {tag!r} for {key!r}")


def _load_config_file(path: str, command: str, fields: dict) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}")
    if isinstance(data, dict) and "config" in data:
        if data.get("command") not in (None, command):
            raise ConfigError(
                f"config file is for command {data.get('command')!r}, not {command!r}"
            )
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    return data


def _resolve(command: str, args: argparse.Namespace) -> dict:
    fields = _FIELDS[command]
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config, command, fields)
    resolved = {}
    for key, (tag, default, required, _help) in fields.items():
        attr = key.replace("-", "_")
        flag_val = getattr(args, attr, None)
        env_val = os.environ.get(ENV_PREFIX + key.upper().replace("-", "_"))
        if flag_val is not None:
            value = flag_val if tag not in ("int_list", "float_list") else _coerce(tag, flag_val, key)
        elif env_val is not None:
            value = _coerce(tag, env_val, key)
        elif key in file_cfg:
            value = _coerce(tag, file_cfg[key], key)
        elif default is not None:
            value = default
        elif required:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        else:
            value = None
        resolved[key] = value
    return resolved


def _echo(command: str, config: dict, result: dict | None = None) -> None:
    payload = {"schema_version": SCHEMA_VERSION, "command": command, "config": config}
    if result is not None:
        payload["result"] = result
    print(json.dumps(payload, indent=2, default=_json_default))


def _write_json(path: str | None, payload: dict) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")


def _check_format(cfg: dict) -> str:
    fmt = cfg.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ConfigError(f"format must be 'json' or 'csv', got {fmt!r}")
    return fmt


def _write_result(cfg: dict, columns: dict[str, object]) -> None:
    """Write a small result table as JSON (default) or one-row CSV."""
    fmt = _check_format(cfg)
    if cfg["out"] is None:
        return
    if fmt == "json":
        _write_json(cfg["out"], {"schema_version": SCHEMA_VERSION, **columns})
        return
    with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
        if len(columns) == 1 and isinstance(next(iter(columns.values())), list):
            for row in next(iter(columns.values())):
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        else:
            fh.write(",".join(columns) + "\n")
            fh.write(",".join(_fmt(v) for v in columns.values()) + "\n")


def _model_params(cfg: dict) -> ModelParams:
    return ModelParams(cfg["theta"], cfg["sigma"], cfg["lambda"])


def _cmd_simulate(cfg: dict) -> None:
    replicates = cfg["replicates"]
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    params = _model_params(cfg)
    grid = SamplingGrid(n=cfg["n"], delta=cfg["delta"], x0=cfg["x0"])
    _echo("simulate", cfg)
    with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
        if replicates == 1:
            write_path_csv(simulate_path(params, grid, SeedSpec(cfg["seed"], 0)), fh)
        else:
            fh.write("replicate,k,t,x,b_inc,n_inc\n")
            for rep in range(replicates):
                path = simulate_path(params, grid, SeedSpec(cfg["seed"], rep))
                fh.write(f"{rep},0,{0.0:.17g},{path.x_obs[0]:.17g},,\n")
                for k in range(1, grid.n + 1):
                    fh.write(
                        f"{rep},{k},{k * grid.delta:.17g},{path.x_obs[k]:.17g},"
                        f"{path.b_inc[k - 1]:.17g},{path.n_inc[k - 1]}\n"
                    )


def _cmd_density(cfg: dict) -> None:
    _check_format(cfg)
    params = _model_params(cfg)
    if (cfg["y"] is None) == (cfg["dx"] is None):
        raise ConfigError("provide exactly one of --y or --dx")
    dx = cfg["dx"] if cfg["dx"] is not None else cfg["y"] - cfg["x"]
    value = log_transition_density(params, cfg["delta"], 0.0, dx)
    result = {"log_density": value}
    _echo("density", cfg, result)
    _write_result(cfg, result)


def _cmd_score(cfg: dict) -> None:
    _check_format(cfg)
    params = _model_params(cfg)
    vec = score_vector(params, cfg["delta"], cfg["dx"])
    result = {"d_theta": vec.d_theta, "d_sigma": vec.d_sigma, "d_lambda": vec.d_lambda}
    _echo("score", cfg, result)
    _write_result(cfg, result)


def _cmd_fisher(cfg: dict) -> None:
    _check_format(cfg)
    matrix = fisher_matrix(cfg["sigma"], cfg["lambda"])
    result = {"matrix": matrix.tolist()}
    _echo("fisher", cfg, result)
    _write_result(cfg, result)


def _lan_config(cfg: dict) -> LanConfig:
    return LanConfig(
        params=_model_params(cfg),
        z=Perturbation(cfg["u"], cfg["v"], cfg["w"]),
        scheme=GridScheme(cfg["c"], cfg["beta"]),
        n_list=tuple(cfg["n_list"]),
        replicates=cfg["replicates"],
        root_seed=cfg["seed"],
        quadrature_order=cfg["quadrature_order"],
        decomp_subsample=cfg.get("decomp_subsample", 10),
        inner_draws=cfg.get("inner_draws", 512),
        inner_replicates=cfg.get("inner_replicates", 4),
        jobs=cfg["jobs"],
    )


def _cmd_lan(cfg: dict) -> None:
    config = _lan_config(cfg)
    _echo("lan", cfg)
    report = run_lan_experiment(config)
    _write_json(cfg["out"], report.to_dict())
    if cfg["lr_out"]:
        with open(cfg["lr_out"], "w", encoding="utf-8", newline="") as fh:
            fh.write("n,replicate,lr\n")
            for n in config.n_list:
                for rep, lr in enumerate(report.lr_values[n]):
                    fh.write(f"{n},{rep},{_fmt(lr)}\n")


def _cmd_limits(cfg: dict) -> None:
    config = _lan_config(cfg)
    _echo("limits", cfg)
    report = limit_checks(config)
    _write_json(cfg["out"], report.to_dict())


def _cmd_decompose(cfg: dict) -> None:
    params = _model_params(cfg)
    z = Perturbation(cfg["u"], cfg["v"], cfg["w"])
    grid = SamplingGrid(n=cfg["n"], delta=cfg["delta"])
    _echo("decompose", cfg)
    path = simulate_path(params, grid, SeedSpec(cfg["seed"], 0))
    dec = decompose_terms(params, z, path, cfg["quadrature_order"])
    lr = log_likelihood_ratio(params, z, path)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "lr_direct": lr,
        "lr_from_terms": dec.lr_from_terms,
        "residual": abs(lr - dec.lr_from_terms),
        "totals": {
            "xi": dec.xi_total,
            "h": dec.h_total,
            "eta": dec.eta_total,
            "m_term": dec.m_total,
            "beta": dec.beta_total,
            "r": dec.r_total,
        },
    }
    _write_json(cfg["out"], payload)
    if cfg["out"] is None:
        print(json.dumps(payload, indent=2, default=_json_default))


def _cmd_bounds(cfg: dict) -> None:
    params = _model_params({**cfg, "lambda": cfg["lambda"]})
    deltas = cfg["deltas"]
    if len(deltas) == 0:
        raise ConfigError("deltas must not be empty")
    _echo("bounds", cfg)
    estimates = []
    checks = []
    for d in deltas:
        n = cfg["n"] if cfg["n"] is not None else max(100, int(math.ceil(d**-1.5)))
        bar = perturbed_pair(params, n, d, cfg["big_c"])
        config = BoundsConfig(
            params=params,
            bar_params=bar,
            alpha=cfg["alpha"],
            p=cfg["p"],
            j_max=cfg["j_max"],
            n=n,
            delta=d,
            replicates=cfg["draws"],
            root_seed=cfg["seed"],
            C=cfg["big_c"],
        )
        estimates.append(estimate_M(config))
        checks.append(lemma_bounds_check(config))
    fit = decay_fit(estimates, cfg["alpha"])
    with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
        fh.write("delta,alpha,p,m1_hat,m1_se,m2_hat,m2_se,slope\n")
        for est in estimates:
            fh.write(
                f"{_fmt(est.delta)},{_fmt(cfg['alpha'])},{cfg['p']},"
                f"{_fmt(est.m1_hat)},{_fmt(est.m1_se)},"
                f"{_fmt(est.m2_hat)},{_fmt(est.m2_se)},{_fmt(fit.slope)}\n"
            )
    summary = {
        "schema_version": SCHEMA_VERSION,
        "decay": {
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "lemma_consistent": fit.lemma_consistent,
        },
        "inequality_checks": [
            {
                "delta": chk.delta,
                "draws": chk.draws,
                "checked": chk.checked,
                "violations": chk.violations,
                "pass_rate": 1.0 - chk.violations / max(1, chk.checked),
                "delta_strict": chk.delta_strict,
            }
            for chk in checks
        ],
    }
    _write_json(cfg["summary_out"], summary)
    if cfg["summary_out"] is None:
        print(json.dumps(summary, indent=2, default=_json_default))


def _read_increments(cfg: dict) -> tuple[np.ndarray, float]:
    path = cfg["input"]
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot open input {path!r}: {exc}")
    with fh:
        if cfg["path_csv"]:
            xs, _, _ = read_path_csv(fh)
            dx = np.diff(xs)
            delta = cfg["delta"]
            if delta is None:
                raise ConfigError("--delta is required with --path-csv")
            return dx, delta
        header_delta = None
        values = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "delta=" in line:
                    header_delta = float(line.split("delta=")[1])
                continue
            if line == "increment":
                continue
            values.append(float(line))
        delta = cfg["delta"] if cfg["delta"] is not None else header_delta
        if delta is None:
            raise ConfigError("no --delta given and no '# delta=...' header in the CSV")
        return np.array(values), delta


def _cmd_mle(cfg: dict) -> None:
    dx, delta = _read_increments(cfg)
    _echo("mle", {**cfg, "delta": delta})
    config = OptimizerConfig(
        grad_tolerance=cfg["grad_tolerance"], max_iterations=cfg["max_iterations"]
    )
    result = fit_mle(dx, delta, init_moments(dx, delta), config)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "theta": result.params_hat.theta,
        "sigma": result.params_hat.sigma,
        "lambda": result.params_hat.lambda_,
        "stderr": result.stderr.tolist(),
        "grad_norm": result.grad_norm_at_opt,
        "iterations": result.iterations,
        "converged": result.converged,
        "n_increments": int(dx.size),
        "delta": delta,
    }
    _write_json(cfg["out"], payload)
    if cfg["out"] is None:
        print(json.dumps(payload, indent=2, default=_json_default))


_RUNNERS = {
    "simulate": _cmd_simulate,
    "density": _cmd_density,
    "score": _cmd_score,
    "fisher": _cmd_fisher,
    "lan": _cmd_lan,
    "limits": _cmd_limits,
    "decompose": _cmd_decompose,
    "bounds": _cmd_bounds,
    "mle": _cmd_mle,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linjump",
        description="Linear jump-diffusion toolkit: simulation, densities, "
        "likelihood-ratio experiments, bound checks, and MLE.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, fields in _FIELDS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        for key, (tag, default, required, help_text) in fields.items():
            flag = "--" + key.replace("_", "-")
            kwargs = {"default": None, "help": help_text, "dest": key.replace("-", "_")}
            if tag == "int":
                kwargs["type"] = int
            elif tag == "float":
                kwargs["type"] = float
            elif tag == "bool":
                kwargs["action"] = "store_const"
                kwargs["const"] = True
                kwargs.pop("type", None)
            else:
                kwargs["type"] = str
            p.add_argument(flag, **kwargs)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        cfg = _resolve(command, args)
        if command in _STOCHASTIC and cfg.get("seed") is None:
            raise ConfigError("a --seed is mandatory for stochastic commands")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        runner = _RUNNERS[command]
    except KeyError:  # pragma: no cover
        print(f"unknown command {command!r}", file=sys.stderr)
        return 2
    try:
        runner(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # domain violations surfaced while building model objects
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
