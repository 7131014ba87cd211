"""Experiment configuration: JSON schema, validation, canonical hashing.

Top-level keys (all optional unless a subcommand needs them):

    seed     int            root seed; --seed overrides
    out_dir  str            output directory; --out overrides
    dataset  {name: 'toy2d'|'decoy', seed, n | n_train/n_val/n_test, data_dir}
    model    {hidden: [..]}
    training {method, lam, beta, eps_max, ramp_fraction, lr, batch_size,
              epochs, clamp: [lo, hi] | null,
              perturb: {sigma, k_samples, kappa, steps, step_size, alpha,
                        random_start}}
    eval     {rcs, rcs_sigma, saliency, grid_range: [[x1lo,x1hi],[x2lo,x2hi]],
              grid_resolution}
    gp_verify{thm1_trials, thm2_trials, psd_trials, seed}
    sweep    [{name, training: {overrides}}, ...]

Unknown keys anywhere are rejected with the offending path, so typos
fail loudly instead of silently running a default.
"""

from __future__ import annotations

import hashlib
import json

from .perturb import PerturbConfig
from .train import TrainingConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the bad field."""


_SCHEMA = {
    "seed": int,
    "out_dir": str,
    "dataset": {
        "name": str,
        "seed": int,
        "n": int,
        "n_train": int,
        "n_val": int,
        "n_test": int,
        "data_dir": str,
    },
    "model": {"hidden": list},
    "training": {
        "method": str,
        "lam": float,
        "beta": float,
        "eps_max": float,
        "ramp_fraction": float,
        "lr": float,
        "batch_size": int,
        "epochs": int,
        "clamp": (list, type(None)),
        "perturb": {
            "sigma": float,
            "k_samples": int,
            "kappa": float,
            "steps": int,
            "step_size": (float, type(None)),
            "alpha": float,
            "random_start": bool,
        },
    },
    "eval": {
        "rcs": bool,
        "rcs_sigma": float,
        "saliency": bool,
        "grid_range": list,
        "grid_resolution": int,
    },
    "gp_verify": {"thm1_trials": int, "thm2_trials": int, "psd_trials": int, "seed": int},
    "sweep": list,
}


def _check_keys(block: dict, schema: dict, path: str) -> None:
    for key, value in block.items():
        if key not in schema:
            raise ConfigError(f"{path}{key}: unknown key")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key}: expected an object")
            _check_keys(value, expected, f"{path}{key}.")
        elif expected is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{path}{key}: expected a number, got {value!r}")
        elif expected is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{path}{key}: expected an integer, got {value!r}")
        elif isinstance(expected, tuple):
            if not isinstance(value, expected):
                raise ConfigError(f"{path}{key}: wrong type {type(value).__name__}")
        elif not isinstance(value, expected):
            raise ConfigError(f"{path}{key}: expected {expected.__name__}, got {type(value).__name__}")


def validate(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")
    _check_keys(raw, _SCHEMA, "")
    for i, entry in enumerate(raw.get("sweep", [])):
        if not isinstance(entry, dict):
            raise ConfigError(f"sweep[{i}]: expected an object")
        for key in entry:
            if key not in ("name", "training"):
                raise ConfigError(f"sweep[{i}].{key}: unknown key")
        if "training" in entry:
            _check_keys(entry["training"], _SCHEMA["training"], f"sweep[{i}].training.")
    ds = raw.get("dataset", {})
    if "name" in ds and ds["name"] not in ("toy2d", "decoy"):
        raise ConfigError(f"dataset.name: unknown dataset {ds['name']!r}")
    return raw


def load(path) -> dict:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from err
    return validate(raw)


def config_hash(cfg: dict) -> str:
    """Stable short hash of the canonical JSON form."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def training_config(cfg: dict, seed: int) -> TrainingConfig:
    block = dict(cfg.get("training", {}))
    pblock = dict(block.pop("perturb", {}))
    clamp = block.pop("clamp", None)
    method = block.get("method", "erm")
    if method in ("avg-ex",):
        pblock.setdefault("method", "avg")
    perturb = PerturbConfig(**pblock)
    return TrainingConfig(
        perturb=perturb,
        clamp=tuple(clamp) if clamp is not None else None,
        seed=seed,
        **block,
    )
