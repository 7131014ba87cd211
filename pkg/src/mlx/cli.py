"""Command-line entry point.

    mlx gen-data      --config c.json [--out DIR] [--seed N]
    mlx train         --config c.json [--out DIR] [--seed N]
    mlx eval          --config c.json [--out DIR] [--seed N]
    mlx boundary-dump --config c.json [--out DIR] [--seed N]
    mlx gp-verify     --config c.json [--out DIR] [--seed N]
    mlx sweep         --config c.json [--out DIR] [--seed N]

Dataset caches live under $MLX_DATA_DIR when set, otherwise under the
output directory; their file names embed the dataset-block hash, so
train/eval locate them without extra bookkeeping. Every output file
records the config hash and root seed (JSON ``meta`` object, or a
leading ``#`` line in CSVs); reruns with identical config and seed
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import config as cfgmod
from . import data, metrics, rng, theory
from .model import MlpSpec, load_checkpoint, save_checkpoint
from .train import train as run_training


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header_meta: dict, columns: list[str], rows: list[dict]) -> None:
    lines = ["# " + " ".join(f"{k}={v}" for k, v in header_meta.items())]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_json(path, meta: dict, payload: dict) -> None:
    doc = {"meta": meta, **payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _root_seed(cfg: dict, args) -> int:
    return args.seed if args.seed is not None else int(cfg.get("seed", 0))


def _out_dir(cfg: dict, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg.get("out_dir", "mlx-runs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cache_dir(out: Path) -> Path:
    env = os.environ.get("MLX_DATA_DIR")
    cache = Path(env) if env else out
    cache.mkdir(parents=True, exist_ok=True)
    return cache


def _dataset_cache_path(cfg: dict, out: Path, seed: int) -> Path:
    block = cfg.get("dataset", {})
    tag = cfgmod.config_hash({"dataset": block, "seed": seed})
    name = block.get("name", "toy2d")
    return _cache_dir(out) / f"dataset-{name}-{tag}.bin"


def _build_dataset(cfg: dict, out: Path, seed: int) -> data.DatasetSplits:
    block = cfg.get("dataset", {})
    name = block.get("name", "toy2d")
    ds_seed = int(block.get("seed", seed))
    if name == "toy2d":
        return data.gen_toy2d(int(block.get("n", 600)), ds_seed)
    digits_dir = block.get("data_dir") or str(_cache_dir(out) / "digits")
    paths = data.ensure_digit_corpus(digits_dir, seed=ds_seed)
    train_images, train_labels = data.load_idx(paths["train_images"], paths["train_labels"])
    test_images, test_labels = data.load_idx(paths["test_images"], paths["test_labels"])
    return data.build_decoy_mnist(
        train_images,
        train_labels,
        test_images,
        test_labels,
        seed=ds_seed,
        n_train=int(block.get("n_train", 10000)),
        n_val=int(block.get("n_val", 1000)),
        n_test=int(block.get("n_test", 2000)),
    )


def _load_dataset(cfg: dict, out: Path, seed: int) -> data.DatasetSplits:
    path = _dataset_cache_path(cfg, out, seed)
    if not path.exists():
        raise cfgmod.ConfigError(
            f"dataset cache {path} not found; run `mlx gen-data --config <same config>` first"
        )
    splits, _ = data.load_cache(path)
    return splits


def cmd_gen_data(cfg: dict, args) -> int:
    seed = _root_seed(cfg, args)
    out = _out_dir(cfg, args)
    splits = _build_dataset(cfg, out, seed)
    path = _dataset_cache_path(cfg, out, seed)
    data.save_cache(path, splits, seed=seed, config_hash=cfgmod.config_hash(cfg))
    print(f"wrote {path} ({len(splits.train)}/{len(splits.val)}/{len(splits.test)} examples)")
    return 0


def _train_once(cfg: dict, out: Path, seed: int):
    splits = _load_dataset(cfg, out, seed)
    tcfg = cfgmod.training_config(cfg, seed)
    hidden = tuple(cfg.get("model", {}).get("hidden", (32, 32)))
    spec = MlpSpec(splits.train.x.shape[1], hidden, int(splits.train.y.max()) + 1)
    params, history = run_training(splits, tcfg, spec=spec)
    return splits, params, history


def cmd_train(cfg: dict, args) -> int:
    seed = _root_seed(cfg, args)
    out = _out_dir(cfg, args)
    chash = cfgmod.config_hash(cfg)
    _, params, history = _train_once(cfg, out, seed)
    save_checkpoint(out / "checkpoint.bin", params, seed=seed, config_hash=chash)
    _write_csv(
        out / "history.csv",
        {"config_hash": chash, "seed": seed},
        ["epoch", "train_loss", "robust_loss", "reg_loss", "val_avg_acc", "val_wg_acc"],
        history,
    )
    best = max(history, key=lambda r: r["val_wg_acc"])
    print(f"wrote {out / 'checkpoint.bin'} (best val wg acc {best['val_wg_acc']:.4f} at epoch {best['epoch']})")
    return 0


def _eval_report(cfg: dict, splits: data.DatasetSplits, params, seed: int) -> metrics.MetricsReport:
    eval_cfg = cfg.get("eval", {})
    with_rcs = bool(eval_cfg.get("rcs", True))
    if with_rcs and not splits.has_masks:
        raise cfgmod.ConfigError("eval.rcs: dataset has no masks; disable rcs or regenerate data")
    return metrics.build_report(
        params,
        splits.test,
        with_rcs=with_rcs,
        rcs_sigma=float(eval_cfg.get("rcs_sigma", 0.25)),
        rng=rng.stream(seed, "rcs"),
        with_saliency=bool(eval_cfg.get("saliency", True)),
    )


def cmd_eval(cfg: dict, args) -> int:
    seed = _root_seed(cfg, args)
    out = _out_dir(cfg, args)
    splits = _load_dataset(cfg, out, seed)
    params, _ = load_checkpoint(out / "checkpoint.bin")
    report = _eval_report(cfg, splits, params, seed)
    _write_json(out / "metrics.json", {"config_hash": cfgmod.config_hash(cfg), "seed": seed}, report.as_dict())
    print(f"wrote {out / 'metrics.json'} (avg {report.avg_acc:.4f}, wg {report.wg_acc:.4f})")
    return 0


def cmd_boundary_dump(cfg: dict, args) -> int:
    seed = _root_seed(cfg, args)
    out = _out_dir(cfg, args)
    params, _ = load_checkpoint(out / "checkpoint.bin")
    eval_cfg = cfg.get("eval", {})
    (x1r, x2r) = eval_cfg.get("grid_range", [[-4.0, 4.0], [-3.0, 3.0]])
    res = int(eval_cfg.get("grid_resolution", 81))
    grid = metrics.boundary_grid(params, x1r, x2r, res)
    rows = []
    for i, a in enumerate(grid.x1):
        for j, b in enumerate(grid.x2):
            rows.append(
                {
                    "x1": float(a),
                    "x2": float(b),
                    "pred": int(grid.pred[i, j]),
                    "logit0": float(grid.logit[i, j, 0]),
                    "logit1": float(grid.logit[i, j, 1]),
                }
            )
    _write_csv(
        out / "boundary.csv",
        {
            "config_hash": cfgmod.config_hash(cfg),
            "seed": seed,
            "flip_fraction": repr(grid.flip_fraction),
        },
        ["x1", "x2", "pred", "logit0", "logit1"],
        rows,
    )
    print(f"wrote {out / 'boundary.csv'} (flip fraction {grid.flip_fraction:.4f})")
    return 0


def cmd_gp_verify(cfg: dict, args) -> int:
    seed = _root_seed(cfg, args)
    out = _out_dir(cfg, args)
    block = cfg.get("gp_verify", {})
    vseed = int(block.get("seed", seed))
    payload = {
        "gap_lower_bound": theory.run_thm1_trials(int(block.get("thm1_trials", 1000)), vseed),
        "coverage_upper_bound": theory.run_thm2_trials(int(block.get("thm2_trials", 100)), vseed),
        "kernel_psd": theory.run_kernel_psd_trials(int(block.get("psd_trials", 200)), vseed),
        "mean_estimator_weights": theory.run_prop1_checks(),
    }
    payload["all_passed"] = all(v["passed"] for v in payload.values())
    _write_json(out / "gp_verify.json", {"config_hash": cfgmod.config_hash(cfg), "seed": seed}, payload)
    print(f"wrote {out / 'gp_verify.json'} (all passed: {payload['all_passed']})")
    return 0 if payload["all_passed"] else 1


_SWEEP_COLUMNS = [
    "name", "method", "lam", "beta", "alpha", "sigma", "kappa", "eps_max",
    "avg_acc", "wg_acc", "rcs", "s1", "s2",
]


def cmd_sweep(cfg: dict, args) -> int:
    seed = _root_seed(cfg, args)
    out = _out_dir(cfg, args)
    entries = cfg.get("sweep", [])
    if not entries:
        raise cfgmod.ConfigError("sweep: no entries")
    rows = []
    for i, entry in enumerate(entries):
        merged = json.loads(json.dumps(cfg))  # deep copy
        merged.pop("sweep")
        training = merged.setdefault("training", {})
        for key, value in entry.get("training", {}).items():
            if key == "perturb":
                training.setdefault("perturb", {}).update(value)
            else:
                training[key] = value
        name = entry.get("name", f"run{i}")
        t0 = time.time()
        splits, params, _ = _train_once(merged, out, seed)
        report = _eval_report(merged, splits, params, seed)
        tcfg = cfgmod.training_config(merged, seed)
        rows.append(
            {
                "name": name,
                "method": tcfg.method,
                "lam": tcfg.lam,
                "beta": tcfg.beta,
                "alpha": tcfg.perturb.alpha,
                "sigma": tcfg.perturb.sigma,
                "kappa": tcfg.perturb.kappa,
                "eps_max": tcfg.eps_max,
                "avg_acc": report.avg_acc,
                "wg_acc": report.wg_acc,
                "rcs": report.rcs,
                "s1": report.s1,
                "s2": report.s2,
            }
        )
        print(f"[{name}] method={tcfg.method} wg={report.wg_acc:.4f} ({time.time() - t0:.1f}s)")
    _write_csv(out / "sweep.csv", {"config_hash": cfgmod.config_hash(cfg), "seed": seed}, _SWEEP_COLUMNS, rows)
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "boundary-dump": cmd_boundary_dump,
    "gp-verify": cmd_gp_verify,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlx", description=__doc__.strip().splitlines()[0])
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory (overrides config out_dir)")
    parser.add_argument("--seed", type=int, default=None, help="root seed (overrides config seed)")
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load(args.config)
        return _COMMANDS[args.subcommand](cfg, args)
    except cfgmod.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
