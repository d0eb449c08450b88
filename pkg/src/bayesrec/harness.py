"""Experiment pipeline: dataset prep, model training, future-model ensembles,
per-instance recourse evaluation, and cost-validity sweeps with CSV output.

All randomness funnels through the master seed: a seed sequence spawns one
child per purpose (future ensembles, per-instance sampling), so identical
configs produce byte-identical result files.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .data import Dataset, SplitSpec, generate_synthetic, load_csv, split
from .errors import SchemaError
from .mlp import MlpModel, TrainConfig, accuracy, auc, predict_label, predict_proba, train_mlp
from .recourse import RecourseConfig, kde_recourse, robust_recourse, wachter_recourse
from .sampler import build_local_sample_set

CONFIG_VERSION = 1

INSTANCE_COLUMNS = (
    "instance_id", "method", "eps0", "eps1", "delta_plus", "cost",
    "current_valid", "future_validity", "converged", "failure_reason",
)
AGGREGATE_COLUMNS = (
    "method", "eps0", "eps1", "delta_plus", "mean_cost", "mean_current_validity",
    "mean_future_validity", "n_instances", "n_failures", "on_frontier",
)

_ALLOWED_KEYS = {
    "": {"config_version", "dataset", "split", "train", "sampler", "methods",
         "future", "evaluation", "master_seed"},
    "dataset": {"id", "n", "seed", "future_noise_std", "d1_path", "d2_path", "scale"},
    "split": {"train_fraction", "seed"},
    "train": {"epochs", "batch_size", "learning_rate", "l2_penalty", "momentum", "seed", "hidden"},
    "sampler": {"k", "n", "r_p", "tol", "bisect_limit"},
    "future": {"count", "fraction"},
    "evaluation": {"max_instances", "workers"},
    "methods": {"robust", "kde", "wachter"},
    "methods.robust": {"eps0", "eps1", "delta_plus", "sigma", "zeta"},
    "methods.kde": {"delta_plus", "sigma"},
    "methods.wachter": {"lambda_init"},
}


def validate_config(config: dict) -> None:
    """Reject unknown keys anywhere in the sweep config, naming the offender."""
    def check(section: dict, scope: str):
        allowed = _ALLOWED_KEYS.get(scope)
        if allowed is None:
            return
        for key in section:
            if key not in allowed:
                where = scope or "top level"
                raise SchemaError(f"unknown config key {key!r} in {where}")
    if not isinstance(config, dict):
        raise SchemaError("config must be a JSON object")
    check(config, "")
    if config.get("config_version") != CONFIG_VERSION:
        raise SchemaError(f"config_version must be {CONFIG_VERSION}")
    for scope in ("dataset", "split", "train", "sampler", "future", "evaluation", "methods"):
        section = config.get(scope)
        if isinstance(section, dict):
            check(section, scope)
    for method, grid in (config.get("methods") or {}).items():
        if isinstance(grid, dict):
            check(grid, f"methods.{method}")


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _seed_int(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1)[0])


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    validate_config(config)
    return config


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def load_datasets(config: dict) -> tuple[Dataset, Dataset]:
    """Current/future dataset pair per the config's dataset section."""
    ds = config.get("dataset", {})
    kind = ds.get("id", "synthetic")
    if kind == "synthetic":
        n = int(ds.get("n", 1000))
        seed = int(ds.get("seed", 0))
        noise = float(ds.get("future_noise_std", 1.0))
        return generate_synthetic(n, 0.0, seed), generate_synthetic(n, noise, seed + 1)
    for key in ("d1_path", "d2_path"):
        if key not in ds:
            raise SchemaError(f"dataset id {kind!r} requires {key!r}")
    return load_csv(ds["d1_path"], kind), load_csv(ds["d2_path"], kind)


def _scaled(dataset: Dataset, scaler) -> Dataset:
    return Dataset(
        features=scaler.transform(dataset.features),
        labels=dataset.labels,
        feature_meta=list(dataset.feature_meta),
        scaler=scaler,
    )


def prepare_data(config: dict) -> tuple[Dataset, Dataset, Dataset]:
    """Split the current data and bring everything into common units.

    Returns (train, test, future_pool). Real datasets are min-max scaled with
    the scaler fitted on the training split; synthetic data stays in its
    native units.
    """
    d1, d2 = load_datasets(config)
    sp = config.get("split", {})
    train, test = split(d1, SplitSpec(float(sp.get("train_fraction", 0.8)), int(sp.get("seed", 0))))
    scale = config.get("dataset", {}).get("scale", config.get("dataset", {}).get("id", "synthetic") != "synthetic")
    if scale:
        scaler = train.scaler
        train, test, d2 = _scaled(train, scaler), _scaled(test, scaler), _scaled(d2, scaler)
    return train, test, d2


def train_config_from(config: dict) -> TrainConfig:
    tr = config.get("train", {})
    return TrainConfig(
        epochs=int(tr.get("epochs", 200)),
        batch_size=int(tr.get("batch_size", 32)),
        learning_rate=float(tr.get("learning_rate", 0.01)),
        seed=int(tr.get("seed", 0)),
        l2_penalty=float(tr.get("l2_penalty", 0.0)),
        momentum=float(tr.get("momentum", 0.9)),
        hidden=tuple(tr.get("hidden", (20, 50, 20))),
    )


def retrain_future_models(d1_train: Dataset, d2: Dataset, m: int, fraction: float,
                          seed: int, train_cfg: TrainConfig = TrainConfig()) -> list[MlpModel]:
    """m classifiers, each trained on d1_train plus a fresh d2 subsample."""
    if d2.n < 1:
        raise ValueError("d2 must be non-empty")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    take = max(1, int(round(fraction * d2.n)))
    children = np.random.SeedSequence(seed).spawn(m)
    models = []
    for child in children:
        pick_seed, fit_seed = child.spawn(2)
        rng = np.random.default_rng(pick_seed)
        idx = rng.choice(d2.n, size=take, replace=False)
        merged = Dataset(
            features=np.vstack([d1_train.features, d2.features[idx]]),
            labels=np.concatenate([d1_train.labels, d2.labels[idx]]),
            feature_meta=list(d1_train.feature_meta),
            scaler=d1_train.scaler,
        )
        models.append(train_mlp(merged, replace(train_cfg, seed=_seed_int(fit_seed))))
    return models


def evaluate_recourse(x_prime, current: MlpModel, future: list[MlpModel]) -> tuple[int, float]:
    """(current validity indicator, fraction of future models that validate)."""
    x_prime = np.asarray(x_prime, dtype=float)
    for model in [current, *future]:
        if model.p != x_prime.size:
            raise ValueError("model dimension does not match the recourse point")
    current_valid = int(predict_label(current, x_prime) == 1)
    if not future:
        return current_valid, 0.0
    hits = [int(predict_label(model, x_prime) == 1) for model in future]
    return current_valid, float(np.mean(hits))


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

@dataclass
class _InstanceTask:
    instance_id: int
    x0: np.ndarray
    config: dict
    sampler_seed: int


def _method_points(config: dict):
    """Yield (method, eps0, eps1, delta_plus_or_lambda, extras) grid points."""
    methods = config.get("methods", {})
    for method, grid in methods.items():
        if method == "robust":
            for eps0, eps1, dplus in itertools.product(
                _as_list(grid.get("eps0", [0.0])),
                _as_list(grid.get("eps1", [0.0])),
                _as_list(grid.get("delta_plus", [0.0])),
            ):
                yield method, float(eps0), float(eps1), float(dplus), grid
        elif method == "kde":
            for dplus in _as_list(grid.get("delta_plus", [0.0])):
                yield method, 0.0, 0.0, float(dplus), grid
        elif method == "wachter":
            for lam in _as_list(grid.get("lambda_init", [0.1])):
                yield method, None, None, float(lam), grid
        else:
            raise SchemaError(f"unknown method {method!r}")


_WORKER_STATE: dict = {}


def _init_worker(train, model, future, frozen_mask):
    _WORKER_STATE.update(train=train, model=model, future=future, frozen_mask=frozen_mask)


def _evaluate_instance(task: _InstanceTask) -> list[dict]:
    train = _WORKER_STATE["train"]
    model = _WORKER_STATE["model"]
    future = _WORKER_STATE["future"]
    frozen_mask = _WORKER_STATE["frozen_mask"]
    config = task.config
    sm = config.get("sampler", {})
    rows = []

    try:
        ls = build_local_sample_set(
            task.x0, train, model,
            k=int(sm.get("k", 1000)),
            r_p=float(sm.get("r_p", 0.2)),
            n=int(sm.get("n", 200)),
            tol=float(sm.get("tol", 1e-4)),
            seed=task.sampler_seed,
            bisect_limit=sm.get("bisect_limit"),
        )
        sample_failure = None
    except Exception as exc:  # sampling failed: every config point fails alike
        ls = None
        sample_failure = f"{type(exc).__name__}: {exc}"

    for method, eps0, eps1, dplus, grid in _method_points(config):
        base = {
            "instance_id": task.instance_id, "method": method,
            "eps0": eps0, "eps1": eps1, "delta_plus": dplus,
            "cost": None, "current_valid": None, "future_validity": None,
            "converged": None, "failure_reason": "",
        }
        if sample_failure is not None and method != "wachter":
            rows.append({**base, "failure_reason": sample_failure})
            continue
        try:
            if method == "wachter":
                cfg = RecourseConfig(frozen_mask=frozen_mask)
                result = wachter_recourse(task.x0, model, cfg, lambda_init=dplus)
            else:
                cfg = RecourseConfig(
                    delta_plus=dplus, eps0=eps0 or 0.0, eps1=eps1 or 0.0,
                    sigma=float(grid.get("sigma", 1.0)),
                    zeta=float(grid.get("zeta", 1e-8)) if method == "robust" else 1e-8,
                    frozen_mask=frozen_mask,
                )
                generate = robust_recourse if method == "robust" else kde_recourse
                result = generate(task.x0, ls, cfg, model=model)
            current_valid, future_validity = evaluate_recourse(result.x_prime, model, future)
            rows.append({
                **base, "cost": result.cost, "current_valid": current_valid,
                "future_validity": future_validity, "converged": int(result.optimizer_converged),
            })
        except Exception as exc:
            rows.append({**base, "failure_reason": f"{type(exc).__name__}: {exc}"})
    return rows


def pareto_sweep(config: dict):
    """Full grid x instances x methods evaluation.

    Returns (instance_rows, aggregate_rows, manifest). Failed instances are
    recorded with a reason and excluded from the aggregate means.
    """
    validate_config(config)
    train, test, d2 = prepare_data(config)
    train_cfg = train_config_from(config)
    model = train_mlp(train, train_cfg)

    future_cfg = config.get("future", {})
    master = int(config.get("master_seed", 0))
    future_seed_seq, sampler_seed_seq = np.random.SeedSequence(master).spawn(2)
    future = retrain_future_models(
        train, d2,
        m=int(future_cfg.get("count", 20)),
        fraction=float(future_cfg.get("fraction", 0.2)),
        seed=_seed_int(future_seed_seq),
        train_cfg=train_cfg,
    )

    needs_recourse = np.flatnonzero(predict_label(model, test.features) == 0)
    max_instances = int(config.get("evaluation", {}).get("max_instances", 20))
    chosen = needs_recourse[:max_instances]
    if chosen.size == 0:
        raise ValueError("no test instances with unfavorable prediction")
    instance_seeds = sampler_seed_seq.spawn(len(chosen))
    frozen_mask = train.immutable_mask

    tasks = [
        _InstanceTask(int(i), test.features[i], config, _seed_int(s))
        for i, s in zip(chosen, instance_seeds)
    ]
    workers = int(config.get("evaluation", {}).get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker,
            initargs=(train, model, future, frozen_mask),
        ) as pool:
            nested = list(pool.map(_evaluate_instance, tasks))
    else:
        _init_worker(train, model, future, frozen_mask)
        nested = [_evaluate_instance(task) for task in tasks]
    rows = [row for group in nested for row in group]
    rows.sort(key=lambda r: (r["method"], str(r["eps0"]), str(r["eps1"]),
                             r["delta_plus"], r["instance_id"]))

    aggregates = _aggregate(rows)
    manifest = {
        "config": config,
        "version": __version__,
        "master_seed": master,
        "n_instances": len(tasks),
        "instance_ids": [t.instance_id for t in tasks],
        "model_accuracy_test": accuracy(model, test),
        "model_auc_test": auc(predict_proba(model, test.features), test.labels),
    }
    return rows, aggregates, manifest


def _aggregate(rows: list[dict]) -> list[dict]:
    groups: dict = {}
    for row in rows:
        key = (row["method"], row["eps0"], row["eps1"], row["delta_plus"])
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: (k[0], str(k[1]), str(k[2]), k[3])):
        bucket = groups[key]
        ok = [r for r in bucket if not r["failure_reason"]]
        entry = {
            "method": key[0], "eps0": key[1], "eps1": key[2], "delta_plus": key[3],
            "mean_cost": float(np.mean([r["cost"] for r in ok])) if ok else None,
            "mean_current_validity": float(np.mean([r["current_valid"] for r in ok])) if ok else None,
            "mean_future_validity": float(np.mean([r["future_validity"] for r in ok])) if ok else None,
            "n_instances": len(ok),
            "n_failures": len(bucket) - len(ok),
            "on_frontier": 0,
        }
        out.append(entry)
    _flag_frontier(out)
    return out


def _flag_frontier(aggregates: list[dict]) -> None:
    """Mark per-method configs non-dominated in (mean cost, mean future validity)."""
    by_method: dict = {}
    for entry in aggregates:
        if entry["mean_cost"] is not None:
            by_method.setdefault(entry["method"], []).append(entry)
    for entries in by_method.values():
        for a in entries:
            dominated = any(
                (b["mean_cost"] <= a["mean_cost"] and b["mean_future_validity"] >= a["mean_future_validity"])
                and (b["mean_cost"] < a["mean_cost"] or b["mean_future_validity"] > a["mean_future_validity"])
                for b in entries if b is not a
            )
            a["on_frontier"] = int(not dominated)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def run_sweep(config: dict, output_dir) -> dict:
    """Run the sweep and write instance/aggregate CSVs plus a manifest JSON."""
    rows, aggregates, manifest = pareto_sweep(config)
    os.makedirs(output_dir, exist_ok=True)
    instance_path = os.path.join(output_dir, "instances.csv")
    aggregate_path = os.path.join(output_dir, "aggregates.csv")
    manifest_path = os.path.join(output_dir, "manifest.json")
    write_csv(instance_path, INSTANCE_COLUMNS, rows)
    write_csv(aggregate_path, AGGREGATE_COLUMNS, aggregates)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return {
        "instances_csv": instance_path,
        "aggregates_csv": aggregate_path,
        "manifest": manifest_path,
        "n_rows": len(rows),
    }
