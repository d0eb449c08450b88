"""Command-line interface: train, sample, recourse, benchmark, sweep.

Every subcommand reads a JSON config file; failures exit nonzero after
printing a machine-readable error record to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .data import SplitSpec, split
from .errors import SchemaError
from .harness import (
    load_config,
    load_datasets,
    prepare_data,
    run_sweep,
    train_config_from,
    validate_config,
)
from .mlp import accuracy, auc, load_model, predict_proba, save_model, train_mlp
from .recourse import RecourseConfig, kde_recourse, robust_recourse, wachter_recourse
from .sampler import LocalSampleSet, build_local_sample_set

_TRAIN_KEYS = {"config_version", "dataset", "split", "train", "output"}
_SAMPLE_KEYS = {"config_version", "dataset", "split", "model", "sampler", "instance", "output"}
_RECOURSE_KEYS = {"config_version", "model", "sample_set", "method", "params", "instance", "output"}
_PARAM_KEYS = {"delta_plus", "eps0", "eps1", "sigma", "zeta", "lambda_init",
               "theta", "beta", "tol", "max_iter", "frozen"}


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _check_keys(section: dict, allowed: set, scope: str) -> None:
    for key in section:
        if key not in allowed:
            raise SchemaError(f"unknown config key {key!r} in {scope}")


def _cmd_train(config_path: str) -> dict:
    config = _read_json(config_path)
    _check_keys(config, _TRAIN_KEYS, "train config")
    train_set, test_set, d2 = prepare_data(config)
    model = train_mlp(train_set, train_config_from(config))
    out = config.get("output", {})
    if "model" in out:
        save_model(model, out["model"])
    metrics = {
        "accuracy_test": accuracy(model, test_set),
        "auc_test": auc(predict_proba(model, test_set.features), test_set.labels),
        "accuracy_future_pool": accuracy(model, d2),
        "n_train": train_set.n,
        "n_test": test_set.n,
    }
    if "metrics" in out:
        with open(out["metrics"], "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
    return metrics


def _resolve_instance(config: dict):
    instance = config.get("instance", {})
    if "point" in instance:
        return np.asarray(instance["point"], dtype=float)
    if "test_index" in instance:
        _, test, _ = prepare_data(config)
        return test.features[int(instance["test_index"])]
    raise SchemaError("instance must provide 'point' or 'test_index'")


def _cmd_sample(config_path: str) -> dict:
    config = _read_json(config_path)
    _check_keys(config, _SAMPLE_KEYS, "sample config")
    model = load_model(config["model"])
    x0 = _resolve_instance(config)
    train_set, _, _ = prepare_data(config)
    sm = config.get("sampler", {})
    ls = build_local_sample_set(
        x0, train_set, model,
        k=int(sm.get("k", 1000)),
        r_p=float(sm.get("r_p", 0.2)),
        n=int(sm.get("n", 200)),
        tol=float(sm.get("tol", 1e-4)),
        seed=int(sm.get("seed", 0)) if "seed" in sm else 0,
        bisect_limit=sm.get("bisect_limit"),
    )
    out_path = config.get("output", "sample_set.json")
    ls.save(out_path)
    return {"output": out_path, "n0": int(ls.samples0.shape[0]), "n1": int(ls.samples1.shape[0])}


def _cmd_recourse(config_path: str) -> dict:
    config = _read_json(config_path)
    _check_keys(config, _RECOURSE_KEYS, "recourse config")
    params = config.get("params", {})
    _check_keys(params, _PARAM_KEYS, "recourse params")
    method = config.get("method", "robust")
    model = load_model(config["model"]) if "model" in config else None

    kwargs = {k: params[k] for k in ("delta_plus", "eps0", "eps1", "sigma", "zeta",
                                     "theta", "beta", "tol", "max_iter") if k in params}
    if "frozen" in params:
        kwargs["frozen_mask"] = np.asarray(params["frozen"], dtype=bool)
    cfg = RecourseConfig(**kwargs)

    if method == "wachter":
        if model is None:
            raise SchemaError("wachter recourse requires a 'model' entry")
        x0 = np.asarray(config["instance"]["point"], dtype=float)
        result = wachter_recourse(x0, model, cfg, lambda_init=float(params.get("lambda_init", 0.1)))
    elif method in ("kde", "robust"):
        if "sample_set" not in config:
            raise SchemaError(f"{method} recourse requires a 'sample_set' entry")
        ls = LocalSampleSet.load(config["sample_set"])
        generate = robust_recourse if method == "robust" else kde_recourse
        result = generate(ls.x0, ls, cfg, model=model)
    else:
        raise SchemaError(f"unknown method {method!r}")

    out_path = config.get("output", "recourse.json")
    result.save(out_path)
    return {"output": out_path, "cost": result.cost, "converged": result.converged}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bayesrec",
        description="Recourse generation and model-shift robustness benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("train", "train the MLP classifier from a config file"),
        ("sample", "build a boundary-centered local sample set"),
        ("recourse", "generate a single recourse"),
        ("benchmark", "evaluate methods at fixed config points"),
        ("sweep", "run the full cost-validity grid sweep"),
    ):
        cmd = sub.add_parser(name, help=desc)
        cmd.add_argument("--config", required=True, help="path to a JSON config file")
        if name in ("benchmark", "sweep"):
            cmd.add_argument("--output-dir", required=True, help="directory for result CSVs")

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            summary = _cmd_train(args.config)
        elif args.command == "sample":
            summary = _cmd_sample(args.config)
        elif args.command == "recourse":
            summary = _cmd_recourse(args.config)
        else:
            config = load_config(args.config)
            summary = run_sweep(config, args.output_dir)
        print(json.dumps(summary, sort_keys=True))
        return 0
    except SchemaError as exc:
        print(json.dumps({"error": {"kind": "schema", "message": str(exc)}}), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": {"kind": "missing-file", "message": str(exc)}}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": {"kind": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
