"""Shared fixtures: benchmark plant, cached dataset + trained surrogates.

The surrogate artifacts (default dataset, fully-trained weights, 5-epoch
early-stopped weights) take minutes to build, so they are cached on disk
under tests/_cache keyed by the generating configuration; delete the
directory to force a rebuild.
"""

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from nopf import (SurrogateArchitecture, benchmark_plant, eval_sup_error,
                  generate_dataset, load_params, save_params, train)
from nopf.config import RunConfig
from nopf.training import Dataset

CACHE_DIR = Path(__file__).parent / "_cache"
DATA_DIR = Path(__file__).parent / "data"

HOLDOUT_SEED = 20240811
HOLDOUT_FRACTION = 0.08


@pytest.fixture(scope="session")
def bench_model():
    return benchmark_plant()


@pytest.fixture(scope="session")
def oracle_baselines():
    path = DATA_DIR / "oracle_baselines.json"
    if not path.exists():
        pytest.fail("tests/data/oracle_baselines.json missing; run "
                    "scripts/gen_baselines.py to regenerate it")
    return json.loads(path.read_text())


def _holdout_split(n):
    rng = np.random.default_rng(HOLDOUT_SEED)
    perm = rng.permutation(n)
    k = max(1, int(round(HOLDOUT_FRACTION * n)))
    return perm[:k], perm[k:]


@pytest.fixture(scope="session")
def surrogate_artifacts(bench_model):
    """Build (or load) the default dataset and the two trained surrogates."""
    cfg = RunConfig()
    sampling, seed = cfg.sampling_config()
    train_cfg = cfg.train_config()
    arch_key = cfg.architecture(state_dim=2).to_dict()
    key = hashlib.sha256(json.dumps(
        {"sampling": sampling.to_dict(), "seed": seed,
         "train": train_cfg.to_dict(), "arch": arch_key,
         "holdout": [HOLDOUT_SEED, HOLDOUT_FRACTION]},
        sort_keys=True).encode()).hexdigest()[:16]
    root = CACHE_DIR / key
    root.mkdir(parents=True, exist_ok=True)
    paths = {name: root / name for name in
             ("dataset.nods", "full.nopf", "early.nopf", "info.json")}

    if not all(p.exists() for p in paths.values()):
        dataset, report = generate_dataset(bench_model, sampling, seed=seed)
        dataset.save(paths["dataset.nods"])
        hold_idx, train_idx = _holdout_split(len(dataset))
        train_part = dataset.subset(train_idx)
        hold_part = dataset.subset(hold_idx)

        architecture = cfg.architecture(state_dim=bench_model.state_dim)
        t0 = time.perf_counter()
        full_params, full_report = train(train_part, architecture, train_cfg)
        train_wall = time.perf_counter() - t0
        save_params(full_params, paths["full.nopf"])

        from dataclasses import replace
        early_cfg = replace(train_cfg, epochs=5, patience=0)
        early_params, _ = train(train_part, architecture, early_cfg)
        save_params(early_params, paths["early.nopf"])

        info = {
            "rows": len(dataset),
            "discarded": report.discarded,
            "out_of_domain": report.out_of_domain,
            "train_wall_seconds": train_wall,
            "train_epochs_run": len(full_report.epochs),
            "eps_full": eval_sup_error(full_params, hold_part).epsilon_hat,
            "eps_early": eval_sup_error(early_params, hold_part).epsilon_hat,
            "mean_full": eval_sup_error(full_params, hold_part).mean_error,
        }
        paths["info.json"].write_text(json.dumps(info, indent=2, sort_keys=True))

    dataset = Dataset.load(paths["dataset.nods"])
    hold_idx, _ = _holdout_split(len(dataset))
    return {
        "dataset": dataset,
        "holdout": dataset.subset(hold_idx),
        "full_params": load_params(paths["full.nopf"]),
        "early_params": load_params(paths["early.nopf"]),
        "full_path": paths["full.nopf"],
        "early_path": paths["early.nopf"],
        "info": json.loads(paths["info.json"].read_text()),
    }
