from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from synse.pipeline import (
    default_run_config,
    stage_eval_gzsl,
    stage_eval_zsl,
    stage_synth,
    stage_train,
)


def run_full_pipeline(out_dir: str, seed: int, *, gate_off: bool = False, no_temp: bool = False) -> dict:
    """Run synth -> train -> eval-zsl -> eval-gzsl (hard) and optional variants."""
    cfg = default_run_config(out_dir, seed=seed)
    stage_synth(cfg)
    train_summary = stage_train(cfg)
    zsl = stage_eval_zsl(cfg)
    gzsl = stage_eval_gzsl(cfg)
    result = {
        "cfg": cfg,
        "out": Path(out_dir),
        "train": train_summary,
        "zsl": zsl,
        "gzsl": gzsl["report"],
        "gate": gzsl["gate"],
        "trajectory": json.loads((Path(out_dir) / "checkpoint/trajectory.json").read_text()),
    }
    if gate_off:
        result["gzsl_off"] = stage_eval_gzsl(cfg, gate_mode="off")["report"]
    if no_temp:
        result["gzsl_no_temp"] = stage_eval_gzsl(cfg, no_temp=True)["report"]
    return result


@pytest.fixture(scope="session")
def default_run(tmp_path_factory) -> dict:
    """One full seeded pipeline run on the default synthetic benchmark, shared
    across the acceptance criteria and the trajectory checks."""
    out = tmp_path_factory.mktemp("default_run")
    return run_full_pipeline(str(out / "run"), seed=7, gate_off=True, no_temp=True)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
