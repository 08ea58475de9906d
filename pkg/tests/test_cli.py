from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from synse.cli import main

TINY_CONFIG = {
    "schema_version": 1,
    "seed": 3,
    "data": {
        "synth": {
            "num_verbs": 3,
            "num_nouns": 3,
            "visual_dim": 16,
            "embed_dim": 8,
            "samples_per_class": 40,
            "noise_std": 0.1,
            "feature_scale": 0.35,
            "unseen_pairs": [[0, 1], [1, 2]],
            "seed": 3,
        }
    },
    "split": {"gate_train_fraction": 0.1, "gate_val_fraction": 0.1, "test_seen_fraction": 0.2},
    "train": {
        "skeleton_latent_dim": 8,
        "pos_latent_dim": 4,
        "schedule": {
            "cycle_length_epochs": 30,
            "beta_start_epoch": 10,
            "beta_rate_per_epoch": 1e-5,
            "alpha_start_epoch": 15,
            "alpha_value": 1.0,
            "num_cycles": 2,
        },
    },
    "classifier": {"per_class_count": 60, "epochs": 40},
    "gate": {"temperature_grid": [1, 3, 10], "threshold_grid": [0.4, 0.5, 0.6]},
}


@pytest.fixture()
def tiny_config(tmp_path) -> Path:
    doc = dict(TINY_CONFIG)
    doc["output_dir"] = str(tmp_path / "run")
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_full_pipeline_via_cli(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["synth", "--config", str(tiny_config)]) == 0
    assert main(["train", "--config", str(tiny_config)]) == 0
    assert main(["eval-zsl", "--config", str(tiny_config), "--emit-plot"]) == 0
    assert main(["eval-gzsl", "--config", str(tiny_config)]) == 0
    assert (out / "data/features.synsec").exists()
    assert (out / "checkpoint/model.json").exists()
    zsl = json.loads((out / "reports/zsl.json").read_text())
    assert "zsl_accuracy" in zsl and "oracle_ceiling" in zsl
    gzsl = json.loads((out / "reports/gzsl.json").read_text())
    assert gzsl["gate"]["mode"] == "hard"
    assert (out / "plots/zsl.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    hashes = {entry["config_hash"] for entry in manifest["stages"].values()}
    assert len(hashes) == 1  # every stage records the same config hash


def test_rerun_refuses_without_force(tiny_config, capsys):
    assert main(["synth", "--config", str(tiny_config)]) == 0
    assert main(["synth", "--config", str(tiny_config)]) == 4
    assert "force" in capsys.readouterr().err
    assert main(["synth", "--config", str(tiny_config), "--force"]) == 0


def test_gate_off_and_variant_reports(tiny_config, tmp_path):
    out = tmp_path / "run"
    main(["synth", "--config", str(tiny_config)])
    main(["train", "--config", str(tiny_config)])
    assert main(["eval-gzsl", "--config", str(tiny_config), "--gate", "off"]) == 0
    assert main(["eval-gzsl", "--config", str(tiny_config), "--gate", "soft"]) == 0
    assert main(["eval-gzsl", "--config", str(tiny_config), "--no-temp-scaling"]) == 0
    off = json.loads((out / "reports/gzsl_off.json").read_text())
    assert off["gate"]["mode"] == "off"
    soft = json.loads((out / "reports/gzsl_soft.json").read_text())
    assert soft["gate"]["mode"] == "soft"
    no_temp = json.loads((out / "reports/gzsl_no_temp.json").read_text())
    assert no_temp["gate"]["temperature"] == 1.0


def test_ablate_sample_count_rows(tiny_config, tmp_path):
    out = tmp_path / "run"
    main(["synth", "--config", str(tiny_config)])
    main(["train", "--config", str(tiny_config)])
    assert main(["ablate", "--config", str(tiny_config), "--which", "sample-count"]) == 0
    doc = json.loads((out / "reports/ablate_sample-count.json").read_text())
    labels = [row["label"] for row in doc["rows"]]
    assert labels == [
        "30 samples per class (half)",
        "60 samples per class (default)",
        "120 samples per class (double)",
    ]
    assert (out / "reports/ablate_sample-count.txt").exists()


def test_ablate_embedding_dims_rows(tiny_config, tmp_path):
    out = tmp_path / "run"
    main(["synth", "--config", str(tiny_config)])
    main(["train", "--config", str(tiny_config)])
    assert main(["ablate", "--config", str(tiny_config), "--which", "embedding-dims"]) == 0
    doc = json.loads((out / "reports/ablate_embedding-dims.json").read_text())
    labels = [row["label"] for row in doc["rows"]]
    assert labels == ["latent 4 (half)", "latent 8 (default)", "latent 16 (double)"]


def test_ablate_gating_modes(tiny_config, tmp_path):
    out = tmp_path / "run"
    main(["synth", "--config", str(tiny_config)])
    main(["train", "--config", str(tiny_config)])
    assert main(["ablate", "--config", str(tiny_config), "--which", "softgating"]) == 0
    doc = json.loads((out / "reports/ablate_softgating.json").read_text())
    assert "skew" in doc["note"]
    assert len(doc["rows"]) == 2
    assert main(["ablate", "--config", str(tiny_config), "--which", "gate-off"]) == 0
    off = json.loads((out / "reports/ablate_gate-off.json").read_text())
    assert [r["label"] for r in off["rows"]] == [
        "hard gating (default)",
        "joint classifier, no gate",
    ]


def test_gate_checkpoint_written(tiny_config, tmp_path):
    out = tmp_path / "run"
    main(["synth", "--config", str(tiny_config)])
    main(["train", "--config", str(tiny_config)])
    main(["eval-gzsl", "--config", str(tiny_config)])
    from synse.gzsl_gate import GateModel

    gate = GateModel.load(out / "checkpoint/gate.json")
    assert gate.mode == "hard"
    assert gate.k >= 1
    assert gate.regularization == 1.0


def test_inspect_detects_tampering(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    main(["synth", "--config", str(tiny_config)])
    capsys.readouterr()
    assert main(["inspect", "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["clean"]
    # corrupt one recorded artifact
    target = out / "data/split.json"
    target.write_text(target.read_text() + "\n", encoding="utf-8")
    assert main(["inspect", "--out", str(out)]) == 4
    report = json.loads(capsys.readouterr().out)
    assert not report["clean"]
    assert report["stages"]["synth"]["data/split.json"] == "mismatch"


def test_config_validation_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"schema_version": 1, "data": {"synth": {"bogus_key": 1}}}))
    assert main(["synth", "--config", str(bad)]) == 2
    assert "data.synth" in capsys.readouterr().err

    both = tmp_path / "both.yaml"
    both.write_text(
        yaml.safe_dump(
            {
                "schema_version": 1,
                "data": {
                    "synth": {},
                    "files": {
                        "features": "x",
                        "features_dim": 4,
                        "word_vectors": "y",
                        "class_names": "z",
                    },
                },
                "split": {"seen_ids": [0], "unseen_ids": [1]},
            }
        )
    )
    assert main(["synth", "--config", str(both)]) == 2


def test_missing_artifacts_is_io_error(tiny_config, capsys):
    # train before synth: the data containers do not exist yet
    assert main(["train", "--config", str(tiny_config)]) == 4


def test_divergent_training_exit_code(tmp_path, capsys):
    doc = dict(TINY_CONFIG)
    doc["output_dir"] = str(tmp_path / "run")
    doc["train"] = dict(doc["train"], learning_rate=1e18)
    doc["data"] = {"synth": dict(doc["data"]["synth"], feature_scale=1e12)}
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    assert main(["synth", "--config", str(path)]) == 0
    assert main(["train", "--config", str(path)]) == 3
    assert "epoch" in capsys.readouterr().err


def test_default_spec_flow(tmp_path, monkeypatch, capsys):
    # `synse synth --spec default && synse train && synse eval-zsl` with the
    # output directory redirected through the environment
    monkeypatch.setenv("SYNSE_OUT", str(tmp_path / "default_run"))
    assert main(["synth", "--spec", "default"]) == 0
    assert main(["train"]) == 0
    assert main(["eval-zsl"]) == 0
    report = json.loads((tmp_path / "default_run/reports/zsl.json").read_text())
    assert 0.0 <= report["zsl_accuracy"] <= 100.0
    assert report["chance"] == 25.0


def test_cli_flag_beats_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SYNSE_OUT", str(tmp_path / "env_dir"))
    target = tmp_path / "flag_dir"
    assert main(["synth", "--spec", "default", "--out", str(target)]) == 0
    assert (target / "data/features.synsec").exists()
    assert not (tmp_path / "env_dir").exists()


def test_console_script_smoke(tmp_path):
    # one true subprocess round through the installed entry point
    config = dict(TINY_CONFIG)
    config["output_dir"] = str(tmp_path / "run")
    config["train"] = dict(
        config["train"],
        schedule=dict(config["train"]["schedule"], cycle_length_epochs=20, num_cycles=1,
                      beta_start_epoch=5, alpha_start_epoch=10),
    )
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    for args in (["synth"], ["train"], ["eval-zsl"]):
        proc = subprocess.run(
            [sys.executable, "-m", "synse.cli", *args, "--config", str(path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "run/reports/zsl.json").exists()
