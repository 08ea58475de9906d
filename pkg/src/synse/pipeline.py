"""Run configuration, stage orchestration and artifact management.

A run is declared by one YAML file (versioned schema) naming either a
synthetic benchmark spec or a set of ingested feature/embedding files. Each
stage writes its artifacts under the run's output directory and records them,
with their hashes and the config hash, in manifest.json. Stages refuse to
overwrite existing artifacts unless forced.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .alignment_trainer import (
    AlignedModel,
    AnnealSchedule,
    TrainConfig,
    build_model,
    train,
)
from .errors import ArtifactExistsError, ConfigError, SplitError
from .eval_metrics import MetricsReport, assemble_report, per_class_mean_accuracy
from .feature_store import (
    LabeledFeatureSet,
    SplitResult,
    SplitSpec,
    load_feature_set,
    partition,
    save_feature_set,
    validate_zero_shot,
)
from .generative_core import encode, load_vae_pair, save_vae_pair
from .gzsl_gate import (
    GateModel,
    GatePack,
    gzsl_predict,
    real_gate_pack,
    residual_noise_std,
    synthesize_unseen_gate_pack,
    tune_gate,
)
from .synth_bench import SynthSpec, generate, oracle_ceiling
from .text_pipeline import (
    ClassDescription,
    PosEmbeddingTable,
    WordVectorSource,
    build_embedding_table,
    default_fill_table,
    default_pos_lexicon,
    fill_missing_pos,
    load_embedding_table,
    load_fill_table,
    load_pos_lexicon,
    save_embedding_table,
)
from .util import (
    ROLE_GATE_SYNTH_TRAIN,
    ROLE_GATE_SYNTH_VAL,
    ROLE_GEN_UNSEEN,
    ROLE_JOINT_CLF,
    ROLE_JOINT_SEEN,
    ROLE_MODEL_INIT,
    ROLE_PARTITION,
    ROLE_SEEN_CLF,
    ROLE_ZSL_CLF,
    canonical_json,
    derived_seed,
    sha256_bytes,
    sha256_file,
)
from .zsl_head import (
    LatentSampleSet,
    encode_seen_latents,
    generate_unseen_latents,
    train_joint_classifier,
    train_softmax,
    zsl_predict,
)

SCHEMA_VERSION = 1

# Desk-scale default schedule. The full-dataset reference schedules
# (NTU60_SCHEDULE / NTU120_SCHEDULE in alignment_trainer) keep the published
# constants; this one is shaped the same way but sized for the synthetic
# benchmark, with the beta ramp matched to its feature scale.
DEFAULT_SCHEDULE = AnnealSchedule(
    cycle_length_epochs=300,
    beta_start_epoch=100,
    beta_rate_per_epoch=1e-5,
    alpha_start_epoch=150,
    alpha_value=1.0,
    num_cycles=2,
)


@dataclass(frozen=True)
class FilesDataConfig:
    features: str
    features_dim: int
    word_vectors: str
    class_names: str
    fill_table: str | None = None
    pos_lexicon: str | None = None

    def to_dict(self) -> dict:
        return {
            "features": self.features,
            "features_dim": self.features_dim,
            "word_vectors": self.word_vectors,
            "class_names": self.class_names,
            "fill_table": self.fill_table,
            "pos_lexicon": self.pos_lexicon,
        }


@dataclass(frozen=True)
class ClassifierConfig:
    per_class_count: int = 500
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 64

    def to_dict(self) -> dict:
        return {
            "per_class_count": self.per_class_count,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
        }


@dataclass(frozen=True)
class GateConfig:
    mode: str = "hard"
    k: int | None = None
    temperature_grid: tuple[float, ...] = (1.0, 2.0, 3.0, 5.0, 10.0)
    threshold_grid: tuple[float, ...] = (0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70)
    regularization: float = 1.0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "temperature_grid": list(self.temperature_grid),
            "threshold_grid": list(self.threshold_grid),
            "regularization": self.regularization,
        }


@dataclass(frozen=True)
class SplitSettings:
    seen_ids: tuple[int, ...] | None = None
    unseen_ids: tuple[int, ...] | None = None
    gate_train_fraction: float = 0.05
    gate_val_fraction: float = 0.05
    test_seen_fraction: float = 0.2

    def to_dict(self) -> dict:
        return {
            "seen_ids": list(self.seen_ids) if self.seen_ids is not None else None,
            "unseen_ids": list(self.unseen_ids) if self.unseen_ids is not None else None,
            "gate_train_fraction": self.gate_train_fraction,
            "gate_val_fraction": self.gate_val_fraction,
            "test_seen_fraction": self.test_seen_fraction,
        }


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 1e-4
    batch_size: int = 64
    skeleton_latent_dim: int = 16
    pos_latent_dim: int = 8
    schedule: AnnealSchedule = field(default_factory=lambda: DEFAULT_SCHEDULE)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "skeleton_latent_dim": self.skeleton_latent_dim,
            "pos_latent_dim": self.pos_latent_dim,
            "schedule": self.schedule.to_dict(),
        }


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    output_dir: str = "runs/default"
    synth: SynthSpec | None = None
    files: FilesDataConfig | None = None
    split: SplitSettings = field(default_factory=SplitSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    gate: GateConfig = field(default_factory=GateConfig)

    def __post_init__(self):
        if (self.synth is None) == (self.files is None):
            raise ConfigError("exactly one of synth or files must be present", "data")
        if self.files is not None and (self.split.seen_ids is None or self.split.unseen_ids is None):
            raise ConfigError("file datasets require explicit seen_ids/unseen_ids", "split")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "data": (
                {"synth": self.synth.to_dict()} if self.synth is not None else {"files": self.files.to_dict()}
            ),
            "split": self.split.to_dict(),
            "train": self.train.to_dict(),
            "classifier": self.classifier.to_dict(),
            "gate": self.gate.to_dict(),
        }

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            schedule=self.train.schedule,
            skeleton_latent_dim=self.train.skeleton_latent_dim,
            pos_latent_dim=self.train.pos_latent_dim,
            learning_rate=self.train.learning_rate,
            batch_size=self.train.batch_size,
            seed=self.seed,
        )

    def hash(self) -> str:
        return sha256_bytes(canonical_json(self.to_dict()).encode("utf-8"))


def default_run_config(output_dir: str = "runs/default", seed: int = 7) -> RunConfig:
    return RunConfig(seed=seed, output_dir=output_dir, synth=SynthSpec())


def _require_keys(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}", path)


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError("must be a mapping", name)
    return value


def apply_env_overrides(doc: dict) -> dict:
    """SYNSE_SEED and SYNSE_OUT override the seed and output directory only."""
    out = dict(doc)
    if "SYNSE_SEED" in os.environ:
        out["seed"] = int(os.environ["SYNSE_SEED"])
    if "SYNSE_OUT" in os.environ:
        out["output_dir"] = os.environ["SYNSE_OUT"]
    return out


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a YAML run configuration, applying env overrides."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must contain a mapping")
    return run_config_from_dict(apply_env_overrides(doc))


def run_config_from_dict(doc: dict) -> RunConfig:
    _require_keys(
        doc,
        {"schema_version", "seed", "output_dir", "data", "split", "train", "classifier", "gate"},
        "config",
    )
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}", "schema_version")

    data = _section(doc, "data")
    _require_keys(data, {"synth", "files"}, "data")
    synth = None
    files = None
    if "synth" in data:
        synth_doc = data["synth"] or {}
        _require_keys(
            synth_doc,
            {
                "num_verbs", "num_nouns", "visual_dim", "embed_dim", "samples_per_class",
                "noise_std", "unseen_pairs", "seed", "feature_scale",
            },
            "data.synth",
        )
        try:
            synth = SynthSpec.from_dict(synth_doc)
        except Exception as exc:
            raise ConfigError(str(exc), "data.synth") from exc
    if "files" in data:
        files_doc = data["files"] or {}
        _require_keys(
            files_doc,
            {"features", "features_dim", "word_vectors", "class_names", "fill_table", "pos_lexicon"},
            "data.files",
        )
        for key in ("features", "features_dim", "word_vectors", "class_names"):
            if key not in files_doc:
                raise ConfigError("required", f"data.files.{key}")
        files = FilesDataConfig(
            features=str(files_doc["features"]),
            features_dim=int(files_doc["features_dim"]),
            word_vectors=str(files_doc["word_vectors"]),
            class_names=str(files_doc["class_names"]),
            fill_table=files_doc.get("fill_table"),
            pos_lexicon=files_doc.get("pos_lexicon"),
        )

    split_doc = _section(doc, "split")
    _require_keys(
        split_doc,
        {"seen_ids", "unseen_ids", "gate_train_fraction", "gate_val_fraction", "test_seen_fraction"},
        "split",
    )
    split = SplitSettings(
        seen_ids=tuple(split_doc["seen_ids"]) if split_doc.get("seen_ids") is not None else None,
        unseen_ids=tuple(split_doc["unseen_ids"]) if split_doc.get("unseen_ids") is not None else None,
        gate_train_fraction=float(split_doc.get("gate_train_fraction", 0.05)),
        gate_val_fraction=float(split_doc.get("gate_val_fraction", 0.05)),
        test_seen_fraction=float(split_doc.get("test_seen_fraction", 0.2)),
    )

    train_doc = _section(doc, "train")
    _require_keys(
        train_doc,
        {"learning_rate", "batch_size", "skeleton_latent_dim", "pos_latent_dim", "schedule"},
        "train",
    )
    schedule_doc = train_doc.get("schedule")
    try:
        schedule = AnnealSchedule.from_dict(schedule_doc) if schedule_doc else DEFAULT_SCHEDULE
    except Exception as exc:
        raise ConfigError(str(exc), "train.schedule") from exc
    try:
        train_settings = TrainSettings(
            learning_rate=float(train_doc.get("learning_rate", 1e-4)),
            batch_size=int(train_doc.get("batch_size", 64)),
            skeleton_latent_dim=int(train_doc.get("skeleton_latent_dim", 16)),
            pos_latent_dim=int(train_doc.get("pos_latent_dim", 8)),
            schedule=schedule,
        )
    except Exception as exc:
        raise ConfigError(str(exc), "train") from exc

    clf_doc = _section(doc, "classifier")
    _require_keys(clf_doc, {"per_class_count", "epochs", "learning_rate", "batch_size"}, "classifier")
    classifier = ClassifierConfig(
        per_class_count=int(clf_doc.get("per_class_count", 500)),
        epochs=int(clf_doc.get("epochs", 300)),
        learning_rate=float(clf_doc.get("learning_rate", 1e-3)),
        batch_size=int(clf_doc.get("batch_size", 64)),
    )

    gate_doc = _section(doc, "gate")
    _require_keys(
        gate_doc, {"mode", "k", "temperature_grid", "threshold_grid", "regularization"}, "gate"
    )
    mode = gate_doc.get("mode", "hard")
    if mode not in ("hard", "soft", "off"):
        raise ConfigError(f"mode must be hard, soft or off, got {mode!r}", "gate.mode")
    gate = GateConfig(
        mode=mode,
        k=int(gate_doc["k"]) if gate_doc.get("k") is not None else None,
        temperature_grid=tuple(float(t) for t in gate_doc.get("temperature_grid", (1, 2, 3, 5, 10))),
        threshold_grid=tuple(
            float(t) for t in gate_doc.get("threshold_grid", GateConfig().threshold_grid)
        ),
        regularization=float(gate_doc.get("regularization", 1.0)),
    )

    try:
        return RunConfig(
            seed=int(doc.get("seed", 7)),
            output_dir=str(doc.get("output_dir", "runs/default")),
            synth=synth,
            files=files,
            split=split,
            train=train_settings,
            classifier=classifier,
            gate=gate,
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc), "config") from exc


# ---------------------------------------------------------------------------
# Artifact layout and manifests


class RunDir:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def path(self, rel: str) -> Path:
        return self.root / rel

    def load_manifest(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        return {"stages": {}}

    def record_stage(self, stage: str, config_hash: str, seed: int, files: list[Path]) -> None:
        manifest = self.load_manifest()
        manifest["stages"][stage] = {
            "config_hash": config_hash,
            "seed": seed,
            "version": __version__,
            "files": {str(p.relative_to(self.root)): sha256_file(p) for p in files},
        }
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )

    def guard_overwrite(self, paths: list[Path], force: bool) -> None:
        existing = [p for p in paths if p.exists()]
        if existing and not force:
            raise ArtifactExistsError(
                f"{existing[0]} already exists; pass --force to overwrite"
            )


# ---------------------------------------------------------------------------
# Dataset loading shared by the training and evaluation stages


def _load_class_names(path: str | Path) -> dict[int, str]:
    names: dict[int, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cid, name = line.split("\t", 1) if "\t" in line else line.split(None, 1)
        names[int(cid)] = name.strip()
    return names


def load_dataset(
    cfg: RunConfig,
) -> tuple[LabeledFeatureSet, PosEmbeddingTable, SplitSpec, list[ClassDescription]]:
    """Materialize (features, embedding table, split spec, descriptions) for a run."""
    rundir = RunDir(cfg.output_dir)
    if cfg.synth is not None:
        data = load_feature_set(rundir.path("data/features.synsec"), cfg.synth.visual_dim)
        table = load_embedding_table(rundir.path("data/embeddings.synsec"))
        split_doc = json.loads(rundir.path("data/split.json").read_text(encoding="utf-8"))
        split = SplitSpec.from_dict(split_doc)
        desc_doc = json.loads(rundir.path("data/descriptions.json").read_text(encoding="utf-8"))
        descriptions = [ClassDescription.from_dict(d) for d in desc_doc]
        return data, table, split, descriptions

    files = cfg.files
    data = load_feature_set(files.features, files.features_dim)
    fill = load_fill_table(files.fill_table) if files.fill_table else default_fill_table()
    lexicon = load_pos_lexicon(files.pos_lexicon) if files.pos_lexicon else default_pos_lexicon()
    names = _load_class_names(files.class_names)
    descriptions = [
        fill_missing_pos(name, fill, lexicon, class_id=cid) for cid, name in sorted(names.items())
    ]
    vectors = WordVectorSource.load(files.word_vectors)
    table = build_embedding_table(descriptions, vectors)
    split = SplitSpec(
        seen_ids=cfg.split.seen_ids,
        unseen_ids=cfg.split.unseen_ids,
        gate_train_fraction=cfg.split.gate_train_fraction,
        gate_val_fraction=cfg.split.gate_val_fraction,
        test_seen_fraction=cfg.split.test_seen_fraction,
        seed=derived_seed(cfg.seed, ROLE_PARTITION),
    )
    return data, table, split, descriptions


def _partition_checked(data: LabeledFeatureSet, split: SplitSpec) -> SplitResult:
    result = partition(data, split)
    violations = validate_zero_shot(result, split)
    if violations:
        raise SplitError(f"zero-shot contract violated: {violations[0]}")
    return result


# ---------------------------------------------------------------------------
# Stages


def stage_synth(cfg: RunConfig, force: bool = False) -> dict:
    if cfg.synth is None:
        raise ConfigError("synth stage requires a synth data section", "data.synth")
    rundir = RunDir(cfg.output_dir)
    outputs = [
        rundir.path("data/features.synsec"),
        rundir.path("data/embeddings.synsec"),
        rundir.path("data/split.json"),
        rundir.path("data/descriptions.json"),
    ]
    rundir.guard_overwrite(outputs, force)

    data, table, base_split, descriptions = generate(cfg.synth)
    split = SplitSpec(
        seen_ids=base_split.seen_ids,
        unseen_ids=base_split.unseen_ids,
        gate_train_fraction=cfg.split.gate_train_fraction,
        gate_val_fraction=cfg.split.gate_val_fraction,
        test_seen_fraction=cfg.split.test_seen_fraction,
        seed=derived_seed(cfg.seed, ROLE_PARTITION),
    )
    save_feature_set(data, outputs[0])
    save_embedding_table(table, outputs[1])
    outputs[2].write_text(json.dumps(split.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    outputs[3].write_text(
        json.dumps([d.to_dict() for d in descriptions], indent=2, sort_keys=True), encoding="utf-8"
    )
    rundir.record_stage("synth", cfg.hash(), cfg.seed, outputs)
    return {"n_samples": data.n_samples, "n_classes": len(table.class_ids)}


def checkpoint_paths(rundir: RunDir) -> dict[str, Path]:
    return {
        "manifest": rundir.path("checkpoint/model.json"),
        "s": rundir.path("checkpoint/vae_s.synsec"),
        "v": rundir.path("checkpoint/vae_v.synsec"),
        "n": rundir.path("checkpoint/vae_n.synsec"),
        "trajectory": rundir.path("checkpoint/trajectory.json"),
    }


def save_checkpoint(rundir: RunDir, model: AlignedModel, trajectory: list) -> list[Path]:
    paths = checkpoint_paths(rundir)
    init_base = derived_seed(model.config.seed, ROLE_MODEL_INIT)
    for offset, tag in enumerate(("s", "v", "n")):
        save_vae_pair(model.vaes()[tag], paths[tag], init_seed=init_base + offset)
    paths["trajectory"].write_text(
        json.dumps([r.to_dict() for r in trajectory], sort_keys=True), encoding="utf-8"
    )
    doc = {
        "format": "synse-checkpoint-v1",
        "trained_epochs": model.trained_epochs,
        "config": model.config.to_dict(),
        "vae_files": {tag: paths[tag].name for tag in ("s", "v", "n")},
        "trajectory_file": paths["trajectory"].name,
    }
    paths["manifest"].write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    return list(paths.values())


def load_checkpoint(rundir: RunDir) -> tuple[AlignedModel, list[dict]]:
    paths = checkpoint_paths(rundir)
    doc = json.loads(paths["manifest"].read_text(encoding="utf-8"))
    model = AlignedModel(
        vae_s=load_vae_pair(paths["s"]),
        vae_v=load_vae_pair(paths["v"]),
        vae_n=load_vae_pair(paths["n"]),
        config=TrainConfig.from_dict(doc["config"]),
        trained_epochs=int(doc["trained_epochs"]),
    )
    trajectory = json.loads(paths["trajectory"].read_text(encoding="utf-8"))
    return model, trajectory


def stage_train(cfg: RunConfig, force: bool = False) -> dict:
    rundir = RunDir(cfg.output_dir)
    outputs = list(checkpoint_paths(rundir).values())
    rundir.guard_overwrite(outputs, force)

    data, table, split_spec, _ = load_dataset(cfg)
    split = _partition_checked(data, split_spec)

    model = build_model(data.dim, table.dim, cfg.train_config())
    result = train(model, split.train, table)
    files = save_checkpoint(rundir, result.model, result.trajectory)
    rundir.record_stage("train", cfg.hash(), cfg.seed, files)
    first, last = result.trajectory[0], result.trajectory[-1]
    return {
        "epochs": result.model.trained_epochs,
        "first_epoch_loss": first.total,
        "final_epoch_loss": last.total,
    }


def _fit_unseen_classifier(cfg: RunConfig, model: AlignedModel, table, split_spec, per_class_count=None):
    samples = generate_unseen_latents(
        model,
        table,
        split_spec.unseen_ids,
        per_class_count or cfg.classifier.per_class_count,
        derived_seed(cfg.seed, ROLE_GEN_UNSEEN),
    )
    clf = train_softmax(
        samples,
        epochs=cfg.classifier.epochs,
        learning_rate=cfg.classifier.learning_rate,
        seed=derived_seed(cfg.seed, ROLE_ZSL_CLF),
        batch_size=cfg.classifier.batch_size,
    )
    return samples, clf


def stage_eval_zsl(cfg: RunConfig, force: bool = False, emit_plot: bool = False) -> dict:
    rundir = RunDir(cfg.output_dir)
    report_path = rundir.path("reports/zsl.json")
    rundir.guard_overwrite([report_path], force)

    data, table, split_spec, _ = load_dataset(cfg)
    split = _partition_checked(data, split_spec)
    model, trajectory = load_checkpoint(rundir)

    _, clf = _fit_unseen_classifier(cfg, model, table, split_spec)
    preds = zsl_predict(model, clf, split.test_unseen.features)
    accuracy = per_class_mean_accuracy(preds, split.test_unseen.labels, split_spec.unseen_ids)

    per_class = {
        str(cid): 100.0 * float(np.mean(preds[split.test_unseen.labels == cid] == cid))
        for cid in split_spec.unseen_ids
    }
    doc = {
        "zsl_accuracy": accuracy,
        "chance": 100.0 / len(split_spec.unseen_ids),
        "per_class": per_class,
    }
    if cfg.synth is not None:
        doc["oracle_ceiling"] = oracle_ceiling(data, cfg.synth)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    files = [report_path]
    if emit_plot:
        plot_path = rundir.path("plots/zsl.png")
        write_plot(trajectory, {"zsl": accuracy, **{k: v for k, v in per_class.items()}}, plot_path)
        files.append(plot_path)
    rundir.record_stage("eval-zsl", cfg.hash(), cfg.seed, files)
    return doc


def _eval_gzsl_core(
    cfg: RunConfig,
    model: AlignedModel,
    table: PosEmbeddingTable,
    split_spec: SplitSpec,
    split: SplitResult,
    mode: str,
    no_temp: bool = False,
) -> tuple[MetricsReport, dict, GateModel | None]:
    """Shared GZSL evaluation path; returns (report, gate summary, gate model)."""
    gen_samples, zsl_clf = _fit_unseen_classifier(cfg, model, table, split_spec)
    zsl_preds = zsl_predict(model, zsl_clf, split.test_unseen.features)

    if mode == "off":
        seen_latents = encode_seen_latents(
            model,
            split.train,
            derived_seed(cfg.seed, ROLE_JOINT_SEEN),
            per_class_count=cfg.classifier.per_class_count,
        )
        joint = train_joint_classifier(
            model,
            table,
            seen_latents,
            gen_samples,
            epochs=cfg.classifier.epochs,
            learning_rate=cfg.classifier.learning_rate,
            seed=derived_seed(cfg.seed, ROLE_JOINT_CLF),
        )
        mu_seen, _ = encode(model.vae_s, split.test_seen.features.astype(np.float64))
        mu_unseen, _ = encode(model.vae_s, split.test_unseen.features.astype(np.float64))
        preds_seen = joint.predict(mu_seen)
        preds_unseen = joint.predict(mu_unseen)
        gate_doc = {"mode": "off"}
        gate = None
    else:
        seen_clf = train_softmax(
            LatentSampleSet(split.train.features.astype(np.float64), split.train.labels),
            epochs=cfg.classifier.epochs,
            learning_rate=cfg.classifier.learning_rate,
            seed=derived_seed(cfg.seed, ROLE_SEEN_CLF),
            batch_size=cfg.classifier.batch_size,
        )
        k = cfg.gate.k or min(len(split_spec.unseen_ids), len(split_spec.seen_ids))
        synth_noise = residual_noise_std(model, split.train.features.astype(np.float64))

        def _pack(real_subset, role) -> GatePack:
            real = real_gate_pack(
                real_subset.features.astype(np.float64),
                real_subset.labels,
                model,
                seen_clf,
                zsl_clf,
            )
            per_class = max(1, round(real_subset.n_samples / len(split_spec.unseen_ids)))
            synth = synthesize_unseen_gate_pack(
                model,
                table,
                split_spec.unseen_ids,
                per_class,
                derived_seed(cfg.seed, role),
                seen_clf,
                zsl_clf,
                noise_std=synth_noise,
            )
            return GatePack.concatenate(real, synth)

        train_pack = _pack(split.gate_train, ROLE_GATE_SYNTH_TRAIN)
        val_pack = _pack(split.gate_val, ROLE_GATE_SYNTH_VAL)
        temperature_grid = (1.0,) if no_temp else cfg.gate.temperature_grid
        gate = tune_gate(
            train_pack,
            val_pack,
            temperature_grid,
            cfg.gate.threshold_grid,
            k,
            tuple(seen_clf.class_ids),
            tuple(zsl_clf.class_ids),
            mode=mode,
            regularization=cfg.gate.regularization,
        )
        preds_seen, _, _ = gzsl_predict(split.test_seen.features, seen_clf, model, zsl_clf, gate)
        preds_unseen, _, _ = gzsl_predict(split.test_unseen.features, seen_clf, model, zsl_clf, gate)
        gate_doc = {
            "mode": mode,
            "k": gate.k,
            "temperature": gate.temperature,
            "threshold": gate.threshold,
            "regularization": cfg.gate.regularization,
            "temperature_scaling": not no_temp,
        }

    report = assemble_report(zsl_preds, (preds_seen, preds_unseen), split, split_spec)
    return report, gate_doc, gate


def gzsl_report_name(mode: str, no_temp: bool) -> str:
    suffix = ""
    if mode != "hard":
        suffix += f"_{mode}"
    if no_temp:
        suffix += "_no_temp"
    return f"reports/gzsl{suffix}.json"


def stage_eval_gzsl(
    cfg: RunConfig,
    force: bool = False,
    gate_mode: str | None = None,
    no_temp: bool = False,
    emit_plot: bool = False,
) -> dict:
    mode = gate_mode or cfg.gate.mode
    if mode not in ("hard", "soft", "off"):
        raise ConfigError(f"unknown gate mode {mode!r}", "gate.mode")
    rundir = RunDir(cfg.output_dir)
    report_path = rundir.path(gzsl_report_name(mode, no_temp))
    rundir.guard_overwrite([report_path], force)

    data, table, split_spec, _ = load_dataset(cfg)
    split = _partition_checked(data, split_spec)
    model, trajectory = load_checkpoint(rundir)
    report, gate_doc, gate = _eval_gzsl_core(cfg, model, table, split_spec, split, mode, no_temp)

    doc = {"report": report.to_dict(), "gate": gate_doc}
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    files = [report_path]
    if gate is not None:
        gate_path = rundir.path(
            gzsl_report_name(mode, no_temp).replace("reports/gzsl", "checkpoint/gate")
        )
        gate.save(gate_path)
        files.append(gate_path)
    if emit_plot:
        plot_path = rundir.path(f"plots/gzsl_{mode}.png")
        write_plot(
            trajectory,
            {
                "seen": report.seen_accuracy,
                "unseen": report.unseen_accuracy,
                "harmonic": report.harmonic_mean,
            },
            plot_path,
        )
        files.append(plot_path)
    rundir.record_stage(f"eval-gzsl[{mode}{'-no-temp' if no_temp else ''}]", cfg.hash(), cfg.seed, files)
    return doc


ABLATIONS = ("softgating", "no-temp", "gate-off", "embedding-dims", "sample-count")


def stage_ablate(cfg: RunConfig, which: str, force: bool = False) -> dict:
    if which not in ABLATIONS:
        raise ConfigError(f"unknown ablation {which!r}; choose from {ABLATIONS}", "ablate")
    rundir = RunDir(cfg.output_dir)
    report_path = rundir.path(f"reports/ablate_{which}.json")
    table_path = rundir.path(f"reports/ablate_{which}.txt")
    rundir.guard_overwrite([report_path, table_path], force)

    data, table, split_spec, _ = load_dataset(cfg)
    split = _partition_checked(data, split_spec)

    rows: list[dict] = []
    note = ""
    if which in ("softgating", "no-temp", "gate-off"):
        model, _ = load_checkpoint(rundir)
        base_report, _, _ = _eval_gzsl_core(cfg, model, table, split_spec, split, "hard", False)
        rows.append(_gzsl_row("hard gating (default)", base_report))
        if which == "softgating":
            variant, _, _ = _eval_gzsl_core(cfg, model, table, split_spec, split, "soft", False)
            rows.append(_gzsl_row("soft gating", variant))
            skew_soft = variant.seen_accuracy - variant.unseen_accuracy
            skew_hard = base_report.seen_accuracy - base_report.unseen_accuracy
            note = (
                f"soft gating skew (seen - unseen) = {skew_soft:+.2f} vs hard {skew_hard:+.2f}; "
                + ("soft mode is seen-biased" if skew_soft > skew_hard else "no seen bias observed")
            )
        elif which == "no-temp":
            variant, _, _ = _eval_gzsl_core(cfg, model, table, split_spec, split, "hard", True)
            rows.append(_gzsl_row("temperature fixed at 1", variant))
            note = f"harmonic mean change without calibration: {variant.harmonic_mean - base_report.harmonic_mean:+.2f}"
        else:
            variant, _, _ = _eval_gzsl_core(cfg, model, table, split_spec, split, "off", False)
            rows.append(_gzsl_row("joint classifier, no gate", variant))
            note = f"unseen accuracy change without the gate: {variant.unseen_accuracy - base_report.unseen_accuracy:+.2f}"
    elif which == "embedding-dims":
        base = cfg.train.skeleton_latent_dim
        for factor, label in ((0.5, "half"), (1.0, "default"), (2.0, "double")):
            dim = int(base * factor)
            if dim % 2 != 0 or dim < 2:
                raise ConfigError(f"latent dim {dim} is not splittable", "train.skeleton_latent_dim")
            variant_cfg = RunConfig(
                seed=cfg.seed,
                output_dir=cfg.output_dir,
                synth=cfg.synth,
                files=cfg.files,
                split=cfg.split,
                train=TrainSettings(
                    learning_rate=cfg.train.learning_rate,
                    batch_size=cfg.train.batch_size,
                    skeleton_latent_dim=dim,
                    pos_latent_dim=dim // 2,
                    schedule=cfg.train.schedule,
                ),
                classifier=cfg.classifier,
                gate=cfg.gate,
            )
            model = build_model(data.dim, table.dim, variant_cfg.train_config())
            result = train(model, split.train, table)
            _, clf = _fit_unseen_classifier(variant_cfg, result.model, table, split_spec)
            preds = zsl_predict(result.model, clf, split.test_unseen.features)
            acc = per_class_mean_accuracy(preds, split.test_unseen.labels, split_spec.unseen_ids)
            rows.append({"label": f"latent {dim} ({label})", "zsl_accuracy": acc})
    else:  # sample-count
        model, _ = load_checkpoint(rundir)
        base = cfg.classifier.per_class_count
        for count, label in ((base // 2, "half"), (base, "default"), (base * 2, "double")):
            _, clf = _fit_unseen_classifier(cfg, model, table, split_spec, per_class_count=count)
            preds = zsl_predict(model, clf, split.test_unseen.features)
            acc = per_class_mean_accuracy(preds, split.test_unseen.labels, split_spec.unseen_ids)
            rows.append({"label": f"{count} samples per class ({label})", "zsl_accuracy": acc})

    doc = {"ablation": which, "rows": rows, "note": note}
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    table_path.write_text(render_ablation_table(doc), encoding="utf-8")
    rundir.record_stage(f"ablate[{which}]", cfg.hash(), cfg.seed, [report_path, table_path])
    return doc


def _gzsl_row(label: str, report: MetricsReport) -> dict:
    return {
        "label": label,
        "seen_accuracy": report.seen_accuracy,
        "unseen_accuracy": report.unseen_accuracy,
        "harmonic_mean": report.harmonic_mean,
        "zsl_accuracy": report.zsl_accuracy,
    }


def render_ablation_table(doc: dict) -> str:
    rows = doc["rows"]
    has_gzsl = any("seen_accuracy" in r for r in rows)
    lines = [f"ablation: {doc['ablation']}"]
    if has_gzsl:
        lines.append(f"{'variant':<34} {'s':>7} {'u':>7} {'h':>7}")
        for r in rows:
            lines.append(
                f"{r['label']:<34} {r['seen_accuracy']:>7.2f} {r['unseen_accuracy']:>7.2f} "
                f"{r['harmonic_mean']:>7.2f}"
            )
    else:
        lines.append(f"{'variant':<34} {'zsl':>7}")
        for r in rows:
            lines.append(f"{r['label']:<34} {r['zsl_accuracy']:>7.2f}")
    if doc.get("note"):
        lines.append(doc["note"])
    return "\n".join(lines) + "\n"


def stage_inspect(output_dir: str | Path) -> dict:
    """Verify recorded artifact hashes; returns {stage: {file: ok|mismatch|missing}}."""
    rundir = RunDir(output_dir)
    manifest = rundir.load_manifest()
    status: dict[str, dict[str, str]] = {}
    clean = True
    for stage, entry in manifest.get("stages", {}).items():
        status[stage] = {}
        for rel, digest in entry.get("files", {}).items():
            path = rundir.path(rel)
            if not path.exists():
                status[stage][rel] = "missing"
                clean = False
            elif sha256_file(path) != digest:
                status[stage][rel] = "mismatch"
                clean = False
            else:
                status[stage][rel] = "ok"
    return {"clean": clean, "stages": status}


def write_plot(trajectory: list[dict], metrics: dict[str, float], path: Path) -> None:
    """Loss-trajectory curve with a metrics bar panel."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    if trajectory:
        epochs = [r["epoch"] for r in trajectory]
        axes[0].plot(epochs, [r["total"] for r in trajectory], label="total")
        axes[0].plot(epochs, [r["cmr"] for r in trajectory], label="cross-modal")
        axes[0].set_xlabel("epoch")
        axes[0].set_ylabel("loss")
        axes[0].set_yscale("log")
        axes[0].legend()
    names = list(metrics)
    axes[1].bar(range(len(names)), [float(metrics[n]) for n in names])
    axes[1].set_xticks(range(len(names)))
    axes[1].set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    axes[1].set_ylabel("percent")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
