"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration/usage error, 3 training divergence,
4 I/O (missing, malformed or already-existing artifacts).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .errors import (
    ArtifactExistsError,
    ConfigError,
    DivergenceError,
    FormatError,
    SpecError,
    SynseError,
)
from .pipeline import (
    ABLATIONS,
    RunConfig,
    apply_env_overrides,
    default_run_config,
    load_run_config,
    run_config_from_dict,
    stage_ablate,
    stage_eval_gzsl,
    stage_eval_zsl,
    stage_inspect,
    stage_synth,
    stage_train,
)
from .synth_bench import SynthSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synse",
        description="Zero-shot action recognition pipeline over precomputed features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, force: bool = True) -> None:
        p.add_argument("--config", help="run configuration YAML (defaults to the built-in run)")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the global seed")
        if force:
            p.add_argument("--force", action="store_true", help="overwrite existing artifacts")

    p_synth = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    common(p_synth)
    p_synth.add_argument(
        "--spec", help="synthetic spec: 'default' or a YAML file of spec fields"
    )

    p_train = sub.add_parser("train", help="train the aligned generative model")
    common(p_train)

    p_zsl = sub.add_parser("eval-zsl", help="evaluate zero-shot accuracy on unseen classes")
    common(p_zsl)
    p_zsl.add_argument("--emit-plot", action="store_true", help="write a loss/metric figure")

    p_gzsl = sub.add_parser("eval-gzsl", help="evaluate generalized zero-shot accuracy")
    common(p_gzsl)
    p_gzsl.add_argument("--gate", choices=("hard", "soft", "off"), help="gating mode override")
    p_gzsl.add_argument(
        "--no-temp-scaling", action="store_true", help="force the gate temperature to 1"
    )
    p_gzsl.add_argument("--emit-plot", action="store_true", help="write a loss/metric figure")

    p_ablate = sub.add_parser("ablate", help="run an ablation and emit a comparison table")
    common(p_ablate)
    p_ablate.add_argument("--which", required=True, choices=ABLATIONS)

    p_inspect = sub.add_parser("inspect", help="verify artifact hashes against the manifest")
    p_inspect.add_argument("--out", help="run directory to inspect")
    p_inspect.add_argument("--config", help="config whose output directory should be inspected")

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    # precedence: command-line flags > environment overrides > config file
    if getattr(args, "spec", None):
        if args.spec == "default":
            spec = SynthSpec()
        else:
            spec_doc = yaml.safe_load(Path(args.spec).read_text(encoding="utf-8")) or {}
            spec = SynthSpec.from_dict(spec_doc)
        doc = default_run_config().to_dict()
        doc["data"] = {"synth": spec.to_dict()}
    elif args.config:
        doc = load_run_config(args.config).to_dict()
    else:
        doc = default_run_config().to_dict()
    doc = apply_env_overrides(doc)
    if getattr(args, "out", None):
        doc["output_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    return run_config_from_dict(doc)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "inspect":
            out = args.out
            if out is None and args.config:
                out = load_run_config(args.config).output_dir
            if out is None:
                out = default_run_config().output_dir
            result = stage_inspect(out)
            print(json.dumps(result, indent=2, sort_keys=True))
            return EXIT_OK if result["clean"] else EXIT_IO

        cfg = _resolve_config(args)
        if args.command == "synth":
            summary = stage_synth(cfg, force=args.force)
            print(f"synth: wrote {summary['n_samples']} samples over {summary['n_classes']} classes")
        elif args.command == "train":
            summary = stage_train(cfg, force=args.force)
            print(
                f"train: {summary['epochs']} epochs, loss {summary['first_epoch_loss']:.4f} "
                f"-> {summary['final_epoch_loss']:.4f}"
            )
        elif args.command == "eval-zsl":
            doc = stage_eval_zsl(cfg, force=args.force, emit_plot=args.emit_plot)
            line = f"eval-zsl: accuracy {doc['zsl_accuracy']:.2f}% (chance {doc['chance']:.2f}%)"
            if "oracle_ceiling" in doc:
                line += f", oracle ceiling {doc['oracle_ceiling']:.2f}%"
            print(line)
        elif args.command == "eval-gzsl":
            doc = stage_eval_gzsl(
                cfg,
                force=args.force,
                gate_mode=args.gate,
                no_temp=args.no_temp_scaling,
                emit_plot=args.emit_plot,
            )
            r = doc["report"]
            print(
                f"eval-gzsl[{doc['gate']['mode']}]: s={r['seen_accuracy']:.2f} "
                f"u={r['unseen_accuracy']:.2f} h={r['harmonic_mean']:.2f}"
            )
        elif args.command == "ablate":
            doc = stage_ablate(cfg, which=args.which, force=args.force)
            from .pipeline import render_ablation_table

            print(render_ablation_table(doc), end="")
        return EXIT_OK
    except (ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ArtifactExistsError, FormatError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SynseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
