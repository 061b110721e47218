"""Command-line entry point.

Subcommands wrap the library stages: ``rig`` manufactures simulator datasets,
``ingest`` converts raw recordings, ``train-gan`` fits one signature bundle,
``synthesize`` completes a label space from a checkpoint, ``experiment`` runs
a full domain-adaptation protocol, ``report`` renders stored results.

Failures exit nonzero and print one machine-parseable line to stderr:
``ERROR <CLASS>: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import experiments, gan, rig, spectra, synthesis

log = logging.getLogger("fsgan")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _error_class(exc: Exception) -> tuple[str, int]:
    if hasattr(exc, "error_class"):
        code = EXIT_RUNTIME if isinstance(exc, experiments.LeakageError) else EXIT_CONFIG
        return exc.error_class, code
    if isinstance(exc, FileNotFoundError):
        return "MISSING_INPUT", EXIT_CONFIG
    if isinstance(exc, gan.TrainingDivergedError):
        return "TRAINING_DIVERGED", EXIT_RUNTIME
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return "CONFIG_INVALID", EXIT_CONFIG
    return "INTERNAL", EXIT_RUNTIME


def _fail(exc: Exception) -> int:
    name, code = _error_class(exc)
    message = " ".join(str(exc).split()) or exc.__class__.__name__
    print(f"ERROR {name}: {message}", file=sys.stderr)
    if log.isEnabledFor(logging.DEBUG):
        raise exc
    return code


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_classes(text: str) -> list[int]:
    return [int(c) for c in text.replace(",", " ").split()]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_rig(args) -> int:
    cfg = config_mod.load_config(args.config)
    spec = config_mod.rig_spec_from_config(cfg)
    if args.seed is not None:
        spec.seed = args.seed
        cfg["rig"]["seed"] = args.seed
    out = _out_dir(args)
    datasets = rig.make_all(spec)
    archive = out / "dataset.bin"
    spectra.save_domains(archive, datasets)
    config_mod.freeze_config(cfg, out)
    for d, ds in sorted(datasets.items()):
        log.info("domain %d: %s", d, ds.histogram())
    print(archive)
    return EXIT_OK


def cmd_ingest(args) -> int:
    recordings = spectra.read_recordings(args.manifest)
    datasets = spectra.preprocess_case_study(recordings, args.case)
    out = _out_dir(args)
    archive = out / "dataset.bin"
    spectra.save_domains(archive, datasets)
    config_mod.freeze_config({"ingest": {"manifest": str(args.manifest), "case": args.case}}, out)
    print(archive)
    return EXIT_OK


def cmd_train_gan(args) -> int:
    cfg = config_mod.load_config(args.config)
    gcfg = config_mod.gan_config_from_dict(cfg.get("gan", {}))
    if args.seed is not None:
        gcfg = config_mod.gan_config_from_dict({**gcfg.to_dict(), "seed": args.seed})
    domains = spectra.load_domains(args.dataset)
    if args.domain not in domains:
        raise config_mod.ConfigError(f"dataset has no domain {args.domain}")
    classes = _parse_classes(args.classes) if args.classes else None
    out = _out_dir(args)
    bundle = gan.train(
        domains[args.domain],
        args.fault_type,
        gcfg,
        fault_class_ids=classes,
        log_path=out / "training_log.csv",
    )
    checkpoint = out / "bundle.bin"
    gan.save_bundle(bundle, checkpoint)
    config_mod.freeze_config(cfg, out, command="train-gan", dataset=str(args.dataset),
                             domain=args.domain, fault_type=args.fault_type)
    print(checkpoint)
    return EXIT_OK


def cmd_synthesize(args) -> int:
    bundle = gan.load_bundle(args.checkpoint)
    domains = spectra.load_domains(args.target_healthy)
    if args.domain not in domains:
        raise config_mod.ConfigError(f"archive has no domain {args.domain}")
    healthy = domains[args.domain].select_classes([spectra.HEALTHY_CLASS])
    if len(healthy) == 0:
        raise config_mod.ConfigError(f"domain {args.domain} has no healthy samples")
    classes = _parse_classes(args.classes)
    if args.source_healthy is not None:
        src_domains = spectra.load_domains(args.source_healthy)
        if args.source_domain not in src_domains:
            raise config_mod.ConfigError(f"archive has no domain {args.source_domain}")
        src_healthy = src_domains[args.source_domain].select_classes([spectra.HEALTHY_CLASS])
        f = synthesis.scaling_factor(src_healthy, healthy, mode=args.scaling_mode)
    else:
        f = synthesis.ScalingFactor("scalar", 1.0)
    counts = {c: args.count for c in classes}
    seed = args.seed if args.seed is not None else 0
    synth = synthesis.complete_label_space([bundle], healthy, classes, counts, f, seed=seed)
    out = _out_dir(args)
    archive = out / "synthetic.bin"
    spectra.save_domains(archive, {synth.domain_id: synth})
    config_mod.freeze_config(
        {"synthesize": {
            "checkpoint": str(args.checkpoint), "target_healthy": str(args.target_healthy),
            "domain": args.domain, "classes": classes, "count": args.count,
            "scaling": f.value if f.mode == "scalar" else "per_bin", "seed": seed,
        }},
        out,
    )
    print(archive)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = config_mod.load_config(args.config)
    spec = config_mod.experiment_spec_from_config(cfg)
    if args.seed is not None:
        spec.seeds = (args.seed,)
    out = _out_dir(args)
    table = experiments.run_experiment(spec, keep_artifacts=True, threads=args.threads)
    table.to_csv(out / "results.csv")
    (out / "results.txt").write_text(table.format_text() + "\n")
    _write_residuals(spec, table, out)
    config_mod.freeze_config(cfg, out, command="experiment",
                             seeds=list(spec.seeds), threads=args.threads)
    print(table.format_text())
    return EXIT_OK


def _write_residuals(spec, table, out: Path) -> None:
    if spec.scenario != "partial" or not table.artifacts:
        return
    domains = spec.load_domains()
    source = domains[spec.source_domain]
    target = domains[spec.target_domain]
    first = table.artifacts[min(table.artifacts)]
    summary = experiments.residual_summary(first["synth"], source, target)
    experiments.write_residual_csv(out / "residuals.csv", summary)
    log.info("residual fractions per class: %s", summary["per_class"])


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    results = run_dir / "results.csv"
    if not results.exists():
        raise FileNotFoundError(f"no results.csv under {run_dir}")
    with open(results) as fh:
        lines = fh.read().strip().splitlines()
    import csv as _csv

    rows = list(_csv.reader(lines))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
    residuals = run_dir / "residuals.csv"
    if residuals.exists():
        print(f"residual spectra: {residuals}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsgan",
        description="Generate unseen spectral fault classes and evaluate them "
                    "in partial domain-adaptation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="parallel seed jobs")

    p = sub.add_parser("rig", help="manufacture a simulator dataset archive")
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(fn=cmd_rig)

    p = sub.add_parser("ingest", help="convert raw recordings to a spectral archive")
    p.add_argument("--manifest", required=True)
    p.add_argument("--case", required=True, choices=["cwru", "paderborn"])
    common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train-gan", help="train one fault-signature bundle")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True, help="spectral archive")
    p.add_argument("--domain", type=int, required=True, help="source domain id")
    p.add_argument("--fault-type", default="fault", dest="fault_type")
    p.add_argument("--classes", default=None, help="fault class ids, e.g. '1,2'")
    common(p)
    p.set_defaults(fn=cmd_train_gan)

    p = sub.add_parser("synthesize", help="synthesize fault classes from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target-healthy", required=True, dest="target_healthy",
                   help="archive providing the healthy carriers")
    p.add_argument("--domain", type=int, required=True, help="target domain id")
    p.add_argument("--classes", required=True, help="class ids to synthesize")
    p.add_argument("--count", type=int, default=200, help="samples per class")
    p.add_argument("--source-healthy", default=None, dest="source_healthy",
                   help="archive for the scaling-factor numerator")
    p.add_argument("--source-domain", type=int, default=0, dest="source_domain")
    p.add_argument("--scaling-mode", default="scalar", choices=["scalar", "per_bin"],
                   dest="scaling_mode")
    common(p)
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("experiment", help="run a full domain-adaptation protocol")
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("report", help="render stored experiment results")
    p.add_argument("--run-dir", required=True, dest="run_dir")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("FSGAN_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - boundary converts to exit codes
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
