"""Domain-adaptation experiment protocols and evaluation.

Partial: only the healthy class is shared; fault-signature bundles trained on
the source domain synthesize every fault class for the target, and an
evaluation classifier trained on real source data plus real target healthy
data plus synthetic target faults is scored on the real target test set
against a source-only baseline.

OpenSet&Partial: each domain holds private fault types; bundles are trained
per domain and signatures cross the domain gap in both directions with
direction-specific scaling factors; one classifier covers the union label
space and is scored on both domains' test sets.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rig as rig_mod
from .blocks import build_eval_classifier
from .gan import GanBundle, GanConfig, fit_classifier, predict_classes, train
from .spectra import (
    HEALTHY_CLASS,
    DomainDataset,
    SampleSet,
    load_domains,
    split_train_test,
)
from .synthesis import ScalingFactor, complete_label_space, scaling_factor


class LeakageError(RuntimeError):
    """A composed training set contains a real sample of an unseen class."""

    error_class = "SPEC_VIOLATION"


@dataclass
class ExperimentSpec:
    scenario: str
    source_domain: int
    target_domain: int
    name: str = "experiment"
    rig: rig_mod.RigSpec | None = None
    data_path: str | None = None
    fault_types: dict[str, list[int]] | None = None
    private_types: dict[str, list[str]] | None = None
    shared_classes: tuple[int, ...] = (HEALTHY_CLASS,)
    eval_kernel: int = 12
    eval_epochs: int = 2000
    eval_batch: int = 64
    test_fraction: float = 0.30
    scaling_mode: str = "scalar"
    seeds: tuple[int, ...] = (0, 1, 2)
    gan: GanConfig = field(default_factory=GanConfig)

    def __post_init__(self):
        if self.scenario not in ("partial", "openset_partial"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.rig is None and self.data_path is None:
            raise ValueError("experiment needs either a rig block or a dataset archive path")
        if self.scenario == "openset_partial":
            if not self.private_types or not {"source", "target"} <= set(self.private_types):
                raise ValueError("openset_partial needs private_types for both source and target")
            overlap = set(self.private_types["source"]) & set(self.private_types["target"])
            if overlap:
                raise ValueError(f"overlapping private fault types: {sorted(overlap)}")
        self.seeds = tuple(int(s) for s in self.seeds)

    def resolve_fault_types(self) -> dict[str, list[int]]:
        if self.fault_types is not None:
            return {k: [int(c) for c in v] for k, v in self.fault_types.items()}
        if self.rig is not None:
            return self.rig.fault_types()
        raise ValueError("fault_types must be given when loading from an archive")

    def load_domains(self) -> dict[int, DomainDataset]:
        if self.rig is not None:
            return rig_mod.make_all(self.rig)
        return load_domains(self.data_path)


@dataclass
class ResultRow:
    shift: str
    test_set: str
    variant: str
    mean: float
    std: float
    seeds: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        for v in self.values + (self.mean,):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"balanced accuracy out of [0, 1]: {v}")


@dataclass
class ResultsTable:
    rows: list[ResultRow]
    artifacts: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["shift", "test_set", "variant", "mean", "std", "seeds", "values"])
            for r in self.rows:
                writer.writerow([
                    r.shift, r.test_set, r.variant, f"{r.mean:.6f}", f"{r.std:.6f}",
                    " ".join(str(s) for s in r.seeds),
                    " ".join(f"{v:.6f}" for v in r.values),
                ])

    def format_text(self) -> str:
        header = f"{'shift':<12} {'test':<5} {'variant':<9} {'balanced accuracy':<20}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.shift:<12} {r.test_set:<5} {r.variant:<9} {r.mean * 100:6.2f} ± {r.std * 100:.2f}"
            )
        return "\n".join(lines)

    def lookup(self, test_set: str, variant: str) -> ResultRow:
        for r in self.rows:
            if r.test_set == test_set and r.variant == variant:
                return r
        raise KeyError(f"no row for test_set={test_set!r} variant={variant!r}")


def balanced_accuracy(y_true, y_pred, num_classes: int | None = None) -> float:
    """Unweighted mean of per-class recall; classes without true instances
    are excluded with a warning."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    classes = np.arange(num_classes) if num_classes is not None else np.unique(y_true)
    recalls = []
    for c in classes:
        mask = y_true == c
        if not np.any(mask):
            warnings.warn(f"class {c} has no true instances; excluded from balanced accuracy")
            continue
        recalls.append(float(np.mean(y_pred[mask] == c)))
    if not recalls:
        raise ValueError("no class has true instances")
    return float(np.mean(recalls))


def derived_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def train_eval_classifier(
    bins: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    kernel: int,
    epochs: int,
    batch_size: int,
    seed: int,
    holdout_fraction: float = 0.1,
):
    """Fit the evaluation classifier; returns (model, per-epoch accuracy
    curve on a held-out slice)."""
    rng = np.random.default_rng(seed)
    n = bins.shape[0]
    order = rng.permutation(n)
    k = int(np.floor(holdout_fraction * n))
    hold, fit = order[:k], order[k:]
    spec = build_eval_classifier(num_classes, kernel, input_bins=bins.shape[1])
    model, curve = fit_classifier(
        spec, bins[fit], labels[fit],
        epochs=epochs, batch_size=batch_size, seed=rng,
        eval_bins=bins[hold] if k else None,
        eval_labels=labels[hold] if k else None,
    )
    return model, curve


def assert_no_leakage(train_set: SampleSet, domain_id: int, unseen_classes) -> None:
    unseen = set(int(c) for c in unseen_classes)
    for i in range(len(train_set)):
        if (
            not train_set.synthetic[i]
            and int(train_set.domain_ids[i]) == domain_id
            and int(train_set.class_ids[i]) in unseen
        ):
            raise LeakageError(
                f"real sample of unseen class {int(train_set.class_ids[i])} from domain "
                f"{domain_id} leaked into a training set"
            )


def _as_sample_set(ds: DomainDataset) -> SampleSet:
    return SampleSet(ds.bins, ds.class_ids, ds.domain_ids, ds.synthetic)


def _evaluate(model, test: SampleSet, label_map: dict[int, int]) -> float:
    y_true = np.array([label_map[int(c)] for c in test.class_ids], dtype=np.int64)
    y_pred = predict_classes(model, test.bins)
    return balanced_accuracy(y_true, y_pred, num_classes=len(label_map))


def _mean_std(values: list[float]) -> tuple[float, float]:
    return float(np.mean(values)), float(np.std(values))


# ---------------------------------------------------------------------------
# Partial DA
# ---------------------------------------------------------------------------

def _partial_seed_run(spec: ExperimentSpec, seed: int, keep_artifacts: bool) -> dict:
    domains = spec.load_domains()
    source, target = domains[spec.source_domain], domains[spec.target_domain]
    fault_types = spec.resolve_fault_types()
    fault_ids = sorted(c for ids in fault_types.values() for c in ids)

    target_train, target_test = split_train_test(
        target, spec.test_fraction, unseen_classes=fault_ids, seed=derived_seed(seed, 101)
    )
    if set(target_train.classes()) - set(spec.shared_classes):
        raise LeakageError("partial scenario: target training data must be healthy-only")
    target_healthy_train = target_train.select_classes([HEALTHY_CLASS])

    bundles = []
    for i, (fault_type, ids) in enumerate(sorted(fault_types.items())):
        cfg = replace(spec.gan, seed=derived_seed(seed, 200 + i))
        bundles.append(train(source, fault_type, cfg, fault_class_ids=ids))

    f = scaling_factor(
        source.select_classes([HEALTHY_CLASS]), target_healthy_train, mode=spec.scaling_mode
    )
    source_counts = {c: int(np.sum(source.class_ids == c)) for c in fault_ids}
    synth = complete_label_space(
        bundles, target_healthy_train, fault_ids, source_counts, f, seed=derived_seed(seed, 300)
    )

    label_map = {c: i for i, c in enumerate([HEALTHY_CLASS] + fault_ids)}
    proposed_train = SampleSet.concat(
        [_as_sample_set(source), _as_sample_set(target_healthy_train), _as_sample_set(synth)]
    )
    baseline_train = _as_sample_set(source)
    assert_no_leakage(proposed_train, spec.target_domain, fault_ids)
    assert_no_leakage(baseline_train, spec.target_domain, fault_ids)

    accs = {}
    for variant, train_set in (("baseline", baseline_train), ("proposed", proposed_train)):
        y = np.array([label_map[int(c)] for c in train_set.class_ids], dtype=np.int64)
        model, _ = train_eval_classifier(
            train_set.bins, y, len(label_map), spec.eval_kernel,
            spec.eval_epochs, spec.eval_batch, seed=derived_seed(seed, 400),
        )
        accs[variant] = _evaluate(model, _as_sample_set(target_test), label_map)

    out = {"accs": accs}
    if keep_artifacts:
        out["synth"] = synth
        out["bundles"] = bundles
        out["scaling"] = f
        out["target_test"] = target_test
    return out


def _run_seed_jobs(job, spec: ExperimentSpec, keep_artifacts: bool, threads: int) -> list[dict]:
    if threads <= 1 or len(spec.seeds) <= 1:
        return [job(spec, seed, keep_artifacts) for seed in spec.seeds]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(threads, len(spec.seeds))) as pool:
        futures = [pool.submit(job, spec, seed, keep_artifacts) for seed in spec.seeds]
        return [f.result() for f in futures]


def run_partial(spec: ExperimentSpec, keep_artifacts: bool = False, threads: int = 1) -> ResultsTable:
    if spec.scenario != "partial":
        raise ValueError(f"run_partial got scenario {spec.scenario!r}")
    shift = f"{spec.source_domain}->{spec.target_domain}"
    per_variant: dict[str, list[float]] = {"baseline": [], "proposed": []}
    artifacts = {}
    for seed, result in zip(spec.seeds, _run_seed_jobs(_partial_seed_run, spec, keep_artifacts, threads)):
        for variant, acc in result["accs"].items():
            per_variant[variant].append(acc)
        if keep_artifacts:
            artifacts[seed] = result
    rows = [
        ResultRow(shift, "T", variant, *_mean_std(values), spec.seeds, tuple(values))
        for variant, values in per_variant.items()
    ]
    return ResultsTable(rows, artifacts)


# ---------------------------------------------------------------------------
# OpenSet & Partial DA
# ---------------------------------------------------------------------------

def _openset_seed_run(spec: ExperimentSpec, seed: int, keep_artifacts: bool) -> dict:
    domains = spec.load_domains()
    source, target = domains[spec.source_domain], domains[spec.target_domain]
    fault_types = spec.resolve_fault_types()
    types_s = spec.private_types["source"]
    types_t = spec.private_types["target"]
    ids_s = sorted(c for t in types_s for c in fault_types[t])
    ids_t = sorted(c for t in types_t for c in fault_types[t])
    if set(ids_s) & set(ids_t):
        raise ValueError("overlapping private fault class ids")

    s_train, s_test = split_train_test(
        source, spec.test_fraction, unseen_classes=ids_t, seed=derived_seed(seed, 111)
    )
    t_train, t_test = split_train_test(
        target, spec.test_fraction, unseen_classes=ids_s, seed=derived_seed(seed, 112)
    )
    # training pools hold only each domain's own private classes plus healthy
    s_train = s_train.select_classes([HEALTHY_CLASS] + ids_s)
    t_train = t_train.select_classes([HEALTHY_CLASS] + ids_t)

    bundles_s, bundles_t = [], []
    i = 0
    for domain_train, types, bundles in ((s_train, types_s, bundles_s), (t_train, types_t, bundles_t)):
        for fault_type in sorted(types):
            cfg = replace(spec.gan, seed=derived_seed(seed, 220 + i))
            bundles.append(train(domain_train, fault_type, cfg, fault_class_ids=fault_types[fault_type]))
            i += 1

    healthy_s = s_train.select_classes([HEALTHY_CLASS])
    healthy_t = t_train.select_classes([HEALTHY_CLASS])
    # a signature learned in one domain is scaled by E(healthy of its domain)
    # over E(healthy of the receiving domain)
    f_to_t = scaling_factor(healthy_s, healthy_t, mode=spec.scaling_mode)
    f_to_s = scaling_factor(healthy_t, healthy_s, mode=spec.scaling_mode)
    counts_s = {c: int(np.sum(s_train.class_ids == c)) for c in ids_s}
    counts_t = {c: int(np.sum(t_train.class_ids == c)) for c in ids_t}
    synth_t = complete_label_space(bundles_s, healthy_t, ids_s, counts_s, f_to_t,
                                   seed=derived_seed(seed, 310))
    synth_s = complete_label_space(bundles_t, healthy_s, ids_t, counts_t, f_to_s,
                                   seed=derived_seed(seed, 311))

    label_map = {c: i for i, c in enumerate([HEALTHY_CLASS] + sorted(ids_s + ids_t))}
    baseline_train = SampleSet.concat([_as_sample_set(s_train), _as_sample_set(t_train)])
    proposed_train = SampleSet.concat(
        [baseline_train, _as_sample_set(synth_s), _as_sample_set(synth_t)]
    )
    for train_set in (baseline_train, proposed_train):
        assert_no_leakage(train_set, spec.source_domain, ids_t)
        assert_no_leakage(train_set, spec.target_domain, ids_s)

    accs: dict[str, dict[str, float]] = {}
    for variant, train_set in (("baseline", baseline_train), ("proposed", proposed_train)):
        y = np.array([label_map[int(c)] for c in train_set.class_ids], dtype=np.int64)
        model, _ = train_eval_classifier(
            train_set.bins, y, len(label_map), spec.eval_kernel,
            spec.eval_epochs, spec.eval_batch, seed=derived_seed(seed, 410),
        )
        accs[variant] = {
            "S": _evaluate(model, _as_sample_set(s_test), label_map),
            "T": _evaluate(model, _as_sample_set(t_test), label_map),
        }

    out = {"accs": accs}
    if keep_artifacts:
        out.update(synth_s=synth_s, synth_t=synth_t, bundles_s=bundles_s, bundles_t=bundles_t)
    return out


def run_openset_partial(spec: ExperimentSpec, keep_artifacts: bool = False, threads: int = 1) -> ResultsTable:
    if spec.scenario != "openset_partial":
        raise ValueError(f"run_openset_partial got scenario {spec.scenario!r}")
    shift = f"{spec.source_domain}<->{spec.target_domain}"
    values: dict[tuple[str, str], list[float]] = {}
    artifacts = {}
    for seed, result in zip(spec.seeds, _run_seed_jobs(_openset_seed_run, spec, keep_artifacts, threads)):
        for variant, per_set in result["accs"].items():
            for test_set, acc in per_set.items():
                values.setdefault((variant, test_set), []).append(acc)
        if keep_artifacts:
            artifacts[seed] = result
    rows = [
        ResultRow(shift, test_set, variant, *_mean_std(v), spec.seeds, tuple(v))
        for (variant, test_set), v in sorted(values.items())
    ]
    return ResultsTable(rows, artifacts)


def run_experiment(spec: ExperimentSpec, keep_artifacts: bool = False, threads: int = 1) -> ResultsTable:
    if spec.scenario == "partial":
        return run_partial(spec, keep_artifacts, threads)
    return run_openset_partial(spec, keep_artifacts, threads)


# ---------------------------------------------------------------------------
# synthetic-validation model selection
# ---------------------------------------------------------------------------

def select_model_on_synthetic(
    spec: ExperimentSpec,
    candidate_kernels=(3, 12),
    *,
    artifacts: dict | None = None,
) -> tuple[int, dict[int, list[float]]]:
    """Pick the eval-classifier kernel by accuracy on held-out synthetic
    faults.  ``artifacts`` (from run_partial with keep_artifacts) reuses the
    trained bundles; otherwise one partial pipeline runs per seed."""
    candidates = list(candidate_kernels)
    if not candidates:
        raise ValueError("candidate kernel list is empty")
    if artifacts is None:
        artifacts = run_partial(replace(spec, scenario="partial"), keep_artifacts=True).artifacts
    report: dict[int, list[float]] = {k: [] for k in candidates}
    for seed, art in sorted(artifacts.items()):
        synth = art["synth"]
        rng = np.random.default_rng(derived_seed(seed, 500))
        order = rng.permutation(len(synth))
        k_val = max(1, int(0.2 * len(synth)))
        val_idx, fit_idx = order[:k_val], order[k_val:]
        domains = spec.load_domains()
        source = domains[spec.source_domain]
        target = domains[spec.target_domain]
        target_train, _ = split_train_test(
            target, spec.test_fraction,
            unseen_classes=sorted(set(synth.classes())), seed=derived_seed(seed, 101),
        )
        healthy_train = target_train.select_classes([HEALTHY_CLASS])
        fit_set = SampleSet.concat(
            [_as_sample_set(source), _as_sample_set(healthy_train), _as_sample_set(synth.subset(fit_idx))]
        )
        val_set = synth.subset(val_idx)
        label_map = {c: i for i, c in enumerate([HEALTHY_CLASS] + sorted(set(synth.classes())))}
        y_fit = np.array([label_map[int(c)] for c in fit_set.class_ids], dtype=np.int64)
        y_val = np.array([label_map[int(c)] for c in val_set.class_ids], dtype=np.int64)
        for kernel in candidates:
            model, _ = train_eval_classifier(
                fit_set.bins, y_fit, len(label_map), kernel,
                spec.eval_epochs, spec.eval_batch, seed=derived_seed(seed, 510 + kernel),
            )
            acc = float(np.mean(predict_classes(model, val_set.bins) == y_val))
            report[kernel].append(acc)
    chosen = max(candidates, key=lambda k: (float(np.mean(report[k])), -candidates.index(k)))
    return chosen, report


# ---------------------------------------------------------------------------
# residual study
# ---------------------------------------------------------------------------

def residual_summary(synth: SampleSet, source: SampleSet, target: SampleSet) -> dict:
    """Per fault class, the fraction of bins where the mean synthetic
    spectrum is closer to the mean real-target spectrum than the mean
    real-source spectrum is."""
    fractions = {}
    means = {}
    for c in synth.classes():
        if c == HEALTHY_CLASS:
            continue
        m_syn = synth.bins[synth.class_ids == c].mean(axis=0)
        m_src = source.bins[source.class_ids == c].mean(axis=0)
        m_tgt = target.bins[target.class_ids == c].mean(axis=0)
        closer = np.abs(m_syn - m_tgt) < np.abs(m_src - m_tgt)
        fractions[c] = float(np.mean(closer))
        means[c] = {"synthetic": m_syn, "source": m_src, "target": m_tgt}
    overall = float(np.mean(list(fractions.values()))) if fractions else float("nan")
    return {"per_class": fractions, "overall": overall, "means": means}


def write_residual_csv(path, summary: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "bin", "mean_synthetic", "mean_source", "mean_target"])
        for c, m in sorted(summary["means"].items()):
            for b in range(m["synthetic"].shape[0]):
                writer.writerow([
                    c, b,
                    f"{m['synthetic'][b]:.9g}", f"{m['source'][b]:.9g}", f"{m['target'][b]:.9g}",
                ])
