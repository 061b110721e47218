"""Execution phase: turn trained bundles into synthetic target-domain faults.

A signature generated for class c is scaled by the domain-transfer factor f
(ratio of mean healthy spectra, source over target) and added onto a real
healthy carrier drawn from the target domain.  Magnitudes are clamped at
zero after the addition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .gan import GanBundle
from .spectra import HEALTHY_CLASS, DomainDataset, SpectrumSample


class ClassNotCoveredError(ValueError):
    """Requested class id is outside every available bundle's coverage."""

    error_class = "CLASS_NOT_COVERED"


@dataclass
class FaultSignature:
    bins: np.ndarray
    fault_type: str
    class_id: int
    seed: int

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.bins)):
            raise ValueError("signature bins must be finite")


@dataclass
class ScalingFactor:
    mode: str
    value: float | np.ndarray

    def __post_init__(self):
        if self.mode not in ("scalar", "per_bin"):
            raise ValueError(f"mode must be scalar or per_bin, got {self.mode!r}")
        if self.mode == "scalar":
            self.value = float(self.value)
            ok = np.isfinite(self.value) and self.value > 0
        else:
            self.value = np.asarray(self.value, dtype=np.float64).ravel()
            ok = bool(np.all(np.isfinite(self.value)) and np.all(self.value > 0))
        if not ok:
            raise ValueError("scaling factor must be positive and finite wherever defined")

    def apply(self, signature: np.ndarray) -> np.ndarray:
        return np.asarray(signature) * self.value


def signature_matrix(bundle: GanBundle, class_id: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Raw (count, bins) signatures from the generator in infer mode."""
    if class_id not in bundle.covered_classes:
        raise ClassNotCoveredError(
            f"class {class_id} not covered by bundle {bundle.fault_type!r} "
            f"(covers {bundle.covered_classes})"
        )
    if count == 0:
        return np.empty((0, bundle.num_bins))
    codes = np.full((count, 1), float(class_id))
    with T.no_grad():
        sig = bundle.generator.forward(codes, train=False, rng=rng)
    return sig.data


def generate_signatures(bundle: GanBundle, class_id: int, count: int, seed: int) -> list[FaultSignature]:
    rng = np.random.default_rng(seed)
    mat = signature_matrix(bundle, class_id, count, rng)
    return [
        FaultSignature(bins=mat[i], fault_type=bundle.fault_type, class_id=class_id, seed=seed)
        for i in range(mat.shape[0])
    ]


def scaling_factor(
    healthy_source: DomainDataset,
    healthy_target: DomainDataset,
    mode: str = "scalar",
    degenerate_floor: float = 1e-12,
) -> ScalingFactor:
    """Ratio of mean healthy spectra, source over target.

    per_bin: the elementwise ratio (1 where the target mean is degenerate);
    scalar: the mean of the valid ratios.
    """
    for name, ds in (("source", healthy_source), ("target", healthy_target)):
        if len(ds) == 0:
            raise ValueError(f"healthy {name} dataset is empty")
        if set(ds.classes()) != {HEALTHY_CLASS}:
            raise ValueError(f"healthy {name} dataset must contain only the healthy class")
    mean_s = healthy_source.bins.mean(axis=0)
    mean_t = healthy_target.bins.mean(axis=0)
    valid = mean_t >= degenerate_floor
    if not np.any(valid):
        raise ValueError("every target bin is degenerate; no scaling factor is defined")
    ratio = np.ones_like(mean_t)
    ratio[valid] = mean_s[valid] / mean_t[valid]
    if mode == "scalar":
        return ScalingFactor("scalar", float(ratio[valid].mean()))
    return ScalingFactor("per_bin", ratio)


def synthesize_target_fault(
    signature: FaultSignature,
    healthy_target_sample: SpectrumSample,
    f: ScalingFactor,
) -> SpectrumSample:
    """One synthetic target fault: carrier + f·signature, clamped at zero."""
    if signature.bins.shape != healthy_target_sample.bins.shape:
        raise ValueError(
            f"synthesize_target_fault: signature shape {signature.bins.shape} "
            f"vs carrier shape {healthy_target_sample.bins.shape}"
        )
    if healthy_target_sample.class_id != HEALTHY_CLASS:
        raise ValueError("carrier must be a healthy-class sample")
    bins = np.maximum(healthy_target_sample.bins + f.apply(signature.bins), 0.0)
    return SpectrumSample(
        bins=bins,
        domain_id=healthy_target_sample.domain_id,
        class_id=signature.class_id,
        synthetic=True,
    )


def complete_label_space(
    bundles: list[GanBundle],
    target_healthy: DomainDataset,
    missing_classes,
    source_class_counts,
    f: ScalingFactor,
    seed: int = 0,
) -> DomainDataset:
    """Per missing class, synthesize round(mean source per-class count)
    samples, each on an independently drawn healthy carrier (with
    replacement)."""
    if set(target_healthy.classes()) != {HEALTHY_CLASS}:
        raise ValueError("target_healthy must contain only healthy-class samples")
    counts = list(source_class_counts.values()) if isinstance(source_class_counts, dict) \
        else list(source_class_counts)
    if not counts:
        raise ValueError("source_class_counts is empty")
    n = int(round(float(np.mean(counts))))
    rng = np.random.default_rng(seed)
    all_bins, all_labels = [], []
    for c in sorted(int(c) for c in missing_classes):
        bundle = next((b for b in bundles if c in b.covered_classes), None)
        if bundle is None:
            raise ClassNotCoveredError(f"class {c} not covered by any bundle")
        sig = signature_matrix(bundle, c, n, rng)
        carriers = target_healthy.bins[rng.integers(0, len(target_healthy), size=n)]
        all_bins.append(np.maximum(carriers + f.apply(sig), 0.0))
        all_labels.append(np.full(n, c, dtype=np.int64))
    return DomainDataset(
        target_healthy.domain_id,
        np.concatenate(all_bins, axis=0),
        np.concatenate(all_labels),
        synthetic=np.ones(n * len(all_bins), dtype=bool),
    )
