"""Spectral preprocessing and dataset containers.

Raw vibration recordings become 512-bin magnitude spectra: overlapping
1024-point windows, then the magnitudes of DFT coefficients 1..512 (the DC
term is dropped).  Datasets are stored as flat arrays with integer class
labels; class 0 is always the healthy condition.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .containers import load_arrays, save_arrays

HEALTHY_CLASS = 0
NUM_BINS = 512
WINDOW_LEN = 1024
CWRU_TRUNCATE = 12000
CWRU_WINDOW_COUNT = 200
PADERBORN_STRIDE = 4096


@dataclass
class RawRecording:
    samples: np.ndarray
    sample_rate: float
    domain_id: int
    class_id: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.samples.size < WINDOW_LEN:
            raise ValueError(
                f"recording too short: {self.samples.size} < {WINDOW_LEN} samples"
            )


@dataclass
class SpectrumSample:
    bins: np.ndarray
    domain_id: int
    class_id: int
    synthetic: bool = False

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.bins)) or np.any(self.bins < 0):
            raise ValueError("spectrum bins must be finite and nonnegative")


class SampleSet:
    """A bag of labeled spectra, possibly spanning several domains."""

    def __init__(self, bins, class_ids, domain_ids, synthetic=None):
        self.bins = np.ascontiguousarray(bins, dtype=np.float64)
        self.class_ids = np.asarray(class_ids, dtype=np.int64)
        self.domain_ids = np.asarray(domain_ids, dtype=np.int64)
        n = self.bins.shape[0]
        if synthetic is None:
            synthetic = np.zeros(n, dtype=bool)
        self.synthetic = np.asarray(synthetic, dtype=bool)
        if self.bins.ndim != 2:
            raise ValueError(f"bins must be 2-D, got shape {self.bins.shape}")
        if not (len(self.class_ids) == len(self.domain_ids) == len(self.synthetic) == n):
            raise ValueError("bins, class_ids, domain_ids, synthetic lengths disagree")
        if not np.all(np.isfinite(self.bins)) or np.any(self.bins < 0):
            raise ValueError("spectrum bins must be finite and nonnegative")

    def __len__(self) -> int:
        return self.bins.shape[0]

    @property
    def num_bins(self) -> int:
        return self.bins.shape[1]

    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.class_ids))

    def histogram(self) -> dict[int, int]:
        values, counts = np.unique(self.class_ids, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def subset(self, indices) -> "SampleSet":
        idx = np.asarray(indices)
        return SampleSet(self.bins[idx], self.class_ids[idx], self.domain_ids[idx], self.synthetic[idx])

    def select_classes(self, class_ids) -> "SampleSet":
        keep = set(int(c) for c in class_ids)
        mask = np.fromiter((int(c) in keep for c in self.class_ids), dtype=bool, count=len(self))
        return self.subset(np.nonzero(mask)[0])

    @staticmethod
    def concat(parts: list["SampleSet"]) -> "SampleSet":
        if not parts:
            raise ValueError("cannot concatenate an empty list of sample sets")
        return SampleSet(
            np.concatenate([p.bins for p in parts], axis=0),
            np.concatenate([p.class_ids for p in parts]),
            np.concatenate([p.domain_ids for p in parts]),
            np.concatenate([p.synthetic for p in parts]),
        )

    def samples(self):
        for i in range(len(self)):
            yield SpectrumSample(
                self.bins[i], int(self.domain_ids[i]), int(self.class_ids[i]), bool(self.synthetic[i])
            )


class DomainDataset(SampleSet):
    """A SampleSet whose samples all belong to one domain."""

    def __init__(self, domain_id: int, bins, class_ids, synthetic=None):
        n = np.asarray(bins).shape[0]
        super().__init__(bins, class_ids, np.full(n, int(domain_id), dtype=np.int64), synthetic)
        self.domain_id = int(domain_id)

    def subset(self, indices) -> "DomainDataset":
        idx = np.asarray(indices)
        return DomainDataset(self.domain_id, self.bins[idx], self.class_ids[idx], self.synthetic[idx])

    def select_classes(self, class_ids) -> "DomainDataset":
        keep = set(int(c) for c in class_ids)
        mask = np.fromiter((int(c) in keep for c in self.class_ids), dtype=bool, count=len(self))
        return self.subset(np.nonzero(mask)[0])


# ---------------------------------------------------------------------------
# windowing and DFT magnitudes
# ---------------------------------------------------------------------------

def window(signal, length: int = WINDOW_LEN, stride: int = 1) -> np.ndarray:
    """Maximal list of length-``length`` windows at the given stride."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    signal = np.asarray(signal, dtype=np.float64).ravel()
    if signal.size < length:
        return np.empty((0, length))
    views = np.lib.stride_tricks.sliding_window_view(signal, length)[::stride]
    return np.ascontiguousarray(views)


def cwru_stride(n: int, length: int = WINDOW_LEN, count: int = CWRU_WINDOW_COUNT) -> int:
    """Overlap stride that fits ``count`` windows into ``n`` samples."""
    if count <= 1:
        return 1
    return max(1, (n - length) // (count - 1))


def fft_magnitude(windows) -> np.ndarray:
    """Magnitudes of DFT coefficients 1..512 of 1024-point windows."""
    w = np.asarray(windows, dtype=np.float64)
    if w.shape[-1] != WINDOW_LEN:
        raise ValueError(f"fft_magnitude expects windows of length {WINDOW_LEN}, got {w.shape[-1]}")
    return np.abs(np.fft.rfft(w, axis=-1))[..., 1 : NUM_BINS + 1]


def preprocess_case_study(recordings: list[RawRecording], case: str) -> dict[int, DomainDataset]:
    """Turn recordings into per-domain spectral datasets.

    ``cwru``: truncate each record to 12000 samples, then take 200
    overlapping 1024-point windows.  ``paderborn``: no truncation, stride
    4096.  Class and domain labels pass through unchanged.
    """
    case = case.lower()
    if case not in ("cwru", "paderborn"):
        raise ValueError(f"unknown case label {case!r}")
    per_domain: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
    for rec in recordings:
        if case == "cwru":
            sig = rec.samples[:CWRU_TRUNCATE]
            wins = window(sig, WINDOW_LEN, cwru_stride(sig.size))[:CWRU_WINDOW_COUNT]
        else:
            wins = window(rec.samples, WINDOW_LEN, PADERBORN_STRIDE)
        if wins.shape[0] == 0:
            continue
        spectra = fft_magnitude(wins)
        labels = np.full(spectra.shape[0], rec.class_id, dtype=np.int64)
        per_domain.setdefault(rec.domain_id, []).append((spectra, labels))
    out = {}
    for domain_id, parts in sorted(per_domain.items()):
        bins = np.concatenate([p[0] for p in parts], axis=0)
        labels = np.concatenate([p[1] for p in parts])
        out[domain_id] = DomainDataset(domain_id, bins, labels)
    return out


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def split_train_test(
    dataset: DomainDataset,
    test_fraction: float = 0.30,
    unseen_classes=(),
    seed: int = 0,
) -> tuple[DomainDataset, DomainDataset]:
    """Per-class split: unseen classes go entirely to test, known classes
    contribute a stratified ``test_fraction`` draw (floor rounding)."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")
    unseen = set(int(c) for c in unseen_classes)
    present = set(dataset.classes())
    missing = unseen - present
    if missing:
        raise ValueError(f"unseen classes absent from the real pool: {sorted(missing)}")
    rng = np.random.default_rng(seed)
    test_parts = []
    for c in sorted(present):
        idx = np.nonzero(dataset.class_ids == c)[0]
        if c in unseen:
            test_parts.append(idx)
        else:
            k = int(np.floor(test_fraction * idx.size))
            test_parts.append(rng.permutation(idx)[:k])
    test_idx = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, dtype=np.intp)
    mask = np.zeros(len(dataset), dtype=bool)
    mask[test_idx] = True
    return dataset.subset(np.nonzero(~mask)[0]), dataset.subset(test_idx)


# ---------------------------------------------------------------------------
# archives
# ---------------------------------------------------------------------------

def save_domains(path, datasets: dict[int, DomainDataset]) -> None:
    arrays = {}
    for d, ds in sorted(datasets.items()):
        arrays[f"domain{d}.bins"] = ds.bins
        arrays[f"domain{d}.class_ids"] = ds.class_ids.astype(np.float64)
        arrays[f"domain{d}.synthetic"] = ds.synthetic.astype(np.float64)
    save_arrays(path, arrays, meta={"domains": sorted(int(d) for d in datasets)})


def load_domains(path) -> dict[int, DomainDataset]:
    arrays, meta = load_arrays(path)
    out = {}
    for d in meta["domains"]:
        out[int(d)] = DomainDataset(
            int(d),
            arrays[f"domain{d}.bins"],
            arrays[f"domain{d}.class_ids"].astype(np.int64),
            arrays[f"domain{d}.synthetic"].astype(bool),
        )
    return out


# ---------------------------------------------------------------------------
# raw-recording ingestion
# ---------------------------------------------------------------------------

def _read_signal(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".csv":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    rows.append(float(row[0]))
                except ValueError:
                    if rows:
                        raise
                    # header line; skip
        return np.asarray(rows)
    return np.fromfile(path, dtype="<f8")


def read_recordings(manifest_path) -> list[RawRecording]:
    """Load recordings named by a manifest CSV with columns
    file, domain_id, class_id, sample_rate (paths relative to the manifest)."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    recordings = []
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"file", "domain_id", "class_id", "sample_rate"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"manifest must have columns {sorted(required)}")
        for row in reader:
            rec_path = base / row["file"]
            if not rec_path.exists():
                raise FileNotFoundError(f"recording not found: {rec_path}")
            recordings.append(
                RawRecording(
                    samples=_read_signal(rec_path),
                    sample_rate=float(row["sample_rate"]),
                    domain_id=int(row["domain_id"]),
                    class_id=int(row["class_id"]),
                )
            )
    if not recordings:
        warnings.warn(f"manifest {manifest_path} lists no recordings")
    return recordings
