"""Ground-truth spectrum simulator for desk-scale end-to-end runs.

Every sample is built additively: a smooth per-domain base envelope times an
amplitude scale, folded-Gaussian noise, and (for fault classes) an injected
peak signature that is identical across domains.  The injected signatures are
retrievable, so tests can compare learned signatures against the truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectra import HEALTHY_CLASS, NUM_BINS, DomainDataset


@dataclass
class PeakSpec:
    bin: int
    height: float
    width: float = 3.0

    def __post_init__(self):
        if not 0 <= self.bin < NUM_BINS:
            raise ValueError(f"peak bin must be in [0, {NUM_BINS}), got {self.bin}")
        if self.height <= 0:
            raise ValueError(f"peak height must be > 0, got {self.height}")
        if self.width <= 0:
            raise ValueError(f"peak width must be > 0, got {self.width}")


@dataclass
class FaultClassSpec:
    class_id: int
    fault_type: str
    peaks: list[PeakSpec]

    def __post_init__(self):
        if self.class_id == HEALTHY_CLASS:
            raise ValueError("fault class id 0 is reserved for the healthy condition")
        self.peaks = [p if isinstance(p, PeakSpec) else PeakSpec(**p) for p in self.peaks]


@dataclass
class DomainSpec:
    domain_id: int
    amplitude: float = 1.0
    noise_level: float = 0.05
    envelope_seed: int = 0
    envelope_knots: int = 9
    peak_jitter: int = 0

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if self.noise_level < 0:
            raise ValueError(f"noise level must be >= 0, got {self.noise_level}")
        if self.envelope_knots < 2:
            raise ValueError(f"need at least 2 envelope knots, got {self.envelope_knots}")


@dataclass
class RigSpec:
    domains: list[DomainSpec]
    fault_classes: list[FaultClassSpec]
    samples_per_class: int = 200
    seed: int = 0
    bins: int = NUM_BINS

    def __post_init__(self):
        self.domains = [d if isinstance(d, DomainSpec) else DomainSpec(**d) for d in self.domains]
        self.fault_classes = [
            f if isinstance(f, FaultClassSpec) else FaultClassSpec(**f) for f in self.fault_classes
        ]
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        ids = [f.class_id for f in self.fault_classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate fault class ids: {ids}")
        dids = [d.domain_id for d in self.domains]
        if len(set(dids)) != len(dids):
            raise ValueError(f"duplicate domain ids: {dids}")

    def domain(self, domain_id: int) -> DomainSpec:
        for d in self.domains:
            if d.domain_id == domain_id:
                return d
        raise KeyError(f"rig has no domain {domain_id}")

    def fault_types(self) -> dict[str, list[int]]:
        """Map fault type tag to its severity class ids, in declared order."""
        out: dict[str, list[int]] = {}
        for f in self.fault_classes:
            out.setdefault(f.fault_type, []).append(f.class_id)
        return out

    def class_ids(self) -> list[int]:
        return [f.class_id for f in self.fault_classes]

    # ---- ground truth (for oracles only) ---------------------------------
    def envelope(self, domain_id: int) -> np.ndarray:
        d = self.domain(domain_id)
        rng = np.random.default_rng([self.seed, d.envelope_seed])
        knots = rng.uniform(0.5, 1.5, size=d.envelope_knots)
        x = np.linspace(0, d.envelope_knots - 1, self.bins)
        return np.interp(x, np.arange(d.envelope_knots), knots)

    def signature(self, class_id: int, domain_id: int | None = None) -> np.ndarray:
        """The injected additive signature; domain-independent unless the
        domain declares peak-position jitter."""
        spec = None
        for f in self.fault_classes:
            if f.class_id == class_id:
                spec = f
        if spec is None:
            raise KeyError(f"rig has no fault class {class_id}")
        jitter = 0
        if domain_id is not None:
            d = self.domain(domain_id)
            if d.peak_jitter:
                rng = np.random.default_rng([self.seed, d.domain_id, class_id, 7])
                jitter = int(rng.integers(-d.peak_jitter, d.peak_jitter + 1))
        grid = np.arange(self.bins)
        sig = np.zeros(self.bins)
        for p in spec.peaks:
            center = np.clip(p.bin + jitter, 0, self.bins - 1)
            sig += p.height * np.exp(-0.5 * ((grid - center) / p.width) ** 2)
        return sig


def make_dataset(rig: RigSpec, domain_id: int) -> DomainDataset:
    """Samples for one domain: healthy = amplitude·(envelope + noise);
    fault class c adds the injected signature of c on top."""
    d = rig.domain(domain_id)
    rng = np.random.default_rng([rig.seed, domain_id, 1])
    env = rig.envelope(domain_id)
    n = rig.samples_per_class
    class_ids = [HEALTHY_CLASS] + rig.class_ids()
    all_bins = []
    all_labels = []
    for c in class_ids:
        noise = d.noise_level * np.abs(rng.standard_normal((n, rig.bins)))
        batch = d.amplitude * (env[None, :] + noise)
        if c != HEALTHY_CLASS:
            batch = batch + rig.signature(c, domain_id)[None, :]
        all_bins.append(batch)
        all_labels.append(np.full(n, c, dtype=np.int64))
    return DomainDataset(domain_id, np.concatenate(all_bins), np.concatenate(all_labels))


def make_all(rig: RigSpec) -> dict[int, DomainDataset]:
    return {d.domain_id: make_dataset(rig, d.domain_id) for d in rig.domains}


def rig_from_dict(d: dict) -> RigSpec:
    return RigSpec(
        domains=[DomainSpec(**entry) for entry in d["domains"]],
        fault_classes=[
            FaultClassSpec(
                class_id=entry["class_id"],
                fault_type=entry["fault_type"],
                peaks=[PeakSpec(**p) for p in entry["peaks"]],
            )
            for entry in d["fault_classes"]
        ],
        samples_per_class=d.get("samples_per_class", 200),
        seed=d.get("seed", 0),
        bins=d.get("bins", NUM_BINS),
    )


def rig_to_dict(rig: RigSpec) -> dict:
    return {
        "domains": [
            {
                "domain_id": d.domain_id,
                "amplitude": d.amplitude,
                "noise_level": d.noise_level,
                "envelope_seed": d.envelope_seed,
                "envelope_knots": d.envelope_knots,
                "peak_jitter": d.peak_jitter,
            }
            for d in rig.domains
        ],
        "fault_classes": [
            {
                "class_id": f.class_id,
                "fault_type": f.fault_type,
                "peaks": [{"bin": p.bin, "height": p.height, "width": p.width} for p in f.peaks],
            }
            for f in rig.fault_classes
        ],
        "samples_per_class": rig.samples_per_class,
        "seed": rig.seed,
        "bins": rig.bins,
    }
