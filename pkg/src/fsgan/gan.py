"""Adversarial training of fault-signature generators.

One bundle learns all severity levels of a single fault type: the generator
maps a class code to an additive 512-bin signature, the Wasserstein critic
scores signature-plus-healthy-carrier composites against real fault spectra
(with gradient penalty), and a triplet encoder enforces that composites
cluster with real samples of the requested class.

Every synthetic sample anywhere in this module is built by compose_fake();
the raw generator output never reaches the critic or encoder directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .blocks import (
    Model,
    ModelSpec,
    build_aux_classifier,
    build_discriminator,
    build_generator,
    build_model,
    build_triplet_encoder,
    input_gradient,
)
from .containers import load_arrays, save_arrays
from .optim import Adam
from .spectra import HEALTHY_CLASS, DomainDataset
from .tensor import Tensor


class TrainingDivergedError(RuntimeError):
    """A loss went non-finite; carries a diagnostic summary."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass
class GanConfig:
    lambda_gp: float = 10.0
    lambda_d: float = 1.0
    lambda_c: float = 1.0
    alpha: float = 0.2
    n_critic: int = 5
    batch_size: int = 64
    threshold: float = 0.98
    callback_period: int = 50
    max_epochs: int = 2000
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    aux_epochs: int = 30
    aux_batch: int = 64

    def __post_init__(self):
        if min(self.lambda_gp, self.lambda_d, self.lambda_c) < 0:
            raise ValueError("loss weights must be >= 0")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.n_critic < 1:
            raise ValueError(f"n_critic must be >= 1, got {self.n_critic}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.alpha < 0:
            raise ValueError(f"margin alpha must be >= 0, got {self.alpha}")
        if self.callback_period < 1:
            raise ValueError(f"callback_period must be >= 1, got {self.callback_period}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GanBundle:
    fault_type: str
    covered_classes: tuple[int, ...]
    generator: Model
    discriminator: Model
    encoder: Model
    config: GanConfig
    log: list[dict] = field(default_factory=list)
    critic_steps: int = 0
    generator_steps: int = 0
    encoder_steps: int = 0
    epochs_run: int = 0
    stopped_early: bool = False

    @property
    def num_bins(self) -> int:
        return self.generator.output_shape[0]


def compose_fake(signatures: Tensor | np.ndarray, carriers: np.ndarray) -> Tensor:
    """Fake sample = generated signature + real healthy carrier (never the
    raw generator output).  All synthetic composition funnels through here."""
    sig = signatures if isinstance(signatures, Tensor) else Tensor(signatures)
    if sig.shape != carriers.shape:
        raise T.ShapeError("compose_fake", f"incompatible shapes {sig.shape} vs {carriers.shape}")
    return sig + Tensor(carriers)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _dropout_mask_plan(model: Model, batch: int, rng: np.random.Generator) -> dict[int, np.ndarray]:
    masks = {}
    for idx, layer in enumerate(model.spec.layers):
        if layer.kind == "dropout" and layer.rate > 0.0:
            shape = (batch,) + model._shapes[idx][1]
            masks[idx] = (rng.random(shape) >= layer.rate).astype(np.float64)
    return masks


def gradient_penalty(
    disc: Model,
    x_real: np.ndarray,
    x_fake: np.ndarray,
    *,
    rng: np.random.Generator | None = None,
    eps: np.ndarray | None = None,
    train: bool = True,
    dropout_masks: dict[int, np.ndarray] | None = None,
) -> Tensor:
    """Mean over the batch of (‖∇_x̂ D(x̂)‖₂ − 1)² at x̂ = εx_real + (1−ε)x_fake.

    ε is drawn per sample; the dropout realization is sampled once and shared
    by the critic value and its input gradient.  Differentiable w.r.t. the
    critic weights.
    """
    x_real = np.asarray(x_real, dtype=np.float64)
    x_fake = np.asarray(x_fake, dtype=np.float64)
    if x_real.shape != x_fake.shape:
        raise T.ShapeError("gradient_penalty", f"incompatible shapes {x_real.shape} vs {x_fake.shape}")
    if eps is None:
        if rng is None:
            raise ValueError("gradient_penalty: need rng when eps is not given")
        eps = rng.uniform(size=(x_real.shape[0], 1))
    x_hat = eps * x_real + (1.0 - eps) * x_fake
    if train and dropout_masks is None:
        if rng is None:
            raise ValueError("gradient_penalty: need rng for dropout masks in train mode")
        dropout_masks = _dropout_mask_plan(disc, x_hat.shape[0], rng)
    g = input_gradient(disc, x_hat, train=train, dropout_masks=dropout_masks)
    norms = T.euclidean_norm(g, axis=1)
    return T.reduce_mean(T.square(norms - Tensor(1.0)))


def critic_loss(
    disc: Model,
    x_fake: np.ndarray,
    x_real: np.ndarray,
    config: GanConfig,
    *,
    rng: np.random.Generator | None = None,
    train: bool = True,
) -> tuple[Tensor, float]:
    """Eq.-style critic objective: E[D(fake)] − E[D(real)] + λ_GP·penalty.

    Returns (loss tensor, penalty value) so the caller can log the penalty.
    """
    d_fake = disc.forward(Tensor(np.asarray(x_fake)), train=train, rng=rng)
    d_real = disc.forward(Tensor(np.asarray(x_real)), train=train, rng=rng)
    loss = T.reduce_mean(d_fake) - T.reduce_mean(d_real)
    gp_value = 0.0
    if config.lambda_gp > 0:
        gp = gradient_penalty(disc, x_real, x_fake, rng=rng, train=train)
        gp_value = gp.item()
        loss = loss + config.lambda_gp * gp
    return loss, gp_value


def _squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq_a = (a * a).sum(axis=1)
    sq_b = (b * b).sum(axis=1)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def _mine(
    d2: np.ndarray,
    anchor_labels: np.ndarray,
    pool_labels: np.ndarray,
    alpha: float,
    exclude_diagonal: bool,
) -> list[tuple[int, int, int]]:
    """Shared mining rule over a (anchors x pool) squared-distance matrix.

    Per anchor-positive pair: prefer the closest negative strictly inside the
    semi-hard band (d²(a,p), d²(a,p)+α); otherwise the hardest violating
    negative; skip the pair when every negative already satisfies the margin.
    Ties resolve to the lowest pool index.
    """
    triplets: list[tuple[int, int, int]] = []
    for a in range(d2.shape[0]):
        same = pool_labels == anchor_labels[a]
        pos_idx = np.nonzero(same)[0]
        if exclude_diagonal:
            pos_idx = pos_idx[pos_idx != a]
        neg_idx = np.nonzero(~same)[0]
        if pos_idx.size == 0 or neg_idx.size == 0:
            continue
        dan = d2[a, neg_idx]
        for p in pos_idx:
            dap = d2[a, p]
            in_band = (dan > dap) & (dan < dap + alpha)
            if np.any(in_band):
                cand = neg_idx[in_band]
                n = cand[np.argmin(d2[a, cand])]
            else:
                violating = dan < dap + alpha
                if not np.any(violating):
                    continue
                cand = neg_idx[violating]
                n = cand[np.argmin(d2[a, cand])]
            triplets.append((a, int(p), int(n)))
    return triplets


def semi_hard_triplets(embeddings: np.ndarray, labels, alpha: float) -> list[tuple[int, int, int]]:
    """Mine (anchor, positive, negative) index triplets within one batch."""
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        return []
    d2 = _squared_distances(emb, emb)
    return _mine(d2, labels, labels, alpha, exclude_diagonal=True)


def semi_hard_cross(
    anchor_emb: np.ndarray,
    anchor_labels,
    pool_emb: np.ndarray,
    pool_labels,
    alpha: float,
) -> list[tuple[int, int, int]]:
    """Mine triplets whose anchors come from one batch (e.g. synthetic
    samples) and whose positives/negatives come from a reference pool."""
    pool_labels = np.asarray(pool_labels)
    if np.unique(pool_labels).size < 2:
        return []
    d2 = _squared_distances(np.asarray(anchor_emb, dtype=np.float64), np.asarray(pool_emb, dtype=np.float64))
    return _mine(d2, np.asarray(anchor_labels), pool_labels, alpha, exclude_diagonal=False)


def triplet_loss_mined(emb: Tensor, triplets, alpha: float) -> Tensor:
    """Mean hinge loss over mined (a, p, n) rows of one embedding tensor."""
    return triplet_loss_cross(emb, emb, triplets, alpha)


def triplet_loss_cross(emb_anchor: Tensor, emb_pool: Tensor, triplets, alpha: float) -> Tensor:
    if not triplets:
        return Tensor(0.0)
    a_idx, p_idx, n_idx = (list(t) for t in zip(*triplets))
    ea = T.gather_rows(emb_anchor, a_idx)
    ep = T.gather_rows(emb_pool, p_idx)
    en = T.gather_rows(emb_pool, n_idx)
    d_ap = T.reduce_sum(T.square(ea - ep), axis=1)
    d_an = T.reduce_sum(T.square(ea - en), axis=1)
    return T.reduce_mean(T.relu(d_ap - d_an + Tensor(alpha)))


def triplet_loss(
    encoder: Model,
    anchors: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    alpha: float,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Mean over given triplets of max(‖C(a)−C(p)‖² − ‖C(a)−C(n)‖² + α, 0).

    One encoder forward covers all three parts, so they share a dropout
    realization in train mode.
    """
    a = np.asarray(anchors, dtype=np.float64)
    p = np.asarray(positives, dtype=np.float64)
    n = np.asarray(negatives, dtype=np.float64)
    if not (a.shape == p.shape == n.shape):
        raise T.ShapeError("triplet_loss", f"incompatible shapes {a.shape} vs {p.shape} vs {n.shape}")
    emb = encoder.forward(Tensor(np.concatenate([a, p, n], axis=0)), train=train, rng=rng)
    m = a.shape[0]
    triplets = [(i, m + i, 2 * m + i) for i in range(m)]
    return triplet_loss_mined(emb, triplets, alpha)


def generator_loss(
    generator: Model,
    disc: Model,
    encoder: Model,
    real_bins: np.ndarray,
    real_labels: np.ndarray,
    carriers: np.ndarray,
    codes: np.ndarray,
    config: GanConfig,
    *,
    rng: np.random.Generator,
) -> tuple[Tensor, dict]:
    """λ_D·mean(−D(x̃+x_h)) + λ_C·triplet(anchors=synthetic, pool=real faults)."""
    signatures = generator.forward(codes, train=True, rng=rng, update_stats=True)
    fake = compose_fake(signatures, carriers)
    adv = -T.reduce_mean(disc.forward(fake, train=True, rng=rng))
    trip = Tensor(0.0)
    n_triplets = 0
    if config.lambda_c > 0:
        # encoder runs without dropout here: its class geometry steers the
        # generator, and dropout noise drowns that signal
        emb_fake = encoder.forward(fake, train=False)
        emb_real = encoder.forward(Tensor(real_bins), train=False)
        mined = semi_hard_cross(emb_fake.data, codes.ravel(), emb_real.data, real_labels, config.alpha)
        n_triplets = len(mined)
        if mined:
            trip = triplet_loss_cross(emb_fake, emb_real, mined, config.alpha)
    loss = config.lambda_d * adv + config.lambda_c * trip
    stats = {"adv": adv.item(), "triplet": trip.item(), "n_triplets": n_triplets}
    return loss, stats


# ---------------------------------------------------------------------------
# generic softmax-classifier fitting (auxiliary probe and evaluation models)
# ---------------------------------------------------------------------------

def fit_classifier(
    spec: ModelSpec,
    bins: np.ndarray,
    labels: np.ndarray,
    *,
    epochs: int,
    batch_size: int,
    seed: int | np.random.Generator = 0,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eval_bins: np.ndarray | None = None,
    eval_labels: np.ndarray | None = None,
) -> tuple[Model, list[float]]:
    """Cross-entropy training; returns the model and a per-epoch accuracy
    curve on (eval_bins, eval_labels) when given."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    model = build_model(spec, rng)
    opt = Adam(model.parameters(), lr=lr, beta1=beta1, beta2=beta2)
    n = bins.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    curve: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits = model.forward(Tensor(bins[idx]), train=True, rng=rng, update_stats=True)
            loss = T.cross_entropy_logits(logits, labels[idx])
            if not math.isfinite(loss.item()):
                raise TrainingDivergedError("classifier loss went non-finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
        if eval_bins is not None:
            curve.append(accuracy(model, eval_bins, eval_labels))
    return model, curve


def predict_classes(model: Model, bins: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    preds = []
    with T.no_grad():
        for start in range(0, bins.shape[0], batch_size):
            logits = model.forward(Tensor(bins[start : start + batch_size]), train=False)
            preds.append(np.argmax(logits.data, axis=1))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


def accuracy(model: Model, bins: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict_classes(model, bins) == np.asarray(labels)))


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

def _require_pools(dataset: DomainDataset, fault_class_ids: list[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    healthy = dataset.bins[dataset.class_ids == HEALTHY_CLASS]
    if healthy.shape[0] == 0:
        raise ValueError("source dataset has no healthy-class samples")
    fault_mask = np.isin(dataset.class_ids, fault_class_ids)
    fault_bins = dataset.bins[fault_mask]
    fault_labels = dataset.class_ids[fault_mask]
    if fault_bins.shape[0] == 0:
        raise ValueError(f"source dataset has no samples of fault classes {fault_class_ids}")
    return healthy, fault_bins, fault_labels


def train(
    source_dataset: DomainDataset,
    fault_type: str,
    config: GanConfig,
    *,
    fault_class_ids: list[int] | None = None,
    log_path: str | Path | None = None,
    generator_spec: ModelSpec | None = None,
) -> GanBundle:
    """Algorithm: per step, n_critic critic updates on fresh batches, one
    triplet-encoder update on real labeled data, one generator update.  Every
    callback_period epochs an auxiliary classifier probes synthetic quality
    and stops training once it reaches the accuracy threshold on real data.
    """
    if fault_class_ids is None:
        fault_class_ids = [c for c in source_dataset.classes() if c != HEALTHY_CLASS]
    fault_class_ids = sorted(int(c) for c in fault_class_ids)
    healthy_bins, fault_bins, fault_labels = _require_pools(source_dataset, fault_class_ids)
    bins = source_dataset.num_bins
    m = config.batch_size

    if generator_spec is None:
        generator_spec = build_generator(len(fault_class_ids), output_bins=bins,
                                         fc_widths=(32, 128, bins))
    generator = build_model(generator_spec, np.random.default_rng([config.seed, 10]))
    disc = build_model(build_discriminator(bins), np.random.default_rng([config.seed, 11]))
    encoder = build_model(build_triplet_encoder(bins), np.random.default_rng([config.seed, 12]))

    gen_opt = Adam(generator.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    disc_opt = Adam(disc.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    enc_opt = Adam(encoder.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2)

    bundle = GanBundle(
        fault_type=fault_type,
        covered_classes=tuple(fault_class_ids),
        generator=generator,
        discriminator=disc,
        encoder=encoder,
        config=config,
    )

    rng = np.random.default_rng([config.seed, 2])
    labeled_mask = np.isin(source_dataset.class_ids, [HEALTHY_CLASS] + fault_class_ids)
    labeled_bins = source_dataset.bins[labeled_mask]
    labeled_ids = source_dataset.class_ids[labeled_mask]
    n_fault = fault_bins.shape[0]
    steps_per_epoch = max(1, n_fault // m)

    def sample_rows(pool: np.ndarray, count: int) -> np.ndarray:
        idx = rng.integers(0, pool.shape[0], size=count) if pool.shape[0] < count else \
            rng.choice(pool.shape[0], size=count, replace=False)
        return idx

    for epoch in range(1, config.max_epochs + 1):
        epoch_stats = {"critic_loss": [], "gen_loss": [], "triplet_loss": [], "gp": []}
        for _ in range(steps_per_epoch):
            # -- critic updates ------------------------------------------
            for _ in range(config.n_critic):
                real = fault_bins[sample_rows(fault_bins, m)]
                codes = rng.choice(fault_class_ids, size=m).astype(np.float64).reshape(m, 1)
                with T.no_grad():
                    sig = generator.forward(codes, train=True, rng=rng, update_stats=False)
                carriers = healthy_bins[rng.integers(0, healthy_bins.shape[0], size=m)]
                fake = compose_fake(sig.data, carriers)
                loss_d, gp_value = critic_loss(disc, fake.data, real, config, rng=rng)
                _check_finite(loss_d, "critic", epoch, bundle, log_path)
                disc_opt.zero_grad()
                loss_d.backward()
                disc_opt.step()
                bundle.critic_steps += 1
                epoch_stats["critic_loss"].append(loss_d.item())
                epoch_stats["gp"].append(gp_value)

            # -- triplet-encoder update on real labeled data --------------
            idx = sample_rows(labeled_bins, m)
            batch_bins, batch_ids = labeled_bins[idx], labeled_ids[idx]
            emb = encoder.forward(Tensor(batch_bins), train=True, rng=rng)
            mined = semi_hard_triplets(emb.data, batch_ids, config.alpha)
            if mined:
                loss_c = triplet_loss_mined(emb, mined, config.alpha)
                _check_finite(loss_c, "encoder", epoch, bundle, log_path)
                enc_opt.zero_grad()
                loss_c.backward()
                enc_opt.step()
                epoch_stats["triplet_loss"].append(loss_c.item())
            bundle.encoder_steps += 1

            # -- generator update ------------------------------------------
            codes = rng.choice(fault_class_ids, size=m).astype(np.float64).reshape(m, 1)
            carriers = healthy_bins[rng.integers(0, healthy_bins.shape[0], size=m)]
            real_idx = sample_rows(fault_bins, m)
            loss_g, g_stats = generator_loss(
                generator, disc, encoder,
                fault_bins[real_idx], fault_labels[real_idx],
                carriers, codes, config, rng=rng,
            )
            _check_finite(loss_g, "generator", epoch, bundle, log_path)
            gen_opt.zero_grad()
            loss_g.backward()
            gen_opt.step()
            bundle.generator_steps += 1
            epoch_stats["gen_loss"].append(loss_g.item())

        row = {
            "epoch": epoch,
            "critic_loss": _mean(epoch_stats["critic_loss"]),
            "gen_loss": _mean(epoch_stats["gen_loss"]),
            "triplet_loss": _mean(epoch_stats["triplet_loss"]),
            "gp": _mean(epoch_stats["gp"]),
            "aux_accuracy": float("nan"),
        }

        if epoch % config.callback_period == 0:
            acc = aux_probe_accuracy(
                bundle, source_dataset, rng=np.random.default_rng([config.seed, 3, epoch])
            )
            row["aux_accuracy"] = acc
            bundle.log.append(row)
            if acc >= config.threshold:
                bundle.stopped_early = True
                bundle.epochs_run = epoch
                break
        else:
            bundle.log.append(row)
        bundle.epochs_run = epoch

    if log_path is not None:
        write_log(bundle.log, log_path)
    return bundle


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def _check_finite(loss: Tensor, stage: str, epoch: int, bundle: GanBundle, log_path) -> None:
    if math.isfinite(loss.item()):
        return
    diagnostic = {
        "stage": stage,
        "epoch": epoch,
        "critic_steps": bundle.critic_steps,
        "generator_steps": bundle.generator_steps,
    }
    if log_path is not None:
        dump = Path(log_path).with_suffix(".diverged.bin")
        arrays = {}
        for name, model in (("generator", bundle.generator),
                            ("discriminator", bundle.discriminator),
                            ("encoder", bundle.encoder)):
            for k, v in model.state_arrays().items():
                arrays[f"{name}/{k}"] = v
        save_arrays(dump, arrays, meta=diagnostic)
        diagnostic["dump"] = str(dump)
    raise TrainingDivergedError(f"{stage} loss non-finite at epoch {epoch}", diagnostic)


def write_log(rows: list[dict], path: str | Path) -> None:
    columns = ["epoch", "critic_loss", "gen_loss", "triplet_loss", "gp", "aux_accuracy"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


# ---------------------------------------------------------------------------
# early-stopping probe
# ---------------------------------------------------------------------------

def synthesize_source_style(
    bundle: GanBundle,
    class_id: int,
    count: int,
    healthy_bins: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Source-domain composition (scaling factor 1): signature + carrier,
    clamped to nonnegative magnitudes."""
    codes = np.full((count, 1), float(class_id))
    with T.no_grad():
        sig = bundle.generator.forward(codes, train=False, rng=rng)
    carriers = healthy_bins[rng.integers(0, healthy_bins.shape[0], size=count)]
    fake = compose_fake(sig.data, carriers)
    return np.maximum(fake.data, 0.0)


def aux_probe_accuracy(
    bundle: GanBundle,
    source_dataset: DomainDataset,
    *,
    rng: np.random.Generator,
    generate_fn=None,
) -> float:
    """Train a fresh auxiliary classifier on synthetic source data and score
    it on the real source fault samples.

    Returns min(real-data accuracy, synthetic training-set accuracy).  The
    second term guards against a false stop: a classifier that cannot even
    separate its own synthetic classes can still score high on real data when
    the generator leaks a microscopic class-aligned bias, and such synthetics
    are useless downstream.

    ``generate_fn(class_id, count, rng) -> (count, bins) array`` overrides the
    bundle's generator (test stubs use this).
    """
    ids = bundle.covered_classes
    healthy_bins, fault_bins, fault_labels = _require_pools(source_dataset, ids)
    id_to_index = {c: i for i, c in enumerate(ids)}
    counts = {c: int(np.sum(fault_labels == c)) for c in ids}
    if generate_fn is None:
        def generate_fn(class_id, count, gen_rng):
            return synthesize_source_style(bundle, class_id, count, healthy_bins, gen_rng)
    synth_bins, synth_labels = [], []
    for c in ids:
        if counts[c] == 0:
            continue
        synth_bins.append(generate_fn(c, counts[c], rng))
        synth_labels.append(np.full(counts[c], id_to_index[c], dtype=np.int64))
    train_bins = np.concatenate(synth_bins, axis=0)
    train_labels = np.concatenate(synth_labels)
    cfg = bundle.config
    spec = build_aux_classifier(len(ids), input_bins=source_dataset.num_bins)
    model, _ = fit_classifier(
        spec, train_bins, train_labels,
        epochs=cfg.aux_epochs, batch_size=cfg.aux_batch, seed=rng,
    )
    real_index_labels = np.array([id_to_index[int(c)] for c in fault_labels], dtype=np.int64)
    real_acc = accuracy(model, fault_bins, real_index_labels)
    fit_acc = accuracy(model, train_bins, train_labels)
    return min(real_acc, fit_acc)


def early_stop_check(
    bundle: GanBundle,
    source_dataset: DomainDataset,
    threshold: float = 0.98,
    *,
    rng: np.random.Generator | None = None,
    generate_fn=None,
) -> bool:
    """True iff the auxiliary probe reaches the accuracy threshold."""
    if rng is None:
        rng = np.random.default_rng([bundle.config.seed, 3, bundle.epochs_run])
    return aux_probe_accuracy(bundle, source_dataset, rng=rng, generate_fn=generate_fn) >= threshold


# ---------------------------------------------------------------------------
# bundle checkpoints
# ---------------------------------------------------------------------------

def save_bundle(bundle: GanBundle, path: str | Path) -> None:
    arrays = {}
    for name, model in (("generator", bundle.generator),
                        ("discriminator", bundle.discriminator),
                        ("encoder", bundle.encoder)):
        for k, v in model.state_arrays().items():
            arrays[f"{name}/{k}"] = v
    meta = {
        "fault_type": bundle.fault_type,
        "covered_classes": list(bundle.covered_classes),
        "config": bundle.config.to_dict(),
        "specs": {
            "generator": bundle.generator.spec.to_dict(),
            "discriminator": bundle.discriminator.spec.to_dict(),
            "encoder": bundle.encoder.spec.to_dict(),
        },
        "counters": {
            "critic_steps": bundle.critic_steps,
            "generator_steps": bundle.generator_steps,
            "encoder_steps": bundle.encoder_steps,
            "epochs_run": bundle.epochs_run,
            "stopped_early": bundle.stopped_early,
        },
    }
    save_arrays(path, arrays, meta=meta)


def load_bundle(path: str | Path) -> GanBundle:
    arrays, meta = load_arrays(path)
    models = {}
    for name in ("generator", "discriminator", "encoder"):
        spec = ModelSpec.from_dict(meta["specs"][name])
        model = build_model(spec, np.random.default_rng(0))
        prefix = f"{name}/"
        model.load_state_arrays({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
        models[name] = model
    bundle = GanBundle(
        fault_type=meta["fault_type"],
        covered_classes=tuple(int(c) for c in meta["covered_classes"]),
        generator=models["generator"],
        discriminator=models["discriminator"],
        encoder=models["encoder"],
        config=GanConfig(**meta["config"]),
    )
    counters = meta.get("counters", {})
    bundle.critic_steps = counters.get("critic_steps", 0)
    bundle.generator_steps = counters.get("generator_steps", 0)
    bundle.encoder_steps = counters.get("encoder_steps", 0)
    bundle.epochs_run = counters.get("epochs_run", 0)
    bundle.stopped_early = counters.get("stopped_early", False)
    return bundle
