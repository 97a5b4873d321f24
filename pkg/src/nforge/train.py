"""Training orchestration, evaluation, and gradient verification.

`train` runs the full loop: seeded shuffling, per-batch augmentation,
forward/loss/backward, optimizer step, then an un-augmented validation
pass per epoch.  Everything stochastic is keyed off TrainConfig.seed:
epoch shuffles use (seed, epoch), the augmentation stream for a batch is
seeded with seed XOR global-batch-index, and dropout draws from a
dedicated per-run stream, so two runs with the same config and seed are
bitwise identical.

`train_run` wraps `train` with the on-disk run layout: a streaming
``metrics.csv`` (epoch,train_loss,train_acc,val_acc,seconds), a final
``confusion.csv``, ``summary.txt``, and checkpoints for the best
validation accuracy and the final epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import augment as aug
from .augment import AugmentConfig, ZcaTransform
from .dataio import BatchIterator, Dataset, write_pnm
from .features import extract_88_stack
from .network import (ACTIVATION_KINDS, Activation, Conv, Dense, Dropout,
                      Flatten, MaxPool, Network, NetworkSpec, cross_entropy,
                      default_cnn_spec, mlp_features_spec, mlp_raw_spec,
                      param_count, save_checkpoint, softmax,
                      softmax_cross_entropy_grad)
from .optim import AdadeltaState, SgdState, adadelta_step, sgd_step

TOPOLOGIES = ("cnn", "mlp-features", "mlp-raw")
OPTIMIZERS = ("adadelta", "sgd")
REFERENCE_VAL_ACC = 0.994  # published headline accuracy this build tracks


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    topology: str = "cnn"
    activation: str = "elu"  # applies to the cnn topology; MLPs stay logistic
    elu_alpha: float = 1.0
    optimizer: str = "adadelta"
    rho: float = 0.95
    eps: float = 1e-6
    learning_rate: float = 0.1
    augment_enabled: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    checkpoint_interval: int = 0  # extra periodic checkpoints; 0 disables

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.activation not in ACTIVATION_KINDS:
            raise ValueError(f"activation must be one of {ACTIVATION_KINDS}, "
                             f"got {self.activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.elu_alpha <= 0:
            raise ValueError(f"elu_alpha must be positive, got {self.elu_alpha}")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be >= 0")
        self.augment.validate()


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    seconds: float


class ConfusionMatrix:
    """K x K prediction counts: rows are predicted classes, columns true."""

    def __init__(self, class_count: int, counts: np.ndarray | None = None):
        if counts is None:
            counts = np.zeros((class_count, class_count), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (class_count, class_count) or (counts < 0).any():
            raise ValueError(f"bad confusion counts for K={class_count}")
        self.class_count = class_count
        self.counts = counts

    def add_many(self, predicted: np.ndarray, true: np.ndarray) -> None:
        np.add.at(self.counts, (np.asarray(predicted), np.asarray(true)), 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def column_totals(self) -> np.ndarray:
        """Per-true-class sample counts."""
        return self.counts.sum(axis=0)

    def to_csv_text(self) -> str:
        return "\n".join(",".join(str(v) for v in row) for row in self.counts) + "\n"

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix)
                and np.array_equal(self.counts, other.counts))


# ---------------------------------------------------------------------------
# Topology construction and input preparation

def build_topology(cfg: TrainConfig, ds: Dataset) -> tuple[NetworkSpec, tuple[int, ...]]:
    if cfg.topology == "cnn":
        spec = default_cnn_spec(cfg.activation, cfg.elu_alpha,
                                class_count=ds.class_count)
        return spec, ds.images.shape[1:]
    if cfg.topology == "mlp-features":
        return mlp_features_spec(class_count=ds.class_count), (88,)
    if cfg.topology == "mlp-raw":
        return mlp_raw_spec(class_count=ds.class_count), ds.images.shape[1:]
    raise ValueError(f"unknown topology {cfg.topology!r}")


def prepare_input(net: Network, images: np.ndarray) -> np.ndarray:
    """Map raw images to what the network consumes.

    Rank-1 input shapes denote the 88-feature baseline; everything else
    takes the image stack directly.
    """
    if len(net.input_shape) == 1:
        if net.input_shape[0] != 88:
            raise ValueError(f"cannot prepare inputs for flat shape {net.input_shape}")
        return extract_88_stack(images)
    return images


# ---------------------------------------------------------------------------
# Training loop

def _make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adadelta":
        state = AdadeltaState(rho=cfg.rho, eps=cfg.eps)
        return state, adadelta_step
    state = SgdState(learning_rate=cfg.learning_rate)
    return state, sgd_step


def fit_zca(ds: Dataset, cfg: TrainConfig) -> ZcaTransform | None:
    """Fit ZCA on the training split when augmentation asks for it."""
    if not (cfg.augment_enabled and cfg.augment.zca_enabled):
        return None
    return aug.zca_fit(ds.images[ds.train_indices], epsilon=cfg.augment.zca_epsilon)


def train(ds: Dataset, cfg: TrainConfig, *, timer=time.perf_counter,
          epoch_callback=None) -> tuple[Network, list[EpochReport]]:
    """Run the configured number of epochs and return the trained network.

    The dataset must be preprocessed (inversion, grayscale) and split.
    `epoch_callback(report)` fires after each epoch; `timer` supplies the
    wall-clock used for the seconds column and exists so tests can make
    timing deterministic.
    """
    cfg.validate()
    ds.require_split()
    spec, input_shape = build_topology(cfg, ds)
    net = Network(spec, input_shape, ds.class_count, seed=cfg.seed)
    net.reseed_dropout([cfg.seed, 3])
    opt_state, opt_step = _make_optimizer(cfg)
    zca = fit_zca(ds, cfg)

    feature_cache = None
    if cfg.topology == "mlp-features" and not cfg.augment_enabled:
        feature_cache = extract_88_stack(ds.images)

    iterator = BatchIterator(ds, cfg.batch_size, seed=cfg.seed)
    n_batches = -(-len(ds.train_indices) // cfg.batch_size)
    reports: list[EpochReport] = []
    for epoch in range(cfg.epochs):
        started = timer()
        net.set_mode("train")
        loss_sum = 0.0
        correct = 0
        seen = 0
        for b, idx in enumerate(iterator.batches(epoch)):
            labels = ds.labels[idx]
            if cfg.augment_enabled:
                rng = np.random.default_rng(cfg.seed ^ (epoch * n_batches + b))
                images = aug.augment_images(ds.images[idx], cfg.augment, zca, rng)
                x = prepare_input(net, images)
            elif feature_cache is not None:
                x = feature_cache[idx]
            else:
                x = prepare_input(net, ds.images[idx])
            logits = net.forward(x)
            probs = softmax(logits)
            loss_value = cross_entropy(probs, labels)
            if not np.isfinite(loss_value.loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {b}")
            net.backward(softmax_cross_entropy_grad(probs, labels))
            opt_step(net.parameters, net.gradients, opt_state)
            loss_sum += loss_value.loss * len(idx)
            correct += int((probs.argmax(axis=1) == labels).sum())
            seen += len(idx)

        val_acc, _ = evaluate(net, ds, "val", features=feature_cache)
        report = EpochReport(epoch=epoch, train_loss=loss_sum / seen,
                             train_acc=correct / seen, val_acc=val_acc,
                             seconds=timer() - started)
        reports.append(report)
        if epoch_callback is not None:
            epoch_callback(report, net)
    return net, reports


def evaluate(net: Network, ds: Dataset, split: str = "val", *,
             features: np.ndarray | None = None,
             chunk: int = 256) -> tuple[float, ConfusionMatrix]:
    """Accuracy and confusion matrix on one split, in eval mode.

    Prediction is the argmax of the softmax; numpy's argmax already
    breaks ties toward the lower class index.
    """
    indices = _split_indices(ds, split)
    net.set_mode("eval")
    matrix = ConfusionMatrix(ds.class_count)
    for start in range(0, len(indices), chunk):
        idx = indices[start:start + chunk]
        if features is not None:
            x = features[idx]
        else:
            x = prepare_input(net, ds.images[idx])
        probs = softmax(net.forward(x))
        matrix.add_many(probs.argmax(axis=1), ds.labels[idx])
    return matrix.accuracy, matrix


def _split_indices(ds: Dataset, split: str) -> np.ndarray:
    if split == "all":
        return np.arange(len(ds))
    ds.require_split()
    if split == "train":
        return ds.train_indices
    if split == "val":
        return ds.val_indices
    raise ValueError(f"split must be 'train', 'val' or 'all', got {split!r}")


def dump_misclassified(net: Network, ds: Dataset, out_dir) -> int:
    """Write every misclassified validation image as a PNM file.

    Files are named ``true<t>_pred<p>_<idx>.pgm`` (``.ppm`` for RGB),
    with <idx> the sample's index in the dataset.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    indices = _split_indices(ds, "val")
    net.set_mode("eval")
    written = 0
    for start in range(0, len(indices), 256):
        idx = indices[start:start + 256]
        probs = softmax(net.forward(prepare_input(net, ds.images[idx])))
        preds = probs.argmax(axis=1)
        for sample_idx, pred in zip(idx, preds):
            true = int(ds.labels[sample_idx])
            if int(pred) != true:
                ext = "pgm" if ds.channels == 1 else "ppm"
                name = f"true{true}_pred{int(pred)}_{int(sample_idx)}.{ext}"
                write_pnm(out_dir / name, ds.images[sample_idx])
                written += 1
    return written


# ---------------------------------------------------------------------------
# Gradient checking

@dataclass(frozen=True)
class GradCheckReport:
    """Max relative finite-difference error per layer (plus the input)."""

    per_layer: dict
    tol: float
    trials: int

    @property
    def max_error(self) -> float:
        return max(self.per_layer.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol


MAX_GRADCHECK_PARAMS = 10_000


def grad_check(spec: NetworkSpec, input_shape: tuple[int, ...], *,
               trials: int = 20, tol: float = 1e-4, step: float = 1e-5,
               batch: int = 2, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Every parameter entry and every input entry is perturbed by +-step;
    the relative error is |analytic - numeric| / max(|analytic|,
    |numeric|, 1e-6), the floor absorbing f64 cancellation noise in the
    difference quotient.  Dropout layers run in eval mode here, so the
    checked function is deterministic.
    """
    chain = spec.shape_chain(input_shape)
    class_count = chain[-1][0]
    worst: dict = {}
    for trial in range(trials):
        trial_seed = seed * 100_003 + trial
        net = Network(spec, input_shape, class_count, seed=trial_seed)
        if param_count(net) > MAX_GRADCHECK_PARAMS:
            raise ValueError(f"spec too large for finite differences: "
                             f"{param_count(net)} > {MAX_GRADCHECK_PARAMS} parameters")
        net.set_mode("eval")
        rng = np.random.default_rng([trial_seed, 17])
        x = rng.standard_normal((batch,) + tuple(input_shape))
        labels = rng.integers(0, class_count, size=batch)

        def loss_of() -> float:
            return cross_entropy(softmax(net.forward(x)), labels).loss

        probs = softmax(net.forward(x))
        grad_input = net.backward(softmax_cross_entropy_grad(probs, labels))
        analytic = [g.copy() for g in net.gradients]

        labelled = _labelled_params(net)
        for (label, param), a_grad in zip(labelled, analytic):
            err = _max_rel_error(param, a_grad, loss_of, step)
            worst[label] = max(worst.get(label, 0.0), err)
        err = _max_rel_error(x, grad_input, loss_of, step)
        worst["input"] = max(worst.get("input", 0.0), err)
    return GradCheckReport(per_layer=worst, tol=tol, trials=trials)


def canonical_gradcheck_suites() -> list[tuple[str, NetworkSpec, tuple[int, ...]]]:
    """Small specs covering every layer kind under every activation."""
    suites = []
    for kind in ACTIVATION_KINDS:
        act = Activation(kind, 1.0)
        suites.append((f"dense-{kind}",
                       NetworkSpec((Dense(8), act, Dense(6), act, Dense(3))),
                       (5,)))
        suites.append((f"conv-{kind}",
                       NetworkSpec((Conv(2), act, MaxPool(), Flatten(),
                                    Dropout(0.25), Dense(3))),
                       (1, 6, 6)))
    return suites


def _labelled_params(net: Network):
    out = []
    for i, layer in enumerate(net.layers):
        kind = type(layer).__name__.removesuffix("Layer").lower()
        for j, p in enumerate(layer.params):
            part = "weights" if j == 0 else "bias"
            out.append((f"layer{i:02d}-{kind}-{part}", p))
    return out


def _max_rel_error(values: np.ndarray, analytic: np.ndarray, loss_of, step: float) -> float:
    worst = 0.0
    flat = values.reshape(-1)
    a_flat = analytic.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = loss_of()
        flat[i] = orig - step
        down = loss_of()
        flat[i] = orig
        numeric = (up - down) / (2.0 * step)
        denom = max(abs(a_flat[i]), abs(numeric), 1e-6)
        worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Run directory

def _fmt(x: float) -> str:
    return repr(float(x))


def train_run(ds: Dataset, cfg: TrainConfig, run_dir, *,
              timer=time.perf_counter, log=None) -> dict:
    """Train and persist metrics, confusion matrix, summary and checkpoints.

    Returns a summary dict (also written as ``summary.txt``).
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=False)
    metrics_path = run_dir / "metrics.csv"
    best = {"val_acc": -1.0, "epoch": -1}

    with open(metrics_path, "w") as metrics:
        metrics.write("epoch,train_loss,train_acc,val_acc,seconds\n")

        def on_epoch(report: EpochReport, net: Network) -> None:
            metrics.write(f"{report.epoch},{_fmt(report.train_loss)},"
                          f"{_fmt(report.train_acc)},{_fmt(report.val_acc)},"
                          f"{_fmt(report.seconds)}\n")
            metrics.flush()
            if report.val_acc > best["val_acc"]:
                best.update(val_acc=report.val_acc, epoch=report.epoch)
                save_checkpoint(net, run_dir / "best.nfck")
            if cfg.checkpoint_interval and (report.epoch + 1) % cfg.checkpoint_interval == 0:
                save_checkpoint(net, run_dir / f"epoch{report.epoch:04d}.nfck")
            if log is not None:
                log(f"epoch {report.epoch:3d}  loss {report.train_loss:.4f}  "
                    f"train {report.train_acc:.4f}  val {report.val_acc:.4f}  "
                    f"{report.seconds:.1f}s")

        net, reports = train(ds, cfg, timer=timer, epoch_callback=on_epoch)

    save_checkpoint(net, run_dir / "final.nfck")
    final_acc, matrix = evaluate(net, ds, "val")
    (run_dir / "confusion.csv").write_text(matrix.to_csv_text())

    summary = {
        "topology": cfg.topology,
        "activation": cfg.activation,
        "optimizer": cfg.optimizer,
        "epochs": str(cfg.epochs),
        "batch_size": str(cfg.batch_size),
        "seed": str(cfg.seed),
        "augment": str(cfg.augment_enabled).lower(),
        "zca": str(cfg.augment_enabled and cfg.augment.zca_enabled).lower(),
        "param_count": str(param_count(net)),
        "final_val_acc": _fmt(final_acc),
        "best_val_acc": _fmt(best["val_acc"]),
        "best_epoch": str(best["epoch"]),
        "reference_val_acc": _fmt(REFERENCE_VAL_ACC),
        "distance_to_reference": _fmt(REFERENCE_VAL_ACC - best["val_acc"]),
    }
    (run_dir / "summary.txt").write_text(
        "".join(f"{k}={v}\n" for k, v in summary.items()))
    return {"net": net, "reports": reports, "summary": summary,
            "confusion": matrix, "run_dir": run_dir}
