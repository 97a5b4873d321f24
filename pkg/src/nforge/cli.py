"""The ``nforge`` command line: convert, train, eval, features,
augment-preview, and gradcheck subcommands.

Configuration is plain ``key=value`` lines (# comments allowed) against
a closed schema; command-line flags override file values, which override
built-in defaults.  Exit codes: 0 success, 1 runtime failure, 2
usage/config error.

Set ``NFORGE_THREADS`` to cap BLAS worker threads; it must take effect
before numpy loads, which is why this module imports the rest of the
package lazily.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .errors import ConfigError, NforgeError

_TOPOLOGIES = ("cnn", "mlp-features", "mlp-raw")
_ACTIVATIONS = ("logistic", "tanh", "arctan", "relu", "elu")


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s
    return parse


# closed schema: key -> (parser, default)
CONFIG_SCHEMA = {
    "images": (str, None),
    "labels": (str, None),
    "pnm_dir": (str, None),
    "grayscale": (_parse_bool, True),
    "invert": (_parse_bool, True),
    "train_count": (int, 2500),
    "epochs": (int, 100),
    "batch_size": (int, 128),
    "seed": (int, 0),
    "topology": (_choice(_TOPOLOGIES), "cnn"),
    "activation": (_choice(_ACTIVATIONS), "elu"),
    "elu_alpha": (float, 1.0),
    "optimizer": (_choice(("adadelta", "sgd")), "adadelta"),
    "rho": (float, 0.95),
    "eps": (float, 1e-6),
    "learning_rate": (float, 0.1),
    "augment": (_parse_bool, True),
    "rotation_deg_max": (float, 10.0),
    "shift_frac_max": (float, 0.2),
    "zoom_frac_max": (float, 0.1),
    "zca": (_parse_bool, True),
    "zca_epsilon": (float, 1e-6),
    "checkpoint_interval": (int, 0),
    "out_dir": (str, "runs"),
}


def read_config_file(path) -> dict:
    """Parse and type-check a key=value config file against the schema."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        parser, _ = CONFIG_SCHEMA[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then command-line overrides."""
    conf = {k: default for k, (_, default) in CONFIG_SCHEMA.items()}
    if getattr(args, "config", None):
        conf.update(read_config_file(args.config))
    overrides = {
        "images": getattr(args, "images", None),
        "labels": getattr(args, "labels", None),
        "pnm_dir": getattr(args, "pnm_dir", None),
        "seed": getattr(args, "seed", None),
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "topology": getattr(args, "topology", None),
        "activation": getattr(args, "activation", None),
        "out_dir": getattr(args, "out", None),
        "train_count": getattr(args, "train_count", None),
    }
    conf.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "no_augment", False):
        conf["augment"] = False
    return conf


def load_dataset(conf: dict):
    """Load, grayscale, invert, and split a corpus per the config."""
    from . import dataio

    if conf.get("pnm_dir"):
        ds = dataio.load_pnm(conf["pnm_dir"])
    elif conf.get("images") and conf.get("labels"):
        ds = dataio.load_idx(conf["images"], conf["labels"])
    else:
        raise ConfigError("no dataset: set images=/labels= (IDX) or pnm_dir=")
    if conf["grayscale"]:
        ds = dataio.to_grayscale(ds)
    if conf["invert"]:
        ds = dataio.invert(ds)
    if not 0 < conf["train_count"] < len(ds):
        raise ConfigError(f"train_count {conf['train_count']} out of range "
                          f"for {len(ds)} samples")
    return dataio.split(ds, conf["train_count"], conf["seed"])


def train_config_from(conf: dict):
    from .augment import AugmentConfig
    from .train import TrainConfig

    return TrainConfig(
        epochs=conf["epochs"], batch_size=conf["batch_size"], seed=conf["seed"],
        topology=conf["topology"], activation=conf["activation"],
        elu_alpha=conf["elu_alpha"], optimizer=conf["optimizer"],
        rho=conf["rho"], eps=conf["eps"], learning_rate=conf["learning_rate"],
        augment_enabled=conf["augment"],
        augment=AugmentConfig(
            rotation_deg_max=conf["rotation_deg_max"],
            shift_frac_max=conf["shift_frac_max"],
            zoom_frac_max=conf["zoom_frac_max"],
            zca_enabled=conf["zca"], zca_epsilon=conf["zca_epsilon"],
            seed=conf["seed"]),
        checkpoint_interval=conf["checkpoint_interval"],
    )


def _new_run_dir(out_dir: Path, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = out_dir / f"run-{stamp}-seed{seed}"
    candidate, n = base, 1
    while candidate.exists():
        n += 1
        candidate = base.with_name(f"{base.name}-{n}")
    return candidate


# ---------------------------------------------------------------------------
# Subcommands

def cmd_convert(args) -> int:
    from . import dataio

    ds = dataio.load_pnm(args.input_dir)
    images_path = Path(str(args.out_prefix) + "-images-idx")
    labels_path = Path(str(args.out_prefix) + "-labels-idx")
    dataio.write_idx(ds, images_path, labels_path)
    print(f"wrote {len(ds)} samples: {images_path}, {labels_path}")
    return 0


def cmd_train(args) -> int:
    from .train import train_run

    conf = resolve_config(args)
    cfg = train_config_from(conf)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds = load_dataset(conf)
    run_dir = _new_run_dir(Path(conf["out_dir"]), cfg.seed)
    print(f"run directory: {run_dir}")
    result = train_run(ds, cfg, run_dir, log=print)
    print(f"best val acc {result['summary']['best_val_acc']} "
          f"(epoch {result['summary']['best_epoch']})")
    return 0


def cmd_eval(args) -> int:
    from .network import load_checkpoint
    from .train import evaluate

    conf = resolve_config(args)
    net = load_checkpoint(args.checkpoint)
    ds = load_dataset(conf)
    accuracy, matrix = evaluate(net, ds, args.split)
    print(f"accuracy {accuracy:.4f}")
    for row in matrix.counts:
        print(" ".join(f"{v:4d}" for v in row))
    return 0


def cmd_features(args) -> int:
    from .features import extract_88

    conf = resolve_config(args)
    ds = load_dataset(conf)
    with open(args.out, "w") as f:
        for i in range(len(ds)):
            vec = extract_88(ds.images[i], threshold=args.threshold)
            f.write(",".join(f"{v:.8g}" for v in vec))
            f.write(f",{int(ds.labels[i])}\n")
    print(f"wrote {len(ds)} rows to {args.out}")
    return 0


def cmd_augment_preview(args) -> int:
    import numpy as np

    from . import augment as aug
    from .dataio import write_pnm
    from .train import fit_zca

    conf = resolve_config(args)
    cfg = train_config_from(conf)
    ds = load_dataset(conf)
    zca = fit_zca(ds, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(conf["seed"])
    indices = ds.train_indices[:args.count]
    transformed = aug.augment_images(ds.images[indices], cfg.augment, zca, rng) \
        if conf["augment"] else ds.images[indices]
    written = 0
    for i, idx in enumerate(indices):
        write_pnm(out_dir / f"orig_{i:03d}.pgm", ds.images[idx])
        write_pnm(out_dir / f"aug_{i:03d}.pgm", _to_unit_range(transformed[i]))
        written += 2
    print(f"wrote {written} files to {out_dir}")
    return 0


def _to_unit_range(image):
    """Min-max rescale only when whitening pushed values outside [0, 1]."""
    lo, hi = image.min(), image.max()
    if lo >= 0.0 and hi <= 1.0:
        return image
    if hi - lo < 1e-12:
        return image * 0.0
    return (image - lo) / (hi - lo)


def cmd_gradcheck(args) -> int:
    from .train import canonical_gradcheck_suites, grad_check

    failures = 0
    print(f"{'suite':24s} {'layer':28s} {'max rel err':>12s}  status")
    for name, spec, input_shape in canonical_gradcheck_suites():
        report = grad_check(spec, input_shape, trials=args.trials,
                            tol=args.tol, seed=args.seed or 0)
        for layer, err in sorted(report.per_layer.items()):
            ok = err < args.tol
            failures += 0 if ok else 1
            print(f"{name:24s} {layer:28s} {err:12.3e}  {'ok' if ok else 'FAIL'}")
    if failures:
        print(f"{failures} gradient checks failed (tol {args.tol:g})")
        return 1
    print(f"all gradient checks passed (tol {args.tol:g})")
    return 0


# ---------------------------------------------------------------------------
# Parser

def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--images", help="IDX images file")
    p.add_argument("--labels", help="IDX labels file")
    p.add_argument("--pnm-dir", dest="pnm_dir", help="directory of PNM files")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-count", dest="train_count", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nforge",
        description="train and evaluate handwritten-numeral classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a PNM directory to an IDX pair")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--format", choices=("pnm",), default="pnm",
                   help="input format (only pnm)")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train a model, writing a run directory")
    _add_dataset_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--topology", choices=_TOPOLOGIES)
    p.add_argument("--activation", choices=_ACTIVATIONS)
    p.add_argument("--no-augment", dest="no_augment", action="store_true")
    p.add_argument("--out", help="parent directory for run directories")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_dataset_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "all"), default="val")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("features", help="dump the 88-feature CSV")
    _add_dataset_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("augment-preview",
                       help="write original/augmented PNM pairs")
    _add_dataset_flags(p)
    p.add_argument("-n", "--count", type=int, default=5)
    p.add_argument("--no-augment", dest="no_augment", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _cap_threads() -> None:
    cap = os.environ.get("NFORGE_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def main(argv=None) -> int:
    _cap_threads()  # before numpy loads anywhere
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NforgeError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
