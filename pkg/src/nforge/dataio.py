"""Image corpus ingestion, preprocessing, splitting, and batch serving.

Two on-disk formats are supported, both implementable without any image
library: IDX (the MNIST container: big-endian magic + dims + raw bytes)
and binary PNM (P5 grayscale / P6 RGB, maxval 255).  Pixels are held in
memory as float64 in [0, 1], shaped (N, C, H, W).

Labels for PNM corpora come from the filename: ``<label>_<id>.pgm``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

IDX_IMAGES_MAGIC = 0x00000803  # 3 dims: n, rows, cols
IDX_IMAGES_RGB_MAGIC = 0x00000804  # 4 dims: n, channels, rows, cols
IDX_LABELS_MAGIC = 0x00000801

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Sample:
    """One labelled image: float64 (C, H, W) with values in [0, 1]."""

    image: np.ndarray
    label: int


class Dataset:
    """An ordered, immutable collection of samples plus an optional split.

    Pixels live in one (N, C, H, W) float64 array; `train_indices` and
    `val_indices` are disjoint index arrays set by :func:`split`.
    """

    def __init__(self, images: np.ndarray, labels: np.ndarray, class_count: int,
                 train_indices: np.ndarray | None = None,
                 val_indices: np.ndarray | None = None):
        if images.ndim != 4:
            raise ShapeError(f"dataset images must be (N, C, H, W), got {images.shape}")
        if len(images) != len(labels):
            raise ShapeError(f"{len(images)} images vs {len(labels)} labels")
        if len(images) == 0:
            raise FormatError("empty dataset")
        if labels.min() < 0 or labels.max() >= class_count:
            raise ValueError(f"labels must lie in [0, {class_count}), "
                             f"got range [{labels.min()}, {labels.max()}]")
        self.images = images
        self.labels = labels
        self.class_count = class_count
        self.train_indices = train_indices
        self.val_indices = val_indices

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> Sample:
        return Sample(image=self.images[i], label=int(self.labels[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def samples(self) -> list[Sample]:
        return [self[i] for i in range(len(self))]

    @property
    def channels(self) -> int:
        return self.images.shape[1]

    def replace_images(self, images: np.ndarray) -> "Dataset":
        """New dataset with the same labels and split but different pixels."""
        return Dataset(images, self.labels, self.class_count,
                       self.train_indices, self.val_indices)

    def require_split(self) -> None:
        if self.train_indices is None or self.val_indices is None:
            raise ValueError("dataset has no train/validation split; call split() first")


# ---------------------------------------------------------------------------
# IDX container

def _read_be32(data: bytes, offset: int, path: Path) -> int:
    if offset + 4 > len(data):
        raise FormatError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair into a dataset.

    Pixel bytes are scaled by 1/255.  The channel count is taken from the
    header: magic 0x803 carries (n, rows, cols) grayscale records, magic
    0x804 carries (n, channels, rows, cols).
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    raw = images_path.read_bytes()

    magic = _read_be32(raw, 0, images_path)
    if magic == IDX_IMAGES_MAGIC:
        n, rows, cols = (_read_be32(raw, 4 * i, images_path) for i in (1, 2, 3))
        channels, header = 1, 16
    elif magic == IDX_IMAGES_RGB_MAGIC:
        n, channels, rows, cols = (_read_be32(raw, 4 * i, images_path) for i in (1, 2, 3, 4))
        header = 20
    else:
        raise FormatError(f"{images_path}: bad images magic 0x{magic:08x} at byte 0")
    expected = header + n * channels * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{images_path}: expected {expected} bytes, found {len(raw)} "
                          f"(payload starts at byte {header})")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=header)
    images = pixels.reshape(n, channels, rows, cols).astype(np.float64) / 255.0

    raw_labels = labels_path.read_bytes()
    label_magic = _read_be32(raw_labels, 0, labels_path)
    if label_magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{labels_path}: bad labels magic 0x{label_magic:08x} at byte 0")
    n_labels = _read_be32(raw_labels, 4, labels_path)
    if n_labels != n:
        raise FormatError(f"{labels_path}: label count {n_labels} does not match "
                          f"image count {n} (count field at byte 4)")
    if len(raw_labels) != 8 + n_labels:
        raise FormatError(f"{labels_path}: expected {8 + n_labels} bytes, "
                          f"found {len(raw_labels)}")
    labels = np.frombuffer(raw_labels, dtype=np.uint8, offset=8).astype(np.int64)

    class_count = int(labels.max()) + 1 if len(labels) else 0
    return Dataset(images, labels, class_count=max(class_count, 10))


def write_idx(ds: Dataset, images_path, labels_path) -> None:
    """Write a dataset as an IDX pair (inverse of :func:`load_idx`).

    Pixels are quantized with round(v * 255); loading bytes and writing
    them back is bit-exact.
    """
    n, channels, rows, cols = ds.images.shape
    pixels = np.rint(np.clip(ds.images, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        if channels == 1:
            f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        else:
            f.write(struct.pack(">IIIII", IDX_IMAGES_RGB_MAGIC, n, channels, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# PNM (binary P5 / P6)

def _parse_pnm_header(raw: bytes, path: Path):
    """Return (kind, width, height, maxval, data_offset)."""
    if raw[:2] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary PNM file (magic {raw[:2]!r})")
    kind = raw[:2].decode()
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PNM header")
        try:
            fields.append(int(raw[start:pos]))
        except ValueError:
            raise FormatError(f"{path}: bad PNM header token {raw[start:pos]!r}") from None
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported PNM depth maxval={maxval} (only 255)")
    return kind, width, height, maxval, pos


def read_pnm(path) -> np.ndarray:
    """Read one binary PNM file into a float64 (C, H, W) array in [0, 1]."""
    path = Path(path)
    raw = path.read_bytes()
    kind, width, height, _, offset = _parse_pnm_header(raw, path)
    channels = 1 if kind == "P5" else 3
    count = width * height * channels
    if len(raw) - offset < count:
        raise FormatError(f"{path}: raster truncated at byte {len(raw)} "
                          f"(need {offset + count})")
    flat = np.frombuffer(raw, dtype=np.uint8, offset=offset, count=count)
    if kind == "P5":
        img = flat.reshape(1, height, width)
    else:
        img = flat.reshape(height, width, 3).transpose(2, 0, 1)
    return img.astype(np.float64) / 255.0


def write_pnm(path, image: np.ndarray) -> None:
    """Write a float64 (C, H, W) image in [0, 1] as binary P5/P6."""
    path = Path(path)
    c, h, w = image.shape
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        if c == 1:
            f.write(b"P5\n%d %d\n255\n" % (w, h))
            f.write(pixels[0].tobytes())
        elif c == 3:
            f.write(b"P6\n%d %d\n255\n" % (w, h))
            f.write(pixels.transpose(1, 2, 0).tobytes())
        else:
            raise ShapeError(f"PNM supports 1 or 3 channels, got {c}")


def load_pnm(directory) -> Dataset:
    """Load every ``<label>_<id>.pgm``/``.ppm`` file in a directory.

    Files are taken in sorted filename order so corpus loading is
    deterministic across platforms.
    """
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in (".pgm", ".ppm"))
    if not paths:
        raise FormatError(f"{directory}: no PNM files found (empty dataset)")
    images, labels = [], []
    for p in paths:
        prefix = p.stem.split("_", 1)[0]
        try:
            label = int(prefix)
        except ValueError:
            raise FormatError(f"{p.name}: filename must start with '<label>_'") from None
        if label < 0:
            raise FormatError(f"{p.name}: negative label")
        img = read_pnm(p)
        images.append(img)
        labels.append(label)
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise FormatError(f"{directory}: mixed image shapes {sorted(shapes)}")
    stacked = np.stack(images)
    labels = np.asarray(labels, dtype=np.int64)
    return Dataset(stacked, labels, class_count=max(int(labels.max()) + 1, 10))


# ---------------------------------------------------------------------------
# Preprocessing

def invert(ds: Dataset) -> Dataset:
    """Replace every pixel v with 1 - v (numerals become bright on dark)."""
    return ds.replace_images(1.0 - ds.images)


def to_grayscale(ds: Dataset) -> Dataset:
    """Collapse RGB to a single luminance channel; no-op when already gray."""
    if ds.channels == 1:
        return ds
    if ds.channels != 3:
        raise ShapeError(f"expected 1 or 3 channels, got {ds.channels}")
    gray = np.einsum("nchw,c->nhw", ds.images, LUMA_WEIGHTS)[:, None, :, :]
    return ds.replace_images(np.ascontiguousarray(gray))


def split(ds: Dataset, train_count: int, seed: int) -> Dataset:
    """Seeded shuffle, then the first `train_count` indices become the
    training set and the remainder the validation set."""
    n = len(ds)
    if not 0 < train_count < n:
        raise ValueError(f"train_count must be in (0, {n}), got {train_count}")
    perm = np.random.default_rng(seed).permutation(n)
    return Dataset(ds.images, ds.labels, ds.class_count,
                   train_indices=perm[:train_count], val_indices=perm[train_count:])


class BatchIterator:
    """Serves seeded shuffled mini-batches of training indices.

    Every epoch visits each training index exactly once; the last batch
    may be short but is never empty.  The order for epoch e depends only
    on (seed, e), so reruns are reproducible regardless of consumption
    order.
    """

    def __init__(self, ds: Dataset, batch_size: int = 128, seed: int = 0):
        ds.require_split()
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.dataset = ds
        self.batch_size = batch_size
        self.seed = seed

    def batches(self, epoch: int):
        """Yield index arrays covering the train split for one epoch."""
        rng = np.random.default_rng([self.seed, epoch])
        order = rng.permutation(self.dataset.train_indices)
        for start in range(0, len(order), self.batch_size):
            yield order[start:start + self.batch_size]
