"""Shadow and octant features for the MLP baseline classifier.

The exact geometry of these engineered features varies between authors;
the variant implemented here is normative for this package and is fixed
as follows, for a square single-channel image of side S:

* Pixels are unit squares: pixel (r, c) occupies [r, r+1] x [c, c+1] and
  has center (r + 0.5, c + 0.5).  A pixel is foreground when its value
  is strictly greater than the binarization threshold (inverted images
  carry bright strokes, so the default threshold is 0.5).

* The image center O = (S/2, S/2) together with the horizontal and
  vertical center lines and the two diagonals split the image into 8
  octants.  A pixel belongs to octant k, k = 0..7, when the angle of
  (center - O), measured in [0, 360) from the +row axis toward +col,
  lies in [45k, 45(k+1)).

* Each octant has 3 shadow segments: its two straight boundary rays and
  the stretch of image border between their exit points.  A foreground
  pixel casts onto a segment's line the orthogonal projection of its
  unit square, an interval of width |u_r| + |u_c| for unit direction u.
  Each segment is divided into three equal thirds of its support (the
  projection of the whole octant); the shadow value of one third is the
  measure of the union of the foreground intervals clipped to the third,
  divided by the third's length.  This yields 8 x 3 x 3 = 72 values in
  [0, 1]; a fully foreground image saturates them all at 1.

* Octant features are the per-octant centroid (row, col) of foreground
  pixel centers, divided by the image side; an empty octant reports the
  centroid of the octant's own pixel region.  8 x 2 = 16 values.

`extract_88` concatenates shadows then centroids into the 88-vector the
baseline network trains on.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ShapeError

SHADOW_COUNT = 72
OCTANT_COUNT = 16
FEATURE_COUNT = SHADOW_COUNT + OCTANT_COUNT
DEFAULT_THRESHOLD = 0.5

_SEGMENTS_PER_OCTANT = 3
_THIRDS = 3


def _ray_exit(center: np.ndarray, direction: np.ndarray, side: float) -> np.ndarray:
    """Where a ray from the center leaves the [0, side]^2 box."""
    t = np.inf
    for axis in (0, 1):
        d = direction[axis]
        if abs(d) > 1e-12:
            bound = side if d > 0 else 0.0
            t = min(t, (bound - center[axis]) / d)
    return center + t * direction


@lru_cache(maxsize=8)
def _geometry(side: int):
    """Precomputed octant membership, projection intervals, and centroids."""
    s = float(side)
    center = np.array([s / 2.0, s / 2.0])
    rr, cc = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    centers = np.stack([rr.ravel() + 0.5, cc.ravel() + 0.5], axis=1)
    offsets = centers - center
    angles = np.mod(np.arctan2(offsets[:, 1], offsets[:, 0]), 2 * np.pi)
    octant = np.minimum((angles / (np.pi / 4)).astype(np.intp), 7)

    per_octant = []
    for k in range(8):
        pix = np.flatnonzero(octant == k)
        a0 = k * np.pi / 4
        a1 = (k + 1) * np.pi / 4
        u0 = np.array([np.cos(a0), np.sin(a0)])
        u1 = np.array([np.cos(a1), np.sin(a1)])
        p0 = _ray_exit(center, u0, s)
        p1 = _ray_exit(center, u1, s)
        border_dir = p1 - p0
        norm = np.linalg.norm(border_dir)
        border_u = border_dir / norm if norm > 0 else np.array([1.0, 0.0])
        segments = []
        for anchor, u in ((center, u0), (center, u1), (p0, border_u)):
            width = (np.abs(u[0]) + np.abs(u[1])) / 2.0
            proj = (centers[pix] - anchor) @ u
            lo = proj - width
            hi = proj + width
            order = np.argsort(lo, kind="stable")
            lo, hi, idx = lo[order], hi[order], pix[order]
            if len(pix):
                support = (float(lo.min()), float(hi.max()))
            else:
                support = (0.0, 1.0)
            third_edges = np.linspace(support[0], support[1], _THIRDS + 1)
            segments.append((idx, lo, hi, third_edges))
        default_centroid = centers[pix].mean(axis=0) if len(pix) else center
        per_octant.append((pix, segments, default_centroid))
    return centers, per_octant


def _validate(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise ShapeError(f"features need a single-channel image, got {img.shape}")
        img = img[0]
    if img.ndim != 2 or img.shape[0] != img.shape[1] or img.shape[0] < 4:
        raise ShapeError(f"features need a square (1, S, S) image with S >= 4, "
                         f"got {image.shape}")
    return img


def shadow_features(image: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """72 normalized shadow lengths: 8 octants x 3 segments x 3 thirds."""
    img = _validate(image)
    _, per_octant = _geometry(img.shape[0])
    mask = img.ravel() > threshold
    out = np.zeros(SHADOW_COUNT)
    pos = 0
    for _, segments, _ in per_octant:
        for idx, lo, hi, edges in segments:
            sel = mask[idx]
            lo_f, hi_f = lo[sel], hi[sel]
            if lo_f.size:
                run_max = np.maximum.accumulate(hi_f)
                prev = np.concatenate(([-np.inf], run_max[:-1]))
                start = np.maximum(lo_f, prev)
                for m in range(_THIRDS):
                    a, b = edges[m], edges[m + 1]
                    covered = np.minimum(hi_f, b) - np.maximum(start, a)
                    out[pos + m] = np.clip(covered, 0.0, None).sum() / (b - a)
            pos += _THIRDS
    return np.clip(out, 0.0, 1.0)


def octant_features(image: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """16 values: per-octant foreground centroid (row, col) / image side."""
    img = _validate(image)
    side = img.shape[0]
    centers, per_octant = _geometry(side)
    mask = img.ravel() > threshold
    out = np.zeros(OCTANT_COUNT)
    for k, (pix, _, default_centroid) in enumerate(per_octant):
        fg = pix[mask[pix]]
        centroid = centers[fg].mean(axis=0) if fg.size else default_centroid
        out[2 * k:2 * k + 2] = centroid / side
    return out


def extract_88(image: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """The 88-feature vector: 72 shadow values then 16 octant centroids."""
    return np.concatenate([shadow_features(image, threshold),
                           octant_features(image, threshold)])


def extract_88_stack(images: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Feature matrix (N, 88) for a stack of (N, 1, S, S) images."""
    return np.stack([extract_88(img, threshold) for img in images])
