"""Training-time image augmentation: ZCA whitening plus random affine.

The affine step composes rotation and zoom about the image center with a
translation, realized by inverse mapping: for each output pixel at
offset d from the center, the source location is

    src = R(-angle) . (d - t) / (1 + zoom) + center,

with t = (shift_y * H, shift_x * W).  Source coordinates are sampled
with nearest-neighbor rounding and clamped to the nearest border pixel,
so no new pixel values are ever invented.

ZCA whitening is fit on the training split only: the per-pixel mean is
removed, the covariance X^T X / n is eigendecomposed and the whitening
matrix V diag((lambda + eps)^-1/2) V^T is applied to centered images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .dataio import Sample
from .errors import ShapeError

# Above this flattened dimension the covariance eigendecomposition is
# delegated to LAPACK; the in-house Jacobi solver is exact but its pure
# numpy sweeps are slow at 32x32-image scale (D = 1024).
JACOBI_MAX_DIM = 256


@dataclass(frozen=True)
class AugmentConfig:
    """Bounds for the random affine draws plus the ZCA settings.

    All affine parameters are drawn uniformly over symmetric ranges, e.g.
    angle ~ U(-rotation_deg_max, +rotation_deg_max).
    """

    rotation_deg_max: float = 10.0
    shift_frac_max: float = 0.2
    zoom_frac_max: float = 0.1
    zca_enabled: bool = True
    zca_epsilon: float = 1e-6
    seed: int = 0

    def validate(self) -> None:
        if self.rotation_deg_max < 0:
            raise ValueError(f"rotation_deg_max must be >= 0, got {self.rotation_deg_max}")
        if not 0.0 <= self.shift_frac_max < 1.0:
            raise ValueError(f"shift_frac_max must be in [0, 1), got {self.shift_frac_max}")
        if not 0.0 <= self.zoom_frac_max < 1.0:
            raise ValueError(f"zoom_frac_max must be in [0, 1), got {self.zoom_frac_max}")
        if self.zca_epsilon <= 0.0:
            raise ValueError(f"zca_epsilon must be positive, got {self.zca_epsilon}")


@dataclass(frozen=True)
class AffineParams:
    angle_deg: float
    shift_x_frac: float
    shift_y_frac: float
    zoom_frac: float


@dataclass(frozen=True)
class ZcaTransform:
    """Frozen whitening fit: mean (D,) and symmetric whitening matrix (D, D)."""

    mean: np.ndarray
    whitening_matrix: np.ndarray


def zca_fit(train_images, epsilon: float = 1e-6) -> ZcaTransform:
    """Fit a ZCA whitening transform on a stack of identically-shaped images.

    `train_images` is a sequence of (C, H, W) arrays or one (N, C, H, W)
    stack; at least two images are required.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    stack = np.stack(list(train_images)) if not isinstance(train_images, np.ndarray) \
        else np.asarray(train_images, dtype=np.float64)
    if stack.ndim < 2:
        raise ValueError("expected a stack of images")
    n = stack.shape[0]
    if n < 2:
        raise ValueError(f"ZCA needs at least 2 images, got {n}")
    flat = stack.reshape(n, -1).astype(np.float64)
    mean = flat.mean(axis=0)
    centered = flat - mean
    cov = centered.T @ centered / n

    d = cov.shape[0]
    if d <= JACOBI_MAX_DIM:
        res = tensor.eigh_symmetric(cov)
        vals, vecs = res.eigenvalues, res.eigenvectors
    else:
        vals, vecs = np.linalg.eigh(cov)
    # tiny negative eigenvalues are numerical noise on a PSD matrix
    inv_scale = 1.0 / np.sqrt(np.maximum(vals, 0.0) + epsilon)
    wm = (vecs * inv_scale) @ vecs.T
    wm = (wm + wm.T) / 2.0
    return ZcaTransform(mean=mean, whitening_matrix=wm)


def zca_apply(transform: ZcaTransform, image: np.ndarray) -> np.ndarray:
    """Whiten one image: W (flatten(image) - mean), reshaped back."""
    flat = np.asarray(image, dtype=np.float64).reshape(-1)
    d = transform.mean.shape[0]
    if flat.shape[0] != d:
        raise ShapeError(f"image has {flat.shape[0]} values but ZCA was fit on {d}")
    out = transform.whitening_matrix @ (flat - transform.mean)
    return out.reshape(image.shape)


def _zca_apply_stack(transform: ZcaTransform, images: np.ndarray) -> np.ndarray:
    n = images.shape[0]
    flat = images.reshape(n, -1)
    d = transform.mean.shape[0]
    if flat.shape[1] != d:
        raise ShapeError(f"images have {flat.shape[1]} values but ZCA was fit on {d}")
    out = (flat - transform.mean) @ transform.whitening_matrix.T
    return out.reshape(images.shape)


def sample_affine(cfg: AugmentConfig, rng: np.random.Generator) -> AffineParams:
    """Draw one set of affine parameters; the draw order is fixed."""
    cfg.validate()
    return AffineParams(
        angle_deg=float(rng.uniform(-cfg.rotation_deg_max, cfg.rotation_deg_max)),
        shift_x_frac=float(rng.uniform(-cfg.shift_frac_max, cfg.shift_frac_max)),
        shift_y_frac=float(rng.uniform(-cfg.shift_frac_max, cfg.shift_frac_max)),
        zoom_frac=float(rng.uniform(-cfg.zoom_frac_max, cfg.zoom_frac_max)),
    )


def apply_affine(image: np.ndarray, params: AffineParams) -> np.ndarray:
    """Transform one (C, H, W) image by the module's affine map."""
    if image.ndim != 3 or image.shape[1] < 2 or image.shape[2] < 2:
        raise ShapeError(f"expected (C, H, W) with H, W >= 2, got {image.shape}")
    return _affine_stack(image[None], [params])[0]


def _affine_stack(images: np.ndarray, params_list) -> np.ndarray:
    """Vectorized inverse-mapped affine over a stack of images."""
    n, c, h, w = images.shape
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    d_r = (rows - cr).ravel()
    d_c = (cols - cc).ravel()

    theta = np.array([np.deg2rad(p.angle_deg) for p in params_list])
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    scale = 1.0 / (1.0 + np.array([p.zoom_frac for p in params_list]))
    t_r = np.array([p.shift_y_frac for p in params_list]) * h
    t_c = np.array([p.shift_x_frac for p in params_list]) * w

    # src = R(-theta) (d - t) * scale + center, per sample
    dr = d_r[None, :] - t_r[:, None]
    dc = d_c[None, :] - t_c[:, None]
    src_r = (cos_t[:, None] * dr + sin_t[:, None] * dc) * scale[:, None] + cr
    src_c = (-sin_t[:, None] * dr + cos_t[:, None] * dc) * scale[:, None] + cc

    idx_r = np.clip(np.rint(src_r), 0, h - 1).astype(np.intp)
    idx_c = np.clip(np.rint(src_c), 0, w - 1).astype(np.intp)

    n_idx = np.arange(n)[:, None]
    gathered = images[n_idx, :, idx_r, idx_c]  # (N, H*W, C)
    return np.ascontiguousarray(gathered.transpose(0, 2, 1).reshape(n, c, h, w))


def augment_images(images: np.ndarray, cfg: AugmentConfig,
                   zca: ZcaTransform | None, rng: np.random.Generator) -> np.ndarray:
    """Array fast path used by the training loop: affine first, then ZCA."""
    cfg.validate()
    params = [sample_affine(cfg, rng) for _ in range(images.shape[0])]
    out = _affine_stack(images, params)
    if zca is not None:
        out = _zca_apply_stack(zca, out)
    return out


def augment_batch(batch, cfg: AugmentConfig, zca: ZcaTransform | None,
                  rng: np.random.Generator) -> list[Sample]:
    """Independently transform every sample in a batch; labels pass through."""
    images = np.stack([s.image for s in batch])
    out = augment_images(images, cfg, zca, rng)
    return [Sample(image=img, label=s.label) for img, s in zip(out, batch)]
