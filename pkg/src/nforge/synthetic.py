"""Synthetic handwritten-style numeral corpus.

Real scanned-numeral corpora are not always redistributable, so this
module renders a stand-in: digit glyphs from the fonts bundled with
matplotlib (DejaVu, Computer Modern, STIX families) drawn at 4x
resolution, randomly rotated, sheared, scaled, shifted and
thickness-jittered, blurred, downsampled to 32x32 grayscale, and
finished with pixel noise.  Ink is dark on a light background, matching
scanned paper, so the standard inversion preprocessing applies
unchanged.

Pillow and matplotlib are imported lazily; they are needed only when the
corpus is generated, never by the training stack itself.

Run ``python -m nforge.synthetic --out corpus/ --count 3000`` to write
the corpus as an IDX pair.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .dataio import Dataset, write_idx

CANVAS = 128  # render resolution before downsampling

_FONT_FILES = (
    "DejaVuSans.ttf", "DejaVuSans-Bold.ttf", "DejaVuSans-Oblique.ttf",
    "DejaVuSans-BoldOblique.ttf", "DejaVuSerif.ttf", "DejaVuSerif-Bold.ttf",
    "DejaVuSerif-Italic.ttf", "DejaVuSansMono.ttf", "DejaVuSansMono-Bold.ttf",
    "cmr10.ttf", "cmb10.ttf", "cmss10.ttf", "cmtt10.ttf",
    "STIXGeneral.ttf", "STIXGeneralBol.ttf", "STIXGeneralItalic.ttf",
)


def _require_pil():
    try:
        from PIL import Image, ImageDraw, ImageFilter, ImageFont
    except ImportError as exc:
        raise ImportError("synthetic corpus generation needs Pillow "
                          "(pip install nforge[synth])") from exc
    return Image, ImageDraw, ImageFilter, ImageFont


def _font_paths() -> list[str]:
    import matplotlib
    font_dir = Path(matplotlib.get_data_path()) / "fonts" / "ttf"
    paths = [str(font_dir / name) for name in _FONT_FILES
             if (font_dir / name).exists()]
    if not paths:
        raise RuntimeError(f"no usable fonts found under {font_dir}")
    return paths


def render_digit(digit: int, rng: np.random.Generator, size: int = 32,
                 fonts: list[str] | None = None) -> np.ndarray:
    """One distorted glyph image, float64 (size, size), ink dark on light."""
    Image, ImageDraw, ImageFilter, ImageFont = _require_pil()
    fonts = fonts or _font_paths()

    font_path = fonts[rng.integers(len(fonts))]
    font = ImageFont.truetype(font_path, int(rng.integers(72, 105)))
    canvas = Image.new("L", (CANVAS, CANVAS), 255)
    draw = ImageDraw.Draw(canvas)
    text = str(digit)
    left, top, right, bottom = draw.textbbox((0, 0), text, font=font)
    pos = ((CANVAS - (right - left)) / 2 - left + rng.uniform(-9, 9),
           (CANVAS - (bottom - top)) / 2 - top + rng.uniform(-9, 9))
    draw.text(pos, text, font=font, fill=0)

    # stroke-weight jitter: min filter thickens dark ink, max filter thins it
    roll = rng.random()
    if roll < 0.25:
        canvas = canvas.filter(ImageFilter.MinFilter(3))
    elif roll < 0.40:
        canvas = canvas.filter(ImageFilter.MaxFilter(3))

    theta = np.deg2rad(rng.uniform(-14.0, 14.0))
    shear = rng.uniform(-0.18, 0.18)
    scale = rng.uniform(0.80, 1.12)
    c = CANVAS / 2
    # PIL wants the output->input map: rotate/shear/scale about the center
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    m00 = (cos_t + shear * sin_t) / scale
    m01 = (sin_t + shear * cos_t) / scale
    m10 = -sin_t / scale
    m11 = cos_t / scale
    coeffs = (m00, m01, c - m00 * c - m01 * c,
              m10, m11, c - m10 * c - m11 * c)
    canvas = canvas.transform((CANVAS, CANVAS), Image.AFFINE, coeffs,
                              resample=Image.BILINEAR, fillcolor=255)
    blur = rng.uniform(0.0, 1.1)
    if blur > 0.2:
        canvas = canvas.filter(ImageFilter.GaussianBlur(blur))
    small = canvas.resize((size, size), Image.LANCZOS)

    img = np.asarray(small, dtype=np.float64) / 255.0
    img = 1.0 - (1.0 - img) * rng.uniform(0.80, 1.0)  # ink darkness jitter
    img += rng.normal(0.0, rng.uniform(0.02, 0.06), size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_corpus(count: int = 3000, seed: int = 7, size: int = 32,
                    class_count: int = 10) -> Dataset:
    """A balanced corpus of `count` labelled glyph images (unsplit)."""
    fonts = _font_paths()
    images = np.empty((count, 1, size, size))
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        digit = i % class_count
        rng = np.random.default_rng([seed, i])
        images[i, 0] = render_digit(digit, rng, size=size, fonts=fonts)
        labels[i] = digit
    return Dataset(images, labels, class_count=class_count)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="generate a synthetic numeral corpus as an IDX pair")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--count", type=int, default=3000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--size", type=int, default=32)
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_corpus(count=args.count, seed=args.seed, size=args.size)
    write_idx(ds, out / "images-idx", out / "labels-idx")
    print(f"wrote {len(ds)} images to {out}/images-idx, {out}/labels-idx")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
