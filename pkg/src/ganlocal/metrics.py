"""Perceptual color distance maps, ROI locality metrics, and the Fréchet
distance between Gaussian feature statistics.

Edit quality is judged two ways: locality (squared CIELAB error split into
in-region and out-of-region per-pixel means) and distribution distance
(Fréchet distance between Gaussians fitted to image features; the feature
extractor is pluggable and defaults to 8x8 average-pooled pixels).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ShapeMismatch, TooFewSamples, UnknownPart
from .ndio import MembershipTensor, bilinear_resize
from .semantics import SemanticCatalog, catalog_units, resolve_part

# sRGB -> XYZ (D65, 2-degree observer); the white point is the matrix's row
# sums so that pure white lands exactly on L*=100, a*=b*=0.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE = _SRGB_TO_XYZ.sum(axis=1)
_LAB_DELTA = 6.0 / 29.0


@dataclass(frozen=True, eq=False)
class LocalityReport:
    """Mean per-pixel squared CIELAB distance inside and outside the ROI.

    A side whose region is empty is reported as None, not zero.
    """

    in_mse: float | None
    out_mse: float | None
    roi_fraction: float

    def to_dict(self) -> dict:
        return {
            "in_mse": self.in_mse,
            "out_mse": self.out_mse,
            "roi_fraction": self.roi_fraction,
        }


@dataclass(frozen=True, eq=False)
class GaussianStats:
    """Sample mean and covariance of a set of feature vectors."""

    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        if self.cov.shape != (self.mu.shape[0], self.mu.shape[0]):
            raise DimensionMismatch("covariance shape does not match mean")
        if np.abs(self.cov - self.cov.T).max(initial=0.0) > 1e-6:
            raise ValueError("covariance must be symmetric")


def srgb_to_lab(image: np.ndarray) -> np.ndarray:
    """Convert a 3xHxW sRGB image in [0,1] to CIELAB (same layout).

    Standard decoding: piecewise gamma with exponent 2.4, D65 XYZ, cube-root
    lightness function with the linear toe.
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatch(f"expected 3xHxW image, got {image.shape}")
    v = np.asarray(image, dtype=np.float64)
    if v.min() < -1e-9 or v.max() > 1.0 + 1e-9:
        raise ValueError("sRGB values must lie in [0, 1]")
    lin = np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)
    xyz = np.einsum("ij,jhw->ihw", _SRGB_TO_XYZ, lin)
    t = xyz / _WHITE[:, None, None]
    f = np.where(t > _LAB_DELTA**3, np.cbrt(t), t / (3 * _LAB_DELTA**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[0] = 116.0 * f[1] - 16.0
    lab[1] = 500.0 * (f[0] - f[1])
    lab[2] = 200.0 * (f[1] - f[2])
    return lab


def diff_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel squared CIELAB distance between two sRGB images."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    d = srgb_to_lab(a) - srgb_to_lab(b)
    return (d**2).sum(axis=0)


def roi_mask(
    u: MembershipTensor,
    units: list[tuple[str, tuple[int, ...]]],
    unit_index: int,
    out_h: int,
    out_w: int,
    sample: int = 0,
) -> np.ndarray:
    """Boolean HxW mask where the chosen unit's summed soft membership is the
    argmax across all units (ties to the earlier unit in the list)."""
    resized = bilinear_resize(u.data[sample : sample + 1].astype(np.float64), out_h, out_w)[0]
    scores = np.stack([resized[list(ids)].sum(axis=0) for _, ids in units])
    return scores.argmax(axis=0) == unit_index


def roi_mask_for_part(
    u: MembershipTensor,
    catalog: SemanticCatalog,
    part_ref: str,
    out_h: int,
    out_w: int,
    sample: int = 0,
) -> np.ndarray:
    """ROI for a catalog part; competing units are the catalog's parts plus
    each unassigned cluster on its own."""
    part_id, _ = resolve_part(catalog, part_ref)
    units = catalog_units(catalog)
    for idx, (uid, _) in enumerate(units):
        if uid == part_id:
            return roi_mask(u, units, idx, out_h, out_w, sample)
    raise UnknownPart(f"part {part_ref!r} not among catalog units")


def locality(target: np.ndarray, edited: np.ndarray, mask: np.ndarray) -> LocalityReport:
    """Split the squared CIELAB error into per-pixel means in and out of ROI."""
    if target.shape != edited.shape:
        raise ShapeMismatch(f"image shapes differ: {target.shape} vs {edited.shape}")
    if mask.shape != target.shape[1:]:
        raise ShapeMismatch(f"mask {mask.shape} does not match image {target.shape[1:]}")
    d = diff_map(target, edited)
    mask = mask.astype(bool)
    n_in = int(mask.sum())
    n_out = mask.size - n_in
    return LocalityReport(
        in_mse=float(d[mask].mean()) if n_in else None,
        out_mse=float(d[~mask].mean()) if n_out else None,
        roi_fraction=n_in / mask.size,
    )


def pooled_features(images: np.ndarray, grid: int = 8) -> np.ndarray:
    """Default feature extractor: per-image grid x grid average pooling."""
    n, c, h, w = images.shape
    if h % grid or w % grid:
        raise ShapeMismatch(f"image size {h}x{w} not divisible by grid {grid}")
    pooled = images.reshape(n, c, grid, h // grid, grid, w // grid).mean(axis=(3, 5))
    return pooled.reshape(n, c * grid * grid).astype(np.float64)


def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Sample mean and (n-1)-denominator covariance, symmetrized."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise TooFewSamples("need at least 2 feature vectors")
    mu = f.mean(axis=0)
    centered = f - mu
    cov = centered.T @ centered / (f.shape[0] - 1)
    return GaussianStats(mu=mu, cov=(cov + cov.T) / 2.0)


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; negative eigenvalues clamp to zero."""
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(s1: GaussianStats, s2: GaussianStats) -> float:
    """Fréchet distance between two Gaussians.

    ||mu1-mu2||^2 + tr(c1 + c2 - 2*sqrt(sqrt(c1) c2 sqrt(c1))), with matrix
    square roots via symmetric eigendecomposition.
    """
    if s1.mu.shape != s2.mu.shape:
        raise DimensionMismatch(
            f"feature dimensions differ: {s1.mu.shape[0]} vs {s2.mu.shape[0]}"
        )
    r1 = _psd_sqrt(s1.cov)
    cross = _psd_sqrt(r1 @ s2.cov @ r1)
    val = float(
        np.sum((s1.mu - s2.mu) ** 2)
        + np.trace(s1.cov)
        + np.trace(s2.cov)
        - 2.0 * np.trace(cross)
    )
    return max(val, 0.0)


def save_diff_png(diff: np.ndarray, path: str | Path) -> None:
    """Write a max-normalized grayscale heatmap plus a sidecar JSON holding
    the max value so absolute scales stay recoverable."""
    from PIL import Image

    peak = float(diff.max())
    scaled = np.zeros_like(diff) if peak == 0.0 else diff / peak
    img = Image.fromarray((np.clip(scaled, 0.0, 1.0) * 255).astype(np.uint8), mode="L")
    path = Path(path)
    img.save(path)
    path.with_suffix(".json").write_text(json.dumps({"max_squared_distance": peak}) + "\n")


def save_image_png(image: np.ndarray, path: str | Path) -> None:
    """Write a 3xHxW [0,1] image as PNG."""
    from PIL import Image

    arr = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)
