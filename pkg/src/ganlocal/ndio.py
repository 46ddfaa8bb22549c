"""Dense array containers, array-file I/O, channel standardization and
bilinear membership resampling.

The on-disk format is the plain binary array format (magic ``\\x93NUMPY``,
version 1.0, little-endian float payload) so activations and styles exported
from external generator runs drop straight into the pipeline. Archives are
zip files of such entries.
"""

from __future__ import annotations

import ast
import io
import struct
import zipfile
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadArchive,
    MalformedHeader,
    ShapeMismatch,
    UnsupportedDtype,
    UnsupportedLayout,
)

_MAGIC = b"\x93NUMPY"
_HEADER_ALIGN = 64
# Zip entries carry a fixed timestamp so two saves of the same data are
# byte-identical.
_EPOCH = (1980, 1, 1, 0, 0, 0)

_DESCR_TO_DTYPE = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}

DEAD_CHANNEL_STD = 1e-8


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a)
    if out is a:
        out = a.view()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ActivationTensor:
    """Captured hidden-layer activations, shape (n, c, h, w), float32.

    ``standardized`` marks tensors whose channels have zero mean and unit
    variance over (n, h, w); ``dead_channels`` lists channels that were
    constant and have been zeroed instead of divided by ~0.
    """

    data: np.ndarray
    layer_id: int
    standardized: bool = False
    dead_channels: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.data.ndim != 4:
            raise ShapeMismatch(f"activations must be 4-d, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("activations contain NaN/Inf")
        object.__setattr__(self, "data", _freeze(self.data.astype(np.float32, copy=False)))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class MembershipTensor:
    """Per-position cluster memberships, shape (n, k, h, w).

    Values lie in [0, 1] and sum to 1 over the cluster axis at every spatial
    position. Hard tensors are one-hot.
    """

    data: np.ndarray
    hard: bool = False

    def __post_init__(self) -> None:
        if self.data.ndim != 4:
            raise ShapeMismatch(f"memberships must be 4-d, got {self.data.shape}")
        d = self.data.astype(np.float32, copy=False)
        if d.min(initial=0.0) < -1e-6 or d.max(initial=0.0) > 1.0 + 1e-6:
            raise ValueError("membership values must lie in [0, 1]")
        sums = d.sum(axis=1, dtype=np.float64)
        if np.abs(sums - 1.0).max() > 1e-5:
            raise ValueError("memberships must sum to 1 at every position")
        if self.hard and not np.isin(d, (0.0, 1.0)).all():
            raise ValueError("hard memberships must be one-hot")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def k(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]


def read_array_file(data: bytes) -> np.ndarray:
    """Parse one binary array file into a float32 ndarray (rank <= 4).

    64-bit float payloads are narrowed to 32-bit. Raises ``MalformedHeader``
    for a bad magic/version/dict, ``UnsupportedLayout`` for column-major or
    rank > 4 data, ``UnsupportedDtype`` for anything but little-endian floats.
    """
    if len(data) < 10 or data[:6] != _MAGIC:
        raise MalformedHeader("missing array-file magic")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise MalformedHeader(f"unsupported format version {major}.{minor}")
    (hlen,) = struct.unpack("<H", data[8:10])
    header_end = 10 + hlen
    if len(data) < header_end:
        raise MalformedHeader("truncated header")
    try:
        header = ast.literal_eval(data[10:header_end].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise MalformedHeader(f"unparseable header dict: {exc}") from exc
    if not isinstance(header, dict) or not {"descr", "fortran_order", "shape"} <= set(header):
        raise MalformedHeader("header dict missing required keys")
    if header["fortran_order"]:
        raise UnsupportedLayout("column-major (fortran_order) files are not supported")
    descr = header["descr"]
    if descr not in _DESCR_TO_DTYPE:
        raise UnsupportedDtype(f"element type {descr!r} not supported")
    shape = tuple(header["shape"])
    if not all(isinstance(s, int) and s >= 0 for s in shape):
        raise MalformedHeader(f"bad shape {shape!r}")
    if len(shape) > 4:
        raise UnsupportedLayout(f"rank {len(shape)} > 4 not supported")
    dtype = _DESCR_TO_DTYPE[descr]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = data[header_end:]
    if len(payload) < count * dtype.itemsize:
        raise MalformedHeader("payload shorter than declared shape")
    arr = np.frombuffer(payload, dtype=dtype, count=count).reshape(shape)
    return arr.astype(np.float32) if dtype.itemsize == 8 else arr.copy()


def write_array_file(a: np.ndarray) -> bytes:
    """Serialize an array to the canonical version-1.0 byte layout.

    Reading bytes produced here and writing them again is a byte-identity,
    and the output matches what standard exporters emit for the same array.
    """
    a = np.ascontiguousarray(a)
    if a.dtype == np.float64:
        descr = "<f8"
    else:
        a = a.astype(np.float32, copy=False)
        descr = "<f4"
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {a.shape!r}, }}"
    hbytes = header.encode("latin1")
    pad = _HEADER_ALIGN - ((len(_MAGIC) + 4 + len(hbytes) + 1) % _HEADER_ALIGN)
    pad %= _HEADER_ALIGN
    hbytes += b" " * pad + b"\n"
    return _MAGIC + bytes((1, 0)) + struct.pack("<H", len(hbytes)) + hbytes + a.tobytes()


def read_archive(data: bytes) -> dict[str, np.ndarray]:
    """Read a zip archive of array files, keyed by entry name sans extension."""
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
        names = zf.namelist()
    except (zipfile.BadZipFile, OSError) as exc:
        raise BadArchive(str(exc)) from exc
    out: dict[str, np.ndarray] = {}
    for name in names:
        try:
            raw = zf.read(name)
        except (zipfile.BadZipFile, OSError) as exc:
            raise BadArchive(f"entry {name!r}: {exc}") from exc
        key = name.rsplit(".", 1)[0] if "." in name.rsplit("/", 1)[-1] else name
        out[key] = read_array_file(raw)
    return out


def write_archive(arrays: dict[str, np.ndarray], compress: bool = False) -> bytes:
    """Write arrays to an uncompressed (or deflate) zip of array files."""
    buf = io.BytesIO()
    method = zipfile.ZIP_DEFLATED if compress else zipfile.ZIP_STORED
    with zipfile.ZipFile(buf, "w", method) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.compress_type = method
            zf.writestr(info, write_array_file(arrays[name]))
    return buf.getvalue()


def standardize(a: ActivationTensor) -> ActivationTensor:
    """Give every channel zero mean and unit variance over (n, h, w).

    Population variance is used. Channels with std below ``DEAD_CHANNEL_STD``
    are zeroed and recorded in ``dead_channels``. Idempotent.
    """
    if a.data.size == 0:
        raise ValueError("cannot standardize an empty tensor")
    x = a.data.astype(np.float64)
    mean = x.mean(axis=(0, 2, 3), keepdims=True)
    std = x.std(axis=(0, 2, 3), keepdims=True)
    dead = std[0, :, 0, 0] < DEAD_CHANNEL_STD
    safe = np.where(dead[None, :, None, None], 1.0, std)
    out = (x - mean) / safe
    if dead.any():
        out[:, dead] = 0.0
    return ActivationTensor(
        data=out.astype(np.float32),
        layer_id=a.layer_id,
        standardized=True,
        dead_channels=tuple(int(i) for i in np.flatnonzero(dead)),
    )


def channel_moments(a: ActivationTensor) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std over (n, h, w), as float64."""
    x = a.data.astype(np.float64)
    return x.mean(axis=(0, 2, 3)), x.std(axis=(0, 2, 3))


def standardize_with(a: ActivationTensor, mean: np.ndarray, std: np.ndarray) -> ActivationTensor:
    """Standardize using externally supplied channel moments.

    Used to map fresh captures into the normalized space of a previously
    clustered batch.
    """
    c = a.data.shape[1]
    if mean.shape != (c,) or std.shape != (c,):
        raise ShapeMismatch(f"moments must have shape ({c},)")
    dead = std < DEAD_CHANNEL_STD
    safe = np.where(dead, 1.0, std)
    out = (a.data.astype(np.float64) - mean[None, :, None, None]) / safe[None, :, None, None]
    if dead.any():
        out[:, dead] = 0.0
    return ActivationTensor(
        data=out.astype(np.float32),
        layer_id=a.layer_id,
        standardized=True,
        dead_channels=tuple(int(i) for i in np.flatnonzero(dead)),
    )


def _bilinear_coords(size_in: int, size_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source indices and fractional weights, half-pixel-centre convention."""
    src = (np.arange(size_out, dtype=np.float64) + 0.5) * (size_in / size_out) - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    lo0 = np.clip(lo, 0, size_in - 1)
    lo1 = np.clip(lo + 1, 0, size_in - 1)
    return lo0, lo1, frac


def bilinear_resize(x: np.ndarray, h2: int, w2: int) -> np.ndarray:
    """Bilinearly resample the trailing two axes to (h2, w2).

    Half-pixel-centre sampling with edge clamping; weights at each output
    pixel sum to 1, so fields that sum to a constant across leading axes
    keep doing so.
    """
    if h2 < 1 or w2 < 1:
        raise ValueError("output size must be at least 1x1")
    h, w = x.shape[-2], x.shape[-1]
    y0, y1, fy = _bilinear_coords(h, h2)
    x0, x1, fx = _bilinear_coords(w, w2)
    xd = x.astype(np.float64)
    top = xd[..., y0, :] * (1.0 - fy)[..., :, None] + xd[..., y1, :] * fy[..., :, None]
    out = top[..., :, x0] * (1.0 - fx) + top[..., :, x1] * fx
    return out.astype(x.dtype if x.dtype == np.float64 else np.float32)


def resample_membership(u: MembershipTensor, h2: int, w2: int) -> MembershipTensor:
    """Bilinearly resample cluster maps to (h2, w2); output is soft."""
    resized = bilinear_resize(u.data, h2, w2)
    # Bilinear weights sum to 1 but rounding can leave values a hair outside
    # [0, 1]; clip before revalidating the partition of unity.
    return MembershipTensor(data=np.clip(resized, 0.0, 1.0), hard=False)


def one_hot_membership(labels: np.ndarray, k: int) -> MembershipTensor:
    """Hard membership tensor from integer labels of shape (n, h, w)."""
    eye = np.arange(k, dtype=labels.dtype)
    data = (labels[:, None, :, :] == eye[None, :, None, None]).astype(np.float32)
    return MembershipTensor(data=data, hard=True)
