"""Raster container, native on-disk format, normalization, and PNG export.

Native format: a small self-describing text header followed by the planar
pixel payload in little-endian band-major order. Example header::

    raster v1
    bands 4
    height 256
    width 256
    dtype u16
    bit_depth 11
    band_names nir,r,g,b
    end

`band_names` is optional. Supported payload dtypes: u16 (digital numbers),
f32, f64. Loading promotes u16 to float32 so the rest of the toolkit only
ever sees float data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAGIC_LINE = "raster v1"

_DTYPES = {
    "u16": np.dtype("<u2"),
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
}


@dataclass
class RasterImage:
    """(bands, height, width) float array plus radiometric metadata."""

    data: np.ndarray
    bit_depth: int = 11
    band_names: tuple = ()

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"RasterImage: data must be (bands, H, W), got shape {self.data.shape}")
        if self.bit_depth < 1 or self.bit_depth > 16:
            raise ValueError(f"RasterImage: bit_depth must be in [1, 16], got {self.bit_depth}")
        if self.band_names and len(self.band_names) != self.data.shape[0]:
            raise ValueError(
                f"RasterImage: {len(self.band_names)} band names for {self.data.shape[0]} bands"
            )
        self.band_names = tuple(self.band_names)

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def with_data(self, data):
        """Same metadata, new pixels."""
        return RasterImage(data, bit_depth=self.bit_depth, band_names=self.band_names)


@dataclass(frozen=True)
class NormalizationParams:
    """Affine map between digital numbers [0, scale] and unit range [-1, 1]."""

    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"NormalizationParams: scale must be positive, got {self.scale}")

    @classmethod
    def from_bit_depth(cls, bit_depth):
        return cls(scale=float(2 ** bit_depth - 1))

    def forward(self, x):
        return 2.0 * x / self.scale - 1.0

    def inverse(self, y):
        return (y + 1.0) * self.scale / 2.0


def normalize_to_unit(img, params=None):
    """Map digital numbers to [-1, 1]; params default to the image bit depth."""
    if params is None:
        params = NormalizationParams.from_bit_depth(img.bit_depth)
    out = params.forward(img.data.astype(np.float32, copy=False)).astype(np.float32)
    return img.with_data(out)


def denormalize_from_unit(img, params=None):
    """Inverse of normalize_to_unit, back to the [0, scale] range."""
    if params is None:
        params = NormalizationParams.from_bit_depth(img.bit_depth)
    out = params.inverse(img.data.astype(np.float64, copy=False))
    return img.with_data(out.astype(np.float32))


def save_raster(img, path, dtype="f32"):
    """Write the native format. u16 saves round half to even after clipping."""
    if dtype not in _DTYPES:
        raise ValueError(f"save_raster: unsupported dtype {dtype!r}, pick one of {sorted(_DTYPES)}")
    data = np.ascontiguousarray(img.data)
    if dtype == "u16":
        limit = float(2 ** img.bit_depth - 1)
        data = np.clip(np.rint(data), 0.0, limit)
    payload = data.astype(_DTYPES[dtype]).tobytes()
    lines = [
        MAGIC_LINE,
        f"bands {img.bands}",
        f"height {img.height}",
        f"width {img.width}",
        f"dtype {dtype}",
        f"bit_depth {img.bit_depth}",
    ]
    if img.band_names:
        lines.append("band_names " + ",".join(img.band_names))
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_raster(path):
    """Read the native format; u16 payloads are promoted to float32."""
    with open(path, "rb") as f:
        blob = f.read()
    cut = blob.find(b"\nend\n")
    if not blob.startswith(MAGIC_LINE.encode("ascii") + b"\n") or cut < 0:
        raise ValueError(f"load_raster: {path} is not a 'raster v1' file")
    header = blob[: cut + 5].decode("ascii")
    payload = blob[cut + 5:]
    fields = {}
    for line in header.splitlines()[1:-1]:
        key, _, value = line.partition(" ")
        fields[key] = value
    for required in ("bands", "height", "width", "dtype", "bit_depth"):
        if required not in fields:
            raise ValueError(f"load_raster: {path} header is missing '{required}'")
    if fields["dtype"] not in _DTYPES:
        raise ValueError(f"load_raster: unsupported dtype {fields['dtype']!r} in {path}")
    bands, height, width = int(fields["bands"]), int(fields["height"]), int(fields["width"])
    dt = _DTYPES[fields["dtype"]]
    expected = bands * height * width * dt.itemsize
    if len(payload) != expected:
        raise ValueError(
            f"load_raster: {path} payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype=dt).reshape(bands, height, width)
    if fields["dtype"] == "u16":
        data = data.astype(np.float32)
    else:
        data = data.copy()
    names = tuple(fields["band_names"].split(",")) if "band_names" in fields else ()
    return RasterImage(data, bit_depth=int(fields["bit_depth"]), band_names=names)


def crop_patches(img, patch, stride=None):
    """Regular-grid crops of size patch x patch; partial edge windows are dropped.

    :returns: list of (row, col, RasterImage) with the top-left pixel of each crop.
    """
    if stride is None:
        stride = patch
    if patch < 1 or stride < 1:
        raise ValueError(f"crop_patches: patch and stride must be >= 1, got {patch}, {stride}")
    if patch > img.height or patch > img.width:
        raise ValueError(
            f"crop_patches: patch {patch} exceeds image size {img.height}x{img.width}"
        )
    out = []
    for row in range(0, img.height - patch + 1, stride):
        for col in range(0, img.width - patch + 1, stride):
            crop = img.data[:, row:row + patch, col:col + patch].copy()
            out.append((row, col, img.with_data(crop)))
    return out


def export_png8(img, band_selection, path, stretch="linear"):
    """Render selected bands to an 8-bit PNG.

    :param band_selection: 1 index (grayscale) or 3 indices (RGB order).
    :param stretch: "linear" maps [-1, 1] to [0, 255]; "percentile" maps the
        per-band 2..98 percentile range instead.
    """
    from PIL import Image

    sel = list(band_selection)
    if len(sel) not in (1, 3):
        raise ValueError(f"export_png8: band_selection must have 1 or 3 entries, got {len(sel)}")
    for b in sel:
        if not 0 <= b < img.bands:
            raise ValueError(f"export_png8: band index {b} out of range [0, {img.bands})")
    if stretch not in ("linear", "percentile"):
        raise ValueError(f"export_png8: unknown stretch {stretch!r}")

    channels = []
    for b in sel:
        band = img.data[b].astype(np.float64)
        if stretch == "linear":
            lo, hi = -1.0, 1.0
        else:
            lo, hi = np.percentile(band, 2.0), np.percentile(band, 98.0)
            if hi - lo < 1e-12:
                hi = lo + 1.0
        scaled = (band - lo) / (hi - lo) * 255.0
        channels.append(np.clip(np.rint(scaled), 0, 255).astype(np.uint8))

    if len(channels) == 1:
        Image.fromarray(channels[0], mode="L").save(path)
    else:
        Image.fromarray(np.stack(channels, axis=-1), mode="RGB").save(path)
