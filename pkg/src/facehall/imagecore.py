"""Image and dictionary containers, file I/O, and vectorization.

All raster data is float64 on the 8-bit intensity scale [0, 255] and uses a
single fixed scan order everywhere: row-major within a channel, channels never
interleaved.  Face dictionaries stack vectorized images as columns; the
low-resolution matrix of a :class:`DictionaryPair` is always derived from the
high-resolution one with the stored degradation settings, so the pair stays
internally consistent by construction.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "Image",
    "Psf",
    "DegradationParams",
    "DictionaryPair",
    "vectorize",
    "devectorize",
    "to_grayscale",
    "bicubic_upscale",
    "image_io",
    "read_manifest",
    "build_dictionary",
    "dictionary_io",
    "validate_pair",
]

_MAX_DIM = 65535

_FHD_MAGIC = b"FHD1"


class FormatError(ValueError):
    """Raised for malformed or unsupported files."""


@dataclass(frozen=True)
class Image:
    """A single- or 3-channel intensity grid.

    ``data`` has shape (h, w) or (h, w, 3), dtype float64, and must be finite.
    Values nominally live in [0, 255]; intermediate processing may step
    outside, clamping happens only when saving to disk.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ValueError(f"image must be (h, w) or (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        if arr.shape[0] > _MAX_DIM or arr.shape[1] > _MAX_DIM:
            raise FormatError("image dimensions overflow supported range")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite")
        object.__setattr__(self, "data", np.ascontiguousarray(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    @property
    def dims(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class Psf:
    """A small blur kernel with an explicit anchor (the kernel origin).

    The kernel must sum to 1 within 1e-12.  The default anchor for a k_h x k_w
    kernel is (floor((k_h-1)/2), floor((k_w-1)/2)); for even sizes this is the
    upper-left of the two central candidates and is applied identically to
    dictionary building and test degradation, keeping the model
    self-consistent.
    """

    kernel: np.ndarray
    anchor: tuple[int, int] | None = None

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] < 1 or k.shape[1] < 1:
            raise ValueError("psf kernel must be a 2-D grid")
        if not np.all(np.isfinite(k)):
            raise ValueError("psf kernel must be finite")
        if abs(float(k.sum()) - 1.0) > 1e-12:
            raise ValueError("psf kernel must sum to 1 within 1e-12")
        anchor = self.anchor
        if anchor is None:
            anchor = ((k.shape[0] - 1) // 2, (k.shape[1] - 1) // 2)
        ar, ac = int(anchor[0]), int(anchor[1])
        if not (0 <= ar < k.shape[0] and 0 <= ac < k.shape[1]):
            raise ValueError("psf anchor must lie inside the kernel")
        object.__setattr__(self, "kernel", np.ascontiguousarray(k))
        object.__setattr__(self, "anchor", (ar, ac))

    @property
    def shape(self) -> tuple[int, int]:
        return self.kernel.shape

    @classmethod
    def delta(cls) -> "Psf":
        return cls(np.ones((1, 1)))

    @classmethod
    def average(cls, size: int) -> "Psf":
        if size < 1:
            raise ValueError("average kernel size must be >= 1")
        return cls(np.full((size, size), 1.0 / (size * size)))

    @classmethod
    def gaussian(cls, size: int, sigma: float) -> "Psf":
        if size < 1:
            raise ValueError("gaussian kernel size must be >= 1")
        if sigma <= 0:
            raise ValueError("gaussian sigma must be positive")
        c = (size - 1) / 2.0
        r = np.arange(size) - c
        g = np.exp(-(r**2) / (2.0 * sigma**2))
        k = np.outer(g, g)
        return cls(k / k.sum())


@dataclass(frozen=True)
class DegradationParams:
    """Blur kernel, integer scaling factor, and noise level of the forward model."""

    psf: Psf
    d: int
    noise_sigma: float = 0.0

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError("scaling factor d must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))


@dataclass(frozen=True)
class DictionaryPair:
    """Column-stacked HR/LR face matrices with per-column subject labels.

    ``d_h`` is m_h x n, ``d_l`` is m_l x n with m_h = m_l * d**2.  Every
    column of ``d_l`` equals the noise-free degradation of the matching
    ``d_h`` column under ``degradation``.  Labels are non-negative integers
    and must be grouped contiguously by subject.
    """

    d_h: np.ndarray
    d_l: np.ndarray
    labels: np.ndarray
    hr_dims: tuple[int, int]
    lr_dims: tuple[int, int]
    degradation: DegradationParams

    def __post_init__(self):
        d_h = np.ascontiguousarray(np.asarray(self.d_h, dtype=np.float64))
        d_l = np.ascontiguousarray(np.asarray(self.d_l, dtype=np.float64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        hr_dims = (int(self.hr_dims[0]), int(self.hr_dims[1]))
        lr_dims = (int(self.lr_dims[0]), int(self.lr_dims[1]))
        if d_h.ndim != 2 or d_l.ndim != 2:
            raise ValueError("dictionary matrices must be 2-D")
        m_h, n = d_h.shape
        m_l, n_l = d_l.shape
        d = self.degradation.d
        if n != n_l or labels.shape != (n,):
            raise ValueError("column/label counts disagree")
        if n < 1:
            raise ValueError("dictionary must contain at least one column")
        if m_h != hr_dims[0] * hr_dims[1] or m_l != lr_dims[0] * lr_dims[1]:
            raise ValueError("matrix rows do not match stated dimensions")
        if m_h != m_l * d * d:
            raise ValueError("hr/lr sizes inconsistent with scaling factor")
        if hr_dims[0] != lr_dims[0] * d or hr_dims[1] != lr_dims[1] * d:
            raise ValueError("hr dims must be lr dims scaled by d")
        if np.any(labels < 0):
            raise ValueError("labels must be non-negative integers")
        # each subject id must occupy one contiguous run of columns
        change = np.flatnonzero(np.diff(labels) != 0)
        seen = labels[np.concatenate(([0], change + 1))]
        if len(set(seen.tolist())) != len(seen):
            raise ValueError("labels must be grouped contiguously by subject")
        object.__setattr__(self, "d_h", d_h)
        object.__setattr__(self, "d_l", d_l)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "hr_dims", hr_dims)
        object.__setattr__(self, "lr_dims", lr_dims)

    @property
    def n(self) -> int:
        return self.d_h.shape[1]

    @property
    def subjects(self) -> np.ndarray:
        return np.unique(self.labels)


def vectorize(image: Image) -> np.ndarray:
    """Flatten an image row-major.

    Single-channel images give a vector of length h*w; 3-channel images give
    an (h*w, 3) array whose columns are the per-channel vectors.  Channels are
    never interleaved.
    """
    if image.channels == 1:
        return image.data.reshape(-1).copy()
    return image.data.reshape(-1, image.channels).copy()


def devectorize(vec: np.ndarray, dims: tuple[int, ...]) -> Image:
    """Inverse of :func:`vectorize` for the given (h, w) or (h, w, c) dims."""
    vec = np.asarray(vec, dtype=np.float64)
    expected = int(np.prod(dims))
    if vec.size != expected:
        raise ValueError(f"vector length {vec.size} does not match dims {dims}")
    return Image(vec.reshape(dims))


def to_grayscale(image: Image) -> Image:
    """Channel mean; identity for single-channel images."""
    if image.channels == 1:
        return image
    return Image(image.data.mean(axis=2))


def _cubic_weight(t: np.ndarray) -> np.ndarray:
    # Keys cubic-convolution kernel, a = -0.5
    a = -0.5
    t = np.abs(t)
    w = np.where(
        t <= 1.0,
        (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0,
        np.where(t < 2.0, a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a, 0.0),
    )
    return w


def _cubic_matrix(n_out: int, n_in: int, d: int) -> np.ndarray:
    # Output sample r interpolates input coordinate r/d; phase 0 aligns with
    # the keep-every-d-th decimation grid, so upscale-then-decimate is exact.
    pos = np.arange(n_out) / d
    base = np.floor(pos).astype(int)
    frac = pos - base
    w = np.zeros((n_out, n_in))
    for off in (-1, 0, 1, 2):
        idx = np.clip(base + off, 0, n_in - 1)
        np.add.at(w, (np.arange(n_out), idx), _cubic_weight(frac - off))
    return w


def bicubic_upscale(image: Image, d: int) -> Image:
    """Separable Keys bicubic upscaling by an integer factor with edge replication."""
    if d < 1:
        raise ValueError("upscale factor must be >= 1")
    if d == 1:
        return image
    h, w = image.dims
    wr = _cubic_matrix(h * d, h, d)
    wc = _cubic_matrix(w * d, w, d)
    if image.channels == 1:
        return Image(wr @ image.data @ wc.T)
    out = np.stack([wr @ image.data[:, :, c] @ wc.T for c in range(image.channels)], axis=2)
    return Image(out)


# ---------------------------------------------------------------------------
# Raster file I/O (PGM / PPM / PNG)
# ---------------------------------------------------------------------------


def _parse_netpbm(blob: bytes) -> Image:
    magic = blob[:2]
    channels = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated netpbm header")
        try:
            fields.append(int(blob[start:pos]))
        except ValueError as exc:
            raise FormatError("malformed netpbm header") from exc
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval > 255 or maxval < 1:
        raise FormatError(f"unsupported bit depth (maxval {maxval})")
    if width < 1 or height < 1 or width > _MAX_DIM or height > _MAX_DIM:
        raise FormatError("netpbm dimensions out of range")
    count = width * height * channels
    raster = blob[pos : pos + count]
    if len(raster) != count:
        raise FormatError("truncated netpbm raster")
    arr = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(arr.reshape(shape))


def _load_png(path: Path) -> Image:
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.float64)
        elif im.mode in ("P", "LA", "RGBA", "1"):
            raise FormatError(f"unsupported PNG mode {im.mode!r}")
        else:
            raise FormatError(f"unsupported bit depth (PNG mode {im.mode!r})")
    return Image(arr)


def _quantize(image: Image) -> np.ndarray:
    # round half away from zero, then clamp to the 8-bit range
    v = np.clip(image.data, 0.0, 255.0)
    return np.floor(v + 0.5).astype(np.uint8)


def _save_netpbm(path: Path, image: Image):
    q = _quantize(image)
    if image.channels == 1:
        header = b"P5\n%d %d\n255\n" % (image.width, image.height)
    else:
        header = b"P6\n%d %d\n255\n" % (image.width, image.height)
    path.write_bytes(header + q.tobytes())


def _save_png(path: Path, image: Image):
    from PIL import Image as PILImage

    q = _quantize(image)
    mode = "L" if image.channels == 1 else "RGB"
    PILImage.fromarray(q, mode=mode).save(path, format="PNG")


def image_io(path, mode: str, image: Image | None = None):
    """Load or save an 8-bit raster image (PGM, PPM, or PNG).

    ``mode='load'`` maps 8-bit samples to float64 in [0, 255] losslessly.
    ``mode='save'`` rounds half away from zero, clamps to [0, 255], and picks
    the container from the file extension.
    """
    path = Path(path)
    if mode == "load":
        if not path.is_file():
            raise FileNotFoundError(f"no such image file: {path}")
        blob = path.read_bytes()
        if blob[:2] in (b"P5", b"P6"):
            return _parse_netpbm(blob)
        if blob[:8] == b"\x89PNG\r\n\x1a\n":
            return _load_png(path)
        raise FormatError(f"unsupported image format: {path}")
    if mode == "save":
        if image is None:
            raise ValueError("save mode requires an image")
        if not path.parent.is_dir():
            raise FileNotFoundError(f"parent directory does not exist: {path.parent}")
        ext = path.suffix.lower()
        if ext == ".pgm":
            if image.channels != 1:
                raise ValueError("PGM stores single-channel images only")
            _save_netpbm(path, image)
        elif ext == ".ppm":
            if image.channels != 3:
                raise ValueError("PPM stores 3-channel images only")
            _save_netpbm(path, image)
        elif ext == ".png":
            _save_png(path, image)
        else:
            raise FormatError(f"unsupported image extension: {ext!r}")
        return None
    raise ValueError(f"mode must be 'load' or 'save', got {mode!r}")


# ---------------------------------------------------------------------------
# Dictionary construction and persistence
# ---------------------------------------------------------------------------


def read_manifest(path) -> dict[str, int]:
    """Parse a labels manifest: one ``filename<TAB>subject_id`` per line.

    Subject ids must be non-negative integers (they are persisted as u32 in
    the dictionary container).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such manifest: {path}")
    entries: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'filename<TAB>subject_id'")
        name, subject = line.split("\t", 1)
        try:
            sid = int(subject.strip())
        except ValueError as exc:
            raise FormatError(
                f"{path}:{lineno}: subject id must be a non-negative integer"
            ) from exc
        if sid < 0:
            raise FormatError(f"{path}:{lineno}: subject id must be non-negative")
        if name in entries:
            raise FormatError(f"{path}:{lineno}: duplicate manifest entry {name!r}")
        entries[name] = sid
    return entries


def build_dictionary(hr_image_dir, labels_manifest, degradation: DegradationParams) -> DictionaryPair:
    """Assemble a HR/LR dictionary pair from a directory of grayscale images.

    Columns are ordered by subject id, then filename.  The LR matrix is the
    noise-free degradation of the HR matrix, so the pair is reproducible
    bit-for-bit from the HR images and the degradation settings.
    """
    from .degrade import degrade as degrade_image

    if degradation.noise_sigma != 0:
        raise ValueError("dictionary derivation is noise-free; use noise_sigma=0")
    root = Path(hr_image_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"no such directory: {root}")
    manifest = read_manifest(labels_manifest)
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".pgm", ".ppm", ".png"))
    if not files:
        raise ValueError(f"no images found in {root}")
    for p in files:
        if p.name not in manifest:
            raise ValueError(f"missing manifest entry for {p.name!r}")
    for name in manifest:
        if not (root / name).is_file():
            raise FileNotFoundError(f"manifest references missing file {name!r}")
    order = sorted(files, key=lambda p: (manifest[p.name], p.name))

    d = degradation.d
    hr_cols, lr_cols, labels = [], [], []
    hr_dims = None
    for p in order:
        img = image_io(p, "load")
        if img.channels != 1:
            raise ValueError(f"dictionary images must be single-channel: {p.name!r}")
        if hr_dims is None:
            hr_dims = img.dims
            if hr_dims[0] % d or hr_dims[1] % d:
                raise ValueError("image dimensions must be divisible by the scaling factor")
        elif img.dims != hr_dims:
            raise ValueError(f"inconsistent image dimensions: {p.name!r}")
        lr = degrade_image(img, degradation)
        hr_cols.append(vectorize(img))
        lr_cols.append(vectorize(lr))
        labels.append(manifest[p.name])

    lr_dims = (hr_dims[0] // d, hr_dims[1] // d)
    return DictionaryPair(
        d_h=np.column_stack(hr_cols),
        d_l=np.column_stack(lr_cols),
        labels=np.asarray(labels, dtype=np.int64),
        hr_dims=hr_dims,
        lr_dims=lr_dims,
        degradation=degradation,
    )


def dictionary_io(path, mode: str, pair: DictionaryPair | None = None):
    """Load or save a dictionary pair in the binary 'FHD1' container.

    Layout (little endian): 4-byte magic, ten u32 header fields
    (m_h, m_l, n, h_h, w_h, h_l, w_l, d, k_h, k_w), then float64 blocks for
    the PSF kernel, d_h, and d_l (row-major), then n u32 labels.  Round-trips
    are bit-exact.
    """
    path = Path(path)
    if mode == "save":
        if pair is None:
            raise ValueError("save mode requires a dictionary pair")
        k = pair.degradation.psf.kernel
        header = struct.pack(
            "<10I",
            pair.d_h.shape[0],
            pair.d_l.shape[0],
            pair.n,
            pair.hr_dims[0],
            pair.hr_dims[1],
            pair.lr_dims[0],
            pair.lr_dims[1],
            pair.degradation.d,
            k.shape[0],
            k.shape[1],
        )
        with open(path, "wb") as fh:
            fh.write(_FHD_MAGIC)
            fh.write(header)
            fh.write(k.astype("<f8").tobytes())
            fh.write(pair.d_h.astype("<f8").tobytes())
            fh.write(pair.d_l.astype("<f8").tobytes())
            fh.write(pair.labels.astype("<u4").tobytes())
        return None
    if mode != "load":
        raise ValueError(f"mode must be 'load' or 'save', got {mode!r}")

    if not path.is_file():
        raise FileNotFoundError(f"no such dictionary file: {path}")
    blob = path.read_bytes()
    if blob[:3] != _FHD_MAGIC[:3]:
        raise FormatError("bad magic: not a dictionary container")
    if blob[:4] != _FHD_MAGIC:
        raise FormatError(f"unsupported dictionary container version {blob[3:4]!r}")
    if len(blob) < 4 + 40:
        raise FormatError("truncated dictionary header")
    m_h, m_l, n, h_h, w_h, h_l, w_l, d, k_h, k_w = struct.unpack_from("<10I", blob, 4)
    pos = 44
    expect = k_h * k_w * 8 + m_h * n * 8 + m_l * n * 8 + n * 4
    if len(blob) - pos != expect:
        raise FormatError("truncated dictionary payload")

    def take(count, dtype):
        nonlocal pos
        nbytes = count * np.dtype(dtype).itemsize
        out = np.frombuffer(blob[pos : pos + nbytes], dtype=dtype)
        pos += nbytes
        return out

    kernel = take(k_h * k_w, "<f8").reshape(k_h, k_w)
    d_h = take(m_h * n, "<f8").reshape(m_h, n)
    d_l = take(m_l * n, "<f8").reshape(m_l, n)
    labels = take(n, "<u4").astype(np.int64)
    degradation = DegradationParams(psf=Psf(kernel), d=d, noise_sigma=0.0)
    return DictionaryPair(
        d_h=d_h,
        d_l=d_l,
        labels=labels,
        hr_dims=(h_h, w_h),
        lr_dims=(h_l, w_l),
        degradation=degradation,
    )


def validate_pair(pair: DictionaryPair) -> bool:
    """Recompute every LR column from its HR column; True iff all match exactly."""
    from .degrade import degrade as degrade_image

    for j in range(pair.n):
        hr = devectorize(pair.d_h[:, j], pair.hr_dims)
        lr = degrade_image(hr, pair.degradation)
        if not np.array_equal(vectorize(lr), pair.d_l[:, j]):
            return False
    return True
