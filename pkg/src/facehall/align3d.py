"""3D dictionary alignment: similarity registration, rendering, and gating.

Training faces arrive as textured meshes with per-sample landmark sets.  Each
mesh is carried into the pose of the test face by composing its precomputed
transform toward a reference landmark frame with the estimated transform from
the reference frame to the test face, then rendered orthographically with a
z-buffer.  Alignments whose renders change the intensity histogram too much
(a sign of a degenerate registration) are rejected, and a coverage mask over
the low-resolution grid marks which input pixels the aligned dictionary can
explain.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .degrade import degrade as degrade_image
from .imagecore import DegradationParams, DictionaryPair, Image, to_grayscale, vectorize

__all__ = [
    "Mesh",
    "LandmarkSet",
    "Transform",
    "estimate_similarity",
    "compose",
    "transform_mesh",
    "render_mesh",
    "validate_alignment",
    "build_aligned_dictionaries",
    "mesh_io",
    "landmark_io",
]

_LANDMARK_COUNT = 68
_ORTHO_TOL = 1e-9
_COVER_EPS = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh with per-vertex colors on the 8-bit scale."""

    vertices: np.ndarray  # (n_v, 3) float64
    triangles: np.ndarray  # (n_t, 3) int64, indices into vertices
    colors: np.ndarray  # (n_v, 3) float64 in [0, 255]

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        c = np.ascontiguousarray(np.asarray(self.colors, dtype=np.float64))
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 1:
            raise ValueError("vertices must be a non-empty (n, 3) array")
        if t.ndim != 2 or t.shape[1] != 3 or t.shape[0] < 1:
            raise ValueError("triangles must be a non-empty (n, 3) array")
        if c.shape != v.shape:
            raise ValueError("colors must align with vertices")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(c)):
            raise ValueError("mesh data must be finite")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise ValueError("triangle indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "colors", c)


@dataclass(frozen=True)
class LandmarkSet:
    """Exactly 68 3-D facial landmark points in image-aligned coordinates."""

    points: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if p.shape != (_LANDMARK_COUNT, 3):
            raise ValueError(f"landmark set must be ({_LANDMARK_COUNT}, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("landmarks must be finite")
        object.__setattr__(self, "points", p)


@dataclass(frozen=True)
class Transform:
    """Similarity transform p -> scale * R @ p + t with a proper rotation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        s = float(self.scale)
        R = np.ascontiguousarray(np.asarray(self.rotation, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.translation, dtype=np.float64)).reshape(3)
        if s <= 0:
            raise ValueError("scale must be positive")
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation must be orthogonal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def identity(cls) -> "Transform":
        return cls(1.0, np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Transform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        a = m[:3, :3]
        det = np.linalg.det(a)
        if det <= 0:
            raise ValueError("matrix is not a proper similarity")
        s = det ** (1.0 / 3.0)
        return cls(s, a / s, m[:3, 3])

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return self.scale * (p @ self.rotation.T) + self.translation

    def inverse(self) -> "Transform":
        rt = self.rotation.T
        return Transform(1.0 / self.scale, rt, -(rt @ self.translation) / self.scale)


def _points(obj) -> np.ndarray:
    if isinstance(obj, LandmarkSet):
        return obj.points
    p = np.asarray(obj, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("expected an (n, 3) point array or LandmarkSet")
    return p


def estimate_similarity(src, dst, return_rms: bool = False):
    """Least-squares similarity taking ``src`` points onto ``dst`` points.

    Closed-form (SVD-based) estimate with reflection correction; requires the
    source configuration to span at least a plane (rank >= 2 after
    centering).  With ``return_rms`` the per-point RMS residual is returned
    alongside the transform.
    """
    s_pts = _points(src)
    d_pts = _points(dst)
    if s_pts.shape != d_pts.shape:
        raise ValueError("point sets must have matching shapes")
    n = s_pts.shape[0]
    if n < 3:
        raise ValueError("need at least 3 point pairs")
    mu_s = s_pts.mean(axis=0)
    mu_d = d_pts.mean(axis=0)
    xs = s_pts - mu_s
    xd = d_pts - mu_d
    var_s = float((xs**2).sum()) / n
    if var_s == 0.0:
        raise ValueError("degenerate source configuration: all points coincide")
    sing = np.linalg.svd(xs, compute_uv=False)
    if sing[1] <= 1e-12 * sing[0]:
        raise ValueError("degenerate source configuration: points are collinear")

    cov = xd.T @ xs / n
    u, dvals, vt = np.linalg.svd(cov)
    sign = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2, 2] = -1.0
    rotation = u @ sign @ vt
    scale = float((dvals * np.diag(sign)).sum()) / var_s
    if scale <= 0:
        raise ValueError("degenerate configuration: non-positive scale estimate")
    translation = mu_d - scale * rotation @ mu_s
    tf = Transform(scale, rotation, translation)
    if not return_rms:
        return tf
    residual = d_pts - tf.apply(s_pts)
    rms = float(np.sqrt((residual**2).sum(axis=1).mean()))
    return tf, rms


def compose(a: Transform, b: Transform) -> Transform:
    """Homogeneous product a.matrix @ b.matrix: apply ``b`` first, then ``a``."""
    return Transform.from_matrix(a.matrix @ b.matrix)


def transform_mesh(mesh: Mesh, tf: Transform) -> Mesh:
    """Map the vertices through ``tf``; connectivity and colors are unchanged."""
    return Mesh(tf.apply(mesh.vertices), mesh.triangles, mesh.colors)


def render_mesh(mesh: Mesh, out_dims: tuple[int, int]) -> tuple[Image, np.ndarray]:
    """Orthographic z-buffer rasterization to a 3-channel image plus coverage mask.

    Vertex x maps to column, y to row, z to depth with larger z closer to the
    viewer.  Pixel (r, c) samples the point (x=c, y=r) exactly (top-left
    pixel-center convention); points on triangle edges count as covered.
    Colors interpolate barycentrically.  Uncovered pixels stay black.
    """
    h, w = int(out_dims[0]), int(out_dims[1])
    rgb = np.zeros((h, w, 3))
    zbuf = np.full((h, w), -np.inf)
    covered = np.zeros((h, w), dtype=bool)

    verts = mesh.vertices
    cols = mesh.colors
    for tri in mesh.triangles:
        v0, v1, v2 = verts[tri[0]], verts[tri[1]], verts[tri[2]]
        x0, y0 = v0[0], v0[1]
        x1, y1 = v1[0], v1[1]
        x2, y2 = v2[0], v2[1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        r_lo = max(int(np.ceil(min(y0, y1, y2) - _COVER_EPS)), 0)
        r_hi = min(int(np.floor(max(y0, y1, y2) + _COVER_EPS)), h - 1)
        c_lo = max(int(np.ceil(min(x0, x1, x2) - _COVER_EPS)), 0)
        c_hi = min(int(np.floor(max(x0, x1, x2) + _COVER_EPS)), w - 1)
        if r_lo > r_hi or c_lo > c_hi:
            continue
        rr, cc = np.meshgrid(
            np.arange(r_lo, r_hi + 1), np.arange(c_lo, c_hi + 1), indexing="ij"
        )
        px = cc.astype(np.float64)
        py = rr.astype(np.float64)
        l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / area
        l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / area
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -_COVER_EPS) & (l1 >= -_COVER_EPS) & (l2 >= -_COVER_EPS)
        if not inside.any():
            continue
        depth = l0 * v0[2] + l1 * v1[2] + l2 * v2[2]
        win = inside & (depth > zbuf[r_lo : r_hi + 1, c_lo : c_hi + 1])
        if not win.any():
            continue
        color = (
            l0[..., None] * cols[tri[0]]
            + l1[..., None] * cols[tri[1]]
            + l2[..., None] * cols[tri[2]]
        )
        sub_z = zbuf[r_lo : r_hi + 1, c_lo : c_hi + 1]
        sub_rgb = rgb[r_lo : r_hi + 1, c_lo : c_hi + 1]
        sub_cov = covered[r_lo : r_hi + 1, c_lo : c_hi + 1]
        sub_z[win] = depth[win]
        sub_rgb[win] = color[win]
        sub_cov[win] = True
    return Image(np.clip(rgb, 0.0, 255.0)), covered


def _histogram(image: Image) -> np.ndarray:
    gray = to_grayscale(image).data
    counts, _ = np.histogram(np.clip(gray, 0.0, 255.0), bins=256, range=(0.0, 256.0))
    return counts / gray.size


def validate_alignment(original: Image, transformed: Image, theta: float) -> bool:
    """Histogram gate for registrations.

    Accept iff the l2 distance between the normalized 256-bin grayscale
    histograms, rescaled by the pixel count, stays below ``theta``; for
    equal-size images this equals the raw-count histogram distance.
    """
    if original.dims != transformed.dims:
        raise ValueError("images must share dimensions")
    h1 = _histogram(original)
    h2 = _histogram(transformed)
    n_pixels = original.height * original.width
    distance = float(np.linalg.norm(h1 - h2)) * n_pixels
    return distance < theta


def build_aligned_dictionaries(
    meshes: Sequence[Mesh],
    transforms_to_ref: Sequence[Transform],
    y_landmarks: LandmarkSet,
    p_ref: LandmarkSet,
    degradation: DegradationParams,
    theta: float,
    hr_dims: tuple[int, int],
    labels: Sequence[int] | None = None,
) -> tuple[DictionaryPair, np.ndarray, Callable[[Image], Image]]:
    """Register every training mesh to the test pose and build the dictionaries.

    ``transforms_to_ref[i]`` must carry mesh i into the reference landmark
    frame; the reference-to-test transform is estimated from ``p_ref`` and
    ``y_landmarks``.  Samples whose aligned render fails the histogram gate
    are dropped together with their labels.  Returns the aligned pair, a
    boolean LR mask keeping pixels covered by at least half of the aligned
    renders, and a function that zeroes an LR image outside that mask.
    """
    if len(meshes) == 0:
        raise ValueError("no training meshes supplied")
    if len(meshes) != len(transforms_to_ref):
        raise ValueError("need one reference transform per mesh")
    if labels is None:
        label_arr = np.zeros(len(meshes), dtype=np.int64)
    else:
        label_arr = np.asarray(list(labels), dtype=np.int64)
        if label_arr.shape != (len(meshes),):
            raise ValueError("need one label per mesh")
    d = degradation.d
    h, w = int(hr_dims[0]), int(hr_dims[1])
    if h % d or w % d:
        raise ValueError("hr dims must be divisible by the scaling factor")

    ref_to_y = estimate_similarity(p_ref, y_landmarks)
    hr_cols, lr_cols, kept_labels, lr_covers = [], [], [], []
    for mesh, to_ref, label in zip(meshes, transforms_to_ref, label_arr):
        total = compose(ref_to_y, to_ref)
        original, _ = render_mesh(mesh, (h, w))
        aligned, cover = render_mesh(transform_mesh(mesh, total), (h, w))
        if not validate_alignment(original, aligned, theta):
            continue
        gray = to_grayscale(aligned)
        lr = degrade_image(gray, degradation)
        hr_cols.append(vectorize(gray))
        lr_cols.append(vectorize(lr))
        kept_labels.append(int(label))
        lr_covers.append(cover[::d, ::d])

    if not hr_cols:
        raise ValueError("all samples were rejected by the alignment gate")

    mask = np.mean(np.stack(lr_covers).astype(np.float64), axis=0) >= 0.5
    pair = DictionaryPair(
        d_h=np.column_stack(hr_cols),
        d_l=np.column_stack(lr_cols),
        labels=np.asarray(kept_labels, dtype=np.int64),
        hr_dims=(h, w),
        lr_dims=(h // d, w // d),
        degradation=degradation,
    )

    def y_masker(y: Image) -> Image:
        if y.dims != pair.lr_dims:
            raise ValueError("input dims must match the LR grid")
        if y.channels == 1:
            return Image(np.where(mask, y.data, 0.0))
        return Image(np.where(mask[:, :, None], y.data, 0.0))

    return pair, mask, y_masker


# ---------------------------------------------------------------------------
# Mesh and landmark files
# ---------------------------------------------------------------------------


def mesh_io(path, mode: str, mesh: Mesh | None = None):
    """Load or save a mesh in a small OBJ subset.

    Lines are ``v x y z [r g b]`` with colors on the 0..255 scale and
    ``f i j k`` with 1-based indices; ``#`` comments and blank lines are
    skipped.  Faces with more than three vertices are rejected.  Vertices
    without colors default to 0 (black).
    """
    path = Path(path)
    if mode == "save":
        if mesh is None:
            raise ValueError("save mode requires a mesh")
        lines = []
        for v, c in zip(mesh.vertices, mesh.colors):
            lines.append(
                "v %.17g %.17g %.17g %.17g %.17g %.17g" % (v[0], v[1], v[2], c[0], c[1], c[2])
            )
        for t in mesh.triangles:
            lines.append("f %d %d %d" % (t[0] + 1, t[1] + 1, t[2] + 1))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return None
    if mode != "load":
        raise ValueError(f"mode must be 'load' or 'save', got {mode!r}")

    if not path.is_file():
        raise FileNotFoundError(f"no such mesh file: {path}")
    verts, colors, tris = [], [], []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) not in (4, 7):
                raise ValueError(f"{path}:{lineno}: vertex needs 3 coords or 3 coords + rgb")
            try:
                nums = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed vertex line") from exc
            verts.append(nums[:3])
            colors.append(nums[3:6] if len(nums) == 6 else [0.0, 0.0, 0.0])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: only triangular faces are supported")
            try:
                idx = [int(p) for p in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed face line") from exc
            if any(i < 1 or i > len(verts) for i in idx):
                raise ValueError(f"{path}:{lineno}: face index out of range")
            tris.append([i - 1 for i in idx])
        else:
            raise ValueError(f"{path}:{lineno}: unsupported directive {parts[0]!r}")
    if not verts or not tris:
        raise ValueError(f"{path}: mesh needs at least one vertex and one face")
    return Mesh(np.asarray(verts), np.asarray(tris), np.asarray(colors))


def landmark_io(path, mode: str, landmarks: LandmarkSet | None = None):
    """Load or save a landmark set: 68 lines of ``x y z``."""
    path = Path(path)
    if mode == "save":
        if landmarks is None:
            raise ValueError("save mode requires landmarks")
        lines = ["%.17g %.17g %.17g" % tuple(p) for p in landmarks.points]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return None
    if mode != "load":
        raise ValueError(f"mode must be 'load' or 'save', got {mode!r}")
    if not path.is_file():
        raise FileNotFoundError(f"no such landmark file: {path}")
    rows = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'x y z'")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed landmark line") from exc
    if len(rows) != _LANDMARK_COUNT:
        raise ValueError(f"{path}: expected {_LANDMARK_COUNT} landmarks, got {len(rows)}")
    return LandmarkSet(np.asarray(rows))
