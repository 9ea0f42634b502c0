import numpy as np
import pytest

from facehall import (
    DegradationParams,
    Image,
    LandmarkSet,
    Mesh,
    Psf,
    Transform,
    build_aligned_dictionaries,
    compose,
    decimate,
    degrade,
    estimate_similarity,
    landmark_io,
    mesh_io,
    render_mesh,
    to_grayscale,
    transform_mesh,
    validate_alignment,
    vectorize,
)


def random_transform(rng, scale_lo=0.5, scale_hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return Transform(float(rng.uniform(scale_lo, scale_hi)), q, rng.standard_normal(3) * 3)


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def quad_mesh(x0, y0, x1, y1, z=0.0, colors=None):
    """Two-triangle rectangle in the given image-plane box."""
    vertices = np.array(
        [[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]], dtype=float
    )
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    if colors is None:
        colors = np.array(
            [[220, 40, 40], [40, 220, 40], [40, 40, 220], [220, 220, 40]], dtype=float
        )
    return Mesh(vertices, triangles, colors)


def quad_landmarks(x0, y0, x1, y1, z=0.0):
    """68 coplanar points spread over the box: an 8x8 grid plus the corners."""
    xs = np.linspace(x0, x1, 8)
    ys = np.linspace(y0, y1, 8)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(64, z)])
    corners = np.array(
        [[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]], dtype=float
    ) + np.array([0.25, 0.35, 0.0])
    return LandmarkSet(np.vstack([pts, corners]))


class TestEstimateSimilarity:
    def test_identity(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((68, 3)) * 4
        tf = estimate_similarity(pts, pts)
        assert tf.scale == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(tf.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(tf.translation, 0.0, atol=1e-12)

    def test_exact_scale_and_shift(self):
        rng = np.random.default_rng(1)
        src = rng.standard_normal((68, 3))
        dst = 2.0 * src + np.array([1.0, 0.0, 0.0])
        tf = estimate_similarity(src, dst)
        assert tf.scale == pytest.approx(2.0, abs=1e-9)
        assert np.allclose(tf.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(tf.translation, [1.0, 0.0, 0.0], atol=1e-9)

    def test_noisy_recovery(self):
        rng = np.random.default_rng(2)
        src = rng.standard_normal((68, 3)) * 5
        truth = random_transform(rng)
        noisy = truth.apply(src) + rng.normal(0.0, 0.01, src.shape)
        tf, rms = estimate_similarity(src, noisy, return_rms=True)
        assert abs(tf.scale - truth.scale) < 1e-2
        assert np.max(np.abs(tf.rotation - truth.rotation)) < 1e-2
        assert np.max(np.abs(tf.translation - truth.translation)) < 1e-1
        assert rms < 0.03  # about sigma * sqrt(3)

    def test_left_invariance(self):
        rng = np.random.default_rng(3)
        src = rng.standard_normal((68, 3)) * 2
        dst = random_transform(rng).apply(src) + rng.normal(0, 0.05, src.shape)
        motion = random_transform(rng, scale_lo=1.0, scale_hi=1.0)  # rigid
        base = estimate_similarity(src, dst)
        moved = estimate_similarity(motion.apply(src), motion.apply(dst))
        assert np.allclose(
            moved.apply(motion.apply(src)), motion.apply(base.apply(src)), atol=1e-8
        )

    def test_degenerate_configurations(self):
        coincident = np.zeros((68, 3))
        with pytest.raises(ValueError, match="degenerate"):
            estimate_similarity(coincident, coincident)
        line = np.zeros((68, 3))
        line[:, 0] = np.linspace(0, 1, 68)
        with pytest.raises(ValueError, match="degenerate"):
            estimate_similarity(line, line)

    def test_planar_source_is_fine(self):
        lmk = quad_landmarks(0, 0, 10, 8)
        tf = estimate_similarity(lmk, lmk)
        assert tf.scale == pytest.approx(1.0, abs=1e-9)


class TestTransform:
    def test_compose_identity(self):
        rng = np.random.default_rng(4)
        t = random_transform(rng)
        assert np.allclose(compose(t, Transform.identity()).matrix, t.matrix, atol=1e-12)
        assert np.allclose(compose(Transform.identity(), t).matrix, t.matrix, atol=1e-12)

    def test_compose_inverse(self):
        rng = np.random.default_rng(5)
        t = random_transform(rng)
        assert np.allclose(compose(t, t.inverse()).matrix, np.eye(4), atol=1e-9)

    def test_compose_matches_matrix_product_action(self):
        rng = np.random.default_rng(6)
        a, b = random_transform(rng), random_transform(rng)
        pts = rng.standard_normal((100, 3))
        composed = compose(a, b)
        via_matrix = (a.matrix @ b.matrix @ np.hstack([pts, np.ones((100, 1))]).T).T[:, :3]
        assert np.allclose(composed.apply(pts), via_matrix, atol=1e-10)
        assert np.allclose(composed.apply(pts), a.apply(b.apply(pts)), atol=1e-10)

    def test_compose_associative(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            a, b, c = (random_transform(rng) for _ in range(3))
            lhs = compose(compose(a, b), c).matrix
            rhs = compose(a, compose(b, c)).matrix
            assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_transform_mesh(self):
        rng = np.random.default_rng(8)
        mesh = quad_mesh(0, 0, 4, 3)
        assert np.allclose(
            transform_mesh(mesh, Transform.identity()).vertices, mesh.vertices
        )
        shift = Transform(1.0, np.eye(3), np.array([2.0, -1.0, 0.5]))
        moved = transform_mesh(mesh, shift)
        assert np.allclose(moved.vertices, mesh.vertices + shift.translation)
        d_before = np.linalg.norm(mesh.vertices[0] - mesh.vertices[2])
        d_after = np.linalg.norm(moved.vertices[0] - moved.vertices[2])
        assert d_after == pytest.approx(d_before, abs=1e-12)
        doubled = transform_mesh(mesh, Transform(2.0, np.eye(3), np.zeros(3)))
        assert np.linalg.norm(doubled.vertices[0] - doubled.vertices[2]) == pytest.approx(
            2 * d_before, abs=1e-12
        )

    def test_rotation_validated(self):
        with pytest.raises(ValueError, match="orthogonal|determinant"):
            Transform(1.0, np.eye(3) * 1.5, np.zeros(3))


class TestRenderMesh:
    def test_contract_triangle(self):
        mesh = Mesh(
            vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]],
            triangles=[[0, 1, 2]],
            colors=[[100, 100, 100]] * 3,
        )
        img, mask = render_mesh(mesh, (3, 3))
        expected_mask = np.array([[1, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=bool)
        assert np.array_equal(mask, expected_mask)
        assert np.all(img.data[expected_mask] == 100.0)
        assert np.all(img.data[~expected_mask] == 0.0)

    def test_z_buffer_keeps_largest_z(self):
        mesh = Mesh(
            vertices=[[0, 0, 0], [2, 0, 0], [0, 2, 0], [0, 0, 5], [2, 0, 5], [0, 2, 5]],
            triangles=[[0, 1, 2], [3, 4, 5]],
            colors=[[50, 50, 50]] * 3 + [[200, 200, 200]] * 3,
        )
        img, mask = render_mesh(mesh, (3, 3))
        assert img.data[0, 0, 0] == 200.0
        assert img.data[1, 1, 0] == 200.0

    def test_colors_stay_in_vertex_hull(self):
        rng = np.random.default_rng(9)
        mesh = Mesh(
            vertices=rng.uniform(0, 10, (12, 3)),
            triangles=rng.integers(0, 12, (8, 3)),
            colors=rng.uniform(60, 180, (12, 3)),
        )
        img, mask = render_mesh(mesh, (12, 12))
        if mask.any():
            assert img.data[mask].min() >= 60 - 1e-9
            assert img.data[mask].max() <= 180 + 1e-9

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(10)
        mesh = Mesh(
            vertices=rng.uniform(-1, 9, (9, 3)),
            triangles=rng.integers(0, 9, (6, 3)),
            colors=rng.uniform(0, 255, (9, 3)),
        )
        dims = (8, 8)
        img, mask = render_mesh(mesh, dims)

        eps = 1e-12
        oracle = np.zeros((*dims, 3))
        oracle_mask = np.zeros(dims, dtype=bool)
        for r in range(dims[0]):
            for c in range(dims[1]):
                best_z = -np.inf
                best_color = None
                for tri in mesh.triangles:
                    v0, v1, v2 = mesh.vertices[tri]
                    area = (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (
                        v1[1] - v0[1]
                    )
                    if area == 0.0:
                        continue
                    l1 = ((c - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (r - v0[1])) / area
                    l2 = ((v1[0] - v0[0]) * (r - v0[1]) - (c - v0[0]) * (v1[1] - v0[1])) / area
                    l0 = 1.0 - l1 - l2
                    if l0 >= -eps and l1 >= -eps and l2 >= -eps:
                        z = l0 * v0[2] + l1 * v1[2] + l2 * v2[2]
                        if z > best_z:
                            best_z = z
                            best_color = (
                                l0 * mesh.colors[tri[0]]
                                + l1 * mesh.colors[tri[1]]
                                + l2 * mesh.colors[tri[2]]
                            )
                if best_color is not None:
                    oracle[r, c] = np.clip(best_color, 0, 255)
                    oracle_mask[r, c] = True
        assert np.array_equal(mask, oracle_mask)
        assert np.allclose(img.data, oracle, atol=1e-9)

    def test_empty_coverage_allowed(self):
        mesh = quad_mesh(100, 100, 110, 110)
        img, mask = render_mesh(mesh, (8, 8))
        assert not mask.any()
        assert np.all(img.data == 0.0)


class TestValidateAlignment:
    def test_accepts_identical(self):
        rng = np.random.default_rng(11)
        img = Image(rng.uniform(0, 255, (20, 20)))
        assert validate_alignment(img, img, 100.0)

    def test_rejects_blackout(self):
        rng = np.random.default_rng(12)
        img = Image(rng.uniform(0, 255, (20, 20)))
        black = Image(np.zeros((20, 20)))
        # raw-count histogram distance on 400 px far exceeds 100
        assert not validate_alignment(img, black, 100.0)

    def test_accepts_permutation(self):
        rng = np.random.default_rng(13)
        img = Image(rng.uniform(0, 255, (20, 20)))
        rolled = Image(np.roll(img.data, (7, 3), (0, 1)))
        assert validate_alignment(img, rolled, 100.0)


class TestMeshIO:
    def test_minimal_obj(self, tmp_path):
        p = tmp_path / "tri.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", encoding="utf-8")
        mesh = mesh_io(p, "load")
        assert mesh.vertices.shape == (3, 3)
        assert mesh.triangles.shape == (1, 3)
        assert np.all(mesh.colors == 0.0)

    def test_quad_face_rejected(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", encoding="utf-8")
        with pytest.raises(ValueError, match="triangular"):
            mesh_io(p, "load")

    def test_index_out_of_range(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", encoding="utf-8")
        with pytest.raises(ValueError, match="out of range"):
            mesh_io(p, "load")

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(14)
        mesh = Mesh(
            vertices=rng.standard_normal((20, 3)) * 10,
            triangles=rng.integers(0, 20, (15, 3)),
            colors=rng.uniform(0, 255, (20, 3)),
        )
        p = tmp_path / "rt.obj"
        mesh_io(p, "save", mesh)
        again = mesh_io(p, "load")
        assert np.allclose(again.vertices, mesh.vertices, atol=1e-9)
        assert np.array_equal(again.triangles, mesh.triangles)
        assert np.allclose(again.colors, mesh.colors, atol=1e-9)

    def test_landmark_round_trip(self, tmp_path):
        rng = np.random.default_rng(15)
        lmk = LandmarkSet(rng.standard_normal((68, 3)) * 20)
        p = tmp_path / "pts.lmk"
        landmark_io(p, "save", lmk)
        again = landmark_io(p, "load")
        assert np.allclose(again.points, lmk.points, atol=1e-12)

    def test_landmark_count_enforced(self, tmp_path):
        p = tmp_path / "short.lmk"
        p.write_text("0 0 0\n1 1 1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="68"):
            landmark_io(p, "load")


class _QuadWorld:
    """Shared synthetic scene: one textured quad observed under several poses."""

    def __init__(self, dims=(64, 48), d=4):
        self.dims = dims
        self.d = d
        self.base_mesh = quad_mesh(6.0, 6.0, 42.0, 58.0)
        self.ref = quad_landmarks(6.0, 6.0, 42.0, 58.0)
        self.degradation = DegradationParams(Psf.average(4), d, 0.0)
        # unit-scale poses: the histogram gate keys on intensity distribution,
        # and scale changes move background mass enough to trip theta=100
        center = np.array([24.0, 32.0, 0.0])
        self.poses = []
        for angle, shift in [
            (0.13, (1.3, -0.7)),
            (-0.22, (-1.1, 2.2)),
            (0.31, (2.4, 1.15)),
            (-0.08, (-2.2, -1.6)),
        ]:
            rot = rotation_z(angle)
            t = center - rot @ center + np.array([shift[0], shift[1], 0.0])
            self.poses.append(Transform(1.0, rot, t))
        rot_y = rotation_z(0.4)
        self.y_pose = Transform(
            1.0, rot_y, center - rot_y @ center + np.array([1.7, -2.3, 0.0])
        )

    def sample(self, i):
        pose = self.poses[i]
        mesh = transform_mesh(self.base_mesh, pose)
        landmarks = LandmarkSet(pose.apply(self.ref.points))
        to_ref = estimate_similarity(landmarks, self.ref)
        return mesh, to_ref

    def build(self, theta=100.0, poison_index=None, y_landmarks=None):
        meshes, transforms, labels = [], [], []
        for i in range(len(self.poses)):
            mesh, to_ref = self.sample(i)
            if i == poison_index:
                to_ref = Transform(1.0, np.eye(3), np.array([1e5, 1e5, 0.0]))
            meshes.append(mesh)
            transforms.append(to_ref)
            labels.append(i)
        if y_landmarks is None:
            y_landmarks = LandmarkSet(self.y_pose.apply(self.ref.points))
        return build_aligned_dictionaries(
            meshes,
            transforms,
            y_landmarks,
            self.ref,
            self.degradation,
            theta,
            self.dims,
            labels=labels,
        )


class TestBuildAlignedDictionaries:
    def test_end_to_end_matches_direct_render(self):
        world = _QuadWorld()
        pair, mask, _ = world.build()
        assert pair.n == len(world.poses)
        truth_img, truth_cover = render_mesh(
            transform_mesh(world.base_mesh, world.y_pose), world.dims
        )
        truth_col = vectorize(to_grayscale(truth_img))
        for j in range(pair.n):
            diff = np.abs(pair.d_h[:, j] - truth_col)
            assert diff.max() <= 1.0
        # LR columns follow the stored degradation
        lr_truth = vectorize(degrade(to_grayscale(truth_img), world.degradation))
        for j in range(pair.n):
            assert np.max(np.abs(pair.d_l[:, j] - lr_truth)) <= 1.0
        assert np.array_equal(mask, truth_cover[:: world.d, :: world.d])

    def test_identity_alignment_uses_reference_transforms_alone(self):
        world = _QuadWorld()
        # theta relaxed: rasterizing the axis-aligned reference pose shifts
        # edge-pixel coverage relative to the rotated originals
        pair, _, _ = world.build(theta=500.0, y_landmarks=world.ref)
        for i in range(len(world.poses)):
            mesh, to_ref = world.sample(i)
            direct, _ = render_mesh(transform_mesh(mesh, to_ref), world.dims)
            expected = vectorize(to_grayscale(direct))
            assert np.max(np.abs(pair.d_h[:, i] - expected)) <= 1.0

    def test_pathological_transform_rejected(self):
        world = _QuadWorld()
        pair, _, _ = world.build(poison_index=2)
        assert pair.n == len(world.poses) - 1
        assert 2 not in pair.labels.tolist()

    def test_all_rejected_raises(self):
        world = _QuadWorld()
        with pytest.raises(ValueError, match="rejected"):
            world.build(theta=0.0)

    def test_masker_zeroes_outside(self):
        world = _QuadWorld()
        pair, mask, masker = world.build()
        rng = np.random.default_rng(16)
        y = Image(rng.uniform(10, 200, pair.lr_dims))
        masked = masker(y)
        assert np.all(masked.data[~mask] == 0.0)
        assert np.array_equal(masked.data[mask], y.data[mask])

    def test_deterministic(self):
        world = _QuadWorld()
        a, mask_a, _ = world.build()
        b, mask_b, _ = world.build()
        assert np.array_equal(a.d_h, b.d_h)
        assert np.array_equal(a.d_l, b.d_l)
        assert np.array_equal(mask_a, mask_b)
