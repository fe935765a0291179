"""Affine decomposition, operator norms, error bound, norm-bias table."""

import numpy as np
import pytest
from scipy.linalg import svdvals

from avood.affine import (
    AffineDecomp,
    decompose,
    frobenius_norm,
    norm_bias_demo,
    recon_error_bound,
    reconstruction_path,
    spectral_norm,
)
from avood.errors import DimensionError, UnsupportedPathError
from avood.nn import FcLayer, forward
from conftest import TinyModel, random_detector_parts, random_layer


def relu_stack(rng, dims, last_linear=True):
    layers = []
    for i in range(len(dims) - 1):
        act = "none" if (last_linear and i == len(dims) - 2) else "relu"
        layers.append(random_layer(rng, dims[i + 1], dims[i], act))
    return layers


class TestDecompose:
    def test_single_linear_layer(self):
        rng = np.random.default_rng(0)
        layer = random_layer(rng, 3, 5, "none")
        d = decompose([layer], rng.normal(size=5))
        np.testing.assert_array_equal(d.gamma, layer.weight)
        np.testing.assert_array_equal(d.b, layer.bias)
        assert d.pattern == []

    def test_all_positive_pattern_is_plain_product(self):
        # big positive biases force every unit on
        rng = np.random.default_rng(1)
        l1 = FcLayer(rng.normal(size=(4, 4)) * 0.1, np.full(4, 50.0), "relu")
        l2 = FcLayer(rng.normal(size=(4, 4)) * 0.1, np.full(4, 50.0), "relu")
        x = rng.normal(size=4)
        d = decompose([l1, l2], x)
        np.testing.assert_allclose(d.gamma, l2.weight @ l1.weight, atol=1e-15)
        np.testing.assert_allclose(
            d.b, l2.weight @ l1.bias + l2.bias, atol=1e-13
        )
        assert all(p.all() for p in d.pattern)

    def test_exact_zero_preactivation_masks_off(self):
        layer = FcLayer(np.eye(3), np.zeros(3), "relu")
        d = decompose([layer], np.zeros(3))
        assert not d.pattern[0].any()
        np.testing.assert_array_equal(d.gamma, np.zeros((3, 3)))

    def test_matches_forward_on_many_inputs(self):
        rng = np.random.default_rng(2)
        W, d1, d2 = random_detector_parts(rng, 10, 4, 12)
        model = TinyModel(W, d1, d2)
        path = reconstruction_path(model, "d1")
        for _ in range(100):
            x = np.abs(rng.normal(size=10)) * 2.0
            f, _ = forward(path, x)
            d = decompose(path, x)
            resid = np.linalg.norm(f - d.apply(x))
            assert resid <= 1e-9 * (1.0 + np.linalg.norm(f))

    def test_same_pattern_same_matrices(self):
        rng = np.random.default_rng(3)
        layers = relu_stack(rng, [6, 8, 8, 6])
        x = rng.normal(size=6)
        a = decompose(layers, x)
        b = decompose(layers, x + 1e-9 * rng.normal(size=6))
        if all(np.array_equal(pa, pb) for pa, pb in zip(a.pattern, b.pattern)):
            assert a.gamma.tobytes() == b.gamma.tobytes()
            assert a.b.tobytes() == b.b.tobytes()

    def test_wrong_input_length(self):
        rng = np.random.default_rng(4)
        layers = relu_stack(rng, [6, 8, 6])
        with pytest.raises(DimensionError):
            decompose(layers, np.ones(5))

    def test_d2_path_rejected(self):
        rng = np.random.default_rng(5)
        W, d1, d2 = random_detector_parts(rng, 6, 3, 8)
        model = TinyModel(W, d1, d2)
        with pytest.raises(UnsupportedPathError):
            reconstruction_path(model, "d2")
        with pytest.raises(UnsupportedPathError):
            reconstruction_path(model, "bogus")

    def test_path_head_is_final_layer_weight(self):
        rng = np.random.default_rng(6)
        W, d1, d2 = random_detector_parts(rng, 6, 3, 8)
        path = reconstruction_path(TinyModel(W, d1, d2), "d1")
        np.testing.assert_array_equal(path[0].weight, W)
        assert path[0].activation == "none"
        assert len(path) == 1 + len(d1)


class TestOperatorNorms:
    def controlled_matrix(self, rng, n, gap=0.8):
        # exact top singular value with a bounded second/first ratio
        q1, _ = np.linalg.qr(rng.normal(size=(n, n)))
        q2, _ = np.linalg.qr(rng.normal(size=(n, n)))
        s = np.sort(rng.uniform(0.1, 1.0, size=n))[::-1]
        s[1:] *= gap
        return q1 @ np.diag(s) @ q2.T, s[0]

    def test_matches_svd_oracle(self):
        rng = np.random.default_rng(7)
        for i in range(30):
            A, top = self.controlled_matrix(rng, int(rng.integers(2, 20)))
            assert spectral_norm(A) == pytest.approx(top, rel=1e-6)

    def test_never_exceeds_true_norm(self):
        # ‖Av‖ <= sigma_max for any unit v, so the estimate is one-sided
        rng = np.random.default_rng(8)
        for _ in range(50):
            A = rng.normal(size=(int(rng.integers(2, 15)), int(rng.integers(2, 15))))
            assert spectral_norm(A) <= svdvals(A)[0] * (1.0 + 1e-12)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((4, 4))) == 0.0

    def test_identity(self):
        assert spectral_norm(np.eye(5)) == pytest.approx(1.0, abs=1e-12)

    def test_frobenius_dominates_spectral(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            A = rng.normal(size=(6, 6))
            assert frobenius_norm(A) >= spectral_norm(A) - 1e-12

    def test_rectangular_rejected_only_for_bound(self):
        assert spectral_norm(np.ones((2, 5))) == pytest.approx(
            svdvals(np.ones((2, 5)))[0], rel=1e-9
        )


class TestErrorBound:
    def test_identity_map(self):
        d = AffineDecomp(gamma=np.eye(3), b=np.array([1.0, 2.0, 2.0]), pattern=[])
        bound, actual = recon_error_bound(d, np.array([5.0, -1.0, 0.5]))
        assert bound == pytest.approx(3.0, abs=1e-12)
        assert actual == pytest.approx(3.0, abs=1e-12)

    def test_zero_map(self):
        d = AffineDecomp(gamma=np.zeros((3, 3)), b=np.zeros(3), pattern=[])
        x = np.array([3.0, 0.0, 4.0])
        bound, actual = recon_error_bound(d, x)
        assert actual == pytest.approx(5.0, abs=1e-12)
        assert bound == pytest.approx(5.0, abs=1e-9)

    def test_bound_holds_over_sweep(self):
        rng = np.random.default_rng(10)
        for trial in range(100):
            n = int(rng.integers(3, 9))
            layers = relu_stack(rng, [n, n + 4, n + 4, n])
            for _ in range(10):
                x = rng.normal(size=n) * rng.uniform(0.1, 10.0)
                d = decompose(layers, x)
                bound, actual = recon_error_bound(d, x)
                assert actual <= bound + 1e-9

    def test_frobenius_variant_weaker(self):
        rng = np.random.default_rng(11)
        layers = relu_stack(rng, [5, 9, 9, 5])
        x = rng.normal(size=5)
        d = decompose(layers, x)
        b_s, a_s = recon_error_bound(d, x, norm="spectral")
        b_f, a_f = recon_error_bound(d, x, norm="frobenius")
        assert a_s == a_f
        assert b_f >= b_s - 1e-12

    def test_non_square_rejected(self):
        d = AffineDecomp(gamma=np.ones((2, 3)), b=np.zeros(2), pattern=[])
        with pytest.raises(DimensionError):
            recon_error_bound(d, np.ones(3))


class TestNormBias:
    def make_model(self, seed=12):
        rng = np.random.default_rng(seed)
        W, d1, d2 = random_detector_parts(rng, 8, 3, 10)
        return TinyModel(W, d1, d2)

    def test_zero_norm_row(self):
        model = self.make_model()
        rows = norm_bias_demo(model, [0.0], n_directions=16)
        assert rows[0].mean_nl2 is None
        dec0, _ = forward(model.d1, np.zeros(3))
        assert rows[0].mean_l2 == pytest.approx(float(np.linalg.norm(dec0)), rel=1e-12)

    def test_l2_grows_nl2_stabilizes(self):
        model = self.make_model()
        rows = norm_bias_demo(model, [1.0, 100.0, 1000.0], n_directions=32)
        assert rows[1].mean_l2 > rows[0].mean_l2
        assert rows[2].mean_l2 > 50.0 * rows[0].mean_l2
        # far from the origin the map is positively homogeneous, so the
        # normalized error settles
        assert rows[2].mean_nl2 == pytest.approx(rows[1].mean_nl2, rel=0.25)

    def test_direction_scale_cannot_matter(self):
        model = self.make_model()
        rng = np.random.default_rng(13)
        dirs = np.abs(rng.normal(size=(8, 8)))
        a = norm_bias_demo(model, [1.0, 5.0], directions=dirs)
        b = norm_bias_demo(model, [1.0, 5.0], directions=4.0 * dirs)
        for ra, rb in zip(a, b):
            assert ra.mean_l2 == rb.mean_l2
            assert ra.mean_nl2 == rb.mean_nl2
        c = norm_bias_demo(model, [1.0, 5.0], directions=3.7 * dirs)
        for ra, rc in zip(a, c):
            assert ra.mean_l2 == pytest.approx(rc.mean_l2, rel=1e-12)

    def test_default_directions_deterministic(self):
        model = self.make_model()
        a = norm_bias_demo(model, [2.0], seed=5)
        b = norm_bias_demo(model, [2.0], seed=5)
        c = norm_bias_demo(model, [2.0], seed=6)
        assert a[0].mean_l2 == b[0].mean_l2
        assert a[0].mean_l2 != c[0].mean_l2

    def test_bad_directions(self):
        model = self.make_model()
        with pytest.raises(DimensionError):
            norm_bias_demo(model, [1.0], directions=np.ones((4, 7)))
        with pytest.raises(DimensionError):
            norm_bias_demo(model, [1.0], directions=np.zeros((2, 8)))
        with pytest.raises(DimensionError):
            norm_bias_demo(model, [-1.0])
