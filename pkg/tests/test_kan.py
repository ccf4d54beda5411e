"""B-spline basis, KAN edges and network forward/backward passes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arkan.errors import InputError, NumericalError
from arkan.kan import (
    KanEdge,
    KanLayer,
    KanNetwork,
    SplineGrid,
    bspline_basis,
    bspline_basis_and_grad,
    edge_eval,
    init_kan,
    kan_backward,
    kan_forward,
    silu,
    silu_grad,
    zeros_kan,
)


def cox_de_boor_reference(x, knots, degree):
    """Textbook recursion for one point, half-open spans with the last span closed."""
    n = len(knots) - degree - 1
    t = knots
    B = np.zeros(len(t) - 1)
    for i in range(len(t) - 1):
        if t[i] <= x < t[i + 1] or (x == t[-1] and t[i] < t[i + 1] == t[-1]):
            B[i] = 1.0
    for k in range(1, degree + 1):
        nxt = np.zeros(len(t) - 1 - k)
        for i in range(len(nxt)):
            left = 0.0 if t[i + k] == t[i] else (x - t[i]) / (t[i + k] - t[i]) * B[i]
            right = 0.0 if t[i + k + 1] == t[i + 1] else (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * B[i + 1]
            nxt[i] = left + right
        B = nxt
    return B[:n]


def random_net(widths, rng, grid=None):
    grid = grid or SplineGrid()
    layers = [
        KanLayer(rng.normal(0, 0.5, (a, b, grid.n_basis)), rng.normal(0, 0.5, (a, b)), rng.normal(0, 0.5, (a, b)))
        for a, b in zip(widths[:-1], widths[1:])
    ]
    return KanNetwork(list(widths), layers, grid)


def flat(arrays):
    return np.concatenate([np.ravel(a) for a in arrays])


def numeric_param_grad(net, x, upstream, h=1e-5):
    params = [p.copy() for p in net.params()]
    grads = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            for sign in (1, -1):
                trial = [q.copy() for q in params]
                trial[i][idx] += sign * h
                net.set_params(trial)
                g[idx] += sign * np.sum(upstream * kan_forward(net, x)[0]) / (2 * h)
        grads.append(g)
    net.set_params(params)
    return grads


class TestGrid:
    def test_knot_count(self):
        for G in range(1, 6):
            for k in range(1, 4):
                g = SplineGrid(-1.0, 2.0, G, k)
                assert g.knots.size == G + 2 * k + 1
                assert g.n_basis == G + k

    def test_invalid(self):
        with pytest.raises(InputError):
            SplineGrid(1.0, 1.0)
        with pytest.raises(InputError):
            SplineGrid(intervals=0)
        with pytest.raises(InputError):
            SplineGrid(degree=0)


class TestBasis:
    @pytest.mark.parametrize("G", [1, 2, 3, 4, 5])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_partition_of_unity(self, G, k):
        grid = SplineGrid(-3.0, 3.0, G, k)
        x = np.random.default_rng(G * 10 + k).uniform(-3.0, 3.0, 1000)
        np.testing.assert_allclose(bspline_basis(x, grid).sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("G", [1, 2, 3, 4, 5])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_local_support(self, G, k):
        grid = SplineGrid(-3.0, 3.0, G, k)
        t = grid.knots
        x = np.r_[np.random.default_rng(k).uniform(-3.0, 3.0, 500), t[k : G + k + 1]]
        B = bspline_basis(x, grid)
        for c in range(grid.n_basis):
            outside = (x < t[c]) | (x > t[c + k + 1])
            assert np.all(B[outside, c] == 0.0)

    @pytest.mark.parametrize("G, k", [(1, 1), (3, 3), (5, 2), (4, 3)])
    def test_matches_reference_recursion(self, G, k):
        grid = SplineGrid(-2.0, 1.0, G, k)
        for x in np.r_[np.linspace(-2.0, 1.0, 37), [-2.0, 1.0]]:
            np.testing.assert_allclose(bspline_basis(x, grid), cox_de_boor_reference(x, grid.knots, k), atol=1e-12)

    def test_clamped_endpoint(self):
        grid = SplineGrid()
        B = bspline_basis(-3.0, grid)
        np.testing.assert_array_equal(B, np.eye(1, grid.n_basis, 0)[0])

    def test_hat_functions(self):
        grid = SplineGrid(0.0, 1.0, 2, 1)
        np.testing.assert_allclose(bspline_basis(0.25, grid), [0.5, 0.5, 0.0], atol=1e-15)

    def test_derivative_by_finite_difference(self):
        grid = SplineGrid(-3.0, 3.0, 3, 3)
        x = np.random.default_rng(2).uniform(-5.0, 5.0, 300)
        _, dB = bspline_basis_and_grad(x, grid)
        h = 1e-6
        num = (bspline_basis(x + h, grid) - bspline_basis(x - h, grid)) / (2 * h)
        np.testing.assert_allclose(dB, num, atol=1e-6)

    def test_affine_extrapolation(self):
        grid = SplineGrid()
        B_hi, dB_hi = bspline_basis_and_grad(3.0, grid)
        np.testing.assert_allclose(bspline_basis(4.5, grid), B_hi + 1.5 * dB_hi, atol=1e-12)
        B_lo, dB_lo = bspline_basis_and_grad(-3.0, grid)
        np.testing.assert_allclose(bspline_basis(-3.25, grid), B_lo - 0.25 * dB_lo, atol=1e-12)

    def test_nonfinite(self):
        with pytest.raises(InputError):
            bspline_basis(np.nan, SplineGrid())

    def test_shape_preserved(self):
        assert bspline_basis(np.zeros((4, 5)), SplineGrid()).shape == (4, 5, 6)


class TestEdge:
    def test_zero_edge(self):
        grid = SplineGrid()
        edge = KanEdge(np.zeros(grid.n_basis), 0.0, 1.0)
        np.testing.assert_array_equal(edge_eval(edge, grid, np.linspace(-5, 5, 11)), 0.0)

    def test_constant_spline(self):
        grid = SplineGrid()
        edge = KanEdge(np.full(grid.n_basis, 0.7), 0.0, 1.0)
        np.testing.assert_allclose(edge_eval(edge, grid, np.linspace(-3, 3, 13)), 0.7, atol=1e-12)

    def test_silu_at_zero(self):
        grid = SplineGrid()
        assert edge_eval(KanEdge(np.zeros(grid.n_basis), 1.0, 2.0), grid, 0.0) == 0.0

    def test_formula(self):
        grid = SplineGrid()
        rng = np.random.default_rng(0)
        edge = KanEdge(rng.normal(size=grid.n_basis), 0.3, -1.7)
        x = rng.uniform(-4, 4, 20)
        expected = -1.7 * (0.3 * x / (1 + np.exp(-x)) + bspline_basis(x, grid) @ edge.spline_coeffs)
        np.testing.assert_allclose(edge_eval(edge, grid, x), expected, rtol=1e-12)

    def test_wrong_coefficient_count(self):
        with pytest.raises(InputError):
            edge_eval(KanEdge(np.zeros(3)), SplineGrid(), 0.0)

    def test_silu_grad(self):
        x = np.linspace(-6, 6, 101)
        h = 1e-6
        np.testing.assert_allclose(silu_grad(x), (silu(x + h) - silu(x - h)) / (2 * h), atol=1e-8)


class TestForward:
    def test_matches_edge_sum(self):
        rng = np.random.default_rng(1)
        net = random_net([3, 4, 2], rng)
        x = rng.normal(size=3)
        h = np.array([sum(edge_eval(net.layers[0].edge(i, j), net.grid, x[i]) for i in range(3)) for j in range(4)])
        out = np.array([sum(edge_eval(net.layers[1].edge(i, j), net.grid, h[i]) for i in range(4)) for j in range(2)])
        np.testing.assert_allclose(kan_forward(net, x)[0], out, rtol=1e-12)

    def test_zero_network(self):
        net = zeros_kan([5, 3, 1])
        np.testing.assert_array_equal(kan_forward(net, np.random.default_rng(0).normal(size=(7, 5)))[0], 0.0)

    def test_constant_edges_sum(self):
        grid = SplineGrid()
        layer = KanLayer(np.full((2, 1, grid.n_basis), 0.4), np.zeros((2, 1)), np.ones((2, 1)))
        net = KanNetwork([2, 1], [layer], grid)
        np.testing.assert_allclose(kan_forward(net, [0.3, -1.2])[0], [0.8], atol=1e-12)

    def test_identity_by_spline_fit(self):
        grid = SplineGrid()
        xs = np.linspace(-1.0, 1.0, 201)
        coef = np.linalg.lstsq(bspline_basis(xs, grid), xs, rcond=None)[0]
        net = KanNetwork([1, 1], [KanLayer(coef[None, None, :], np.zeros((1, 1)), np.ones((1, 1)))], grid)
        out = kan_forward(net, xs[:, None])[0][:, 0]
        assert np.max(np.abs(out - xs)) < 1e-3

    def test_batch_equals_single(self):
        rng = np.random.default_rng(2)
        net = random_net([4, 3, 1], rng)
        X = rng.normal(size=(6, 4))
        batch = kan_forward(net, X)[0]
        for i in range(6):
            np.testing.assert_allclose(kan_forward(net, X[i])[0], batch[i], rtol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            kan_forward(zeros_kan([3, 1]), np.zeros(4))

    def test_nonfinite_reports_layer(self):
        net = random_net([2, 2, 1], np.random.default_rng(3))
        net.layers[1].mix[0, 0] = np.inf
        with pytest.raises(NumericalError, match="layer 1"):
            kan_forward(net, [0.5, 0.5])

    def test_deterministic(self):
        net = init_kan([20, 50, 1], rng=np.random.default_rng(4))
        X = np.random.default_rng(5).normal(size=(10, 20))
        np.testing.assert_array_equal(kan_forward(net, X)[0], kan_forward(net, X)[0])

    def test_init_scales(self):
        net = init_kan([20, 50, 1], rng=np.random.default_rng(6))
        layer = net.layers[0]
        assert np.all(layer.base == 1.0)
        assert abs(layer.coef.std() - 0.1 / np.sqrt(6)) < 0.005
        assert abs(layer.mix.std() - 1 / np.sqrt(20)) < 0.02


class TestBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(0)
        net = random_net([3, 2, 1], rng)
        out, cache = kan_forward(net, rng.normal(size=(4, 3)))
        grads, gx = kan_backward(net, cache, np.zeros_like(out))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(gx == 0)

    def test_mix_gradient_single_edge(self):
        grid = SplineGrid()
        rng = np.random.default_rng(1)
        layer = KanLayer(rng.normal(size=(1, 1, grid.n_basis)), np.array([[0.7]]), np.array([[1.3]]))
        net = KanNetwork([1, 1], [layer], grid)
        x = np.array([0.4])
        out, cache = kan_forward(net, x)
        grads, _ = kan_backward(net, cache, np.array([2.5]))
        pre_mix = edge_eval(KanEdge(layer.coef[0, 0], 0.7, 1.0), grid, 0.4)
        np.testing.assert_allclose(grads[2][0, 0], 2.5 * pre_mix, rtol=1e-12)

    def test_random_nets_match_finite_differences(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(100):
            widths = [int(rng.integers(1, 4)), int(rng.integers(1, 4)), 1]
            net = random_net(widths, rng)
            # inputs span both sides of the grid so extrapolated points are covered
            x = rng.uniform(-4.0, 4.0, size=(2, widths[0]))
            upstream = rng.normal(size=(2, 1))
            out, cache = kan_forward(net, x)
            grads, gx = kan_backward(net, cache, upstream)
            num = numeric_param_grad(net, x, upstream)
            a, b = flat(grads), flat(num)
            worst = max(worst, np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))
            h = 1e-5
            num_x = np.zeros_like(x)
            for idx in np.ndindex(x.shape):
                e = np.zeros_like(x)
                e[idx] = h
                num_x[idx] = np.sum(upstream * (kan_forward(net, x + e)[0] - kan_forward(net, x - e)[0])) / (2 * h)
            worst = max(worst, np.linalg.norm(gx - num_x) / max(np.linalg.norm(num_x), 1e-12))
        assert worst < 1e-4

    def test_cache_mismatch(self):
        net = random_net([2, 2, 1], np.random.default_rng(3))
        _, cache = kan_forward(net, [0.1, 0.2])
        with pytest.raises(InputError):
            kan_backward(net, cache[:1], np.ones(1))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_linearity_in_upstream(self, seed):
        rng = np.random.default_rng(seed)
        net = random_net([3, 2, 2], rng)
        out, cache = kan_forward(net, rng.normal(size=(3, 3)))
        u, v = rng.normal(size=out.shape), rng.normal(size=out.shape)
        gu, gxu = kan_backward(net, cache, u)
        gv, gxv = kan_backward(net, cache, v)
        guv, gxuv = kan_backward(net, cache, u + v)
        np.testing.assert_allclose(flat(guv), flat(gu) + flat(gv), atol=1e-10)
        np.testing.assert_allclose(gxuv, gxu + gxv, atol=1e-10)


class TestNetworkPlumbing:
    def test_params_round_trip(self):
        rng = np.random.default_rng(0)
        net = random_net([2, 3, 1], rng)
        other = zeros_kan([2, 3, 1])
        other.set_params(net.params())
        x = rng.normal(size=(4, 2))
        np.testing.assert_array_equal(kan_forward(other, x)[0], kan_forward(net, x)[0])

    def test_copy_is_deep(self):
        net = random_net([2, 1], np.random.default_rng(1))
        clone = net.copy()
        clone.layers[0].coef[...] = 0
        assert np.any(net.layers[0].coef != 0)

    def test_layer_shape_check(self):
        grid = SplineGrid()
        with pytest.raises(InputError):
            KanNetwork([2, 1], [KanLayer(np.zeros((3, 1, 6)), np.zeros((3, 1)), np.zeros((3, 1)))], grid)

    def test_no_base_activation(self):
        rng = np.random.default_rng(2)
        net = random_net([2, 1], rng)
        net.base_activation = "none"
        x = rng.normal(size=2)
        expected = sum(net.layers[0].mix[i, 0] * bspline_basis(x[i], net.grid) @ net.layers[0].coef[i, 0] for i in range(2))
        np.testing.assert_allclose(kan_forward(net, x)[0][0], expected, rtol=1e-12)
