import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvp.kernels import (
    INV_SQRT_PI,
    KERNEL_NAMES,
    SURROGATE_FACTOR,
    Point,
    builtin_kernel,
    curvature_norm_bound,
    eval_lagrangian,
    inhomogeneous_constants,
    second_variation_block,
    signed_difference,
    surrogate_norm,
)

ALL_KERNELS = [builtin_kernel(n) for n in KERNEL_NAMES] + [builtin_kernel("gauss1d", {"fiber_dim": 2})]
coord = st.floats(-6, 6, allow_nan=False)


def _on_support(k, x):
    return np.array([x, 0.0]) if k.ambient_dim == 2 else np.array([x])


# -- construction ---------------------------------------------------------------


def test_gauss1d_defaults():
    k = builtin_kernel("gauss1d", {})
    assert (k.ambient_dim, k.fiber_dim, k.s) == (1, 1, 1.0)
    assert eval_lagrangian(k, 0.0, 0.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)
    assert eval_lagrangian(k, 0.0, 0.0) == pytest.approx(0.564190, abs=1e-6)


def test_inhomogeneous_alpha_zero_is_plain_gaussian():
    k = builtin_kernel("inhomogeneous1d", {"alpha": 0})
    assert k.params["beta"] == 0.0
    assert k.params["c"] == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)
    for x, y in [(0.0, 0.3), (1.2, -0.4)]:
        assert k.params["c"] * eval_lagrangian(k, x, y) == pytest.approx(
            eval_lagrangian(builtin_kernel("gauss1d"), x, y), rel=1e-14)


def test_inhomogeneous_alpha_half():
    k = builtin_kernel("inhomogeneous1d", {"alpha": 0.5})
    assert k.params["beta"] == -1.5
    assert k.params["c"] == pytest.approx(math.sqrt(2 / math.pi), rel=1e-15)
    assert 1 - 0.5 - k.params["beta"] == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("alpha", [-1.0, 0.0, 0.3, 0.9])
def test_closed_form_identity(alpha):
    beta, _ = inhomogeneous_constants(alpha)
    assert abs((1 - alpha - beta) - 1 / (1 - alpha)) < 1e-14


def test_derived_params_ignore_input():
    k = builtin_kernel("inhomogeneous1d", {"alpha": 0.5, "beta": 7.0, "c": 3.0})
    assert (k.params["beta"], k.params["c"]) == (-1.5, math.sqrt(2 / math.pi))


@pytest.mark.parametrize("name, params", [
    ("nope", {}),
    ("inhomogeneous1d", {"alpha": 1.0}),
    ("inhomogeneous1d", {"alpha": 2.5}),
    ("gauss1d", {"s": 0.0}),
    ("exp1d", {"s": -1.0}),
    ("gauss1d", {"fiber_dim": 3}),
    ("hyperplane2d", {"alpha": 0.1}),
])
def test_builtin_errors(name, params):
    with pytest.raises(ValueError):
        builtin_kernel(name, params)


def test_s_override_and_immutability():
    k = builtin_kernel("exp1d", {"s": 3.5})
    assert k.s == 3.5
    with pytest.raises(TypeError):
        k.params["s"] = 1.0
    with pytest.raises(AttributeError):
        k.s = 2.0


def test_point_validation():
    assert Point((1.0, 2.0)).dim == 2
    with pytest.raises(ValueError):
        Point((float("nan"),))
    with pytest.raises(ValueError):
        eval_lagrangian(builtin_kernel("gauss1d"), (0.0, 1.0), 0.0)


# -- evaluation -----------------------------------------------------------------


def test_hyperplane_value():
    k = builtin_kernel("hyperplane2d")
    assert eval_lagrangian(k, Point((0, 0)), Point((0, 1))) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-15)


@pytest.mark.parametrize("k", ALL_KERNELS, ids=lambda k: f"{k.name}-d{k.fiber_dim}")
@settings(max_examples=60, deadline=None)
@given(coord, coord, coord, coord)
def test_symmetry_and_nonnegativity(k, x0, y0, x1, y1):
    x = np.array([x0, y0])[: k.ambient_dim]
    y = np.array([x1, y1])[: k.ambient_dim]
    v = eval_lagrangian(k, x, y)
    assert v == eval_lagrangian(k, y, x)
    assert v >= 0


@pytest.mark.parametrize("k", [k for k in ALL_KERNELS if k.translation_invariant],
                         ids=lambda k: f"{k.name}-d{k.fiber_dim}")
@settings(max_examples=60, deadline=None)
@given(st.floats(0, 32), st.floats(0, 32))
def test_periodic_symmetry(k, a, b):
    x, y = _on_support(k, a), _on_support(k, b)
    assert eval_lagrangian(k, x, y, period=32.0) == eval_lagrangian(k, y, x, period=32.0)
    Bxy = second_variation_block(k, x, y, period=32.0).block
    Byx = second_variation_block(k, y, x, period=32.0).block
    d = k.fiber_dim
    swap = np.r_[np.arange(d, 2 * d), np.arange(d)]
    assert np.array_equal(Bxy, Byx[np.ix_(swap, swap)])


def test_signed_difference_antisymmetric():
    rng = np.random.default_rng(3)
    x, y = rng.uniform(-40, 40, (2, 1000))
    assert np.array_equal(signed_difference(x, y, 32.0), -signed_difference(y, x, 32.0))
    assert np.all(np.abs(signed_difference(x, y, 32.0)) <= 16.0)


def test_non_translation_invariant_rejects_period():
    k = builtin_kernel("nontrivial_weight2d")
    with pytest.raises(ValueError):
        eval_lagrangian(k, (0, 0), (1, 0), period=10.0)


# -- second-variation blocks --------------------------------------------------


def test_gauss_scalar_block():
    k = builtin_kernel("gauss1d")
    B = second_variation_block(k, 0.3, -0.5).block
    assert np.allclose(B, eval_lagrangian(k, 0.3, -0.5) * np.ones((2, 2)), rtol=1e-15, atol=0)


def test_hyperplane_block_on_diagonal():
    B = second_variation_block(builtin_kernel("hyperplane2d"), (1.0, 0.0), (1.0, 0.0)).block
    c = 1 / math.sqrt(math.pi)
    scalar = B[np.ix_([0, 2], [0, 2])]
    vector = B[np.ix_([1, 3], [1, 3])]
    coupling = B[np.ix_([0, 2], [1, 3])]
    assert np.allclose(scalar, c * np.ones((2, 2)), rtol=1e-15)
    assert np.allclose(vector, np.diag([2 * c, 2 * c]), rtol=1e-15)
    assert np.all(coupling == 0)


def test_nontrivial_vector_diagonals():
    x, xp = 1.5, -0.7
    B = second_variation_block(builtin_kernel("nontrivial_weight2d"), (x, 0), (xp, 0)).block
    K = math.exp(-((x - xp) ** 2)) / math.sqrt(math.pi)
    assert B[1, 1] == pytest.approx(2 * x * x * K, rel=1e-15)
    assert B[3, 3] == pytest.approx(2 * xp * xp * K, rel=1e-15)


@pytest.mark.parametrize("name", ["hyperplane2d", "nontrivial_weight2d"])
def test_block_off_support_raises(name):
    k = builtin_kernel(name)
    with pytest.raises(ValueError):
        second_variation_block(k, (0.0, 0.1), (0.0, 0.0))
    with pytest.raises(ValueError):
        curvature_norm_bound(k, (0.0, 0.0), (1.0, 0.5))


@pytest.mark.parametrize("k", ALL_KERNELS, ids=lambda k: f"{k.name}-d{k.fiber_dim}")
def test_block_exactly_symmetric(k):
    rng = np.random.default_rng(0)
    X = np.zeros((200, k.ambient_dim))
    Y = np.zeros((200, k.ambient_dim))
    X[:, 0], Y[:, 0] = rng.uniform(-5, 5, (2, 200))
    B = k.block(X, Y)
    assert np.array_equal(B, np.swapaxes(B, -1, -2))
    assert np.all(np.isfinite(B))


def _closed_form(k, x, xp, U, V):
    """Mixed jet derivative written out per family."""
    if k.fiber_dim == 1:
        return (U[0] + U[1]) * (V[0] + V[1]) * k.value(np.array([x]), np.array([xp]))
    a, u, ap, up = U
    b, v, bp, vp = V
    if k.name == "gauss1d":
        r = x - xp
        L = INV_SQRT_PI * math.exp(-r * r)
        L1, L2 = -2 * r * L, 2 * r * L
        L11 = L22 = (4 * r * r - 2) * L
        L12 = (2 - 4 * r * r) * L
        return ((a + ap) * (b + bp) * L + (a + ap) * (v * L1 + vp * L2) + (b + bp) * (u * L1 + up * L2)
                + u * v * L11 + (u * vp + up * v) * L12 + up * vp * L22)
    K = INV_SQRT_PI * math.exp(-((x - xp) ** 2))
    if k.name == "hyperplane2d":
        return K * ((a + ap) * (b + bp) + 2 * (u * v + up * vp))
    return K * ((a + ap) * (b + bp) + 2 * (u * v * x * x + up * vp * xp * xp) + 2 * (u * vp + up * v))


@pytest.mark.parametrize("k", ALL_KERNELS, ids=lambda k: f"{k.name}-d{k.fiber_dim}")
def test_block_consistency(k):
    rng = np.random.default_rng(11)
    d = k.fiber_dim
    for _ in range(1000):
        x, xp = rng.uniform(-4, 4, 2)
        U, V = rng.standard_normal((2, 2 * d))
        got = second_variation_block(k, _on_support(k, x), _on_support(k, xp)).pair(U, V)
        want = float(np.squeeze(_closed_form(k, x, xp, U, V)))
        scale = np.abs(U) @ np.abs(second_variation_block(k, _on_support(k, x), _on_support(k, xp)).block) @ np.abs(V)
        assert abs(got - want) <= 1e-12 * scale


@pytest.mark.parametrize("k", ALL_KERNELS, ids=lambda k: f"{k.name}-d{k.fiber_dim}")
def test_block_matches_finite_differences_of_L(k):
    """``U^T B V = d_s d_t [e^{s(a+a') + t(b+b')} L(x + s u e, x' + t v' e, ...)]`` at 0."""
    rng = np.random.default_rng(5)
    d = k.fiber_dim
    e = k.vector_direction
    step = 1e-4
    for _ in range(50):
        x, xp = rng.uniform(-3, 3, 2)
        U, V = rng.standard_normal((2, 2 * d))
        X0, Y0 = _on_support(k, x), _on_support(k, xp)

        def F(s, t):
            mult = math.exp(s * (U[0] + U[d]) + t * (V[0] + V[d]))
            X, Y = X0.copy(), Y0.copy()
            if d == 2:
                X = X + (s * U[1] + t * V[1]) * e
                Y = Y + (s * U[3] + t * V[3]) * e
            return mult * eval_lagrangian(k, X, Y)

        fd = (F(step, step) - F(step, -step) - F(-step, step) + F(-step, -step)) / (4 * step * step)
        exact = second_variation_block(k, X0, Y0).pair(U, V)
        scale = np.abs(U) @ np.abs(second_variation_block(k, X0, Y0).block) @ np.abs(V)
        assert abs(fd - exact) <= 1e-6 * max(scale, 1e-3)


# -- curvature bound ------------------------------------------------------------


def _pair_norm(W, d):
    return np.linalg.norm(W[:d]) + np.linalg.norm(W[d:])


@pytest.mark.parametrize("k", ALL_KERNELS, ids=lambda k: f"{k.name}-d{k.fiber_dim}")
def test_bound_validity(k):
    rng = np.random.default_rng(2)
    d = k.fiber_dim
    for _ in range(400):
        x, xp = rng.uniform(-5, 5, 2)
        X, Y = _on_support(k, x), _on_support(k, xp)
        B = second_variation_block(k, X, Y)
        bound = curvature_norm_bound(k, X, Y)
        U, V = rng.standard_normal((2, 2 * d))
        assert abs(B.pair(U, V)) <= bound * _pair_norm(U, d) * _pair_norm(V, d) * (1 + 1e-12)


def test_gauss_bound_is_L():
    k = builtin_kernel("gauss1d")
    assert curvature_norm_bound(k, 0.2, 1.1) == eval_lagrangian(k, 0.2, 1.1)


def test_hyperplane_bound_gaussian_envelope():
    k = builtin_kernel("hyperplane2d")
    for x, xp in [(0, 0), (0.5, -1), (3, 2.2)]:
        ratio = curvature_norm_bound(k, (x, 0), (xp, 0)) / math.exp(-((x - xp) ** 2))
        assert 0.5 < ratio < 2.0
        assert ratio == pytest.approx(2 / math.sqrt(math.pi), rel=1e-14)


def test_nontrivial_bound_envelope_and_attained():
    k = builtin_kernel("nontrivial_weight2d")
    rng = np.random.default_rng(8)
    lo, hi = 2 / (3 * math.sqrt(math.pi)), 2 / math.sqrt(math.pi)
    for x, xp in rng.uniform(-6, 6, (300, 2)):
        X, Y = (x, 0), (xp, 0)
        bound = curvature_norm_bound(k, X, Y)
        ratio = bound / ((1 + x * x + xp * xp) * math.exp(-((x - xp) ** 2)))
        assert lo * (1 - 1e-12) <= ratio <= hi * (1 + 1e-12)
        B = second_variation_block(k, X, Y)
        attained = max(abs(B.block[1, 1]), abs(B.block[3, 3]), abs(B.block[1, 3]))
        assert attained == pytest.approx(bound, rel=1e-14)


def test_surrogate_equivalence_factor():
    rng = np.random.default_rng(4)
    for _ in range(200):
        M = rng.standard_normal((4, 4))
        B = M + M.T
        s = surrogate_norm(B)
        ev, vec = np.linalg.eigh(B)
        top = vec[:, np.argmax(np.abs(ev))]
        attained = abs(top @ B @ top) / _pair_norm(top, 2) ** 2
        assert s / SURROGATE_FACTOR <= attained * (1 + 1e-12)
        assert attained <= s * (1 + 1e-12)


def test_full_fiber_uses_surrogate():
    k = builtin_kernel("gauss1d", {"fiber_dim": 2})
    B = second_variation_block(k, 0.0, 0.4).block
    assert curvature_norm_bound(k, 0.0, 0.4) == pytest.approx(np.max(np.abs(np.linalg.eigvalsh(B))), rel=1e-14)


def test_metric_scaling_in_surrogate():
    k = builtin_kernel("hyperplane2d")
    g = np.full((1, 1), 4.0)
    plain = curvature_norm_bound(k, (0, 0), (0.3, 0))
    scaled = curvature_norm_bound(k, (0, 0), (0.3, 0), gx=g, gy=g)
    # vector entries shrink by 1/4, scalar block stays
    K = math.exp(-0.09) / math.sqrt(math.pi)
    assert scaled == pytest.approx(2 * K, rel=1e-12)
    assert plain == pytest.approx(2 * K, rel=1e-14)
