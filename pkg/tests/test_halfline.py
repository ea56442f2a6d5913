import math

import numpy as np
import pytest

from quasiparabolic.acceptance import builtin_symbols
from quasiparabolic.errors import ResourceError
from quasiparabolic.expansion import random_hardy_vectors
from quasiparabolic.halfline import (
    DiscreteOperator,
    HardyGrid,
    assemble_dense,
    dilation,
    dilation_roundtrip_bound,
    fourier_multiplier,
    identity,
    operator_norm_estimate,
    project_hardy,
    read_matrix_binary,
    read_matrix_csv,
    theta_n,
    theta_n_sup,
    toeplitz,
    write_matrix_binary,
    write_matrix_csv,
)
from quasiparabolic.symbols import MoebiusDecay


@pytest.fixture(scope="module")
def small():
    return HardyGrid(64, 10.0)


@pytest.fixture(scope="module")
def default_grid():
    return HardyGrid()


def _rand(grid, seed=0, k=None):
    rng = np.random.default_rng(seed)
    shape = (grid.n_points,) if k is None else (grid.n_points, k)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestGrid:
    def test_duality(self):
        g = HardyGrid(2048, 200.0)
        assert math.isclose(g.dx * g.dt * g.n_points, 2 * math.pi)
        assert math.isclose(g.t_max, math.pi * 2048 / 400)
        assert math.isclose(g.dt, math.pi / 200)

    def test_partition(self, small):
        t = small.t
        assert np.all(t[: small.n_plus] >= 0) and np.all(t[small.n_plus:] < 0)
        assert np.array_equal(np.sort(t), small.t_max * np.linspace(-1, 1, small.n_points, endpoint=False))

    @pytest.mark.parametrize("n", [3, 100, 2])
    def test_power_of_two(self, n):
        with pytest.raises(ValueError):
            HardyGrid(n, 1.0)

    def test_basis_vector_is_plane_wave(self, small):
        j = 5
        e = small.embed(np.eye(small.n_plus)[j])
        f = small.to_space(e)
        assert np.allclose(f, np.exp(1j * small.t[j] * small.x) / math.sqrt(small.n_points), atol=1e-14)

    def test_unitary(self, small):
        f = _rand(small)
        assert math.isclose(np.linalg.norm(small.to_frequency(f)), np.linalg.norm(f), rel_tol=1e-13)
        assert np.allclose(small.to_space(small.to_frequency(f)), f, atol=1e-13)


class TestProjection:
    def test_negative_support_annihilated(self, small):
        f = _rand(small)
        f[: small.n_plus] = 0
        assert np.all(project_hardy(f) == 0)

    def test_positive_support_unchanged(self, small):
        f = _rand(small)
        f[small.n_plus:] = 0
        assert np.array_equal(project_hardy(f), f)

    def test_orthogonal_complement(self, small):
        v = _rand(small)
        pv = project_hardy(v)
        assert abs(np.vdot(pv, v - pv)) < 1e-12

    def test_idempotent_and_contractive(self, small):
        v = _rand(small, k=3)
        pv = project_hardy(v)
        assert np.array_equal(project_hardy(pv), pv)
        assert np.all(np.linalg.norm(pv, axis=0) <= np.linalg.norm(v, axis=0))

    def test_hardy_membership(self, small):
        v = project_hardy(_rand(small))
        assert small.is_hardy(v) and small.negative_energy_fraction(v) == 0
        assert not small.is_hardy(_rand(small))


class TestFourierMultiplier:
    def test_one_is_identity(self, small):
        A = assemble_dense(fourier_multiplier(lambda t: np.ones_like(t), small))
        assert np.array_equal(A, np.eye(small.n_plus))

    def test_translation_by_i(self, small):
        D = fourier_multiplier(lambda t: np.exp(1j * 1j * t), small)
        assert np.allclose(D.diagonal, np.exp(-small.t_plus))
        assert math.isclose(operator_norm_estimate(D), 1.0, rel_tol=1e-6)

    def test_homomorphism(self, small):
        th1 = lambda t: np.exp(-0.3 * t) * np.cos(t)
        th2 = lambda t: 1 / (1 + t**2)
        A = assemble_dense(fourier_multiplier(th1, small) @ fourier_multiplier(th2, small))
        B = assemble_dense(fourier_multiplier(lambda t: th1(t) * th2(t), small))
        assert np.allclose(A, B, rtol=1e-15, atol=0)

    def test_adjoint_is_conjugate(self, small):
        th = lambda t: np.exp((-0.2 + 1j) * t)
        D = fourier_multiplier(th, small)
        Dc = fourier_multiplier(lambda t: np.conj(th(t)), small)
        assert np.array_equal(assemble_dense(D).conj().T, assemble_dense(Dc))
        assert np.array_equal(assemble_dense(D.H), assemble_dense(Dc))

    def test_dense_is_diagonal(self, small):
        th = lambda t: np.exp(-t)
        A = assemble_dense(fourier_multiplier(th, small))
        assert np.array_equal(A, np.diag(th(small.t_plus).astype(complex)))

    def test_rejects_non_finite(self, small):
        with pytest.raises(ValueError), np.errstate(divide="ignore"):
            fourier_multiplier(lambda t: 1 / t, small)

    def test_norm_identity(self, default_grid):
        th = lambda t: (1 + 2j) * np.exp(-0.5 * (t - 3) ** 2)
        nrm = operator_norm_estimate(fourier_multiplier(th, default_grid))
        assert abs(nrm - np.abs(th(default_grid.t_plus)).max()) <= 1e-6 * nrm


class TestTheta:
    def test_theta0(self):
        assert theta_n(0, 2.0)(0.0) == 1
        assert np.allclose(theta_n(0, 2.0)(np.array([1.0, 2.0])), np.exp([-2.0, -4.0]))

    @pytest.mark.parametrize("n", [1, 2, 7])
    def test_zero_at_origin(self, n):
        assert theta_n(n, 1.3)(0.0) == 0

    def test_sup_n1(self):
        t = np.linspace(0, 20, 200001)
        v = np.abs(theta_n(1, 1.0)(t))
        assert math.isclose(v.max(), 1 / math.e, rel_tol=1e-9)
        assert abs(t[np.argmax(v)] - 1.0) < 1e-3
        assert math.isclose(theta_n_sup(1, 1.0), 1 / math.e)

    def test_sup_formula(self):
        t = np.linspace(0, 80, 400001)
        for n, a in [(2, 0.7), (5, 1.0), (10, 2.5)]:
            assert math.isclose(np.abs(theta_n(n, a)(t)).max(), theta_n_sup(n, a), rel_tol=1e-6)
            assert theta_n_sup(n, a) <= a**-n

    def test_phase(self):
        assert np.isclose(theta_n(1, 1.0)(1.0), -1j / math.e)

    def test_vanishes_at_infinity(self):
        assert abs(theta_n(30, 1.0)(1e4)) == 0.0


class TestToeplitz:
    def test_constant_symbol(self, small):
        c = 0.7 - 0.2j
        A = assemble_dense(toeplitz(np.full(small.n_points, c), small))
        assert np.allclose(A, c * np.eye(small.n_plus), atol=1e-15)

    def test_modulation_shifts_bins(self, small):
        k = 3
        a = np.exp(1j * small.dt * k * small.x)
        T = toeplitz(a, small)
        for j in range(small.n_plus - k):
            out = T(small.embed(np.eye(small.n_plus)[j]))
            expect = small.embed(np.eye(small.n_plus)[j + k])
            assert np.allclose(out, expect, atol=1e-13)

    def test_norm_bounded_by_sup(self, small):
        rng = np.random.default_rng(3)
        a = rng.standard_normal(small.n_points) + 1j * rng.standard_normal(small.n_points)
        A = assemble_dense(toeplitz(a, small))
        assert np.linalg.norm(A, 2) <= np.abs(a).max() * (1 + 1e-12)

    def test_norm_constant_case_equality(self, small):
        A = assemble_dense(toeplitz(np.full(small.n_points, 2.5j), small))
        assert math.isclose(np.linalg.norm(A, 2), 2.5, rel_tol=1e-13)

    def test_finite_section_is_toeplitz_matrix(self, small):
        a = np.cos(small.x) + 0.3j * np.sin(2 * small.x) ** 2
        A = assemble_dense(toeplitz(a, small))
        for d in range(-5, 6):
            diag = np.diagonal(A, d)
            assert np.allclose(diag, diag[0], atol=1e-14)

    def test_adjoint(self, small):
        a = np.exp(1j * small.x / 3) * (1 + 0.2 * np.cos(small.x))
        T = toeplitz(a, small)
        assert np.allclose(assemble_dense(T.H), assemble_dense(T).conj().T, atol=1e-14)


LEAK_REASON = (
    "sin(log x) oscillates without bound near x = 0, so its grid samples alias into t < 0 "
    "(measured leak ~6e-6 for log_oscillation, ~2e-6 for the sum containing it)"
)
LEAKY = {"log_oscillation", "sum"}


@pytest.mark.parametrize("family", [
    pytest.param(f, marks=pytest.mark.xfail(strict=True, reason=LEAK_REASON)) if f in LEAKY else f
    for f in sorted(builtin_symbols())
])
def test_toeplitz_projection_leak(default_grid, family):
    """Multiplying a Hardy vector by an analytic boundary trace loses <= 1e-6 of its energy to t < 0."""
    g = default_grid
    a = builtin_symbols()[family].boundary_values(g.x)
    V = random_hardy_vectors(g, 8)
    prod = g.to_frequency(a[:, None] * g.to_space(V))
    leak = np.sum(np.abs(prod[g.n_plus:]) ** 2, axis=0) / np.sum(np.abs(V) ** 2, axis=0)
    assert leak.max() <= 1e-6


class TestDilation:
    def test_identity(self, small):
        f = project_hardy(_rand(small))
        assert np.allclose(dilation(1.0, small)(f), f)

    def test_single_bin(self, small):
        # (V_p f)^(t) = f^(t / p) / p: bin j lands on bin p j with amplitude 1/p
        j = 5
        out = dilation(2.0, small)(small.embed(np.eye(small.n_plus)[j]))
        assert np.argmax(np.abs(out)) == 2 * j
        assert math.isclose(abs(out[2 * j]), 0.5)
        assert math.isclose(np.sum(np.abs(out)), 1.0)

    @pytest.mark.parametrize("p", [2.0, 1.5])
    def test_round_trip(self, default_grid, p):
        g = default_grid
        V = random_hardy_vectors(g, 4)
        W = dilation(p, g)(dilation(1 / p, g)(V))
        err = np.linalg.norm(W - V, axis=0)
        assert np.all(err <= dilation_roundtrip_bound(V, p, g))

    def test_round_trip_smooth(self, default_grid):
        # spectrum smooth on the bin scale: the round trip is nearly exact
        g = default_grid
        v = g.embed(np.exp(-((g.t_plus - 3.0) ** 2)))
        err = np.linalg.norm(dilation(2.0, g)(dilation(0.5, g)(v)) - v)
        assert err <= dilation_roundtrip_bound(v, 2.0, g) and err < 1e-3 * np.linalg.norm(v)

    def test_truncation_flag(self, small):
        assert dilation(2.0, small).metadata["truncated"]
        assert not dilation(0.5, small).metadata["truncated"]

    def test_rejects_nonpositive(self, small):
        with pytest.raises(ValueError):
            dilation(0.0, small)


class TestAssembly:
    def test_identity(self, small):
        assert np.array_equal(assemble_dense(identity(small)), np.eye(small.n_plus))

    def test_column_order_independent(self, small):
        a = np.exp(1j * small.x / 2)
        T = toeplitz(a, small) @ fourier_multiplier(lambda t: np.exp(-t), small)
        assert np.array_equal(assemble_dense(T, chunk=7), assemble_dense(T, chunk=32))

    def test_memory_cap(self, small):
        with pytest.raises(ResourceError):
            assemble_dense(identity(small), memory_cap=100)

    def test_linearity(self, small):
        a = np.exp(1j * small.x / 2)
        T = toeplitz(a, small)
        f, g = project_hardy(_rand(small, 1)), project_hardy(_rand(small, 2))
        assert np.allclose(T(2 * f - 3j * g), 2 * T(f) - 3j * T(g), atol=1e-13)

    def test_from_matrix(self, small):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((small.n_plus, small.n_plus)) + 0j
        op = DiscreteOperator.from_matrix(small, A)
        assert np.array_equal(assemble_dense(op), A)


class TestNormEstimate:
    def test_identity(self, small):
        assert math.isclose(operator_norm_estimate(identity(small)), 1.0, rel_tol=1e-10)

    def test_known_small_matrix(self):
        A = np.array([[3.0, 1.0], [0.0, 2.0]])
        s = np.linalg.svd(A, compute_uv=False)[0]
        assert abs(operator_norm_estimate(A) - s) < 1e-6

    def test_larger_matrix(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((60, 60)) + 1j * rng.standard_normal((60, 60))
        s = np.linalg.svd(A, compute_uv=False)[0]
        assert abs(operator_norm_estimate(A) - s) <= 1e-6 * s

    def test_deterministic(self, small):
        op = toeplitz(np.exp(1j * small.x), small) @ fourier_multiplier(lambda t: np.exp(-t), small)
        assert operator_norm_estimate(op) == operator_norm_estimate(op)


class TestMatrixIO:
    def test_binary_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        A = rng.standard_normal((17, 17)) + 1j * rng.standard_normal((17, 17))
        p = tmp_path / "m.bin"
        write_matrix_binary(p, A)
        assert np.array_equal(read_matrix_binary(p), A)
        raw = p.read_bytes()
        assert int.from_bytes(raw[:8], "little") == 17 and len(raw) == 8 + 16 * 17 * 17

    def test_csv_round_trip(self, tmp_path):
        A = np.array([[1 + 2j, 0.1], [-3e-300j, np.pi]])
        p = tmp_path / "m.csv"
        write_matrix_csv(p, A)
        assert p.read_text().splitlines()[0] == "row,col,re,im"
        assert np.array_equal(read_matrix_csv(p), A)


def test_commutator_decay(default_grid):
    """[T_a, D_{exp(-t)}] restricted to t >= t_cut shrinks from T_max/8 to T_max/2."""
    g = default_grid
    a = MoebiusDecay(2j, -2j, 1.0).boundary_values(g.x)
    T = assemble_dense(toeplitz(a, g))
    d = np.exp(-g.t_plus)
    C = T * d[None, :] - d[:, None] * T
    norms = [np.linalg.norm(C[:, g.t_plus >= g.t_max * f], 2) for f in (1 / 8, 1 / 4, 1 / 2)]
    assert norms[0] > norms[1] > norms[2]
