import math

import numpy as np
import pytest

from quasiparabolic.errors import EigensolverError
from quasiparabolic.expansion import finite_section
from quasiparabolic.halfline import HardyGrid
from quasiparabolic.spectra import (
    PseudospectrumEvaluator,
    compare,
    eigenvalues,
    essential_normality_diagnostic,
    hausdorff,
    max_pseudospectrum_indicator,
    predict_essential_spectrum,
    pseudospectrum_indicator,
    read_points_csv,
    write_points_csv,
)
from quasiparabolic.symbols import Constant, PointCloud

RES = 0.01


def spiral_reference(a, t_end=60.0, n=400_000):
    t = np.linspace(0, t_end, n)
    return np.concatenate([np.exp(1j * a * t), [0]])


class TestPredict:
    def test_segment(self):
        pred = predict_essential_spectrum(PointCloud([1j]), 0.5, RES)
        assert np.all(np.abs(pred.points.imag) <= RES)
        assert 0 in pred.points and 1 in pred.points
        assert hausdorff(pred.points, np.linspace(0, 1, 2001)) <= RES

    def test_spiral(self):
        pred = predict_essential_spectrum(PointCloud([1 + 1j]), 0.5, RES)
        ref = spiral_reference(1 + 1j)
        assert hausdorff(pred, ref) <= RES
        # winds: points in every quadrant
        for sx in (1, -1):
            for sy in (1, -1):
                assert np.any((np.sign(pred.points.real) == sx) & (np.sign(pred.points.imag) == sy))

    @pytest.mark.parametrize("a", [1j, 0.3 + 2j, -2 + 0.5j, 5 + 1j])
    def test_single_generator_spiral(self, a):
        pred = predict_essential_spectrum(PointCloud([a]), min(0.5, a.imag), RES)
        assert hausdorff(pred, spiral_reference(a, t_end=-math.log(RES * 1e-2) / a.imag)) <= RES

    def test_scaling(self):
        p1 = predict_essential_spectrum(PointCloud([1j]), 0.5, RES)
        p2 = predict_essential_spectrum(PointCloud([2j]), 0.5, RES)
        assert hausdorff(p1, p2) <= RES

    def test_union(self):
        pred = predict_essential_spectrum(PointCloud([1j, 1 + 1j]), 0.5, RES)
        ref = np.concatenate([spiral_reference(1j), spiral_reference(1 + 1j)])
        assert hausdorff(pred, ref) <= RES

    def test_in_closed_disc(self):
        pred = predict_essential_spectrum(PointCloud([3 + 0.6j, -1 + 2j]), 0.5, RES)
        assert np.abs(pred.points).max() <= 1

    def test_generator_below_eps(self):
        with pytest.raises(ValueError):
            predict_essential_spectrum(PointCloud([0.1j]), 0.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            predict_essential_spectrum(PointCloud(np.zeros(0, complex)), 0.5)


class TestEigenvalues:
    def test_diagonal(self):
        ev = eigenvalues(np.diag([1, 2j, -3]))
        assert sorted(ev.points, key=lambda z: (z.real, z.imag)) == [-3, 2j, 1]

    def test_nilpotent(self):
        assert np.all(eigenvalues(np.array([[0, 1], [0, 0]])).points == 0)

    def test_companion(self):
        # companion matrix of lambda^2 - 1
        ev = eigenvalues(np.array([[0, 1], [1, 0]]))
        assert np.allclose(np.sort(ev.points.real), [-1, 1]) and np.allclose(ev.points.imag, 0)

    def test_non_finite(self):
        with pytest.raises(EigensolverError):
            eigenvalues(np.array([[np.nan, 0], [0, 1]]))

    def test_non_square(self):
        with pytest.raises(ValueError):
            eigenvalues(np.ones((2, 3)))


class TestPseudospectrum:
    def test_identity(self):
        assert pseudospectrum_indicator(np.eye(4), 1.0) == 0
        assert pseudospectrum_indicator(np.eye(4), 0.0) == pytest.approx(1)

    def test_diagonal(self):
        assert pseudospectrum_indicator(np.diag([2.0, 3.0]), 2.5) == pytest.approx(0.5)

    def test_zero_exactly_at_eigenvalues(self):
        d = np.array([0.5, 1j, -0.25 + 0.25j])
        A = np.diag(d)
        for lam in d:
            assert pseudospectrum_indicator(A, lam) == 0
        assert pseudospectrum_indicator(A, 0.3) > 0

    def test_evaluator_matches_svd(self):
        rng = np.random.default_rng(3)
        n = 120
        A = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(n)
        A += np.triu(np.ones((n, n)), 1) * 0.05
        ev = PseudospectrumEvaluator(A, dense_below=64)
        assert not ev.dense
        for lam in (0.0, 0.5 + 0.2j, -1.1j, 3.0):
            assert ev(lam) == pytest.approx(pseudospectrum_indicator(A, lam), rel=1e-6, abs=1e-12)

    @pytest.mark.parametrize("n", [20, 100])
    def test_branch_and_bound_matches_brute_force(self, n):
        rng = np.random.default_rng(n)
        A = np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(n)
        lam = rng.uniform(-2, 2, 150) + 1j * rng.uniform(-2, 2, 150)
        brute = max(pseudospectrum_indicator(A, z) for z in lam)
        best, arg, count = max_pseudospectrum_indicator(A, lam)
        assert best == pytest.approx(brute, rel=1e-6)
        assert pseudospectrum_indicator(A, arg) == pytest.approx(best, rel=1e-6)
        assert count <= lam.size


class TestHausdorff:
    def test_examples(self):
        assert hausdorff([0], [1]) == 1
        assert hausdorff([0, 1], [0]) == 1
        assert hausdorff([0, 1j], [1j, 0]) == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            hausdorff([], [1])


class TestCompare:
    def test_diagonal_containment_zero(self):
        d = np.exp(-np.linspace(0, 5, 30)) + 0j
        pred = predict_essential_spectrum(PointCloud([1j]), 0.5, RES)
        pred = type(pred)(pred.generators, pred.t_grid, d, RES)
        rep = compare(pred, np.diag(d), mode="containment", tolerance=1e-12)
        assert rep.containment_margin == 0 and rep.status == "pass"

    def test_status_inconclusive(self):
        pred = predict_essential_spectrum(PointCloud([1j]), 0.5, RES)
        A = np.diag([0.5j, -0.5j])
        assert compare(pred, A, tolerance=0.05).status == "fail"
        assert compare(pred, A, tolerance=0.05, qc_certified=False).status.startswith("inconclusive")

    def test_unknown_mode(self):
        pred = predict_essential_spectrum(PointCloud([1j]), 0.5, RES)
        with pytest.raises(ValueError):
            compare(pred, np.eye(2), mode="subset")

    def test_report_json(self):
        pred = predict_essential_spectrum(PointCloud([1j]), 0.5, RES)
        d = compare(pred, np.diag([0.0, 1.0]), mode="containment").to_dict()
        assert d["mode"] == "containment" and d["n_eigenvalues"] == 2

    def test_one_plus_i_containment(self):
        grid = HardyGrid()
        sym = Constant(1 + 1j, 0.5)
        _, A = finite_section(sym, grid, 1e-6)
        pred = predict_essential_spectrum(PointCloud([1 + 1j]), 0.5, RES)
        rep = compare(pred, A, mode="containment", tolerance=0.05)
        assert rep.containment_margin <= 0.05 and rep.status == "pass"


class TestNormality:
    def test_diagonal(self):
        out = essential_normality_diagnostic(np.diag([1, 2j, 3]))
        assert out["comm_norm"] == 0

    def test_jordan(self):
        out = essential_normality_diagnostic(np.array([[0, 1], [0, 0]]))
        assert out["comm_norm"] == pytest.approx(1)

    def test_translation_tails(self):
        # the translation by i is diagonal: the commutator vanishes to round-off
        grid = HardyGrid()
        _, A = finite_section(Constant(1j, 0.5), grid, 1e-6)
        out = essential_normality_diagnostic(A, t=grid.t_plus)
        assert out["comm_norm"] < 1e-14
        assert len(out["tail_comm_norms"]) == 3


def test_points_csv_roundtrip(tmp_path):
    pred = predict_essential_spectrum(PointCloud([1 + 1j]), 0.5, 0.05)
    ev = PointCloud([0.5 + 0.1j, -0.25j])
    path = tmp_path / "pts.csv"
    write_points_csv(path, pred, ev)
    back = read_points_csv(path)
    assert np.array_equal(back["predicted"], pred.points)
    assert np.array_equal(back["eigen"], ev.points)
