"""Coefficient-field models: affine sine model, KL model, calibration."""

import math

import numpy as np
import pytest

from rdqmc.assembly import AssemblyPattern
from rdqmc.fields import (
    CovarianceSpec,
    LognormalKLModel,
    UniformAffineModel,
    calibrate_covariance,
    compute_kl,
    eval_lognormal,
    eval_uniform,
    fit_decay_slope,
    load_kl,
    save_kl,
)
from rdqmc.mesh import generate_structured

CENTER = np.array([[50.0, 50.0]])


@pytest.fixture(scope="module")
def uniform_model():
    return UniformAffineModel(dim=8, base_diffusion=0.05, base_growth=0.3, length=100.0)


@pytest.fixture(scope="module")
def brain_spec():
    return calibrate_covariance(180.0, 0.2336)


@pytest.fixture(scope="module")
def mesh10():
    return generate_structured(100.0, 10)


@pytest.fixture(scope="module")
def kl10(mesh10, brain_spec):
    return compute_kl(mesh10, brain_spec, 10, seed=3)


class TestUniformModel:
    def test_mean_field(self, uniform_model):
        a, kappa = eval_uniform(uniform_model, np.zeros(8), CENTER)
        assert a == pytest.approx(0.05, rel=1e-14)
        assert kappa == pytest.approx(0.3, rel=1e-14)

    def test_first_diffusion_coordinate(self, uniform_model):
        y = np.zeros(8)
        y[0] = 0.5
        a, _ = eval_uniform(uniform_model, y, CENTER)
        # 0.05 + 0.5 * 0.05 * 0.5 * sin(pi/2)^2 = 0.0625
        assert a == pytest.approx(0.0625, rel=1e-13)
        y[0] = -0.5
        a, _ = eval_uniform(uniform_model, y, CENTER)
        assert a == pytest.approx(0.0375, rel=1e-13)

    def test_interleaving_independence(self, uniform_model):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0.0, 100.0, size=(20, 2))
        y = rng.uniform(-0.5, 0.5, size=8)
        a0, k0 = uniform_model.evaluate(y, pts)
        y_odd = y.copy()
        y_odd[0::2] = rng.uniform(-0.5, 0.5, size=4)
        a1, k1 = uniform_model.evaluate(y_odd, pts)
        assert np.array_equal(k0, k1)
        assert not np.array_equal(a0, a1)
        y_even = y.copy()
        y_even[1::2] = rng.uniform(-0.5, 0.5, size=4)
        a2, k2 = uniform_model.evaluate(y_even, pts)
        assert np.array_equal(a0, a2)
        assert not np.array_equal(k0, k2)

    def test_positivity_bound(self, uniform_model):
        lower, _ = uniform_model.bounds_diffusion()
        assert lower > 0
        rng = np.random.default_rng(17)
        worst = np.inf
        for _ in range(200):
            y = rng.uniform(-0.5, 0.5, size=8)
            pts = rng.uniform(0.0, 100.0, size=(50, 2))
            a, _ = uniform_model.evaluate(y, pts)
            worst = min(worst, a.min())
        assert worst >= lower - 1e-12

    def test_out_of_cube_rejected(self, uniform_model):
        y = np.zeros(8)
        y[3] = 0.75
        with pytest.raises(ValueError):
            eval_uniform(uniform_model, y, CENTER)

    def test_decay_must_be_summable(self):
        with pytest.raises(ValueError):
            UniformAffineModel(dim=8, decay=0.9)

    def test_table_evaluation_matches_direct(self, uniform_model):
        rng = np.random.default_rng(23)
        pts = rng.uniform(0.0, 100.0, size=(30, 2))
        table = uniform_model.sine_table(pts)
        y = rng.uniform(-0.5, 0.5, size=8)
        a1, k1 = uniform_model.evaluate(y, pts)
        a2, k2 = uniform_model.evaluate_with_table(y, table)
        assert np.array_equal(a1, a2)
        assert np.array_equal(k1, k2)


class TestKLEigensolve:
    def test_constant_mode_eigenvalue(self, kl10, brain_spec):
        assert kl10.eigenvalues[0] == pytest.approx(
            brain_spec.delta**-2, rel=1e-8
        )

    def test_eigenvalues_positive_descending(self, kl10):
        assert (kl10.eigenvalues > 0).all()
        assert (np.diff(kl10.eigenvalues) <= 1e-12).all()

    def test_m_orthonormality(self, kl10, mesh10):
        pat = AssemblyPattern(mesh10)
        M = pat.csr(pat.mass_values())
        gram = kl10.modes.T @ (M @ kl10.modes)
        assert np.abs(gram - np.eye(kl10.n_modes)).max() < 1e-8

    def test_analytic_neumann_spectrum(self):
        # on (0, pi)^2 with gamma = delta = 1 the exact eigenvalues are
        # (1 + |k|^2)^{-2} over integer frequency pairs k
        mesh = generate_structured(math.pi, 20)
        kl = compute_kl(mesh, CovarianceSpec(1.0, 1.0), 6, seed=0)
        assert kl.eigenvalues[0] == pytest.approx(1.0, rel=1e-6)
        assert kl.eigenvalues[1] == pytest.approx(0.25, rel=0.01)
        assert kl.eigenvalues[2] == pytest.approx(0.25, rel=0.01)
        assert kl.eigenvalues[3] == pytest.approx(1.0 / 9.0, rel=0.01)

    def test_matches_dense_eigensolve(self, mesh10, brain_spec, kl10):
        pat = AssemblyPattern(mesh10)
        M = pat.csr(pat.mass_values()).toarray()
        K = pat.csr(pat.stiffness_values(1.0)).toarray()
        A = brain_spec.gamma * K + brain_spec.delta * M
        cov = np.linalg.solve(A, M) @ np.linalg.solve(A, M)
        dense = np.sort(np.real(np.linalg.eigvals(cov)))[::-1][:10]
        rel = np.abs(dense - kl10.eigenvalues) / dense
        assert rel.max() < 0.01

    def test_mode_count_precondition(self, mesh10, brain_spec):
        with pytest.raises(ValueError):
            compute_kl(mesh10, brain_spec, mesh10.n_nodes + 5, seed=0)

    def test_decay_slope_reported_negative(self, kl10):
        assert fit_decay_slope(kl10.eigenvalues) < 0

    def test_cache_round_trip(self, kl10, tmp_path):
        path = tmp_path / "kl.txt"
        save_kl(kl10, path)
        again = load_kl(path)
        assert np.array_equal(again.eigenvalues, kl10.eigenvalues)
        assert np.array_equal(again.modes, kl10.modes)
        assert again.spec.gamma == kl10.spec.gamma
        assert again.spec.delta == kl10.spec.delta
        assert again.seed == kl10.seed


@pytest.fixture(scope="module")
def model(mesh10, brain_spec, kl10):
    kl_growth = compute_kl(mesh10, calibrate_covariance(180.0, 0.0682), 10, seed=4)
    return LognormalKLModel(
        mesh10, kl10, kl_growth, base_diffusion=0.05, base_growth=0.3
    )


class TestLognormalModel:

    def test_mean_field(self, model):
        a, kappa = eval_lognormal(model, np.zeros(20), CENTER)
        assert a == pytest.approx(1.05, rel=1e-12)
        assert kappa == pytest.approx(1.3, rel=1e-12)

    def test_single_mode(self, model, kl10, mesh10):
        y = np.zeros(20)
        y[0] = 1.0
        a, _ = model.evaluate(y, mesh10.nodes)
        expected = 0.05 + np.exp(np.sqrt(kl10.eigenvalues[0]) * kl10.modes[:, 0])
        assert np.allclose(a, expected, rtol=1e-12)

    def test_interleaving_independence(self, model, mesh10):
        rng = np.random.default_rng(29)
        y = rng.standard_normal(20)
        a0, k0 = model.evaluate(y, mesh10.nodes)
        y_odd = y.copy()
        y_odd[0::2] += 1.0
        a1, k1 = model.evaluate(y_odd, mesh10.nodes)
        assert np.array_equal(k0, k1)
        assert not np.array_equal(a0, a1)

    def test_positivity(self, model, mesh10):
        rng = np.random.default_rng(31)
        for _ in range(20):
            a, kappa = model.evaluate(rng.standard_normal(20), mesh10.nodes)
            assert a.min() > 0.05
            assert kappa.min() > 0.3

    def test_empirical_exponent_variance(self, kl10):
        # sampled variance of the diffusion exponent at one node matches
        # the spectral sum within 5%
        node = 37
        rng = np.random.default_rng(123)
        samples = rng.standard_normal((10000, kl10.n_modes))
        coeff = np.sqrt(kl10.eigenvalues) * kl10.modes[node, :]
        z = samples @ coeff
        predicted = float(np.sum(kl10.eigenvalues * kl10.modes[node, :] ** 2))
        assert z.var() == pytest.approx(predicted, rel=0.05)


class TestCalibration:
    def test_brain_values_constructible(self, brain_spec):
        assert brain_spec.gamma > 0
        assert brain_spec.delta > 0

    def test_variance_identity(self, brain_spec):
        recovered = 1.0 / (4.0 * math.pi * brain_spec.gamma * brain_spec.delta)
        assert recovered == pytest.approx(0.2336, rel=1e-12)

    def test_variance_doubling(self, mesh10, brain_spec, kl10):
        doubled = calibrate_covariance(180.0, 2 * 0.2336)
        kl2 = compute_kl(mesh10, doubled, 10, seed=3)
        node = 37
        v1 = float(np.sum(kl10.eigenvalues * kl10.modes[node] ** 2))
        v2 = float(np.sum(kl2.eigenvalues * kl2.modes[node] ** 2))
        assert v2 / v1 == pytest.approx(2.0, rel=0.1)

    def test_length_monotonicity(self):
        specs = [calibrate_covariance(L, 0.2336) for L in (60.0, 180.0, 540.0)]
        ratios = [s.gamma / s.delta for s in specs]
        assert ratios[0] < ratios[1] < ratios[2]
        gammas = [s.gamma for s in specs]
        assert gammas[0] < gammas[1] < gammas[2]


class TestDecayFit:
    def test_exact_power_law(self):
        k = np.arange(1, 21, dtype=float)
        eigs = k**-2.34  # sqrt decays like k^-1.17
        assert fit_decay_slope(eigs) == pytest.approx(-1.17, abs=1e-10)
