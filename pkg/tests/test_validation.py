"""Tests for the post-training audit suite."""

import csv
import io

import numpy as np
import pytest

from elastinet import data as edata
from elastinet import kinematics as kin
from elastinet import validation as val
from elastinet.errors import ConfigError, NumericalError, RangeError, ToleranceError
from elastinet.network import init_model
from elastinet.training import analytic_model

SEED = 5150


def table_stiffness():
    return kin.monoclinic_stiffness(edata.REFERENCE_STIFFNESS_AMBIENT)


def isotropic_stiffness(lam, mu):
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[(0, 1, 2), (0, 1, 2)] = lam + 2.0 * mu
    d[(3, 4, 5), (3, 4, 5)] = mu
    return d


def random_protocol_fs(rng, n, spread=0.1):
    fs = np.eye(3) + spread * rng.uniform(-1.0, 1.0, (n, 3, 3))
    assert np.all(np.linalg.det(fs) > 0.0)
    return fs


class QuadraticDisplacementEnergy:
    """psi(F) = 0.5 (F - I) : H : (F - I) for a constant 9x9 matrix H."""

    variant = "PF"

    def __init__(self, h):
        self.h = np.asarray(h, dtype=float)

    def energy(self, f):
        d = (np.asarray(f, dtype=float) - np.eye(3)).reshape(9)
        return 0.5 * d @ self.h @ d

    def stress(self, f):
        d = (np.asarray(f, dtype=float) - np.eye(3)).reshape(9)
        return (self.h @ d).reshape(3, 3)

    def tangent(self, f):
        return self.h.copy()


class LogVolumetricEnergy:
    """Compressible neo-Hookean-style energy with a squared log-volume term."""

    variant = "PF"

    def __init__(self, mu=1.0, lam=2.0, fail_below_j=None):
        self.mu = mu
        self.lam = lam
        self.fail_below_j = fail_below_j

    def energy(self, f):
        f = np.asarray(f, dtype=float)
        j = np.linalg.det(f)
        if self.fail_below_j is not None and j < self.fail_below_j:
            raise NumericalError(f"energy undefined below det F = "
                                 f"{self.fail_below_j}")
        logj = np.log(j)
        return (0.5 * self.mu * (np.trace(f.T @ f) - 3.0)
                - self.mu * logj + 0.5 * self.lam * logj ** 2)

    def stress(self, f):
        raise NotImplementedError

    def tangent(self, f):
        raise NotImplementedError


class TangentInterpolatingModel:
    """Duck model whose tangent blends a passing and a failing stiffness
    as the deformation compresses (for sweep-detector tests)."""

    variant = "PF"

    def __init__(self, c_pass, c_fail, j_lo=0.7, j_hi=1.0):
        self.c_pass = np.asarray(c_pass, dtype=float)
        self.c_fail = np.asarray(c_fail, dtype=float)
        self.j_lo = j_lo
        self.j_hi = j_hi

    def tangent(self, f):
        j = np.linalg.det(np.asarray(f, dtype=float))
        s = np.clip((j - self.j_lo) / (self.j_hi - self.j_lo), 0.0, 1.0)
        return s * self.c_pass + (1.0 - s) * self.c_fail

    def energy(self, f):
        return 0.0

    def stress(self, f):
        return np.zeros((3, 3))


def fd_first_stress_tangent(src, f, h=1e-6):
    out = np.empty((9, 9))
    f = np.asarray(f, dtype=float)
    for col in range(9):
        d = np.zeros(9)
        d[col] = h
        d = d.reshape(3, 3)
        out[:, col] = (src.stress_pk1(f + d) - src.stress_pk1(f - d)
                       ).reshape(9) / (2.0 * h)
    return out


class TestTangentPF:
    def test_identity_pushforward_matches_referential_tangent(self):
        d = table_stiffness()
        a = val.tangent_PF(analytic_model(d, "SE"), np.eye(3))
        expected = kin.voigt6_to_tensor4(d).reshape(9, 9)
        assert np.max(np.abs(a - expected)) <= 1e-12

    def test_matches_fd_of_first_stress(self):
        d = table_stiffness()
        rng = np.random.default_rng(SEED)
        fs = random_protocol_fs(rng, 50)
        se = val.as_source(analytic_model(d, "SE"))
        pf = val.as_source(analytic_model(d, "PF"))
        for f in fs:
            a = val.tangent_PF(se, f)
            fd = fd_first_stress_tangent(se, f)
            assert np.linalg.norm(a - fd) <= 1e-6 * np.linalg.norm(fd)
            assert np.max(np.abs(val.tangent_PF(pf, f) - a)) \
                <= 1e-9 * np.max(np.abs(a))

    def test_major_symmetry(self):
        d = table_stiffness()
        src = val.as_source(analytic_model(d, "SE"))
        rng = np.random.default_rng(SEED + 1)
        for f in random_protocol_fs(rng, 5):
            a = val.tangent_PF(src, f)
            assert np.max(np.abs(a - a.T)) <= 1e-9 * np.max(np.abs(a))

    def test_network_variant_is_a_passthrough(self):
        model = init_model(5, "PF")
        rng = np.random.default_rng(SEED + 2)
        src = val.as_source(model)
        for f in random_protocol_fs(rng, 3, spread=0.05):
            a = val.tangent_PF(src, f)
            np.testing.assert_array_equal(a, model.tangent(f))
            fd = fd_first_stress_tangent(src, f)
            assert np.linalg.norm(a - fd) <= 1e-3 * np.linalg.norm(fd)


class TestTangentSigmaEps:
    def fd_sigma_eps(self, d_voigt, f0, h=1e-6):
        c4 = kin.voigt6_to_tensor4(d_voigt)
        j0 = np.linalg.det(f0)
        eps0 = kin.log_strain(kin.right_cauchy_green(f0))

        def sigma(eps):
            e = 0.5 * (kin.sym_exp(2.0 * eps) - np.eye(3))
            s = np.einsum("IJKL,KL->IJ", c4, e)
            return f0 @ s @ f0.T / j0

        out = np.empty((6, 6))
        for b, (k, l) in enumerate(kin.VOIGT_PAIRS):
            d = np.zeros((3, 3))
            d[k, l] = d[l, k] = h
            col = (sigma(eps0 + d) - sigma(eps0 - d)) / (2.0 * h)
            if k != l:
                col = col / 2.0
            out[:, b] = kin.tensor2_to_voigt6(col)
        return out

    def test_reference_state_equals_referential_tangent(self):
        d = table_stiffness()
        got = val.tangent_sigma_eps(analytic_model(d, "SE"), np.eye(3))
        assert np.max(np.abs(got - d)) <= 1e-8

    def test_matches_fd_through_log_strain_map(self):
        d = table_stiffness()
        f_hydro = 0.95 ** (1.0 / 3.0) * np.eye(3)
        rng = np.random.default_rng(SEED)
        states = [f_hydro, *random_protocol_fs(rng, 3, spread=0.06)]
        for model in (analytic_model(d, "SE"), analytic_model(d, "PF")):
            for f in states:
                got = val.tangent_sigma_eps(model, f)
                fd = self.fd_sigma_eps(d, f)
                assert np.max(np.abs(got - fd)) <= 1e-5 * np.max(np.abs(fd))

    def test_series_not_converged_raises(self):
        model = analytic_model(table_stiffness(), "SE")
        with pytest.raises(ToleranceError):
            val.tangent_sigma_eps(model, 0.2 * np.eye(3), n_terms=3)


class TestAcoustic:
    def test_isotropic_closed_form(self):
        lam, mu = 3.0, 2.0
        c_pf = val.tangent_PF(analytic_model(isotropic_stiffness(lam, mu),
                                             "SE"), np.eye(3))
        rng = np.random.default_rng(SEED)
        for _ in range(10):
            n = rng.standard_normal(3)
            n /= np.linalg.norm(n)
            a = val.acoustic(c_pf, n).matrix
            expected = mu * np.eye(3) + (lam + mu) * np.outer(n, n)
            assert np.max(np.abs(a - expected)) <= 1e-12

    def test_reference_direction_reads_first_coefficient(self):
        d = table_stiffness()
        c_pf = val.tangent_PF(analytic_model(d, "SE"), np.eye(3))
        a = val.acoustic(c_pf, np.array([1.0, 0.0, 0.0]))
        assert abs(a.matrix[0, 0] - edata.REFERENCE_STIFFNESS_AMBIENT["D11"]) \
            <= 1e-9

    def test_symmetric_for_green_elastic_tangent(self):
        d = table_stiffness()
        src = val.as_source(analytic_model(d, "SE"))
        rng = np.random.default_rng(SEED + 3)
        f = random_protocol_fs(rng, 1)[0]
        c_pf = val.tangent_PF(src, f)
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        a = val.acoustic(c_pf, n, f=f)
        assert np.max(np.abs(a.matrix - a.matrix.T)) \
            <= 1e-9 * np.max(np.abs(a.matrix))

    def test_linear_in_the_tangent(self):
        d = table_stiffness()
        c_pf = val.tangent_PF(analytic_model(d, "SE"), np.eye(3))
        n = np.array([0.0, 1.0, 0.0])
        np.testing.assert_array_equal(val.acoustic(4.0 * c_pf, n).matrix,
                                      4.0 * val.acoustic(c_pf, n).matrix)

    def test_non_unit_direction_rejected(self):
        c_pf = np.eye(9)
        with pytest.raises(ConfigError):
            val.acoustic(c_pf, np.array([1.0, 1.0, 0.0]))

    def test_criteria_values(self):
        f, g, d = val.ellipticity_criteria(np.eye(3))
        assert (f, g, d) == (1.0, 1.0, 1.0)
        m = np.diag([4.0, 2.0, 0.0])
        f, g, d = val.ellipticity_criteria(m)
        assert f == 0.0 and g == 0.0 and d == 0.0
        lam, mu = 3.0, 2.0
        c_pf = val.tangent_PF(analytic_model(isotropic_stiffness(lam, mu),
                                             "SE"), np.eye(3))
        n = np.array([0.0, 0.0, 1.0])
        _, _, det = val.ellipticity_criteria(val.acoustic(c_pf, n))
        assert abs(det - mu * mu * (lam + 2.0 * mu)) \
            <= 1e-9 * mu * mu * (lam + 2.0 * mu)


class TestSphereGridAndHillClimb:
    def test_grid_count_and_unit_norm(self):
        ns = val.sphere_grid(1000)
        assert ns.shape == (1000, 3)
        assert np.max(np.abs(np.linalg.norm(ns, axis=1) - 1.0)) <= 1e-12
        np.testing.assert_allclose(ns[0], [0.0, 0.0, 1.0], atol=1e-15)

    def test_hemisphere_coverage(self):
        ns = val.sphere_grid(1000)
        rng = np.random.default_rng(SEED)
        probes = rng.standard_normal((4000, 3))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        best = np.max(np.arccos(np.clip(
            np.max(np.abs(probes @ ns.T), axis=1), -1.0, 1.0)))
        assert best < np.deg2rad(12.0)

    def test_invalid_count_rejected(self):
        with pytest.raises(ConfigError):
            val.sphere_grid(0)

    def test_quadratic_descends_to_minimum(self):
        target = np.array([1.1, 0.7])

        def objective(x):
            return float(np.sum((x - target) ** 2))

        best, value, trace = val.hill_climb(
            objective, np.array([3.0, 0.1]), iterations=3000, seed=4,
            bounds=list(val.ANGLE_BOUNDS))
        assert value < 1e-3
        assert len(trace) == 3000

    def test_zero_iterations_returns_start(self):
        best, value, trace = val.hill_climb(lambda x: float(np.sum(x ** 2)),
                                            np.array([0.3, 0.4]),
                                            iterations=0, seed=0)
        np.testing.assert_array_equal(best, [0.3, 0.4])
        assert value == 0.25 and len(trace) == 0

    def test_constant_objective_value_unchanged(self):
        best, value, trace = val.hill_climb(lambda x: 7.0, np.zeros(2),
                                            iterations=50, seed=1)
        assert value == 7.0
        assert len(trace) == 50 and np.all(trace == 7.0)

    def test_deterministic_for_fixed_seed(self):
        def objective(x):
            return float(np.cos(5.0 * x[0]) + np.sin(3.0 * x[1]))

        runs = [val.hill_climb(objective, np.array([1.0, 1.0]),
                               iterations=200, seed=9) for _ in range(2)]
        np.testing.assert_array_equal(runs[0][0], runs[1][0])
        assert runs[0][1] == runs[1][1]
        np.testing.assert_array_equal(runs[0][2], runs[1][2])

    def test_bounds_clip_every_proposal(self):
        best, value, _ = val.hill_climb(
            lambda x: float(-np.sum(x)), np.array([0.5, 0.5]),
            iterations=500, seed=2, bounds=[(0.0, 1.0), (0.0, 1.0)])
        assert np.all(best <= 1.0) and np.all(best >= 0.0)
        assert value >= -2.0


class TestStrongEllipticity:
    def test_table_stiffness_passes_at_reference(self):
        model = analytic_model(table_stiffness(), "SE")
        rep = val.strong_ellipticity_test(model, n_directions=400,
                                          iterations=500, seed=1)
        assert rep.passed
        for name in val.CRITERIA:
            c = rep.criteria[name]
            slack = 1e-9 * max(1.0, abs(c["grid_min"]))
            assert c["min_value"] <= c["grid_min"] + slack
            assert c["min_value"] > 0.0
        text = rep.to_text()
        assert "PASS" in text
        assert rep.to_dict()["mode"] == "fixed"

    def test_determinant_minimum_matches_dense_grid(self):
        model = analytic_model(table_stiffness(), "SE")
        rep = val.strong_ellipticity_test(model, n_directions=400,
                                          iterations=2000, seed=3)
        c4 = val.tangent_PF(model, np.eye(3)).reshape(3, 3, 3, 3)
        ns = val.sphere_grid(62500)
        dense = np.min(np.linalg.det(
            np.einsum("sJ,iJkL,sL->sik", ns, c4, ns)))
        assert abs(rep.criteria["d"]["min_value"] - dense) <= 0.01 * abs(dense)

    def test_identity_like_tangent_passes(self):
        rep = val.strong_ellipticity_test(
            analytic_model(2.0 * np.eye(6), "SE"), n_directions=100,
            iterations=100, seed=0)
        assert rep.passed

    def test_indefinite_tangent_fails(self):
        d = table_stiffness()
        d[3, 3] = -2.0
        rep = val.strong_ellipticity_test(analytic_model(d, "SE"),
                                          n_directions=200, iterations=200,
                                          seed=0)
        assert not rep.passed
        assert rep.criteria["f"]["min_value"] < 0.0

    def test_range_mode_over_protocol_box(self):
        model = analytic_model(table_stiffness(), "SE")
        rep = val.strong_ellipticity_test(model, f_range=True, grid_points=3,
                                          n_directions=36, iterations=60,
                                          seed=2)
        assert rep.mode == "range"
        # The quadratic-strain material genuinely loses ellipticity deep in
        # the box (combined biaxial compression and shear), so range mode
        # must catch it even though every uniaxial path stays stable.
        assert not rep.passed
        assert rep.criteria["d"]["min_value"] < 0.0
        for name in val.CRITERIA:
            c = rep.criteria[name]
            slack = 1e-9 * max(1.0, abs(c["grid_min"]))
            assert c["min_value"] <= c["grid_min"] + slack
            assert np.asarray(c["argmin_f"]).shape == (3, 3)
            assert len(c["argmin_q"]) == 6

    def test_range_mode_passes_on_a_mild_box(self):
        model = analytic_model(table_stiffness(), "SE")
        rep = val.strong_ellipticity_test(model, f_range=True, grid_points=3,
                                          n_directions=36, iterations=60,
                                          seed=2, stretch_range=(0.95, 1.15),
                                          shear_range=(-0.05, 0.05))
        assert rep.passed
        assert not rep.failures

    def test_range_mode_flags_tangent_failures(self):
        inner = analytic_model(table_stiffness(), "PF")

        class Flaky:
            variant = "PF"

            def tangent(self, f):
                if np.linalg.det(f) > 1.3:
                    raise NumericalError("tangent unavailable here")
                return inner.tangent(f)

            def energy(self, f):
                return inner.energy(f)

            def stress(self, f):
                return inner.stress(f)

        rep = val.strong_ellipticity_test(Flaky(), f_range=True,
                                          grid_points=3, n_directions=16,
                                          iterations=20, seed=0)
        assert len(rep.failures) > 0
        assert set(rep.criteria) == set(val.CRITERIA)

    def test_interpolated_family_first_failure_brackets_dense_oracle(self):
        d_pass = table_stiffness()
        d_fail = table_stiffness()
        d_fail[3, 3] = -6.0
        ts = np.linspace(0.0, 1.0, 11)
        ns = val.sphere_grid(10000)
        detected = oracle = None
        for i, t in enumerate(ts):
            d = (1.0 - t) * d_pass + t * d_fail
            model = analytic_model(d, "SE")
            rep = val.strong_ellipticity_test(model, n_directions=100,
                                              iterations=100, seed=0)
            if detected is None and not rep.passed:
                detected = i
            c4 = val.tangent_PF(model, np.eye(3)).reshape(3, 3, 3, 3)
            a = np.einsum("sJ,iJkL,sL->sik", ns, c4, ns)
            fv, gv, dv = val._criteria_batch(a)
            dense_fail = min(fv.min(), gv.min(), dv.min()) <= 0.0
            if oracle is None and dense_fail:
                oracle = i
        assert detected is not None and oracle is not None
        assert abs(detected - oracle) <= 1

    def test_sweep_localizes_first_failing_state(self):
        c_pass = kin.voigt6_to_tensor4(table_stiffness()).reshape(9, 9)
        d_bad = table_stiffness()
        d_bad[3, 3] = -6.0
        c_fail = kin.voigt6_to_tensor4(d_bad).reshape(9, 9)
        model = TangentInterpolatingModel(c_pass, c_fail)
        lams = np.linspace(1.0, 0.85, 7)
        fs = np.array([np.diag([lam, lam, 1.0]) for lam in lams])
        sweep = val.ellipticity_sweep(model, fs, labels=lams.tolist(),
                                      n_directions=100, iterations=100,
                                      seed=0)
        ns = val.sphere_grid(10000)
        oracle = None
        for lam, f in zip(lams, fs):
            c4 = np.asarray(model.tangent(f)).reshape(3, 3, 3, 3)
            fv, gv, dv = val._criteria_batch(
                np.einsum("sJ,iJkL,sL->sik", ns, c4, ns))
            if min(fv.min(), gv.min(), dv.min()) <= 0.0:
                oracle = lam
                break
        assert sweep["first_failure"] is not None and oracle is not None
        detected_i = lams.tolist().index(sweep["first_failure"])
        oracle_i = lams.tolist().index(oracle)
        assert abs(detected_i - oracle_i) <= 1
        assert len(sweep["steps"]) == detected_i + 1
        assert "label" in val.sweep_csv(sweep).splitlines()[0]


class TestConvexity:
    def test_spd_quadratic_has_no_violations(self):
        rng = np.random.default_rng(SEED)
        a = rng.standard_normal((9, 9))
        model = QuadraticDisplacementEnergy(a.T @ a + 0.1 * np.eye(9))
        rep = val.convexity_check(model, n_pairs=100, seed=3)
        assert rep.passed and rep.violations == 0
        assert rep.count == 100
        assert rep.worst_residual >= 0.0

    def test_identical_pair_has_zero_residual(self):
        model = QuadraticDisplacementEnergy(np.eye(9))

        def sampler(rng):
            f = np.eye(3) + 0.05 * rng.uniform(-1.0, 1.0, (3, 3))
            return f, f.copy()

        rep = val.convexity_check(model, sampler=sampler, n_pairs=3, seed=0)
        assert np.all(rep.residuals == 0.0)

    def test_concave_direction_detected(self):
        h = np.eye(9)
        h[1, 1] = -1.0  # concave along the (1,2) displacement component
        model = QuadraticDisplacementEnergy(h)

        def sampler(rng):
            f = np.eye(3)
            fp = f.copy()
            fp[0, 1] += rng.uniform(0.05, 0.1)
            return f, fp

        rep = val.convexity_check(model, sampler=sampler, n_pairs=10, seed=1)
        assert not rep.passed
        assert rep.violations == 10
        assert rep.worst_residual < 0.0
        assert "FAIL" in rep.to_text()


class TestGrowth:
    def test_svk_is_monotone_but_bounded(self):
        model = analytic_model(table_stiffness(), "PF")
        rep = val.growth_test(model, min_training_j=0.614)
        assert rep.monotone
        assert rep.divergent is False
        assert rep.min_training_j == 0.614
        assert "bounded" in rep.to_text()
        assert "0.614" in rep.to_text()
        rows = rep.to_csv().splitlines()
        assert rows[0] == "det_f,minus_log_j,energy"
        assert len(rows) == 20

    def test_log_volumetric_energy_is_divergent(self):
        rep = val.growth_test(LogVolumetricEnergy(), min_training_j=0.614)
        assert rep.monotone
        assert rep.divergent is True
        assert "divergent" in rep.to_text()

    def test_single_reference_point(self):
        model = analytic_model(table_stiffness(), "PF")
        rep = val.growth_test(model, js=[1.0])
        assert abs(rep.psis[0]) <= 1e-12
        assert rep.divergent is None

    def test_invalid_sequences_rejected(self):
        model = analytic_model(table_stiffness(), "PF")
        with pytest.raises(ConfigError):
            val.growth_test(model, js=[0.5, 0.9])
        with pytest.raises(ConfigError):
            val.growth_test(model, js=[1.0, 0.0])

    def test_partial_report_on_evaluation_failure(self):
        rep = val.growth_test(LogVolumetricEnergy(fail_below_j=1e-5))
        assert rep.failure is not None
        assert rep.failure["step"] == len(rep.psis)
        assert rep.divergent is None
        assert "failed" in rep.to_text()


class TestAnisotropy:
    def test_isotropic_index_closed_form(self):
        lam, mu = 3.0, 2.0
        model = analytic_model(isotropic_stiffness(lam, mu), "SE")
        entry = val.anisotropy_index(model, n_directions=100, iterations=100,
                                     seed=0)
        assert abs(entry["index"] - (lam + 2.0 * mu) / mu) <= 1e-6
        assert not entry["divergent"]

    def test_positive_rescaling_leaves_index_unchanged(self):
        d = table_stiffness()
        kwargs = {"n_directions": 100, "iterations": 200, "seed": 5}
        base = val.anisotropy_index(analytic_model(d, "SE"), **kwargs)
        scaled = val.anisotropy_index(analytic_model(4.0 * d, "SE"), **kwargs)
        assert abs(base["index"] - scaled["index"]) <= 1e-12 * base["index"]

    def test_table_stiffness_matches_dense_grid(self):
        model = analytic_model(table_stiffness(), "SE")
        entry = val.anisotropy_index(model, n_directions=400, iterations=2000,
                                     seed=1)
        c4 = val.tangent_PF(model, np.eye(3)).reshape(3, 3, 3, 3)
        ns = val.sphere_grid(40000)
        eigs = np.linalg.eigvalsh(np.einsum("sJ,iJkL,sL->sik", ns, c4, ns))
        dense = np.max(eigs[:, 2]) / np.min(eigs[:, 0])
        assert entry["index"] >= 1.0
        assert abs(entry["index"] - dense) <= 0.01 * dense

    def test_unstable_tangent_flagged_divergent(self):
        d = table_stiffness()
        d[3, 3] = -2.0
        entry = val.anisotropy_index(analytic_model(d, "SE"),
                                     n_directions=100, iterations=100, seed=0)
        assert entry["divergent"]
        assert np.isinf(entry["index"])

    def test_sweep_collects_labeled_entries(self):
        model = analytic_model(table_stiffness(), "SE")
        fs = [np.eye(3), 0.98 * np.eye(3)]
        rep = val.anisotropy_sweep(model, fs, labels=["ref", "c2"],
                                   n_directions=64, iterations=50, seed=0)
        assert [e["label"] for e in rep.entries] == ["ref", "c2"]
        lines = rep.to_csv().splitlines()
        assert lines[0] == "label,v1_sq,v2_sq,index,divergent"
        assert len(lines) == 3
        assert "A_I" in rep.to_text()


class TestTangentTable:
    def test_reference_table_reproduces_input_stiffness(self):
        d = table_stiffness()
        table = val.tangent_table(analytic_model(d, "SE"))
        assert table.name == "reference"
        assert abs(table.pressure) <= 1e-12
        for label in val.TABLE_LABELS:
            slot = kin.MONOCLINIC_SLOTS[label]
            row = table.row(label)
            assert abs(row["SE"] - d[slot]) <= 1e-10
            assert abs(row["PF"] - d[slot]) <= 1e-8
            assert abs(row["sigma_eps"] - d[slot]) <= 1e-8

    def test_located_pressure_state(self):
        model = analytic_model(table_stiffness(), "SE")
        f = val.locate_pressure_state(model, 5.0)
        assert abs(val.cauchy_pressure(model, f) - 5.0) <= 1e-8
        assert f[0, 0] < 1.0

    def test_pair_divergence_grows_with_pressure(self):
        model = analytic_model(table_stiffness(), "SE")
        ambient = val.tangent_table(model, pressure=1e-4)
        compressed = val.tangent_table(model, pressure=5.0)

        def gap(table):
            return max(abs(table.row(lbl)["PF"] - table.row(lbl)["SE"])
                       for lbl in val.TABLE_LABELS)

        assert gap(compressed) > 10.0 * gap(ambient)
        assert gap(compressed) > 0.5  # materially different at 5 GPa

    def test_unbracketed_pressure_raises_range_error(self):
        model = analytic_model(table_stiffness(), "SE")
        with pytest.raises(RangeError):
            val.tangent_table(model, pressure=-100.0)

    def test_rows_and_serialization_complete(self):
        model = analytic_model(table_stiffness(), "SE")
        table = val.tangent_table(model, pressure=1e-4)
        payload = table.to_dict()
        assert tuple(payload["labels"]) == val.TABLE_LABELS
        assert set(payload["columns"]) == set(val.TABLE_COLUMNS)
        text = table.to_text()
        assert len(text.splitlines()) == 2 + len(val.TABLE_LABELS)
        reader = csv.reader(io.StringIO(table.to_csv()))
        rows = list(reader)
        assert rows[0] == ["label", "SE", "PF", "sigma_eps"]
        assert len(rows) == 1 + len(val.TABLE_LABELS)
        assert table.to_json().startswith("{")


class TestSourceAdapters:
    def test_se_and_pf_sources_agree_for_shared_truth(self):
        d = table_stiffness()
        se = val.as_source(analytic_model(d, "SE"))
        pf = val.as_source(analytic_model(d, "PF"))
        rng = np.random.default_rng(SEED)
        for f in random_protocol_fs(rng, 4):
            assert abs(se.energy(f) - pf.energy(f)) \
                <= 1e-10 * max(1.0, abs(se.energy(f)))
            assert np.max(np.abs(se.stress_pk1(f) - pf.stress_pk1(f))) <= 1e-9
            assert np.max(np.abs(se.stress_pk2(f) - pf.stress_pk2(f))) <= 1e-9
            assert np.max(np.abs(se.tangent_se(f) - pf.tangent_se(f))) <= 1e-7
            assert np.max(np.abs(se.cauchy(f) - pf.cauchy(f))) <= 1e-9

    def test_reference_coincidence_of_all_three_tangents(self):
        d = table_stiffness()
        src = val.as_source(analytic_model(d, "SE"))
        c_se = kin.tensor4_to_voigt6(src.tangent_se(np.eye(3)))
        c_pf = val.tangent_PF(src, np.eye(3)).reshape(3, 3, 3, 3)
        c_sig = val.tangent_sigma_eps(src, np.eye(3))
        assert np.max(np.abs(c_pf - kin.voigt6_to_tensor4(c_se))) <= 1e-8
        assert np.max(np.abs(c_sig - c_se)) <= 1e-8
