import warnings

import numpy as np
import pytest

from ghostbench import optics
from ghostbench.errors import ConfigError
from ghostbench.forward import MeasurementRecord, MeasurementSet, run_campaign
from ghostbench.optics import OpticalConfig
from ghostbench.recon_gics import (GicsParams, SensingSystem, build_sensing,
                                   gics_reconstruct, gpsr_solve, ista_reference,
                                   kkt_residual, lasso_objective, write_solve_csv)
from ghostbench.speckle import SpeckleFrame, synthesize_frame

TIGHT = dict(tol_rel_obj=1e-13, max_iters=20000)
CFG = optics.config_for_coherence_length(
    OpticalConfig(650e-9, 0.4, 0.5, 1e-3, 16, 15e-6), 90e-6)


def sparse_instance(seed, m=50, n=200, k=10):
    rng = np.random.default_rng(seed)
    design = rng.standard_normal((m, n))
    truth = np.zeros(n)
    truth[rng.choice(n, k, replace=False)] = rng.standard_normal(k)
    return SensingSystem.from_arrays(design, design @ truth), truth


def synthetic_measurements(rng, m, grid_n, truth):
    records = []
    for i in range(m):
        intensity = rng.uniform(0.5, 1.5, size=(grid_n, grid_n))
        bucket = float(np.sum(intensity * truth))
        records.append(MeasurementRecord(SpeckleFrame(intensity, 1, i), bucket))
    cfg = OpticalConfig(650e-9, 0.4, 0.5, 1e-3, grid_n, 15e-6)
    return MeasurementSet(tuple(records), cfg)


class TestBuildSensing:
    def test_single_record_identity(self):
        frame = synthesize_frame(CFG, 1, 0)
        ms = MeasurementSet((MeasurementRecord(frame, 4.5),), CFG)
        system = build_sensing(ms, centered=False, scale_columns=False)
        assert np.array_equal(system.rows[0], frame.intensity.ravel())
        assert system.rhs[0] == 4.5

    def test_centered_columns_have_zero_mean(self):
        ms = run_campaign(CFG, optics.make_double_slit(CFG, 6e-5, 1.5e-4, 1.2e-4), 12, 3)
        system = build_sensing(ms, centered=True, scale_columns=False)
        assert np.max(np.abs(system.rows.mean(axis=0))) <= 1e-12
        assert abs(system.rhs.mean()) <= 1e-9 * abs(system.rhs_offset)

    def test_forward_consistency_noiseless(self):
        # for the true mask t, the uncentered system satisfies rhs = rows @ t
        mask = optics.make_double_slit(CFG, 6e-5, 1.5e-4, 1.2e-4)
        ms = run_campaign(CFG, mask, 10, 5)
        system = build_sensing(ms, centered=False, scale_columns=False)
        predicted = system.rows @ mask.values.ravel()
        assert np.allclose(predicted, system.rhs, rtol=1e-12)

    def test_uncentering_and_unscaling_reproduce_original(self):
        ms = run_campaign(CFG, optics.make_double_slit(CFG, 6e-5, 1.5e-4, 1.2e-4), 9, 7)
        system = build_sensing(ms, centered=True, scale_columns=True)
        original = ms.intensity_stack().reshape(ms.m, -1)
        assert np.allclose(system.original_rows(), original, rtol=1e-12, atol=1e-15)
        assert np.allclose(system.original_rhs(), ms.buckets, rtol=1e-12)

    def test_dead_pixel_scale_left_at_one(self):
        rng = np.random.default_rng(0)
        intensities = [rng.uniform(0.5, 1.5, (16, 16)) for _ in range(6)]
        for values in intensities:
            values[3, 4] = 0.5  # constant column (binary-exact): zero variance after centering
        records = tuple(MeasurementRecord(SpeckleFrame(v, 0, i), float(v.sum()))
                        for i, v in enumerate(intensities))
        ms = MeasurementSet(records, CFG)
        with pytest.warns(UserWarning, match="zero-variance"):
            system = build_sensing(ms, centered=True, scale_columns=True)
        dead_col = 3 * 16 + 4
        assert system.col_scale[dead_col] == 1.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            SensingSystem(np.ones((3, 4)), np.ones(2), np.ones(4), False, np.zeros(4), 0.0)
        with pytest.raises(ConfigError):
            SensingSystem(np.ones((3, 4)), np.ones(3), np.zeros(4), False, np.zeros(4), 0.0)


class TestGpsr:
    def test_large_tau_gives_exact_zero(self):
        system, _ = sparse_instance(1)
        threshold = float(np.abs(system.rows.T @ system.rhs).max())
        x, report = gpsr_solve(system, GicsParams(tau=threshold))
        assert not x.any()
        assert report.converged

    def test_tau_zero_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        design = rng.standard_normal((20, 5))
        rhs = design @ rng.standard_normal(5) + 0.1 * rng.standard_normal(20)
        system = SensingSystem.from_arrays(design, rhs)
        expected = np.linalg.solve(design.T @ design, design.T @ rhs)
        x, report = gpsr_solve(system, GicsParams(tau=0.0, **TIGHT))
        assert np.linalg.norm(x - expected) / np.linalg.norm(expected) <= 1e-6
        assert report.converged

    def test_agrees_with_ista_oracle(self):
        for seed in (3, 4, 5):
            system, _ = sparse_instance(seed)
            tau = 0.01 * float(np.abs(system.rows.T @ system.rhs).max())
            x_g, _ = gpsr_solve(system, GicsParams(tau=tau, **TIGHT))
            x_i = ista_reference(system, tau, kkt_tol=1e-8)
            f_g = lasso_objective(system.rows, system.rhs, x_g, tau)
            f_i = lasso_objective(system.rows, system.rhs, x_i, tau)
            assert abs(f_g - f_i) <= 1e-6 * f_i

    def test_kkt_optimality_of_accepted_solutions(self):
        system, _ = sparse_instance(6)
        scale = float(np.abs(system.rows.T @ system.rhs).max())
        _, report = gpsr_solve(system, GicsParams(tau=0.01 * scale, **TIGHT))
        assert report.converged
        assert report.kkt_residual <= 1e-6 * scale

    def test_objective_never_exceeds_origin_value(self):
        for seed, tau_rel in ((7, 0.0), (8, 0.01), (9, 0.3)):
            system, _ = sparse_instance(seed)
            tau = tau_rel * float(np.abs(system.rows.T @ system.rhs).max())
            _, report = gpsr_solve(system, GicsParams(tau=tau))
            origin = 0.5 * float(system.rhs @ system.rhs)
            assert report.final_objective <= origin * (1 + 1e-12)

    @pytest.mark.parametrize("c", [2.0, 3.7, 0.25])
    def test_scaling_equivariance(self, c):
        system, _ = sparse_instance(10, m=30, n=60, k=6)
        tau = 0.02 * float(np.abs(system.rows.T @ system.rhs).max())
        x1, _ = gpsr_solve(system, GicsParams(tau=tau))
        scaled = SensingSystem.from_arrays(c * system.rows, c * system.rhs)
        x2, _ = gpsr_solve(scaled, GicsParams(tau=c * c * tau))
        denom = max(np.max(np.abs(x1)), 1e-300)
        assert np.max(np.abs(x1 - x2)) / denom <= 1e-8

    def test_nonneg_flag_constrains_solution(self):
        system, _ = sparse_instance(11)
        tau = 0.01 * float(np.abs(system.rows.T @ system.rhs).max())
        x, _ = gpsr_solve(system, GicsParams(tau=tau, nonneg=True))
        assert (x >= 0).all()

    def test_debias_polishes_support(self):
        rng = np.random.default_rng(12)
        design = rng.standard_normal((40, 8))
        truth = np.zeros(8)
        truth[[1, 5]] = (1.2, -0.7)
        system = SensingSystem.from_arrays(design, design @ truth)
        tau = 0.05 * float(np.abs(design.T @ system.rhs).max())
        x_plain, _ = gpsr_solve(system, GicsParams(tau=tau, **TIGHT))
        x_debias, _ = gpsr_solve(system, GicsParams(tau=tau, debias=True, **TIGHT))
        # the l1 solution is biased toward zero; the polish removes that bias
        assert np.linalg.norm(x_debias - truth) < np.linalg.norm(x_plain - truth)
        assert np.linalg.norm(x_debias - truth) <= 1e-8

    def test_negative_tau_rejected(self):
        with pytest.raises(ConfigError):
            GicsParams(tau=-1.0)

    def test_history_matches_report(self):
        system, _ = sparse_instance(13)
        tau = 0.05 * float(np.abs(system.rows.T @ system.rhs).max())
        _, report = gpsr_solve(system, GicsParams(tau=tau))
        assert report.history[0][0] == 0
        assert report.history[-1][0] == report.iterations
        objectives = [row[1] for row in report.history]
        assert all(a >= b - 1e-12 * abs(a) for a, b in zip(objectives, objectives[1:]))


class TestIsta:
    def test_large_tau_returns_zero_immediately(self):
        system, _ = sparse_instance(20)
        threshold = float(np.abs(system.rows.T @ system.rhs).max())
        x = ista_reference(system, threshold, kkt_tol=1e-12, max_iters=5)
        assert not x.any()

    def test_objective_non_increasing(self):
        system, _ = sparse_instance(21)
        tau = 0.02 * float(np.abs(system.rows.T @ system.rhs).max())
        trace = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            ista_reference(system, tau, kkt_tol=1e-8, max_iters=2000,
                           on_iterate=lambda it, x: trace.append(
                               lasso_objective(system.rows, system.rhs, x, tau)))
        assert len(trace) > 50
        assert all(a >= b - 1e-10 * abs(a) for a, b in zip(trace, trace[1:]))

    def test_iteration_cap_warns(self):
        system, _ = sparse_instance(22)
        tau = 0.01 * float(np.abs(system.rows.T @ system.rhs).max())
        with pytest.warns(UserWarning, match="iteration cap"):
            ista_reference(system, tau, kkt_tol=1e-14, max_iters=3)


class TestKktResidual:
    def test_zero_at_exact_optimum_of_trivial_problem(self):
        # minimize 0.5*(x - 2)^2 + tau*|x|: optimum x = 2 - tau for tau < 2
        design = np.array([[1.0]])
        rhs = np.array([2.0])
        tau = 0.5
        x = np.array([1.5])
        grad = design.T @ (design @ x - rhs)
        assert kkt_residual(x, grad, tau) <= 1e-15

    def test_positive_away_from_optimum(self):
        design = np.array([[1.0]])
        rhs = np.array([2.0])
        x = np.array([1.0])
        grad = design.T @ (design @ x - rhs)
        assert kkt_residual(x, grad, 0.5) == pytest.approx(0.5)


class TestGicsReconstruct:
    def test_invertible_system_recovers_truth(self):
        # m = n_pix full-rank synthetic frames; centering would drop the DC
        # mode and positive square designs defeat first-order iterations, so
        # this sanity check runs uncentered with the debias polish.
        grid_n = 8
        truth = np.zeros((grid_n, grid_n))
        truth[2, 3], truth[5, 1], truth[6, 6] = 1.0, 0.7, 0.4
        ms = synthetic_measurements(np.random.default_rng(77), grid_n**2, grid_n, truth)
        system = build_sensing(ms, centered=False)
        tau = 1e-10 * float(np.abs(system.rows.T @ system.rhs).max())
        image, _ = gics_reconstruct(ms, GicsParams(tau=tau, debias=True), centered=False)
        assert np.max(np.abs(image.values - truth)) <= 1e-4

    def test_all_zero_buckets_give_zero_image(self):
        rng = np.random.default_rng(30)
        records = tuple(
            MeasurementRecord(SpeckleFrame(rng.uniform(0.5, 1.5, (16, 16)), 0, i), 0.0)
            for i in range(10))
        ms = MeasurementSet(records, CFG)
        image, _ = gics_reconstruct(ms, GicsParams(tau=1e-3), centered=False)
        assert not image.values.any()

    def test_output_is_clamped_nonnegative(self):
        mask = optics.make_double_slit(CFG, 6e-5, 1.5e-4, 1.2e-4)
        ms = run_campaign(CFG, mask, 40, 2)
        image, report = gics_reconstruct(ms, GicsParams(tau=1e-3, max_iters=200))
        assert image.values.min() >= 0.0
        assert image.provenance == "GICS"
        assert report.final_objective >= 0.0

    def test_solve_csv_format(self, tmp_path):
        system, _ = sparse_instance(31)
        tau = 0.05 * float(np.abs(system.rows.T @ system.rhs).max())
        _, report = gpsr_solve(system, GicsParams(tau=tau))
        path = tmp_path / "solve.csv"
        write_solve_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,objective,kkt_residual"
        assert len(lines) == len(report.history) + 1
        first = lines[1].split(",")
        assert int(first[0]) == 0
        assert float(first[1]) == report.history[0][1]
