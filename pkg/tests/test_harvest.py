import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from harvestcell.errors import CalibrationFailed, ConfigError
from harvestcell.harvest import (STAGES, MonteCarloSummary, PickCycleConfig,
                                 TOTAL_CYCLE_SECONDS, calibrate_noise,
                                 default_stage_means, monte_carlo, plan_cycle,
                                 run_pick_cycle)
from harvestcell.perception import TargetTomato, DetectionRecord, Keypoint


def _dummy_record():
    return DetectionRecord(label="ripe", score=0.9,
                           bbox=(0.0, 0.0, 10.0, 10.0),
                           center=Keypoint(5.0, 5.0, 0.9),
                           pedicel=Keypoint(5.0, 3.0, 0.9))


def _target(center, pedicel):
    return TargetTomato(center_3d=np.asarray(center, dtype=float),
                        pedicel_3d=np.asarray(pedicel, dtype=float),
                        ripeness="ripe", estimated_radius=0.035,
                        source=_dummy_record())


def offset_gaussian_in_sphere(delta: float, sigma: float, radius: float) -> float:
    """P(|d + sigma Z| <= R) for Z ~ N(0, I3), offset magnitude d = delta.

    Integrates the radial density of a 3-D isotropic Gaussian centred a
    distance delta from the origin; the central case falls back to the
    chi(3) distribution.
    """
    if sigma == 0.0:
        return 1.0 if delta <= radius else 0.0
    if delta == 0.0:
        x = radius / sigma
        return math.erf(x / math.sqrt(2.0)) \
            - math.sqrt(2.0 / math.pi) * x * math.exp(-x * x / 2.0)

    def density(r):
        return (r / (delta * sigma * math.sqrt(2.0 * math.pi))
                * (math.exp(-((r - delta) ** 2) / (2.0 * sigma ** 2))
                   - math.exp(-((r + delta) ** 2) / (2.0 * sigma ** 2))))

    value, _ = quad(density, 0.0, radius, limit=200)
    return value


def test_default_stage_means_sum_exactly():
    means = default_stage_means()
    assert set(means) == set(STAGES)
    assert all(m > 0.0 for m in means.values())
    assert sum(means.values()) == TOTAL_CYCLE_SECONDS


def test_pick_cycle_config_validation():
    with pytest.raises(ConfigError):
        PickCycleConfig(stage_time_stddev_frac=1.5)
    with pytest.raises(ConfigError):
        PickCycleConfig(cut_zone_radius=0.0)
    with pytest.raises(ConfigError):
        PickCycleConfig(stage_time_means={"approach": 1.0})


def test_zero_noise_pedicel_at_cut_center(run_config, harvest_target,
                                          harvest_plans):
    # fixture geometry puts the pedicel at the nominal cut-zone center up to
    # float32 depth quantization
    cfg = replace(run_config.pick_cycle, pose_noise_sigma=0.0)
    report = run_pick_cycle(harvest_target, run_config.arm, run_config.scene,
                            run_config.pso, cfg, 0,
                            run_config.mechanism, harvest_plans)
    assert report.outcome == "success"
    assert report.pedicel_miss_distance < 1e-9
    assert report.holding_torque_total is not None


def test_zero_noise_exact_miss_geometry(run_config):
    # pedicel exactly on the commanded cut-zone center: miss is exactly zero
    cfg = replace(run_config.pick_cycle, pose_noise_sigma=0.0)
    center = np.array([0.45, 0.0, 0.40])
    ctd = cfg.cut_trigger_distance
    on_center = _target(center, center + np.array([0.0, 0.0, ctd]))
    report = run_pick_cycle(on_center, run_config.arm, run_config.scene,
                            run_config.pso, cfg, 0, run_config.mechanism)
    assert report.outcome == "success"
    assert report.pedicel_miss_distance == 0.0

    # pedicel placed cut_zone_radius + 0.01 beyond the zone center: miss
    off = ctd + cfg.cut_zone_radius + 0.01
    missed = _target(center, center + np.array([0.0, 0.0, off]))
    report = run_pick_cycle(missed, run_config.arm, run_config.scene,
                            run_config.pso, cfg, 0, run_config.mechanism)
    assert report.outcome == "fail_cut_missed"
    assert report.pedicel_miss_distance == pytest.approx(
        cfg.cut_zone_radius + 0.01, abs=1e-12)


def test_total_time_is_sum_of_executed_stages(run_config, harvest_target,
                                              harvest_plans):
    for seed in range(20):
        report = run_pick_cycle(harvest_target, run_config.arm,
                                run_config.scene, run_config.pso,
                                run_config.pick_cycle, seed,
                                run_config.mechanism, harvest_plans)
        total = sum(report.stage_timings[s] for s in STAGES
                    if s in report.stage_timings)
        assert abs(report.total_time - total) < 1e-12
        if report.outcome == "fail_cut_missed":
            assert set(report.stage_timings) == {"approach", "separate", "cut"}
        elif report.outcome == "success":
            assert set(report.stage_timings) == set(STAGES)


def test_run_pick_cycle_deterministic(run_config, harvest_target, harvest_plans):
    args = (harvest_target, run_config.arm, run_config.scene, run_config.pso,
            run_config.pick_cycle, 1234, run_config.mechanism, harvest_plans)
    first = run_pick_cycle(*args)
    second = run_pick_cycle(*args)
    assert first.stage_timings == second.stage_timings
    assert first.total_time == second.total_time
    assert first.outcome == second.outcome
    assert first.pedicel_miss_distance == second.pedicel_miss_distance


def test_monte_carlo_zero_noise_full_success(run_config, harvest_target,
                                             harvest_plans):
    cfg = replace(run_config.pick_cycle, pose_noise_sigma=0.0)
    summary = monte_carlo(harvest_target, run_config.arm, run_config.scene,
                          run_config.pso, cfg, 200, run_config.mechanism,
                          harvest_plans)
    assert summary.success_rate == 1.0
    assert summary.outcome_counts["success"] == 200


def test_monte_carlo_counts_partition(run_config, harvest_target, harvest_plans):
    summary = monte_carlo(harvest_target, run_config.arm, run_config.scene,
                          run_config.pso, run_config.pick_cycle, 500,
                          run_config.mechanism, harvest_plans)
    assert sum(summary.outcome_counts.values()) == summary.trials == 500
    assert summary.success_rate == summary.outcome_counts["success"] / 500


def test_monte_carlo_deterministic(run_config, harvest_target, harvest_plans):
    args = (harvest_target, run_config.arm, run_config.scene, run_config.pso,
            run_config.pick_cycle, 300, run_config.mechanism, harvest_plans)
    assert monte_carlo(*args) == monte_carlo(*args)


def test_monte_carlo_zero_time_variance_total(run_config, harvest_target,
                                              harvest_plans):
    cfg = replace(run_config.pick_cycle, pose_noise_sigma=0.0,
                  stage_time_stddev_frac=0.0)
    summary, reports = monte_carlo(harvest_target, run_config.arm,
                                   run_config.scene, run_config.pso, cfg, 50,
                                   run_config.mechanism, harvest_plans,
                                   collect_reports=True)
    assert all(r.total_time == TOTAL_CYCLE_SECONDS for r in reports)
    assert summary.total_time_mean == pytest.approx(TOTAL_CYCLE_SECONDS,
                                                    abs=1e-12)
    assert summary.total_time_std < 1e-12


def test_success_rate_monotone_in_sigma(run_config, harvest_target,
                                        harvest_plans):
    rates = []
    for sigma in (0.0, 0.002, 0.004, 0.008, 0.016):
        cfg = replace(run_config.pick_cycle, pose_noise_sigma=sigma)
        summary = monte_carlo(harvest_target, run_config.arm, run_config.scene,
                              run_config.pso, cfg, 2000, run_config.mechanism,
                              harvest_plans)
        rates.append(summary.success_rate)
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert rates[0] == 1.0


def test_cut_statistics_match_offset_gaussian(run_config):
    # noncentral case: pedicel 4 mm beyond the commanded cut center
    cfg = replace(run_config.pick_cycle, pose_noise_sigma=0.005)
    center = np.array([0.45, 0.0, 0.40])
    delta = 0.004
    target = _target(center, center + np.array(
        [0.0, 0.0, cfg.cut_trigger_distance + delta]))
    trials = 20000
    summary = monte_carlo(target, run_config.arm, run_config.scene,
                          run_config.pso, cfg, trials, run_config.mechanism)
    analytic = offset_gaussian_in_sphere(delta, cfg.pose_noise_sigma,
                                         cfg.cut_zone_radius)
    band = 3.0 * math.sqrt(analytic * (1.0 - analytic) / trials)
    assert abs(summary.success_rate - analytic) < band


def test_calibrate_noise_reaches_target(run_config, harvest_target,
                                        harvest_plans):
    sigma = calibrate_noise(harvest_target, run_config.arm, run_config.scene,
                            run_config.pso, run_config.pick_cycle, 0.80,
                            trials_per_eval=800)
    cfg = replace(run_config.pick_cycle, pose_noise_sigma=sigma, seed=20260810)
    summary = monte_carlo(harvest_target, run_config.arm, run_config.scene,
                          run_config.pso, cfg, 1000, run_config.mechanism,
                          harvest_plans)
    assert 0.75 <= summary.success_rate <= 0.85


def test_calibrate_noise_extreme_target_gives_small_sigma(run_config,
                                                          harvest_target,
                                                          harvest_plans):
    sigma = calibrate_noise(harvest_target, run_config.arm, run_config.scene,
                            run_config.pso, run_config.pick_cycle, 0.999,
                            trials_per_eval=200, tolerance=0.005)
    assert sigma < run_config.pick_cycle.cut_zone_radius / 2.0


def test_calibrate_noise_bracket_failure(run_config, harvest_target,
                                         harvest_plans):
    # even the largest sigma (5x the zone radius) keeps ~0.2% of cuts inside
    # the zone, which stays above a tiny enough target rate
    with pytest.raises(CalibrationFailed):
        calibrate_noise(harvest_target, run_config.arm, run_config.scene,
                        run_config.pso, run_config.pick_cycle, 0.0005,
                        trials_per_eval=5000)


def test_unreachable_target_counts_as_unreachable(run_config):
    target = _target([2.0, 0.0, 0.4], [2.0, 0.0, 0.42])
    summary = monte_carlo(target, run_config.arm, run_config.scene,
                          run_config.pso, run_config.pick_cycle, 5,
                          run_config.mechanism)
    assert summary.outcome_counts["fail_unreachable"] == 5
    assert summary.success_rate == 0.0
    assert summary.total_time_mean == 0.0
