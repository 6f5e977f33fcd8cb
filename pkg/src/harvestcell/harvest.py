"""Six-stage pick-cycle state machine with Monte Carlo evaluation.

One cycle runs approach -> separate -> cut -> grasp -> depart -> release.
Approach and depart are planned with the PSO planner; the cut succeeds when
the pedicel falls inside the spherical cut zone around the cutter keypoint
after the gripper pose is perturbed by seeded isotropic Gaussian noise.
Stage durations are truncated-Gaussian draws around configurable means.

Everything is deterministic given a trial seed: per-trial randomness is
split into independent duration and pose-noise streams so changing the
noise level never shifts the duration draws (common-random-numbers
calibration relies on this).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import mechanism
from .arm import IkOptions, KinematicChain, solve_ik_point
from .errors import (CalibrationFailed, ConfigError, InfeasibleEndpoints,
                     NoConvergence, NoFeasibleFound)
from .mechanism import MechanismParams
from .perception import TargetTomato
from .planner import PsoConfig, Scene, Trajectory, plan_trajectory

STAGES = ("approach", "separate", "cut", "grasp", "depart", "release")
OUTCOMES = ("success", "fail_cut_missed", "fail_no_plan", "fail_unreachable")

TOTAL_CYCLE_SECONDS = 24.34


def default_stage_means() -> dict[str, float]:
    """Shipped per-stage duration means (seconds); they sum to 24.34 s."""
    return {
        "approach": 6.0,
        "separate": 3.5,
        "cut": 2.5,
        "grasp": 3.0,
        "depart": 6.0,
        "release": 3.34,
    }


@dataclass(frozen=True)
class PickCycleConfig:
    """Timing, noise and cut-geometry settings of one pick cycle.

    cut_trigger_distance is the depth threshold that fires the cutter: at
    fire time the cutter keypoint sits that far from the tomato center
    along the center-to-pedicel direction. Matching it to the actual
    pedicel offset gives zero systematic cut error.
    """

    stage_time_means: dict[str, float] = field(default_factory=default_stage_means)
    stage_time_stddev_frac: float = 0.1
    pose_noise_sigma: float = 0.0046
    cut_zone_radius: float = 0.010
    cut_trigger_distance: float = 0.020
    insertion_depth: float = 0.080
    grasp_force: float = 5.0
    grasp_theta_deg: float = 60.0
    punnet_position: np.ndarray = field(
        default_factory=lambda: np.array([0.10, -0.30, 0.30]))
    seed: int = 1234

    def __post_init__(self):
        if set(self.stage_time_means) != set(STAGES):
            raise ConfigError(
                f"stage_time_means must have exactly the stages {STAGES}")
        for stage, mean in self.stage_time_means.items():
            if not mean > 0.0:
                raise ConfigError(f"stage mean for '{stage}' must be > 0")
        if not 0.0 <= self.stage_time_stddev_frac < 1.0:
            raise ConfigError("stage_time_stddev_frac must lie in [0, 1)")
        if self.pose_noise_sigma < 0.0:
            raise ConfigError("pose_noise_sigma must be >= 0")
        if not self.cut_zone_radius > 0.0:
            raise ConfigError("cut_zone_radius must be > 0")
        if not self.cut_trigger_distance > 0.0:
            raise ConfigError("cut_trigger_distance must be > 0")
        if not self.insertion_depth > 0.0:
            raise ConfigError("insertion_depth must be > 0")
        if self.grasp_force < 0.0:
            raise ConfigError("grasp_force must be >= 0")


@dataclass(frozen=True)
class PickCycleReport:
    """Outcome of one simulated cycle; timings cover executed stages only."""

    stage_timings: dict[str, float]
    total_time: float
    outcome: str
    pedicel_miss_distance: float | None
    trajectory_used: Trajectory | None
    holding_torque_total: float | None


@dataclass(frozen=True)
class MonteCarloSummary:
    trials: int
    success_rate: float
    outcome_counts: dict[str, int]
    total_time_mean: float
    total_time_std: float
    stage_time_mean: dict[str, float]
    stage_time_std: dict[str, float]


@dataclass(frozen=True)
class CyclePlans:
    """Deterministic per-target planning results shared by all trials."""

    q_pregrasp: np.ndarray | None = None
    q_grasp: np.ndarray | None = None
    q_punnet: np.ndarray | None = None
    approach_trajectory: Trajectory | None = None
    depart_trajectory: Trajectory | None = None
    nominal_cut_center: np.ndarray | None = None
    failure_stage: str | None = None
    failure_outcome: str | None = None


def plan_cycle(target: TargetTomato, chain: KinematicChain, scene: Scene,
               planner_config: PsoConfig,
               cycle_config: PickCycleConfig) -> CyclePlans:
    """Plan the kinematic skeleton of a cycle (no randomness involved).

    Computes the pre-grasp and grasp IK solutions, the approach and depart
    trajectories and the nominal cut-zone center. Failures are recorded as
    (failure_stage, failure_outcome) rather than raised, so Monte Carlo
    trials can account them as cycle outcomes.
    """
    if chain.home_q is None:
        raise ConfigError("chain has no home_q; harvest cycles need one")
    center = np.asarray(target.center_3d, dtype=float)
    pedicel = np.asarray(target.pedicel_3d, dtype=float)
    toward_pedicel = pedicel - center
    length = float(np.linalg.norm(toward_pedicel))
    toward_pedicel /= length
    pregrasp_pos = center - cycle_config.insertion_depth * toward_pedicel
    nominal_cut_center = center + cycle_config.cut_trigger_distance * toward_pedicel

    ik_opts = IkOptions()
    try:
        q_pregrasp = solve_ik_point(chain, pregrasp_pos, toward_pedicel,
                                    chain.home_q, ik_opts)
    except NoConvergence:
        return CyclePlans(failure_stage="approach",
                          failure_outcome="fail_unreachable")
    try:
        approach = plan_trajectory(chain, chain.home_q, q_pregrasp, scene,
                                   planner_config)
    except (InfeasibleEndpoints, NoFeasibleFound):
        return CyclePlans(q_pregrasp=q_pregrasp, failure_stage="approach",
                          failure_outcome="fail_no_plan")

    # separate: advance by insertion_depth so the gripper center reaches the tomato
    try:
        q_grasp = solve_ik_point(chain, center, toward_pedicel, q_pregrasp, ik_opts)
    except NoConvergence:
        return CyclePlans(q_pregrasp=q_pregrasp, approach_trajectory=approach,
                          failure_stage="separate",
                          failure_outcome="fail_unreachable")

    # depart: the grasped tomato leaves the scene; retract to pre-grasp and go
    scene_after = scene.without_sphere_containing(center)
    try:
        q_punnet = solve_ik_point(chain, cycle_config.punnet_position,
                                  np.array([0.0, 0.0, -1.0]), chain.home_q,
                                  ik_opts)
    except NoConvergence:
        return CyclePlans(q_pregrasp=q_pregrasp, q_grasp=q_grasp,
                          approach_trajectory=approach,
                          failure_stage="depart",
                          failure_outcome="fail_unreachable")
    try:
        depart = plan_trajectory(chain, q_pregrasp, q_punnet, scene_after,
                                 planner_config)
    except (InfeasibleEndpoints, NoFeasibleFound):
        return CyclePlans(q_pregrasp=q_pregrasp, q_grasp=q_grasp,
                          q_punnet=q_punnet, approach_trajectory=approach,
                          failure_stage="depart", failure_outcome="fail_no_plan")

    return CyclePlans(q_pregrasp=q_pregrasp, q_grasp=q_grasp, q_punnet=q_punnet,
                      approach_trajectory=approach, depart_trajectory=depart,
                      nominal_cut_center=nominal_cut_center)


def _sample_duration(rng: np.random.Generator, mean: float, frac: float) -> float:
    """Truncated-at-zero Gaussian duration (resample on a non-positive draw)."""
    if frac == 0.0:
        return mean
    while True:
        value = mean + frac * mean * rng.standard_normal()
        if value > 0.0:
            return value


def run_pick_cycle(target: TargetTomato, chain: KinematicChain, scene: Scene,
                   planner_config: PsoConfig, cycle_config: PickCycleConfig,
                   trial_seed: int,
                   mechanism_params: MechanismParams | None = None,
                   plans: CyclePlans | None = None) -> PickCycleReport:
    """Simulate one pick cycle; fully deterministic given trial_seed.

    Stage order is fixed. Planning failures map to fail_no_plan /
    fail_unreachable outcomes; a pedicel outside the displaced cut zone
    gives fail_cut_missed with the miss distance recorded. Timings are
    reported only for stages that actually executed.
    """
    if plans is None:
        plans = plan_cycle(target, chain, scene, planner_config, cycle_config)
    if mechanism_params is None:
        mechanism_params = MechanismParams()

    seed_seq = np.random.SeedSequence(trial_seed)
    time_ss, noise_ss = seed_seq.spawn(2)
    rng_time = np.random.default_rng(time_ss)
    rng_noise = np.random.default_rng(noise_ss)

    timings: dict[str, float] = {}
    frac = cycle_config.stage_time_stddev_frac

    def finish(outcome, miss=None, torque=None):
        total = 0.0
        for stage in STAGES:
            if stage in timings:
                total += timings[stage]
        return PickCycleReport(
            stage_timings=dict(timings),
            total_time=total,
            outcome=outcome,
            pedicel_miss_distance=miss,
            trajectory_used=plans.approach_trajectory,
            holding_torque_total=torque,
        )

    def run_stage(stage):
        timings[stage] = _sample_duration(
            rng_time, cycle_config.stage_time_means[stage], frac)

    # APPROACH
    if plans.failure_stage == "approach":
        return finish(plans.failure_outcome)
    run_stage("approach")

    # SEPARATE
    if plans.failure_stage == "separate":
        return finish(plans.failure_outcome)
    run_stage("separate")

    # CUT: displace the commanded cut-zone center by seeded Gaussian noise
    run_stage("cut")
    noise = cycle_config.pose_noise_sigma * rng_noise.standard_normal(3)
    achieved_center = np.asarray(plans.nominal_cut_center, dtype=float) + noise
    miss = float(np.linalg.norm(
        np.asarray(target.pedicel_3d, dtype=float) - achieved_center))
    if miss > cycle_config.cut_zone_radius:
        return finish("fail_cut_missed", miss=miss)

    # GRASP: record the commanded holding torque from the gripper model
    torque = mechanism.torque_single_finger(
        mechanism_params, cycle_config.grasp_theta_deg,
        cycle_config.grasp_force).torque_total
    run_stage("grasp")

    # DEPART
    if plans.failure_stage == "depart":
        return finish(plans.failure_outcome, miss=miss, torque=torque)
    run_stage("depart")

    # RELEASE
    run_stage("release")
    return finish("success", miss=miss, torque=torque)


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def monte_carlo(target: TargetTomato, chain: KinematicChain, scene: Scene,
                planner_config: PsoConfig, cycle_config: PickCycleConfig,
                trials: int,
                mechanism_params: MechanismParams | None = None,
                plans: CyclePlans | None = None,
                collect_reports: bool = False):
    """Aggregate statistics over seeded trials (trial_seed = seed + index).

    Planning is deterministic per target, so it runs once and is shared by
    all trials. Returns a MonteCarloSummary, or (summary, reports) when
    collect_reports is set. Time statistics cover successful trials only.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if plans is None:
        plans = plan_cycle(target, chain, scene, planner_config, cycle_config)

    counts = {outcome: 0 for outcome in OUTCOMES}
    totals: list[float] = []
    stage_values: dict[str, list[float]] = {stage: [] for stage in STAGES}
    reports: list[PickCycleReport] = []
    for i in range(trials):
        report = run_pick_cycle(target, chain, scene, planner_config,
                                cycle_config, cycle_config.seed + i,
                                mechanism_params, plans)
        counts[report.outcome] += 1
        if report.outcome == "success":
            totals.append(report.total_time)
            for stage in STAGES:
                stage_values[stage].append(report.stage_timings[stage])
        if collect_reports:
            reports.append(report)

    total_mean, total_std = _mean_std(totals)
    stage_mean = {}
    stage_std = {}
    for stage in STAGES:
        stage_mean[stage], stage_std[stage] = _mean_std(stage_values[stage])
    summary = MonteCarloSummary(
        trials=trials,
        success_rate=counts["success"] / trials,
        outcome_counts=counts,
        total_time_mean=total_mean,
        total_time_std=total_std,
        stage_time_mean=stage_mean,
        stage_time_std=stage_std,
    )
    if collect_reports:
        return summary, reports
    return summary


def calibrate_noise(target: TargetTomato, chain: KinematicChain, scene: Scene,
                    planner_config: PsoConfig, cycle_config: PickCycleConfig,
                    target_rate: float, trials_per_eval: int = 500,
                    tolerance: float = 0.02) -> float:
    """Bisect the pose-noise sigma to reach a requested success rate.

    Every evaluation reuses the same trial seeds (common random numbers),
    making the empirical rate monotone non-increasing in sigma, so plain
    bisection on [0, 5 * cut_zone_radius] applies. Raises CalibrationFailed
    when the bracket endpoints do not straddle the target rate.
    """
    if not 0.0 < target_rate < 1.0:
        raise ConfigError("target_rate must lie strictly between 0 and 1")
    plans = plan_cycle(target, chain, scene, planner_config, cycle_config)

    def rate_at(sigma: float) -> float:
        cfg = replace(cycle_config, pose_noise_sigma=sigma)
        summary = monte_carlo(target, chain, scene, planner_config, cfg,
                              trials_per_eval, plans=plans)
        return summary.success_rate

    sigma_max = 5.0 * cycle_config.cut_zone_radius
    rate_lo = rate_at(0.0)
    rate_hi = rate_at(sigma_max)
    if rate_lo < target_rate or rate_hi > target_rate:
        raise CalibrationFailed(
            f"bracket rates [{rate_hi:.3f}, {rate_lo:.3f}] do not straddle "
            f"target {target_rate:.3f}"
        )

    lo, hi = 0.0, sigma_max
    mid = 0.5 * (lo + hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        rate = rate_at(mid)
        if abs(rate - target_rate) <= tolerance:
            return mid
        if rate > target_rate:
            lo = mid
        else:
            hi = mid
    return mid
