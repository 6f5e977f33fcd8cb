"""Joint-space trajectory planning with particle swarm optimization.

Particles encode the intermediate waypoints of a trajectory between fixed
start and goal configurations. The fitness combines joint-space path length
with penalties for collision (arm body approximated by segments between
consecutive joint origins plus the tool point) and joint-limit violation.
Given a seed the whole optimization is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arm import KinematicChain, link_points_batch
from .errors import (ConfigError, DimensionMismatch, InfeasibleEndpoints,
                     NoFeasibleFound)
from .geometry import segment_point_distance, segment_segment_distance

NO_OBSTACLE_CLEARANCE = np.finfo(float).max
SAMPLES_PER_SEGMENT = 20


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    tag: str = "other"  # "tomato" or "other"

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ConfigError("sphere radius must be > 0")


@dataclass(frozen=True)
class Capsule:
    p0: np.ndarray
    p1: np.ndarray
    radius: float
    tag: str = "branch"  # "stem" or "branch"

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ConfigError("capsule radius must be > 0")


@dataclass(frozen=True)
class Aabb:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if not np.all(lo < hi):
            raise ConfigError("workspace bounds must satisfy min < max per axis")


@dataclass(frozen=True)
class Scene:
    """Obstacle set the arm must avoid."""

    spheres: tuple[Sphere, ...] = ()
    capsules: tuple[Capsule, ...] = ()
    workspace_bounds: Aabb = field(default_factory=lambda: Aabb(
        np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0])))

    def without_sphere_containing(self, point: np.ndarray) -> "Scene":
        """Scene with any sphere that contains `point` removed (a grasped target)."""
        point = np.asarray(point, dtype=float)
        kept = tuple(
            s for s in self.spheres
            if np.linalg.norm(np.asarray(s.center, dtype=float) - point) > s.radius
        )
        return Scene(spheres=kept, capsules=self.capsules,
                     workspace_bounds=self.workspace_bounds)


@dataclass(frozen=True)
class PsoConfig:
    """Swarm hyperparameters; all runs are deterministic given `seed`.

    `penalty_margin` tightens the clearance used inside the optimization
    only, so solutions stand off obstacles instead of grazing them between
    interpolation samples; reported fitness and feasibility always use the
    plain `clearance`.
    """

    swarm_size: int = 30
    iterations: int = 150
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    waypoints_per_particle: int = 3
    seed: int = 42
    collision_penalty: float = 100.0
    limit_penalty: float = 100.0
    clearance: float = 0.01
    penalty_margin: float = 0.005

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ConfigError("swarm_size must be >= 2")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0.0 <= self.inertia <= 1.0:
            raise ConfigError("inertia must lie in [0, 1]")
        if self.cognitive < 0.0 or self.social < 0.0:
            raise ConfigError("cognitive/social weights must be >= 0")
        if self.waypoints_per_particle < 1:
            raise ConfigError("waypoints_per_particle must be >= 1")
        if self.penalty_margin < 0.0:
            raise ConfigError("penalty_margin must be >= 0")


@dataclass(frozen=True)
class FitnessBreakdown:
    score: float
    path_length: float
    collision_penalty: float
    limit_penalty: float
    colliding_samples: int


@dataclass(frozen=True)
class Trajectory:
    """Ordered joint-space waypoints including the fixed start and goal."""

    waypoints: np.ndarray  # (n_waypoints, n_joints)
    fitness: float
    feasible: bool
    breakdown: FitnessBreakdown | None = None
    gbest_trace: tuple[float, ...] | None = None


@dataclass(frozen=True)
class CollisionResult:
    colliding: bool
    min_clearance: float


def _scene_arrays(scene: Scene):
    """Obstacle parameters stacked for broadcast evaluation."""
    sphere_centers = np.array([s.center for s in scene.spheres], dtype=float) \
        if scene.spheres else None
    sphere_radii = np.array([s.radius for s in scene.spheres], dtype=float) \
        if scene.spheres else None
    capsule_p0 = np.array([c.p0 for c in scene.capsules], dtype=float) \
        if scene.capsules else None
    capsule_p1 = np.array([c.p1 for c in scene.capsules], dtype=float) \
        if scene.capsules else None
    capsule_radii = np.array([c.radius for c in scene.capsules], dtype=float) \
        if scene.capsules else None
    return sphere_centers, sphere_radii, capsule_p0, capsule_p1, capsule_radii


def _scene_bounding_sphere(scene: Scene) -> tuple[np.ndarray, float]:
    """Center and radius of a ball containing every obstacle surface."""
    anchors = [np.asarray(s.center, dtype=float) for s in scene.spheres]
    anchors += [np.asarray(c.p0, dtype=float) for c in scene.capsules]
    anchors += [np.asarray(c.p1, dtype=float) for c in scene.capsules]
    center = np.mean(anchors, axis=0)
    radius = 0.0
    for sphere in scene.spheres:
        radius = max(radius, float(np.linalg.norm(
            np.asarray(sphere.center, dtype=float) - center)) + sphere.radius)
    for capsule in scene.capsules:
        for end in (capsule.p0, capsule.p1):
            radius = max(radius, float(np.linalg.norm(
                np.asarray(end, dtype=float) - center)) + capsule.radius)
    return center, radius


def _colliding_rows(chain: KinematicChain, qs: np.ndarray, scene: Scene,
                    clearance: float) -> np.ndarray:
    """Boolean per configuration: any link segment within `clearance` of an obstacle.

    A conservative broad phase against the scene's bounding sphere prunes
    segments that provably clear every obstacle; only survivors get the
    exact narrow-phase distances.
    """
    batch = qs.shape[0]
    if not scene.spheres and not scene.capsules:
        return np.zeros(batch, dtype=bool)
    centers, radii, cap_p0, cap_p1, cap_radii = _scene_arrays(scene)
    cloud_center, cloud_radius = _scene_bounding_sphere(scene)
    pts = link_points_batch(chain, qs)          # (B, P, 3)
    seg_a = pts[:, :-1, :]
    seg_b = pts[:, 1:, :]
    coarse = segment_point_distance(seg_a, seg_b, cloud_center)
    cand_rows, cand_segs = np.nonzero(coarse - cloud_radius < clearance)
    out = np.zeros(batch, dtype=bool)
    if cand_rows.size == 0:
        return out
    sub_a = seg_a[cand_rows, cand_segs][:, None, :]   # (K, 1, 3)
    sub_b = seg_b[cand_rows, cand_segs][:, None, :]
    best = np.full(cand_rows.shape[0], np.inf)
    if centers is not None:
        dist = segment_point_distance(sub_a, sub_b, centers[None]) - radii
        best = np.minimum(best, dist.min(axis=1))
    if cap_p0 is not None:
        dist = segment_segment_distance(
            sub_a, sub_b, cap_p0[None], cap_p1[None]) - cap_radii
        best = np.minimum(best, dist.min(axis=1))
    out[cand_rows[best < clearance]] = True
    return out


def _min_clearance_batch(chain: KinematicChain, qs: np.ndarray,
                         scene: Scene) -> np.ndarray:
    """Smallest signed clearance (distance minus obstacle radius) per configuration.

    qs is (B, N); returns (B,). With no obstacles every entry is the
    NO_OBSTACLE_CLEARANCE sentinel. All obstacles of one kind are evaluated
    in a single broadcast call.
    """
    batch = qs.shape[0]
    if not scene.spheres and not scene.capsules:
        return np.full(batch, NO_OBSTACLE_CLEARANCE)
    centers, radii, cap_p0, cap_p1, cap_radii = _scene_arrays(scene)
    pts = link_points_batch(chain, qs)          # (B, P, 3)
    seg_a = pts[:, :-1, None, :]                # (B, S, 1, 3)
    seg_b = pts[:, 1:, None, :]
    best = np.full(batch, np.inf)
    if centers is not None:
        dist = segment_point_distance(seg_a, seg_b, centers[None, None]) - radii
        best = np.minimum(best, dist.min(axis=(1, 2)))
    if cap_p0 is not None:
        dist = segment_segment_distance(
            seg_a, seg_b, cap_p0[None, None], cap_p1[None, None]) - cap_radii
        best = np.minimum(best, dist.min(axis=(1, 2)))
    return best


def collision_check(chain: KinematicChain, q, scene: Scene,
                    clearance: float = 0.0) -> CollisionResult:
    """Check one configuration against the scene.

    The arm body is the polyline of consecutive joint origins plus the tool
    point; colliding means some link segment comes within `clearance` of an
    obstacle surface. min_clearance is signed (negative = penetration).
    """
    q = chain.check_q(q)
    clear = float(_min_clearance_batch(chain, q[None, :], scene)[0])
    return CollisionResult(colliding=bool(clear < clearance), min_clearance=clear)


def _interp_samples(waypoints: np.ndarray) -> np.ndarray:
    """Interpolated configurations along the polyline, SAMPLES_PER_SEGMENT per segment.

    Each segment contributes samples at t = 1/S ... S/S = 1, so waypoints
    themselves are covered once and the fixed start is excluded (its
    validity is the planner's precondition).
    """
    fractions = (np.arange(SAMPLES_PER_SEGMENT) + 1.0) / SAMPLES_PER_SEGMENT
    starts = waypoints[:-1]                     # (S, N)
    deltas = waypoints[1:] - waypoints[:-1]
    samples = starts[:, None, :] + fractions[None, :, None] * deltas[:, None, :]
    return samples.reshape(-1, waypoints.shape[1])


def _fitness_batch(flat: np.ndarray, start: np.ndarray, goal: np.ndarray,
                   chain: KinematicChain, scene: Scene,
                   config: PsoConfig) -> tuple[np.ndarray, np.ndarray]:
    """Scores and colliding-sample counts for a (B, W*N) batch of particles."""
    batch = flat.shape[0]
    n = chain.n_joints
    w = config.waypoints_per_particle
    inner = flat.reshape(batch, w, n)
    full = np.concatenate([
        np.broadcast_to(start, (batch, 1, n)),
        inner,
        np.broadcast_to(goal, (batch, 1, n)),
    ], axis=1)                                  # (B, W+2, N)

    deltas = np.diff(full, axis=1)
    path_len = np.linalg.norm(deltas, axis=2).sum(axis=1)

    lo, hi = chain.limit_arrays()
    limit_violation = (np.maximum(full - hi, 0.0)
                       + np.maximum(lo - full, 0.0)).sum(axis=(1, 2))

    counts = np.zeros(batch, dtype=int)
    if scene.spheres or scene.capsules:
        segs = full.shape[1] - 1
        fractions = (np.arange(SAMPLES_PER_SEGMENT) + 1.0) / SAMPLES_PER_SEGMENT
        samples = (full[:, :-1, None, :]
                   + fractions[None, None, :, None] * deltas[:, :, None, :])
        samples = samples.reshape(batch * segs * SAMPLES_PER_SEGMENT, n)
        colliding = _colliding_rows(chain, samples, scene,
                                    config.clearance + config.penalty_margin)
        counts = colliding.reshape(batch, segs * SAMPLES_PER_SEGMENT).sum(axis=1)

    scores = (path_len
              + config.collision_penalty * counts
              + config.limit_penalty * limit_violation)
    return scores, counts


def fitness(candidate: Trajectory | np.ndarray, chain: KinematicChain,
            scene: Scene, config: PsoConfig) -> FitnessBreakdown:
    """Score one trajectory: path length + collision and limit penalties.

    Accepts a Trajectory or a raw (n_waypoints, n_joints) array whose first
    and last rows are the fixed start and goal. Lower is better.
    """
    waypoints = candidate.waypoints if isinstance(candidate, Trajectory) else candidate
    waypoints = np.asarray(waypoints, dtype=float)
    if waypoints.ndim != 2 or waypoints.shape[1] != chain.n_joints:
        raise DimensionMismatch(
            f"expected (n_waypoints, {chain.n_joints}) array, got {waypoints.shape}"
        )
    if waypoints.shape[0] < 2:
        raise DimensionMismatch("trajectory needs at least start and goal rows")

    deltas = np.diff(waypoints, axis=0)
    path_len = float(np.linalg.norm(deltas, axis=1).sum())
    lo, hi = chain.limit_arrays()
    limit_violation = float((np.maximum(waypoints - hi, 0.0)
                             + np.maximum(lo - waypoints, 0.0)).sum())
    counts = 0
    if scene.spheres or scene.capsules:
        samples = _interp_samples(waypoints)
        counts = int(_colliding_rows(chain, samples, scene,
                                     config.clearance).sum())
    collision_term = config.collision_penalty * counts
    limit_term = config.limit_penalty * limit_violation
    return FitnessBreakdown(
        score=path_len + collision_term + limit_term,
        path_length=path_len,
        collision_penalty=collision_term,
        limit_penalty=limit_term,
        colliding_samples=counts,
    )


def recheck_feasible(trajectory: Trajectory, chain: KinematicChain, scene: Scene,
                     config: PsoConfig, resolution_factor: int = 4) -> bool:
    """Re-validate a trajectory at a finer interpolation resolution."""
    waypoints = np.asarray(trajectory.waypoints, dtype=float)
    if not scene.spheres and not scene.capsules:
        return True
    n_samples = SAMPLES_PER_SEGMENT * resolution_factor
    fractions = (np.arange(n_samples) + 1.0) / n_samples
    deltas = np.diff(waypoints, axis=0)
    samples = (waypoints[:-1, None, :] + fractions[None, :, None] * deltas[:, None, :])
    samples = samples.reshape(-1, waypoints.shape[1])
    return not bool(_colliding_rows(chain, samples, scene,
                                    config.clearance).any())


def plan_trajectory(chain: KinematicChain, start, goal, scene: Scene,
                    config: PsoConfig) -> Trajectory:
    """Global-best PSO over intermediate waypoints between start and goal.

    Particles are flattened waypoint vectors; the velocity update is
    v <- w*v + c1*r1*(pbest - x) + c2*r2*(gbest - x) with per-dimension
    uniform draws made in particle order, and positions are clamped to the
    joint limits, so results are reproducible bit-for-bit for a given seed.

    Raises InfeasibleEndpoints if start or goal already collides, and
    NoFeasibleFound (carrying the best trajectory) if the best particle
    still has colliding samples after the final iteration.
    """
    start = chain.check_q(start)
    goal = chain.check_q(goal)
    if collision_check(chain, start, scene, config.clearance).colliding:
        raise InfeasibleEndpoints("start configuration collides with the scene")
    if collision_check(chain, goal, scene, config.clearance).colliding:
        raise InfeasibleEndpoints("goal configuration collides with the scene")

    n = chain.n_joints
    w = config.waypoints_per_particle
    dims = w * n
    lo, hi = chain.limit_arrays()

    # sampling box: per-joint span of {start, goal} inflated by 20%, clipped to limits
    box_lo = np.minimum(start, goal)
    box_hi = np.maximum(start, goal)
    span = box_hi - box_lo
    box_lo = np.maximum(box_lo - 0.2 * span, lo)
    box_hi = np.minimum(box_hi + 0.2 * span, hi)

    rng = np.random.default_rng(config.seed)
    positions = rng.uniform(
        np.tile(box_lo, w), np.tile(box_hi, w), size=(config.swarm_size, dims))
    line = np.linspace(start, goal, w + 2)[1:-1]
    positions[0] = line.reshape(-1)
    velocities = np.zeros_like(positions)

    scores, _ = _fitness_batch(positions, start, goal, chain, scene, config)
    pbest_pos = positions.copy()
    pbest_score = scores.copy()
    gbest_idx = int(np.argmin(scores))
    gbest_pos = positions[gbest_idx].copy()
    gbest_score = float(scores[gbest_idx])
    trace = [gbest_score]

    for _ in range(config.iterations):
        r1 = rng.random((config.swarm_size, dims))
        r2 = rng.random((config.swarm_size, dims))
        velocities = (config.inertia * velocities
                      + config.cognitive * r1 * (pbest_pos - positions)
                      + config.social * r2 * (gbest_pos[None, :] - positions))
        positions = np.clip(positions + velocities,
                            np.tile(lo, w), np.tile(hi, w))
        scores, _ = _fitness_batch(positions, start, goal, chain, scene, config)
        improved = scores < pbest_score
        pbest_pos[improved] = positions[improved]
        pbest_score[improved] = scores[improved]
        best_idx = int(np.argmin(pbest_score))
        if float(pbest_score[best_idx]) < gbest_score:
            gbest_score = float(pbest_score[best_idx])
            gbest_pos = pbest_pos[best_idx].copy()
        trace.append(gbest_score)

    waypoints = np.vstack([start, gbest_pos.reshape(w, n), goal])
    breakdown = fitness(waypoints, chain, scene, config)
    feasible = breakdown.colliding_samples == 0 and breakdown.limit_penalty == 0.0
    result = Trajectory(
        waypoints=waypoints,
        fitness=breakdown.score,
        feasible=feasible,
        breakdown=breakdown,
        gbest_trace=tuple(trace),
    )
    if not feasible:
        raise NoFeasibleFound(result)
    return result
