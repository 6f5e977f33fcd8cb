"""Tomato-harvesting robotic cell simulator.

Modules: mechanism (gripper finger linkage and virtual-work torque), arm
(serial-chain kinematics), planner (PSO trajectory planning), perception
(detection ingestion and 2D-to-3D lifting), harvest (pick-cycle Monte
Carlo), config (YAML aggregation) and cli (command-line front end).
"""

__version__ = "0.1.0"

from .arm import (IkOptions, Joint, KinematicChain, Pose, RigidTransform,
                  forward_kinematics, inverse_kinematics, jacobian)
from .config import RunConfig, load_config, load_default_config
from .harvest import (MonteCarloSummary, PickCycleConfig, PickCycleReport,
                      calibrate_noise, default_stage_means, monte_carlo,
                      run_pick_cycle)
from .mechanism import (FingerSolution, MechanismParams, TorqueResult,
                        closure_residual, contact_point, force_torque_curve,
                        solve_finger_position, torque_single_finger,
                        xi_derivative)
from .perception import (CameraModel, DetectionRecord, TargetTomato,
                         build_target, camera_to_base, load_detections,
                         load_depth_frame, pixel_to_camera, sample_depth,
                         select_target, write_depth_frame)
from .planner import (Capsule, CollisionResult, FitnessBreakdown, PsoConfig,
                      Scene, Sphere, Trajectory, collision_check, fitness,
                      plan_trajectory)
