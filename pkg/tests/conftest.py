import numpy as np
import pytest

import harvestcell as hc
from harvestcell.harvest import plan_cycle
from harvestcell.perception import (DetectionRecord, Keypoint, save_detections,
                                    write_depth_frame)


@pytest.fixture(scope="session")
def run_config():
    return hc.load_default_config()


@pytest.fixture
def params():
    return hc.MechanismParams()


@pytest.fixture(scope="session")
def detection_fixture(tmp_path_factory):
    """Detection JSON + uniform 0.35 m depth frame matching the default camera.

    The ripe tomato sits on the optical axis at 0.35 m, which the default
    extrinsics map to (0.45, 0, 0.40) in the base frame with the pedicel
    0.02 m above it.
    """
    root = tmp_path_factory.mktemp("detections")
    det_path = root / "detections.json"
    depth_path = root / "depth.bin"
    records = [
        DetectionRecord(label="ripe", score=0.92, bbox=(570, 290, 710, 430),
                        center=Keypoint(640, 360, 0.95),
                        pedicel=Keypoint(640, 320, 0.90)),
        DetectionRecord(label="unripe", score=0.85, bbox=(330, 280, 430, 380),
                        center=Keypoint(380, 330, 0.90),
                        pedicel=Keypoint(380, 305, 0.80)),
    ]
    save_detections(det_path, records)
    write_depth_frame(depth_path, np.full((720, 1280), 0.35, dtype=np.float32))
    return det_path, depth_path


@pytest.fixture(scope="session")
def harvest_target(run_config, detection_fixture):
    det_path, depth_path = detection_fixture
    records = hc.load_detections(
        det_path, (run_config.camera.width, run_config.camera.height))
    depth = hc.load_depth_frame(depth_path)
    return hc.select_target(records, run_config.camera, depth)


@pytest.fixture(scope="session")
def harvest_plans(run_config, harvest_target):
    """Shared cycle planning result; planning is deterministic, so computing
    it once keeps the Monte Carlo tests fast."""
    plans = plan_cycle(harvest_target, run_config.arm, run_config.scene,
                       run_config.pso, run_config.pick_cycle)
    assert plans.failure_stage is None
    return plans
