from .robot import MAX_ACCEL, MAX_SPEED, ROBOT_HEIGHT, ROBOT_RADIUS, RobotState, step_robot, wrap_angle
from .sensors import (
    CameraModel,
    ClassProbMaps,
    LidarConfig,
    LocalGrid,
    NoiseConfig,
    crop_classes,
    crop_elevation,
    render_labels,
    render_semantics,
    sample_pointcloud,
)
from .world import (
    SKY,
    ClassInfo,
    ClassRegistry,
    WorldModel,
    WorldSpec,
    generate_world,
    load_world,
    save_world,
    world_from_layers,
)

__all__ = [
    "RobotState", "step_robot", "wrap_angle", "MAX_SPEED", "MAX_ACCEL", "ROBOT_RADIUS", "ROBOT_HEIGHT",
    "CameraModel", "ClassProbMaps", "LidarConfig", "LocalGrid", "NoiseConfig",
    "crop_classes", "crop_elevation", "render_labels", "render_semantics", "sample_pointcloud",
    "SKY", "ClassInfo", "ClassRegistry", "WorldModel", "WorldSpec", "generate_world",
    "load_world", "save_world", "world_from_layers",
]
