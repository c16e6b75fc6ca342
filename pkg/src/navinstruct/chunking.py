"""Turn and height classification; splitting trajectories into sub-trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .navgraph import Pose, Trajectory, normalize_angle


class HorizontalClass(Enum):
    STRAIGHT = "straight"
    SLIGHT_RIGHT = "slight_right"
    MODERATE_RIGHT = "moderate_right"
    HARD_RIGHT = "hard_right"
    SLIGHT_RIGHT_REAR = "slight_right_rear"
    SHARP_RIGHT_REAR = "sharp_right_rear"
    BACKWARD = "backward"
    SLIGHT_LEFT = "slight_left"
    MODERATE_LEFT = "moderate_left"
    HARD_LEFT = "hard_left"
    SLIGHT_LEFT_REAR = "slight_left_rear"
    SHARP_LEFT_REAR = "sharp_left_rear"

    @property
    def coarse(self) -> CoarseTurn:
        """Project the 12-way class onto straight/right/left/backward."""
        if self is HorizontalClass.STRAIGHT:
            return CoarseTurn.STRAIGHT
        if self is HorizontalClass.BACKWARD:
            return CoarseTurn.BACKWARD
        if "right" in self.value:
            return CoarseTurn.RIGHT
        return CoarseTurn.LEFT


class CoarseTurn(Enum):
    STRAIGHT = "straight"
    RIGHT = "right"
    LEFT = "left"
    BACKWARD = "backward"


class VerticalClass(Enum):
    LEVEL = "level"
    UPWARD = "upward"
    DOWNWARD = "downward"


# Band edges shared by both turn directions, in degrees.
_BANDS = (
    (45.0, HorizontalClass.SLIGHT_RIGHT, HorizontalClass.SLIGHT_LEFT),
    (75.0, HorizontalClass.MODERATE_RIGHT, HorizontalClass.MODERATE_LEFT),
    (105.0, HorizontalClass.HARD_RIGHT, HorizontalClass.HARD_LEFT),
    (135.0, HorizontalClass.SLIGHT_RIGHT_REAR, HorizontalClass.SLIGHT_LEFT_REAR),
    (165.0, HorizontalClass.SHARP_RIGHT_REAR, HorizontalClass.SHARP_LEFT_REAR),
)


def classify_horizontal(turn_angle: float) -> HorizontalClass:
    """Map a turn angle to one of the 12 horizontal classes.

    Boundary convention making the 30-degree bands total: right-side bands are
    [lower, upper) and left-side bands are (-upper, -lower]; |angle| >= 165
    is backward. The input is wrapped into (-180, 180] first.
    """
    if not math.isfinite(turn_angle):
        raise ValueError("non-finite turn angle")
    a = normalize_angle(turn_angle)
    if abs(a) >= 165.0:
        return HorizontalClass.BACKWARD
    if a >= 15.0:
        for upper, right_cls, _ in _BANDS:
            if a < upper:
                return right_cls
    if a <= -15.0:
        for upper, _, left_cls in _BANDS:
            if a > -upper:
                return left_cls
    return HorizontalClass.STRAIGHT


def classify_vertical(vertical_delta: float) -> VerticalClass:
    """Map a height change in meters to level/upward/downward.

    The +-0.2 m thresholds count as movement, not level.
    """
    if not math.isfinite(vertical_delta):
        raise ValueError("non-finite vertical delta")
    if abs(vertical_delta) < 0.2:
        return VerticalClass.LEVEL
    return VerticalClass.UPWARD if vertical_delta > 0 else VerticalClass.DOWNWARD


class ChunkKind(Enum):
    STRAIGHT_RUN = "straight_run"
    TURN = "turn"


@dataclass(frozen=True)
class SubTrajectory:
    """A contiguous step range [start, end) of a parent trajectory."""

    trajectory: Trajectory
    start: int
    end: int
    kind: ChunkKind
    horizontal: HorizontalClass

    @property
    def vertical_delta(self) -> float:
        """Aggregate height change over the step range."""
        return sum(d.vertical_delta for d in self.trajectory.deltas[self.start:self.end])

    @property
    def entry_pose(self) -> Pose:
        return self.trajectory.poses[self.start]

    @property
    def exit_pose(self) -> Pose:
        return self.trajectory.poses[self.end]

    @property
    def exit_heading(self) -> float:
        """Direction of travel along the last step, i.e. the arrival facing."""
        return self.trajectory.poses[self.end - 1].heading

    @property
    def viewpoint_ids(self) -> tuple[str, ...]:
        return tuple(p.viewpoint_id
                     for p in self.trajectory.poses[self.start:self.end + 1])


def chunk_trajectory(trajectory: Trajectory) -> list[SubTrajectory]:
    """Partition a trajectory's steps into sub-trajectories.

    Maximal runs of straight steps merge into one sub-trajectory; every
    turning step stands alone. The ranges partition [0, steps) in order.
    """
    if trajectory.steps == 0:
        raise ValueError("empty trajectory")
    classes = [classify_horizontal(d.turn_angle) for d in trajectory.deltas]
    chunks: list[SubTrajectory] = []
    run_start: int | None = None
    for i, cls in enumerate(classes):
        if cls is HorizontalClass.STRAIGHT:
            if run_start is None:
                run_start = i
            continue
        if run_start is not None:
            chunks.append(SubTrajectory(trajectory, run_start, i,
                                        ChunkKind.STRAIGHT_RUN,
                                        HorizontalClass.STRAIGHT))
            run_start = None
        chunks.append(SubTrajectory(trajectory, i, i + 1, ChunkKind.TURN, cls))
    if run_start is not None:
        chunks.append(SubTrajectory(trajectory, run_start, len(classes),
                                    ChunkKind.STRAIGHT_RUN,
                                    HorizontalClass.STRAIGHT))
    return chunks
