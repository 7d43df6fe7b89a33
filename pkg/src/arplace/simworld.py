"""Synthetic navigate-reach-grasp world.

Stands in for a physics simulator: trials are labeled by an analytic grasp
geometry plus stochastic navigation noise and a controller local-minimum
failure, so ground truth is available for oracles.

The gripper must approach along the object's handle axis: the feasible base
region is a corridor aligned with the handle direction, tapering with
distance (a distant robot has less lateral arm slack). Lateral misalignment
makes the grasp slip off; standing too close or too far leaves the gripper
empty. Failure causes mirror the stages of the action sequence.
"""

from __future__ import annotations

import json
import math
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .geometry import ObjectFeatures, RobotOffset, TableEdge, wrap_angle

SUCCESS = "success"
FAILURE = "failure"

CAUSES = (
    "none",
    "unreachable_theory",
    "table_collision",
    "object_collision",
    "empty_grip",
    "slip",
    "local_minimum",
)


@dataclass(frozen=True)
class WorldConfig:
    table_polygon: tuple[TableEdge, ...] = ()
    robot_radius: float = 0.10
    reach_min: float = 0.25
    reach_max: float = 0.95
    reach_halfangle: float = 1.45
    nav_noise_sigma: float = 0.01
    grasp_margin: float = 0.03
    local_minimum_rate: float = 0.01
    seed: int = 0
    # grasp geometry of the synthetic gripper/object pair
    handle_length: float = 0.12
    corridor_width: float = 0.60
    corridor_taper: float = 0.65
    table_margin: float = 0.02
    min_object_clearance: float = 0.18

    def __post_init__(self):
        if not (0.0 < self.reach_min < self.reach_max):
            raise ValueError("need 0 < reach_min < reach_max")
        if self.robot_radius <= 0:
            raise ValueError("robot_radius must be positive")
        if not (0.0 <= self.local_minimum_rate <= 1.0):
            raise ValueError("local_minimum_rate must be in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["table_polygon"] = [
            {"p0": list(e.p0), "p1": list(e.p1), "inward_normal": list(e.inward_normal)}
            for e in self.table_polygon
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        d = dict(d)
        edges = tuple(
            TableEdge(tuple(e["p0"]), tuple(e["p1"]), tuple(e["inward_normal"]))
            for e in d.pop("table_polygon", [])
        )
        return cls(table_polygon=edges, **d)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "WorldConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class TrialRecord:
    object: ObjectFeatures
    robot: RobotOffset
    label: str
    cause: str

    def __post_init__(self):
        if self.label == SUCCESS and self.cause != "none":
            raise ValueError("successful trials carry no failure cause")
        if self.cause not in CAUSES:
            raise ValueError(f"unknown cause {self.cause!r}")

    @property
    def executed(self) -> bool:
        return self.cause != "unreachable_theory"


@dataclass
class Dataset:
    world: WorldConfig
    object_grid: list[ObjectFeatures]
    robot_grid: list[RobotOffset]
    records: list[TrialRecord] = field(default_factory=list)

    def slice_for(self, obj: ObjectFeatures) -> list[TrialRecord]:
        return [r for r in self.records if r.object == obj]

    def executed_count(self) -> int:
        return sum(1 for r in self.records if r.executed)

    def save_csv(self, path, header_lines: list[str] | None = None):
        with open(path, "w", newline="") as f:
            for line in header_lines or []:
                f.write(f"# {line}\n")
            w = csv.writer(f)
            w.writerow(["object_dx", "object_dpsi", "robot_dx", "robot_dy", "label", "cause"])
            for r in self.records:
                w.writerow([
                    f"{r.object.dx_obj:.17g}", f"{r.object.dpsi_obj:.17g}",
                    f"{r.robot.dx_rob:.17g}", f"{r.robot.dy_rob:.17g}",
                    r.label, r.cause,
                ])

    @classmethod
    def load_csv(cls, path, world: WorldConfig) -> "Dataset":
        records = []
        with open(path) as f:
            rows = [ln for ln in f if not ln.startswith("#")]
        reader = csv.DictReader(rows)
        for row in reader:
            records.append(TrialRecord(
                object=ObjectFeatures(float(row["object_dx"]), float(row["object_dpsi"])),
                robot=RobotOffset(float(row["robot_dx"]), float(row["robot_dy"])),
                label=row["label"], cause=row["cause"],
            ))
        object_grid, robot_grid = [], []
        for r in records:
            if r.object not in object_grid:
                object_grid.append(r.object)
            if r.robot not in robot_grid:
                robot_grid.append(r.robot)
        return cls(world=world, object_grid=object_grid, robot_grid=robot_grid, records=records)


def handle_position(obj: ObjectFeatures, world: WorldConfig) -> tuple[float, float]:
    """Grasp handle in the GSM frame; the object sits at (-dx_obj, 0)."""
    return (-obj.dx_obj + world.handle_length * math.cos(obj.dpsi_obj),
            world.handle_length * math.sin(obj.dpsi_obj))


def _handle_bearing(xb: float, yb: float, hx: float, hy: float) -> float:
    """Bearing of the handle relative to the robot front (the robot faces the
    table, i.e. the -x direction)."""
    return abs(wrap_angle(math.atan2(hy - yb, hx - xb) - math.pi))


def corridor_coords(obj: ObjectFeatures, xb: float, yb: float,
                    world: WorldConfig) -> tuple[float, float]:
    """Base position in the handle-axis frame: (along, lateral) where the
    axis points from the handle away from the object at angle dpsi_obj."""
    hx, hy = handle_position(obj, world)
    ux, uy = math.cos(obj.dpsi_obj), math.sin(obj.dpsi_obj)
    rx, ry = xb - hx, yb - hy
    return (rx * ux + ry * uy, -rx * uy + ry * ux)


def corridor_halfwidth(along: float, world: WorldConfig) -> float:
    """Lateral arm slack at a given stand-off distance; shrinks linearly
    with distance from the near end of the reach interval."""
    w = world.corridor_width - world.corridor_taper * (along - world.reach_min)
    return max(0.5 * w, 0.0)


def theoretically_reachable(obj: ObjectFeatures, robot: RobotOffset,
                            world: WorldConfig) -> bool:
    """Kinematic upper bound: corridor membership without the gripper
    margins, plus table clearance and the coarse arm-sector limit. A
    superset of every practically successful pose."""
    if robot.dx_rob < world.robot_radius:
        return False
    along, lateral = corridor_coords(obj, robot.dx_rob, robot.dy_rob, world)
    if not (world.reach_min <= along <= world.reach_max):
        return False
    if abs(lateral) > corridor_halfwidth(along, world):
        return False
    hx, hy = handle_position(obj, world)
    return _handle_bearing(robot.dx_rob, robot.dy_rob, hx, hy) <= world.reach_halfangle


def grasp_outcome(obj: ObjectFeatures, xb: float, yb: float,
                  world: WorldConfig) -> str:
    """Deterministic outcome of the reach-grasp stages at an achieved base
    position (local-minimum events excluded). Returns a cause, "none" on
    success."""
    if xb < world.robot_radius + world.table_margin:
        return "table_collision"
    if math.hypot(xb + obj.dx_obj, yb) < world.min_object_clearance:
        return "object_collision"
    along, lateral = corridor_coords(obj, xb, yb, world)
    if not (world.reach_min + world.grasp_margin <= along
            <= world.reach_max - world.grasp_margin):
        return "empty_grip"
    hx, hy = handle_position(obj, world)
    if _handle_bearing(xb, yb, hx, hy) > world.reach_halfangle:
        return "empty_grip"
    if abs(lateral) > corridor_halfwidth(along, world) - world.grasp_margin:
        return "slip"
    return "none"


def geometric_success(obj: ObjectFeatures, robot: RobotOffset, world: WorldConfig) -> bool:
    """Noise-free success predicate (ground truth for oracles)."""
    return grasp_outcome(obj, robot.dx_rob, robot.dy_rob, world) == "none"


def execute_trial(obj: ObjectFeatures, robot: RobotOffset, world: WorldConfig,
                  rng: np.random.Generator, check_reachability: bool = True) -> TrialRecord:
    """Run one navigate-reach-grasp trial.

    Theoretically unreachable commands are labeled without simulation. The
    achieved base pose is the command plus Gaussian navigation noise; the
    first failing stage determines the cause.
    """
    if check_reachability and not theoretically_reachable(obj, robot, world):
        return TrialRecord(obj, robot, FAILURE, "unreachable_theory")
    noise = rng.normal(0.0, 1.0, size=2) * world.nav_noise_sigma
    xb = robot.dx_rob + noise[0]
    yb = robot.dy_rob + noise[1]
    cause = grasp_outcome(obj, xb, yb, world)
    if cause in ("table_collision", "object_collision"):
        return TrialRecord(obj, robot, FAILURE, cause)
    if rng.uniform() < world.local_minimum_rate:
        return TrialRecord(obj, robot, FAILURE, "local_minimum")
    if cause != "none":
        return TrialRecord(obj, robot, FAILURE, cause)
    return TrialRecord(obj, robot, SUCCESS, "none")


def _trial_batch(args):
    world, pairs, seed, use_filter = args
    out = []
    for idx, obj, rob in pairs:
        rng = np.random.default_rng((seed, idx))
        out.append((idx, execute_trial(obj, rob, world, rng, check_reachability=use_filter)))
    return out


def generate_dataset(world: WorldConfig, object_grid, robot_grid, seed: int,
                     use_capability_filter: bool = True, workers: int = 1) -> Dataset:
    """One trial per (object, robot) pair, each on an independent RNG stream
    derived from (seed, pair index) so results do not depend on scheduling."""
    if not object_grid or not robot_grid:
        raise ValueError("grids must be non-empty")
    pairs = [(i * len(robot_grid) + j, obj, rob)
             for i, obj in enumerate(object_grid)
             for j, rob in enumerate(robot_grid)]
    if workers > 1:
        chunks = [pairs[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = []
            for batch in ex.map(_trial_batch,
                                [(world, c, seed, use_capability_filter) for c in chunks]):
                results.extend(batch)
    else:
        results = _trial_batch((world, pairs, seed, use_capability_filter))
    results.sort(key=lambda t: t[0])
    return Dataset(world=world, object_grid=list(object_grid),
                   robot_grid=list(robot_grid), records=[r for _, r in results])


def default_world(seed: int = 0) -> WorldConfig:
    edge = TableEdge(p0=(0.0, -1.5), p1=(0.0, 1.5), inward_normal=(-1.0, 0.0))
    return WorldConfig(table_polygon=(edge,), seed=seed)


def default_object_grid() -> list[ObjectFeatures]:
    """4 x 4 = 16 object poses spanning the trained feature ranges."""
    return [ObjectFeatures(dx, dpsi)
            for dx in (0.05, 0.11, 0.17, 0.23)
            for dpsi in (-0.6, -0.2, 0.2, 0.6)]


def default_robot_grid() -> list[RobotOffset]:
    """16 x 27 = 432 candidate base positions in the bounding rectangle."""
    xs = np.linspace(0.15, 1.05, 16)
    ys = np.linspace(-0.78, 0.78, 27)
    return [RobotOffset(float(x), float(y)) for x in xs for y in ys]
