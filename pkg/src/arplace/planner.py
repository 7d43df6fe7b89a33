"""Miniature transformational planner.

Plans are small trees of sequence / at-location / perceive / achieve nodes.
Location goals are designators: symbolic descriptions resolved against
success-probability maps when needed. Projection simulates a plan against a
scene and yields a timestamped event trace; the merge transformation rewrites
two pick-up tasks to share a single base location when the merged map still
promises a high joint success probability.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .geometry import ObjectFeatures
from .grids import ARPlaceGrid, GridSpec
from .placemap import (GaussianBelief, apply_robot_uncertainty, best_cell,
                       compute_map, merge)
from .shapemodel import GSMModel
from .simworld import WorldConfig, grasp_outcome

MERGE_THRESHOLD = 0.85

SEQUENCE = "sequence"
AT_LOCATION = "at_location"
PERCEIVE = "perceive"
ACHIEVE = "achieve"
_KINDS = (SEQUENCE, AT_LOCATION, PERCEIVE, ACHIEVE)

_uid_counter = itertools.count(1)


class UnresolvableDesignatorError(RuntimeError):
    pass


@dataclass
class Designator:
    """Symbolic location description: what it is for, which objects it must
    reach, and — once an ARPlace query ran — the chosen world-frame cell and
    its success probability."""

    purpose: str                       # pick_up | put_down | joint_pick_up
    objects: tuple[str, ...]
    resolved: tuple[tuple[float, float], float] | None = None
    uid: int = field(default_factory=lambda: next(_uid_counter))

    def __post_init__(self):
        if self.purpose not in ("pick_up", "put_down", "joint_pick_up"):
            raise ValueError(f"unknown designator purpose {self.purpose!r}")
        self.objects = tuple(self.objects)

    @property
    def target(self) -> tuple[float, float]:
        if self.resolved is None:
            raise UnresolvableDesignatorError("designator not yet resolved")
        return self.resolved[0]


@dataclass
class PlanNode:
    """Plan tree node. `goal` is a symbolic tuple such as
    ('entity-picked-up', 'cup-a'); at_location nodes carry the location
    designator their children run under."""

    kind: str
    goal: tuple | None = None
    location: Designator | None = None
    children: list["PlanNode"] = field(default_factory=list)
    uid: int = field(default_factory=lambda: next(_uid_counter))

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.kind == AT_LOCATION and self.location is None:
            raise ValueError("at_location requires a location designator")
        if self.kind != AT_LOCATION and self.location is not None:
            raise ValueError("only at_location carries a location")

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def copy(self) -> "PlanNode":
        """Structural copy preserving node and designator identities (uids),
        so flaws detected on the original still match."""
        return PlanNode(kind=self.kind, goal=self.goal, location=self.location,
                        children=[c.copy() for c in self.children], uid=self.uid)

    def find(self, uid: int) -> "PlanNode | None":
        for node in self.walk():
            if node.uid == uid:
                return node
        return None


def sequence(*children: PlanNode) -> PlanNode:
    return PlanNode(SEQUENCE, children=list(children))


def at_location(location: Designator, *children: PlanNode) -> PlanNode:
    return PlanNode(AT_LOCATION, location=location, children=list(children))


def perceive(object_name: str) -> PlanNode:
    return PlanNode(PERCEIVE, goal=("object-pose", object_name))


def achieve_grasp(object_name: str) -> PlanNode:
    return PlanNode(ACHIEVE, goal=("entity-picked-up", object_name))


def pickup_task(object_name: str) -> PlanNode:
    """at-location(pick_up obj) { perceive(obj); achieve(entity-picked-up obj) }"""
    loc = Designator("pick_up", (object_name,))
    return at_location(loc, perceive(object_name), achieve_grasp(object_name))


def two_pickup_plan(name_a: str = "cup-a", name_b: str = "cup-b") -> PlanNode:
    return sequence(pickup_task(name_a), pickup_task(name_b))


# ---------------------------------------------------------------------------
# plan serialization (s-expressions)
# ---------------------------------------------------------------------------

def plan_to_sexp(node: PlanNode) -> str:
    parts = [node.kind.replace("_", "-")]
    if node.goal is not None:
        parts.append("(" + " ".join(str(v) for v in node.goal) + ")")
    d = node.location
    if d is not None:
        fields = [f"a location (to {d.purpose.replace('_', '-')})",
                  "(objects " + " ".join(d.objects) + ")"]
        if d.resolved is not None:
            (x, y), p = d.resolved
            fields.append(f"(resolved {x:.17g} {y:.17g} {p:.17g})")
        parts.append("(" + " ".join(fields) + ")")
    parts.extend(plan_to_sexp(c) for c in node.children)
    return "(" + " ".join(parts) + ")"


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _read(tokens: list[str], pos: int):
    if tokens[pos] != "(":
        return tokens[pos], pos + 1
    items = []
    pos += 1
    while tokens[pos] != ")":
        item, pos = _read(tokens, pos)
        items.append(item)
    return items, pos + 1


def _parse_location(items) -> Designator:
    purpose = None
    objects: tuple[str, ...] = ()
    resolved = None
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, list):
            if item and item[0] == "to":
                purpose = item[1].replace("-", "_")
            elif item and item[0] == "objects":
                objects = tuple(item[1:])
            elif item and item[0] == "resolved":
                x, y, p = (float(v) for v in item[1:4])
                resolved = ((x, y), p)
        i += 1
    return Designator(purpose, objects, resolved)


def _sexp_to_node(items) -> PlanNode:
    kind = items[0].replace("-", "_")
    goal = None
    location = None
    children = []
    for item in items[1:]:
        if not isinstance(item, list):
            continue
        if item and item[0] == "a" and item[1] == "location":
            location = _parse_location(item[2:])
        elif item and item[0].replace("-", "_") in _KINDS:
            children.append(_sexp_to_node(item))
        else:
            goal = tuple(item)
    return PlanNode(kind, goal=goal, location=location, children=children)


def parse_plan(text: str) -> PlanNode:
    items, _ = _read(_tokenize(text), 0)
    return _sexp_to_node(items)


# ---------------------------------------------------------------------------
# scenes and projection
# ---------------------------------------------------------------------------

@dataclass
class SceneObject:
    """An object on the table: true displacement state (distance from the
    edge, position along it, orientation) and the current belief about it."""

    name: str
    truth: tuple[float, float, float]
    belief: GaussianBelief


@dataclass
class Scene:
    objects: dict[str, SceneObject]
    robot_xy: tuple[float, float]


@dataclass(frozen=True)
class TimeModel:
    nav_overhead: float = 15.0
    nav_speed: float = 0.3
    grasp_time: float = 5.0
    perceive_time: float = 1.0

    def event_duration(self, event: "TraceEvent") -> float:
        if event.kind == "navigate":
            return self.nav_overhead + event.detail["distance"] / self.nav_speed
        if event.kind == "perceive":
            return self.perceive_time
        if event.kind == "grasp":
            return self.grasp_time
        return 0.0


@dataclass
class TraceEvent:
    kind: str          # navigate | perceive | grasp
    t_start: float
    t_end: float
    detail: dict = field(default_factory=dict)


@dataclass
class ExecutionTrace:
    events: list[TraceEvent] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.events[-1].t_end if self.events else 0.0

    @property
    def grasp_outcomes(self) -> list[dict]:
        return [e.detail for e in self.events if e.kind == "grasp"]

    @property
    def all_grasps_succeeded(self) -> bool:
        g = self.grasp_outcomes
        return bool(g) and all(d["success"] for d in g)

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind)


def plan_duration(trace: ExecutionTrace, time_model: TimeModel) -> float:
    """Sum of per-event durations under the given time model."""
    return sum(time_model.event_duration(e) for e in trace.events)


def object_map(gsm: GSMModel, belief: GaussianBelief, spec: GridSpec, rng,
               n_samples: int = 100, robot_cov=None) -> ARPlaceGrid:
    """World-frame success map for one object belief (the belief's lateral
    mean places the map along the table edge)."""
    grid = compute_map(gsm, belief, spec, n_samples=n_samples, rng=rng,
                       frame="world")
    if robot_cov is not None:
        grid = apply_robot_uncertainty(grid, robot_cov)
    return grid


def resolve_location(designator: Designator, scene: Scene, gsm: GSMModel,
                     spec: GridSpec, rng, robot_cov=None,
                     smooth_radius: float = 0.02) -> Designator:
    """Resolve a location designator to the best cell of the (merged) map of
    the objects it must reach."""
    missing = [n for n in designator.objects if n not in scene.objects]
    if missing:
        raise UnresolvableDesignatorError(f"unknown objects {missing}")
    rng = np.random.default_rng(rng)
    grid = None
    for name in designator.objects:
        g = object_map(gsm, scene.objects[name].belief, spec,
                       rng=rng.integers(2 ** 31), robot_cov=robot_cov)
        grid = g if grid is None else merge(grid, g)
    (i, j), p = best_cell(grid, smooth_radius)
    designator.resolved = (grid.spec.cell_center(i, j), p)
    return designator


# a goal closer than this counts as "already there": navigation (and its
# fixed overhead) is skipped, which is what makes merged locations pay off
_ARRIVAL_TOL = 0.05


def project(plan: PlanNode, scene: Scene, gsm: GSMModel, world: WorldConfig,
            spec: GridSpec, rng, time_model: TimeModel = TimeModel(),
            robot_cov=None, perception_shrink: float = 0.5,
            use_nav_noise: bool = True) -> ExecutionTrace:
    """Simulate a plan: navigation drives to resolved locations (skipped when
    the robot is already there, with position noise on arrival), perception
    snaps a belief to the true state and shrinks its covariance, and grasps
    run against the true object state from the achieved base position.
    """
    rng = np.random.default_rng(rng)
    for node in plan.walk():
        if node.kind == AT_LOCATION:
            for name in node.location.objects:
                if name not in scene.objects:
                    raise UnresolvableDesignatorError(
                        f"unknown object {name!r} in location designator")

    trace = ExecutionTrace()
    robot = list(scene.robot_xy)
    clock = [0.0]

    def emit(kind, detail):
        ev = TraceEvent(kind, clock[0], clock[0], detail)
        ev.t_end = clock[0] + time_model.event_duration(ev)
        clock[0] = ev.t_end
        trace.events.append(ev)

    def run(node: PlanNode):
        if node.kind == SEQUENCE:
            for c in node.children:
                run(c)
        elif node.kind == AT_LOCATION:
            d = node.location
            if d.resolved is None:
                resolve_location(d, scene, gsm, spec, rng=rng.integers(2 ** 31),
                                 robot_cov=robot_cov)
            tx, ty = d.target
            dist = float(np.hypot(tx - robot[0], ty - robot[1]))
            if dist > _ARRIVAL_TOL:
                sigma = world.nav_noise_sigma if use_nav_noise else 0.0
                achieved = (tx + sigma * rng.standard_normal(),
                            ty + sigma * rng.standard_normal())
                emit("navigate", {"from": tuple(robot), "goal": (tx, ty),
                                  "achieved": achieved, "distance": dist})
                robot[0], robot[1] = achieved
            for c in node.children:
                run(c)
        elif node.kind == PERCEIVE:
            obj = scene.objects[node.goal[1]]
            cov = obj.belief.cov_array() * perception_shrink
            obj.belief = GaussianBelief(obj.truth, cov)
            emit("perceive", {"object": obj.name})
        elif node.kind == ACHIEVE:
            obj = scene.objects[node.goal[1]]
            dx, y, psi = obj.truth
            feats = ObjectFeatures(dx_obj=max(dx, 0.0), dpsi_obj=psi)
            cause = grasp_outcome(feats, robot[0], robot[1] - y, world)
            success = cause == "none"
            if success and rng.random() < world.local_minimum_rate:
                success, cause = False, "local_minimum"
            emit("grasp", {"object": obj.name, "success": success,
                           "cause": cause, "robot": tuple(robot)})

    run(plan)
    return trace


# ---------------------------------------------------------------------------
# flaws and transformations
# ---------------------------------------------------------------------------

@dataclass
class Flaw:
    kind: str                         # unoptimized_locations | unreached_goal_location
    bindings: dict
    proposed_location: tuple[tuple[float, float], float] | None = None


def _pickup_tasks(plan: PlanNode) -> list[PlanNode]:
    return [node for node in plan.walk()
            if node.kind == AT_LOCATION
            and any(c.kind == ACHIEVE and c.goal[0] == "entity-picked-up"
                    for c in node.children)]


def detect_merge_flaw(plan: PlanNode, scene: Scene, gsm: GSMModel,
                      spec: GridSpec, rng, threshold: float = MERGE_THRESHOLD,
                      robot_cov=None, smooth_radius: float = 0.02) -> Flaw | None:
    """Unoptimized-locations flaw: two distinct pick-up tasks whose merged
    success map still has a cell above the threshold."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    tasks = _pickup_tasks(plan)
    for a, b in itertools.combinations(tasks, 2):
        if a.location.uid == b.location.uid:
            continue
        if set(a.location.objects) == set(b.location.objects):
            continue
        grid = None
        for name in a.location.objects + b.location.objects:
            g = object_map(gsm, scene.objects[name].belief, spec,
                           rng=rng.integers(2 ** 31), robot_cov=robot_cov)
            grid = g if grid is None else merge(grid, g)
        (i, j), _ = best_cell(grid, smooth_radius)
        p = float(grid.probs[i, j])
        if p > threshold:
            return Flaw("unoptimized_locations",
                        {"tasks": [a.uid, b.uid],
                         "objects": sorted(set(a.location.objects)
                                           | set(b.location.objects))},
                        proposed_location=(grid.spec.cell_center(i, j), p))
    return None


def detect_unreached_goal_flaw(trace: ExecutionTrace, tolerance: float) -> list[Flaw]:
    """One flaw per navigation event whose achieved position misses its goal
    by more than the tolerance."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    flaws = []
    for idx, ev in enumerate(trace.events):
        if ev.kind != "navigate":
            continue
        goal = np.asarray(ev.detail["goal"])
        achieved = np.asarray(ev.detail["achieved"])
        deviation = float(np.linalg.norm(goal - achieved))
        if deviation > tolerance:
            flaws.append(Flaw("unreached_goal_location",
                              {"event_index": idx, "deviation": deviation}))
    return flaws


def apply_merge_transform(plan: PlanNode, flaw: Flaw) -> PlanNode:
    """Return a new plan in which both flawed pick-up tasks share one
    resolved joint location designator; all other nodes are unchanged."""
    if flaw.kind != "unoptimized_locations":
        raise ValueError("not an unoptimized-locations flaw")
    new_plan = plan.copy()
    nodes = [new_plan.find(uid) for uid in flaw.bindings["tasks"]]
    if any(n is None for n in nodes):
        raise ValueError("flawed tasks are no longer present in the plan")
    shared = Designator("joint_pick_up", tuple(flaw.bindings["objects"]),
                        resolved=flaw.proposed_location)
    for n in nodes:
        n.location = shared
    return new_plan
