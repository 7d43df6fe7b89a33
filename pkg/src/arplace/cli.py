"""Command-line surface for the pipeline: data generation, model training,
map computation and algebra, planning, experiments, and exports.

Every output file starts with a header naming the tool version, the seed, and
a hash of the effective configuration; a fixed seed makes every subcommand
byte-reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys

import numpy as np

from . import __version__
from .classifier import default_extraction_grid, train_per_pose
from .evaluation import (SweepSpec, accuracy_curve, candidate_grid_spec,
                         robustness_experiment, transformation_benefit)
from .geometry import ObjectFeatures
from .grids import load_grid_text, save_grid_text, save_pgm
from .placemap import (GaussianBelief, apply_robot_uncertainty, best_cell,
                       compute_map, cost_map, merge)
from .planner import (TimeModel, apply_merge_transform, detect_merge_flaw,
                      plan_duration, plan_to_sexp, project, two_pickup_plan)
from .shapemodel import GSMModel, train_gsm
from .simworld import (Dataset, WorldConfig, default_object_grid,
                       default_robot_grid, default_world, generate_dataset)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BAD_CONFIG = 3
EXIT_MISSING_INPUT = 4
EXIT_MODULE_ERROR = 5


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters of the whole pipeline, overridable from a JSON file."""

    kernel_sigma: float = 0.1
    cost_C: float = 40.0
    class_weight: float = 2.0
    n_landmarks: int = 20
    n_samples: int = 100
    cell_size: float = 0.025
    extraction_cell: float = 0.01
    merge_threshold: float = 0.85
    energy_target: float = 0.95
    use_capability_filter: bool = True
    world: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise MissingInputError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise BadConfigError(f"malformed config {path}: {e}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise BadConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def world_config(self, seed: int) -> WorldConfig:
        if self.world:
            base = default_world(seed).to_dict()
            base.update(self.world)
            base["seed"] = seed
            return WorldConfig.from_dict(base)
        return default_world(seed)

    def hash(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


class BadConfigError(RuntimeError):
    pass


class MissingInputError(RuntimeError):
    pass


def _header(cfg: PipelineConfig, seed: int) -> list[str]:
    return [f"tool_version={__version__} seed={seed} config_hash={cfg.hash()}"]


def _load_config(args) -> PipelineConfig:
    return PipelineConfig.from_file(args.config) if args.config else PipelineConfig()


def _load_model(path) -> GSMModel:
    try:
        return GSMModel.load(path)
    except FileNotFoundError:
        raise MissingInputError(f"model file not found: {path}")


def _load_belief(path) -> GaussianBelief:
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise MissingInputError(f"belief file not found: {path}")
    mean = raw["mean"]
    if "cov" in raw:
        cov = np.asarray(raw["cov"], dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
    else:
        cov = np.diag([raw["sigma_xy"] ** 2, raw["sigma_xy"] ** 2,
                       raw["sigma_psi"] ** 2])
    return GaussianBelief(tuple(mean), cov)


def _load_grid(path, frame="gsm"):
    try:
        return load_grid_text(path, frame=frame)
    except FileNotFoundError:
        raise MissingInputError(f"grid file not found: {path}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    world = cfg.world_config(args.seed)
    dataset = generate_dataset(world, default_object_grid(), default_robot_grid(),
                               seed=args.seed,
                               use_capability_filter=cfg.use_capability_filter,
                               workers=args.workers)
    dataset.save_csv(args.out, header_lines=_header(cfg, args.seed))
    print(f"wrote {len(dataset.records)} trials "
          f"({dataset.executed_count()} executed) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    world = cfg.world_config(args.seed)
    try:
        dataset = Dataset.load_csv(args.data, world)
    except FileNotFoundError:
        raise MissingInputError(f"dataset file not found: {args.data}")
    svms = train_per_pose(dataset, kernel_sigma=cfg.kernel_sigma,
                          cost_C=cfg.cost_C,
                          positive_class_weight=cfg.class_weight)
    grid = default_extraction_grid(dataset.robot_grid, cfg.extraction_cell)
    gsm = train_gsm(svms, grid, n_landmarks=cfg.n_landmarks,
                    energy_target=cfg.energy_target)
    payload = gsm.to_dict()
    payload["header"] = {"tool_version": __version__, "seed": args.seed,
                         "config_hash": cfg.hash()}
    with open(args.out, "w") as f:
        json.dump(payload, f)
        f.write("\n")
    print(f"trained model: d={gsm.pdm.d} energy={gsm.pdm.energy:.4f} "
          f"r2={np.round(gsm.regression.r_squared, 4).tolist()} -> {args.out}")
    return EXIT_OK


def cmd_map(args) -> int:
    cfg = _load_config(args)
    gsm = _load_model(args.model)
    belief = _load_belief(args.belief)
    spec = candidate_grid_spec(cfg.cell_size)
    grid = compute_map(gsm, belief, spec, n_samples=args.samples or cfg.n_samples,
                       rng=args.seed)
    if args.robot_sigma:
        grid = apply_robot_uncertainty(grid, args.robot_sigma)
    save_grid_text(grid, args.out, header_lines=_header(cfg, args.seed))
    (i, j), p = best_cell(grid)
    print(f"map written to {args.out}; best cell ({i}, {j}) p={p:.3f}")
    return EXIT_OK


def cmd_merge(args) -> int:
    cfg = _load_config(args)
    merged = merge(_load_grid(args.grids[0]), _load_grid(args.grids[1]))
    for path in args.grids[2:]:
        merged = merge(merged, _load_grid(path))
    save_grid_text(merged, args.out, header_lines=_header(cfg, args.seed))
    print(f"merged {len(args.grids)} maps -> {args.out}")
    return EXIT_OK


def cmd_cost(args) -> int:
    cfg = _load_config(args)
    grid = _load_grid(args.grid)
    costs = cost_map(grid, (args.robot_x, args.robot_y),
                     retry_penalty_s=args.retry_penalty,
                     nav_speed_mps=args.nav_speed)
    save_grid_text(costs, args.out, header_lines=_header(cfg, args.seed))
    print(f"cost map written to {args.out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load_config(args)
    from .evaluation import make_two_cup_scene
    gsm = _load_model(args.model)
    world = cfg.world_config(args.seed)
    tm = TimeModel()
    robot = default_robot_grid()
    xs = [r.dx_rob for r in robot]
    half = args.separation / 2.0 + 0.6
    from .grids import GridSpec
    spec = GridSpec.covering(min(xs), max(xs), -half, half, cfg.cell_size)
    plan = two_pickup_plan()
    trace_a = project(plan, make_two_cup_scene(args.separation), gsm, world,
                      spec, rng=np.random.default_rng((args.seed, 0)),
                      time_model=tm)
    lines = _header(cfg, args.seed)
    lines.append(f"plan A duration {plan_duration(trace_a, tm):.2f} s "
                 f"({trace_a.count('navigate')} navigations)")
    flaw = detect_merge_flaw(plan, make_two_cup_scene(args.separation), gsm,
                             spec, rng=np.random.default_rng((args.seed, 1)),
                             threshold=args.threshold or cfg.merge_threshold)
    if flaw is None:
        lines.append("no merge flaw detected; plan unchanged")
    else:
        plan_b = apply_merge_transform(plan, flaw)
        trace_b = project(plan_b, make_two_cup_scene(args.separation), gsm,
                          world, spec, rng=np.random.default_rng((args.seed, 2)),
                          time_model=tm)
        lines.append(f"merge flaw: joint probability "
                     f"{flaw.proposed_location[1]:.3f} at "
                     f"({flaw.proposed_location[0][0]:.3f}, "
                     f"{flaw.proposed_location[0][1]:.3f})")
        lines.append(f"plan B duration {plan_duration(trace_b, tm):.2f} s "
                     f"({trace_b.count('navigate')} navigations)")
        lines.append("transformed plan: " + plan_to_sexp(plan_b))
    text = "\n".join(("# " + ln if i == 0 else ln)
                     for i, ln in enumerate(lines)) + "\n"
    with open(args.out, "w") as f:
        f.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    world = cfg.world_config(args.seed)
    lines = _header(cfg, args.seed)
    if args.experiment == "robustness":
        gsm = _load_model(args.model)
        sweep = SweepSpec(cell_size=cfg.cell_size, n_map_samples=cfg.n_samples)
        res = robustness_experiment(sweep, gsm, world, seed=args.seed)
        lines.append("sigma_obj arplace fixed chi2 p")
        for p in res.points:
            lines.append(f"{p.sigma_obj:.2f} {p.rate('arplace'):.3f} "
                         f"{p.rate('fixed'):.3f} {p.chi2_stat:.4f} "
                         f"{p.p_value:.6g}")
    elif args.experiment == "accuracy":
        sizes = [20, 50, 100, 187, 300]
        obj = ObjectFeatures(0.14, 0.0)
        lines.append("size filtered_acc filtered_exec unfiltered_acc unfiltered_exec")
        filt = accuracy_curve(world, obj, sizes, True, seed=args.seed)
        raw = accuracy_curve(world, obj, sizes, False, seed=args.seed)
        for a, b in zip(filt, raw):
            lines.append(f"{a.size} {a.accuracy:.3f} {a.executed} "
                         f"{b.accuracy:.3f} {b.executed}")
    elif args.experiment == "transform":
        gsm = _load_model(args.model)
        distances = [round(0.20 + 0.05 * k, 2) for k in range(9)]
        res = transformation_benefit(distances, gsm, world, seed=args.seed,
                                     cell_size=cfg.cell_size,
                                     threshold=cfg.merge_threshold)
        lines.append("separation merged probability duration_a duration_b")
        for p in res.points:
            prob = "-" if p.merged_probability is None else f"{p.merged_probability:.3f}"
            db = "-" if p.duration_b is None else f"{p.duration_b:.2f}"
            lines.append(f"{p.separation:.2f} {int(p.merged)} {prob} "
                         f"{p.duration_a:.2f} {db}")
        lines.extend("note: " + n for n in res.notes)
    text = "\n".join(("# " + ln if i == 0 else ln)
                     for i, ln in enumerate(lines)) + "\n"
    with open(args.out, "w") as f:
        f.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_export_pgm(args) -> int:
    cfg = _load_config(args)
    grid = _load_grid(args.grid)
    save_pgm(grid, args.out, header_lines=_header(cfg, args.seed))
    print(f"graymap written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arplace",
                                description="success-probability place maps")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--out", required=True)

    sp = sub.add_parser("gen-data", help="generate a trial dataset")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train the success model from trials")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("map", help="compute a success map for a belief")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--belief", required=True)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--robot-sigma", type=float, default=0.0)
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("merge", help="cellwise product of success maps")
    common(sp)
    sp.add_argument("grids", nargs="+")
    sp.set_defaults(func=cmd_merge)

    sp = sub.add_parser("cost", help="expected-cost map from a success map")
    common(sp)
    sp.add_argument("grid")
    sp.add_argument("--robot-x", type=float, required=True)
    sp.add_argument("--robot-y", type=float, required=True)
    sp.add_argument("--retry-penalty", type=float, default=5.0)
    sp.add_argument("--nav-speed", type=float, default=0.3)
    sp.set_defaults(func=cmd_cost)

    sp = sub.add_parser("plan", help="two-cup plan with merge transformation")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--separation", type=float, default=0.30)
    sp.add_argument("--threshold", type=float)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("eval", help="run an experiment")
    sp.add_argument("experiment", choices=["robustness", "accuracy", "transform"])
    common(sp)
    sp.add_argument("--model")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("export-pgm", help="export a grid as a graymap")
    common(sp)
    sp.add_argument("grid")
    sp.set_defaults(func=cmd_export_pgm)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BadConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except MissingInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_MODULE_ERROR


if __name__ == "__main__":
    sys.exit(main())
