"""Batch experiments: regret curves, method comparison tables, noise sweeps,
and generalization transfer. One YAML config fully determines one experiment;
re-running with the same config and seed reproduces byte-identical artifacts.
"""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from viewplan import baselines as bl
from viewplan import fileio
from viewplan.acquisition import AcquisitionBudget
from viewplan.driver import BoConfig, best_plan, run_ensemble_bo
from viewplan.geometry import SearchSpace, ViewPlan, decode_plan, look_at_center_space
from viewplan.metrics import DepthGridSpec, chamfer_distance, depth_mae, simple_regret_curve
from viewplan.scene import (
    NoiseSpec,
    Scene,
    SceneSpec,
    generate_scene,
    reconstruct,
    reward,
    transform_scene,
    NOISE_FREE,
)
from viewplan.seeds import derive_seed

SCHEMA_VERSION = 1

KINDS = (
    "generate",
    "optimize",
    "baseline",
    "evaluate",
    "regret",
    "compare",
    "sweep-input-noise",
    "sweep-image-noise",
    "generalize",
)

_REQUIRED = {
    "generate": ("scene",),
    "optimize": ("scene", "space", "bo"),
    "baseline": ("scene", "space"),
    "evaluate": ("plan", "scene_ply"),
    "regret": ("scene", "space", "bo"),
    "compare": ("scenes", "space", "bo"),
    "sweep-input-noise": ("scene", "space", "bo", "sweep"),
    "sweep-image-noise": ("scene", "space", "bo", "sweep"),
    "generalize": ("scene", "space", "bo"),
}


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


def load_config(path) -> dict:
    try:
        with open(path) as f:
            cfg = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    for field in _REQUIRED[kind]:
        if field not in cfg:
            raise ConfigError(f"kind {kind!r} requires field '{field}'")
    for field in ("plan", "scene_ply"):
        if field in cfg and not os.path.exists(cfg[field]):
            raise ConfigError(f"field '{field}' references a missing file: {cfg[field]}")
    return cfg


def build_scene_spec(sc: dict, seed: int) -> SceneSpec:
    return SceneSpec(
        plant_count=sc.get("plant_count", 3),
        points_per_plant=sc.get("points_per_plant", 400),
        ground_points=sc.get("ground_points", 800),
        plot_size=sc.get("plot_size", 4.0),
        stem_height_range=tuple(sc.get("stem_height_range", (0.5, 1.2))),
        canopy_radius_range=tuple(sc.get("canopy_radius_range", (0.25, 0.5))),
        plant_positions=tuple(map(tuple, sc["plant_positions"])) if "plant_positions" in sc else None,
        rng_seed=sc.get("seed", derive_seed(seed, 17)),
    )


def build_space(sp: dict, scene: Scene) -> SearchSpace:
    return look_at_center_space(
        n_cameras=sp.get("n_cameras", 10),
        scene_center=scene.center,
        radius_range=tuple(sp.get("radius", (1.0, 3.5))),
        elevation_range=tuple(sp.get("elevation", (0.05, 1.4))),
        fov_half_angle=sp.get("fov_half_angle", 0.2),
        range_min=sp.get("range_min", 0.05),
        range_max=sp.get("range_max", 50.0),
    )


def build_bo_config(bo: dict, seed: int) -> BoConfig:
    return BoConfig(
        t_init=bo.get("t_init", 50),
        t=bo.get("t", 100),
        kernel_families=tuple(bo.get("kernels", ("rbf-ard", "matern-2.5", "periodic"))),
        refit_every=bo.get("refit_every", 1),
        fit_budget=bo.get("fit_budget", 60),
        fit_starts=bo.get("fit_starts", 2),
        acquisition=AcquisitionBudget(
            n_random_candidates=bo.get("candidates", 1024),
            n_refine_starts=bo.get("refine_starts", 4),
            refine_steps=bo.get("refine_steps", 40),
        ),
        rng_seed=seed,
    )


def build_noise(nz: dict | None) -> NoiseSpec:
    nz = nz or {}
    return NoiseSpec(
        sigma_input=nz.get("sigma_input", 0.0),
        sigma_image=nz.get("sigma_image", 0.0),
        sigma_obs=nz.get("sigma_obs", 0.0),
        dropout_scale=nz.get("dropout_scale", 1.0),
        jitter_scale=nz.get("jitter_scale", 0.05),
        rng_seed=nz.get("seed", 0),
    )


def make_reward_oracle(scene: Scene, space: SearchSpace, noise: NoiseSpec | None, seed: int):
    """Each call consumes a fresh derived eval seed; deterministic per call order."""
    counter = itertools.count()
    if noise is None:
        noise = NOISE_FREE

    def oracle(theta):
        return reward(scene, theta, space, noise, eval_seed=derive_seed(seed, 18, next(counter)))

    return oracle


def scene_from_cloud(cloud: np.ndarray) -> Scene:
    """Wrap a stored reference cloud as a Scene for evaluation-only use."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    return Scene(
        reference_cloud=cloud,
        spec=SceneSpec(plant_count=0, ground_points=max(1, cloud.shape[0])),
        plants=(),
        center=cloud.mean(axis=0),
        bbox_min=cloud.min(axis=0),
        bbox_max=cloud.max(axis=0),
    )


def depth_grid_for(scene: Scene, resolution: int = 64) -> DepthGridSpec:
    pad = 0.25
    return DepthGridSpec(
        resolution=resolution,
        x_min=float(scene.bbox_min[0] - pad),
        x_max=float(scene.bbox_max[0] + pad),
        y_min=float(scene.bbox_min[1] - pad),
        y_max=float(scene.bbox_max[1] + pad),
        ground_height=0.0,
    )


def score_plan(scene: Scene, plan: ViewPlan, noise: NoiseSpec = NOISE_FREE, eval_seed: int = 0):
    """(cd_x100, depth_mae) of the simulated reconstruction from a plan."""
    pc = reconstruct(scene, plan, noise, eval_seed=eval_seed)
    grid = depth_grid_for(scene)
    if pc.shape[0] == 0:
        # chamfer is undefined for an empty cloud; report the worst-case
        # magnitude and rasterize the empty cloud as all-ground
        from viewplan.scene import DEFAULT_WORST_CASE_REWARD

        return -DEFAULT_WORST_CASE_REWARD * 100.0, depth_mae(
            np.zeros((0, 3)), scene.reference_cloud, grid
        )
    cd = chamfer_distance(scene.reference_cloud, pc)
    return cd * 100.0, depth_mae(scene.reference_cloud, pc, grid)


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------


def _seeds(cfg: dict, default_n: int = 5) -> list[int]:
    s = cfg.get("seeds", default_n)
    if isinstance(s, int):
        return list(range(s))
    return [int(v) for v in s]


def _run_method(method: str, scene: Scene, space: SearchSpace, cfg: dict, seed: int, noise: NoiseSpec):
    """Run one method on one scene; returns (plan, extras dict)."""
    bo_cfg = build_bo_config(cfg.get("bo", {}), derive_seed(cfg.get("seed", 0), 19, seed))
    n = space.n_cameras
    b = cfg.get("baselines", {})
    if method == "circle":
        plan, _ = bl.tune_circle(
            scene,
            n,
            radius_grid=tuple(b.get("radius_grid", bl.DEFAULT_RADIUS_GRID)),
            altitude_grid=tuple(b.get("altitude_grid", bl.DEFAULT_ALTITUDE_GRID)),
            fov_half_angle=space.fov_half_angle,
            range_min=space.range_min,
            range_max=space.range_max,
        )
        return plan, {}
    if method == "mcp":
        cands = bl.build_candidates(
            scene,
            azimuth_steps=b.get("mcp_azimuth_steps", 8),
            elevation_steps=b.get("mcp_elevation_steps", 2),
            radii=tuple(b.get("mcp_radii", (2.0, 3.0))),
            fov_half_angle=space.fov_half_angle,
            range_min=space.range_min,
            range_max=space.range_max,
        )
        return bl.mcp_plan(cands, n), {}
    if method == "bo-geometric":
        trace = bl.run_geometric_bo(scene, space, bo_cfg)
        _, plan, _ = best_plan(trace, space)
        return plan, {"trace": trace}
    if method == "bo-reconstruction":
        oracle = make_reward_oracle(scene, space, noise, derive_seed(cfg.get("seed", 0), 20, seed))
        trace = run_ensemble_bo(oracle, space, bo_cfg)
        _, plan, _ = best_plan(trace, space)
        return plan, {"trace": trace}
    raise ValueError(f"unknown method {method!r}")


def run_generate(cfg: dict, out: str) -> None:
    scene = generate_scene(build_scene_spec(cfg["scene"], cfg.get("seed", 0)))
    fileio.write_ply(scene.reference_cloud, os.path.join(out, "scene.ply"))


def run_optimize(cfg: dict, out: str) -> None:
    seed = cfg.get("seed", 0)
    scene = generate_scene(build_scene_spec(cfg["scene"], seed))
    space = build_space(cfg["space"], scene)
    noise = build_noise(cfg.get("noise"))
    plan, extras = _run_method("bo-reconstruction", scene, space, cfg, 0, noise)
    fileio.write_trace_csv(extras["trace"], os.path.join(out, "trace.csv"))
    fileio.write_plan_file(plan, os.path.join(out, "best_plan.json"))
    fileio.write_ply(scene.reference_cloud, os.path.join(out, "scene.ply"))
    fileio.write_ply(reconstruct(scene, plan), os.path.join(out, "recon.ply"))


def run_regret(cfg: dict, out: str) -> None:
    seed = cfg.get("seed", 0)
    scene = generate_scene(build_scene_spec(cfg["scene"], seed))
    space = build_space(cfg["space"], scene)
    noise = build_noise(cfg.get("noise"))
    for s in _seeds(cfg):
        plan, extras = _run_method("bo-reconstruction", scene, space, cfg, s, noise)
        trace = extras["trace"]
        fileio.write_trace_csv(trace, os.path.join(out, f"trace_seed{s}.csv"))
        sr = simple_regret_curve(trace.y, r_star=0.0)
        fileio.write_csv(
            os.path.join(out, f"sr_seed{s}.csv"),
            ["iter", "sr"],
            [(r.iteration, float(v)) for r, v in zip(trace.records, sr)],
        )


def _compare_rows(cfg: dict, scenes: list[tuple[str, Scene]], methods, jobs: int = 1):
    noise = build_noise(cfg.get("noise"))
    tasks = []
    for scene_name, scene in scenes:
        space = build_space(cfg["space"], scene)
        for method in methods:
            for s in _seeds(cfg):
                tasks.append((scene_name, scene, space, method, s))

    def work(task):
        scene_name, scene, space, method, s = task
        t0 = time.perf_counter()
        plan, _ = _run_method(method, scene, space, cfg, s, noise)
        cd100, mae = score_plan(scene, plan)
        return {
            "method": method,
            "scene": scene_name,
            "cd_x100": cd100,
            "depth_mae": mae,
            "seed": s,
            "runtime_ms": (time.perf_counter() - t0) * 1000.0,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(work, tasks))
    else:
        rows = [work(t) for t in tasks]
    return rows


def run_compare(cfg: dict, out: str, jobs: int = 1) -> None:
    seed = cfg.get("seed", 0)
    scenes = []
    for i, sc in enumerate(cfg["scenes"]):
        name = sc.get("name", f"scene-{i}")
        scenes.append((name, generate_scene(build_scene_spec(sc, derive_seed(seed, 21, i)))))
    methods = cfg.get("methods", ["circle", "mcp", "bo-geometric", "bo-reconstruction"])
    rows = _compare_rows(cfg, scenes, methods, jobs=jobs)
    fileio.write_report_csv(rows, os.path.join(out, "report.csv"))
    for name, scene in scenes:
        fileio.write_ply(scene.reference_cloud, os.path.join(out, f"{name}.ply"))


def run_baseline(cfg: dict, out: str, jobs: int = 1) -> None:
    seed = cfg.get("seed", 0)
    scene = generate_scene(build_scene_spec(cfg["scene"], seed))
    name = cfg["scene"].get("name", "scene-0")
    methods = cfg.get("methods", ["circle", "mcp", "bo-geometric"])
    rows = _compare_rows(cfg, [(name, scene)], methods, jobs=jobs)
    fileio.write_report_csv(rows, os.path.join(out, "report.csv"))


def run_evaluate(cfg: dict, out: str) -> float:
    plan = fileio.read_plan_file(cfg["plan"])
    scene = scene_from_cloud(fileio.read_ply(cfg["scene_ply"]))
    noise = build_noise(cfg.get("noise"))
    cd100, mae = score_plan(scene, plan, noise=noise, eval_seed=cfg.get("seed", 0))
    fileio.write_report_csv(
        [
            {
                "method": "stored-plan",
                "scene": os.path.basename(str(cfg["scene_ply"])),
                "cd_x100": cd100,
                "depth_mae": mae,
                "seed": cfg.get("seed", 0),
                "runtime_ms": 0.0,
            }
        ],
        os.path.join(out, "report.csv"),
    )
    print(f"cd_x100={fileio.fmt_float(cd100)} depth_mae={fileio.fmt_float(mae)}")
    return cd100


def run_sweep_input_noise(cfg: dict, out: str, jobs: int = 1) -> None:
    seed = cfg.get("seed", 0)
    scene = generate_scene(build_scene_spec(cfg["scene"], seed))
    space = build_space(cfg["space"], scene)
    fractions = [float(v) for v in cfg["sweep"].get("fractions", (0.0, 0.025, 0.05, 0.10))]
    sweep_seeds = _seeds(cfg["sweep"], 5)
    span = space.upper - space.lower
    base_noise = build_noise(cfg.get("noise"))

    tasks = [(f, s) for f in fractions for s in sweep_seeds]

    def work(task):
        frac, s = task
        noise = NoiseSpec(
            sigma_input=frac * span,
            sigma_image=base_noise.sigma_image,
            sigma_obs=base_noise.sigma_obs,
            dropout_scale=base_noise.dropout_scale,
            jitter_scale=base_noise.jitter_scale,
            rng_seed=derive_seed(seed, 22, s),
        )
        plan, _ = _run_method("bo-reconstruction", scene, space, cfg, s, noise)
        cd100, _ = score_plan(scene, plan)
        return (frac, s, cd100)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    fileio.write_csv(
        os.path.join(out, "sweep_input_noise.csv"),
        ["sigma_fraction", "seed", "cd_x100"],
        [(float(f), s, float(cd)) for f, s, cd in results],
    )
    stats = []
    for f in fractions:
        vals = np.array([cd for ff, _, cd in results if ff == f])
        stats.append((float(f), float(vals.mean()), float(vals.std()), float(np.median(vals))))
    fileio.write_csv(
        os.path.join(out, "sweep_input_noise_stats.csv"),
        ["sigma_fraction", "cd_x100_mean", "cd_x100_std", "cd_x100_median"],
        stats,
    )


def run_sweep_image_noise(cfg: dict, out: str, jobs: int = 1) -> None:
    """Optimize noise-free on the train scene, then evaluate the transferred
    plan under image noise on held-out scene variants."""
    seed = cfg.get("seed", 0)
    scene = generate_scene(build_scene_spec(cfg["scene"], seed))
    space = build_space(cfg["space"], scene)
    sigmas = [float(v) for v in cfg["sweep"].get("sigmas", (0.0, 0.1, 0.2, 0.4))]
    sweep_seeds = _seeds(cfg["sweep"], 5)
    variants = _test_variants(cfg, scene, seed)

    rows = []
    for s in sweep_seeds:
        plan, _ = _run_method("bo-reconstruction", scene, space, cfg, s, NOISE_FREE)
        for vname, vscene in variants:
            for sig in sigmas:
                noise = NoiseSpec(sigma_image=sig, rng_seed=derive_seed(seed, 23, s))
                cd100, _ = score_plan(vscene, plan, noise=noise, eval_seed=derive_seed(seed, 24, s))
                rows.append((vname, float(sig), s, float(cd100)))
    fileio.write_csv(
        os.path.join(out, "sweep_image_noise.csv"),
        ["scene", "sigma_image", "seed", "cd_x100"],
        rows,
    )


def _test_variants(cfg: dict, scene: Scene, seed: int) -> list[tuple[str, Scene]]:
    variants = [
        ("scaled-rotated", transform_scene(scene, scale_jitter=0.1, rotate=True, seed=derive_seed(seed, 25))),
    ]
    if len(scene.plants) > 1:
        variants.append(
            ("plant-removed", transform_scene(scene, remove_indices=(0,), seed=derive_seed(seed, 26)))
        )
    return variants


def run_generalize(cfg: dict, out: str, jobs: int = 1) -> None:
    """Train on one scene, transfer the plan to variants without re-optimizing;
    the circle baseline is re-tuned on each variant."""
    seed = cfg.get("seed", 0)
    scene = generate_scene(build_scene_spec(cfg["scene"], seed))
    space = build_space(cfg["space"], scene)
    variants = _test_variants(cfg, scene, seed)
    b = cfg.get("baselines", {})
    rows = []
    for s in _seeds(cfg):
        t0 = time.perf_counter()
        plan, _ = _run_method("bo-reconstruction", scene, space, cfg, s, NOISE_FREE)
        train_ms = (time.perf_counter() - t0) * 1000.0
        for vname, vscene in variants:
            cd100, mae = score_plan(vscene, plan)
            rows.append(
                {
                    "method": "bo-reconstruction-transfer",
                    "scene": vname,
                    "cd_x100": cd100,
                    "depth_mae": mae,
                    "seed": s,
                    "runtime_ms": train_ms,
                }
            )
            t1 = time.perf_counter()
            cplan, _ = bl.tune_circle(
                vscene,
                space.n_cameras,
                radius_grid=tuple(b.get("radius_grid", bl.DEFAULT_RADIUS_GRID)),
                altitude_grid=tuple(b.get("altitude_grid", bl.DEFAULT_ALTITUDE_GRID)),
                fov_half_angle=space.fov_half_angle,
                range_min=space.range_min,
                range_max=space.range_max,
            )
            ccd100, cmae = score_plan(vscene, cplan)
            rows.append(
                {
                    "method": "circle-retuned",
                    "scene": vname,
                    "cd_x100": ccd100,
                    "depth_mae": cmae,
                    "seed": s,
                    "runtime_ms": (time.perf_counter() - t1) * 1000.0,
                }
            )
    fileio.write_report_csv(rows, os.path.join(out, "report.csv"))
    for vname, vscene in variants:
        fileio.write_ply(vscene.reference_cloud, os.path.join(out, f"{vname}.ply"))


def run_experiment(config_path, out_dir=None, seed=None, jobs: int = 1) -> int:
    """Dispatch a config file to its experiment kind. Returns process exit code."""
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"config error: {e}")
        return 2
    if seed is not None:
        cfg["seed"] = int(seed)
    out = out_dir or cfg.get("out", ".")
    os.makedirs(out, exist_ok=True)
    kind = cfg["kind"]
    try:
        if kind == "generate":
            run_generate(cfg, out)
        elif kind == "optimize":
            run_optimize(cfg, out)
        elif kind == "baseline":
            run_baseline(cfg, out, jobs=jobs)
        elif kind == "evaluate":
            run_evaluate(cfg, out)
        elif kind == "regret":
            run_regret(cfg, out)
        elif kind == "compare":
            run_compare(cfg, out, jobs=jobs)
        elif kind == "sweep-input-noise":
            run_sweep_input_noise(cfg, out, jobs=jobs)
        elif kind == "sweep-image-noise":
            run_sweep_image_noise(cfg, out, jobs=jobs)
        elif kind == "generalize":
            run_generalize(cfg, out, jobs=jobs)
    except Exception as e:  # noqa: BLE001 - failure manifest, then non-zero exit
        with fileio.atomic_write(os.path.join(out, "failure.txt")) as f:
            f.write(f"{type(e).__name__}: {e}\n")
        print(f"experiment failed: {e}")
        return 1
    return 0
