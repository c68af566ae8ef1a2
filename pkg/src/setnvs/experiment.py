"""Toy-scene sampling experiments: per-view KL of plan outputs vs the exact law.

Config file (JSON)::

    {
      "plan": "plan.json",            # path, relative to the config file
      "scene": {"mu": 0.0, "sigma": 1.0, "length_scale": 8.0, "dim": 4},
      "schedule": {"T": 100, "beta_start": 1e-3, "beta_end": 0.2},
      "observation": 3.0,             # scalar, vector, or {id: vector}
      "window": 1,                    # null keeps every conditioning view
      "seeds": [0, 1, 2],
      "num_samples": 2000
    }

Output CSV columns: ``seed, view_id, depth, marginal_kl`` (generated views,
in plan order).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .diffusion import (
    analytic_denoiser,
    build_schedule,
    build_toy_scene,
    execute_plan,
    gaussian_divergence,
    truncate_conditioning,
)
from .geometry import Camera
from .plan import GenerationPlan, ViewSpec, depth, load_plan, plan_chain, plan_keyframed


class ConfigError(ValueError):
    pass


@dataclass
class SceneConfig:
    mu: float = 0.0
    sigma: float = 1.0
    length_scale: float = 8.0
    dim: int = 4


@dataclass
class ScheduleConfig:
    T: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2


@dataclass
class ExperimentConfig:
    plan: str
    scene: SceneConfig = field(default_factory=SceneConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    observation: object = 3.0
    window: int | None = 1
    seeds: list = field(default_factory=lambda: [0])
    num_samples: int = 2000
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        if "plan" not in data:
            raise ConfigError("config lacks 'plan'")
        known = {"plan", "scene", "schedule", "observation", "window", "seeds", "num_samples"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            cfg = cls(
                plan=data["plan"],
                scene=SceneConfig(**data.get("scene", {})),
                schedule=ScheduleConfig(**data.get("schedule", {})),
                observation=data.get("observation", 3.0),
                window=data.get("window", 1),
                seeds=list(data.get("seeds", [0])),
                num_samples=int(data.get("num_samples", 2000)),
                base_dir=Path(base_dir),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.window is not None and cfg.window < 0:
            raise ConfigError("window must be >= 0 or null")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, path.parent)


def observation_values(plan: GenerationPlan, observation, dim: int) -> dict:
    obs = {}
    for i in plan.observed_ids:
        v = observation.get(str(i), observation.get(i)) if isinstance(observation, dict) else observation
        if v is None:
            raise ConfigError(f"no observation for view {i!r}")
        arr = np.broadcast_to(np.asarray(v, dtype=float), (dim,)).copy()
        obs[i] = arr
    return obs


def run_plan_kl(
    plan: GenerationPlan,
    scene_cfg: SceneConfig,
    schedule_cfg: ScheduleConfig,
    observation,
    window: int | None,
    seed: int,
    num_samples: int,
) -> dict:
    """``{view_id: marginal KL}`` for the generated views of one seeded run."""
    cams = [v.camera for v in plan.views.values()]
    if any(c is None for c in cams):
        raise ConfigError("experiment plans need a camera for every view")
    scene = build_toy_scene(
        cams, scene_cfg.mu, scene_cfg.sigma, scene_cfg.length_scale, scene_cfg.dim, ids=list(plan.views)
    )
    schedule = build_schedule(schedule_cfg.T, schedule_cfg.beta_start, schedule_cfg.beta_end)
    obs = observation_values(plan, observation, scene_cfg.dim)
    den = truncate_conditioning(analytic_denoiser(scene, schedule=schedule), window)
    values = execute_plan(plan, den, obs, schedule, seed, num_samples=num_samples, dim=scene_cfg.dim)
    samples = {i: values[i] for i in plan.generated_ids}
    return gaussian_divergence(samples, scene, obs).per_view_kl


def run_experiment(cfg: ExperimentConfig) -> list[tuple]:
    plan = load_plan(cfg.base_dir / cfg.plan)
    rep = depth(plan)
    rows = []
    for seed in cfg.seeds:
        kl = run_plan_kl(plan, cfg.scene, cfg.schedule, cfg.observation, cfg.window, int(seed), cfg.num_samples)
        for vid in plan.generated_ids:
            rows.append((int(seed), vid, rep.depth[vid], kl[vid]))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "view_id", "depth", "marginal_kl"])
    for seed, vid, d, kl in rows:
        w.writerow([seed, vid, d, f"{kl:.8f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# depth / degradation study on a straight 20-view trajectory


def line_trajectory(n_views: int = 20, spacing: float = 1.0) -> list[ViewSpec]:
    """Observation at x=0 followed by ``n_views`` cameras stepping along +x."""
    views = []
    for k in range(n_views + 1):
        cam = Camera.from_params(50.0, 50.0, 32.0, 32.0, 64, 64, np.eye(3), [-k * spacing, 0.0, 0.0], id=k)
        views.append(ViewSpec(k, cam, "observed" if k == 0 else "generated"))
    return views


@dataclass
class DegradationResult:
    chain_kl: list  # per seed: array of KL by view 1..N
    keyframed_kl: list
    spearman: list  # per seed: chain KL vs depth

    @property
    def mean_spearman(self) -> float:
        return float(np.mean(self.spearman))

    @property
    def keyframed_win_rate(self) -> float:
        wins = [k[-1] < c[-1] for c, k in zip(self.chain_kl, self.keyframed_kl)]
        return float(np.mean(wins))


def degradation_study(
    seeds,
    n_views: int = 20,
    scene: SceneConfig | None = None,
    schedule: ScheduleConfig | None = None,
    observation: float = 3.0,
    window: int = 1,
    num_samples: int = 2000,
    spacing: int = 2,
    keyframe_chunk: int = 4,
    cond_count: int = 2,
) -> DegradationResult:
    scene = scene or SceneConfig()
    schedule = schedule or ScheduleConfig()
    views = line_trajectory(n_views)
    chain = plan_chain(views)
    keyed = plan_keyframed(views, spacing, keyframe_chunk, cond_count)
    chain_depth = depth(chain).depth
    ids = [v.id for v in views[1:]]
    res = DegradationResult([], [], [])
    for seed in seeds:
        c = run_plan_kl(chain, scene, schedule, observation, window, seed, num_samples)
        k = run_plan_kl(keyed, scene, schedule, observation, window, seed, num_samples)
        ckl = np.array([c[i] for i in ids])
        res.chain_kl.append(ckl)
        res.keyframed_kl.append(np.array([k[i] for i in ids]))
        res.spearman.append(float(spearmanr([chain_depth[i] for i in ids], ckl).statistic))
    return res
