"""Generation plans: ordered stages of (generate-set, condition-set) over views.

A plan is valid when its generate-sets are non-empty, pairwise disjoint and
cover every generated view, and each stage conditions only on observed views or
views generated in earlier stages.  Generation depth of a view is the length of
the shortest conditioning path back to an observed view; a view generated with
an empty conditioning set gets depth 0.

Plan files are JSON::

    {"views": [{"id": ..., "role": "observed" | "generated", "camera": {...}}],
     "stages": [{"generate": [ids], "condition": [ids]}, ...]}

``camera`` uses the trajectory-file camera fields and may be omitted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .geometry import Camera, camera_center, camera_from_dict

Id = Hashable
OBSERVED = "observed"
GENERATED = "generated"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ViewSpec:
    id: Id
    camera: Camera | None = None
    role: str = GENERATED

    def __post_init__(self):
        if self.role not in (OBSERVED, GENERATED):
            raise PlanError(f"unknown role {self.role!r}")

    @property
    def observed(self) -> bool:
        return self.role == OBSERVED


@dataclass(frozen=True)
class Stage:
    generate: tuple
    condition: tuple


@dataclass(frozen=True)
class GenerationPlan:
    views: Mapping[Id, ViewSpec]
    stages: tuple[Stage, ...] = ()

    @property
    def observed_ids(self) -> list:
        return [i for i, v in self.views.items() if v.observed]

    @property
    def generated_ids(self) -> list:
        return [i for i, v in self.views.items() if not v.observed]

    def camera(self, view_id) -> Camera | None:
        return self.views[view_id].camera


@dataclass(frozen=True)
class Violation:
    kind: str
    stage: int | None
    ids: tuple
    message: str

    def __str__(self):
        where = "plan" if self.stage is None else f"stage {self.stage}"
        return f"{where}: {self.kind}: {self.message}"


@dataclass(frozen=True)
class DepthReport:
    depth: dict = field(default_factory=dict)
    max_depth: int = 0


def _make_plan(views: Iterable[ViewSpec], stages: Iterable[tuple]) -> GenerationPlan:
    vmap: dict = {}
    for v in views:
        if v.id in vmap:
            raise PlanError(f"duplicate view id {v.id!r}")
        vmap[v.id] = v
    return GenerationPlan(vmap, tuple(Stage(tuple(g), tuple(c)) for g, c in stages))


def _split_roles(views: Sequence[ViewSpec]) -> tuple[list[ViewSpec], list[ViewSpec]]:
    return [v for v in views if v.observed], [v for v in views if not v.observed]


# ---------------------------------------------------------------------------
# constructors


def plan_chain(ordered_views: Sequence[ViewSpec]) -> GenerationPlan:
    """First-order autoregression: each view conditions on its predecessor."""
    if not ordered_views:
        raise PlanError("no views")
    if not ordered_views[0].observed:
        raise PlanError("the first view must be observed")
    if any(v.observed for v in ordered_views[1:]):
        raise PlanError("only the first view may be observed")
    ids = [v.id for v in ordered_views]
    stages = [((ids[i],), (ids[i - 1],)) for i in range(1, len(ids))]
    return _make_plan(ordered_views, stages)


def keyframe_positions(num_generated: int, spacing: int) -> list[int]:
    """1-based positions of keyframes among ``num_generated`` ordered views.

    Every ``(spacing + 1)``-th view is a keyframe, and the final view always is
    so trailing in-betweens have a keyframe on both sides.  ``spacing = 0``
    makes every view a keyframe.
    """
    if num_generated == 0:
        return []
    pos = list(range(spacing + 1, num_generated + 1, spacing + 1))
    if not pos or pos[-1] != num_generated:
        pos.append(num_generated)
    return pos


def plan_keyframed(
    ordered_views: Sequence[ViewSpec],
    spacing: int = 2,
    keyframe_chunk: int = 4,
    cond_count: int = 2,
) -> GenerationPlan:
    """Keyframes first, in chunks; then in-between groups from nearby keyframes.

    The observed views lead ``ordered_views``.  Keyframe chunk ``i`` conditions
    on the observations plus chunk ``i - 1``.  Each run of in-betweens between
    consecutive keyframes forms one stage conditioned on the ``cond_count``
    candidates (keyframes or observations) nearest in sequence position.
    """
    if spacing < 0 or keyframe_chunk < 1 or cond_count < 1:
        raise PlanError("need spacing >= 0, keyframe_chunk >= 1, cond_count >= 1")
    observed, generated = _split_roles(ordered_views)
    if not observed:
        raise PlanError("keyframed plans need at least one observed view")
    n_obs = len(observed)
    if any(v.observed for v in ordered_views[n_obs:]):
        raise PlanError("observed views must precede generated views")

    gen_ids = [v.id for v in generated]
    obs_ids = [v.id for v in observed]
    kf_pos = keyframe_positions(len(gen_ids), spacing)
    kf_ids = [gen_ids[p - 1] for p in kf_pos]

    stages = []
    prev: list = []
    for s in range(0, len(kf_ids), keyframe_chunk):
        chunk = kf_ids[s : s + keyframe_chunk]
        stages.append((chunk, obs_ids + prev))
        prev = chunk

    # observations sit at position 0 for the nearest-conditioner ranking
    candidates = [(0, i) for i in obs_ids] + list(zip(kf_pos, kf_ids))
    kf_set = set(kf_pos)
    group: list[int] = []
    groups = []
    for p in range(1, len(gen_ids) + 1):
        if p in kf_set:
            if group:
                groups.append(group)
            group = []
        else:
            group.append(p)
    if group:
        groups.append(group)
    for g in groups:
        ranked = sorted(candidates, key=lambda c: (min(abs(c[0] - p) for p in g), c[0]))
        cond = [cid for _, cid in ranked[:cond_count]]
        stages.append(([gen_ids[p - 1] for p in g], cond))
    return _make_plan(ordered_views, stages)


def plan_grouped(
    groups: Sequence[Iterable[Id]],
    observed: Iterable[Id],
    cameras: Mapping[Id, Camera] | None = None,
) -> GenerationPlan:
    """Set-autoregression over groups: group ``i`` conditions on group ``i - 1``."""
    obs = list(observed)
    groups = [list(g) for g in groups]
    seen = set(obs)
    for g in groups:
        if not g:
            raise PlanError("empty group")
        for i in g:
            if i in seen:
                raise PlanError(f"view {i!r} appears in more than one group")
            seen.add(i)
    cameras = cameras or {}
    views = [ViewSpec(i, cameras.get(i), OBSERVED) for i in obs]
    views += [ViewSpec(i, cameras.get(i), GENERATED) for g in groups for i in g]
    stages = []
    prev = obs
    for g in groups:
        stages.append((g, prev))
        prev = g
    return _make_plan(views, stages)


def plan_zigzag(
    stereo_pairs: Sequence[tuple[Id, Id]],
    observed: Iterable[Id],
    cameras: Mapping[Id, Camera] | None = None,
) -> GenerationPlan:
    """Single-view chain over ``R1, L1, R2, L2, ...``; ``R1`` sees the observations."""
    obs = list(observed)
    order = [i for pair in stereo_pairs for i in pair]
    if len(set(order)) != len(order) or set(order) & set(obs):
        raise PlanError("stereo pairs must be disjoint from each other and the observations")
    cameras = cameras or {}
    views = [ViewSpec(i, cameras.get(i), OBSERVED) for i in obs]
    views += [ViewSpec(i, cameras.get(i), GENERATED) for i in order]
    stages = []
    prev = obs
    for i in order:
        stages.append(((i,), prev))
        prev = [i]
    return _make_plan(views, stages)


def rotation_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle in radians between two rotations."""
    M = Ra @ Rb.T
    s = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    c = 0.5 * (np.trace(M) - 1.0)
    return float(math.atan2(s, c))


def camera_distance(a: Camera, b: Camera, rotation_weight: float = 0.0) -> float:
    """Centre distance plus ``rotation_weight`` times the geodesic rotation angle."""
    if rotation_weight < 0:
        raise ValueError("rotation_weight must be non-negative")
    d = float(np.linalg.norm(camera_center(a) - camera_center(b)))
    if rotation_weight:
        d += rotation_weight * rotation_angle(a.rotation, b.rotation)
    return d


def distance_matrix(poses: Sequence[Camera], rotation_weight: float = 0.0) -> np.ndarray:
    n = len(poses)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = camera_distance(poses[i], poses[j], rotation_weight)
    return D


def farthest_first(dist: np.ndarray, seeds: Sequence[int], count: int) -> list[int]:
    """Greedy max-min ordering on a distance matrix, starting from ``seeds``.

    Returns ``count`` new indices (not including ``seeds``); ties go to the
    lowest index.
    """
    n = dist.shape[0]
    chosen = np.zeros(n, dtype=bool)
    chosen[list(seeds)] = True
    mind = dist[list(seeds)].min(axis=0) if seeds else np.full(n, np.inf)
    out = []
    for _ in range(count):
        score = np.where(chosen, -np.inf, mind)
        k = int(np.argmax(score))  # first maximum => lowest index on ties
        out.append(k)
        chosen[k] = True
        mind = np.minimum(mind, dist[k])
    return out


def select_keyframes(
    poses: Sequence[Camera], given_index: int, count: int, rotation_weight: float = 0.0
) -> list[int]:
    n = len(poses)
    if not 0 <= given_index < n:
        raise PlanError(f"given_index {given_index} out of range")
    if not 1 <= count <= n:
        raise PlanError(f"count must be in [1, {n}]")
    D = distance_matrix(poses, rotation_weight)
    return [given_index] + farthest_first(D, [given_index], count - 1)


def plan_unordered(
    views: Sequence[ViewSpec],
    keyframe_count: int,
    cond_size: int,
    rotation_weight: float = 0.0,
    stage_size: int = 1,
) -> GenerationPlan:
    """Plan for an unordered cloud of views around a single observation.

    ``keyframe_count`` generated keyframes are picked farthest-first from the
    observation and generated jointly, conditioned on it.  The rest follow the
    same farthest-first order in stages of ``stage_size``, each conditioned on
    the ``cond_size`` nearest views already available (observation included).
    """
    observed, generated = _split_roles(views)
    if len(observed) != 1:
        raise PlanError("unordered plans need exactly one observed view")
    if not 1 <= keyframe_count <= max(len(generated), 1) or cond_size < 1 or stage_size < 1:
        raise PlanError("need 1 <= keyframe_count <= #generated, cond_size >= 1, stage_size >= 1")
    if any(v.camera is None for v in views):
        raise PlanError("unordered plans need a camera for every view")
    if not generated:
        return _make_plan(views, [])
    poses = [v.camera for v in views]
    ids = [v.id for v in views]
    obs_idx = ids.index(observed[0].id)
    D = distance_matrix(poses, rotation_weight)
    order = farthest_first(D, [obs_idx], len(generated))
    keyframes, rest = order[:keyframe_count], order[keyframe_count:]

    stages = [([ids[k] for k in keyframes], [ids[obs_idx]])]
    available = [obs_idx] + keyframes
    for s in range(0, len(rest), stage_size):
        chunk = rest[s : s + stage_size]
        near = sorted(available, key=lambda a: (min(D[a, c] for c in chunk), a))
        stages.append(([ids[c] for c in chunk], [ids[a] for a in near[:cond_size]]))
        available = available + chunk
    return _make_plan(views, stages)


# ---------------------------------------------------------------------------
# analysis


def validate(plan: GenerationPlan) -> list[Violation]:
    """All invariant violations of ``plan``; an empty list means the plan is valid."""
    out: list[Violation] = []
    observed = set(plan.observed_ids)
    generated = set(plan.generated_ids)
    done: set = set()
    owner: dict = {}
    for i, st in enumerate(plan.stages):
        gen, cond = list(st.generate), list(st.condition)
        if not gen:
            out.append(Violation("empty-stage", i, (), "generate-set is empty"))
        for vid in gen:
            if vid not in plan.views:
                out.append(Violation("unknown-id", i, (vid,), f"{vid!r} is not a plan view"))
            elif vid in observed:
                out.append(Violation("observed-generated", i, (vid,), f"observed view {vid!r} is generated"))
            if vid in owner:
                out.append(
                    Violation("duplicate", i, (vid,), f"{vid!r} already generated in stage {owner[vid]}")
                )
            elif gen.count(vid) > 1:
                out.append(Violation("duplicate", i, (vid,), f"{vid!r} listed twice"))
        for vid in cond:
            if vid in gen:
                out.append(Violation("self-condition", i, (vid,), f"{vid!r} both generated and conditioned on"))
            elif vid not in plan.views:
                out.append(Violation("unknown-id", i, (vid,), f"{vid!r} is not a plan view"))
            elif vid not in observed and vid not in done:
                out.append(
                    Violation("infeasible", i, (vid,), f"conditions on {vid!r} before it is generated")
                )
        for vid in gen:
            owner.setdefault(vid, i)
        done.update(gen)
    missing = [v for v in plan.generated_ids if v not in done]
    if missing:
        out.append(Violation("uncovered", None, tuple(missing), f"never generated: {missing!r}"))
    return out


def depth(plan: GenerationPlan) -> DepthReport:
    problems = validate(plan)
    if problems:
        raise PlanError("invalid plan: " + "; ".join(map(str, problems)))
    d = {i: 0 for i in plan.observed_ids}
    for st in plan.stages:
        level = 1 + min(d[c] for c in st.condition) if st.condition else 0
        for vid in st.generate:
            d[vid] = level
    d = {i: d[i] for i in plan.views}
    return DepthReport(d, max(d.values(), default=0))


# ---------------------------------------------------------------------------
# plan files


def plan_to_dict(plan: GenerationPlan) -> dict:
    views = []
    for v in plan.views.values():
        entry = {"id": v.id, "role": v.role}
        if v.camera is not None:
            cam = v.camera.to_dict()
            cam.pop("id")
            entry["camera"] = cam
        views.append(entry)
    stages = [{"generate": list(s.generate), "condition": list(s.condition)} for s in plan.stages]
    return {"views": views, "stages": stages}


def plan_from_dict(data: dict) -> GenerationPlan:
    try:
        raw_views = data["views"]
        raw_stages = data["stages"]
    except (KeyError, TypeError) as exc:
        raise PlanError(f"plan file lacks field {exc}") from exc
    views = []
    for n, v in enumerate(raw_views):
        if "id" not in v:
            raise PlanError(f"view #{n} lacks 'id'")
        cam = None
        if v.get("camera") is not None:
            cam = camera_from_dict({**v["camera"], "id": v["id"]}, n)
        views.append(ViewSpec(v["id"], cam, v.get("role", GENERATED)))
    stages = []
    for n, s in enumerate(raw_stages):
        if "generate" not in s or "condition" not in s:
            raise PlanError(f"stage #{n} needs 'generate' and 'condition'")
        stages.append((s["generate"], s["condition"]))
    return _make_plan(views, stages)


def save_plan(plan: GenerationPlan, path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=1) + "\n")


def load_plan(path) -> GenerationPlan:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: invalid JSON ({exc})") from exc
    return plan_from_dict(data)


def relabel(plan: GenerationPlan, mapping: Mapping[Id, Id]) -> GenerationPlan:
    views = [ViewSpec(mapping[v.id], v.camera, v.role) for v in plan.views.values()]
    stages = [
        ([mapping[i] for i in s.generate], [mapping[i] for i in s.condition]) for s in plan.stages
    ]
    return _make_plan(views, stages)
