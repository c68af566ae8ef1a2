"""Pinhole cameras, per-pixel rays, Fourier ray encoding and canonicalization.

Conventions used throughout the package:

* matrices are row-major numpy arrays;
* extrinsics are world-to-camera, ``x_cam = R @ x_world + t``;
* pixel ``(u, v)`` is column ``u``, row ``v``; ray maps sample pixel centres
  ``(u + 0.5, v + 0.5)``.

Trajectory files are JSON lists (or ``{"cameras": [...]}``) of objects with the
fields ``id, fx, fy, cx, cy, width, height, R, t`` where ``R`` holds 9 numbers
row-major and ``t`` holds 3 numbers.  Optional extra fields (``role``,
``group``, ``side``) are preserved for the planning and TSED tools.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Sequence

import numpy as np

ORTHO_TOL = 1e-9
CAMERA_FIELDS = ("id", "fx", "fy", "cx", "cy", "width", "height", "R", "t")


class GeometryError(ValueError):
    pass


class TrajectoryFormatError(ValueError):
    """Raised for malformed trajectory files; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> None:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise GeometryError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0):
        raise GeometryError("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise GeometryError("rotation determinant is not +1")


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with zero-skew intrinsics ``K`` and extrinsics ``[R|t]``."""

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    id: Hashable = None

    def __post_init__(self):
        K = _frozen(self.intrinsics)
        R = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(3)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if K.shape != (3, 3):
            raise GeometryError("intrinsics must be 3x3")
        if K[0, 1] != 0 or np.any(K[2] != (0, 0, 1)) or K[1, 0] != 0:
            raise GeometryError("intrinsics must be upper-triangular, zero skew")
        check_rotation(R)
        if int(self.width) < 1 or int(self.height) < 1:
            raise GeometryError("width and height must be positive")
        fx, fy = K[0, 0], K[1, 1]
        if not (fx > 0 and fy > 0):
            raise GeometryError("focal lengths must be positive")

    def check_principal_point(self) -> None:
        # not enforced at construction: K = I test cameras put (cx, cy) at the corner
        K = self.intrinsics
        if not (0 < K[0, 2] < self.width and 0 < K[1, 2] < self.height):
            raise GeometryError("principal point must lie inside the image")

    @classmethod
    def from_params(cls, fx, fy, cx, cy, width, height, R=None, t=None, id=None) -> "Camera":
        K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        R = np.eye(3) if R is None else np.asarray(R, dtype=float).reshape(3, 3)
        t = np.zeros(3) if t is None else np.asarray(t, dtype=float).reshape(3)
        return cls(K, R, t, int(width), int(height), id)

    @property
    def center(self) -> np.ndarray:
        return camera_center(self)

    def with_pose(self, rotation, translation) -> "Camera":
        return Camera(self.intrinsics, rotation, translation, self.width, self.height, self.id)

    def to_dict(self) -> dict[str, Any]:
        K = self.intrinsics
        return {
            "id": self.id,
            "fx": float(K[0, 0]),
            "fy": float(K[1, 1]),
            "cx": float(K[0, 2]),
            "cy": float(K[1, 2]),
            "width": int(self.width),
            "height": int(self.height),
            "R": [float(x) for x in self.rotation.reshape(-1)],
            "t": [float(x) for x in self.translation],
        }


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True)
class RigidTransform:
    """``x -> rotation @ x + translation``; directions only see the rotation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation))
        object.__setattr__(self, "translation", _frozen(self.translation).reshape(3))
        check_rotation(self.rotation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply_points(self, x: np.ndarray) -> np.ndarray:
        return x @ self.rotation.T + self.translation

    def apply_directions(self, d: np.ndarray) -> np.ndarray:
        return d @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def transform_camera(self, camera: Camera) -> Camera:
        """Camera seeing the transformed world exactly as ``camera`` saw the original."""
        inv = self.inverse()
        R = camera.rotation @ inv.rotation
        t = camera.rotation @ inv.translation + camera.translation
        return camera.with_pose(R, t)


@dataclass(frozen=True)
class RayMap:
    """Rays of every pixel centre: ``origins``/``directions`` are ``(H, W, 3)``."""

    camera: Camera
    origins: np.ndarray
    directions: np.ndarray

    @property
    def camera_id(self):
        return self.camera.id

    @property
    def shape(self) -> tuple[int, int]:
        return self.origins.shape[:2]

    def ray(self, row: int, col: int) -> Ray:
        return Ray(self.origins[row, col], self.directions[row, col])

    def transformed(self, transform: RigidTransform) -> "RayMap":
        return RayMap(
            self.camera,
            _frozen(transform.apply_points(self.origins)),
            _frozen(transform.apply_directions(self.directions)),
        )


@dataclass(frozen=True)
class EncodedRays:
    """``grid`` is ``(H, W, 12K)``.

    Channel layout: component-major over ``(ox, oy, oz, dx, dy, dz)``, then
    frequency, then ``sin`` before ``cos``; channel index is
    ``c * 2K + 2k + {0: sin, 1: cos}``.
    """

    grid: np.ndarray
    frequencies: tuple[float, ...] = field(default=())

    @property
    def num_channels(self) -> int:
        return self.grid.shape[-1]


def camera_center(camera: Camera) -> np.ndarray:
    return -camera.rotation.T @ camera.translation


def pixel_ray(camera: Camera, u: float, v: float) -> Ray:
    pix = np.array([u, v, 1.0])
    d = camera.rotation.T @ np.linalg.solve(camera.intrinsics, pix)
    n = np.linalg.norm(d)
    if not n >= 1e-12:
        raise GeometryError("degenerate ray direction")
    return Ray(camera_center(camera), d / n)


def build_ray_map(camera: Camera) -> RayMap:
    H, W = camera.height, camera.width
    u, v = np.meshgrid(np.arange(W) + 0.5, np.arange(H) + 0.5)
    pix = np.stack([u, v, np.ones_like(u)], axis=-1)
    Kinv = np.linalg.inv(camera.intrinsics)
    # row-vector form of R^T K^-1 p
    d = pix @ Kinv.T @ camera.rotation
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(camera_center(camera), d.shape)
    return RayMap(camera, _frozen(o), _frozen(d))


def fourier_encode(ray_map: RayMap, num_frequencies: int = 8, prescale: float = 1.0) -> EncodedRays:
    """Encode ``sin/cos(f_k pi c)`` with ``f_k = 2**(k-1)`` for each ray component.

    ``prescale`` multiplies every component before encoding; unbounded origins
    alias at high frequencies, so scenes with large extents may want it < 1.
    """
    if num_frequencies < 1:
        raise ValueError("num_frequencies must be >= 1")
    freqs = 2.0 ** np.arange(num_frequencies)
    comps = np.concatenate([ray_map.origins, ray_map.directions], axis=-1) * prescale
    arg = np.pi * comps[..., :, None] * freqs  # (H, W, 6, K)
    enc = np.stack([np.sin(arg), np.cos(arg)], axis=-1)  # (H, W, 6, K, 2)
    grid = enc.reshape(*comps.shape[:-1], 12 * num_frequencies)
    return EncodedRays(_frozen(grid), tuple(float(f) for f in freqs))


def canonicalizing_transform(reference: Camera) -> RigidTransform:
    # the reference's own extrinsics move its centre to the origin with identity orientation
    return RigidTransform(reference.rotation, reference.translation)


def canonicalize_set(maps: Sequence[RayMap], reference_index: int) -> list[RayMap]:
    if not -len(maps) <= reference_index < len(maps) or len(maps) == 0:
        raise IndexError(f"reference_index {reference_index} out of range for {len(maps)} maps")
    T = canonicalizing_transform(maps[reference_index].camera)
    return [m.transformed(T) for m in maps]


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def relative_pose(cam_a: Camera, cam_b: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Pose of ``b`` relative to ``a``: ``x_b = R_rel x_a + t_rel`` in camera frames."""
    R_rel = cam_b.rotation @ cam_a.rotation.T
    t_rel = cam_b.translation - R_rel @ cam_a.translation
    return R_rel, t_rel


def fundamental_matrix(cam_a: Camera, cam_b: Camera) -> np.ndarray:
    """``F`` with ``x_b^T F x_a = 0`` for homogeneous pixels; unit Frobenius norm."""
    if np.linalg.norm(camera_center(cam_a) - camera_center(cam_b)) <= 1e-9:
        raise GeometryError("coincident camera centres: epipolar geometry undefined")
    R_rel, t_rel = relative_pose(cam_a, cam_b)
    Ka_inv = np.linalg.inv(cam_a.intrinsics)
    Kb_inv = np.linalg.inv(cam_b.intrinsics)
    F = Kb_inv.T @ skew(t_rel) @ R_rel @ Ka_inv
    return F / np.linalg.norm(F)


def project(camera: Camera, points: np.ndarray) -> np.ndarray:
    """Pixel coordinates ``(N, 2)`` of world points ``(N, 3)``."""
    cam = np.asarray(points, dtype=float) @ camera.rotation.T + camera.translation
    pix = cam @ camera.intrinsics.T
    return pix[:, :2] / pix[:, 2:3]


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    S = skew(a)
    return np.eye(3) + np.sin(angle) * S + (1 - np.cos(angle)) * (S @ S)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    # re-orthonormalise so det/orthogonality sit well inside the 1e-9 checks
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def random_rigid(rng: np.random.Generator, scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), scale * rng.standard_normal(3))


def look_at(center, target, up=(0.0, -1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera ``(R, t)`` for a camera at ``center`` looking at ``target``.

    Camera axes follow the usual vision convention: +z forward, +y down.
    """
    c = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - c
    z /= np.linalg.norm(z)
    x = np.cross(np.asarray(up, dtype=float), z)
    if np.linalg.norm(x) < 1e-12:
        x = np.cross(np.array([1.0, 0.0, 0.0]), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ c


# ---------------------------------------------------------------------------
# trajectory files


def camera_from_dict(entry: dict, index: int = 0) -> Camera:
    if not isinstance(entry, dict):
        raise TrajectoryFormatError(f"camera #{index} is not an object", field=f"[{index}]")
    for name in CAMERA_FIELDS:
        if name not in entry:
            raise TrajectoryFormatError(
                f"camera #{index} is missing field '{name}'", field=name
            )
    try:
        R = np.asarray(entry["R"], dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise TrajectoryFormatError(f"camera #{index}: field 'R' is not numeric", field="R") from exc
    if R.size != 9:
        raise TrajectoryFormatError(f"camera #{index}: field 'R' needs 9 numbers", field="R")
    try:
        t = np.asarray(entry["t"], dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise TrajectoryFormatError(f"camera #{index}: field 't' is not numeric", field="t") from exc
    if t.size != 3:
        raise TrajectoryFormatError(f"camera #{index}: field 't' needs 3 numbers", field="t")
    try:
        cam = Camera.from_params(
            float(entry["fx"]),
            float(entry["fy"]),
            float(entry["cx"]),
            float(entry["cy"]),
            int(entry["width"]),
            int(entry["height"]),
            R.reshape(3, 3),
            t,
            id=entry["id"],
        )
        cam.check_principal_point()
    except (TypeError, ValueError) as exc:
        raise TrajectoryFormatError(f"camera #{index}: {exc}") from exc
    return cam


def parse_trajectory(data) -> list[dict]:
    """Validated camera entries; each dict gains a ``camera`` key."""
    if isinstance(data, dict):
        if "cameras" not in data:
            raise TrajectoryFormatError("trajectory object lacks 'cameras'", field="cameras")
        data = data["cameras"]
    if not isinstance(data, list):
        raise TrajectoryFormatError("trajectory must be a list of cameras", field="cameras")
    entries, seen = [], set()
    for i, entry in enumerate(data):
        cam = camera_from_dict(entry, i)
        if cam.id in seen:
            raise TrajectoryFormatError(f"duplicate camera id {cam.id!r}", field="id")
        seen.add(cam.id)
        entries.append({**entry, "camera": cam})
    return entries


def load_trajectory(path) -> list[dict]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TrajectoryFormatError(f"{path}: invalid JSON ({exc})") from exc
    return parse_trajectory(data)


def dump_trajectory(cameras: Sequence[Camera], path=None, extra: Sequence[dict] | None = None) -> str:
    items = []
    for i, cam in enumerate(cameras):
        d = cam.to_dict()
        if extra is not None:
            d.update(extra[i])
        items.append(d)
    text = json.dumps(items, indent=1)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
