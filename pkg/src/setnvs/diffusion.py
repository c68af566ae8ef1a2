"""DDPM schedule and stepping, set sampling with per-view time, plan execution.

Values live in a toy sample space: each view holds a vector of dimension
``D``.  Every function accepts optional leading batch axes, so ``(S, D)``
arrays carry ``S`` independent draws through the sampler at once.

Denoisers follow the ``SetDenoiser`` call contract::

    denoiser(views, cameras) -> list of noise estimates

where ``views`` is a list of :class:`ViewState`, ``cameras`` is an aligned
list (entries may be ``None``), and one estimate is returned per view with
``time > 0``, in input order.  Views with ``time == 0`` are conditioning views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Protocol, Sequence

import numpy as np

from .geometry import Camera, camera_center
from .plan import GenerationPlan, PlanError, validate


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.size < 1 or np.any(beta <= 0) or np.any(beta >= 1):
            raise DiffusionError("betas must lie in (0, 1)")
        # index 0 holds the t = 0 convention, index t the step-t value
        b = np.concatenate([[0.0], beta])
        a = 1.0 - b
        ab = np.cumprod(a)
        for name, arr in (("beta", b), ("alpha", a), ("alpha_bar", ab)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return self.beta.size - 1


def build_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Linear beta schedule; ``schedule.beta[t]`` is beta_t for t = 1..T."""
    if T < 1:
        raise DiffusionError("T must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise DiffusionError("need 0 < beta_start <= beta_end < 1")
    return DiffusionSchedule(np.linspace(beta_start, beta_end, T))


def _check_t(t: int, schedule: DiffusionSchedule, lo: int) -> None:
    if not lo <= t <= schedule.T:
        raise DiffusionError(f"t={t} outside [{lo}, {schedule.T}]")


def q_sample(x0, t: int, eps, schedule: DiffusionSchedule) -> np.ndarray:
    _check_t(t, schedule, 0)
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * np.asarray(x0, dtype=float) + math.sqrt(1.0 - ab) * np.asarray(eps, dtype=float)


def reverse_step(x_t, eps_hat, t: int, zeta, schedule: DiffusionSchedule) -> np.ndarray:
    """One ancestral step with noise scale ``sqrt(beta_t)``; no noise at t = 1."""
    _check_t(t, schedule, 1)
    a, ab, b = schedule.alpha[t], schedule.alpha_bar[t], schedule.beta[t]
    mean = (np.asarray(x_t, dtype=float) - ((1.0 - a) / math.sqrt(1.0 - ab)) * np.asarray(eps_hat)) / math.sqrt(a)
    if t == 1:
        return mean
    return mean + math.sqrt(b) * np.asarray(zeta, dtype=float)


@dataclass(frozen=True)
class ViewState:
    id: Hashable
    value: np.ndarray
    time: int = 0

    @property
    def conditioning(self) -> bool:
        return self.time == 0


class SetDenoiser(Protocol):
    def __call__(
        self, views: Sequence[ViewState], cameras: Sequence[Camera | None]
    ) -> list[np.ndarray]: ...


def sample_set(
    denoiser: SetDenoiser,
    views: Sequence[ViewState],
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
    cameras: Sequence[Camera | None] | None = None,
    num_samples: int | None = None,
) -> list[ViewState]:
    """Reverse-diffuse every view with ``time > 0`` jointly; others stay fixed.

    Generated views restart from standard normal noise drawn from ``rng``; only
    the shape of their incoming ``value`` is used.  With ``num_samples`` set,
    generated values get a leading batch axis of that size.
    """
    views = list(views)
    cameras = list(cameras) if cameras is not None else [None] * len(views)
    gen_idx = [i for i, v in enumerate(views) if v.time != 0]
    if not gen_idx:
        return views
    T = schedule.T
    state = list(views)
    for i in gen_idx:
        shape = np.shape(views[i].value)
        if num_samples is not None:
            shape = (num_samples,) + shape[-1:]
        state[i] = ViewState(views[i].id, rng.standard_normal(shape), T)
    for t in range(T, 0, -1):
        for i in gen_idx:
            state[i] = ViewState(state[i].id, state[i].value, t)
        eps = denoiser(state, cameras)
        if len(eps) != len(gen_idx):
            raise DiffusionError(
                f"denoiser returned {len(eps)} estimates for {len(gen_idx)} generated views"
            )
        for i, e in zip(gen_idx, eps):
            x = state[i].value
            zeta = rng.standard_normal(np.shape(x)) if t > 1 else 0.0
            state[i] = ViewState(state[i].id, reverse_step(x, e, t, zeta, schedule), t - 1)
    return state


def execute_plan(
    plan: GenerationPlan,
    denoiser: SetDenoiser,
    observations: Mapping[Hashable, np.ndarray],
    schedule: DiffusionSchedule,
    seed: int | np.random.Generator,
    num_samples: int | None = None,
    dim: int | None = None,
) -> dict:
    """Run the stages of ``plan`` in order; returns ``{id: value}`` for all views."""
    problems = validate(plan)
    if problems:
        raise PlanError("invalid plan: " + "; ".join(map(str, problems)))
    missing = [i for i in plan.observed_ids if i not in observations]
    if missing:
        raise DiffusionError(f"missing observations for {missing!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    values = {i: np.asarray(observations[i], dtype=float) for i in plan.observed_ids}
    if dim is None:
        if not values:
            raise DiffusionError("dim is required for unconditional plans")
        dim = next(iter(values.values())).shape[-1]
    for st in plan.stages:
        cond = [ViewState(i, values[i], 0) for i in st.condition]
        gen = [ViewState(i, np.zeros(dim), schedule.T) for i in st.generate]
        views = cond + gen
        cams = [plan.camera(v.id) for v in views]
        out = sample_set(denoiser, views, schedule, rng, cams, num_samples)
        for v in out[len(cond) :]:
            values[v.id] = v.value
    return {i: values[i] for i in plan.views}


# ---------------------------------------------------------------------------
# Gaussian toy scene


@dataclass(frozen=True)
class ToySceneModel:
    """Views share a squared-exponential kernel over camera centres.

    Each of the ``dim`` value coordinates is an independent Gaussian process
    over the views with constant mean ``mu``.
    """

    ids: tuple
    poses: tuple
    mu: float
    sigma: float
    length_scale: float
    dim: int
    covariance: np.ndarray

    def index(self, ids: Sequence[Hashable]) -> list[int]:
        lookup = {v: n for n, v in enumerate(self.ids)}
        try:
            return [lookup[i] for i in ids]
        except KeyError as exc:
            raise DiffusionError(f"view {exc} is not part of the scene") from exc

    def conditional(self, target: Sequence[Hashable], given: Sequence[Hashable]):
        """``(gain, cov)`` with ``E[z_target | z_given] = mu + (z_given - mu) @ gain.T``."""
        ti, gi = self.index(target), self.index(given)
        S = self.covariance
        Stt = S[np.ix_(ti, ti)]
        if not gi:
            return np.zeros((len(ti), 0)), Stt
        Stg = S[np.ix_(ti, gi)]
        Sgg = S[np.ix_(gi, gi)]
        gain = np.linalg.solve(Sgg, Stg.T).T
        cov = Stt - gain @ Stg.T
        return gain, 0.5 * (cov + cov.T)

    def conditional_moments(self, target, conditioning: Mapping[Hashable, np.ndarray]):
        """Mean ``(..., n_target, D)`` and view covariance of ``target`` given values."""
        given = list(conditioning)
        gain, cov = self.conditional(target, given)
        mean = np.full((len(target), self.dim), self.mu, dtype=float)
        if given:
            c = np.stack([np.asarray(conditioning[g], dtype=float) for g in given], axis=-2)
            mean = mean + np.einsum("tg,...gd->...td", gain, c - self.mu)
        return mean, cov


def kernel(xa, xb, sigma: float, length_scale: float) -> np.ndarray:
    xa, xb = np.atleast_2d(xa), np.atleast_2d(xb)
    sq = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(-1)
    return sigma**2 * np.exp(-sq / (2.0 * length_scale**2))


def build_toy_scene(
    poses: Sequence[Camera],
    mu: float = 0.0,
    sigma: float = 1.0,
    length_scale: float = 1.0,
    dim: int = 4,
    ids: Sequence[Hashable] | None = None,
    jitter: float = 1e-9,
) -> ToySceneModel:
    if sigma <= 0 or length_scale <= 0:
        raise DiffusionError("sigma and length_scale must be positive")
    if ids is None:
        ids = [p.id if p.id is not None else n for n, p in enumerate(poses)]
    centers = np.array([camera_center(p) for p in poses])
    cov = kernel(centers, centers, sigma, length_scale) + jitter * np.eye(len(poses))
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DiffusionError("scene covariance is not positive definite") from exc
    cov.setflags(write=False)
    return ToySceneModel(tuple(ids), tuple(poses), float(mu), float(sigma), float(length_scale), int(dim), cov)


class AnalyticDenoiser:
    """Exact noise estimate for the Gaussian scene.

    The generated block has conditional prior ``N(m, S)`` given the
    conditioning views (time 0 in the call, plus any fixed ``conditioning``),
    and ``eps_hat = (x_t - sqrt(ab) E[z | x_t]) / sqrt(1 - ab)`` with
    ``E[z | x_t] = m + sqrt(ab) S (ab S + (1 - ab) I)^-1 (x_t - sqrt(ab) m)``.
    """

    def __init__(self, scene: ToySceneModel, schedule: DiffusionSchedule, conditioning=None):
        self.scene = scene
        self.schedule = schedule
        self.fixed = dict(conditioning or {})
        scene.index(list(self.fixed))
        self._cache: dict = {}

    def _blocks(self, gen_ids: tuple, cond_ids: tuple):
        key = (gen_ids, cond_ids)
        if key not in self._cache:
            gain, cov = self.scene.conditional(gen_ids, cond_ids)
            lam, U = np.linalg.eigh(cov)
            self._cache[key] = (gain, np.clip(lam, 0.0, None), U)
        return self._cache[key]

    def __call__(self, views, cameras=None):
        gen = [v for v in views if v.time != 0]
        if not gen:
            return []
        times = {v.time for v in gen}
        if len(times) != 1:
            raise DiffusionError("analytic denoiser expects one shared time across generated views")
        t = times.pop()
        cond = dict(self.fixed)
        cond.update({v.id: v.value for v in views if v.time == 0})
        gen_ids = tuple(v.id for v in gen)
        cond_ids = tuple(cond)
        gain, lam, U = self._blocks(gen_ids, cond_ids)

        x = np.stack([np.asarray(v.value, dtype=float) for v in gen], axis=-2)  # (..., G, D)
        m = np.full(x.shape[-2:], self.scene.mu)
        if cond_ids:
            c = np.stack([np.broadcast_to(cond[i], x.shape[:-2] + x.shape[-1:]) for i in cond_ids], axis=-2)
            m = m + gain @ (c - self.scene.mu)
        ab = self.schedule.alpha_bar[t]
        sab = math.sqrt(ab)
        # S (ab S + (1 - ab) I)^-1 is diagonal in S's eigenbasis
        shrink = lam / (ab * lam + (1.0 - ab))
        r = x - sab * m
        proj = (U.T @ r) * shrink[:, None]
        ez = m + sab * (U @ proj)
        eps = (x - sab * ez) / math.sqrt(1.0 - ab)
        return [eps[..., n, :] for n in range(len(gen))]


def analytic_denoiser(scene: ToySceneModel, conditioning=None, schedule: DiffusionSchedule | None = None):
    return AnalyticDenoiser(scene, schedule or build_schedule(), conditioning)


class TruncatedDenoiser:
    """Keeps only the ``window`` conditioning views nearest the generated centroid.

    Distance is measured between camera centres.  ``window=None`` keeps all.
    """

    def __init__(self, inner: SetDenoiser, window: int | None):
        if window is not None and window < 0:
            raise ValueError("window must be >= 0")
        self.inner = inner
        self.window = window

    def __call__(self, views, cameras=None):
        cameras = list(cameras) if cameras is not None else [None] * len(views)
        cond = [n for n, v in enumerate(views) if v.time == 0]
        if self.window is None or len(cond) <= self.window:
            return self.inner(views, cameras)
        gen = [n for n, v in enumerate(views) if v.time != 0]
        if self.window == 0:
            keep = set()
        else:
            if any(cameras[n] is None for n in cond + gen):
                raise DiffusionError("truncation needs a camera for every view")
            centroid = np.mean([camera_center(cameras[n]) for n in gen], axis=0)
            dist = {n: float(np.linalg.norm(camera_center(cameras[n]) - centroid)) for n in cond}
            keep = set(sorted(cond, key=lambda n: (dist[n], n))[: self.window])
        idx = [n for n in range(len(views)) if n in keep or views[n].time != 0]
        return self.inner([views[n] for n in idx], [cameras[n] for n in idx])


def truncate_conditioning(inner: SetDenoiser, window: int | None) -> TruncatedDenoiser:
    return TruncatedDenoiser(inner, window)


# ---------------------------------------------------------------------------
# divergence of sampled moments from the exact conditional


def gaussian_kl(m0, S0, m1, S1) -> float:
    """KL(N(m0, S0) || N(m1, S1))."""
    m0, m1 = np.atleast_1d(m0).astype(float), np.atleast_1d(m1).astype(float)
    S0, S1 = np.atleast_2d(S0).astype(float), np.atleast_2d(S1).astype(float)
    k = m0.size
    L1 = np.linalg.cholesky(S1)
    diff = np.linalg.solve(L1, m1 - m0)
    A = np.linalg.solve(L1, S0)
    tr = np.trace(np.linalg.solve(L1.T, A))
    sign0, logdet0 = np.linalg.slogdet(S0)
    if sign0 <= 0:
        raise DiffusionError("degenerate covariance")
    logdet1 = 2.0 * np.log(np.diag(L1)).sum()
    return float(0.5 * (tr + diff @ diff - k + logdet1 - logdet0))


@dataclass
class DivergenceReport:
    per_view_kl: dict
    joint_kl: float
    mean_error: dict
    cov_error: dict
    num_samples: int


def gaussian_divergence(
    samples: Mapping[Hashable, np.ndarray],
    scene: ToySceneModel,
    conditioning: Mapping[Hashable, np.ndarray] | None = None,
    min_samples: int = 1000,
) -> DivergenceReport:
    """Fit Gaussians to ``samples`` (``{id: (S, D)}``) and compare to the truth.

    Per-view KL is ``KL(fitted || exact conditional marginal)`` over the ``D``
    value coordinates; ``joint_kl`` does the same over all sampled views.
    """
    conditioning = dict(conditioning or {})
    ids = list(samples)
    arrs = [np.asarray(samples[i], dtype=float) for i in ids]
    S = arrs[0].shape[0]
    if S < min_samples:
        raise DiffusionError(f"need at least {min_samples} samples, got {S}")
    mean, vcov = scene.conditional_moments(ids, conditioning)
    D = scene.dim
    per_view, merr, cerr = {}, {}, {}
    for n, (i, x) in enumerate(zip(ids, arrs)):
        m_hat = x.mean(axis=0)
        C_hat = np.cov(x, rowvar=False).reshape(D, D)
        true_C = vcov[n, n] * np.eye(D)
        per_view[i] = gaussian_kl(m_hat, C_hat, mean[n], true_C)
        merr[i] = float(np.abs(m_hat - mean[n]).max())
        cerr[i] = float(np.abs(C_hat - true_C).max())
    # joint over (view, coordinate) pairs, view-major
    X = np.concatenate(arrs, axis=1)
    joint_true = np.kron(vcov, np.eye(D))
    joint = gaussian_kl(X.mean(axis=0), np.cov(X, rowvar=False), mean.reshape(-1), joint_true)
    return DivergenceReport(per_view, joint, merr, cerr, S)
