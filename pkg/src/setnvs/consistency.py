"""Thresholded symmetric epipolar distance (TSED).

A view pair is consistent when it has at least ``t_matches`` feature matches
and the median symmetric epipolar distance of those matches is below
``t_error`` pixels.  The symmetric distance of a match is the mean of the two
point-to-epipolar-line distances.  A point sitting on the epipole has no
epipolar line; its distance is ``inf``.  It still counts as a match and only
pulls the median to ``inf`` when such points fill the middle of the sorted list.

Match files are JSON: ``{"pair": [id_a, id_b], "matches": [[u_a, v_a, u_b, v_b], ...]}``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Mapping, Sequence

import numpy as np

from .geometry import Camera, fundamental_matrix

DEFAULT_SWEEP = tuple(np.round(np.arange(1.0, 4.0 + 1e-9, 0.5), 10))
MODES = ("adjacent", "first_last", "same_sided", "cross_sided")


class MatchFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MatchSet:
    pair: tuple
    matches: np.ndarray  # (M, 4): u_a, v_a, u_b, v_b

    def __post_init__(self):
        m = np.asarray(self.matches, dtype=float).reshape(-1, 4)
        if not np.all(np.isfinite(m)):
            raise MatchFormatError("match coordinates must be finite")
        object.__setattr__(self, "matches", m)
        object.__setattr__(self, "pair", tuple(self.pair))

    def __len__(self):
        return self.matches.shape[0]


@dataclass(frozen=True)
class TSEDConfig:
    t_matches: int = 10
    t_error: float = 2.0

    def __post_init__(self):
        if self.t_matches < 1 or not self.t_error > 0:
            raise ValueError("need t_matches >= 1 and t_error > 0")


@dataclass(frozen=True)
class PairResult:
    pair: tuple
    count: int
    median: float | None
    degenerate: int
    consistent: dict  # threshold -> bool


@dataclass
class TSEDReport:
    thresholds: tuple
    pairs: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)  # threshold -> percent
    skipped: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "percent"])
        for t in self.thresholds:
            w.writerow([f"{t:g}", f"{self.aggregate[t]:.6f}"])
        return buf.getvalue()

    def details_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["view_a", "view_b", "matches", "median_sed", "degenerate"] + [f"ok@{t:g}" for t in self.thresholds])
        for r in self.pairs:
            med = "" if r.median is None else f"{r.median:.6f}"
            w.writerow([r.pair[0], r.pair[1], r.count, med, r.degenerate] + [int(r.consistent[t]) for t in self.thresholds])
        for p in self.skipped:
            w.writerow([p[0], p[1], "missing", "", "", *[""] * len(self.thresholds)])
        return buf.getvalue()


def _line_distance(line: np.ndarray, pts: np.ndarray) -> np.ndarray:
    a, b, c = line[..., 0], line[..., 1], line[..., 2]
    norm = np.hypot(a, b)
    num = np.abs(a * pts[..., 0] + b * pts[..., 1] + c)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num / norm
    return np.where(norm > 0, d, np.inf)


def sed_many(F: np.ndarray, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Vectorised :func:`sed` over ``(M, 2)`` point arrays."""
    F = np.asarray(F, dtype=float)
    n = np.linalg.norm(F)
    if n == 0:
        raise ValueError("F must be non-zero")
    F = F / n
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    ha = np.concatenate([xa, np.ones((len(xa), 1))], axis=1)
    hb = np.concatenate([xb, np.ones((len(xb), 1))], axis=1)
    line_b = ha @ F.T  # F x_a, lines in image b
    line_a = hb @ F  # F^T x_b, lines in image a
    return 0.5 * (_line_distance(line_b, xb) + _line_distance(line_a, xa))


def sed(F: np.ndarray, x_a, x_b) -> float:
    return float(sed_many(F, x_a, x_b)[0])


def tsed_pair(matches: MatchSet, F: np.ndarray, config: TSEDConfig) -> tuple[bool, float | None, int]:
    count = len(matches)
    if count == 0:
        return False, None, 0
    d = sed_many(F, matches.matches[:, :2], matches.matches[:, 2:])
    med = float(np.median(d))
    return bool(count >= config.t_matches and med < config.t_error), med, count


def make_pairs(view_ids: Sequence[Hashable], mode: str, stereo_pairs=None) -> list[tuple]:
    """View pairs to evaluate.

    ``adjacent`` and ``first_last`` use the order of ``view_ids``.  The stereo
    modes take ``stereo_pairs`` as an ordered list of ``(right, left)`` ids.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode in ("adjacent", "first_last"):
        if stereo_pairs is not None:
            raise ValueError(f"mode {mode!r} takes an ordered view list, not stereo pairs")
        ids = list(view_ids)
        if mode == "adjacent":
            return list(zip(ids[:-1], ids[1:]))
        return [(ids[0], ids[-1])] if len(ids) >= 2 else []
    if stereo_pairs is None:
        raise ValueError(f"mode {mode!r} needs stereo pairs")
    sp = [tuple(p) for p in stereo_pairs]
    out = []
    for (r0, l0), (r1, l1) in zip(sp[:-1], sp[1:]):
        if mode == "same_sided":
            out += [(l0, l1), (r0, r1)]
        else:
            out += [(l0, r1), (r0, l1)]
    return out


def tsed_evaluate(
    match_sets: Sequence[MatchSet],
    cameras: Mapping[Hashable, Camera],
    config: TSEDConfig = TSEDConfig(),
    thresholds: Sequence[float] = DEFAULT_SWEEP,
) -> TSEDReport:
    thresholds = tuple(float(t) for t in thresholds)
    report = TSEDReport(thresholds)
    for ms in match_sets:
        a, b = ms.pair
        for v in (a, b):
            if v not in cameras:
                raise KeyError(f"no camera for view {v!r}")
        F = fundamental_matrix(cameras[a], cameras[b])
        _, med, count = tsed_pair(ms, F, config)
        degenerate = 0
        if count:
            degenerate = int(np.isinf(sed_many(F, ms.matches[:, :2], ms.matches[:, 2:])).sum())
        flags = {t: bool(count >= config.t_matches and med is not None and med < t) for t in thresholds}
        report.pairs.append(PairResult((a, b), count, med, degenerate, flags))
    n = len(report.pairs)
    for t in thresholds:
        ok = sum(r.consistent[t] for r in report.pairs)
        report.aggregate[t] = 100.0 * ok / n if n else 0.0
    return report


def load_match_file(path) -> MatchSet:
    try:
        data = json.loads(Path(path).read_text())
        pair = data["pair"]
        matches = data["matches"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MatchFormatError(f"{path}: malformed match file ({exc})") from exc
    if len(pair) != 2:
        raise MatchFormatError(f"{path}: 'pair' needs two ids")
    if any(len(m) != 4 for m in matches):
        raise MatchFormatError(f"{path}: each match needs [u_a, v_a, u_b, v_b]")
    return MatchSet(tuple(pair), np.array(matches, dtype=float).reshape(-1, 4))


def save_match_file(ms: MatchSet, path) -> None:
    data = {"pair": list(ms.pair), "matches": [[float(x) for x in row] for row in ms.matches]}
    Path(path).write_text(json.dumps(data) + "\n")


def load_match_dir(directory) -> dict:
    """``{(id_a, id_b): MatchSet}`` for every ``*.json`` file in ``directory``."""
    out = {}
    for p in sorted(Path(directory).glob("*.json")):
        ms = load_match_file(p)
        out[ms.pair] = ms
    return out


def lookup_pair(match_sets: Mapping[tuple, MatchSet], pair: tuple) -> MatchSet | None:
    """Match set for ``pair``, swapping a file stored as ``(b, a)`` if needed."""
    if pair in match_sets:
        return match_sets[pair]
    rev = (pair[1], pair[0])
    if rev in match_sets:
        m = match_sets[rev].matches
        return MatchSet(pair, np.concatenate([m[:, 2:], m[:, :2]], axis=1))
    return None
