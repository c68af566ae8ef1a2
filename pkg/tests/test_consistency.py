import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import canonical_camera, scene_cameras
from setnvs.consistency import (
    DEFAULT_SWEEP,
    MatchFormatError,
    MatchSet,
    TSEDConfig,
    load_match_dir,
    load_match_file,
    lookup_pair,
    make_pairs,
    save_match_file,
    sed,
    sed_many,
    tsed_evaluate,
    tsed_pair,
)
from setnvs.geometry import fundamental_matrix, project


def x_translation_F():
    a = canonical_camera(8, 8, K=[[4, 0, 4], [0, 4, 4], [0, 0, 1]])
    b = canonical_camera(8, 8, K=[[4, 0, 4], [0, 4, 4], [0, 0, 1]], t=[-1.0, 0.0, 0.0])
    return fundamental_matrix(a, b)


def synthetic_matches(cam_a, cam_b, rng, n=20):
    pts = rng.normal(scale=0.5, size=(n, 3))
    return np.concatenate([project(cam_a, pts), project(cam_b, pts)], axis=1)


def perpendicular_offset(F, m, px):
    """Move each ``x_b`` by ``px`` pixels along the normal of its epipolar line."""
    F = F / np.linalg.norm(F)
    ha = np.concatenate([m[:, :2], np.ones((len(m), 1))], axis=1)
    lines = ha @ F.T
    n = lines[:, :2] / np.linalg.norm(lines[:, :2], axis=1, keepdims=True)
    out = m.copy()
    out[:, 2:] += px * n
    return out


# sed


def test_sed_on_line_is_zero():
    assert sed(x_translation_F(), (3, 2), (7, 2)) == 0.0


def test_sed_offset_example():
    # image b: distance of (7, 4) to y = 2 is 2; image a: distance of (3, 2) to y = 4 is 2
    assert math.isclose(sed(x_translation_F(), (3, 2), (7, 4)), 2.0, rel_tol=1e-12)


def test_sed_scale_invariant():
    F = x_translation_F()
    assert sed(37.0 * F, (3, 2), (7, 4)) == pytest.approx(sed(F, (3, 2), (7, 4)), rel=1e-12)
    assert sed(-F, (1, 5), (2, 3)) == pytest.approx(sed(F, (1, 5), (2, 3)), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sed_symmetry_exact(seed):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(3, 3))
    xa, xb = rng.uniform(0, 100, size=(2, 2))
    assert sed(F, xa, xb) == sed(F.T, xb, xa)


def test_sed_ground_truth_projections(rng):
    cams = scene_cameras(rng, 6)
    for a, b in zip(cams[:-1], cams[1:]):
        m = synthetic_matches(a, b, rng, 50)
        assert sed_many(fundamental_matrix(a, b), m[:, :2], m[:, 2:]).max() <= 1e-6


def test_sed_at_epipole_is_inf():
    # a pure x-translation puts the epipole at infinity; use forward motion instead
    a = canonical_camera(8, 8, K=[[4, 0, 4], [0, 4, 4], [0, 0, 1]])
    b = canonical_camera(8, 8, K=[[4, 0, 4], [0, 4, 4], [0, 0, 1]], t=[0.0, 0.0, -1.0])
    F = fundamental_matrix(a, b)
    assert sed(F, (4, 4), (4, 4)) == math.inf
    with pytest.raises(ValueError):
        sed(np.zeros((3, 3)), (0, 0), (1, 1))


# tsed_pair


def test_tsed_pair_exact_matches(rng):
    a, b = scene_cameras(rng, 2)
    ms = MatchSet((0, 1), synthetic_matches(a, b, rng, 20))
    F = fundamental_matrix(a, b)
    for t in DEFAULT_SWEEP:
        ok, med, count = tsed_pair(ms, F, TSEDConfig(10, t))
        assert ok and count == 20 and med <= 1e-6


def test_tsed_pair_median_threshold():
    F = x_translation_F()
    # offsets along y give sed = |dy|; median of these is 2.5
    dys = [1.0, 2.0, 2.0, 3.0, 3.0, 4.0] * 2
    ms = MatchSet((0, 1), [[3, 2, 7, 2 + dy] for dy in dys])
    ok2, med, _ = tsed_pair(ms, F, TSEDConfig(10, 2.0))
    ok3, _, _ = tsed_pair(ms, F, TSEDConfig(10, 3.0))
    assert med == pytest.approx(2.5, rel=1e-12)
    assert not ok2 and ok3


def test_tsed_pair_match_gating(rng):
    a, b = scene_cameras(rng, 2)
    ms = MatchSet((0, 1), synthetic_matches(a, b, rng, 5))
    ok, med, count = tsed_pair(ms, fundamental_matrix(a, b), TSEDConfig(10, 100.0))
    assert not ok and count == 5 and med < 1e-6


def test_tsed_pair_empty():
    assert tsed_pair(MatchSet((0, 1), np.zeros((0, 4))), x_translation_F(), TSEDConfig()) == (False, None, 0)


def test_inf_counts_toward_median():
    a = canonical_camera(8, 8, K=[[4, 0, 4], [0, 4, 4], [0, 0, 1]])
    b = canonical_camera(8, 8, K=[[4, 0, 4], [0, 4, 4], [0, 0, 1]], t=[0.0, 0.0, -1.0])
    F = fundamental_matrix(a, b)
    good = [[5, 4, 6, 4]] * 3  # on the radial epipolar line through the centre
    bad = [[4, 4, 4, 4]] * 2
    assert tsed_pair(MatchSet((0, 1), good + bad), F, TSEDConfig(1, 1.0))[0]
    assert tsed_pair(MatchSet((0, 1), good[:2] + bad * 2), F, TSEDConfig(1, 1.0))[1] == math.inf


def test_config_validation():
    with pytest.raises(ValueError):
        TSEDConfig(0, 1.0)
    with pytest.raises(ValueError):
        TSEDConfig(1, 0.0)


def test_match_set_rejects_nan():
    with pytest.raises(MatchFormatError):
        MatchSet((0, 1), [[0, 0, math.nan, 0]])


# make_pairs


def test_make_pairs_examples():
    assert make_pairs([0, 1, 2], "adjacent") == [(0, 1), (1, 2)]
    assert make_pairs(list(range(10)), "first_last") == [(0, 9)]
    stereo = [("R1", "L1"), ("R2", "L2"), ("R3", "L3")]
    cross = make_pairs(None, "cross_sided", stereo)
    assert len(cross) == 4
    assert set(cross) == {("L1", "R2"), ("R1", "L2"), ("L2", "R3"), ("R2", "L3")}
    same = make_pairs(None, "same_sided", stereo)
    assert set(same) == {("L1", "L2"), ("R1", "R2"), ("L2", "L3"), ("R2", "R3")}


def test_make_pairs_errors():
    with pytest.raises(ValueError):
        make_pairs([0, 1], "loop")
    with pytest.raises(ValueError):
        make_pairs(None, "cross_sided")
    with pytest.raises(ValueError):
        make_pairs([0, 1], "adjacent", [(0, 1)])


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_stereo_pair_counts(n):
    stereo = [(f"R{i}", f"L{i}") for i in range(n)]
    assert len(make_pairs(None, "cross_sided", stereo)) == 2 * (n - 1)
    assert len(make_pairs(None, "same_sided", stereo)) == 2 * (n - 1)


# tsed_evaluate


def _scene(rng, n):
    cams = scene_cameras(rng, n)
    sets = [MatchSet((k, k + 1), synthetic_matches(cams[k], cams[k + 1], rng, 30)) for k in range(n - 1)]
    return {c.id: c for c in cams}, sets


def test_evaluate_exact_matches_full_score(rng):
    cams, sets = _scene(rng, 5)
    rep = tsed_evaluate(sets, cams)
    assert rep.thresholds == (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    assert all(v == 100.0 for v in rep.aggregate.values())


def test_evaluate_perpendicular_perturbation(rng):
    cams, sets = _scene(rng, 5)
    F = fundamental_matrix(cams[2], cams[3])
    moved = perpendicular_offset(F, sets[2].matches, 10.0)
    assert sed_many(F, moved[:, :2], moved[:, 2:]).min() > 4.0
    sets[2] = MatchSet(sets[2].pair, moved)
    rep = tsed_evaluate(sets, cams)
    bad = rep.pairs[2]
    assert not any(bad.consistent.values()) and bad.median > 4.0
    assert all(all(r.consistent.values()) for k, r in enumerate(rep.pairs) if k != 2)
    assert all(v == 75.0 for v in rep.aggregate.values())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_evaluate_monotone_and_recount(seed):
    rng = np.random.default_rng(seed)
    cams, sets = _scene(rng, 6)
    noisy = []
    for ms in sets:
        m = ms.matches.copy()
        m[:, 2:] += rng.normal(scale=rng.uniform(0, 4), size=(len(m), 2))
        keep = int(rng.integers(5, len(m) + 1))
        noisy.append(MatchSet(ms.pair, m[:keep]))
    thresholds = sorted(rng.uniform(0.1, 6, size=8))
    rep = tsed_evaluate(noisy, cams, TSEDConfig(10, 1.0), thresholds)
    values = [rep.aggregate[t] for t in rep.thresholds]
    assert all(a <= b for a, b in zip(values, values[1:]))
    for t in rep.thresholds:
        recount = sum(
            1 for ms in noisy
            if len(ms) >= 10 and np.median(sed_many(fundamental_matrix(cams[ms.pair[0]], cams[ms.pair[1]]), ms.matches[:, :2], ms.matches[:, 2:])) < t
        )
        assert rep.aggregate[t] == pytest.approx(100.0 * recount / len(noisy), abs=1e-12)
        assert 0.0 <= rep.aggregate[t] <= 100.0


def test_evaluate_missing_camera(rng):
    cams, sets = _scene(rng, 3)
    del cams[2]
    with pytest.raises(KeyError):
        tsed_evaluate(sets, cams)


def test_report_csv(rng):
    cams, sets = _scene(rng, 3)
    rep = tsed_evaluate(sets, cams, thresholds=[1, 2])
    assert rep.to_csv() == "threshold,percent\n1,100.000000\n2,100.000000\n"
    lines = rep.details_csv().splitlines()
    assert lines[0] == "view_a,view_b,matches,median_sed,degenerate,ok@1,ok@2"
    assert len(lines) == 3


# files


def test_match_file_roundtrip(tmp_path, rng):
    ms = MatchSet(("a", "b"), rng.uniform(0, 100, size=(7, 4)))
    save_match_file(ms, tmp_path / "ab.json")
    back = load_match_file(tmp_path / "ab.json")
    assert back.pair == ("a", "b") and np.array_equal(back.matches, ms.matches)
    assert list(load_match_dir(tmp_path)) == [("a", "b")]


def test_lookup_reversed_pair():
    ms = MatchSet((1, 0), [[1, 2, 3, 4]])
    got = lookup_pair({(1, 0): ms}, (0, 1))
    assert got.pair == (0, 1) and got.matches.tolist() == [[3, 4, 1, 2]]
    assert lookup_pair({}, (0, 1)) is None


@pytest.mark.parametrize(
    "payload",
    ['{"pair": [0, 1]}', '{"pair": [0], "matches": []}', '{"pair": [0, 1], "matches": [[1, 2, 3]]}', "not json"],
)
def test_bad_match_files(tmp_path, payload):
    p = tmp_path / "m.json"
    p.write_text(payload)
    with pytest.raises(MatchFormatError):
        load_match_file(p)
