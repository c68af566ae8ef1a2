"""TSED of synthetic matches as pixel noise grows.

Cameras sit on a sphere around a point cloud; exact projections are matched
between adjacent views and Gaussian noise of increasing scale is added to the
second view's points.

    python3 scripts/tsed_demo.py --views 12 --noise 0,0.5,1,2,4,8
"""

import argparse

import numpy as np

from setnvs.consistency import DEFAULT_SWEEP, MatchSet, TSEDConfig, make_pairs, tsed_evaluate
from setnvs.geometry import Camera, look_at, project


def sphere_cameras(rng, n, radius=5.0):
    cams = []
    for k in range(n):
        c = rng.normal(size=3)
        R, t = look_at(radius * c / np.linalg.norm(c), [0.0, 0.0, 0.0])
        cams.append(Camera.from_params(300, 300, 160, 120, 320, 240, R, t, id=k))
    return cams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--views", type=int, default=12)
    ap.add_argument("--matches", type=int, default=40)
    ap.add_argument("--noise", default="0,0.5,1,2,4,8")
    ap.add_argument("--t-matches", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cams = sphere_cameras(rng, args.views)
    by_id = {c.id: c for c in cams}
    pairs = make_pairs([c.id for c in cams], "adjacent")
    print("noise_px\t" + "\t".join(f"{t:g}px" for t in DEFAULT_SWEEP))
    for scale in (float(x) for x in args.noise.split(",")):
        sets = []
        for a, b in pairs:
            pts = rng.normal(scale=0.7, size=(args.matches, 3))
            xb = project(by_id[b], pts) + rng.normal(scale=scale, size=(args.matches, 2))
            sets.append(MatchSet((a, b), np.concatenate([project(by_id[a], pts), xb], axis=1)))
        rep = tsed_evaluate(sets, by_id, TSEDConfig(args.t_matches))
        print(f"{scale:g}\t" + "\t".join(f"{rep.aggregate[t]:.1f}" for t in DEFAULT_SWEEP))


if __name__ == "__main__":
    main()
