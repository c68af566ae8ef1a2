"""Write demo trajectories, a plan and an experiment config into a directory.

    python3 scripts/make_trajectories.py out/

Produces ``line.json`` (20 views along +x after one observation),
``ring.json`` (10 cameras on a circle looking inward), ``stereo.json``
(6 right/left pairs with ``group``/``side`` labels), ``plan_chain.json``,
``plan_keyframed.json`` and ``experiment.json``.
"""

import argparse
import json
import math
from pathlib import Path

from setnvs.experiment import line_trajectory
from setnvs.geometry import Camera, dump_trajectory, look_at
from setnvs.plan import plan_chain, plan_keyframed, save_plan


def ring(n=10, radius=4.0):
    cams = []
    for k in range(n):
        a = 2 * math.pi * k / n
        R, t = look_at([radius * math.cos(a), 0.0, radius * math.sin(a)], [0.0, 0.0, 0.0])
        cams.append(Camera.from_params(60, 60, 32, 32, 64, 64, R, t, id=k))
    return cams


def stereo(n_pairs=6, baseline=0.3, step=1.0):
    cams, extra = [], []
    obs = Camera.from_params(60, 60, 32, 32, 64, 64, None, [0.0, 0.0, 0.0], id="obs")
    cams.append(obs)
    extra.append({"role": "observed"})
    for g in range(n_pairs):
        z = (g + 1) * step
        for side, dx in (("right", baseline / 2), ("left", -baseline / 2)):
            cams.append(Camera.from_params(60, 60, 32, 32, 64, 64, None, [-dx, 0.0, -z], id=f"{side[0].upper()}{g}"))
            extra.append({"role": "generated", "group": g, "side": side})
    return cams, extra


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    views = line_trajectory(20)
    dump_trajectory([v.camera for v in views], out / "line.json")
    dump_trajectory(ring(), out / "ring.json")
    cams, extra = stereo()
    dump_trajectory(cams, out / "stereo.json", extra)
    save_plan(plan_chain(views), out / "plan_chain.json")
    save_plan(plan_keyframed(views, spacing=2, keyframe_chunk=4, cond_count=2), out / "plan_keyframed.json")
    cfg = {
        "plan": "plan_chain.json",
        "scene": {"mu": 0.0, "sigma": 1.0, "length_scale": 8.0, "dim": 4},
        "schedule": {"T": 100, "beta_start": 1e-3, "beta_end": 0.2},
        "observation": 3.0,
        "window": 1,
        "seeds": [0, 1, 2],
        "num_samples": 2000,
    }
    (out / "experiment.json").write_text(json.dumps(cfg, indent=1) + "\n")
    for p in sorted(out.iterdir()):
        print(p)


if __name__ == "__main__":
    main()
