"""Recompute the default OSPAD-3D threshold from synthetic live/textured pairs.

Usage: python tools/calibrate_tau3.py [N]
"""
import sys

from irispad.pad3d import IlluminationGeometry, calibrate_tau3, estimate_normals, ospad3d_score
from irispad.synthgen import pad_pair_spec, render_pair


def main(n=40):
    geom = IlluminationGeometry.symmetric()
    scores = {"live": [], "textured": []}
    for i in range(n):
        for kind in scores:
            left, right, mask = render_pair(pad_pair_spec(10_000 + i, kind))
            scores[kind].append(ospad3d_score(estimate_normals(left, right, mask, geom)))
    tau = calibrate_tau3(scores["live"], scores["textured"])
    print(f"live max {max(scores['live']):.6g}  textured min {min(scores['textured']):.6g}")
    print(f"tau3 = {tau!r}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 40)
