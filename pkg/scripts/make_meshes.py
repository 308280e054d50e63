"""Regenerate the bundled container meshes in src/pourkit/data/meshes."""
from __future__ import annotations

import argparse
from pathlib import Path

from pourkit.geometry import save_obj
from pourkit.geometry import shapes

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "pourkit" / "data" / "meshes"


def build():
    return {
        # targets: interiors sitting on z = 0, axis through the origin
        "cylinder": shapes.cylinder(0.04, 0.12, 64, name="cylinder"),
        "frustum": shapes.frustum(0.035, 0.05, 0.10, 64, name="frustum"),
        "box": shapes.box((0.08, 0.08, 0.09), origin=(-0.04, -0.04, 0.0), name="box"),
        # source: straight-walled cup whose lip narrows to 0.6 of the body radius
        "source_cup": shapes.revolved_profile([(0.05, 0.0), (0.05, 0.07), (0.03, 0.085)], 64, name="source_cup"),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, mesh in build().items():
        save_obj(mesh, args.out / f"{name}.obj")
        print(f"{name}: {len(mesh.triangles)} triangles")


if __name__ == "__main__":
    main()
