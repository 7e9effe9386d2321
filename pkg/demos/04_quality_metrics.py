"""Score a segmentation: Dice, Hausdorff, surface distance, violations.

Compares a slightly-wrong prediction against its ground truth on an
anisotropic lattice (non-unit voxel spacing), then prints the flat JSON
report the CLI would emit.
"""

import json

import numpy as np

from topogrid import CONTAINMENT, Constraint, ConstraintSet, LabelGrid, evaluate


def main():
    spacing = (2.0, 0.75)  # tall pixels: distances are physical, not index counts

    gt = np.zeros((14, 20), dtype=np.uint8)
    gt[2:12, 3:17] = 2
    gt[4:10, 5:15] = 1

    pred = gt.copy()
    pred[4:10, 5:9] = 2        # lumen eroded from the left
    pred[3, 10] = 0            # nick in the wall
    pred[12, 18] = 1           # stray lumen pixel in the background

    rules = ConstraintSet((Constraint(CONTAINMENT, 1, outer=2),), 3)
    report = evaluate(
        LabelGrid(pred, 3, spacing), LabelGrid(gt, 3, spacing), rules, 8
    )

    for cid, m in sorted(report.per_class.items()):
        name = {1: "lumen", 2: "wall"}[cid]
        print(f"class {cid} ({name}): dice={m.dice:.4f}  "
              f"hd={m.hd:.3f}  assd={m.assd:.3f}  (physical units)")
    print(f"violations: {report.violations_percent:.3f}% of foreground pixels")

    print("\nflat JSON report:")
    print(json.dumps(report.to_flat_dict(), indent=2))


if __name__ == "__main__":
    main()
