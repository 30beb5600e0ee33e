#!/usr/bin/env python3
"""Render the four sampling-mask families at a glance.

Prints each 32x32 pattern as ASCII art together with its realized
acceleration factor.

Usage: python3 scripts/demo_masks.py
"""

from subdiff.kspace import make_mask
from subdiff.numerics import make_rng


def main():
    shape = (32, 32)
    for family in ("uniform1d", "random2d", "radial", "poisson"):
        acs = 0 if family == "uniform1d" else 4
        mask = make_mask(family, shape, 4.0, acs_lines=acs, rng=make_rng(7))
        print(
            f"{family}: requested R=4.0, realized "
            f"R={mask.realized_acceleration:.2f}"
        )
        for row in mask.pattern:
            print("  " + "".join("#" if v else "." for v in row))
        print()


if __name__ == "__main__":
    main()
