"""Main-lobe width of the steering similarity map versus frequency.

    python scripts/band_map.py --reference 0 --f-max 4000
"""

import argparse

import numpy as np

from lsdd.array_model import DoaGrid, band_similarity_map, build_steering_set, glasses_geometry, load_geometry, main_lobe_width


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--geometry")
    ap.add_argument("--reference", type=float, default=0.0)
    ap.add_argument("--f-max", type=float, default=4000.0)
    ap.add_argument("--step", type=float, default=46.875)
    args = ap.parse_args()
    geometry = load_geometry(args.geometry) if args.geometry else glasses_geometry()
    grid = DoaGrid.uniform(6.0)
    freqs = np.arange(0.0, args.f_max + 1e-9, args.step)
    lam = band_similarity_map(build_steering_set(geometry, grid, freqs), args.reference)
    ref = grid.index_of(args.reference)
    print("freq_hz  lobe_deg  min_similarity")
    for f, row in zip(freqs, lam):
        print(f"{f:7.1f}  {main_lobe_width(row, ref) * grid.resolution:8.0f}  {row.min():14.3f}")


if __name__ == "__main__":
    main()
