"""Time the compiled and the numpy kernels on representative inputs.

    python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from fbimcf.geometry import catenoid_support
from fbimcf.kernels import backends
from fbimcf.smoothflow import orthogonal_cap, stable_substep


def cases():
    rho, z = np.meshgrid(np.linspace(0.0, 4.0, 256), np.linspace(0.0, 4.0, 256), indexing="ij")
    field = 2.0 * np.log(np.hypot(rho, z) + 0.5) + 0.1 * np.sin(5 * rho) * np.cos(3 * z)
    theta = np.linspace(0.0, 0.5 * np.pi, 2000)
    arc = (np.cos(theta), np.sin(theta))
    cap = orthogonal_cap(catenoid_support(1.0), 0.05, 200)
    dt = stable_substep(cap)
    return {
        "march_segments 256x256": lambda k: k.march_segments(field, 1.0),
        "curve_geometry 2000 vertices": lambda k: k.curve_geometry(*arc),
        "imcf_substeps 200 vertices x 200": lambda k: k.imcf_substeps(cap.rho, cap.z, dt, 200, k.SUPPORT_CATENOID, 1.0, 0.0),
    }


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    impls = backends()
    if "compiled" not in impls:
        print("compiled backend not built; timing the numpy backend only")
    print(f"{'kernel':36s}" + "".join(f"{name:>14s}" for name in impls) + ("   speed-up" if len(impls) > 1 else ""))
    for label, fn in cases().items():
        times = {}
        for name, mod in impls.items():
            fn(mod)
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:36s}" + "".join(f"{times[n] * 1e3:12.3f}ms" for n in impls)
        if len(impls) > 1:
            row += f"   {times['python'] / times['compiled']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
