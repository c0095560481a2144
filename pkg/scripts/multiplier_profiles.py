"""Tabulate |m_+| and |m_-| of the catalog kernels for plotting.

Writes one CSV per kernel with columns x, abs_m_plus, abs_m_minus.
"""

import argparse
from pathlib import Path

import numpy as np

from levydecon.levy_model import Epanechnikov2D, Exp1D, ExpTrunc1D, SimpleKernel
from levydecon.multiplier import MultiplicativeWeight, multiplier_for

KERNELS = {
    "exp_trunc1d": (ExpTrunc1D(4.0), MultiplicativeWeight(1.0, True), 0.0),
    "exp1d": (Exp1D(4.0), MultiplicativeWeight(1.0, True), 0.0),
    "epanechnikov2d": (Epanechnikov2D(0.5, 1.0), MultiplicativeWeight(1.0, True), 0.0),
    "two_step": (SimpleKernel(((1.0, 1.0), (np.e, 1.0))), MultiplicativeWeight(0.0, False), 1.0),
}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results/multipliers")
    p.add_argument("--x-max", type=float, default=30.0)
    p.add_argument("--points", type=int, default=1201)
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x = np.linspace(-args.x_max, args.x_max, args.points)
    for name, (kernel, u, c) in KERNELS.items():
        mp, mm = multiplier_for(kernel, u, c)(x)
        np.savetxt(out / f"{name}.csv", np.column_stack([x, np.abs(mp), np.abs(mm)]),
                   delimiter=",", header="x,abs_m_plus,abs_m_minus", comments="", fmt="%.10g")
        print(f"{name}: min |m_+| = {np.abs(mp).min():.3e}, max = {np.abs(mp).max():.4f}")


if __name__ == "__main__":
    main()
