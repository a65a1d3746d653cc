"""Energy functional and accumulated dissipation along a small-data BGK run.

Prints E_N(t), the dissipation integral and Psi = E_N^2 + integral for the
shipped energy scenario at eps = 0.2 and 0.1.
"""

from pathlib import Path

from kinelim.io import load_toml
from kinelim.kinetic import RunConfig, run_simulation

ROOT = Path(__file__).resolve().parents[1]


def main():
    base = RunConfig.from_dict(load_toml(ROOT / "configs" / "energy.toml")).replace(out_dir=None)
    tau = base.kernel["tau"]
    x = base.dt / (base.eps**2 * tau)
    for eps in (0.2, 0.1):
        tr = run_simulation(base.replace(eps=eps, dt=x * eps**2 * tau))
        print(f"eps = {eps:g}")
        print(f"{'t':>8} {'E_N':>12} {'dissipation':>12} {'psi':>12}")
        rows = tr.energy_rows
        stride = max(1, len(rows) // 8)
        picked = rows[::stride] if (len(rows) - 1) % stride == 0 else rows[::stride] + rows[-1:]
        for r in picked:
            print(f"{r['t']:8.4f} {r['E_N']:12.6e} {r['dissipation_sum']:12.6e} {r['psi']:12.6e}")


if __name__ == "__main__":
    main()
