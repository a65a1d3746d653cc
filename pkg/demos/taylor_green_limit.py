"""Kinetic Taylor-Green vortex at shrinking eps against the fluid reference.

Runs the shipped sweep (about five minutes on one core) and prints the
error table.  Pass an output directory to keep the CSV/JSON report.
"""

import sys
import tempfile
from pathlib import Path

from kinelim.harness import SweepConfig, epsilon_sweep
from kinelim.io import load_toml

ROOT = Path(__file__).resolve().parents[1]


def main(out=None):
    cfg = SweepConfig.from_dict(load_toml(ROOT / "configs" / "sweep.toml"))
    cfg.out_dir = out or tempfile.mkdtemp(prefix="kinelim-sweep-")
    rep = epsilon_sweep(cfg)
    print((Path(cfg.out_dir) / "report.txt").read_text())
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1] if len(sys.argv) > 1 else None))
