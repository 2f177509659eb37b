"""Energy-optimal boundary control of the L-shaped membrane.

Usage: python3 scripts/run_wave.py [n] [out_dir]
"""

import sys
from pathlib import Path

from evoctrl.experiments import default_config, run_experiment


def main(n: int, out: Path) -> int:
    run = run_experiment(default_config("wave", n=n, out=str(out), svg=True))
    m = run.metrics
    print(f"h=1/{n}: J={m['cost']:.8f} stationarity={m['stationarity']:.2e} "
          f"iterations={m['iterations']} runtime={m['runtime_s']:.1f}s")
    print(f"terminal/max kinetic energy = {m['kinetic_ratio']:.3e}")
    print(f"relative displacement error = {m['displacement_rel_error']:.4f} "
          f"(zero control: {m['displacement_rel_error_zero_control']:.4f})")
    print(f"control range [{m['u_min']:.6f}, {m['u_max']:.6f}]")
    return 0 if run.result.converged else 2


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 8
    sys.exit(main(n, Path(sys.argv[2]) if len(sys.argv) > 2 else Path("out/wave")))
