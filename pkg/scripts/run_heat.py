"""Solve both heat experiments (c = 1 and c = 5) and compare their tracking errors.

Usage: python3 scripts/run_heat.py [out_dir]
"""

import sys
from pathlib import Path

from evoctrl.experiments import default_config, run_experiment


def main(out: Path) -> int:
    errors = {}
    for name in ("heat", "heat5"):
        run = run_experiment(default_config(name, out=str(out / name), svg=True))
        m = run.metrics
        errors[name] = m["tracking_error"]
        print(f"{name:6s} J={m['cost']:.6f} J(0)={m['cost_zero_control']:.6f} "
              f"|y-y_ref|={m['tracking_error']:.5f} corr={m['tracking_correlation']:.4f} "
              f"mean u [0,1]={m['mean_u_first_half']:+.4f} [1,2]={m['mean_u_second_half']:+.4f}")
        if not run.result.converged:
            return 2
    order = ">" if errors["heat5"] > errors["heat"] else "<="
    print(f"tracking error c=5 {order} c=1")
    return 0


if __name__ == "__main__":
    sys.exit(main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")))
