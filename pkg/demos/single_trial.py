"""Run one docking trial, write its log and render the trajectory figures.

    python3 demos/single_trial.py [approach] [seed] [out_dir]
"""

import sys
from pathlib import Path

from residock.harness.config import config_from_dict
from residock.harness.log import run_logged
from residock.harness.plots import emit_plots


def main():
    approach = sys.argv[1] if len(sys.argv) > 1 else "front"
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    out = Path(sys.argv[3] if len(sys.argv) > 3 else "demo_out")
    cfg = config_from_dict({"approach": approach, "seed": seed})
    log_path = out / f"{approach}-{seed:06d}.jsonl"
    result, _ = run_logged(cfg, seed, log_path)
    print(f"success={result.success} duration={result.docking_duration} abort={result.abort_reason}")
    for phase_time, phase in result.timeline:
        print(f"  {phase_time:7.1f} s  {phase}")
    for p in emit_plots(log_path, out):
        print(p)


if __name__ == "__main__":
    main()
