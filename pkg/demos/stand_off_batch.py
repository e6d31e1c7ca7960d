"""Compare docking success per approach for two stand-off distances.

    python3 demos/stand_off_batch.py [n_seeds]
"""

import sys

from residock.harness.batch import run_batch
from residock.harness.config import config_from_dict


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    for stand_off in (1.5, 2.0):
        cfg = config_from_dict({"guidance": {"stand_off": stand_off}, "log": {"steps": False}})
        summary = run_batch(cfg, n_seeds=n, base_seed=0)
        print(f"stand-off {stand_off} m")
        print(summary.format())
        print()


if __name__ == "__main__":
    main()
