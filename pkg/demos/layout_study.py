"""Detection-count coverage of the shipped layout and the bit-density comparison.

    python3 demos/layout_study.py [out_dir]
"""

import sys
from pathlib import Path

from residock.harness.plots import coverage_figure, save
from residock.layout import default_layout
from residock.study import compare_bit_patterns, coverage_map, format_report, segment_means, survey_path


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    layout = default_layout()
    poses, labels = survey_path(layout.geometry)
    counts = coverage_map(poses, layout)
    print(f"max simultaneous detections: {counts.max()}")
    for segment, mean in segment_means(counts, labels).items():
        print(f"  {segment:<6} {mean:5.2f}")
    print(save(coverage_figure(counts, labels), out / "coverage.svg"))
    print()
    print(format_report(compare_bit_patterns()))


if __name__ == "__main__":
    main()
