#!/usr/bin/env python3
"""Independent oracle for the mixed-oil mechanism formulas.

Written before the Rust implementation. Evaluates the Austin correlation,
the critical Reynolds number, and the interval gap directly, and emits a
fixture table used by the test suite. Run from the repository root:

    python3 scripts/mech_oracle.py > crates/core/tests/data/mech_oracle.csv
"""

import math
import random


def critical_reynolds(d: float) -> float:
    return 10000.0 * math.exp(2.72 * math.sqrt(d))


def austin_length(d: float, length: float, re: float) -> float:
    if re >= critical_reynolds(d):
        return 11.75 * math.sqrt(d) * math.sqrt(length) * re ** -0.1
    return 18384.0 * math.sqrt(d) * math.sqrt(length) * re ** -0.9 * math.exp(2.18 * math.sqrt(d))


def interval_gap(q_min: float, t_delay: float) -> float:
    return q_min * t_delay / 600.0


def main() -> None:
    # Spot values quoted in the docs/tests.
    checks = [
        ("critical_reynolds(0.25)", critical_reynolds(0.25)),
        ("critical_reynolds(0.5)", critical_reynolds(0.5)),
        ("austin_length(0.5, 1e5, 1e5)", austin_length(0.5, 1e5, 1e5)),
        ("austin_length(0.25, 5e4, 2e4)", austin_length(0.25, 5e4, 2e4)),
        ("interval_gap(600, 5)", interval_gap(600.0, 5.0)),
        ("interval_gap(1200, 3)", interval_gap(1200.0, 3.0)),
    ]
    import sys

    for name, value in checks:
        print(f"# {name} = {value!r}", file=sys.stderr)

    rng = random.Random(20240611)
    print("d,length,reynolds,q_min,t_delay,re_j,y_m,gap")
    for _ in range(64):
        d = rng.uniform(0.05, 1.0)
        length = rng.uniform(1e3, 5e5)
        re = math.exp(rng.uniform(math.log(2e3), math.log(8e5)))
        q_min = rng.uniform(0.0, 2000.0)
        t_delay = rng.uniform(0.0, 30.0)
        re_j = critical_reynolds(d)
        y_m = austin_length(d, length, re)
        gap = interval_gap(q_min, t_delay)
        print(
            f"{d!r},{length!r},{re!r},{q_min!r},{t_delay!r},{re_j!r},{y_m!r},{gap!r}"
        )


if __name__ == "__main__":
    main()
