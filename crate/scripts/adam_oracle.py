#!/usr/bin/env python3
"""Reference Adam runs used to freeze optimizer expectations in the tests.

Written before the Rust implementation; prints the quantities the test
suite asserts against.
"""

import math


def adam_run(theta: float, lr: float, steps: int):
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2.0 * theta  # d/dtheta theta^2
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta -= lr * mhat / (math.sqrt(vhat) + eps)
    return theta


if __name__ == "__main__":
    one = adam_run(1.0, 0.1, 1)
    print(f"one step, lr=0.1: theta = {one!r}")
    final = adam_run(1.0, 1e-2, 2000)
    print(f"2000 steps, lr=1e-2: theta = {final!r}  |theta| < 1e-3: {abs(final) < 1e-3}")
