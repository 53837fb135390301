#!/usr/bin/env python3
"""Reference values for tests/test_blocks.cpp (AdamW scalar trace).

Hand-rolled single-parameter AdamW, stepped with explicit gradients. Run:

    python3 tests/fixtures/blocks_oracle.py
"""

import math

beta1, beta2, eps, lr, wd = 0.9, 0.96, 1e-8, 0.1, 0.0
p, m, v = 0.5, 0.0, 0.0
for t, g in enumerate([1.0, -0.5, 0.25], start=1):
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    mhat = m / (1 - beta1**t)
    vhat = v / (1 - beta2**t)
    p -= lr * (mhat / (math.sqrt(vhat) + eps) + wd * p)
    print(f"adamw step {t}: p = {p:.17g}")

# decoupled decay: zero grads, wd=0.005, lr=0.1 -> pure shrink per step
p = 2.0
for t in range(1, 4):
    p -= 0.1 * (0.0 + 0.005 * p)
    print(f"decay-only step {t}: p = {p:.17g}")
