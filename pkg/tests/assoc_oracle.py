"""Exhaustive enumeration oracle and random instances for the association ILP."""

import itertools

import numpy as np

from uavmec.association import AssociationIlp


def brute_force(ilp: AssociationIlp):
    """Best feasible value over all K^N assignments, summed like ``AssociationIlp.value``."""
    K, N = ilp.shape
    cols = np.arange(N)
    best, best_served = -np.inf, None
    for served in itertools.product(range(K), repeat=N):
        s = np.array(served)
        if ilp.is_feasible(s):
            v = float(np.sum(ilp.weights[s, cols]))
            if v > best:
                best, best_served = v, s
    return best, best_served


def random_instance(rng, K, N, budget_frac=(0.3, 1.0), qos_frac=0.8) -> AssociationIlp:
    w = rng.uniform(1, 10, (K, N)) * 1e8
    c = w * rng.uniform(0.5, 1.5, K)[:, None] * 1e-6
    D = rng.uniform(0, qos_frac, K) * w.sum(axis=1) / K
    budget = rng.uniform(*budget_frac) * c.max(axis=0).sum()
    return AssociationIlp(w, c, budget, D)


def random_instances(seed=1, count=50):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        K, N = int(rng.integers(2, 4)), int(rng.integers(4, 7))
        out.append(random_instance(rng, K, N))
    return out
