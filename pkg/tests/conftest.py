"""Shared helpers: seeded random instances and independent brute-force oracles."""

import itertools
import math

import numpy as np

from isinglab.graphs import build_instance


def random_connected_instance(rng, n_max=8, beta_hi=1.5, h_hi=2.0,
                              clamp_prob=0.1, extra_edge_prob=0.35,
                              n_min=2):
    """Random connected instance: uniform spanning-tree skeleton plus extras."""
    n = int(rng.integers(n_min, n_max + 1))
    edges = set()
    for v in range(1, n):
        edges.add((int(rng.integers(0, v)), v))
    for u, v in itertools.combinations(range(n), 2):
        if (u, v) not in edges and rng.random() < extra_edge_prob:
            edges.add((u, v))
    edge_list = [(u, v, float(rng.uniform(0.0, beta_hi))) for u, v in sorted(edges)]
    fields = []
    for v in range(n):
        if rng.random() < clamp_prob:
            fields.append((v, math.inf if rng.random() < 0.5 else -math.inf))
        else:
            hv = float(rng.uniform(-h_hi, h_hi))
            if hv != 0.0:
                fields.append((v, hv))
    inst = build_instance(edge_list, fields, n=n)
    if inst.n_free == 0:
        return random_connected_instance(rng, n_max, beta_hi, h_hi,
                                         clamp_prob, extra_edge_prob, n_min)
    return inst


def brute_force_distribution(instance):
    """Independent oracle: dict {free-spin tuple: probability} via direct sums.

    Deliberately avoids the package's vectorized enumeration path.
    """
    free = [v for v in range(instance.n) if instance.clamp[v] == 0]
    fixed = {v: int(instance.clamp[v]) for v in range(instance.n)
             if instance.clamp[v] != 0}
    weights = {}
    for assign in itertools.product([-1, 1], repeat=len(free)):
        spins = dict(zip(free, assign))
        spins.update(fixed)
        ham = 0.0
        for u, v in instance.graph.edges():
            ham += instance.coupling(u, v) * spins[u] * spins[v]
        for v in free:
            ham += float(instance.h[v]) * spins[v]
        weights[assign] = math.exp(ham)
    z = sum(weights.values())
    return free, {a: w / z for a, w in weights.items()}


def brute_force_marginal(instance, v, lam=(), eta=()):
    """Oracle conditional P(sigma_v=+ | sigma_lam = eta) by filtered sums."""
    cond = dict(zip(lam, eta))
    free, dist = brute_force_distribution(instance)
    pos = {u: i for i, u in enumerate(free)}
    num = den = 0.0
    for assign, p in dist.items():
        if any(assign[pos[u]] != s for u, s in cond.items()):
            continue
        den += p
        if assign[pos[v]] == 1:
            num += p
    if den == 0.0:
        raise ZeroDivisionError("conditioning event has probability zero")
    return num / den


def wilson_interval(successes, trials, z=1.96):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def seeded(seed):
    return np.random.default_rng(seed)
