import numpy as np

from avgdyn.graph import Partition, WeightedGraph


def unit_graph(n, pairs):
    return WeightedGraph(n, [(u, v, 1.0) for u, v in pairs])


def triangle():
    return unit_graph(3, [(0, 1), (1, 2), (0, 2)])


def cycle(n):
    return unit_graph(n, [(i, (i + 1) % n) for i in range(n)])


def path(n):
    return unit_graph(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    return unit_graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])


def star(leaves):
    return unit_graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def random_coupling(rng, k, low=0.05, high=1.0):
    C = rng.uniform(low, high, (k, k))
    return (C + C.T) / 2


def parts(*blocks):
    assignment = np.empty(sum(len(b) for b in blocks), dtype=int)
    for i, b in enumerate(blocks):
        assignment[list(b)] = i
    return Partition(assignment)
