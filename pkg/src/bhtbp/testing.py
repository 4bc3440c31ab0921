"""Instance generators for exact-reference validation.

The enumeration oracle is only exact where belief propagation is, i.e. on
cycle-free graphs, so these helpers build random bipartite forests (tracked
with a union-find over variables and factors) instead of constant-weight
columns.
"""

from __future__ import annotations

import numpy as np

from .model import Measurement, SignalSpec, SparseBernoulliMatrix, gen_signal


class _UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        self.parent[self.find(a)] = self.find(b)


def random_forest_matrix(rng: np.random.Generator, n: int, m: int,
                         max_factor_degree: int = 3) -> SparseBernoulliMatrix:
    """Random {0, +1, -1} matrix whose bipartite graph is a forest.

    Factors greedily attach to variables in components they do not already
    touch, so column weights are irregular (col_weight is None).
    """
    uf = _UnionFind(n + m)
    cols: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for j in range(m):
        factor = n + j
        want = int(rng.integers(1, max_factor_degree + 1))
        for i in rng.permutation(n):
            if want == 0:
                break
            if uf.find(int(i)) != uf.find(factor):
                uf.union(int(i), factor)
                sign = int(rng.integers(0, 2)) * 2 - 1
                cols[int(i)].append((j, sign))
                want -= 1
    col_rows = tuple(np.array([r for r, _ in c], dtype=np.int64) for c in cols)
    col_signs = tuple(np.array([s for _, s in c], dtype=np.int64) for c in cols)
    return SparseBernoulliMatrix(n, m, None, col_rows, col_signs)


def random_tree_instance(rng: np.random.Generator, max_n: int = 8, max_m: int = 7,
                         noise_lo: float = 0.3, noise_hi: float = 1.0,
                         slab_std: float = 3.0):
    """One random cycle-free problem: (matrix, signal, measurement, q, slab_std).

    The noise level is drawn uniformly from [noise_lo, noise_hi].  The
    default floor keeps the noise profile several bins wide on the default
    513-point grid, so exact-reference comparisons measure message-passing
    agreement rather than sub-bin quantization of a needle-thin likelihood.
    """
    n = int(rng.integers(2, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    matrix = random_forest_matrix(rng, n, m)
    q = float(rng.uniform(0.15, 0.45))
    k = max(1, int(rng.binomial(n, q)))
    signal = gen_signal(SignalSpec(n, k, slab_std), rng)
    noise_std = float(rng.uniform(noise_lo, noise_hi))
    z = matrix.matvec(signal.values) + noise_std * rng.standard_normal(m)
    return matrix, signal, Measurement(z, noise_std), q, slab_std
