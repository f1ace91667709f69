from __future__ import annotations

import numpy as np

from svtest import Partition, RegressionData
from svtest.regression import ScoreSet


def random_scores(rng, G=None, k1=1, max_m=6) -> ScoreSet:
    G = int(rng.integers(1, 9)) if G is None else G
    groups = []
    for _ in range(G):
        M = int(rng.integers(1, max_m + 1))
        groups.append(rng.standard_normal((M, k1)) * rng.uniform(0.2, 3.0))
    return ScoreSet.from_groups(groups)


def nested_design(rng, G=6, M=3, n=4, k1=1, k2_extra=1, fe=None, intercept=True, clustered=0.0):
    """A small regression with fine clusters nested in coarse ones.

    Cluster sizes vary; ``fe`` adds a full set of dummies at that level
    (dropping the first when there is an intercept).
    """
    fine_a, coarse_a = [], []
    f = 0
    for g in range(G):
        for _ in range(M):
            size = int(rng.integers(1, n + 1)) + 1
            fine_a += [f] * size
            coarse_a += [g] * size
            f += 1
    fine_a, coarse_a = np.array(fine_a), np.array(coarse_a)
    N = fine_a.size
    X1 = rng.standard_normal((N, k1)) + rng.standard_normal((G, k1))[coarse_a]
    cols = [np.ones(N)] if intercept else []
    cols += [rng.standard_normal(N) for _ in range(k2_extra)]
    if fe is not None:
        lab = coarse_a if fe == "coarse" else fine_a
        D = (lab[:, None] == np.unique(lab)[None, :]).astype(float)
        cols += list((D[:, 1:] if intercept else D).T)
    X2 = np.column_stack(cols) if cols else np.empty((N, 0))
    u = rng.standard_normal(N) + clustered * rng.standard_normal(G)[coarse_a]
    y = X1 @ rng.standard_normal(k1) + u
    labels = {"fine": fine_a, "coarse": coarse_a}
    return RegressionData(y, X1, X2, labels)


def parts(data: RegressionData):
    return data.partition("fine"), data.partition("coarse")


def partition(name, assignment) -> Partition:
    return Partition.from_assignment(name, np.asarray(assignment))


def elimination_by_definition(k: int) -> np.ndarray:
    """Solve H vec(S) = vech(S) from a basis of symmetric matrices."""
    rows = []
    for j in range(k):
        for i in range(j, k):
            E = np.zeros((k, k))
            E[i, j] = 1.0
            rows.append(E.reshape(-1, order="F"))
    return np.array(rows)


def vech_by_loop(S) -> np.ndarray:
    k = S.shape[0]
    return np.array([S[i, j] for j in range(k) for i in range(j, k)])


def theta_oracle(groups) -> np.ndarray:
    """Sum of s_h1 s_h2' over ordered pairs h1 != h2 in each coarse cluster, as vech."""
    k = np.asarray(groups[0]).reshape(len(groups[0]), -1).shape[1]
    total = np.zeros((k, k))
    for g in groups:
        g = np.asarray(g, dtype=float).reshape(len(g), -1)
        for h1 in range(len(g)):
            for h2 in range(len(g)):
                if h1 != h2:
                    total += np.outer(g[h1], g[h2])
    return vech_by_loop(total)


def duplication_by_definition(k: int) -> np.ndarray:
    """D with D vech(S) = vec(S) for symmetric S, built column by column."""
    cols = []
    for j in range(k):
        for i in range(j, k):
            E = np.zeros((k, k))
            E[i, j] = E[j, i] = 1.0
            cols.append(E.reshape(-1, order="F"))
    return np.array(cols).T


def var_oracle(groups) -> np.ndarray:
    """2 sum_g sum_{h1 != h2} P (s1 s1' kron s2 s2') P' with P = pinv(D).

    P also maps vec(S) to vech(S) for symmetric S; unlike the 0/1 selector it
    averages both orderings of an off-diagonal pair.
    """
    k = np.asarray(groups[0]).reshape(len(groups[0]), -1).shape[1]
    P = np.linalg.pinv(duplication_by_definition(k))
    total = np.zeros((k * k, k * k))
    for g in groups:
        g = np.asarray(g, dtype=float).reshape(len(g), -1)
        for h1 in range(len(g)):
            for h2 in range(len(g)):
                if h1 != h2:
                    total += np.kron(np.outer(g[h1], g[h1]), np.outer(g[h2], g[h2]))
    return 2.0 * P @ total @ P.T


def var_pairs_oracle(groups) -> np.ndarray:
    """Sum over unordered pairs of w w', w = vech(s1 s2' + s2 s1'): the pair terms of the contrast."""
    k = np.asarray(groups[0]).reshape(len(groups[0]), -1).shape[1]
    q = k * (k + 1) // 2
    total = np.zeros((q, q))
    for g in groups:
        g = np.asarray(g, dtype=float).reshape(len(g), -1)
        for h1 in range(len(g)):
            for h2 in range(h1 + 1, len(g)):
                w = vech_by_loop(np.outer(g[h1], g[h2]) + np.outer(g[h2], g[h1]))
                total += np.outer(w, w)
    return total


def rel_diff(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


ACCEPTANCE_LINES: list[str] = []


def record(number: int, ok: bool, detail: str) -> bool:
    """Log one pass/fail line for an acceptance criterion and return ``ok``."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
