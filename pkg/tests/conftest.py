"""Shared brute-force oracles and statistical helpers for the test suite."""

import itertools

import numpy as np
from scipy import stats


def brute_force_sup_gap(p, v):
    """Exhaustive max_S |p(S) - v(S)| over all subsets."""
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = p.size
    best = 0.0
    for bitsel in itertools.product([0, 1], repeat=d):
        mask = np.asarray(bitsel, dtype=bool)
        best = max(best, abs(p[mask].sum() - v[mask].sum()))
    return best


def brute_force_bilinear(A):
    """Exhaustive max_{S,S'} |<1_S 1_{S'}^T, A>| over all subset pairs."""
    A = np.asarray(A, dtype=np.float64)
    d = A.shape[0]
    best = 0.0
    subsets = list(itertools.product([0, 1], repeat=d))
    for s in subsets:
        sm = np.asarray(s, dtype=bool)
        row = A[sm].sum(axis=0)
        for t in subsets:
            tm = np.asarray(t, dtype=bool)
            best = max(best, abs(row[tm].sum()))
    return best


def brute_force_special_gap(qhat, lam):
    """Exhaustive max_S |qhat(S) - lam * |S||."""
    q = np.asarray(qhat, dtype=np.float64)
    d = q.size
    best = 0.0
    for bitsel in itertools.product([0, 1], repeat=d):
        mask = np.asarray(bitsel, dtype=bool)
        best = max(best, abs(q[mask].sum() - lam * mask.sum()))
    return best


def two_sample_chi2(values_a, values_b, min_expected: int = 10):
    """Pearson two-sample statistic on pooled integer samples.

    Bins with small combined counts are merged into their neighbor so the
    chi-square approximation holds.  Returns (statistic, dof).
    """
    values_a = np.asarray(values_a)
    values_b = np.asarray(values_b)
    support = np.unique(np.concatenate([values_a, values_b]))
    ca = np.array([(values_a == s).sum() for s in support], dtype=np.float64)
    cb = np.array([(values_b == s).sum() for s in support], dtype=np.float64)
    # merge tail bins until every combined bin is large enough
    bins_a, bins_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if acc_a + acc_b >= min_expected:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if bins_a:
            bins_a[-1] += acc_a
            bins_b[-1] += acc_b
        else:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
    ca = np.asarray(bins_a)
    cb = np.asarray(bins_b)
    na, nb = ca.sum(), cb.sum()
    k1 = np.sqrt(nb / na)
    k2 = np.sqrt(na / nb)
    denom = ca + cb
    stat = float(np.sum((k1 * ca - k2 * cb) ** 2 / denom))
    dof = max(len(denom) - 1, 1)
    return stat, dof


def chi2_quantile(level: float, dof: int) -> float:
    return float(stats.chi2.ppf(level, dof))
