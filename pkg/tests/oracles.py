"""Independent reference implementations used by the tests.

Each oracle is written directly from the defining formula with plain Python
loops or numpy, sharing no code with the package.
"""

import math
from itertools import combinations

import numpy as np


def matmul_loops(A, B):
    n, k = A.shape
    k2, m = B.shape
    assert k == k2
    C = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += A[i, t] * B[t, j]
            C[i, j] = s
    return C


def gelu_erf(x):
    return x * 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _ln(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def mhsa_straight(H, p, heads):
    """Pre-LN multi-head attention block on an (N, h) matrix, one head at a time."""
    N, h = H.shape
    dk = h // heads
    x = _ln(H, p["ln1_g"], p["ln1_b"])
    Q = x @ p["wq"] + p["bq"]
    K = x @ p["wk"] + p["bk"]
    V = x @ p["wv"] + p["bv"]
    outs = []
    for a in range(heads):
        sl = slice(a * dk, (a + 1) * dk)
        logits = Q[:, sl] @ K[:, sl].T / math.sqrt(dk)
        w = np.exp(logits - logits.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        outs.append(w @ V[:, sl])
    multi = np.concatenate(outs, axis=1) @ p["wo"] + p["bo"]
    res = H @ p["wres"] + multi
    pre = _ln(res, p["ln2_g"], p["ln2_b"]) @ p["w1"] + p["b1"]
    hidden = np.vectorize(gelu_erf)(pre)
    return res + hidden @ p["w2"] + p["b2"]


def auroc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def idw_impute(query, missing, bank, k):
    """Inverse-distance weighted KNN imputation by exhaustive sort (ties to lower row index)."""
    obs = [j for j in range(len(query)) if not missing[j]]
    dists = []
    for i, row in enumerate(bank):
        dists.append((math.sqrt(sum((query[j] - row[j]) ** 2 for j in obs)), i))
    dists.sort()
    nbrs = dists[:k]
    out = list(query)
    for j in range(len(query)):
        if not missing[j]:
            continue
        if nbrs[0][0] == 0.0:
            out[j] = bank[nbrs[0][1]][j]
            continue
        num = sum(bank[i][j] / dist for dist, i in nbrs)
        den = sum(1.0 / dist for dist, _ in nbrs)
        out[j] = num / den
    return np.array(out)


def lamb_closed_form(w, g, t, m_prev, v_prev, lr, b1=0.9, b2=0.999, eps=1e-6, wd=0.0):
    """One LAMB step on a flat array; returns (w_new, m, v)."""
    m = b1 * m_prev + (1 - b1) * g
    v = b2 * v_prev + (1 - b2) * g * g
    mh = m / (1 - b1 ** t)
    vh = v / (1 - b2 ** t)
    u = mh / (np.sqrt(vh) + eps) + wd * w
    wn = math.sqrt(float(np.sum(w * w)))
    un = math.sqrt(float(np.sum(u * u)))
    ratio = wn / un if wn > 0 and un > 0 else 1.0
    return w - lr * ratio * u, m, v


def subsets_bruteforce(d, r):
    """All subsets of size 1..r by filtering the full power set."""
    out = set()
    for bits in range(1, 2 ** d):
        if bin(bits).count("1") <= r:
            out.add(tuple((bits >> j) & 1 for j in range(d)))
    return out


def kth_nn_sorted(val, train, k):
    out = []
    for q in val:
        ds = sorted(math.sqrt(sum((a - b) ** 2 for a, b in zip(q, row))) for row in train)
        out.append(ds[k - 1])
    return np.array(out)


def combos(d, k):
    return list(combinations(range(d), k))
