"""Pure-Python/numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
"""

from collections import deque

import numpy as np
import scipy.sparse as sp


def enumerate_joint(T, E, init, terminal, k, base, with_actions, cap):
    S, A, _ = T.shape
    span = base ** (k - 1)
    keys = {}
    joint_s = []
    joint_code = []
    queue = deque()

    def visit(s, code):
        key = (s, code)
        j = keys.get(key)
        if j is None:
            j = len(joint_s)
            if j >= cap:
                return -1
            keys[key] = j
            joint_s.append(s)
            joint_code.append(code)
            queue.append(j)
        return j

    init_probs = {}
    for s in range(S):
        if init[s] <= 0:
            continue
        if terminal[s]:
            j = visit(s, -1)
            if j < 0:
                return None
            init_probs[j] = init_probs.get(j, 0.0) + init[s]
            continue
        for o in range(E.shape[1]):
            p = init[s] * E[s, o]
            if p <= 0:
                continue
            # pair (o, PAD): PAD encodes as 0 in the action digit
            j = visit(s, (o + 1) * (A + 1))
            if j < 0:
                return None
            init_probs[j] = init_probs.get(j, 0.0) + p

    rows = {}
    while queue:
        j = queue.popleft()
        s, code = joint_s[j], joint_code[j]
        for a in range(A):
            row = {}
            if terminal[s]:
                row[j] = 1.0
            else:
                a_digit = (a + 1) if with_actions else 0
                shifted = (code % span) * base
                for s2 in range(S):
                    pt = T[s, a, s2]
                    if pt <= 0:
                        continue
                    if terminal[s2]:
                        j2 = visit(s2, -1)
                        if j2 < 0:
                            return None
                        row[j2] = row.get(j2, 0.0) + pt
                        continue
                    for o2 in range(E.shape[1]):
                        pe = E[s2, o2]
                        if pe <= 0:
                            continue
                        j2 = visit(s2, shifted + (o2 + 1) * (A + 1) + a_digit)
                        if j2 < 0:
                            return None
                        row[j2] = row.get(j2, 0.0) + pt * pe
            rows[j * A + a] = row

    J = len(joint_s)
    indptr = np.zeros(J * A + 1, dtype=np.int64)
    indices, probs = [], []
    for r in range(J * A):
        row = rows[r]
        cols = sorted(row)
        indices.extend(cols)
        probs.extend(row[c] for c in cols)
        indptr[r + 1] = len(indices)
    init_vec = np.zeros(J)
    for j, p in init_probs.items():
        init_vec[j] = p
    codes = np.array(joint_code, dtype=object if base ** k * S >= 2**62 else np.int64)
    return (
        np.array(joint_s, dtype=np.int64),
        codes,
        indptr,
        np.array(indices, dtype=np.int64),
        np.array(probs, dtype=np.float64),
        init_vec,
    )


def q_iteration(indptr, indices, data, R, pi_joint, gamma, tol, max_iter):
    J, A = R.shape
    P = sp.csr_matrix((data, indices, indptr), shape=(J * A, J))
    Q = np.zeros((J, A))
    prev_delta = None
    max_ratio = 0.0
    for it in range(1, max_iter + 1):
        V = (pi_joint * Q).sum(axis=1)
        Q_new = R + gamma * (P @ V).reshape(J, A)
        delta = np.max(np.abs(Q_new - Q))
        Q = Q_new
        if prev_delta is not None and prev_delta > 1e-8:
            max_ratio = max(max_ratio, delta / prev_delta)
        prev_delta = delta
        if delta <= tol:
            return Q, it, max_ratio
    return Q, max_iter, max_ratio


def sym_q_iteration(indptr, indices, data, R, joint_z, weight, pi_z, n_z, gamma, tol, max_iter):
    J, A = R.shape
    P = sp.csr_matrix((data, indices, indptr), shape=(J * A, J))
    # aggregation matrix: Qz(z, a) = sum_j weight_j 1{z_j = z} backup(j, a)
    G = sp.csr_matrix((weight, (joint_z, np.arange(J))), shape=(n_z, J))
    Qz = np.zeros((n_z, A))
    prev_delta = None
    max_ratio = 0.0
    for it in range(1, max_iter + 1):
        Vz = (pi_z * Qz).sum(axis=1)
        backup = R + gamma * (P @ Vz[joint_z]).reshape(J, A)
        Qz_new = G @ backup
        delta = np.max(np.abs(Qz_new - Qz))
        Qz = Qz_new
        if prev_delta is not None and prev_delta > 1e-8:
            max_ratio = max(max_ratio, delta / prev_delta)
        prev_delta = delta
        if delta <= tol:
            return Qz, it, max_ratio
    return Qz, max_iter, max_ratio


def sparse_affine_forward(idx, val, W, b):
    return b + np.einsum("bm,bmh->bh", val, W[idx])


def sparse_affine_backward(idx, val, g, n_in):
    B, m = idx.shape
    H = g.shape[1]
    dW = np.zeros((n_in, H))
    np.add.at(dW, idx.ravel(), (val[:, :, None] * g[:, None, :]).reshape(B * m, H))
    return dW


def adam_update(p, g, m, v, lr, beta1, beta2, c1, c2, eps):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def polyak(target, source, rate):
    target *= 1.0 - rate
    target += rate * source
