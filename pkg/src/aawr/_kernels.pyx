# distutils: language = c++
"""Compiled versions of the kernels in ``_kernels_py``; same signatures and outputs."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair

cnp.import_array()

ctypedef long long i64


cdef inline i64 _joint_key(i64 s, i64 code, i64 n_codes) nogil:
    # code == -1 marks the terminal window; shift by one to stay nonnegative
    return s * n_codes + (code + 1)


def enumerate_joint(double[:, :, ::1] T, double[:, ::1] E, double[::1] init, terminal,
                    int k, i64 base, bint with_actions, i64 cap):
    cdef Py_ssize_t S = T.shape[0], A = T.shape[1], O = E.shape[1]
    cdef i64 span = 1, n_codes
    cdef int i
    for i in range(k - 1):
        span *= base
    n_codes = span * base + 1
    cdef cnp.uint8_t[::1] term = np.ascontiguousarray(terminal, dtype=np.uint8)

    cdef unordered_map[i64, i64] keys
    cdef vector[i64] joint_s, joint_code, indptr, indices
    cdef vector[double] probs
    cdef vector[pair[i64, double]] row
    cdef unordered_map[i64, double] init_probs
    cdef i64 head = 0, j, j2, code, code2, shifted, key, s, s2, a, o, o2, a_digit
    cdef double p, pt, pe
    cdef Py_ssize_t r

    indptr.push_back(0)
    for s in range(S):
        if init[s] <= 0:
            continue
        if term[s]:
            code = -1
            key = _joint_key(s, code, n_codes)
            if keys.count(key) == 0:
                if <i64>joint_s.size() >= cap:
                    return None
                keys[key] = joint_s.size()
                joint_s.push_back(s)
                joint_code.push_back(code)
            j = keys[key]
            init_probs[j] += init[s]
            continue
        for o in range(O):
            p = init[s] * E[s, o]
            if p <= 0:
                continue
            code = (o + 1) * (A + 1)
            key = _joint_key(s, code, n_codes)
            if keys.count(key) == 0:
                if <i64>joint_s.size() >= cap:
                    return None
                keys[key] = joint_s.size()
                joint_s.push_back(s)
                joint_code.push_back(code)
            j = keys[key]
            init_probs[j] += p

    while head < <i64>joint_s.size():
        j = head
        head += 1
        s = joint_s[j]
        code = joint_code[j]
        for a in range(A):
            row.clear()
            if term[s]:
                row.push_back(pair[i64, double](j, 1.0))
            else:
                a_digit = (a + 1) if with_actions else 0
                shifted = (code % span) * base
                for s2 in range(S):
                    pt = T[s, a, s2]
                    if pt <= 0:
                        continue
                    if term[s2]:
                        key = _joint_key(s2, -1, n_codes)
                        if keys.count(key) == 0:
                            if <i64>joint_s.size() >= cap:
                                return None
                            keys[key] = joint_s.size()
                            joint_s.push_back(s2)
                            joint_code.push_back(-1)
                        row.push_back(pair[i64, double](keys[key], pt))
                        continue
                    for o2 in range(O):
                        pe = E[s2, o2]
                        if pe <= 0:
                            continue
                        code2 = shifted + (o2 + 1) * (A + 1) + a_digit
                        key = _joint_key(s2, code2, n_codes)
                        if keys.count(key) == 0:
                            if <i64>joint_s.size() >= cap:
                                return None
                            keys[key] = joint_s.size()
                            joint_s.push_back(s2)
                            joint_code.push_back(code2)
                        row.push_back(pair[i64, double](keys[key], pt * pe))
            sort(row.begin(), row.end())
            for r in range(<Py_ssize_t>row.size()):
                if r > 0 and row[r].first == row[r - 1].first:
                    probs[probs.size() - 1] += row[r].second
                else:
                    indices.push_back(row[r].first)
                    probs.push_back(row[r].second)
            indptr.push_back(indices.size())

    cdef Py_ssize_t J = joint_s.size()
    init_vec = np.zeros(J)
    cdef double[::1] iv = init_vec
    for kv in init_probs:
        iv[kv.first] = kv.second
    return (
        np.asarray(<i64[:J]> joint_s.data()).astype(np.int64) if J else np.zeros(0, np.int64),
        np.asarray(<i64[:J]> joint_code.data()).astype(np.int64) if J else np.zeros(0, np.int64),
        np.asarray(<i64[:indptr.size()]> indptr.data()).astype(np.int64),
        np.asarray(<i64[:indices.size()]> indices.data()).astype(np.int64) if indices.size() else np.zeros(0, np.int64),
        np.asarray(<double[:probs.size()]> probs.data()).copy() if probs.size() else np.zeros(0),
        init_vec,
    )


def q_iteration(i64[::1] indptr, i64[::1] indices, double[::1] data, double[:, ::1] R,
                double[:, ::1] pi_joint, double gamma, double tol, int max_iter):
    cdef Py_ssize_t J = R.shape[0], A = R.shape[1], j, a, r, idx
    Q_arr = np.zeros((J, A))
    Qn_arr = np.zeros((J, A))
    V_arr = np.zeros(J)
    cdef double[:, ::1] Q = Q_arr
    cdef double[:, ::1] Qn = Qn_arr
    cdef double[::1] V = V_arr
    cdef double acc, delta, prev_delta = -1.0, max_ratio = 0.0, diff
    cdef int it
    for it in range(1, max_iter + 1):
        for j in range(J):
            acc = 0.0
            for a in range(A):
                acc += pi_joint[j, a] * Q[j, a]
            V[j] = acc
        delta = 0.0
        for j in range(J):
            for a in range(A):
                r = j * A + a
                acc = 0.0
                for idx in range(indptr[r], indptr[r + 1]):
                    acc += data[idx] * V[indices[idx]]
                Qn[j, a] = R[j, a] + gamma * acc
                diff = fabs(Qn[j, a] - Q[j, a])
                if diff > delta:
                    delta = diff
        Q[:, :] = Qn
        if prev_delta > 1e-8 and delta / prev_delta > max_ratio:
            max_ratio = delta / prev_delta
        prev_delta = delta
        if delta <= tol:
            return Q_arr, it, max_ratio
    return Q_arr, max_iter, max_ratio


def sym_q_iteration(i64[::1] indptr, i64[::1] indices, double[::1] data, double[:, ::1] R,
                    i64[::1] joint_z, double[::1] weight, double[:, ::1] pi_z, Py_ssize_t n_z,
                    double gamma, double tol, int max_iter):
    cdef Py_ssize_t J = R.shape[0], A = R.shape[1], j, a, r, idx, z
    Q_arr = np.zeros((n_z, A))
    Qn_arr = np.zeros((n_z, A))
    V_arr = np.zeros(n_z)
    cdef double[:, ::1] Q = Q_arr
    cdef double[:, ::1] Qn = Qn_arr
    cdef double[::1] V = V_arr
    cdef double acc, delta, prev_delta = -1.0, max_ratio = 0.0, diff
    cdef int it
    for it in range(1, max_iter + 1):
        for z in range(n_z):
            acc = 0.0
            for a in range(A):
                acc += pi_z[z, a] * Q[z, a]
            V[z] = acc
        Qn[:, :] = 0.0
        for j in range(J):
            z = joint_z[j]
            for a in range(A):
                r = j * A + a
                acc = 0.0
                for idx in range(indptr[r], indptr[r + 1]):
                    acc += data[idx] * V[joint_z[indices[idx]]]
                Qn[z, a] += weight[j] * (R[j, a] + gamma * acc)
        delta = 0.0
        for z in range(n_z):
            for a in range(A):
                diff = fabs(Qn[z, a] - Q[z, a])
                if diff > delta:
                    delta = diff
        Q[:, :] = Qn
        if prev_delta > 1e-8 and delta / prev_delta > max_ratio:
            max_ratio = delta / prev_delta
        prev_delta = delta
        if delta <= tol:
            return Q_arr, it, max_ratio
    return Q_arr, max_iter, max_ratio


def sparse_affine_forward(i64[:, ::1] idx, double[:, ::1] val, double[:, ::1] W, double[::1] b):
    cdef Py_ssize_t B = idx.shape[0], m = idx.shape[1], H = W.shape[1], i, j, h
    cdef i64 row
    cdef double v
    out_arr = np.empty((B, H))
    cdef double[:, ::1] out = out_arr
    for i in range(B):
        for h in range(H):
            out[i, h] = b[h]
        for j in range(m):
            v = val[i, j]
            if v == 0.0:
                continue
            row = idx[i, j]
            for h in range(H):
                out[i, h] += v * W[row, h]
    return out_arr


def sparse_affine_backward(i64[:, ::1] idx, double[:, ::1] val, double[:, ::1] g, Py_ssize_t n_in):
    cdef Py_ssize_t B = idx.shape[0], m = idx.shape[1], H = g.shape[1], i, j, h
    cdef i64 row
    cdef double v
    dW_arr = np.zeros((n_in, H))
    cdef double[:, ::1] dW = dW_arr
    for i in range(B):
        for j in range(m):
            v = val[i, j]
            if v == 0.0:
                continue
            row = idx[i, j]
            for h in range(H):
                dW[row, h] += v * g[i, h]
    return dW_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v, double lr,
                double beta1, double beta2, double c1, double c2, double eps):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi
    for i in range(n):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def polyak(double[::1] target, double[::1] source, double rate):
    cdef Py_ssize_t i, n = target.shape[0]
    for i in range(n):
        target[i] = (1.0 - rate) * target[i] + rate * source[i]
