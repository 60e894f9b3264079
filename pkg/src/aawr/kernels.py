"""Hot kernels, compiled when the Cython extension is built, pure Python otherwise.

The implementation is chosen once at import. Set ``AAWR_PURE_PYTHON=1`` to
force the fallback (the benchmark and the kernel-equivalence tests do this
through :func:`use`).
"""

import os

from aawr import _kernels_py

try:
    from aawr import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_INT64_LIMIT = 2**62

BACKEND = "python"
_impl = _kernels_py


def use(backend: str) -> None:
    """Switch between ``"compiled"`` and ``"python"`` kernels."""
    global BACKEND, _impl
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        _impl = _compiled
    elif backend == "python":
        _impl = _kernels_py
    else:
        raise ValueError(f"unknown backend {backend!r}")
    BACKEND = backend


def compiled_available() -> bool:
    return _compiled is not None


if _compiled is not None and os.environ.get("AAWR_PURE_PYTHON") != "1":
    use("compiled")


def enumerate_joint(T, E, init, terminal, k, base, with_actions, cap):
    S = T.shape[0]
    if BACKEND == "compiled" and (base**k + 1) * S < _INT64_LIMIT:
        return _impl.enumerate_joint(T, E, init, terminal, k, base, with_actions, cap)
    # window codes too wide for int64: Python integers
    return _kernels_py.enumerate_joint(T, E, init, terminal, k, base, with_actions, cap)


def q_iteration(indptr, indices, data, R, pi_joint, gamma, tol, max_iter):
    return _impl.q_iteration(indptr, indices, data, R, pi_joint, float(gamma), float(tol), int(max_iter))


def sym_q_iteration(indptr, indices, data, R, joint_z, weight, pi_z, n_z, gamma, tol, max_iter):
    return _impl.sym_q_iteration(
        indptr, indices, data, R, joint_z, weight, pi_z, int(n_z), float(gamma), float(tol), int(max_iter)
    )


def sparse_affine_forward(idx, val, W, b):
    return _impl.sparse_affine_forward(idx, val, W, b)


def sparse_affine_backward(idx, val, g, n_in):
    return _impl.sparse_affine_backward(idx, val, g, int(n_in))


def adam_update(p, g, m, v, lr, beta1, beta2, c1, c2, eps):
    """Fused in-place Adam moment and parameter update on flat contiguous arrays."""
    _impl.adam_update(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1), float(lr), float(beta1),
                      float(beta2), float(c1), float(c2), float(eps))


def polyak(target, source, rate):
    _impl.polyak(target.reshape(-1), source.reshape(-1), float(rate))
