"""Hot numeric kernels with interchangeable numba and numpy implementations.

Both variants perform the same floating point operations in the same order,
so results agree bitwise for the Laplacian kernels. The active set is chosen
once at import (see :mod:`ppcm._accel`); ``NUMBA`` and ``NUMPY`` expose each
variant explicitly for tests and benchmarks.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# --- Laplacian application ---------------------------------------------------
# Graphs are passed in CSR form over the off-diagonal weights:
# neighbors of i are indices[indptr[i]:indptr[i+1]] with weights data[...],
# sorted by neighbor id. Row i of (L kron I) X is sum_j a_ij (X_i - X_j).


def _laplacian_apply_py(indptr, indices, data, X):
    p, n = X.shape
    out = np.zeros((p, n))
    for i in range(p):
        acc = out[i]
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * (X[i] - X[indices[k]])
    return out


@njit
def _laplacian_apply_nb(indptr, indices, data, X):
    p, n = X.shape
    out = np.zeros((p, n))
    for i in range(p):
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            w = data[k]
            for c in range(n):
                out[i, c] += w * (X[i, c] - X[j, c])
    return out


def _neighbor_laplacian_py(weights, own, neighbor_values):
    acc = np.zeros(own.shape[0])
    for k in range(weights.shape[0]):
        acc += weights[k] * (own - neighbor_values[k])
    return acc


@njit
def _neighbor_laplacian_nb(weights, own, neighbor_values):
    n = own.shape[0]
    acc = np.zeros(n)
    for k in range(weights.shape[0]):
        w = weights[k]
        for c in range(n):
            acc[c] += w * (own[c] - neighbor_values[k, c])
    return acc


# --- projections ---------------------------------------------------------------


def _project_box_py(v, lower, upper):
    return np.minimum(np.maximum(v, lower), upper)


@njit
def _project_box_nb(v, lower, upper):
    out = np.empty_like(v)
    for c in range(v.shape[0]):
        t = v[c]
        if t < lower[c]:
            t = lower[c]
        if t > upper[c]:
            t = upper[c]
        out[c] = t
    return out


def _project_ball_py(v, center, radius):
    d = v - center
    nrm = np.sqrt(np.sum(d * d))
    if nrm <= radius:
        return v.copy()
    return center + d * (radius / nrm)


@njit
def _project_ball_nb(v, center, radius):
    n = v.shape[0]
    s = 0.0
    for c in range(n):
        t = v[c] - center[c]
        s += t * t
    nrm = np.sqrt(s)
    out = v.copy()
    if nrm <= radius:
        return out
    scale = radius / nrm
    for c in range(n):
        out[c] = center[c] + (v[c] - center[c]) * scale
    return out


NUMPY = {
    "laplacian_apply": _laplacian_apply_py,
    "neighbor_laplacian": _neighbor_laplacian_py,
    "project_box": _project_box_py,
    "project_ball": _project_ball_py,
}
NUMBA = {
    "laplacian_apply": _laplacian_apply_nb,
    "neighbor_laplacian": _neighbor_laplacian_nb,
    "project_box": _project_box_nb,
    "project_ball": _project_ball_nb,
}
ACTIVE = NUMBA if USE_NUMBA else NUMPY
BACKEND = "numba" if USE_NUMBA else "numpy"

laplacian_apply = ACTIVE["laplacian_apply"]
neighbor_laplacian = ACTIVE["neighbor_laplacian"]
project_box = ACTIVE["project_box"]
project_ball = ACTIVE["project_ball"]
