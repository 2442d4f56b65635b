"""Counter-based normal variates (Philox4x32-10) usable from numba kernels.

Every variate is a pure function of ``(seed, path_index, step)``, so a path's
randomness does not depend on how paths are split across workers.
"""

import math

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_M32 = 1.0 / 4294967296.0

# stream tags keep price normals and auxiliary draws apart
STREAM_PRICE = 0
STREAM_AUX = 1

# rational approximation of the standard normal quantile (Acklam), |rel err| < 1.2e-9
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


@numba.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 block; words are uint64 holding 32-bit values."""
    for i in range(10):
        if i > 0:
            k0 = (k0 + _W0) & _LO32
            k1 = (k1 + _W1) & _LO32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> _S32) ^ c1 ^ k0), p1 & _LO32, ((p0 >> _S32) ^ c3 ^ k1), p0 & _LO32
    return c0, c1, c2, c3


@numba.njit(cache=True)
def normal_quantile(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


@numba.njit(cache=True)
def _block(seed, path_index, block, stream):
    return philox4x32(
        np.uint64(block) & _LO32, np.uint64(block) >> _S32,
        np.uint64(path_index) & _LO32, ((np.uint64(path_index) >> _S32) & np.uint64(0xFFFF))
        | (np.uint64(stream) << np.uint64(16)),
        np.uint64(seed) & _LO32, np.uint64(seed) >> _S32,
    )


@numba.njit(cache=True)
def uniform_block(seed, path_index, block, stream):
    """Four uniforms in the open interval (0, 1)."""
    x0, x1, x2, x3 = _block(seed, path_index, block, stream)
    return (
        (x0 + 0.5) * _TWO_M32,
        (x1 + 0.5) * _TWO_M32,
        (x2 + 0.5) * _TWO_M32,
        (x3 + 0.5) * _TWO_M32,
    )


@numba.njit(cache=True)
def normal_block(seed, path_index, block, stream):
    """Four standard normals from counter block ``block`` of path ``path_index``."""
    u0, u1, u2, u3 = uniform_block(seed, path_index, block, stream)
    return normal_quantile(u0), normal_quantile(u1), normal_quantile(u2), normal_quantile(u3)


@numba.njit(cache=True, parallel=True)
def fill_normals(seed, path_indices, n_steps, stream):
    out = np.empty((path_indices.shape[0], n_steps))
    n_blocks = (n_steps + 3) // 4
    for p in numba.prange(path_indices.shape[0]):
        idx = path_indices[p]
        for b in range(n_blocks):
            z = normal_block(seed, idx, b, stream)
            for lane in range(4):
                k = 4 * b + lane
                if k < n_steps:
                    out[p, k] = z[lane]
    return out


def normals(seed: int, path_indices, n_steps: int, stream: int = STREAM_PRICE) -> np.ndarray:
    """Matrix of standard normals, one row per path index (indices < 2**48)."""
    idx = np.ascontiguousarray(path_indices, dtype=np.uint64)
    return fill_normals(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), idx, int(n_steps), stream)
