"""Pure-Python fallbacks for the compiled kernels in ``_ckernels.pyx``."""
import math

import numpy as np
import scipy.sparse as sp


def jacobi_sweeps(h, q, tol, max_sweeps):
    n = h.shape[0]
    sweep = 0
    off = 0.0
    while sweep < max_sweeps:
        sweep += 1
        rotated = False
        off = 0.0
        for p in range(n - 1):
            hp = h[p]
            for r in range(p + 1, n):
                hr = h[r]
                alpha = float(hp @ hp)
                beta = float(hr @ hr)
                if alpha == 0.0 or beta == 0.0:
                    continue
                gamma = float(hp @ hr)
                rel = abs(gamma) / math.sqrt(alpha * beta)
                if rel > off:
                    off = rel
                if rel <= tol:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + math.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                a, b = hp.copy(), hr.copy()
                hp[:] = c * a - s * b
                hr[:] = s * a + c * b
                a, b = q[p].copy(), q[r].copy()
                q[p] = c * a - s * b
                q[r] = s * a + c * b
        if not rotated:
            break
    return sweep, off


def csr_matmat(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    a = sp.csr_matrix((data, indices, indptr), shape=(n, x.shape[0]))
    return np.ascontiguousarray(a @ x)
