"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_core.pyx``;
``arcbandit._backend`` decides which one is exported.
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import expit

NEWTON_MAX_ITER = 200


def lse_softmax(a, lam):
    """Return ``(lam * log(sum(exp(a / lam))), softmax(a / lam))``."""
    a = np.asarray(a, dtype=np.float64)
    z = a / lam
    top = z.max()
    w = np.exp(z - top)
    total = w.sum()
    return lam * (top + np.log(total)), w / total


def info_premium(nu, ddiag, s, g, lam):
    """Closed-form premium for arms that observe every coordinate.

    ``s[i, j]`` is the precision with which arm ``i`` observes coordinate ``j``.
    """
    nu = np.asarray(nu, dtype=np.float64)
    ddiag = np.asarray(ddiag, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    # 1 - nu_j summed from the other weights, exact when nu_j is near 1
    before = np.concatenate(([0.0], np.cumsum(nu[:-1])))
    after = np.concatenate((np.cumsum(nu[::-1][:-1])[::-1], [0.0]))
    weight = nu * (before + after) * ddiag * ddiag * g * g
    shrink = s / (1.0 + ddiag[None, :] * s)
    return (shrink @ weight) / (2.0 * lam)


def linear_premium(nu, x, sinv, lam):
    """Closed-form premium for scalar-observation arms.

    ``x[i, j] = g_j * c_i' d c_j`` and ``sinv[i] = 1 / (c_i' d c_i + 1/P_i)``.
    The nu-weighted variance of each row is computed in centred form so the
    result is never negative.
    """
    nu = np.asarray(nu, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    mean = x @ nu
    dev = x - mean[:, None]
    return np.asarray(sinv, dtype=np.float64) * ((dev * dev) @ nu) / (2.0 * lam)


def select_index(u, zeta):
    """Smallest index whose prefix sum reaches ``zeta`` (inverse-CDF draw)."""
    cum = np.cumsum(np.asarray(u, dtype=np.float64))
    idx = int(np.searchsorted(cum, zeta, side="left"))
    return min(idx, cum.shape[0] - 1)


def solve_layer(a1, beta, lam):
    """Solve ``v = lam*log(exp(a1/lam) + exp((1 + beta*v)/lam))`` node-wise.

    Newton from the lower bound ``max(a1, 1/(1-beta))``; the residual is
    concave and increasing, so iterates increase monotonically to the root.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    x = np.maximum(a1, 1.0 / (1.0 - beta))
    for _ in range(NEWTON_MAX_ITER):
        stay = (1.0 + beta * x) / lam
        h = x - lam * np.logaddexp(a1 / lam, stay)
        q2 = expit(stay - a1 / lam)
        step = h / (1.0 - beta * q2)
        x = x - step
        if np.all(np.abs(step) <= 1e-14 * np.maximum(1.0, np.abs(x))):
            break
    return x


def bellman_sweep(indptr, indices, data, offset, m_nodes, values, beta, lam):
    """One synchronous Bellman sweep for the known-arm/unknown-arm problem.

    Row ``r`` of the CSR triple gives the expected next-state value of node
    ``r`` under the risky arm (plus ``offset[r]`` for terms that do not depend
    on ``values``).  Returns ``(new_values, sup_delta)``.
    """
    n = values.shape[0]
    op = csr_matrix((data, indices, indptr), shape=(n, n))
    expect = op @ values + offset
    new = lam * np.logaddexp((m_nodes + beta * expect) / lam,
                             (1.0 + beta * values) / lam)
    return new, float(np.max(np.abs(new - values))) if n else 0.0
