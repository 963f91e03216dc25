"""Compiled feature-sign refinement for the L1 solver.

The active set is kept together with a Cholesky factor of its Gram block,
so adding or removing one column costs O(n^2) instead of a fresh
factorization. Coordinates follow the objective ||y - Ax||^2 + lam ||x||_1.
"""

import numpy as np
from numba import njit

# relative pivot below which a new column is treated as linearly dependent
_DEP_TOL = 1e-10


@njit(cache=True)
def _forward(L, n, rhs):
    out = np.empty(n)
    for i in range(n):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    return out


@njit(cache=True)
def _backward(L, n, rhs):
    out = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = rhs[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]
    return out


@njit(cache=True)
def _chol_solve(L, n, rhs):
    return _backward(L, n, _forward(L, n, rhs))


@njit(cache=True)
def _chol_delete(L, n, k):
    """Drop row/column k from the factor in place; returns new size."""
    for i in range(k, n - 1):
        for j in range(n):
            L[i, j] = L[i + 1, j]
    for c in range(k, n - 1):
        a = L[c, c]
        b = L[c, c + 1]
        r = np.hypot(a, b)
        if r == 0.0:
            continue
        cs = a / r
        sn = b / r
        for i in range(c, n - 1):
            u = L[i, c]
            v = L[i, c + 1]
            L[i, c] = cs * u + sn * v
            L[i, c + 1] = -sn * u + cs * v
    for i in range(n):
        L[i, n - 1] = 0.0
        L[n - 1, i] = 0.0
    return n - 1


@njit(cache=True)
def _chol_try_append(L, n, gram, act, j):
    """Append column j; returns False (factor untouched) if it is dependent."""
    col = np.empty(n)
    for i in range(n):
        col[i] = gram[act[i], j]
    row = _forward(L, n, col)
    d2 = gram[j, j]
    for i in range(n):
        d2 -= row[i] * row[i]
    if d2 <= _DEP_TOL * gram[j, j]:
        return False
    for i in range(n):
        L[n, i] = row[i]
    L[n, n] = np.sqrt(d2)
    return True


@njit(cache=True)
def _remove_at(L, act, n, k):
    n2 = _chol_delete(L, n, k)
    for i in range(k, n - 1):
        act[i] = act[i + 1]
    return n2


@njit(cache=True)
def feature_sign(gram, atb, x0, lam, tol, max_steps):
    """Refine x0 to a KKT point of the lasso objective.

    Returns (x, converged, steps).
    """
    m = atb.shape[0]
    half = 0.5 * lam
    x = np.zeros(m)
    theta = np.zeros(m)
    cap = m
    L = np.zeros((cap + 1, cap + 1))
    act = np.zeros(cap + 1, dtype=np.int64)
    n = 0

    order = np.argsort(-np.abs(x0))
    for t in range(m):
        j = order[t]
        if x0[j] == 0.0:
            break
        if _chol_try_append(L, n, gram, act, j):
            act[n] = j
            n += 1
            x[j] = x0[j]
            theta[j] = np.sign(x0[j])

    corr = np.empty(m)
    for step in range(max_steps):
        # gram is symmetric: walk its rows so the inner loop is contiguous
        for i in range(m):
            corr[i] = atb[i]
        for q in range(n):
            j = act[q]
            xj = x[j]
            if xj != 0.0:
                for i in range(m):
                    corr[i] -= gram[j, i] * xj

        on_ok = True
        for q in range(n):
            j = act[q]
            if abs(corr[j] - half * theta[j]) > tol:
                on_ok = False
                break

        if on_ok:
            best = tol
            jadd = -1
            for i in range(m):
                if theta[i] == 0.0:
                    v = abs(corr[i]) - half
                    if v > best:
                        best = v
                        jadd = i
            if jadd < 0:
                return x, True, step
            sgn = np.sign(corr[jadd])
            if _chol_try_append(L, n, gram, act, jadd):
                act[n] = jadd
                n += 1
                theta[jadd] = sgn
            else:
                # jadd lies in the span of the active columns: move along the
                # null direction (residual fixed, L1 norm falling) until an
                # active coefficient reaches zero, then swap it out
                col = np.empty(n)
                for q in range(n):
                    col[q] = gram[act[q], jadd]
                w = _chol_solve(L, n, col)  # A_S w = A_j
                # x_S -> x_S - s*w, x_j -> s, with sign(s) = sgn
                smax = np.inf
                kout = -1
                for q in range(n):
                    j = act[q]
                    rate = sgn * w[q]
                    if rate * x[j] > 0.0:
                        hit = x[j] / rate
                        if hit < smax:
                            smax = hit
                            kout = q
                if kout < 0:
                    return x, False, step
                s = sgn * smax
                for q in range(n):
                    x[act[q]] -= s * w[q]
                jout = act[kout]
                x[jout] = 0.0
                theta[jout] = 0.0
                n = _remove_at(L, act, n, kout)
                x[jadd] = s
                theta[jadd] = sgn
                if _chol_try_append(L, n, gram, act, jadd):
                    act[n] = jadd
                    n += 1
                else:
                    x[jadd] = 0.0
                    theta[jadd] = 0.0
                    return x, False, step
                continue

        # Newton step on the active set with sign-change line search
        rhs = np.empty(n)
        cur = np.empty(n)
        for q in range(n):
            j = act[q]
            rhs[q] = atb[j] - half * theta[j]
            cur[q] = x[j]
        target = _chol_solve(L, n, rhs)
        delta = target - cur
        # G_SS @ delta through the factor
        ltd = np.zeros(n)
        for i in range(n):
            s = 0.0
            for k in range(i, n):
                s += L[k, i] * delta[k]
            ltd[i] = s
        q2 = 0.0
        for i in range(n):
            q2 += ltd[i] * ltd[i]
        gd = np.zeros(n)
        for i in range(n):
            s = 0.0
            for k in range(i + 1):
                s += L[i, k] * ltd[k]
            gd[i] = s
        q1 = 0.0
        for q in range(n):
            q1 += cur[q] * gd[q] - atb[act[q]] * delta[q]
        q1 *= 2.0

        best_t = 1.0
        best_f = q1 + q2
        for q in range(n):
            best_f += lam * abs(target[q])
        for q in range(n):
            if delta[q] != 0.0:
                tq = -cur[q] / delta[q]
                if 0.0 < tq < 1.0:
                    f = q1 * tq + q2 * tq * tq
                    for r in range(n):
                        f += lam * abs(cur[r] + tq * delta[r])
                    if f < best_f:
                        best_f = f
                        best_t = tq
        for q in range(n):
            j = act[q]
            x[j] = cur[q] + best_t * delta[q]
            if x[j] != 0.0:
                theta[j] = np.sign(x[j])
        if best_t < 1.0:
            scale = 0.0
            for q in range(n):
                scale = max(scale, abs(x[act[q]]))
            q = n - 1
            while q >= 0:
                j = act[q]
                if abs(x[j]) <= 1e-14 * max(1.0, scale):
                    x[j] = 0.0
                    theta[j] = 0.0
                    n = _remove_at(L, act, n, q)
                q -= 1
    return x, False, max_steps
