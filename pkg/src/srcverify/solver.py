"""L1-regularized least squares and an exhaustive L0 reference solver.

The coding problem is

    minimize  ||y - A a||_2^2 + lam * ||a||_1

solved with monotone FISTA (proximal gradient with momentum and restart),
plus an occasional support "polish" that solves the optimality system on
the current active set exactly. A solution is accepted as converged only
when it satisfies the KKT conditions to within ``tol``:

    |A_j^T r - (lam/2) sign(a_j)| <= tol   for a_j != 0
    |A_j^T r| <= lam/2 + tol               for a_j == 0
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._activeset import feature_sign

DEFAULT_LAMBDA = 0.002


class SolverError(ValueError):
    pass


class EnumerationLimitError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    lam: float = DEFAULT_LAMBDA
    tol: float = 1e-6
    max_iter: int = 5000

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SparseCode:
    coefficients: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    kkt_violation: float = 0.0
    objective_trace: list[float] | None = field(default=None, repr=False)

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.coefficients).sum())


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def spectral_norm_sq(A: np.ndarray, n_iter: int = 500, rtol: float = 1e-10) -> float:
    """Largest eigenvalue of A^T A by power iteration (deterministic start)."""
    m = A.shape[1]
    v = np.random.default_rng(0).standard_normal(m)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(n_iter):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return est


def _kkt_from_corr(corr: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    half = lam / 2.0
    on = np.abs(corr - half * np.sign(x))
    off = np.maximum(np.abs(corr) - half, 0.0)
    return np.where(x != 0, on, off).max(axis=0)


def _objective(resid: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    return np.einsum("ij,ij->j", resid, resid) + lam * np.abs(x).sum(axis=0)


def _check_inputs(A: np.ndarray, Y: np.ndarray):
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise SolverError("dictionary must be a nonempty 2-D matrix")
    if Y.shape[0] != A.shape[0]:
        raise SolverError(
            f"dimension mismatch: target has {Y.shape[0]} rows, dictionary {A.shape[0]}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Y))):
        raise SolverError("non-finite input")
    return A, Y


# active-set refinement runs after 100, 200, 400, ... proximal steps
_POLISH_FIRST = 100
# coefficients below this fraction of the largest are left out of the seed
_SEED_FRAC = 0.3


def _polish_due(it: int, max_iter: int) -> bool:
    if it == max_iter:
        return True
    q, r = divmod(it, _POLISH_FIRST)
    return r == 0 and q & (q - 1) == 0


def solve_l1_many(A: np.ndarray, Y: np.ndarray, cfg: SolverConfig = SolverConfig(),
                  track_objective: bool = False,
                  lipschitz: float | None = None) -> list[SparseCode]:
    """Solve one L1 problem per column of `Y` against the shared matrix `A`.

    Columns are iterated jointly (matrix-matrix products) and frozen
    individually once their KKT certificate holds.
    """
    A, Y = _check_inputs(A, Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    m, p = A.shape[1], Y.shape[1]
    lam = cfg.lam

    G = A.T @ A
    B = A.T @ Y
    L = 2.0 * (spectral_norm_sq(A) if lipschitz is None else lipschitz) * 1.02
    step = 1.0 / L if L > 0 else 1.0
    max_steps = max(400, 2 * m)

    X = np.zeros((m, p))
    AX = np.zeros_like(Y)
    Z, AZ = X.copy(), AX.copy()
    t = np.ones(p)
    fx = _objective(Y, X, lam)
    iters = np.zeros(p, dtype=int)
    done = _kkt_from_corr(B, X, lam) <= cfg.tol
    traces = [[float(v)] for v in fx] if track_objective else None

    it = 0
    while it < cfg.max_iter and not done.all():
        it += 1
        act = np.flatnonzero(~done)
        Ya = Y[:, act]
        Xa, AXa, Za, AZa = X[:, act], AX[:, act], Z[:, act], AZ[:, act]
        U = soft_threshold(Za + 2.0 * step * (A.T @ (Ya - AZa)), lam * step)
        AU = A @ U
        fu = _objective(Ya - AU, U, lam)
        fprev = fx[act]
        better = fu <= fprev
        Xn = np.where(better, U, Xa)
        AXn = np.where(better, AU, AXa)
        fn = np.where(better, fu, fprev)
        ta = t[act]
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * ta * ta))
        c1, c2 = ta / tn, (ta - 1.0) / tn
        Zn = Xn + c1 * (U - Xn) + c2 * (Xn - Xa)
        AZn = AXn + c1 * (AU - AXn) + c2 * (AXn - AXa)
        # restart momentum where the proximal step failed to descend
        tn = np.where(better, tn, 1.0)
        Zn = np.where(better, Zn, Xn)
        AZn = np.where(better, AZn, AXn)

        polish = _polish_due(it, cfg.max_iter)
        if polish:
            Ba = B[:, act]
            for k in range(act.size):
                # seed the active set with the dominant coefficients only; the
                # proximal iterate is dense and most small entries would be
                # dropped again one step at a time
                x0 = Xn[:, k]
                x0 = np.where(np.abs(x0) >= _SEED_FRAC * np.abs(x0).max(initial=0.0), x0, 0.0)
                cand, ok, _ = feature_sign(G, Ba[:, k], x0, lam, 0.5 * cfg.tol, max_steps)
                if not ok:
                    continue
                acand = A @ cand
                fc = _objective((Ya[:, k] - acand)[:, None], cand[:, None], lam)[0]
                if fc <= fn[k]:
                    Xn[:, k], AXn[:, k] = cand, acand
                    Zn[:, k], AZn[:, k] = cand, acand
                    fn[k] = fc
                    tn[k] = 1.0

        X[:, act], AX[:, act], Z[:, act], AZ[:, act] = Xn, AXn, Zn, AZn
        fx[act], t[act] = fn, tn
        iters[act] = it
        if traces is not None:
            for k, j in enumerate(act):
                traces[j].append(float(fn[k]))
        if polish or it % 10 == 0:
            done[act] = _kkt_from_corr(A.T @ (Ya - AXn), Xn, lam) <= cfg.tol

    R = Y - A @ X
    viol = _kkt_from_corr(A.T @ R, X, lam)
    res = np.linalg.norm(R, axis=0)
    return [
        SparseCode(coefficients=X[:, j].copy(), residual_norm=float(res[j]),
                   iterations=int(iters[j]), converged=bool(viol[j] <= cfg.tol),
                   kkt_violation=float(viol[j]),
                   objective_trace=traces[j] if traces is not None else None)
        for j in range(p)
    ]


def solve_l1(A: np.ndarray, y, cfg: SolverConfig = SolverConfig(),
             track_objective: bool = False) -> SparseCode:
    """Solve min ||y - A a||^2 + lam ||a||_1 for a single target vector."""
    y = getattr(y, "values", y)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise SolverError("target must be a vector")
    return solve_l1_many(A, y, cfg, track_objective=track_objective)[0]


def objective(A: np.ndarray, y: np.ndarray, x: np.ndarray, lam: float) -> float:
    r = np.asarray(y) - A @ x
    return float(r @ r + lam * np.abs(x).sum())


def check_kkt(A: np.ndarray, y, x: np.ndarray, lam: float) -> float:
    """Largest stationarity violation of `x`, computed directly from A."""
    y = np.asarray(getattr(y, "values", y), dtype=float)
    corr = A.T @ (y - A @ x)
    half = lam / 2.0
    nz = x != 0
    on = np.abs(corr - half * np.sign(x))[nz]
    off = np.maximum(np.abs(corr[~nz]) - half, 0.0)
    return float(max(on.max(initial=0.0), off.max(initial=0.0)))


# ---------------------------------------------------------------------------
# exhaustive L0

MAX_SUPPORTS = 10**6


def solve_l0_exact(A: np.ndarray, y, K: int, tie_tol: float = 1e-10,
                   chunk: int = 20000) -> tuple[tuple[int, ...], np.ndarray]:
    """Best support of size <= K by exhaustive least squares.

    Ties (residuals within `tie_tol`) go to the smaller support, then to the
    lexicographically smallest index tuple. Returns ``(support, coefs)``
    where `coefs` is the full-length coefficient vector.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(getattr(y, "values", y), dtype=float)
    n, m = A.shape
    if y.shape != (n,):
        raise SolverError("dimension mismatch")
    # K above the row count is allowed (supports beyond N are redundant but
    # well defined through the pseudo-inverse)
    if not 0 <= K <= m:
        raise SolverError(f"K={K} outside 0..{m}")
    total = sum(math.comb(m, k) for k in range(1, K + 1))
    if total > MAX_SUPPORTS:
        raise EnumerationLimitError(f"{total} supports exceed the {MAX_SUPPORTS} limit")

    best_res = float(np.linalg.norm(y))
    best_support: tuple[int, ...] = ()
    best_coef = np.zeros(0)

    for k in range(1, K + 1):
        combos = itertools.combinations(range(m), k)
        while True:
            batch = np.array(list(itertools.islice(combos, chunk)), dtype=int)
            if batch.size == 0:
                break
            sub = A[:, batch].transpose(1, 0, 2)  # (b, n, k)
            coef = np.linalg.pinv(sub) @ y  # (b, k)
            res = np.linalg.norm(y[None, :] - np.einsum("bnk,bk->bn", sub, coef), axis=1)
            # first index within tolerance of the batch minimum is the
            # lexicographically smallest near-tie
            i = int(np.flatnonzero(res <= res.min() + tie_tol)[0])
            if res[i] < best_res - tie_tol:
                best_res = float(res[i])
                best_support = tuple(int(c) for c in batch[i])
                best_coef = coef[i]

    full = np.zeros(m)
    if best_support:
        full[list(best_support)] = best_coef
    return best_support, full
