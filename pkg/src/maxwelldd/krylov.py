"""Full GMRES, in right-preconditioned and weighted left-preconditioned form.

The right-preconditioned solver runs Arnoldi on A M^{-1} in the Euclidean
inner product and reports residuals relative to the initial one.  The
weighted variant runs Arnoldi on M^{-1} A in the inner product induced by a
symmetric positive definite matrix C, so the reported history is the
C-norm of the preconditioned residual; this is the setting in which the
two-level method admits a wavenumber-independent convergence factor.

No restarting: the experiments run at most a few hundred iterations and
the minimal-residual property of full GMRES is part of the test oracle.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp


class Side(str, Enum):
    RIGHT_STANDARD = "right_standard"
    LEFT_WEIGHTED = "left_weighted"


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-6
    max_iter: int = 200
    seed: int = 0
    side: Side = Side.RIGHT_STANDARD

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class GmresResult:
    solution: np.ndarray
    iterations: int
    residual_history: np.ndarray  # history[m] = relative residual after m steps
    converged: bool


def random_initial_guess(n: int, seed: int) -> np.ndarray:
    """Seeded uniform complex entries in the unit square [-1,1]^2."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, n) + 1j * rng.uniform(-1.0, 1.0, n)


def _as_matvec(op):
    if op is None:
        return lambda v: v
    if callable(op) and not sp.issparse(op):
        return op
    return lambda v, _m=op: _m @ v


class _WeightedIP:
    """Inner product <v, w> = conj(w)^T C v with cached C v products."""

    def __init__(self, c: sp.spmatrix | None):
        self.scale = 1.0
        if c is not None:
            if np.iscomplexobj(c.data) and np.abs(c.data.imag).max() > 0:
                raise ValueError("weight matrix must be real")
            d = abs(c - c.T)
            self.scale = abs(c).max() or 1.0
            if d.nnz and d.max() > 1e-10 * self.scale:
                raise ValueError("weight matrix must be symmetric")
        self.c = c

    def weigh(self, v: np.ndarray) -> np.ndarray:
        return v if self.c is None else self.c @ v

    def norm(self, v: np.ndarray, cv: np.ndarray) -> float:
        sq = np.vdot(v, cv)
        if self.c is not None:
            # relative to |v|^2 |C|, so roundoff near zero does not trip it
            ref = self.scale * float(np.linalg.norm(v)) ** 2 + 1e-300
            if sq.real < -1e-10 * ref or abs(sq.imag) > 1e-8 * ref:
                raise ValueError("weight matrix is not positive definite")
        return float(np.sqrt(max(sq.real, 0.0)))


def gmres(a, m_inv, b: np.ndarray, c_k: sp.spmatrix | None = None,
          cfg: GmresConfig | None = None, x0: np.ndarray | None = None
          ) -> GmresResult:
    """Solve A x = b with full GMRES.

    a and m_inv may be sparse matrices or callables; m_inv None means no
    preconditioning.  For the right-preconditioned side the history holds
    Euclidean residuals of the original system relative to the initial
    residual; for the weighted side it holds C-norm residuals of the
    left-preconditioned system.  The initial guess is seeded random unless
    x0 is given.
    """
    cfg = cfg or GmresConfig()
    amv = _as_matvec(a)
    pmv = _as_matvec(m_inv)
    n = b.shape[0]
    right = cfg.side == Side.RIGHT_STANDARD
    if not right:
        ip = _WeightedIP(c_k)
    elif c_k is not None:
        raise ValueError("the weight matrix applies to the weighted side only")

    if x0 is None:
        x0 = random_initial_guess(n, cfg.seed)
    x0 = np.asarray(x0, dtype=complex)

    if right:
        op = lambda v: amv(pmv(v))
        r0 = b - amv(x0)
    else:
        op = lambda v: pmv(amv(v))
        r0 = pmv(b) - op(x0)

    if right:
        beta = float(np.linalg.norm(r0))
    else:
        beta = ip.norm(r0, ip.weigh(r0))
    if beta == 0.0:
        return GmresResult(solution=x0, iterations=0,
                           residual_history=np.array([0.0]), converged=True)

    basis = [r0 / beta]
    if not right:
        cached = [ip.weigh(basis[0])]
    hess: list[np.ndarray] = []      # column j holds h[0..j+1, j]
    cos: list[float] = []
    sin: list[complex] = []
    g = [beta]                        # rotated rhs of the least-squares
    history = [1.0]
    breakdown = False

    for j in range(cfg.max_iter):
        w = op(basis[j])
        if right:
            wnorm0 = float(np.linalg.norm(w))
            h = np.array([np.vdot(v, w) for v in basis])
            for i, v in enumerate(basis):
                w = w - h[i] * v
            hnew = float(np.linalg.norm(w))
            if hnew < 0.7071 * wnorm0:  # one reorthogonalization pass
                h2 = np.array([np.vdot(v, w) for v in basis])
                for i, v in enumerate(basis):
                    w = w - h2[i] * v
                h = h + h2
                hnew = float(np.linalg.norm(w))
        else:
            # for real symmetric C, <w, v_i>_C = vdot(C v_i, w) with C v_i cached
            wnorm0 = ip.norm(w, ip.weigh(w))
            h = np.array([np.vdot(cv, w) for cv in cached])
            for i, v in enumerate(basis):
                w = w - h[i] * v
            cw = ip.weigh(w)
            hnew = ip.norm(w, cw)
            if hnew < 0.7071 * wnorm0:
                h2 = np.array([np.vdot(cv, w) for cv in cached])
                for i, v in enumerate(basis):
                    w = w - h2[i] * v
                h = h + h2
                cw = ip.weigh(w)
                hnew = ip.norm(w, cw)

        col = np.concatenate([h, [hnew]])
        # apply accumulated Givens rotations, then a new one
        for i in range(j):
            t = cos[i] * col[i] + np.conj(sin[i]) * col[i + 1]
            col[i + 1] = -sin[i] * col[i] + cos[i] * col[i + 1]
            col[i] = t
        r = np.hypot(abs(col[j]), hnew)
        if r == 0.0:
            break  # column fully dependent; nothing new to add
        cos.append(abs(col[j]) / r)
        phase = col[j] / abs(col[j]) if col[j] != 0 else 1.0
        sin.append(np.conj(phase) * hnew / r)
        col[j] = phase * r
        g.append(-sin[j] * g[j])
        g[j] = cos[j] * g[j]
        col[j + 1] = 0.0
        hess.append(col)
        history.append(abs(g[j + 1]) / beta)

        if hnew <= 1e-14 * max(r, 1e-300):
            breakdown = True        # happy breakdown: Krylov space exhausted
        if history[-1] <= cfg.tol or breakdown:
            break
        basis.append(w / hnew)
        if not right:
            cached.append(cw / hnew)

    m = len(hess)
    y = np.zeros(m, dtype=complex)
    for i in range(m - 1, -1, -1):
        s = g[i] - sum(hess[jj][i] * y[jj] for jj in range(i + 1, m))
        y[i] = s / hess[i][i]
    z = np.zeros(n, dtype=complex)
    for i in range(m):
        z += y[i] * basis[i]
    x = x0 + (pmv(z) if right else z)

    history = np.array(history)
    return GmresResult(solution=x, iterations=m, residual_history=history,
                       converged=bool(history[-1] <= cfg.tol))


def convergence_factor_bound(coarse_h: float, overlap: float, m: int) -> float:
    """Theoretical residual reduction after m weighted-GMRES iterations.

    Evaluates (1 - (1 + (H/delta)^2)^{-2})^{m/2} for coarse grid size H and
    overlap delta.
    """
    if coarse_h <= 0 or overlap <= 0:
        raise ValueError("coarse_h and overlap must be positive")
    if m < 0:
        raise ValueError("iteration count must be nonnegative")
    ratio = coarse_h / overlap
    return float((1.0 - (1.0 + ratio ** 2) ** -2) ** (m / 2.0))


def robustness_condition(k: float, coarse_h: float, subdomain_h: float,
                         overlap: float, c1: float) -> bool:
    """Check max(k*H_sub, k*H) <= C1 (1 + (H/delta)^2)^{-1}.

    The constant C1 is theory-dependent and must be supplied by the caller.
    """
    if min(k, coarse_h, subdomain_h, overlap) <= 0:
        raise ValueError("k, coarse_h, subdomain_h and overlap must be positive")
    lhs = max(k * subdomain_h, k * coarse_h)
    rhs = c1 * (1.0 + (coarse_h / overlap) ** 2) ** -1
    return bool(lhs <= rhs)


def residual_history_csv(result: GmresResult) -> str:
    """Per-iteration relative residuals as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "relative_residual"])
    for i, r in enumerate(result.residual_history):
        writer.writerow([i, f"{r:.16e}"])
    return buf.getvalue()
