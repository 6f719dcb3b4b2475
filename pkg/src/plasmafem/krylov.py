"""Restarted complex GMRES with right preconditioning and residual history."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InvalidParameterError


@dataclass
class GmresConfig:
    restart: int = 30
    max_iterations: int = 500
    tolerance: float = 1e-10
    preconditioner: str = "none"  # "none" or "diagonal"

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise InvalidParameterError("GMRES tolerance must lie in (0, 1)")
        if self.restart < 1:
            raise InvalidParameterError("GMRES restart must be >= 1")
        if self.max_iterations < 1:
            raise InvalidParameterError("GMRES max_iterations must be >= 1")
        if self.preconditioner not in ("none", "diagonal"):
            raise InvalidParameterError("preconditioner must be 'none' or 'diagonal'")


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)  # relative residual per iteration


def _apply(op, v):
    return op(v) if callable(op) else op @ v


def _givens(a, b):
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, 1.0
    t = np.hypot(abs(a), abs(b))
    return abs(a) / t, (a / abs(a)) * np.conj(b) / t


def gmres(A, b, config=None, x0=None, M=None):
    """Solve A x = b; A and M (approximate inverse, applied on the right) are callables or matrices.

    Convergence is declared on the true relative residual ||b - A x|| / ||b||.
    Raises ConvergenceError (with the best iterate and history) when the
    iteration budget is exhausted.
    """
    cfg = config or GmresConfig()
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    x = np.zeros(n, complex) if x0 is None else np.array(x0, dtype=complex)
    if bnorm == 0:
        return GmresResult(np.zeros(n, complex), 0, 0.0, [0.0])
    prec = (lambda v: v) if M is None else (lambda v: _apply(M, v))
    history = []
    total = 0
    best_x, best_res = x.copy(), np.inf
    m = cfg.restart
    while True:
        r = b - _apply(A, x)
        beta = np.linalg.norm(r)
        res = beta / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if not history:
            history.append(float(res))
        if res <= cfg.tolerance:
            return GmresResult(x, total, float(res), history)
        if total >= cfg.max_iterations:
            raise ConvergenceError(
                f"GMRES did not converge in {total} iterations (residual {best_res:.3e})",
                best=best_x, history=history)
        V = np.zeros((m + 1, n), complex)
        Z = np.zeros((m, n), complex)
        H = np.zeros((m + 1, m), complex)
        cs = np.zeros(m)
        sn = np.zeros(m, complex)
        g = np.zeros(m + 1, complex)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for j in range(m):
            Z[j] = prec(V[j])
            w = _apply(A, Z[j])
            for _ in range(2):  # classical Gram-Schmidt with one reorthogonalisation
                h = V[:j + 1].conj() @ w
                w = w - h @ V[:j + 1]
                H[:j + 1, j] += h
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] <= 1e-14 * np.abs(H[:j + 2, j]).max()
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                hi, hj = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hj
                H[i + 1, j] = -np.conj(sn[i]) * hi + cs[i] * hj
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            k = j + 1
            history.append(float(abs(g[j + 1]) / bnorm))
            if history[-1] <= cfg.tolerance or total >= cfg.max_iterations or breakdown:
                break
        y = np.zeros(k, complex)
        for i in range(k - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:]) / H[i, i]
        x = x + y @ Z[:k]
