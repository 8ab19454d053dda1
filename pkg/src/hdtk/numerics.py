"""Foundational numerical kernels.

Unitary 2D FFT on power-of-two grids, truncated SVD, a Hermitian
positive-semidefinite solver with monotone residuals, and a functional Adam
step.  Everything runs in double precision; all functions are pure.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericalError, RankError, ShapeError


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def fft2(x, direction="forward"):
    """Unitary 2D FFT over the last two axes.

    Both directions carry a 1/sqrt(H*W) normalization, so the inverse is the
    exact adjoint and Parseval holds.  H and W must be powers of two.
    """
    x = np.asarray(x)
    if x.ndim < 2:
        raise DimensionError("fft2 needs at least 2 axes, got %d" % x.ndim)
    h, w = x.shape[-2], x.shape[-1]
    if not (_is_pow2(h) and _is_pow2(w)):
        raise DimensionError("grid %dx%d is not power-of-two" % (h, w))
    if direction == "forward":
        return np.fft.fft2(x, axes=(-2, -1), norm="ortho")
    if direction == "inverse":
        return np.fft.ifft2(x, axes=(-2, -1), norm="ortho")
    raise ValueError("direction must be 'forward' or 'inverse'")


def svd_truncated(m, rank):
    """Rank-``rank`` truncated SVD of a 2D matrix.

    Returns ``(u, s, vh)`` with ``u`` of shape (m, rank), ``s`` non-increasing
    and non-negative, ``vh`` of shape (rank, n) with orthonormal rows.
    ``u @ np.diag(s) @ vh`` is the best rank-``rank`` Frobenius approximation.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError("svd_truncated expects a matrix, got ndim=%d" % m.ndim)
    if not 1 <= rank <= min(m.shape):
        raise RankError("rank %d outside [1, %d]" % (rank, min(m.shape)))
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    return u[:, :rank], s[:rank], vh[:rank]


@dataclass
class CgResult:
    x: np.ndarray
    converged: bool
    n_iter: int
    rel_residual: float
    residual_history: list = field(default_factory=list)


def cg_solve(apply_normal, rhs, tol=1e-10, max_iter=200, x0=None):
    """Solve ``apply_normal(x) = rhs`` for a Hermitian PSD operator.

    Uses the conjugate-residual recurrence, whose residual norm is
    monotonically non-increasing, and tracks the best iterate.  Returns a
    :class:`CgResult`; ``converged`` is False when ``max_iter`` was exhausted
    first.  Non-finite values raise :class:`NumericalError` with the best
    iterate attached.
    """
    rhs = np.asarray(rhs)
    b_norm = float(np.linalg.norm(rhs))
    if b_norm == 0.0:
        return CgResult(np.zeros_like(rhs), True, 0, 0.0, [0.0])
    if x0 is None:
        x = np.zeros_like(rhs)
        r = rhs.copy()
    else:
        x = np.array(x0, copy=True)
        r = rhs - apply_normal(x)
    p = r.copy()
    ar = apply_normal(r)
    ap = ar.copy()
    r_ar = np.real(np.vdot(r, ar))

    best_x = x.copy()
    best_res = float(np.linalg.norm(r))
    history = [best_res / b_norm]
    if best_res / b_norm <= tol:
        return CgResult(best_x, True, 0, best_res / b_norm, history)

    n_done = 0
    for it in range(1, max_iter + 1):
        ap_ap = np.real(np.vdot(ap, ap))
        if ap_ap <= 0.0 or not np.isfinite(ap_ap):
            break  # operator annihilated the search direction
        alpha = r_ar / ap_ap
        x = x + alpha * p
        r = r - alpha * ap
        res = float(np.linalg.norm(r))
        if not np.isfinite(res):
            raise NumericalError(
                "non-finite residual at iteration %d" % it, best=best_x
            )
        n_done = it
        if res < best_res:
            best_res = res
            best_x = x.copy()
        history.append(best_res / b_norm)
        if best_res / b_norm <= tol:
            return CgResult(best_x, True, n_done, best_res / b_norm, history)
        ar_new = apply_normal(r)
        r_ar_new = np.real(np.vdot(r, ar_new))
        if r_ar == 0.0:
            break
        beta = r_ar_new / r_ar
        p = r + beta * p
        ap = ar_new + beta * ap
        r_ar = r_ar_new
    return CgResult(best_x, False, n_done, best_res / b_norm, history)


@dataclass
class AdamState:
    """Moment estimates for one parameter tensor; zero at step_count == 0."""

    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    if not 0.0 < beta1 < 1.0 or not 0.0 < beta2 < 1.0:
        raise ValueError("betas must lie in (0, 1)")
    if lr <= 0.0 or eps <= 0.0:
        raise ValueError("lr and eps must be positive")
    z = np.zeros_like(np.asarray(params, dtype=float))
    return AdamState(0, z, z.copy(), lr, beta1, beta2, eps)


def adam_step(state, grad, params):
    """One Adam update with bias correction.

    Pure: returns ``(new_state, new_params)`` and leaves the inputs untouched.
    """
    grad = np.asarray(grad, dtype=float)
    params = np.asarray(params, dtype=float)
    if grad.shape != params.shape or state.first_moment.shape != params.shape:
        raise ShapeError(
            "shape mismatch: grad %s, params %s, moments %s"
            % (grad.shape, params.shape, state.first_moment.shape)
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(t, m, v, state.lr, state.beta1, state.beta2, state.eps)
    return new_state, new_params
