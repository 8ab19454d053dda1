"""Subspace estimation and regularized subspace reconstruction.

The temporal basis is estimated from navigator images; the spatial
coefficients solve a regularized least-squares problem whose joint-sparsity
term is handled by iteratively reweighted least squares (IRLS), each pass
being a Hermitian quadratic solved by ``cg_solve``.  The same quadratic core
(`solve_u_quadratic`) also serves the generator-constrained coefficient
update of the integrated reconstruction.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import encoding
from .errors import RankError
from .numerics import cg_solve, svd_truncated


def to_casorati(series):
    """(T, H, W) series -> (N, T) Casorati matrix."""
    t = series.shape[0]
    return series.reshape(t, -1).T


def from_casorati(mat, grid):
    """(N, T) Casorati matrix -> (T, H, W) series."""
    h, w = grid
    return mat.T.reshape(-1, h, w)


@dataclass
class SubspaceModel:
    u: np.ndarray  # (N, R) spatial coefficients
    v: np.ndarray  # (R, T) temporal basis, orthonormal rows
    grid: tuple

    def __post_init__(self):
        r = self.v.shape[0]
        if r > min(self.u.shape[0], self.v.shape[1]):
            raise RankError("rank %d exceeds matrix extents" % r)
        gram = self.v @ self.v.conj().T
        if np.max(np.abs(gram - np.eye(r))) > 1e-8:
            raise RankError("temporal basis rows are not orthonormal")

    @property
    def rank(self):
        return self.v.shape[0]

    def series(self):
        return from_casorati(self.u @ self.v, self.grid)


@dataclass
class RegularizerSpec:
    kind: str = "joint_sparsity"  # or "edge_weighted_tikhonov"
    lambda2: float = 0.0
    edge_weights: Optional[np.ndarray] = None  # (2, H, W), required for edge kind
    irls_eps: Optional[float] = None  # None: 1e-6 of the initial median group norm
    n_irls: int = 6

    def __post_init__(self):
        if self.kind not in ("joint_sparsity", "edge_weighted_tikhonov"):
            raise ValueError("unknown regularizer kind %r" % self.kind)
        if self.kind == "edge_weighted_tikhonov" and self.lambda2 > 0 and self.edge_weights is None:
            raise ValueError("edge_weighted_tikhonov needs edge_weights")


def estimate_basis(navigator, rank):
    """Top-``rank`` right singular vectors of the navigator Casorati matrix."""
    n_te = navigator.shape[0]
    if rank > n_te:
        raise RankError("rank %d exceeds %d time points" % (rank, n_te))
    _, _, vh = svd_truncated(to_casorati(navigator), rank)
    return vh


def d_forward(series):
    """First-order forward differences, periodic, both spatial axes.

    (T, H, W) -> (2, T, H, W); axis 0 indexes the difference direction.
    """
    dy = np.roll(series, -1, axis=-2) - series
    dx = np.roll(series, -1, axis=-1) - series
    return np.stack([dy, dx])


def d_adjoint(grads):
    """Adjoint of :func:`d_forward` (negative periodic divergence)."""
    dy, dx = grads[0], grads[1]
    out = np.roll(dy, 1, axis=-2) - dy
    out += np.roll(dx, 1, axis=-1) - dx
    return out


def group_norms(series):
    """Per-location, per-direction l2 norm over the T temporal channels."""
    g = d_forward(series)
    return np.sqrt(np.sum(np.abs(g) ** 2, axis=1))  # (2, H, W)


def huber_sum(norms, eps):
    """Smoothed 2,1 objective matching the IRLS weights 1/max(n, eps)."""
    small = norms < eps
    out = np.where(small, (norms**2 + eps**2) / (2.0 * eps), norms)
    return float(np.sum(out))


def joint_sparsity_objective(u, acq, v, lambda2, eps):
    """epsilon-smoothed objective used to verify IRLS monotonicity."""
    grid = acq.grid
    x = from_casorati(u @ v, grid)
    resid = encoding.forward(x, acq) - acq.y
    obj = float(np.sum(np.abs(resid) ** 2))
    if lambda2 > 0:
        obj += lambda2 * huber_sum(group_norms(x), eps)
    return obj


def solve_u_quadratic(
    acq,
    v,
    lambda1=None,
    gan_images=None,
    gan_maps=None,
    lambda2=0.0,
    sparsity_weights=None,
    u0=None,
    tol=1e-9,
    max_iter=150,
):
    """CG solve of the normal equations for the spatial coefficients U.

    Data term ||y - A(UV)||^2 always; optional frame penalties
    sum_t lambda1[t] ||(UV)_t - gan_images[t]||^2, optional column penalties
    sum_r lambda1[r] ||U_r - gan_maps[r]||^2, and an optional weighted
    quadratic sparsity term lambda2 * sum |W^(1/2) D(UV)|^2 with per-location
    weights ``sparsity_weights`` of shape (2, H, W).
    """
    grid = acq.grid
    rank, n_te = v.shape
    vh = v.conj().T  # (T, R)
    lam1 = None if lambda1 is None else np.asarray(lambda1, dtype=float)

    if gan_images is not None:
        frame_gram = (v * lam1[None, :]) @ vh  # (R, R)
    if gan_maps is not None and gan_maps.shape[0] != rank:
        raise RankError("need one constraint map per coefficient")

    def apply_normal(u_flat):
        u = u_flat.reshape(-1, rank)
        x = from_casorati(u @ v, grid)
        z = encoding.normal(x, acq)
        if lambda2 > 0 and sparsity_weights is not None:
            g = d_forward(x)
            z = z + lambda2 * d_adjoint(sparsity_weights[:, None] * g)
        acc = to_casorati(z) @ vh
        if gan_images is not None:
            acc = acc + u @ frame_gram
        if gan_maps is not None:
            acc = acc + u * lam1[None, :]
        return acc.ravel()

    rhs = to_casorati(encoding.adjoint(acq.y, acq)) @ vh
    if gan_images is not None:
        rhs = rhs + to_casorati(gan_images) @ (vh * lam1[:, None])
    if gan_maps is not None:
        rhs = rhs + (gan_maps.reshape(rank, -1).T) * lam1[None, :]

    x0 = None if u0 is None else u0.ravel()
    res = cg_solve(apply_normal, rhs.ravel(), tol=tol, max_iter=max_iter, x0=x0)
    return res.x.reshape(-1, rank), res


def subspace_recon(acq, v, reg, tol=1e-9, max_iter=150, u0=None):
    """Classic regularized subspace reconstruction with a fixed basis.

    ``joint_sparsity`` runs ``reg.n_irls`` IRLS passes with weights
    1/max(group_norm, eps); ``edge_weighted_tikhonov`` and the unregularized
    case are single quadratic solves.
    """
    grid = acq.grid
    if u0 is None:
        u0 = to_casorati(encoding.adjoint(acq.y, acq)) @ v.conj().T

    if reg.lambda2 <= 0:
        u, _ = solve_u_quadratic(acq, v, u0=u0, tol=tol, max_iter=max_iter)
        return SubspaceModel(u, v, grid)

    if reg.kind == "edge_weighted_tikhonov":
        u, _ = solve_u_quadratic(
            acq,
            v,
            lambda2=2.0 * reg.lambda2,  # weights enter as lambda2 * w / 2 overall
            sparsity_weights=0.5 * reg.edge_weights,
            u0=u0,
            tol=tol,
            max_iter=max_iter,
        )
        return SubspaceModel(u, v, grid)

    u = u0
    eps = reg.irls_eps
    for _ in range(reg.n_irls):
        norms = group_norms(from_casorati(u @ v, grid))
        if eps is None:
            med = float(np.median(norms[norms > 0])) if np.any(norms > 0) else 1.0
            eps = max(1e-6 * med, 1e-30)
        weights = 1.0 / np.maximum(norms, eps)
        # quadratic majorant of the Huber-smoothed 2,1 norm: n^2 * w / 2
        u, _ = solve_u_quadratic(
            acq,
            v,
            lambda2=reg.lambda2,
            sparsity_weights=0.5 * weights,
            u0=u,
            tol=tol,
            max_iter=max_iter,
        )
    return SubspaceModel(u, v, grid)


def sos_reference(series):
    """Sum-of-squares combination across frames, scaled to max 1."""
    sos = np.sqrt(np.sum(np.abs(series) ** 2, axis=0))
    peak = sos.max()
    return sos / peak if peak > 0 else sos


def extract_phase(series, eps=1e-12):
    """Unit-modulus phase maps; 1 where the magnitude is negligible."""
    mag = np.abs(series)
    return np.where(mag > eps, series / np.maximum(mag, eps), 1.0 + 0.0j)


def edge_weights_from_reference(ref):
    """exp(-|grad|^2 / sigma^2) per direction, sigma = median gradient size."""
    g = d_forward(ref[None].astype(complex))[:, 0]  # (2, H, W)
    mag2 = np.abs(g) ** 2
    nz = mag2[mag2 > 0]
    sigma2 = float(np.median(nz)) if nz.size else 1.0
    return np.exp(-mag2 / max(sigma2, 1e-30))
