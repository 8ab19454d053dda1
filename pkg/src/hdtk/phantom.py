"""Synthetic ground truth: ellipse phantoms, decay series, coils, noise.

Every generator here is deterministic given its seed, so whole pipelines can
be reproduced byte for byte.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import RankError, SpecError
from .numerics import svd_truncated


@dataclass
class Ellipse:
    cx: float
    cy: float
    ax: float  # semi-axis along the (rotated) x direction, normalized units
    ay: float
    angle: float  # radians
    rho0: float
    t2: float  # ms


@dataclass
class PhantomSpec:
    grid: int
    ellipses: list
    seed: int = 0


@dataclass
class TissueMaps:
    proton_density: np.ndarray  # (H, W) real >= 0
    t2_map: np.ndarray  # (H, W) ms, 0 outside support
    support_mask: np.ndarray  # (H, W) bool, true exactly where rho0 > 0


@dataclass
class NoiseModel:
    sigma: float
    seed: int = 0


def _pixel_grid(h, w):
    # pixel centers in normalized [-1, 1] coordinates
    ys = (np.arange(h) + 0.5) / h * 2.0 - 1.0
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    return np.meshgrid(ys, xs, indexing="ij")


def ellipse_contains(e, y, x):
    """Analytic membership test in normalized coordinates."""
    ca, sa = np.cos(e.angle), np.sin(e.angle)
    xr = ca * (x - e.cx) + sa * (y - e.cy)
    yr = -sa * (x - e.cx) + ca * (y - e.cy)
    return (xr / e.ax) ** 2 + (yr / e.ay) ** 2 <= 1.0


def render_tissue(spec):
    """Paint ellipses in order; later ellipses overwrite earlier ones."""
    if not spec.ellipses:
        raise SpecError("phantom spec needs at least one ellipse")
    h = w = spec.grid
    yy, xx = _pixel_grid(h, w)
    rho = np.zeros((h, w))
    t2 = np.zeros((h, w))
    for e in spec.ellipses:
        inside = ellipse_contains(e, yy, xx)
        rho[inside] = e.rho0
        t2[inside] = e.t2
    support = rho > 0
    t2 = np.where(support, t2, 0.0)
    return TissueMaps(rho, t2, support)


def default_phantom_spec(grid=64, seed=0):
    """Brain-like nested-ellipse phantom with exactly three T2 species."""
    return PhantomSpec(
        grid=grid,
        seed=seed,
        ellipses=[
            Ellipse(0.0, 0.02, 0.62, 0.78, 0.0, 0.85, 80.0),  # parenchyma
            Ellipse(-0.14, -0.12, 0.11, 0.26, 0.25, 1.0, 200.0),  # ventricle L
            Ellipse(0.14, -0.12, 0.11, 0.26, -0.25, 1.0, 200.0),  # ventricle R
            Ellipse(-0.26, 0.32, 0.13, 0.10, 0.4, 0.7, 45.0),  # lesion
            Ellipse(0.30, 0.30, 0.09, 0.09, 0.0, 1.0, 200.0),  # cyst
        ],
    )


def random_phantom_spec(seed, grid=64):
    """Jittered member of the default phantom family (same three T2 species
    per subject, jittered values across subjects)."""
    rng = np.random.default_rng(seed)
    j = lambda v, s: v * (1.0 + s * (2.0 * rng.random() - 1.0))
    t2_par = j(80.0, 0.15)
    t2_csf = j(200.0, 0.15)
    t2_les = j(45.0, 0.2)
    ells = [
        Ellipse(
            j(0.0, 0.0) + 0.06 * (2 * rng.random() - 1),
            0.02 + 0.06 * (2 * rng.random() - 1),
            j(0.62, 0.12),
            j(0.78, 0.08),
            0.15 * (2 * rng.random() - 1),
            j(0.85, 0.1),
            t2_par,
        )
    ]
    for sx in (-1.0, 1.0):
        ells.append(
            Ellipse(
                sx * j(0.14, 0.2),
                -0.12 + 0.05 * (2 * rng.random() - 1),
                j(0.11, 0.2),
                j(0.26, 0.15),
                sx * j(0.25, 0.3),
                j(1.0, 0.05),
                t2_csf,
            )
        )
    n_extra = rng.integers(1, 4)
    for _ in range(n_extra):
        kind = rng.integers(0, 2)
        r = j(0.11, 0.35)
        ells.append(
            Ellipse(
                0.45 * (2 * rng.random() - 1),
                0.15 + 0.3 * (2 * rng.random() - 1),
                r,
                j(r, 0.25),
                np.pi * (2 * rng.random() - 1) / 4,
                j(0.75, 0.15) if kind == 0 else j(1.0, 0.05),
                t2_les if kind == 0 else t2_csf,
            )
        )
    return PhantomSpec(grid=grid, ellipses=ells, seed=seed)


def simulate_multi_te(tissue, tes, phase=None):
    """Mono-exponential decay series as (T, H, W) complex images.

    ``x_t = rho0 * exp(-TE_t / T2)``; zero outside support.  ``phase`` may be
    unit-modulus maps of shape (T, H, W) to multiply in.
    """
    tes = np.asarray(tes, dtype=float)
    if np.any(tes <= 0):
        raise SpecError("all echo times must be positive")
    rho = tissue.proton_density
    t2 = np.where(tissue.support_mask, tissue.t2_map, np.inf)
    decay = np.exp(-tes[:, None, None] / t2[None])
    series = (rho[None] * decay).astype(complex)
    series[:, ~tissue.support_mask] = 0.0
    if phase is not None:
        series = series * phase
    return series


def polynomial_phase_maps(h, w, n_maps, seed, max_grad=6.0, te_drift=0.15):
    """Smooth unit-modulus phase maps from degree<=2 polynomials.

    The polynomial coefficients drift slowly across the map index (echo
    time), and the spatial phase gradient stays below ``max_grad`` radians
    per unit length (grid spans [-1, 1]).
    Returns complex maps of shape (n_maps, H, W).
    """
    rng = np.random.default_rng(seed)
    yy, xx = _pixel_grid(h, w)
    base = rng.standard_normal(6)
    drift = rng.standard_normal((n_maps, 6)) * te_drift
    coeffs = base[None, :] + np.cumsum(drift, axis=0)
    monomials = np.stack([np.ones_like(xx), xx, yy, xx * yy, xx**2, yy**2])
    phases = np.einsum("tc,cij->tij", coeffs, monomials)
    # clamp the analytic gradient bound |d phi| <= |c1|+|c3|+2|c4| etc.
    gy, gx = np.gradient(phases, 2.0 / h, 2.0 / w, axis=(1, 2))
    gmax = float(np.max(np.hypot(gx, gy)))
    if gmax > max_grad:
        phases *= max_grad / gmax
    return np.exp(1j * phases)


def simulate_coils(h, w, n_coils, uniform=False, normalize=True):
    """Smooth complex sensitivity maps; deterministic per (h, w, n_coils).

    Gaussian magnitudes centered at evenly spaced points just outside the
    field of view, with a mild coil-specific linear phase.  With
    ``normalize`` the maps are scaled so the sum-of-squares magnitude is 1
    everywhere.
    """
    if n_coils < 1:
        raise SpecError("need at least one coil")
    if uniform:
        if n_coils != 1:
            raise SpecError("uniform sensitivities imply a single coil")
        return np.ones((1, h, w), dtype=complex)
    yy, xx = _pixel_grid(h, w)
    maps = np.empty((n_coils, h, w), dtype=complex)
    width = 0.9
    for c in range(n_coils):
        theta = 2.0 * np.pi * c / n_coils
        cx, cy = 1.15 * np.cos(theta), 1.15 * np.sin(theta)
        mag = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * width**2))
        ph = 0.5 * (np.cos(theta) * xx + np.sin(theta) * yy) + 0.3 * c
        maps[c] = mag * np.exp(1j * ph)
    if normalize:
        sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
        maps /= sos[None]
    return maps


def add_noise(arr, nm):
    """Add i.i.d. Gaussian noise to real and imaginary parts independently."""
    if nm.sigma < 0:
        raise SpecError("sigma must be >= 0")
    if nm.sigma == 0:
        return np.array(arr, copy=True)
    rng = np.random.default_rng(nm.seed)
    noise = rng.standard_normal(arr.shape) + 1j * rng.standard_normal(arr.shape)
    return arr + nm.sigma * noise


def simulate_coefficient_series(tissue, rank, n_t, seed=0):
    """Exact rank-``rank`` spatiotemporal series for the coefficient mode.

    Spatial maps are tissue-dependent mixtures with smooth polynomial phase;
    the temporal basis rows are orthonormalized decaying oscillations (FID
    flavor).  Returns ``(series (T,H,W), v_true (rank,T))`` with
    ``series == U_true V_true`` by construction.
    """
    if rank > n_t:
        raise RankError("rank %d exceeds %d time points" % (rank, n_t))
    h, w = tissue.proton_density.shape
    rng = np.random.default_rng(seed)
    rho = tissue.proton_density
    t2 = tissue.t2_map
    t2n = np.where(tissue.support_mask, t2 / max(t2.max(), 1.0), 0.0)
    yy, xx = _pixel_grid(h, w)
    # tissue-dependent mixtures: distinct spatial contrasts, common support
    candidates = [
        rho,
        rho * t2n,
        rho * (1.0 - 0.8 * t2n),
        rho * (0.4 + 0.6 * np.cos(1.5 * xx + 0.8)),
        rho * (0.4 + 0.6 * np.sin(1.3 * yy - 0.4)),
    ]
    phases = polynomial_phase_maps(h, w, rank, seed=seed + 17, max_grad=4.0)
    u_maps = np.stack(
        [candidates[r % len(candidates)] * phases[r] for r in range(rank)]
    )
    u_maps[:, ~tissue.support_mask] = 0.0

    t = np.arange(n_t, dtype=float)
    raw = np.empty((rank, n_t), dtype=complex)
    for r in range(rank):
        tau = n_t / (1.5 + 1.1 * r)
        omega = (0.35 + 0.5 * r + 0.1 * rng.random()) * 2.0 * np.pi / n_t
        raw[r] = np.exp((-1.0 / tau + 1j * omega) * t)
    # orthonormal rows via QR of the transposed stack
    q, _ = np.linalg.qr(raw.conj().T)
    v_true = q.conj().T[:rank]
    scales = 1.0 / (1.0 + 0.6 * np.arange(rank))
    series = np.einsum("rhw,rt->thw", u_maps * scales[:, None, None], v_true)
    return series, v_true


def casorati_rank_profile(series, k=None):
    """Singular values of the Casorati matrix of a (T, H, W) series."""
    t = series.shape[0]
    mat = series.reshape(t, -1).T
    k = k or min(mat.shape)
    _, s, _ = svd_truncated(mat, k)
    return s
