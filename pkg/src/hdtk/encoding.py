"""Multi-coil Fourier forward model: sampling o FFT o sensitivities.

The sampled data live in a compact per-line layout (values at sampled
phase-encode lines only); the mask is the index authority.  ``forward`` and
``adjoint`` form an exact adjoint pair for every mask / coil / field-map
configuration.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MaskError, ShapeError
from .numerics import fft2


@dataclass
class SamplingMask:
    pattern: np.ndarray  # (T, H) bool: sampled phase-encode lines per TE
    af: float
    center_lines_all_te: int
    center_lines_first_te: int
    seed: int

    @property
    def n_te(self):
        return self.pattern.shape[0]

    @property
    def n_lines(self):
        return self.pattern.shape[1]

    def lines(self, t):
        return np.flatnonzero(self.pattern[t])

    @property
    def max_lines(self):
        return int(self.pattern.sum(axis=1).max())


@dataclass
class AcquisitionData:
    y: np.ndarray  # (C, T, max_lines, W) complex, rows beyond line count zero
    mask: SamplingMask
    sens: np.ndarray  # (C, H, W) complex
    field_map: Optional[np.ndarray] = None  # (H, W) Hz
    times: Optional[np.ndarray] = None  # (T,) seconds, needed with field_map

    @property
    def grid(self):
        return self.sens.shape[1], self.sens.shape[2]

    @property
    def n_coils(self):
        return self.sens.shape[0]


def _center_block(h, n):
    lo = h // 2 - n // 2
    return np.arange(lo, lo + n)


def make_mask(h, af, n_te, center_all=4, center_first=None, seed=0, share_across_te=False):
    """1D random phase-encode mask with a fully sampled central block.

    Each TE gets ``round(h / af)`` lines: the central ``center_all`` block
    plus uniform-random lines outside it (redrawn per TE unless
    ``share_across_te``).  The first TE additionally covers
    ``center_first`` central lines (default: its whole line budget).
    """
    if af < 1:
        raise MaskError("acceleration factor must be >= 1")
    n_keep = int(round(h / af))
    if center_first is None:
        center_first = n_keep
    if center_all > h / af:
        raise MaskError("center block of %d exceeds the per-TE budget %.1f" % (center_all, h / af))
    if n_keep > h or center_first > h:
        raise MaskError("line budget exceeds grid size")
    rng = np.random.default_rng(seed)
    pattern = np.zeros((n_te, h), dtype=bool)
    center = _center_block(h, center_all)
    outside = np.setdiff1d(np.arange(h), center)
    shared = None
    for t in range(n_te):
        pattern[t, center] = True
        n_rand = n_keep - center_all
        if n_rand > 0:
            if share_across_te and shared is not None:
                pick = shared
            else:
                pick = rng.choice(outside, size=n_rand, replace=False)
                if share_across_te:
                    shared = pick
            pattern[t, pick] = True
    first_center = _center_block(h, center_first)
    pattern[0, first_center] = True
    return SamplingMask(pattern, af, center_all, center_first, seed)


def pack_kspace(k_full, mask):
    """(C, T, H, W) full grid -> compact (C, T, max_lines, W)."""
    c, n_te, h, w = k_full.shape
    out = np.zeros((c, n_te, mask.max_lines, w), dtype=complex)
    for t in range(n_te):
        idx = mask.lines(t)
        out[:, t, : idx.size] = k_full[:, t, idx]
    return out


def unpack_kspace(y, mask, h):
    """Compact layout -> zero-filled (C, T, H, W) grid."""
    c, n_te, _, w = y.shape
    out = np.zeros((c, n_te, h, w), dtype=complex)
    for t in range(n_te):
        idx = mask.lines(t)
        out[:, t, idx] = y[:, t, : idx.size]
    return out


def _field_phase(acq):
    # exp(i 2 pi f tau_t), diagonal image-domain phase per time point
    if acq.field_map is None:
        return None
    if acq.times is None:
        raise ShapeError("field_map requires per-frame times")
    return np.exp(2j * np.pi * acq.field_map[None] * np.asarray(acq.times)[:, None, None])


def forward(x, acq):
    """Apply A: per coil and frame, mask o fft2(S_c * x_t), compact layout."""
    h, w = acq.grid
    if x.shape[-2:] != (h, w):
        raise ShapeError("image grid %s does not match acquisition %s" % (x.shape[-2:], (h, w)))
    n_te = acq.mask.n_te
    if x.shape[0] != n_te:
        raise ShapeError("series has %d frames, mask has %d" % (x.shape[0], n_te))
    ph = _field_phase(acq)
    xt = x * ph if ph is not None else x
    k_full = fft2(acq.sens[:, None] * xt[None], "forward")  # (C, T, H, W)
    return pack_kspace(k_full, acq.mask)


def adjoint(y, acq):
    """Apply A^H: embed, inverse FFT, coil-combine with conjugate maps."""
    h, w = acq.grid
    k_full = unpack_kspace(y, acq.mask, h)
    imgs = fft2(k_full, "inverse")
    out = np.sum(np.conj(acq.sens)[:, None] * imgs, axis=0)  # (T, H, W)
    ph = _field_phase(acq)
    if ph is not None:
        out = out * np.conj(ph)
    return out


def normal(x, acq):
    """A^H A in one call (saves one packing round trip)."""
    return adjoint(forward(x, acq), acq)


def navigator_images(acq):
    """Zero-filled reconstruction of the central band shared by all TEs.

    Only the ``center_lines_all_te`` block is used, so every frame sees the
    same k-space support; coil combination uses the conjugate sensitivities.
    """
    h, w = acq.grid
    center = _center_block(h, acq.mask.center_lines_all_te)
    c, n_te = acq.n_coils, acq.mask.n_te
    k_full = unpack_kspace(acq.y, acq.mask, h)
    k_nav = np.zeros_like(k_full)
    k_nav[:, :, center] = k_full[:, :, center]
    imgs = fft2(k_nav, "inverse")
    return np.sum(np.conj(acq.sens)[:, None] * imgs, axis=0)
