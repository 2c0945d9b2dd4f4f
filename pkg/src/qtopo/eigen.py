"""Gauge-fixed two-band eigenstates, their quaternion encoding, and the map F(p).

For H = h . sigma the eigenstates are fixed in two patches selected by the
sign of h3:

    h3 >= 0:  u+ ~ (|h| + h3, h1 + i h2),   u- ~ (-h1 + i h2, |h| + h3)
    h3 <  0:  u+ ~ (h1 - i h2, |h| - h3),   u- ~ (|h| - h3, -h1 - i h2)

each normalized by sqrt(2 |h| (|h| +- h3)).  Neither patch has a
singularity inside its domain; at h1 = h2 = 0 they reduce to u- = (0, 1)
for h3 > 0 and u+ = (0, 1) for h3 < 0.

A spinor (alpha, beta) is encoded as the quaternion
(Re alpha, Im alpha, Re beta, Im beta) and

    F(p) = Re sum_k [q+*(k) q+(p - k) - q-*(k) q-(p - k)]

with p - k wrapped back onto the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spins
from .errors import ConsistencyError, DomainError, GapClosedError
from .quaternion import MULT_TABLE, conj_array, qmul_array

RESIDUE_TOL = 1e-9
_CONJ_SIGN = np.array([1.0, -1.0, -1.0, -1.0])


@dataclass
class FMap:
    values: np.ndarray  # (L, L) real
    residue: float = 0.0  # max |vector part| of the quaternion sum
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.values.shape[0]


def eigenstates(h) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower band spinors for Bloch vector(s) ``h`` of shape (..., 3).

    Returns two complex arrays of shape (..., 2).
    """
    h = np.asarray(h, dtype=float)
    h1, h2, h3 = h[..., 0], h[..., 1], h[..., 2]
    mag = np.linalg.norm(h, axis=-1)
    if np.any(mag == 0.0):
        raise GapClosedError("eigenstates undefined where |h| = 0")
    upper_patch = h3 >= 0
    s = np.where(upper_patch, mag + h3, mag - h3)  # > 0 everywhere
    norm = np.sqrt(2.0 * mag * s)
    w = h1 + 1j * h2
    up = np.where(upper_patch[..., None],
                  np.stack([s + 0j, w], axis=-1),
                  np.stack([np.conj(w), s + 0j], axis=-1))
    dn = np.where(upper_patch[..., None],
                  np.stack([-np.conj(w), s + 0j], axis=-1),
                  np.stack([s + 0j, -w], axis=-1))
    return up / norm[..., None], dn / norm[..., None]


def to_quaternion(u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    alpha, beta = u[..., 0], u[..., 1]
    return np.stack([alpha.real, alpha.imag, beta.real, beta.imag], axis=-1)


def band_quaternions(h) -> tuple[np.ndarray, np.ndarray]:
    up, dn = eigenstates(h)
    return to_quaternion(up), to_quaternion(dn)


# ---------------------------------------------------------------------------
# convolution sums


def _check_grid(q: np.ndarray) -> int:
    L = q.shape[0]
    if q.shape[1] != L or L % 2:
        raise DomainError(f"F(p) needs an even square grid, got {q.shape[:2]}")
    return L


def conv_index(L: int) -> np.ndarray:
    """diff[jp, jk] = grid index of p - k for 0-based indices jp, jk."""
    j = np.arange(L)
    return (j[:, None] - j[None, :] + L // 2 - 1) % L


def quaternion_autoconvolution(q: np.ndarray) -> np.ndarray:
    """sum_k q*(k) q(p - k) for every grid point p, via FFT.  Shape (L, L, 4)."""
    L = _check_grid(q)
    spec = np.fft.fft2(q, axes=(0, 1))
    # pair[..., d, l] = sum_k q_d(k) q_l(p - k), index p - k unshifted
    pair = np.fft.ifft2(spec[..., :, None] * spec[..., None, :], axes=(0, 1)).real
    pair = np.roll(pair, -(L // 2 - 1), axis=(0, 1))
    return np.einsum("sld,d,xydl->xys", MULT_TABLE, _CONJ_SIGN, pair)


def quaternion_autoconvolution_direct(q: np.ndarray) -> np.ndarray:
    """Same sum by explicit quaternion products over all (p, k) pairs, O(L^4)."""
    L = _check_grid(q)
    idx = conv_index(L)
    qc = conj_array(q)
    out = np.empty((L, L, 4))
    for px in range(L):
        rows = idx[px]
        for py in range(L):
            partner = q[rows[:, None], idx[py][None, :]]
            out[px, py] = qmul_array(qc, partner).sum(axis=(0, 1))
    return out


def _finish(total: np.ndarray, meta: dict) -> FMap:
    residue = float(np.max(np.abs(total[..., 1:]))) if total.size else 0.0
    if residue >= RESIDUE_TOL:
        raise ConsistencyError(f"quaternion convolution has imaginary residue {residue:.3g}")
    return FMap(total[..., 0].copy(), residue, meta)


def f_map(h, direct: bool = False, meta: dict | None = None) -> FMap:
    """F(p) over the grid from an HField or raw (L, L, 3) array."""
    data = np.asarray(getattr(h, "data", h), dtype=float)
    spins.normalize(data)  # gap check
    qp, qm = band_quaternions(data)
    conv = quaternion_autoconvolution_direct if direct else quaternion_autoconvolution
    total = conv(qp) - conv(qm)
    info = {"c": getattr(h, "c", None), "m": getattr(h, "m", None)}
    info.update(meta or {})
    return _finish(total, info)


def f_map_pure_spin(t, direct: bool = False) -> FMap:
    """Same convolution with the spins encoded as pure quaternions (0, n)."""
    n = np.asarray(getattr(t, "data", t), dtype=float)
    q = np.concatenate([np.zeros(n.shape[:-1] + (1,)), n], axis=-1)
    conv = quaternion_autoconvolution_direct if direct else quaternion_autoconvolution
    return _finish(conv(q), {"encoding": "pure-spin"})


def spinor_correlation(h) -> np.ndarray:
    """Re sum_k <u(k)|u(p-k)> for the upper minus the lower band, from spinors directly."""
    data = np.asarray(getattr(h, "data", h), dtype=float)
    up, dn = eigenstates(data)
    L = data.shape[0]
    idx = conv_index(L)
    out = np.empty((L, L))
    for px in range(L):
        for py in range(L):
            sel = (idx[px][:, None], idx[py][None, :])
            out[px, py] = (np.sum(np.conj(up) * up[sel]) - np.sum(np.conj(dn) * dn[sel])).real
    return out


def noisy_field(c: int, m: float, sd: float, gen: np.random.Generator,
                L: int = spins.DEFAULT_L, attempts: int = 100) -> spins.HField:
    """Chern-model h with i.i.d. Gaussian noise of width ``sd`` on every component.

    Draws that bring any |h| below the gap tolerance are discarded and redrawn.
    """
    base = spins.h_grid(c, m, L)
    if sd == 0:
        return base
    for _ in range(attempts):
        h = base.data + gen.normal(0.0, sd, size=base.data.shape)
        if np.min(np.linalg.norm(h, axis=-1)) >= spins.GAP_TOL:
            return spins.HField(h, c=c, m=m)
    raise GapClosedError(f"noise closed the gap {attempts} times (c={c}, m={m}, sd={sd})")


# ---------------------------------------------------------------------------
# export


def write_csv(fmap: FMap, path) -> None:
    np.savetxt(path, fmap.values, delimiter=",", fmt="%.17g")


def write_pgm(fmap: FMap, path, flat_tol: float = RESIDUE_TOL) -> None:
    """8-bit binary PGM; the affine map from F to gray levels is in the header comment.

    A map whose range is below ``flat_tol`` is written uniformly mid-gray.
    """
    v = fmap.values
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < flat_tol:
        pixels = np.full(v.shape, 128, dtype=np.uint8)
        scale_note = f"flat map: F in [{lo:.17g}, {hi:.17g}] -> 128"
    else:
        pixels = np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
        scale_note = f"pixel = round(255 * (F - {lo:.17g}) / {hi - lo:.17g})"
    rows, cols = v.shape
    header = f"P5\n# {scale_note}\n{cols} {rows}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())
