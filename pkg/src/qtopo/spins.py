"""Spin textures over the Brillouin zone and their augmentations.

Grid convention: site index i = 1..L maps to k_i = -pi + 2 pi i / L, so the
grid covers (-pi, pi] and contains both Gamma and (pi, pi) when L is even.
Arrays are indexed ``[ix, iy]`` with the 0-based index ``ix = i - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from . import rng as seeds
from .errors import DomainError, GapClosedError, IllConditionedError, DegenerateTripleError
from .quaternion import random_unit, rotate_vectors

DEFAULT_L = 40
GAP_TOL = 1e-9
NOISE_SITES = 30
NOISE_SD = 0.1 * np.pi
MAX_NOISE_ATTEMPTS = 100


class Family(IntEnum):
    """Family tag, stored as a u8 in dataset files."""

    CHERN = 0
    VORTEX_YZ = 1
    VORTEX_XZ = 2
    VORTEX_XY = 3
    FLIP_Z = 4
    SWAP_YZ = 5
    HELICAL = 6
    CONICAL = 7
    FM = 8


VORTEX_PLANES = {"yz": Family.VORTEX_YZ, "xz": Family.VORTEX_XZ, "xy": Family.VORTEX_XY}


@dataclass
class HField:
    """Raw Bloch vectors h(k) on the L x L grid."""

    data: np.ndarray
    c: int = 0
    m: float = 0.0

    @property
    def L(self) -> int:
        return self.data.shape[0]

    @property
    def min_norm(self) -> float:
        return float(np.min(np.linalg.norm(self.data, axis=-1)))


@dataclass
class SpinTexture:
    data: np.ndarray  # (L, L, 3) unit vectors
    family: Family = Family.CHERN
    c: int = 0
    m: float = 0.0
    label: int | None = None
    augmentation: dict = field(default_factory=dict)
    ill_conditioned: bool = False

    @property
    def L(self) -> int:
        return self.data.shape[0]

    def copy(self, **changes) -> "SpinTexture":
        changes.setdefault("data", self.data.copy())
        changes.setdefault("augmentation", dict(self.augmentation))
        return replace(self, **changes)


def momenta(L: int = DEFAULT_L) -> np.ndarray:
    return -np.pi + 2.0 * np.pi * np.arange(1, L + 1) / L


def k_grid(L: int = DEFAULT_L) -> tuple[np.ndarray, np.ndarray]:
    k = momenta(L)
    return np.meshgrid(k, k, indexing="ij")


def h_field(c: int, m: float, k) -> np.ndarray:
    """Bloch vector of the order-c Chern model at one or many momenta.

    ``k`` has shape (..., 2); the result has shape (..., 3).
    """
    if c < 1:
        raise DomainError(f"vorticity c must be a positive integer, got {c}")
    k = np.asarray(k, dtype=float)
    kx, ky = k[..., 0], k[..., 1]
    z = (np.sin(kx) - 1j * np.sin(ky)) ** int(c)
    return np.stack([z.real, -z.imag, np.cos(kx) + np.cos(ky) + m], axis=-1)


def h_grid(c: int, m: float, L: int = DEFAULT_L) -> HField:
    KX, KY = k_grid(L)
    return HField(h_field(c, m, np.stack([KX, KY], axis=-1)), c=c, m=m)


def normalize(h: np.ndarray, tol: float = GAP_TOL) -> np.ndarray:
    nrm = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(nrm < tol):
        bad = np.argwhere(nrm[..., 0] < tol)
        raise GapClosedError(f"|h| < {tol:g} at {len(bad)} site(s), first at index {tuple(bad[0])}")
    return h / nrm


def eq4_label(c: int, m: float) -> int:
    """Chern number of the order-c model in the continuum: sgn(m) c inside |m| < 2."""
    if m == 0 or abs(m) == 2:
        raise GapClosedError(f"m={m} sits on a phase boundary")
    return int(np.sign(m)) * c if abs(m) < 2 else 0


def texture(c: int, m: float, L: int = DEFAULT_L) -> SpinTexture:
    h = h_grid(c, m, L)
    n = normalize(h.data)
    return SpinTexture(n, Family.CHERN, c=c, m=float(m), label=eq4_label(c, m))


def vortex_texture(plane: str, c: int, m: float = 0.0, L: int = DEFAULT_L) -> SpinTexture:
    """Planar vortex: one component of the Chern-model h zeroed.

    The xy variant vanishes exactly at the four high-symmetry sites; those
    vortex cores are given the in-plane direction (1, 0, 0) so the texture
    stays planar.  Any other zero of h is a gap-closed error.
    """
    try:
        family = VORTEX_PLANES[plane]
    except KeyError:
        raise DomainError(f"plane must be one of {sorted(VORTEX_PLANES)}, got {plane!r}") from None
    h = h_grid(c, m, L).data
    axis = {"yz": 0, "xz": 1, "xy": 2}[plane]
    h[..., axis] = 0.0
    if plane == "xy":
        core = np.linalg.norm(h, axis=-1) < GAP_TOL
        h[core] = (1.0, 0.0, 0.0)
    n = normalize(h)
    return SpinTexture(n, family, c=c, m=float(m), label=0)


def helical_conical(eps: float, L: int = DEFAULT_L) -> SpinTexture:
    if not abs(eps) < 1:
        raise DomainError(f"|eps| must be < 1, got {eps}")
    KX, KY = k_grid(L)
    s = np.sqrt(1.0 - eps * eps)
    n = np.stack([s * np.cos(KX + KY), s * np.sin(KX + KY), np.full_like(KX, eps)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    family = Family.HELICAL if eps == 0 else Family.CONICAL
    return SpinTexture(n, family, c=0, m=float(eps), label=0)


def fm_texture(s: int = 1, L: int = DEFAULT_L) -> SpinTexture:
    if s not in (1, -1):
        raise DomainError(f"FM polarization must be +1 or -1, got {s}")
    n = np.zeros((L, L, 3))
    n[..., 2] = s
    return SpinTexture(n, Family.FM, c=0, m=float(s), label=0)


def _relabel(t: SpinTexture) -> SpinTexture:
    from .chern import chern_number

    try:
        res = chern_number(t)
        t.label, t.ill_conditioned = res.value, False
    except IllConditionedError as exc:
        t.label, t.ill_conditioned = exc.value, True
    return t


def flip_z(t: SpinTexture) -> SpinTexture:
    """Negate the z component.  The label is recomputed by the lattice oracle."""
    out = t.copy(family=Family.FLIP_Z if t.family == Family.CHERN else t.family)
    out.data[..., 2] *= -1.0
    return _relabel(out)


def swap_yz(t: SpinTexture) -> SpinTexture:
    """Exchange the y and z components.  The label is recomputed by the oracle."""
    out = t.copy(family=Family.SWAP_YZ if t.family == Family.CHERN else t.family)
    out.data = out.data[..., [0, 2, 1]].copy()
    return _relabel(out)


# ---------------------------------------------------------------------------
# augmentation


def translate(t: SpinTexture, shift) -> SpinTexture:
    sx, sy = (int(s) for s in shift)
    out = t.copy(data=np.roll(t.data, (-sx, -sy), axis=(0, 1)))
    out.augmentation["shift"] = (sx, sy)
    return out


def rotate(t: SpinTexture, q) -> SpinTexture:
    q = np.asarray(q, dtype=float)
    out = t.copy(data=rotate_vectors(q, t.data))
    out.data /= np.linalg.norm(out.data, axis=-1, keepdims=True)
    out.augmentation["rotation"] = tuple(float(x) for x in q)
    return out


def add_site_noise(t: SpinTexture, rng: np.random.Generator, sites: int = NOISE_SITES,
                   sd: float = NOISE_SD) -> tuple[SpinTexture, np.ndarray]:
    """Add Gaussian noise to ``sites`` distinct sites, then renormalize.

    Raises GapClosedError if a perturbed spin comes within GAP_TOL of zero.
    """
    L = t.L
    flat = rng.choice(L * L, size=sites, replace=False)
    idx = np.unravel_index(flat, (L, L))
    noisy = t.data.copy()
    noisy[idx] += rng.normal(0.0, sd, size=(sites, 3))
    noisy[idx] = normalize(noisy[idx])
    return t.copy(data=noisy), flat


def augment(t: SpinTexture, seed: int, translate_: bool = True, rotate_: bool = True,
            noise: bool = True, noise_sites: int = NOISE_SITES, noise_sd: float = NOISE_SD,
            preserve_label: bool = True) -> SpinTexture:
    """Random translation, global rotation and site noise, in that order.

    Each step draws from its own sub-stream of ``seed``.  A noise draw that
    closes the gap (or, with ``preserve_label``, changes the lattice Chern
    number) is redrawn from the next sub-stream.
    """
    from .chern import chern_number

    out = t.copy()
    out.augmentation["seed"] = int(seed)
    if translate_:
        shift = seeds.generator(seed, seeds.SUB_TRANSLATE).integers(0, t.L, size=2)
        out = translate(out, shift)
    if rotate_:
        q = random_unit(seeds.generator(seed, seeds.SUB_ROTATE))
        out = rotate(out, q)
    if not noise:
        return out
    check = preserve_label and t.label is not None
    for attempt in range(MAX_NOISE_ATTEMPTS):
        gen = seeds.generator(seed, seeds.SUB_NOISE, attempt)
        try:
            noisy, sites = add_site_noise(out, gen, noise_sites, noise_sd)
            if check and chern_number(noisy).value != t.label:
                continue
        except (GapClosedError, IllConditionedError, DegenerateTripleError):
            continue
        noisy.augmentation["noise_attempt"] = attempt
        noisy.augmentation["noise_sites"] = tuple(int(s) for s in sites)
        return noisy
    raise GapClosedError(f"site noise failed {MAX_NOISE_ATTEMPTS} times for seed {seed}")
