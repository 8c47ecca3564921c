"""
Steered far-field patterns of a uniform rectangular phased array.

Array-local frame: boresight along +x, the azimuth-dimension elements lie
along +y and the elevation-dimension elements along +z. A look direction
(azimuth, elevation) maps to the unit vector

    (cos el cos az, cos el sin az, sin el)

so the azimuth plane is el = 0 and the elevation plane is az = 0. The front
hemisphere is x >= 0.

Realized gain is directivity with lossless elements: element power pattern
times |array factor|^2, scaled so that the spherical integral of linear gain
is 4*pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import j0

SPEED_OF_LIGHT = 299_792_458.0

# Element cosine-power exponent. One-time calibration for the 2x8 module:
# peak 16.86 dBi, HPBW_E 55.8 deg, azimuth SLL -13.02 dB. Pure peak-gain
# matching would push q to ~0.05, where the 8-element SLL is only -12.8 dB.
DEFAULT_ELEMENT_EXPONENT = 0.75
DEFAULT_BACK_LOBE_DB = -20.0


class PatternError(ValueError):
    """Invalid array, element or steering input."""


@dataclass(frozen=True)
class ArrayGeometry:
    n_elev: int = 2
    n_azim: int = 8
    spacing_wavelengths: float = 0.5
    carrier_hz: float = 62.5e9

    def __post_init__(self):
        if self.n_elev < 1 or self.n_azim < 1:
            raise PatternError("element counts must be >= 1")
        if not self.spacing_wavelengths > 0:
            raise PatternError("spacing_wavelengths must be > 0")
        if not self.carrier_hz > 0:
            raise PatternError("carrier_hz must be > 0")

    @property
    def n_elements(self) -> int:
        return self.n_elev * self.n_azim

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


@dataclass(frozen=True)
class ElementModel:
    exponent_q: float = DEFAULT_ELEMENT_EXPONENT
    back_lobe_floor_db: float = DEFAULT_BACK_LOBE_DB

    def __post_init__(self):
        if not self.exponent_q >= 0:
            raise PatternError("exponent_q must be >= 0")
        if not self.back_lobe_floor_db <= 0:
            raise PatternError("back_lobe_floor_db must be <= 0")

    @property
    def back_lobe_linear(self) -> float:
        return 10.0 ** (self.back_lobe_floor_db / 10.0)

    @property
    def peak_directivity(self) -> float:
        """Boresight directivity of the element alone (linear)."""
        # front: int cos^q dOmega = 2pi/(q+1); back: floor * 2pi
        radiated = 2 * math.pi / (self.exponent_q + 1) + 2 * math.pi * self.back_lobe_linear
        return 4 * math.pi / radiated


@dataclass(frozen=True)
class SteeringCommand:
    azimuth_deg: float = 0.0
    elevation_deg: float = 0.0

    def __post_init__(self):
        for v in (self.azimuth_deg, self.elevation_deg):
            if not math.isfinite(v):
                raise PatternError("steering angles must be finite")
            if not -90.0 <= v <= 90.0:
                raise PatternError(f"steering angle {v} outside [-90, 90]")


BROADSIDE = SteeringCommand(0.0, 0.0)


def direction_cosines(az_deg, el_deg):
    """Unit vector components (x, y, z) for look angles in degrees."""
    az = np.radians(az_deg)
    el = np.radians(el_deg)
    cel = np.cos(el)
    return cel * np.cos(az), cel * np.sin(az), np.sin(el)


def _element_positions(geom: ArrayGeometry):
    """(y, z) element coordinates in wavelengths, centred on the array."""
    d = geom.spacing_wavelengths
    ny = (np.arange(geom.n_azim) - (geom.n_azim - 1) / 2) * d
    nz = (np.arange(geom.n_elev) - (geom.n_elev - 1) / 2) * d
    yy, zz = np.meshgrid(ny, nz, indexing="xy")
    return yy.ravel(), zz.ravel()


def _steering_phases(geom, steer, phase_bits):
    yy, zz = _element_positions(geom)
    _, sy, sz = direction_cosines(steer.azimuth_deg, steer.elevation_deg)
    phase = -2 * np.pi * (yy * sy + zz * sz)
    if phase_bits is not None:
        if phase_bits < 1:
            raise PatternError("phase_bits must be >= 1")
        lsb = 2 * np.pi / 2 ** phase_bits
        phase = np.round(phase / lsb) * lsb
    return yy, zz, phase


def _line_sum(n, d, u, u0):
    pos = (np.arange(n) - (n - 1) / 2) * d
    out = np.zeros(np.shape(u), dtype=complex)
    for x in pos:
        out += np.exp(2j * np.pi * x * (u - u0))
    return out


def _af(geom, steer, uy, uz, phase_bits=None):
    uy = np.asarray(uy, dtype=float)
    uz = np.asarray(uz, dtype=float)
    if phase_bits is None:
        # uniform weights, continuous phase: the lattice sum factorizes
        _, sy, sz = direction_cosines(steer.azimuth_deg, steer.elevation_deg)
        d = geom.spacing_wavelengths
        uy, uz = np.broadcast_arrays(uy, uz)
        return _line_sum(geom.n_azim, d, uy, sy) * _line_sum(geom.n_elev, d, uz, sz)
    yy, zz, phase = _steering_phases(geom, steer, phase_bits)
    out = np.zeros(np.broadcast(uy, uz).shape, dtype=complex)
    for y, z, p in zip(yy, zz, phase):
        out += np.exp(1j * (2 * np.pi * (y * uy + z * uz) + p))
    return out


def array_factor(geom: ArrayGeometry, steer: SteeringCommand, az_deg, el_deg,
                 phase_bits: Optional[int] = None):
    """Complex array factor (phasor sum over all elements).

    Broadside coherent sum is ``n_elev * n_azim``. Accepts scalars or arrays.
    """
    az = np.asarray(az_deg, dtype=float)
    el = np.asarray(el_deg, dtype=float)
    if not (np.all(np.isfinite(az)) and np.all(np.isfinite(el))):
        raise PatternError("look angles must be finite")
    _, uy, uz = direction_cosines(az, el)
    out = _af(geom, steer, uy, uz, phase_bits)
    return out[()] if out.ndim == 0 else out


def _element_power(model: ElementModel, ux):
    """Element power pattern relative to its peak (linear)."""
    ux = np.asarray(ux, dtype=float)
    front = np.clip(ux, 0.0, 1.0) ** model.exponent_q
    return np.where(ux >= 0.0, front, model.back_lobe_linear)


def element_gain(model: ElementModel, az_deg, el_deg):
    """Element gain in dBi, cos^q power pattern, normalized to 4*pi."""
    ux, _, _ = direction_cosines(np.asarray(az_deg, float), np.asarray(el_deg, float))
    with np.errstate(divide="ignore"):
        g = 10 * np.log10(model.peak_directivity * _element_power(model, ux))
    return g[()] if np.ndim(g) == 0 else g


def _raw_power(geom, model, steer, ux, uy, uz, phase_bits):
    af = _af(geom, steer, uy, uz, phase_bits)
    return _element_power(model, ux) * (af.real ** 2 + af.imag ** 2)


@lru_cache(maxsize=None)
def _ring_integral(model: ElementModel, rho: float) -> float:
    """Integral over the sphere of E(u) * exp(j 2 pi Delta . u) for |Delta| = rho.

    E depends only on the angle theta from boresight, so the azimuthal
    integral around boresight collapses to 2 pi J0(2 pi rho sin theta).
    """
    def integrand(theta, weight):
        return weight * j0(2 * math.pi * rho * math.sin(theta)) * math.sin(theta)

    q = model.exponent_q
    front, _ = quad(lambda t: integrand(t, math.cos(t) ** q), 0.0, math.pi / 2,
                    limit=200, epsabs=1e-13, epsrel=1e-11)
    back, _ = quad(lambda t: integrand(t, model.back_lobe_linear), math.pi / 2, math.pi,
                   limit=200, epsabs=1e-13, epsrel=1e-11)
    return 2 * math.pi * (front + back)


@lru_cache(maxsize=4096)
def _normalization(geom, model, steer, phase_bits):
    """4*pi / (spherical integral of element power * |AF|^2)."""
    yy, zz, phase = _steering_phases(geom, steer, phase_bits)
    a = np.exp(1j * phase)
    rho = np.hypot(yy[:, None] - yy[None, :], zz[:, None] - zz[None, :])
    keys = np.round(rho, 12)
    table = {k: _ring_integral(model, float(k)) for k in np.unique(keys)}
    c = np.vectorize(table.__getitem__)(keys)
    total = float(np.real(np.sum(a[:, None] * np.conj(a)[None, :] * c)))
    return 4 * math.pi / total


def gain_dbi(geom: ArrayGeometry, model: ElementModel, steer: SteeringCommand,
             az_deg, el_deg, phase_bits: Optional[int] = None):
    """Realized gain (dBi) of the steered array toward (az, el), any direction."""
    ux, uy, uz = direction_cosines(np.asarray(az_deg, float), np.asarray(el_deg, float))
    p = _raw_power(geom, model, steer, ux, uy, uz, phase_bits)
    norm = _normalization(geom, model, steer, phase_bits)
    with np.errstate(divide="ignore"):
        g = 10 * np.log10(np.maximum(p * norm, 1e-300))
    return g[()] if np.ndim(g) == 0 else g


def gain_toward(geom, model, steer, local_vec, phase_bits=None) -> float:
    """Gain toward a direction given in array-local cartesian coordinates."""
    x, y, z = local_vec
    r = math.sqrt(x * x + y * y + z * z)
    az = math.degrees(math.atan2(y, x))
    el = math.degrees(math.asin(max(-1.0, min(1.0, z / r))))
    return float(gain_dbi(geom, model, steer, az, el, phase_bits))


@dataclass
class RadiationPattern:
    """Realized gain (dBi) sampled on a full-sphere (azimuth, elevation) grid.

    ``grid[i, j]`` is the gain at ``az_deg[i]``, ``el_deg[j]``.
    """

    grid: np.ndarray
    az_deg: np.ndarray
    el_deg: np.ndarray
    az_step_deg: float
    el_step_deg: float
    geom: ArrayGeometry = field(repr=False)
    model: ElementModel = field(repr=False)
    steer: SteeringCommand = field(repr=False)
    phase_bits: Optional[int] = None

    def gain(self, az_deg, el_deg):
        return gain_dbi(self.geom, self.model, self.steer, az_deg, el_deg, self.phase_bits)

    def linear(self) -> np.ndarray:
        return 10.0 ** (self.grid / 10.0)


@dataclass
class PatternStats:
    peak_gain_dbi: float
    peak_direction: Tuple[float, float]
    hpbw_azimuth_deg: Optional[float]
    hpbw_elevation_deg: Optional[float]
    sll_db: Optional[float]


def compute_pattern(geom: ArrayGeometry, model: ElementModel, steer: SteeringCommand,
                    az_step: float = 1.0, el_step: float = 1.0,
                    phase_bits: Optional[int] = None) -> RadiationPattern:
    for s in (az_step, el_step):
        if not 0 < s <= 5:
            raise PatternError(f"angular step {s} outside (0, 5] deg")
    az = np.arange(-180.0, 180.0 - 1e-9, az_step)
    n_el = int(round(180.0 / el_step))
    el = np.linspace(-90.0, 90.0, n_el + 1)
    A, E = np.meshgrid(az, el, indexing="ij")
    grid = gain_dbi(geom, model, steer, A, E, phase_bits)
    return RadiationPattern(grid, az, el, az_step, el_step, geom, model, steer, phase_bits)


def _hpbw(angles, g, i_peak, lo, hi):
    """Width between -3 dB crossings either side of i_peak, or None.

    Crossings are only searched inside [lo, hi] (front hemisphere).
    """
    level = g[i_peak] - 3.0

    def crossing(step):
        i = i_peak
        while True:
            j = i + step
            if j < 0 or j >= len(g) or not lo <= angles[j] <= hi:
                return None
            if g[j] <= level:
                t = (g[i] - level) / (g[i] - g[j])
                return angles[i] + t * (angles[j] - angles[i])
            i = j

    left, right = crossing(-1), crossing(+1)
    if left is None or right is None:
        return None
    return float(right - left)


def _sidelobe(angles, g, i_peak, lo, hi):
    """Highest local maximum outside the first-null main lobe, relative to peak."""
    mask = (angles >= lo) & (angles <= hi)
    idx = np.flatnonzero(mask)
    a, b = idx[0], idx[-1]
    # walk out to the first local minimum on each side
    i = i_peak
    while i > a and g[i - 1] <= g[i]:
        i -= 1
    left_null = i
    i = i_peak
    while i < b and g[i + 1] <= g[i]:
        i += 1
    right_null = i
    best = None
    for k in list(range(a + 1, left_null)) + list(range(right_null + 1, b)):
        if g[k] > g[k - 1] and g[k] >= g[k + 1]:
            if best is None or g[k] > best:
                best = g[k]
    if best is None:
        return None
    return float(best - g[i_peak])


def principal_cuts(p: RadiationPattern, step_deg: Optional[float] = 0.25):
    """Azimuth and elevation cuts through the grid peak.

    Returns ``(peak_dir, (az, g_az), (el, g_el))``. With ``step_deg=None`` the
    cuts are read off the stored grid, otherwise re-evaluated at that step.
    """
    i, j = np.unravel_index(np.argmax(p.grid), p.grid.shape)
    peak_az, peak_el = float(p.az_deg[i]), float(p.el_deg[j])
    if step_deg is None:
        az, g_az = p.az_deg, p.grid[:, j]
        el, g_el = p.el_deg, p.grid[i, :]
    else:
        n = int(round(180.0 / step_deg))
        az = np.linspace(-180.0, 180.0, 2 * n + 1)
        el = np.linspace(-90.0, 90.0, n + 1)
        g_az = p.gain(az, peak_el)
        g_el = p.gain(peak_az, el)
    return (peak_az, peak_el), (az, g_az), (el, g_el)


def pattern_stats(p: RadiationPattern, cut_step_deg: Optional[float] = 0.25) -> PatternStats:
    """Peak gain, principal-cut HPBWs (linear interpolation) and SLL."""
    (peak_az, peak_el), (az, g_az), (el, g_el) = principal_cuts(p, cut_step_deg)
    ia = int(np.argmin(np.abs(az - peak_az)))
    ie = int(np.argmin(np.abs(el - peak_el)))
    hpbw_a = _hpbw(az, g_az, ia, -90.0, 90.0)
    hpbw_e = _hpbw(el, g_el, ie, -90.0, 90.0)
    lobes = [s for s in (_sidelobe(az, g_az, ia, -90.0, 90.0),
                         _sidelobe(el, g_el, ie, -90.0, 90.0)) if s is not None]
    peak = float(max(g_az[ia], g_el[ie], p.grid.max()))
    return PatternStats(
        peak_gain_dbi=peak,
        peak_direction=(peak_az, peak_el),
        hpbw_azimuth_deg=hpbw_a,
        hpbw_elevation_deg=hpbw_e,
        sll_db=max(lobes) if lobes else None,
    )


def peak_gain(geom: ArrayGeometry, model: ElementModel, steer: SteeringCommand,
              phase_bits: Optional[int] = None) -> float:
    """Maximum realized gain of the steered beam.

    Refines around the steering direction with a local search; the element
    pattern pulls the true maximum slightly toward broadside.
    """
    from scipy.optimize import minimize

    def neg(x):
        return -float(gain_dbi(geom, model, steer, x[0], x[1], phase_bits))

    x0 = np.array([steer.azimuth_deg, steer.elevation_deg])
    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"xatol": 1e-4, "fatol": 1e-7, "initial_simplex":
                            [x0, x0 + [0.5, 0.0], x0 + [0.0, 0.5]]})
    return max(-res.fun, -neg(x0))


def scan_loss(geom: ArrayGeometry, model: ElementModel, steer: SteeringCommand,
              phase_bits: Optional[int] = None) -> float:
    """Broadside peak gain minus steered peak gain, in dB."""
    return peak_gain(geom, model, BROADSIDE, phase_bits) - peak_gain(geom, model, steer, phase_bits)


def analytic_hpbw_deg(n: int, spacing_wavelengths: float) -> float:
    """Closed-form broadside beamwidth 0.886 * lambda / (N d)."""
    return math.degrees(0.886 / (n * spacing_wavelengths))
