import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavabs.array_engine import (
    BROADSIDE,
    ArrayGeometry,
    ElementModel,
    PatternError,
    SteeringCommand,
    analytic_hpbw_deg,
    array_factor,
    compute_pattern,
    element_gain,
    gain_dbi,
    pattern_stats,
    peak_gain,
    scan_loss,
)

ISOTROPIC = ElementModel(0.0, 0.0)


def phasor_sum(geom, steer, az, el, phase_bits=None):
    """Direct element-by-element sum, written independently of the library."""
    az, el = math.radians(az), math.radians(el)
    uy, uz = math.cos(el) * math.sin(az), math.sin(el)
    s_az, s_el = math.radians(steer.azimuth_deg), math.radians(steer.elevation_deg)
    sy, sz = math.cos(s_el) * math.sin(s_az), math.sin(s_el)
    d = geom.spacing_wavelengths
    total = 0j
    for m in range(geom.n_elev):
        for n in range(geom.n_azim):
            y = (n - (geom.n_azim - 1) / 2) * d
            z = (m - (geom.n_elev - 1) / 2) * d
            ph = -2 * math.pi * (y * sy + z * sz)
            if phase_bits is not None:
                lsb = 2 * math.pi / 2 ** phase_bits
                ph = round(ph / lsb) * lsb
            total += np.exp(1j * (2 * math.pi * (y * uy + z * uz) + ph))
    return total


def sphere_integral(p):
    lin = p.linear()
    el = np.radians(p.el_deg)
    ring = np.trapezoid(lin * np.cos(el)[None, :], el, axis=1)
    return ring.sum() * math.radians(p.az_step_deg)


# -- frozen reference values ---------------------------------------------------------

def test_default_pattern_statistics_frozen():
    s = pattern_stats(compute_pattern(ArrayGeometry(), ElementModel(), BROADSIDE))
    assert s.peak_gain_dbi == pytest.approx(16.8602, abs=1e-3)
    assert s.hpbw_azimuth_deg == pytest.approx(12.7389, abs=1e-3)
    assert s.hpbw_elevation_deg == pytest.approx(55.8307, abs=1e-3)
    assert s.sll_db == pytest.approx(-13.0221, abs=1e-3)
    assert s.peak_direction == (0.0, 0.0)


def test_element_gain_closed_form():
    # cos^q front lobe plus a flat back lobe: D0 = 4pi / (2pi/(q+1) + 2pi*floor)
    m = ElementModel(0.75, -20.0)
    d0 = 10 * math.log10(2 / (1 / 1.75 + 0.01))
    assert element_gain(m, 0.0, 0.0) == pytest.approx(d0, abs=1e-12)
    assert element_gain(m, 180.0, 0.0) == pytest.approx(d0 - 20.0, abs=1e-12)
    assert element_gain(m, 60.0, 0.0) == pytest.approx(d0 + 7.5 * math.log10(0.5), abs=1e-9)


def test_isotropic_single_element_is_zero_dbi():
    g = ArrayGeometry(1, 1)
    az, el = np.meshgrid(np.linspace(-180, 180, 13), np.linspace(-90, 90, 7))
    assert np.allclose(gain_dbi(g, ISOTROPIC, BROADSIDE, az, el), 0.0, atol=1e-9)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_half_wave_isotropic_line_directivity_is_n(n):
    # mutual terms sin(pi k)/(pi k) vanish at half-wave spacing
    g = ArrayGeometry(1, n)
    assert float(gain_dbi(g, ISOTROPIC, BROADSIDE, 0.0, 0.0)) == pytest.approx(
        10 * math.log10(n), abs=1e-6)


def test_broadside_array_factor_is_coherent_sum():
    assert abs(array_factor(ArrayGeometry(), BROADSIDE, 0.0, 0.0)) == pytest.approx(16.0)


@given(az=st.floats(-180, 180), el=st.floats(-90, 90),
       saz=st.floats(-60, 60), sel=st.floats(-60, 60),
       ne=st.integers(1, 3), na=st.integers(1, 9), bits=st.sampled_from([None, 1, 2, 3, 6]))
@settings(max_examples=150, deadline=None)
def test_array_factor_matches_direct_phasor_sum(az, el, saz, sel, ne, na, bits):
    g = ArrayGeometry(ne, na, 0.5)
    s = SteeringCommand(saz, sel)
    assert array_factor(g, s, az, el, bits) == pytest.approx(phasor_sum(g, s, az, el, bits), abs=1e-9)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_line_array_nulls(n):
    g = ArrayGeometry(1, n)
    for k in range(1, n):
        u = k / (n * 0.5)
        if u >= 1:
            break
        az = math.degrees(math.asin(u))
        assert abs(array_factor(g, BROADSIDE, az, 0.0)) < 1e-6 * n
        assert abs(phasor_sum(g, BROADSIDE, az, 0.0)) < 1e-6 * n


# -- normalization ---------------------------------------------------------------

@pytest.mark.parametrize("ne,na,d,saz,sel,q", [
    (2, 8, 0.5, 0, 0, 0.75),
    (1, 4, 0.5, 30, 0, 1.0),
    (4, 4, 0.6, -20, 15, 0.0),
    (2, 8, 0.4, 45, -10, 2.0),
])
def test_grid_integral_is_four_pi(ne, na, d, saz, sel, q):
    p = compute_pattern(ArrayGeometry(ne, na, d), ElementModel(q, -20.0), SteeringCommand(saz, sel))
    assert sphere_integral(p) == pytest.approx(4 * math.pi, rel=2e-3)


def test_quantized_phase_still_normalized():
    p = compute_pattern(ArrayGeometry(), ElementModel(), SteeringCommand(23.0, 7.0), phase_bits=2)
    assert sphere_integral(p) == pytest.approx(4 * math.pi, rel=2e-3)


# -- steering behaviour -------------------------------------------------------------

def test_scan_loss_monotone_and_frozen():
    g, m = ArrayGeometry(), ElementModel()
    losses = [scan_loss(g, m, SteeringCommand(a, 0.0)) for a in range(0, 61, 5)]
    assert losses[0] == pytest.approx(0.0, abs=1e-9)
    assert all(b >= a - 1e-9 for a, b in zip(losses, losses[1:]))
    assert losses[6] == pytest.approx(0.6279, abs=2e-3)
    assert losses[12] == pytest.approx(1.9782, abs=2e-3)


def test_steered_peak_follows_command():
    p = compute_pattern(ArrayGeometry(), ElementModel(), SteeringCommand(30.0, 0.0), 0.5, 0.5)
    s = pattern_stats(p)
    assert abs(s.peak_direction[0] - 30.0) <= 1.0


def test_quantization_costs_gain_off_grid():
    g, m = ArrayGeometry(), ElementModel()
    s = SteeringCommand(17.0, 0.0)
    assert peak_gain(g, m, s, phase_bits=1) < peak_gain(g, m, s)
    # broadside phases are all zero, so quantization is lossless
    assert peak_gain(g, m, BROADSIDE, phase_bits=2) == pytest.approx(peak_gain(g, m, BROADSIDE))


def test_analytic_hpbw():
    assert analytic_hpbw_deg(8, 0.5) == pytest.approx(12.691, abs=1e-3)


def test_large_line_array_hpbw_tracks_closed_form():
    s = pattern_stats(compute_pattern(ArrayGeometry(1, 16), ElementModel(), BROADSIDE), 0.05)
    assert s.hpbw_azimuth_deg == pytest.approx(analytic_hpbw_deg(16, 0.5), abs=0.1)


# -- validation -------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(n_elev=0), dict(n_azim=-1), dict(spacing_wavelengths=0),
                                dict(carrier_hz=-1.0)])
def test_geometry_rejects_bad_values(kw):
    with pytest.raises(PatternError):
        ArrayGeometry(**kw)


@pytest.mark.parametrize("az,el", [(91, 0), (0, -90.5), (math.nan, 0), (0, math.inf)])
def test_steering_bounds(az, el):
    with pytest.raises(PatternError):
        SteeringCommand(az, el)


@pytest.mark.parametrize("step", [0.0, -1.0, 5.5])
def test_pattern_step_bounds(step):
    with pytest.raises(PatternError):
        compute_pattern(ArrayGeometry(), ElementModel(), BROADSIDE, az_step=step)


def test_nonfinite_look_angle_rejected():
    with pytest.raises(PatternError):
        array_factor(ArrayGeometry(), BROADSIDE, math.nan, 0.0)


def test_element_model_bounds():
    with pytest.raises(PatternError):
        ElementModel(-1.0)
    with pytest.raises(PatternError):
        ElementModel(1.0, 3.0)
    assert ElementModel(1.0, -math.inf).back_lobe_linear == 0.0
