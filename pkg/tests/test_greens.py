import numpy as np
import pytest

from gratescat import (DipoleDensity, PlaneWaveIncidence, Quasimomentum, build_modeset,
                       green_eval, helmholtz_residual, incident_from_density)
from gratescat.errors import PointsTooClose, ValidationError

K = 1.2
ALPHA = Quasimomentum(0.25, 0.15)
X = np.array([0.4, 0.7, 1.9])
Y = np.array([0.1, 0.3, 0.2])


def test_quasi_periodicity():
    ms = build_modeset(K, ALPHA, 10)
    g = green_eval(X, Y, ms)
    shifted = green_eval(X + np.array([2 * np.pi, 0.0, 0.0]), Y, ms)
    assert abs(shifted - np.exp(2j * np.pi * ALPHA.alpha1) * g) / abs(g) <= 1e-10


def test_tangential_translation_invariance():
    # G depends on the horizontal coordinates only through x' - y'
    ms = build_modeset(K, ALPHA, 8)
    g = green_eval(X, Y, ms)
    shift = np.array([0.83, -0.41, 0.0])
    g2 = green_eval(X + shift, Y + shift, ms)
    assert abs(g2 - g) / abs(g) <= 1e-12


def test_two_truncation_agreement():
    # independent summation at truncations N and 2N agree once the tail is dead
    ms_n = build_modeset(K, ALPHA, 16)
    ms_2n = build_modeset(K, ALPHA, 32)
    g1 = green_eval(X, Y, ms_n)
    g2 = green_eval(X, Y, ms_2n)
    assert abs(g1 - g2) / abs(g2) <= 1e-10


def test_points_too_close():
    ms = build_modeset(K, ALPHA, 4)
    with pytest.raises(PointsTooClose):
        green_eval(np.array([0.4, 0.7, 0.205]), Y, ms)


def test_helmholtz_residual_and_h2_decay():
    ms = build_modeset(K, ALPHA, 10)
    r = helmholtz_residual(X, Y, ms, 1e-3)
    assert r <= 1e-5
    r1 = helmholtz_residual(X, Y, ms, 1e-2)
    r2 = helmholtz_residual(X, Y, ms, 5e-3)
    assert 3.3 <= r1 / r2 <= 4.7  # O(h^2)


def test_residual_truncation_independent():
    # larger separation kills the series tail; h large enough that the
    # finite-difference cancellation noise stays below the comparison level
    xfar = np.array([0.4, 0.7, 2.7])
    r12 = helmholtz_residual(xfar, Y, build_modeset(K, ALPHA, 12), 1e-2)
    r16 = helmholtz_residual(xfar, Y, build_modeset(K, ALPHA, 16), 1e-2)
    assert abs(r12 - r16) <= 1e-10


def test_plane_wave_validation():
    inc = PlaneWaveIncidence.from_angles(1.5, 1.1, 0.3)
    assert abs(np.dot(inc.p, inc.d)) < 1e-12
    with pytest.raises(ValidationError):
        PlaneWaveIncidence(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]), 1.5)  # d3 >= 0
    with pytest.raises(ValidationError):
        PlaneWaveIncidence(np.array([0, 0, 1.0]), np.array([0, 0, -1.0]), 1.5)  # p.d != 0


def _single_mode_density(ms, height, n1, n2, vec):
    coeffs = np.zeros((ms.num_modes, 3), dtype=complex)
    coeffs[ms.index_of(n1, n2), :2] = vec
    return DipoleDensity(ms, height, coeffs)


def test_incident_zero_mode_closed_form():
    # g with the single mode g_0 = (1,0,0) at alpha = 0: kappa_0 = (0,0,-k),
    # so the double-curl bracket collapses to k^2 (1,0,0).
    k = 1.3
    ms = build_modeset(k, Quasimomentum(0.0, 0.0), 3)
    a = 1.5
    inc = incident_from_density(_single_mode_density(ms, a, 0, 0, (1.0, 0.0)), ms)
    w = np.exp(1j * k * a) / (2j * k)
    expected = w * k * k * np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(inc.coeffs[ms.mode0], expected, rtol=1e-14)
    other = np.delete(inc.coeffs, ms.mode0, axis=0)
    assert np.max(np.abs(other)) == 0.0


def test_incident_divergence_free_and_downgoing():
    rng = np.random.default_rng(5)
    ms = build_modeset(K, ALPHA, 4)
    coeffs = np.zeros((ms.num_modes, 3), dtype=complex)
    coeffs[:, :2] = rng.normal(size=(ms.num_modes, 2)) + 1j * rng.normal(size=(ms.num_modes, 2))
    inc = incident_from_density(DipoleDensity(ms, 1.4, coeffs), ms)
    assert inc.direction == "down"
    kappa = ms.alpha_n.astype(complex).copy()
    kappa[:, 2] = -ms.beta
    div = np.abs(np.sum(kappa * inc.coeffs, axis=1))
    assert np.max(div / np.max(np.abs(inc.coeffs))) <= 1e-12


def test_incident_matches_quadrature_oracle():
    # Trapezoid quadrature of the sheet integral, exact for band-limited
    # densities: per Green's mode n the x-dependence is a downgoing plane wave
    # with kappa_n = alpha_n - beta_n e3, so the double curl acts in closed
    # form under the integral and only the y'-quadrature remains.
    rng = np.random.default_rng(8)
    N = 4
    ms = build_modeset(K, ALPHA, N)
    a = 1.4
    coeffs = np.zeros((ms.num_modes, 3), dtype=complex)
    coeffs[:, :2] = rng.normal(size=(ms.num_modes, 2)) + 1j * rng.normal(size=(ms.num_modes, 2))
    dens = DipoleDensity(ms, a, coeffs)
    inc = incident_from_density(dens, ms)

    xpt = np.array([0.7, 1.1, 0.3])
    value = inc.values(xpt[None, :])[0]

    G = 4 * N + 3
    t = 2 * np.pi * np.arange(G) / G
    Y1, Y2 = np.meshgrid(t, t, indexing="ij")
    ypts = np.column_stack([Y1.ravel(), Y2.ravel()])
    phase_y = np.exp(1j * (np.outer(ypts[:, 0], ms.alpha_n[:, 0])
                           + np.outer(ypts[:, 1], ms.alpha_n[:, 1])))
    gvals = phase_y @ coeffs  # density values at the grid points
    oracle = np.zeros(3, dtype=complex)
    for j in range(ms.num_modes):
        kappa = np.array([ms.alpha_n[j, 0], ms.alpha_n[j, 1], -ms.beta[j]], dtype=complex)
        xphase = np.exp(1j * (kappa[0] * xpt[0] + kappa[1] * xpt[1] + kappa[2] * xpt[2]))
        coef = xphase * np.exp(1j * ms.beta[j] * a) / (1j * ms.beta[j]) / (8 * np.pi ** 2)
        yphase = np.exp(-1j * (ms.alpha_n[j, 0] * ypts[:, 0] + ms.alpha_n[j, 1] * ypts[:, 1]))
        gbar = yphase @ gvals * (2 * np.pi / G) ** 2
        oracle += coef * (K ** 2 * gbar - np.dot(kappa, gbar) * kappa)
    assert np.max(np.abs(value - oracle)) / np.max(np.abs(value)) <= 1e-8
