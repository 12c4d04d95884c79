"""Rayleigh sequences, tangential traces, and the transparent-boundary operator.

The scattered field above the layer is a sum of upgoing plane-wave modes;
its coefficient vectors (the Rayleigh sequence) live in :class:`RayleighField`.
Tangential data on a horizontal plane lives in :class:`TangentialField`.
The operator realized by :func:`apply_R` maps the rotated tangential trace
``e3 x E`` of an outgoing field to the tangential trace of its curl, per mode:

    (R F)_n = -(1 / (i beta_n)) [k^2 F_n - (alpha_n . F_n) alpha_n].

Its quadratic form splits by mode type: evanescent modes contribute the real
part, propagating modes the (nonnegative) imaginary part.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceViolation, ValidationError
from .lattice import ModeSet

CELL_AREA = 4.0 * np.pi ** 2


def _check_coeffs(modeset: ModeSet, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (modeset.num_modes, 3):
        raise ValidationError("rayleigh_dtn: coefficients must have shape (num_modes, 3)")
    return coeffs


class TangentialField:
    """Tangential Fourier coefficients on a plane x3 = height (third component 0)."""

    def __init__(self, modeset: ModeSet, coeffs, height: float = 0.0):
        coeffs = _check_coeffs(modeset, coeffs)
        if np.any(np.abs(coeffs[:, 2]) > 0):
            raise ValidationError("rayleigh_dtn.TangentialField: third component must be exactly 0")
        self.modeset = modeset
        self.coeffs = coeffs
        self.height = height

    @classmethod
    def from_components(cls, modeset, c1, c2, height: float = 0.0) -> "TangentialField":
        coeffs = np.zeros((modeset.num_modes, 3), dtype=complex)
        coeffs[:, 0] = c1
        coeffs[:, 1] = c2
        return cls(modeset, coeffs, height)

    def cross_e3(self) -> "TangentialField":
        """e3 x F, i.e. (F1, F2, 0) -> (-F2, F1, 0)."""
        out = np.zeros_like(self.coeffs)
        out[:, 0] = -self.coeffs[:, 1]
        out[:, 1] = self.coeffs[:, 0]
        return TangentialField(self.modeset, out, self.height)

    def div_sobolev_norm(self) -> float:
        """H_t^{-1/2}(div) norm: sum (1+|alpha_n|^2)^{-1/2} (|F_n|^2 + |F_n.alpha_n|^2)."""
        ms = self.modeset
        a2 = np.sum(ms.alpha_n ** 2, axis=1)
        dot = np.abs(np.sum(self.coeffs * ms.alpha_n, axis=1)) ** 2
        mag = np.sum(np.abs(self.coeffs) ** 2, axis=1)
        return float(np.sqrt(np.sum((1.0 + a2) ** -0.5 * (mag + dot))))

    def values(self, points) -> np.ndarray:
        """Quasi-periodic values at (x1, x2) points; shape (P, 3)."""
        ms = self.modeset
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        phase = ms.phases(pts) * np.exp(
            1j * (ms.alpha.alpha1 * pts[:, 0] + ms.alpha.alpha2 * pts[:, 1]))[:, None]
        return phase @ self.coeffs

    def __add__(self, other):
        self.modeset.require_same(other.modeset, "rayleigh_dtn.TangentialField.__add__")
        return TangentialField(self.modeset, self.coeffs + other.coeffs, self.height)

    def __sub__(self, other):
        self.modeset.require_same(other.modeset, "rayleigh_dtn.TangentialField.__sub__")
        return TangentialField(self.modeset, self.coeffs - other.coeffs, self.height)

    def __mul__(self, scalar):
        return TangentialField(self.modeset, self.coeffs * scalar, self.height)

    __rmul__ = __mul__


class RayleighField:
    """Rayleigh coefficient vectors E_n over a ModeSet.

    ``direction='up'`` means the field is sum of E_n exp(i(alpha_n.x' +
    beta_n (x3 - height))); ``'down'`` uses -beta_n.  ``height`` is the
    reference plane of the coefficients.
    """

    def __init__(self, modeset: ModeSet, coeffs, height: float = 0.0,
                 direction: str = "up"):
        if direction not in ("up", "down"):
            raise ValidationError("rayleigh_dtn.RayleighField: direction must be 'up' or 'down'")
        self.modeset = modeset
        self.coeffs = _check_coeffs(modeset, coeffs)
        self.height = height
        self.direction = direction

    @property
    def _beta_signed(self):
        s = 1.0 if self.direction == "up" else -1.0
        return s * self.modeset.beta

    def divergence_residuals(self) -> np.ndarray:
        """|alpha_n . E_n + (signed) beta_n E_n3| per mode."""
        ms = self.modeset
        return np.abs(np.sum(self.coeffs[:, :2] * ms.alpha_n[:, :2], axis=1)
                      + self._beta_signed * self.coeffs[:, 2])

    def validate_divergence(self, tol: float = 1e-10) -> None:
        res = self.divergence_residuals()
        scale = np.linalg.norm(self.coeffs, axis=1) + np.max(
            np.abs(self.coeffs), initial=0.0) * 1e-3 + 1e-300
        worst = np.max(res / scale, initial=0.0)
        if worst > tol:
            j = int(np.argmax(res / scale))
            raise DivergenceViolation(
                "rayleigh_dtn.RayleighField: divergence constraint violated at mode "
                f"({self.modeset.n1[j]},{self.modeset.n2[j]}): {worst:.3e} > {tol:g}")

    def rebase(self, height: float) -> "RayleighField":
        """Re-express the coefficients at another reference height."""
        shift = np.exp(1j * self._beta_signed * (height - self.height))
        return RayleighField(self.modeset, self.coeffs * shift[:, None], height, self.direction)

    def tangential(self) -> TangentialField:
        out = self.coeffs.copy()
        out[:, 2] = 0.0
        return TangentialField(self.modeset, out, self.height)

    def values(self, points) -> np.ndarray:
        """Field values at (x1, x2, x3) points; shape (P, 3)."""
        ms = self.modeset
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        phase = ms.phases(pts) * np.exp(
            1j * (ms.alpha.alpha1 * pts[:, 0] + ms.alpha.alpha2 * pts[:, 1]))[:, None]
        vert = np.exp(1j * np.outer(pts[:, 2] - self.height, self._beta_signed))
        return (phase * vert) @ self.coeffs


def inner(a: TangentialField, b: TangentialField) -> complex:
    """L^2_t inner product over the cell, <a, b> = 4 pi^2 sum a_n conj(b_n)."""
    a.modeset.require_same(b.modeset, "rayleigh_dtn.inner")
    return CELL_AREA * complex(np.sum(a.coeffs * np.conj(b.coeffs)))


def apply_R(field: TangentialField, modeset: ModeSet | None = None) -> TangentialField:
    """Apply the transparent-boundary operator mode by mode."""
    if modeset is not None:
        field.modeset.require_same(modeset, "rayleigh_dtn.apply_R")
    ms = field.modeset
    adot = np.sum(field.coeffs * ms.alpha_n, axis=1)
    bracket = ms.k ** 2 * field.coeffs - adot[:, None] * ms.alpha_n
    out = -bracket / (1j * ms.beta)[:, None]
    out[:, 2] = 0.0
    return TangentialField(ms, out, field.height)


def energy_forms(field: TangentialField, modeset: ModeSet | None = None) -> dict:
    """Real/imaginary quadratic forms of R on a tangential field.

    Returns ``{'re_form': ..., 'im_form': ...}`` where the real part sums the
    evanescent modes with weight 1/|beta_n| and the imaginary part sums the
    propagating modes with weight 1/beta_n; the latter is nonnegative.
    """
    if modeset is not None:
        field.modeset.require_same(modeset, "rayleigh_dtn.energy_forms")
    ms = field.modeset
    bracket = (ms.k ** 2 * np.sum(np.abs(field.coeffs) ** 2, axis=1)
               - np.abs(np.sum(field.coeffs * ms.alpha_n, axis=1)) ** 2)
    prop = ms.propagating
    im_form = CELL_AREA * float(np.sum(bracket[prop] / ms.beta[prop].real))
    re_form = CELL_AREA * float(np.sum(bracket[~prop] / np.abs(ms.beta[~prop])))
    return {"re_form": re_form, "im_form": im_form}


def efficiencies(scattered: RayleighField, incidence) -> dict:
    """Diffraction efficiencies of the propagating Rayleigh modes.

    Standard grating normalization: weight beta_n |E_n|^2 / (beta_inc |p|^2)
    per propagating mode, with beta_inc the vertical wavenumber of the
    incident plane wave (the specular mode constant of the shared mode set).
    """
    if scattered.direction != "up":
        raise ValidationError("rayleigh_dtn.efficiencies: scattered field must be upgoing")
    scattered.validate_divergence()
    ms = scattered.modeset
    beta_inc = ms.beta[ms.mode0].real
    pnorm = float(np.sum(np.abs(np.asarray(incidence.p, dtype=complex)) ** 2))
    if pnorm == 0.0:
        raise ValidationError("rayleigh_dtn.efficiencies: zero incident polarization")
    prop = np.flatnonzero(ms.propagating)
    weights = {}
    for j in prop:
        e = float(ms.beta[j].real * np.sum(np.abs(scattered.coeffs[j]) ** 2)
                  / (beta_inc * pnorm))
        weights[(int(ms.n1[j]), int(ms.n2[j]))] = e
    return weights


def write_rayleigh_csv(field: RayleighField, path) -> None:
    """Dump a Rayleigh sequence: one row per mode, full-precision floats."""
    ms = field.modeset
    with open(path, "w", newline="") as fh:
        fh.write("n1,n2,re_E1,im_E1,re_E2,im_E2,re_E3,im_E3,re_beta,im_beta,propagating\n")
        for j in range(ms.num_modes):
            c = field.coeffs[j]
            row = [str(ms.n1[j]), str(ms.n2[j])]
            for comp in c:
                row.append(f"{comp.real:.17g}")
                row.append(f"{comp.imag:.17g}")
            row.append(f"{ms.beta[j].real:.17g}")
            row.append(f"{ms.beta[j].imag:.17g}")
            row.append("1" if ms.propagating[j] else "0")
            fh.write(",".join(row) + "\n")
