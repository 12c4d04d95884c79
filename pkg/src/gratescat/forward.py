"""Layer solver: boundary value problem, DtN map, and full scattering solve.

The medium occupies 0 < x3 < b over a perfectly conducting plane at x3 = 0 and
is resolved as a stack of x3-uniform slabs, each with refractive index
q = q(x1) given by a trigonometric polynomial.  Expanding the field in lattice
modes turns the Maxwell system inside a slab into the first-order transverse
system

    d/dx3 [E_t; H_t] = i [[0, A], [B, 0]] [E_t; H_t],

where (with D1 = diag(alpha1 + n1), D2 = diag(alpha2 + n2), Q the Toeplitz
matrix of q's x1-Fourier coefficients)

    A = [[ D1 Q^-1 D2 / k,  k - D1 Q^-1 D1 / k ],
         [ D2 Q^-1 D2 / k - k,  -D2 Q^-1 D1 / k ]],
    B = [[ -D1 D2 / k,  D1^2 / k - k Q ],
         [ k Q - D2^2 / k,  D2 D1 / k ]],

and the vertical components are recovered algebraically as
E3 = -(1/k) Q^-1 (D1 H2 - D2 H1), H3 = (1/k)(D1 E2 - D2 E1).

Because q depends on x1 only, modes with different n2 never couple: every
matrix above is block diagonal over n2, and all solves run per block.

Eigen-decomposing M^2 = AB per slab gives exponents +/- gamma_j and transverse
profiles; slabs are joined by a reflection-matrix recursion started at the
conducting plate (r = -I), which is the stable S-matrix composition for a
stack with no transmission channel.  Amplitudes are always referenced at the
face where their exponential is largest, so no growing factor is ever formed.

The product Q E uses the plain Laurent rule (direct coefficient convolution);
q enters only as a zeroth-order coefficient here, so no inverse-rule
factorization is warranted.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (EigenFailure, IllConditionedBasis, SingularMatch,
                     TruncationMismatch, ValidationError)
from .lattice import ModeSet
from .rayleigh_dtn import RayleighField, TangentialField

COND_LIMIT = 1e12
_PROFILE_GRID = 512


def _sqrt_up(z):
    """Square root with Im >= 0 (decay upward); positive root on the real axis."""
    g = np.sqrt(np.asarray(z, dtype=complex))
    return np.where(g.imag < 0, -g, g)


class Slab:
    """One x3-uniform layer: thickness and the x1-Fourier coefficients of q."""

    def __init__(self, height: float, coeffs: dict):
        if height <= 0:
            raise ValidationError("forward.Slab: height must be > 0")
        self.height = float(height)
        self.coeffs = {int(j): complex(c) for j, c in coeffs.items() if c != 0}
        if 0 not in self.coeffs:
            self.coeffs[0] = 0.0 + 0.0j
        self.degree = max(abs(j) for j in self.coeffs)

    @property
    def is_uniform(self) -> bool:
        return self.degree == 0

    @property
    def mean(self) -> complex:
        return self.coeffs[0]

    def q_values(self, x1) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(x1.shape, dtype=complex)
        for j, c in self.coeffs.items():
            out += c * np.exp(1j * j * x1)
        return out

    def toeplitz(self, n1_count: int) -> np.ndarray:
        col = np.zeros(n1_count, dtype=complex)
        row = np.zeros(n1_count, dtype=complex)
        for j, c in self.coeffs.items():
            if 0 <= j < n1_count:
                col[j] = c
            if 0 <= -j < n1_count:
                row[-j] = c
        return scipy.linalg.toeplitz(col, row)

    def conjugate(self) -> "Slab":
        return Slab(self.height, {-j: np.conj(c) for j, c in self.coeffs.items()})


class MediumProfile:
    """Refractive index of the layer: a list of slabs, varying in one direction.

    Admissibility: Re q >= gamma > 0 on a sampling grid, and Im q of one sign
    everywhere (nonnegative for physical media; the conjugated profiles used
    by the reciprocity identities have Im q <= 0 and are accepted on the same
    footing, since conjugating the whole problem restores well-posedness).
    """

    def __init__(self, slabs, direction: str = "x1"):
        if direction not in ("x1", "x2"):
            raise ValidationError("forward.MediumProfile: direction must be 'x1' or 'x2'")
        if not slabs:
            raise ValidationError("forward.MediumProfile: need at least one slab")
        self.slabs = list(slabs)
        self.direction = direction
        self.b = float(sum(s.height for s in self.slabs))
        self.one_directional = True
        grid = 2.0 * np.pi * np.arange(_PROFILE_GRID) / _PROFILE_GRID
        samples = np.concatenate([s.q_values(grid) for s in self.slabs])
        self.gamma_lower = float(np.min(samples.real))
        self.q_inf = float(np.max(np.abs(samples)))
        self._im_min = float(np.min(samples.imag))
        self._im_max = float(np.max(samples.imag))

    @classmethod
    def uniform(cls, q0: complex, height: float) -> "MediumProfile":
        return cls([Slab(height, {0: q0})])

    @classmethod
    def from_coeffs(cls, coeffs: dict, height: float, direction: str = "x1") -> "MediumProfile":
        return cls([Slab(height, coeffs)], direction)

    def validate(self, require_absorbing: bool = False) -> None:
        tol = 1e-12 * max(1.0, self.q_inf)
        if self.gamma_lower <= 0:
            raise ValidationError(
                f"forward.MediumProfile: Re q must have a positive lower bound, found {self.gamma_lower:g}")
        if self._im_min < -tol and self._im_max > tol:
            raise ValidationError(
                "forward.MediumProfile: Im q changes sign; neither the profile nor its "
                "conjugate is admissible")
        if require_absorbing and self._im_max <= tol:
            raise ValidationError(
                "forward.MediumProfile: absorbing medium required (Im q > 0 somewhere)")

    @property
    def is_absorbing(self) -> bool:
        return self._im_max > 1e-12 * max(1.0, self.q_inf)

    def conjugate(self) -> "MediumProfile":
        return MediumProfile([s.conjugate() for s in self.slabs], self.direction)

    def slab_bounds(self):
        z = np.concatenate([[0.0], np.cumsum([s.height for s in self.slabs])])
        return z

    def slab_of(self, x3: float) -> int:
        z = self.slab_bounds()
        if x3 < 0 or x3 > self.b:
            raise ValidationError(f"forward.MediumProfile: x3 = {x3:g} outside [0, {self.b:g}]")
        j = int(np.searchsorted(z, x3, side="right")) - 1
        return min(max(j, 0), len(self.slabs) - 1)

    def q_at(self, x1, x3: float) -> np.ndarray:
        return self.slabs[self.slab_of(x3)].q_values(x1)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.direction.encode())
        for s in self.slabs:
            h.update(np.float64(s.height).tobytes())
            for j in sorted(s.coeffs):
                h.update(np.int64(j).tobytes())
                h.update(np.complex128(s.coeffs[j]).tobytes())
        return h.hexdigest()[:16]


class _BlockBasis:
    """Eigen data of the transverse system for one n2 block of one slab."""

    def __init__(self, W, V, gamma, A, B, cond_w):
        self.W = W
        self.V = V
        self.gamma = gamma
        self.A = A
        self.B = B
        self.cond_w = cond_w


class ModalBasis:
    """Per-slab transverse eigenbasis, one block per n2 index."""

    def __init__(self, modeset: ModeSet, slab_index: int, blocks):
        self.modeset = modeset
        self.slab_index = slab_index
        self.blocks = blocks

    def exponents(self) -> np.ndarray:
        """All propagation exponents, both signs, flattened over blocks."""
        g = np.concatenate([blk.gamma for blk in self.blocks])
        return np.concatenate([g, -g])

    def eigen_residual(self) -> float:
        """max_j ||M Phi_j - gamma_j Phi_j|| / ||M|| over the full eigen set."""
        worst = 0.0
        for blk in self.blocks:
            mnorm = max(np.linalg.norm(blk.A, 2), np.linalg.norm(blk.B, 2))
            ra = blk.A @ blk.V - blk.W * blk.gamma[None, :]
            rb = blk.B @ blk.W - blk.V * blk.gamma[None, :]
            res = np.sqrt(np.sum(np.abs(ra) ** 2, axis=0) + np.sum(np.abs(rb) ** 2, axis=0))
            scale = np.sqrt(np.sum(np.abs(blk.W) ** 2, axis=0) + np.sum(np.abs(blk.V) ** 2, axis=0))
            worst = max(worst, float(np.max(res / (scale * mnorm))))
        return worst

    def max_condition(self) -> float:
        return max(blk.cond_w for blk in self.blocks)


def _block_operators(slab: Slab, modeset: ModeSet, n2: int):
    """Assemble A, B (and the Toeplitz factor of q) for one n2 block."""
    ms = modeset
    mb = ms.block_size
    k = ms.k
    a1 = ms.alpha.alpha1 + np.arange(-ms.N, ms.N + 1)
    a2 = ms.alpha.alpha2 + n2
    Q = slab.toeplitz(mb)
    eye = np.eye(mb, dtype=complex)
    if slab.is_uniform:
        q0 = slab.mean
        Qinv = eye / q0
    else:
        try:
            Qinv = np.linalg.inv(Q)
        except np.linalg.LinAlgError as exc:
            raise EigenFailure(f"forward.solve_layer_modes: q Toeplitz factor singular ({exc})")
    d1 = a1
    A = np.zeros((2 * mb, 2 * mb), dtype=complex)
    B = np.zeros((2 * mb, 2 * mb), dtype=complex)
    d1Qinv = d1[:, None] * Qinv
    A[:mb, :mb] = (a2 / k) * d1Qinv
    A[:mb, mb:] = k * eye - (d1Qinv * d1[None, :]) / k
    A[mb:, :mb] = (a2 * a2 / k) * Qinv - k * eye
    A[mb:, mb:] = -(a2 / k) * (Qinv * d1[None, :])
    B[:mb, :mb] = np.diag(-(a2 / k) * d1)
    B[:mb, mb:] = np.diag(d1 * d1 / k) - k * Q
    B[mb:, :mb] = k * Q - (a2 * a2 / k) * eye
    B[mb:, mb:] = np.diag((a2 / k) * d1)
    return A, B, Q


def solve_layer_modes(profile: MediumProfile, slab_index: int, modeset: ModeSet,
                      cond_limit: float = COND_LIMIT) -> ModalBasis:
    """Eigen-decompose the transverse propagation system of one slab.

    For a uniform slab the system is already diagonal and the exponents are
    the mode constants of the shifted wavenumber k^2 -> k^2 q0; otherwise a
    dense eigensolve runs per n2 block.
    """
    if profile.direction != "x1":
        raise ValidationError(
            "forward.solve_layer_modes: solver expects q = q(x1); swap the profile direction first")
    slab = profile.slabs[slab_index]
    ms = modeset
    mb = ms.block_size
    blocks = []
    for n2 in range(-ms.N, ms.N + 1):
        A, B, _ = _block_operators(slab, ms, n2)
        if slab.is_uniform:
            a1 = ms.alpha.alpha1 + np.arange(-ms.N, ms.N + 1)
            a2 = ms.alpha.alpha2 + n2
            g = _sqrt_up(ms.k ** 2 * slab.mean - a1 ** 2 - a2 ** 2)
            gamma = np.concatenate([g, g])
            W = np.eye(2 * mb, dtype=complex)
            V = B / gamma[None, :]
            cond_w = 1.0
        else:
            try:
                w2, W = scipy.linalg.eig(A @ B)
            except Exception as exc:  # LAPACK non-convergence
                raise EigenFailure(f"forward.solve_layer_modes: eigensolve failed ({exc})")
            if not np.all(np.isfinite(w2)):
                raise EigenFailure("forward.solve_layer_modes: non-finite eigenvalues")
            gamma = _sqrt_up(w2)
            if np.any(np.abs(gamma) < 1e-12 * ms.k):
                raise EigenFailure(
                    "forward.solve_layer_modes: vanishing propagation exponent (degenerate slab)")
            V = (B @ W) / gamma[None, :]
            cond_w = float(np.linalg.cond(W))
            if cond_w > cond_limit:
                raise IllConditionedBasis(
                    f"forward.solve_layer_modes: basis condition {cond_w:.2e} exceeds {cond_limit:g}")
        blocks.append(_BlockBasis(W, V, gamma, A, B, cond_w))
    return ModalBasis(ms, slab_index, blocks)


def _solve_guarded(mat, rhs, where: str):
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatch(f"{where}: matching system condition {cond:.2e} exceeds {COND_LIMIT:g}")
    return np.linalg.solve(mat, rhs), float(cond)


class _Stack:
    """Reflection recursion through the slab stack, per n2 block."""

    def __init__(self, profile: MediumProfile, modeset: ModeSet):
        profile.validate()
        if profile.direction != "x1":
            raise ValidationError(
                "forward: solver expects q = q(x1); swap the profile direction first")
        self.profile = profile
        self.modeset = modeset
        self.bases = [solve_layer_modes(profile, j, modeset)
                      for j in range(len(profile.slabs))]
        self.qlu = [scipy.linalg.lu_factor(s.toeplitz(modeset.block_size))
                    for s in profile.slabs]
        self.max_cond = 1.0
        nblk = 2 * modeset.N + 1
        # Per block: list over slabs of (r_bot, r_top, phi); plus top-face maps.
        self.records = []
        self.top_P = []      # W_L (r_top + I)
        self.top_H = []      # V_L (r_top - I)
        for ib in range(nblk):
            recs = []
            r = -np.eye(2 * modeset.block_size, dtype=complex)
            for j, slab in enumerate(profile.slabs):
                blk = self.bases[j].blocks[ib]
                phi = np.exp(1j * blk.gamma * slab.height)
                if j > 0:
                    prev = self.bases[j - 1].blocks[ib]
                    r_prev_top = recs[-1][1]
                    P = prev.W @ (r_prev_top + np.eye(r.shape[0]))
                    Hm = prev.V @ (r_prev_top - np.eye(r.shape[0]))
                    Y, cond = self._admittance(P, Hm)
                    lhs = blk.V - Y @ blk.W
                    rhs = blk.V + Y @ blk.W
                    r, cond2 = _solve_guarded(lhs, rhs, "forward: interface match")
                    self.max_cond = max(self.max_cond, cond, cond2)
                r_top = (phi[:, None] * r) * phi[None, :]
                recs.append((r, r_top, phi))
            self.records.append(recs)
            blk = self.bases[-1].blocks[ib]
            r_top = recs[-1][1]
            eye = np.eye(r_top.shape[0])
            self.top_P.append(blk.W @ (r_top + eye))
            self.top_H.append(blk.V @ (r_top - eye))

    @staticmethod
    def _admittance(P, Hm):
        cond = np.linalg.cond(P)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularMatch(
                f"forward: interface admittance condition {cond:.2e} exceeds {COND_LIMIT:g}")
        return Hm @ np.linalg.inv(P), float(cond)

    def block_tangential(self, coeffs, ib: int) -> np.ndarray:
        """Extract [E1-block; E2-block] from (m, 3) coefficients."""
        sl = self.modeset.block_slice(ib - self.modeset.N)
        return np.concatenate([coeffs[sl, 0], coeffs[sl, 1]])

    def solve_top(self, et_top_blocks):
        """Given tangential E at Gamma_b per block, return amplitudes and H trace."""
        ms = self.modeset
        mb = ms.block_size
        d_blocks = []
        h_blocks = []
        for ib in range(2 * ms.N + 1):
            d, cond = _solve_guarded(self.top_P[ib], et_top_blocks[ib],
                                     "forward.solve_qpbvp: trace match")
            self.max_cond = max(self.max_cond, cond)
            d_blocks.append(d)
            h_blocks.append(self.top_H[ib] @ d)
        return d_blocks, h_blocks

    def downward_amplitudes(self, d_blocks):
        """Per-slab (u, d) amplitude pairs for every block, top slab included."""
        ms = self.modeset
        nsl = len(self.profile.slabs)
        amps = [[None] * nsl for _ in range(2 * ms.N + 1)]
        for ib in range(2 * ms.N + 1):
            recs = self.records[ib]
            d = d_blocks[ib]
            for j in range(nsl - 1, -1, -1):
                r_bot, _, phi = recs[j]
                u = r_bot @ (phi * d)
                amps[ib][j] = (u, d)
                if j > 0:
                    blk = self.bases[j].blocks[ib]
                    et_bot = blk.W @ (u + phi * d)
                    prev = self.bases[j - 1].blocks[ib]
                    P = prev.W @ (recs[j - 1][1] + np.eye(len(u)))
                    d, cond = _solve_guarded(P, et_bot, "forward: downward sweep")
                    self.max_cond = max(self.max_cond, cond)
        return amps


class LayerField:
    """Modal representation of a field inside the layer stack."""

    def __init__(self, stack: _Stack, amplitudes):
        self.stack = stack
        self.modeset = stack.modeset
        self.profile = stack.profile
        self.amplitudes = amplitudes
        self._bounds = stack.profile.slab_bounds()

    def mode_coefficients(self, x3: float, derivatives: bool = False):
        """Modal E and H coefficient arrays (m, 3) at height x3.

        With ``derivatives=True`` also returns dE_t/dx3 and dH_t/dx3 packed in
        (m, 3) arrays whose third column holds H3-free values (zeros).
        """
        ms = self.modeset
        mb = ms.block_size
        j = self.profile.slab_of(x3)
        zlo = self._bounds[j]
        zhi = self._bounds[j + 1]
        E = np.zeros((ms.num_modes, 3), dtype=complex)
        H = np.zeros((ms.num_modes, 3), dtype=complex)
        dE = np.zeros((ms.num_modes, 3), dtype=complex) if derivatives else None
        dH = np.zeros((ms.num_modes, 3), dtype=complex) if derivatives else None
        a1 = ms.alpha.alpha1 + np.arange(-ms.N, ms.N + 1)
        for ib in range(2 * ms.N + 1):
            n2 = ib - ms.N
            a2 = ms.alpha.alpha2 + n2
            blk = self.stack.bases[j].blocks[ib]
            u, d = self.amplitudes[ib][j]
            ep = np.exp(1j * blk.gamma * (x3 - zlo))
            em = np.exp(1j * blk.gamma * (zhi - x3))
            et = blk.W @ (ep * u + em * d)
            ht = blk.V @ (ep * u - em * d)
            e3 = -scipy.linalg.lu_solve(self.stack.qlu[j], a1 * ht[mb:] - a2 * ht[:mb]) / ms.k
            h3 = (a1 * et[mb:] - a2 * et[:mb]) / ms.k
            sl = ms.block_slice(n2)
            E[sl, 0], E[sl, 1], E[sl, 2] = et[:mb], et[mb:], e3
            H[sl, 0], H[sl, 1], H[sl, 2] = ht[:mb], ht[mb:], h3
            if derivatives:
                det = blk.W @ (1j * blk.gamma * (ep * u - em * d))
                dht = blk.V @ (1j * blk.gamma * (ep * u + em * d))
                dE[sl, 0], dE[sl, 1] = det[:mb], det[mb:]
                dH[sl, 0], dH[sl, 1] = dht[:mb], dht[mb:]
        if derivatives:
            return E, H, dE, dH
        return E, H

    def tangential_trace(self, x3: float) -> TangentialField:
        E, _ = self.mode_coefficients(x3)
        out = E.copy()
        out[:, 2] = 0.0
        return TangentialField(self.modeset, out, x3)

    def values(self, points) -> np.ndarray:
        """Electric field values at (x1, x2, x3) points; shape (P, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ms = self.modeset
        out = np.zeros((pts.shape[0], 3), dtype=complex)
        for i, pt in enumerate(pts):
            E, _ = self.mode_coefficients(pt[2])
            ph = (ms.phases(pt[:2][None, :])[0]
                  * np.exp(1j * (ms.alpha.alpha1 * pt[0] + ms.alpha.alpha2 * pt[1])))
            out[i] = ph @ E
        return out

    def residual_report(self, points) -> dict:
        """Pointwise residual of (curl curl - k^2 q) E, relative to the field scale.

        curl E = i k H holds identically in the modal representation, so the
        residual reduces to i k curl H - k^2 q E with q evaluated pointwise;
        what remains is the spectral aliasing of the q-product.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ms = self.modeset
        k = ms.k
        res = np.zeros(pts.shape[0])
        escale = 0.0
        for i, pt in enumerate(pts):
            E, H, dE, dH = self.mode_coefficients(pt[2], derivatives=True)
            a1 = ms.alpha_n[:, 0]
            a2 = ms.alpha_n[:, 1]
            curl_h = np.empty_like(H)
            curl_h[:, 0] = 1j * a2 * H[:, 2] - dH[:, 1]
            curl_h[:, 1] = dH[:, 0] - 1j * a1 * H[:, 2]
            curl_h[:, 2] = 1j * a1 * H[:, 1] - 1j * a2 * H[:, 0]
            ph = (ms.phases(pt[:2][None, :])[0]
                  * np.exp(1j * (ms.alpha.alpha1 * pt[0] + ms.alpha.alpha2 * pt[1])))
            ev = ph @ E
            cv = ph @ curl_h
            q = complex(self.profile.q_at(pt[0], pt[2]))
            r = 1j * k * cv - k * k * q * ev
            res[i] = float(np.linalg.norm(r))
            escale = max(escale, float(np.linalg.norm(ev)))
        scale = k * k * self.profile.q_inf * max(escale, 1e-300)
        return {"max_relative": float(np.max(res)) / scale,
                "pointwise": res, "scale": scale}

    def pec_residual(self) -> float:
        """Norm of the tangential trace at the conducting plate, relative to scale."""
        E, _ = self.mode_coefficients(0.0)
        top, _ = self.mode_coefficients(self.profile.b)
        scale = max(float(np.max(np.abs(top))), float(np.max(np.abs(E))), 1e-300)
        return float(np.max(np.abs(E[:, :2]))) / scale


@dataclass
class QpbvpResult:
    field: LayerField
    trace: TangentialField       # T(f), tangential curl at Gamma_b
    condition: float


@dataclass
class DtnMap:
    """Dense matrix of the boundary map on tangential coefficients.

    Layout: a tangential field with coefficients (m, 3) is flattened as
    [all first components; all second components] (length 2m); the matrix maps
    the flattened boundary datum f = e3 x E to the flattened tangential curl.
    """

    matrix: np.ndarray
    modeset: ModeSet
    profile_digest: str
    modeset_digest: str

    def apply(self, f: TangentialField) -> TangentialField:
        f.modeset.require_same(self.modeset, "forward.DtnMap.apply")
        vec = np.concatenate([f.coeffs[:, 0], f.coeffs[:, 1]])
        out = self.matrix @ vec
        m = self.modeset.num_modes
        return TangentialField.from_components(self.modeset, out[:m], out[m:],
                                               height=f.height)


def _f_to_etangential(f: TangentialField) -> np.ndarray:
    """Boundary datum f = e3 x E  =>  tangential E coefficients (m, 3)."""
    out = np.zeros_like(f.coeffs)
    out[:, 0] = f.coeffs[:, 1]
    out[:, 1] = -f.coeffs[:, 0]
    return out


def solve_qpbvp(profile: MediumProfile, f: TangentialField, modeset: ModeSet) -> QpbvpResult:
    """Solve the layer problem with conducting plate below and trace f above.

    ``f`` is the rotated tangential trace e3 x E on Gamma_b.  Returns the
    interior field and T(f), the tangential trace of curl E on Gamma_b.
    """
    f.modeset.require_same(modeset, "forward.solve_qpbvp")
    stack = _Stack(profile, modeset)
    et = _f_to_etangential(f)
    et_blocks = [stack.block_tangential(et, ib) for ib in range(2 * modeset.N + 1)]
    d_blocks, h_blocks = stack.solve_top(et_blocks)
    trace = _blocks_to_tangential(modeset, h_blocks, profile.b, scale=1j * modeset.k)
    amps = stack.downward_amplitudes(d_blocks)
    return QpbvpResult(LayerField(stack, amps), trace, stack.max_cond)


def _blocks_to_tangential(modeset: ModeSet, blocks, height: float,
                          scale: complex = 1.0) -> TangentialField:
    mb = modeset.block_size
    coeffs = np.zeros((modeset.num_modes, 3), dtype=complex)
    for ib, vec in enumerate(blocks):
        sl = modeset.block_slice(ib - modeset.N)
        coeffs[sl, 0] = scale * vec[:mb]
        coeffs[sl, 1] = scale * vec[mb:]
    return TangentialField(modeset, coeffs, height)


def assemble_dtn(profile: MediumProfile, modeset: ModeSet) -> DtnMap:
    """Assemble the dense boundary-map matrix column block by column block."""
    stack = _Stack(profile, modeset)
    ms = modeset
    m = ms.num_modes
    mb = ms.block_size
    matrix = np.zeros((2 * m, 2 * m), dtype=complex)
    eye = np.eye(2 * mb, dtype=complex)
    # J maps block [f1; f2] to block [E1; E2] = [f2; -f1].
    J = np.zeros((2 * mb, 2 * mb), dtype=complex)
    J[:mb, mb:] = np.eye(mb)
    J[mb:, :mb] = -np.eye(mb)
    for ib in range(2 * ms.N + 1):
        cond = np.linalg.cond(stack.top_P[ib])
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularMatch(
                f"forward.assemble_dtn: trace match condition {cond:.2e} exceeds {COND_LIMIT:g}")
        block = 1j * ms.k * stack.top_H[ib] @ np.linalg.solve(stack.top_P[ib], J)
        sl = ms.block_slice(ib - ms.N)
        rows = np.concatenate([np.arange(sl.start, sl.stop), m + np.arange(sl.start, sl.stop)])
        matrix[np.ix_(rows, rows)] = block
    return DtnMap(matrix, ms, profile.digest(), ms.digest())


@dataclass
class ScatteringResult:
    field: LayerField            # total field inside the layer
    scattered: RayleighField     # upgoing Rayleigh sequence, referenced at b
    incident: RayleighField      # downgoing expansion, referenced at 0
    trace_total: TangentialField
    condition: float


def _rho_diagonals(modeset: ModeSet):
    """Per-mode 2x2 entries of the map E_t -> [R(e3 x E)]_t."""
    ms = modeset
    a1 = ms.alpha_n[:, 0]
    a2 = ms.alpha_n[:, 1]
    ib = 1.0 / (1j * ms.beta)
    r11 = a1 * a2 * ib
    r12 = (ms.k ** 2 - a1 ** 2) * ib
    r21 = -(ms.k ** 2 - a2 ** 2) * ib
    r22 = -a1 * a2 * ib
    return r11, r12, r21, r22


def expand_incidence(incidence, modeset: ModeSet) -> RayleighField:
    """Downgoing modal expansion of a plane wave or dipole-sheet incidence."""
    from .greens import DipoleDensity, PlaneWaveIncidence, incident_from_density
    if isinstance(incidence, PlaneWaveIncidence):
        if abs(incidence.k - modeset.k) > 1e-12 * modeset.k:
            raise TruncationMismatch("forward.expand_incidence: wavenumber mismatch")
        if (abs(incidence.k * incidence.d[0] - modeset.alpha.alpha1) > 1e-10
                or abs(incidence.k * incidence.d[1] - modeset.alpha.alpha2) > 1e-10):
            raise TruncationMismatch(
                "forward.expand_incidence: plane-wave direction does not match the "
                "mode-set quasimomentum")
        coeffs = np.zeros((modeset.num_modes, 3), dtype=complex)
        coeffs[modeset.mode0] = incidence.p
        return RayleighField(modeset, coeffs, height=0.0, direction="down")
    if isinstance(incidence, DipoleDensity):
        return incident_from_density(incidence, modeset)
    if isinstance(incidence, RayleighField):
        if incidence.direction != "down":
            raise ValidationError("forward.expand_incidence: incident field must be downgoing")
        return incidence
    raise ValidationError(f"forward.expand_incidence: unsupported incidence {type(incidence)!r}")


def solve_scattering(profile: MediumProfile, incidence, modeset: ModeSet) -> ScatteringResult:
    """Full scattering solve with the transparent boundary condition at Gamma_b.

    The layer stack is coupled to the radiation condition through the modal
    form of the transparent-boundary operator; the right-hand side carries the
    incident tangential curl and rotated trace.
    """
    from .greens import DipoleDensity
    if isinstance(incidence, DipoleDensity) and incidence.height <= profile.b:
        raise ValidationError(
            f"forward.solve_scattering: dipole plane a = {incidence.height:g} must lie "
            f"above the layer height b = {profile.b:g}")
    stack = _Stack(profile, modeset)
    ms = modeset
    mb = ms.block_size
    incident0 = expand_incidence(incidence, ms)
    inc_b = incident0.rebase(profile.b)
    C = inc_b.coeffs
    a1 = ms.alpha_n[:, 0]
    a2 = ms.alpha_n[:, 1]
    beta = ms.beta
    r11, r12, r21, r22 = _rho_diagonals(ms)
    # Tangential curl of the incident field minus R applied to its rotated trace.
    g1 = 1j * (a2 * C[:, 2] + beta * C[:, 1]) - (r11 * C[:, 0] + r12 * C[:, 1])
    g2 = 1j * (-beta * C[:, 0] - a1 * C[:, 2]) - (r21 * C[:, 0] + r22 * C[:, 1])
    d_blocks = []
    et_blocks = []
    for ib in range(2 * ms.N + 1):
        sl = ms.block_slice(ib - ms.N)
        rho = np.zeros((2 * mb, 2 * mb), dtype=complex)
        rho[:mb, :mb] = np.diag(r11[sl])
        rho[:mb, mb:] = np.diag(r12[sl])
        rho[mb:, :mb] = np.diag(r21[sl])
        rho[mb:, mb:] = np.diag(r22[sl])
        msys = 1j * ms.k * stack.top_H[ib] - rho @ stack.top_P[ib]
        rhs = np.concatenate([g1[sl], g2[sl]])
        d, cond = _solve_guarded(msys, rhs, "forward.solve_scattering: boundary match")
        stack.max_cond = max(stack.max_cond, cond)
        d_blocks.append(d)
        et_blocks.append(stack.top_P[ib] @ d)
    trace_total = _blocks_to_tangential(ms, et_blocks, profile.b)
    s_t = trace_total.coeffs[:, :2] - C[:, :2]
    s3 = -(a1 * s_t[:, 0] + a2 * s_t[:, 1]) / beta
    scat = np.zeros((ms.num_modes, 3), dtype=complex)
    scat[:, :2] = s_t
    scat[:, 2] = s3
    scattered = RayleighField(ms, scat, height=profile.b, direction="up")
    amps = stack.downward_amplitudes(d_blocks)
    return ScatteringResult(LayerField(stack, amps), scattered, incident0,
                            trace_total, stack.max_cond)


def profile_from_mapping(mapping: dict) -> MediumProfile:
    """Build a MediumProfile from a flat text mapping (CLI config section).

    Keys: ``direction`` ('x1' or 'x2'), ``slabs`` (whitespace-separated heights),
    ``qcoef`` (lines of ``j re im``, one Fourier coefficient per line; repeated
    per slab via ``qcoef2``, ``qcoef3``, ... when the stack is layered).
    """
    direction = mapping.get("direction", "x1").strip()
    heights = [float(tok) for tok in mapping["slabs"].split()]
    if not heights:
        raise ValidationError("forward.profile_from_mapping: no slab heights given")
    slabs = []
    for i, h in enumerate(heights):
        key = "qcoef" if i == 0 else f"qcoef{i + 1}"
        if key not in mapping and i > 0:
            key = "qcoef"  # same coefficients for every slab
        coeffs = {}
        for line in mapping[key].strip().splitlines():
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ValidationError(
                    f"forward.profile_from_mapping: qcoef line '{line}' is not 'j re im'")
            coeffs[int(parts[0])] = float(parts[1]) + 1j * float(parts[2])
        slabs.append(Slab(h, coeffs))
    return MediumProfile(slabs, direction)
