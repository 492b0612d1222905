"""Linearized Hamiltonian system along a path and its conjugate points.

The second variation's Sturm system, rescaled to [0, 1], is equivalent to the
first-order system u' = J B(t) u with u = (y, xi), Dirichlet data meaning
u(0), u(1) in R^n x {0}, and

    B(t) = T [[P^-1, -P^-1 Q], [-Q^T P^-1, Q^T P^-1 Q - R]](t),

scaled to B_s(t) = s B(s t) for the time-rescaling parameter s in [0, 1].
A conjugate point at s is a kernel of the lower-left n x n block c(s) of the
fundamental solution. Propagation uses a 4th-order triple-jump composition of
implicit-midpoint (Cayley) steps, symplectic by construction; the sequential
cumulative matrix product is the compiled hot kernel.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .action import PathState
from .potential import PotentialModel

# triple-jump composition coefficients (4th order, symmetric)
_G1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_G2 = 1.0 - 2.0 * _G1
_GAMMAS = (_G1, _G2, _G1)

DEFAULT_KERNEL_TOL = 1e-8
S1_BAND = 1e-6


class HamiltonianError(RuntimeError):
    pass


class CrossingFormError(HamiltonianError):
    pass


def J_matrix(n):
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


class SturmCoefficients:
    """Coefficient paths (P, Q, R) on [0, 1] with duration T.

    Carries callables for evaluation at arbitrary times plus materialized
    samples on the M+1 grid. P must be symmetric positive definite and R
    symmetric at every sample.
    """

    def __init__(self, n, T, P_of, Q_of, R_of, M=1600, label=""):
        self.n = int(n)
        self.T = float(T)
        self.M = int(M)
        self.P_of = P_of
        self.Q_of = Q_of
        self.R_of = R_of
        self.label = label
        self.ts = np.linspace(0.0, 1.0, self.M + 1)
        self.P = P_of(self.ts)
        self.Q = Q_of(self.ts)
        self.R = R_of(self.ts)
        self._validate()
        self._J = J_matrix(self.n)

    def _validate(self):
        for name, arr in (("P", self.P), ("R", self.R)):
            sym = np.max(np.abs(arr - np.swapaxes(arr, -1, -2)))
            if sym > 1e-10 * (1.0 + np.max(np.abs(arr))):
                raise HamiltonianError(f"{name} samples are not symmetric")
        # positive definiteness of P at all samples
        try:
            np.linalg.cholesky(self.P)
        except np.linalg.LinAlgError:
            raise HamiltonianError("P must be positive definite at all samples")

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_path(cls, path: PathState, model: PotentialModel, M=None):
        """P = I, Q = 0, R = -Hess U along the (linearly interpolated) path.

        R is sampled at the M+1 grid times (nodes linearly interpolated) and
        evaluated between samples by a cubic spline: the node kinks of the
        piecewise-linear path would otherwise make propagation errors
        non-smooth in the rescaling parameter and ruin the finite-difference
        crossing forms.
        """
        from scipy.interpolate import CubicSpline

        n = path.n
        M = 4 * path.N if M is None else int(M)
        eye = np.eye(n)
        grid = np.linspace(0.0, 1.0, M + 1)
        X = path.at_times(grid)
        R_samples = -model.effective_batch(path.sigma, X)[2]
        spline = CubicSpline(grid, R_samples, axis=0)

        def P_of(ts):
            return np.broadcast_to(eye, np.shape(ts) + (n, n)).copy()

        def Q_of(ts):
            return np.zeros(np.shape(ts) + (n, n))

        def R_of(ts):
            ts = np.clip(np.asarray(ts, float), 0.0, 1.0)
            out = spline(ts)
            return 0.5 * (out + np.swapaxes(out, -1, -2))

        return cls(n, path.T, P_of, Q_of, R_of, M=M, label="path")

    @classmethod
    def constant(cls, T, R, P=None, Q=None, M=1600):
        R = np.atleast_2d(np.asarray(R, float))
        n = R.shape[0]
        P = np.eye(n) if P is None else np.atleast_2d(np.asarray(P, float))
        Q = np.zeros((n, n)) if Q is None else np.atleast_2d(np.asarray(Q, float))

        def const(mat):
            def of(ts):
                return np.broadcast_to(mat, np.shape(ts) + (n, n)).copy()
            return of

        return cls(n, T, const(P), const(Q), const(R), M=M, label="constant")

    @classmethod
    def from_tables(cls, T, sample_ts, P, Q, R, M=None):
        """Per-sample tables, linearly interpolated between samples."""
        sample_ts = np.asarray(sample_ts, float)
        P = np.asarray(P, float)
        Q = np.asarray(Q, float)
        R = np.asarray(R, float)
        n = R.shape[-1]
        M = (len(sample_ts) - 1) if M is None else int(M)

        def interp(tab):
            def of(ts):
                ts = np.atleast_1d(np.asarray(ts, float))
                out = np.empty(ts.shape + (n, n))
                for i in range(n):
                    for j in range(n):
                        out[..., i, j] = np.interp(ts, sample_ts, tab[:, i, j])
                return out
            return of

        return cls(n, T, interp(P), interp(Q), interp(R), M=M, label="tables")

    @classmethod
    def from_fixture(cls, data, M=None):
        """Fixture dict: n, T and constant or per-sample P, Q, R tables."""
        known = {"n", "T", "M", "P", "Q", "R"}
        unknown = set(data) - known
        if unknown:
            raise HamiltonianError(f"unknown fixture keys: {sorted(unknown)}")
        n = int(data["n"])
        T = float(data["T"])
        M = int(data.get("M", 1600)) if M is None else int(M)

        def table(key, default):
            v = data.get(key)
            if v is None:
                return None if default is None else np.broadcast_to(default, (1, n, n))
            v = np.asarray(v, float)
            if v.ndim == 0:
                v = v * np.eye(n)
            if v.ndim == 2:
                return v[None]
            if v.ndim == 1:  # per-sample scalars
                return v[:, None, None] * np.eye(n)[None]
            return v

        P = table("P", np.eye(n))
        Q = table("Q", np.zeros((n, n)))
        R = table("R", None)
        if R is None:
            raise HamiltonianError("fixture needs an R table")
        m = max(arr.shape[0] for arr in (P, Q, R))
        sample_ts = np.linspace(0.0, 1.0, m) if m > 1 else np.array([0.0, 1.0])

        def expand(arr):
            if arr.shape[0] == m:
                return arr
            if arr.shape[0] == 1:
                return np.broadcast_to(arr, (m,) + arr.shape[1:]).copy()
            raise HamiltonianError("fixture tables must share sample count")

        if m == 1:
            return cls.constant(T, R[0], P=P[0], Q=Q[0], M=M)
        return cls.from_tables(T, sample_ts, expand(P), expand(Q), expand(R), M=M)

    @classmethod
    def load_fixture(cls, path, M=None):
        with open(path) as fh:
            return cls.from_fixture(json.load(fh), M=M)

    # -- coefficient matrices ------------------------------------------------

    def B_base(self, ts):
        """B(t) = T [[P^-1, -P^-1 Q], [-Q^T P^-1, Q^T P^-1 Q - R]] batched."""
        ts = np.atleast_1d(np.asarray(ts, float))
        P = self.P_of(ts)
        Q = self.Q_of(ts)
        R = self.R_of(ts)
        n = self.n
        Pinv = np.linalg.inv(P)
        PinvQ = Pinv @ Q
        out = np.empty(ts.shape + (2 * n, 2 * n))
        out[..., :n, :n] = Pinv
        out[..., :n, n:] = -PinvQ
        out[..., n:, :n] = -np.swapaxes(PinvQ, -1, -2)
        out[..., n:, n:] = np.swapaxes(Q, -1, -2) @ PinvQ - R
        out *= self.T
        return 0.5 * (out + np.swapaxes(out, -1, -2))


def coefficients_from_path(path: PathState, model: PotentialModel, M=None
                           ) -> SturmCoefficients:
    return SturmCoefficients.from_path(path, model, M=M)


def assemble_B(coeffs: SturmCoefficients, s, ts):
    """Scaled coefficient path B_s(t) = s * B(s t), batched over ts."""
    ts = np.atleast_1d(np.asarray(ts, float))
    return s * coeffs.B_base(s * ts)


@dataclass
class FundamentalSolution:
    s: float
    ts: np.ndarray            # (M+1,)
    phis: np.ndarray          # (M+1, 2n, 2n)
    B_samples: np.ndarray     # B_s at the grid times
    defect: float             # max symplecticity defect
    coeffs: SturmCoefficients

    @property
    def n(self):
        return self.coeffs.n

    def c_blocks(self):
        n = self.n
        return self.phis[:, n:, :n]


def _cayley_steps(G, h):
    """Batched Cayley transform (I - h/2 G)^-1 (I + h/2 G)."""
    d = G.shape[-1]
    eye = np.eye(d)
    half = 0.5 * np.asarray(h)
    if half.ndim:
        half = half[:, None, None]
    return np.linalg.solve(eye - half * G, eye + half * G)


def _composed_steps(coeffs: SturmCoefficients, s, t0, h):
    """4th-order transfer matrices for steps starting at t0 (batched) of size h."""
    t0 = np.atleast_1d(np.asarray(t0, float))
    h = np.broadcast_to(np.asarray(h, float), t0.shape)
    J = coeffs._J
    offsets = []
    acc = 0.0
    for g in _GAMMAS:
        offsets.append(acc + 0.5 * g)
        acc += g
    S = None
    for g, off in zip(_GAMMAS, offsets):
        tm = t0 + off * h
        B = assemble_B(coeffs, s, tm)
        G = J[None] @ B
        C = _cayley_steps(G, g * h)
        S = C if S is None else C @ S
    return S


def _symplectic_defect(phis, J):
    res = np.swapaxes(phis, -1, -2) @ J[None] @ phis - J[None]
    num = np.sqrt(np.einsum("mij,mij->m", res, res))
    den = 1.0 + np.einsum("mij,mij->m", phis, phis)
    return float(np.max(num / den))


def propagate(coeffs: SturmCoefficients, s=1.0, M=None) -> FundamentalSolution:
    """Fundamental solution of u' = J B_s(t) u on [0, 1], phi(0) = I.

    A singular step solve (cannot happen for symmetric B with reasonable
    steps) is retried once on a halved grid before giving up.
    """
    M = coeffs.M if M is None else int(M)
    if s == 0.0:
        ts = np.linspace(0.0, 1.0, M + 1)
        phis = np.broadcast_to(np.eye(2 * coeffs.n),
                               (M + 1, 2 * coeffs.n, 2 * coeffs.n)).copy()
        B = np.zeros((M + 1, 2 * coeffs.n, 2 * coeffs.n))
        return FundamentalSolution(0.0, ts, phis, B, 0.0, coeffs)
    for attempt, M_eff in enumerate((M, 2 * M)):
        ts = np.linspace(0.0, 1.0, M_eff + 1)
        try:
            steps = _composed_steps(coeffs, s, ts[:-1], 1.0 / M_eff)
            break
        except np.linalg.LinAlgError:
            if attempt:
                raise HamiltonianError(
                    "singular implicit-midpoint step even after halving")
    phis = _kernels.cumprod_matmul(steps)
    if len(ts) - 1 != M:
        # keep the requested grid: take every second matrix
        phis = phis[::2]
        ts = ts[::2]
    defect = _symplectic_defect(phis, coeffs._J)
    B = assemble_B(coeffs, s, ts)
    return FundamentalSolution(float(s), ts, phis, B, defect, coeffs)


def phi_at(fs: FundamentalSolution, s_val):
    """phi of the *unscaled* system at time s_val via one partial step.

    Only valid for fs propagated with s = 1 (the scan propagation).
    """
    if fs.s != 1.0:
        raise HamiltonianError("phi_at needs the s = 1 propagation")
    M = len(fs.ts) - 1
    j = min(int(np.floor(s_val * M)), M)
    t_j = fs.ts[j]
    dt = s_val - t_j
    if dt <= 0:
        return fs.phis[j]
    S = _composed_steps(fs.coeffs, 1.0, np.array([t_j]), dt)[0]
    return S @ fs.phis[j]


@dataclass
class Crossing:
    s: float
    kernel_dim: int
    kernel_basis: np.ndarray            # (kernel_dim, n) initial y0 data
    smin: float
    scale: float
    flags: tuple = ()
    form_s: Optional[float] = None
    form_s_signature: Optional[int] = None
    form_sigma: Optional[float] = None

    @property
    def at_s1(self):
        return "at-s1" in self.flags

    @property
    def clean(self):
        return not any(f in self.flags for f in ("at-s1", "endpoint-left",
                                                 "endpoint-right"))


def _kernel_of_block(c, kernel_tol, force_dim=0):
    u, sv, vh = np.linalg.svd(c)
    scale = max(1.0, float(sv[0])) if sv.size else 1.0
    dim = int(np.sum(sv <= kernel_tol * scale))
    dim = max(dim, force_dim)
    basis = vh[len(sv) - dim:] if dim else np.zeros((0, c.shape[0]))
    smin = float(sv[-1]) if sv.size else 0.0
    return dim, basis, smin, scale


def conjugate_scan(coeffs: SturmCoefficients, M=None,
                   kernel_tol=DEFAULT_KERNEL_TOL, refine_tol=1e-10,
                   compute_forms=True):
    """Locate kernels of c(s) for s in (0, 1].

    Grid scan of det-sign changes and of singular-value dips below the
    kernel band, each refined (bisection on det; golden-section on the
    smallest singular value). Crossings inside the s = 1 band or touching
    the scan ends carry flags and are excluded from the spectral flow.
    """
    fs = propagate(coeffs, 1.0, M)
    return _scan_impl(fs, kernel_tol, refine_tol, compute_forms)


def _scan_impl(fs: FundamentalSolution, kernel_tol, refine_tol, compute_forms):
    coeffs = fs.coeffs
    M_eff = len(fs.ts) - 1
    cs = fs.c_blocks()
    dets = np.linalg.det(cs)
    svs = np.linalg.svd(cs, compute_uv=False)
    smax = svs[:, 0]
    smin = svs[:, -1]
    band = kernel_tol * np.maximum(1.0, smax)

    def det_at(s_val):
        n = coeffs.n
        return float(np.linalg.det(phi_at(fs, s_val)[n:, :n]))

    crossings = []
    claimed = np.zeros(M_eff + 1, dtype=bool)
    for j in range(1, M_eff):
        if dets[j] == 0.0:
            s_star = fs.ts[j]
        elif dets[j] * dets[j + 1] < 0.0:
            lo, hi = fs.ts[j], fs.ts[j + 1]
            flo = dets[j]
            while hi - lo > refine_tol:
                mid = 0.5 * (lo + hi)
                fm = det_at(mid)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if flo * fm < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            s_star = 0.5 * (lo + hi)
        else:
            continue
        claimed[j] = claimed[min(j + 1, M_eff)] = True
        crossings.append(_build_crossing(coeffs, fs, s_star, kernel_tol,
                                         force_dim=1))

    # singular-value dips without a det sign change: grid points already
    # inside the kernel band (wide bands, near-endpoint flags), plus strict
    # local minima of smin refined down to the band (even-multiplicity
    # kernels whose det does not flip sign)
    def add_dip(lo, hi, j0, j1):
        s_star = _golden_min(lambda sv: _smin_at(fs, sv), lo, hi, refine_tol)
        cross = _build_crossing(coeffs, fs, s_star, kernel_tol)
        if cross.kernel_dim == 0:
            return
        flags = list(cross.flags)
        if j0 <= 1:
            flags.append("endpoint-left")
        if j1 >= M_eff - 1:
            flags.append("endpoint-right")
        if not any(f in ("at-s1", "endpoint-left", "endpoint-right")
                   for f in flags):
            flags.append("no-sign-change")
        cross.flags = tuple(dict.fromkeys(flags))
        crossings.append(cross)
        claimed[max(j0 - 1, 0):min(j1 + 2, M_eff + 1)] = True

    in_band = smin <= band
    in_band[0] = False
    j = 1
    while j <= M_eff:
        if in_band[j] and not claimed[j]:
            j0 = j
            while j <= M_eff and in_band[j]:
                j += 1
            j1 = j - 1
            if not any(claimed[j0:j1 + 1]):
                add_dip(fs.ts[max(j0 - 1, 0)], fs.ts[min(j1 + 1, M_eff)],
                        j0, j1)
        else:
            j += 1
    for j in range(1, M_eff):
        if claimed[j - 1] or claimed[j] or claimed[j + 1]:
            continue
        if smin[j] < smin[j - 1] and smin[j] < smin[j + 1]:
            refined = _golden_min(lambda sv: _smin_at(fs, sv),
                                  fs.ts[j - 1], fs.ts[j + 1], refine_tol)
            c_ref = phi_at(fs, refined)[coeffs.n:, :coeffs.n]
            sv = np.linalg.svd(c_ref, compute_uv=False)
            if sv[-1] <= kernel_tol * max(1.0, float(sv[0])):
                add_dip(fs.ts[j - 1], fs.ts[j + 1], j, j)

    crossings.sort(key=lambda c: c.s)
    if compute_forms:
        for cross in crossings:
            if cross.clean or cross.at_s1:
                try:
                    res = crossing_form(coeffs, cross, direction="s", M=M_eff)
                    cross.form_s = res.value
                    cross.form_s_signature = res.signature
                except CrossingFormError:
                    cross.flags = cross.flags + ("form-failed",)
    return crossings


def _smin_at(fs, s_val):
    n = fs.coeffs.n
    return float(np.linalg.svd(phi_at(fs, s_val)[n:, :n], compute_uv=False)[-1])


def _golden_min(f, lo, hi, tol):
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _build_crossing(coeffs, fs, s_star, kernel_tol, force_dim=0):
    n = coeffs.n
    c = phi_at(fs, s_star)[n:, :n]
    dim, basis, smin, scale = _kernel_of_block(c, kernel_tol, force_dim)
    flags = []
    if s_star >= 1.0 - S1_BAND:
        flags.append("at-s1")
    return Crossing(float(s_star), dim, basis, smin, scale, tuple(flags))


@dataclass
class CrossingFormResult:
    value: float                 # matrix-formula value (scalar: min eigenvalue)
    matrix_value: float
    quadrature_value: float
    form_matrix: np.ndarray
    signature: int
    rel_gap: float


def _simpson_weights(M):
    if M % 2 == 0:
        w = np.ones(M + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w / (3.0 * M)
    w = np.ones(M + 1)
    w[0] = w[-1] = 0.5
    return w / M


def crossing_form(coeffs: SturmCoefficients, crossing: Crossing,
                  direction="s", family=None, sigma=None, M=None, delta=None
                  ) -> CrossingFormResult:
    """Crossing form Gamma[u] = <dB/dlambda u, u> on the kernel at a crossing.

    Computed two ways and cross-checked: the fundamental-solution endpoint
    formula with a central-difference dphi/dlambda, and the quadrature of the
    coefficient derivative against the reconstructed kernel solution. Signs
    are calibrated so direction-s forms are positive.
    """
    if direction not in ("s", "sigma"):
        raise ValueError("direction must be 's' or 'sigma'")
    s_star = crossing.s
    n = coeffs.n
    M = coeffs.M if M is None else int(M)
    if crossing.kernel_dim == 0:
        raise CrossingFormError("crossing has an empty kernel")
    u0 = np.zeros((2 * n, crossing.kernel_dim))
    u0[:n, :] = crossing.kernel_basis.T

    center = propagate(coeffs, s_star, M)
    U = center.phis @ u0                      # (M+1, 2n, k)

    if direction == "s":
        d = delta if delta is not None else 1e-4 * max(s_star, 0.1)
        if s_star + d > 1.0:
            # one-sided (second order) at the domain end: the coefficient
            # path is only defined for st <= 1
            f0 = propagate(coeffs, s_star - 2.0 * d, M)
            f1 = propagate(coeffs, s_star - d, M)
            dB = (3.0 * center.B_samples - 4.0 * f1.B_samples
                  + f0.B_samples) / (2.0 * d)
            dphi = (3.0 * center.phis[-1] - 4.0 * f1.phis[-1]
                    + f0.phis[-1]) / (2.0 * d)
            return _finish_form(coeffs, crossing, center, U, u0, dB, dphi, M)
        fplus = propagate(coeffs, s_star + d, M)
        fminus = propagate(coeffs, s_star - d, M)
        B_plus, B_minus = fplus.B_samples, fminus.B_samples
        phi_plus, phi_minus = fplus.phis[-1], fminus.phis[-1]
    else:
        if family is None or sigma is None:
            raise CrossingFormError(
                "direction sigma needs a continued family and its sigma")
        d = delta if delta is not None else family.suggested_dsigma()
        co_plus = family.coefficients(sigma + d)
        co_minus = family.coefficients(sigma - d)
        fplus = propagate(co_plus, s_star, M)
        fminus = propagate(co_minus, s_star, M)
        B_plus, B_minus = fplus.B_samples, fminus.B_samples
        phi_plus, phi_minus = fplus.phis[-1], fminus.phis[-1]

    dB = (B_plus - B_minus) / (2.0 * d)
    dphi = (phi_plus - phi_minus) / (2.0 * d)
    return _finish_form(coeffs, crossing, center, U, u0, dB, dphi, M)


def _finish_form(coeffs, crossing, center, U, u0, dB, dphi, M):
    w = _simpson_weights(M)
    integrand = np.einsum("mia,mij,mjb->mab", U, dB, U)
    quad = np.einsum("m,mab->ab", w, integrand)
    Wmat = -coeffs._J @ np.linalg.solve(center.phis[-1], dphi)
    mat = u0.T @ Wmat @ u0
    mat = 0.5 * (mat + mat.T)
    quad = 0.5 * (quad + quad.T)

    scale_B = 1.0 + float(np.max(np.abs(center.B_samples)))
    atol = 1e-8 * scale_B
    gap = float(np.max(np.abs(mat - quad)))
    ref = max(float(np.max(np.abs(mat))), float(np.max(np.abs(quad))), atol)
    rel_gap = gap / ref
    if gap > max(1e-2 * ref, atol):
        raise CrossingFormError(
            f"crossing-form methods disagree: matrix {mat!r} vs quadrature "
            f"{quad!r} (rel gap {rel_gap:.2e}); kernel ill-conditioned or "
            "family not smooth")
    if gap > max(1e-3 * ref, atol):
        warnings.warn(f"crossing-form cross-check gap {rel_gap:.2e} exceeds 1e-3",
                      stacklevel=2)
    eigs = np.linalg.eigvalsh(mat)
    signature = int(np.sum(eigs > 0) - np.sum(eigs < 0))
    if crossing.kernel_dim == 1:
        mat_val, quad_val = float(mat[0, 0]), float(quad[0, 0])
    else:
        mat_val = float(eigs[0])
        quad_val = float(np.linalg.eigvalsh(quad)[0])
    return CrossingFormResult(mat_val, mat_val, quad_val, mat, signature,
                              rel_gap)


@dataclass
class SpectralFlowS:
    value: int
    n: int
    interior: list
    excluded: list
    defect: float


def spectral_flow_s(coeffs: SturmCoefficients, M=None,
                    kernel_tol=DEFAULT_KERNEL_TOL) -> SpectralFlowS:
    """Spectral flow over s in [0, 1]: n from the s = 0 endpoint kernel plus
    the kernel dimensions of interior crossings (all positive). Crossings in
    the s = 1 band are reported but excluded."""
    fs = propagate(coeffs, 1.0, M)
    crossings = _scan_impl(fs, kernel_tol, 1e-10, True)
    interior = [c for c in crossings if c.clean]
    excluded = [c for c in crossings if not c.clean]
    total = coeffs.n + sum(c.kernel_dim for c in interior)
    return SpectralFlowS(int(total), coeffs.n, interior, excluded, fs.defect)


def endpoint_kernel(coeffs: SturmCoefficients, M=None,
                    kernel_tol=DEFAULT_KERNEL_TOL):
    """Kernel dimension and basis of c(1) (degeneracy of the s = 1 operator)."""
    fs = propagate(coeffs, 1.0, M)
    n = coeffs.n
    dim, basis, smin, scale = _kernel_of_block(fs.phis[-1][n:, :n], kernel_tol)
    return dim, basis, smin, scale
