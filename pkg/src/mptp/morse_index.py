"""Morse indices, the sigma-derivative a(sigma) and the {0,1} correction index.

The fixed-time index is the inertia of the interior-node Hessian A(0); the
free-time index is the inertia of the bordered matrix [[A, B], [B^T, C]].
Their difference is the correction index n(sigma), which interlacing pins to
{0, 1}. An independent classification from the sign of
a(sigma) = d/dsigma L2(x_sigma, T_sigma) (with L2 the noise-coupling part of
the action) cross-checks it; band-ambiguous cases are surfaced, not guessed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .action import PathState, action_hessian, l2_functional, l2_gradient
from .hamiltonian import SturmCoefficients
from .potential import PotentialModel

DEFAULT_INERTIA_TOL = 1e-9


class IndexComputationError(RuntimeError):
    pass


@dataclass
class Inertia:
    negative: int
    zero: int
    positive: int
    method: str
    smallest: float


def inertia_eigh(A, tol=DEFAULT_INERTIA_TOL):
    """Inertia by full symmetric eigendecomposition."""
    eigs = scipy.linalg.eigvalsh(A)
    scale = max(1.0, float(np.max(np.abs(eigs)))) if eigs.size else 1.0
    band = tol * scale
    neg = int(np.sum(eigs < -band))
    zero = int(np.sum(np.abs(eigs) <= band))
    pos = int(np.sum(eigs > band))
    smallest = float(eigs[np.argmin(np.abs(eigs))]) if eigs.size else 0.0
    return Inertia(neg, zero, pos, "eigh", smallest)


def inertia_ldl(A, tol=DEFAULT_INERTIA_TOL):
    """Inertia via the symmetric indefinite (Bunch-Kaufman) factorization.

    Falls back to the eigendecomposition when a pivot block sits inside the
    zero band (near-singular factorization).
    """
    A = np.asarray(A, float)
    try:
        _L, D, _perm = scipy.linalg.ldl(A)
    except Exception:
        return inertia_eigh(A, tol)
    scale = max(1.0, float(np.max(np.abs(D))))
    band = tol * scale
    neg = zero = pos = 0
    i, m = 0, D.shape[0]
    smallest = np.inf
    while i < m:
        if i + 1 < m and (D[i, i + 1] != 0.0 or D[i + 1, i] != 0.0):
            block = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            pivots = list(block)
            i += 2
        else:
            pivots = [D[i, i]]
            i += 1
        for p in pivots:
            if abs(p) < abs(smallest):
                smallest = p
            if p < -band:
                neg += 1
            elif p > band:
                pos += 1
            else:
                zero += 1
    if zero > 0:
        # pivot magnitudes are not eigenvalues; adjudicate near-zero via eigh
        return inertia_eigh(A, tol)
    return Inertia(neg, zero, pos, "ldl", float(smallest))


def sturm_form_matrix(coeffs: SturmCoefficients, N):
    """Discretized Dirichlet form of the Sturm system on N intervals.

    Same piecewise-linear/midpoint discretization as the action Hessian, so a
    (P=I, Q=0, R=-HessU) coefficient set reproduces A(0) of the path exactly.
    """
    n = coeffs.n
    T = coeffs.T
    mids = (np.arange(N) + 0.5) / N
    P = coeffs.P_of(mids)
    Q = coeffs.Q_of(mids)
    R = coeffs.R_of(mids)
    size = (N - 1) * n
    A = np.zeros((size, size))
    for i in range(N):
        # local form on (xi_i, xi_{i+1}) from interval i with midpoint data
        Pm, Qm, Rm = P[i], Q[i], R[i]
        kin = (N / T) * np.block([[Pm, -Pm], [-Pm, Pm]])
        mass = (T / (4.0 * N)) * np.block([[Rm, Rm], [Rm, Rm]])
        # <Q xi_mid, xi_dot> + <Q^T xi_dot, xi_mid>, symmetrized
        QQ = 0.5 * (np.block([[-Qm, Qm], [-Qm, Qm]])
                    + np.block([[-Qm.T, -Qm.T], [Qm.T, Qm.T]]))
        local = kin + mass + QQ
        for (a, ga) in ((0, i - 1), (1, i)):
            if not (0 <= ga < N - 1):
                continue
            for (b, gb) in ((0, i - 1), (1, i)):
                if not (0 <= gb < N - 1):
                    continue
                A[ga * n:(ga + 1) * n, gb * n:(gb + 1) * n] += \
                    local[a * n:(a + 1) * n, b * n:(b + 1) * n]
    return 0.5 * (A + A.T)


def morse_index_fixed(path: PathState, model: PotentialModel,
                      inertia_tol=DEFAULT_INERTIA_TOL):
    """(negative eigenvalue count, kernel dimension) of A(0)."""
    A = action_hessian(path, model, 0.0).dense_A()
    res = inertia_ldl(A, inertia_tol)
    return res.negative, res.zero


def morse_index_free(path: PathState, model: PotentialModel,
                     inertia_tol=DEFAULT_INERTIA_TOL):
    """(negative eigenvalue count, kernel dimension) of the bordered Hessian."""
    I0 = action_hessian(path, model, 0.0).bordered_dense()
    res = inertia_ldl(I0, inertia_tol)
    return res.negative, res.zero


def morse_index_from_coeffs(coeffs: SturmCoefficients, N,
                            inertia_tol=DEFAULT_INERTIA_TOL):
    """Fixed-time index of a (P, Q, R, T) fixture through the same routine."""
    A = sturm_form_matrix(coeffs, N)
    res = inertia_ldl(A, inertia_tol)
    return res.negative, res.zero


def a_sigma(family, sigma, dsigma=None, richardson=True):
    """Central difference of L2 along the continued family, Richardson-checked."""
    d = family.suggested_dsigma() if dsigma is None else float(dsigma)
    model = family.model

    def l2_at(sg):
        return l2_functional(family.path_at(sg), model)

    val = (l2_at(sigma + d) - l2_at(sigma - d)) / (2.0 * d)
    if richardson:
        half = (l2_at(sigma + 0.5 * d) - l2_at(sigma - 0.5 * d)) / d
        denom = max(abs(val), abs(half), 1e-12)
        if abs(half - val) > 0.01 * denom + 1e-12:
            warnings.warn(
                f"a(sigma) finite difference not converged: {val:.6e} vs "
                f"{half:.6e} at half step", stacklevel=2)
        val = half
    return float(val)


@dataclass
class IndexReport:
    sigma: float
    T: float
    action: float
    m_fixed: int
    m_free: Optional[int]
    n_correction: Optional[int]
    a_sigma: Optional[float]
    dl2_norm: Optional[float]
    case: str
    kernel_dim_fixed: int = 0
    kernel_dim_free: Optional[int] = None
    mismatch: bool = False

    CSV_HEADER = "sigma,T,action,mFixed,mFree,n,aSigma,dL2Norm,case"

    def csv_row(self, fmt="%.17g"):
        def num(v):
            return "" if v is None else (fmt % v)

        def intval(v):
            return "" if v is None else str(int(v))

        return ",".join([fmt % self.sigma, fmt % self.T, fmt % self.action,
                         str(self.m_fixed), intval(self.m_free),
                         intval(self.n_correction), num(self.a_sigma),
                         num(self.dl2_norm), self.case])

    @classmethod
    def from_csv_row(cls, row):
        parts = row.split(",")
        if len(parts) != 9:
            raise ValueError(f"bad index CSV row: {row!r}")

        def fnum(s):
            return None if s == "" else float(s)

        def inum(s):
            return None if s == "" else int(s)

        return cls(float(parts[0]), float(parts[1]), float(parts[2]),
                   int(parts[3]), inum(parts[4]), inum(parts[5]),
                   fnum(parts[6]), fnum(parts[7]), parts[8])


A_SIGMA_ZERO_BAND = 1e-6
DL2_ZERO_BAND = 1e-8


def correction_index(path: PathState, model: PotentialModel, family=None,
                     sigma=None, action=None,
                     inertia_tol=DEFAULT_INERTIA_TOL) -> IndexReport:
    """Correction index n = m_free - m_fixed with the a(sigma) classification.

    The index difference is primary; the classification from the sign of
    a(sigma) and the norm of dL2 runs alongside when a family is available,
    and a disagreement is reported as a degeneracy diagnostic rather than
    silently resolved. An index difference outside {0, 1} violates the
    bordered-matrix interlacing and aborts.
    """
    m_fixed, k_fixed = morse_index_fixed(path, model, inertia_tol)
    m_free, k_free = morse_index_free(path, model, inertia_tol)
    n_corr = m_free - m_fixed
    if n_corr not in (0, 1):
        raise IndexComputationError(
            f"m_free - m_fixed = {n_corr} outside {{0,1}}: discretization "
            "failure (interlacing violated)")
    sig = path.sigma if sigma is None else float(sigma)
    gx, gT = l2_gradient(path, model)
    dl2 = float(np.sqrt(float(gx @ gx) + gT * gT))
    l2_val = l2_functional(path, model)
    a_val = None
    case = "no-family"
    mismatch = False
    if family is not None:
        try:
            a_val = a_sigma(family, sig)
        except Exception as exc:
            warnings.warn(f"a(sigma) unavailable at sigma={sig}: {exc}",
                          stacklevel=2)
            a_val = None
    if family is not None and a_val is None:
        case = "a-unavailable"
    elif a_val is not None:
        a_band = A_SIGMA_ZERO_BAND * (1.0 + abs(l2_val))
        dl2_band = DL2_ZERO_BAND * (1.0 + float(np.abs(path.nodes).max()))
        if a_val > a_band:
            case, expected = "a-positive", 1
        elif a_val < -a_band:
            case, expected = "a-negative", 0
        elif dl2 > dl2_band:
            case, expected = "a-zero-dl2-nonzero", 1
        else:
            case, expected = "a-zero-dl2-zero", None
        if expected is not None and expected != n_corr:
            mismatch = True
            warnings.warn(
                f"correction-index mismatch at sigma={sig}: index difference "
                f"{n_corr} vs classification {expected} ({case})", stacklevel=2)
    from .action import action_value
    act = action_value(path, model) if action is None else float(action)
    return IndexReport(sig, path.T, act, m_fixed, m_free, n_corr, a_val, dl2,
                       case, k_fixed, k_free, mismatch)
