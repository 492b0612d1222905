"""sigma-continuation of critical points, spectral flow, bifurcation detection,
crossing curves and stability classification.

Spectral flow over sigma is computed from endpoint Morse indices (integer
exact); crossing forms only localize crossings, provide signs for the
consistency identity, and give the crossing-curve slope

    s'(sigma) = - Gamma_sigma[u] / Gamma_s[u],

whose sign decides stability of a degenerate minimizer: a negative slope
drags the conjugate point into (0, 1) as sigma grows and the path stops being
a minimizer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .action import PathState, action_value
from .hamiltonian import (Crossing, SturmCoefficients, crossing_form,
                          endpoint_kernel, phi_at, propagate,
                          DEFAULT_KERNEL_TOL)
from .morse_index import IndexReport, correction_index, morse_index_fixed
from .potential import PotentialModel
from .solver import SolveConfig, minimize_fixed_T, minimize_free_T


class BifurcationError(RuntimeError):
    pass


@dataclass
class ContinuationMeta:
    step_sigmas: list = field(default_factory=list)
    corrector_residuals: list = field(default_factory=list)
    truncated: bool = False
    diagnostic: str = ""


class SigmaFamily:
    """Continued family of critical points over a sigma grid.

    mode 'fixed-T' solves at T = tau throughout (the k0 > 0 regime); mode
    'free-T' requires interior critical points on the E = k level. Off-grid
    paths (bisection probes, finite differences in sigma) come from warm
    re-solves cached by exact sigma.
    """

    def __init__(self, model, mode, k, tau, cfg: SolveConfig, x_minus, x_plus,
                 continuity_tol=0.1):
        if mode not in ("fixed-T", "free-T"):
            raise BifurcationError(f"unknown family mode {mode!r}")
        self.model = model
        self.mode = mode
        self.k = float(k)
        self.tau = float(tau)
        self.cfg = cfg
        self.x_minus = np.atleast_1d(np.asarray(x_minus, float))
        self.x_plus = np.atleast_1d(np.asarray(x_plus, float))
        self.continuity_tol = continuity_tol
        self.sigmas: np.ndarray = np.empty(0)
        self.paths: list[PathState] = []
        self.reports: list[Optional[IndexReport]] = []
        self.meta = ContinuationMeta()
        self._cache: dict[float, PathState] = {}

    # -- solving -------------------------------------------------------------

    def _solve(self, sigma, warm: Optional[PathState]):
        if self.mode == "fixed-T":
            res = minimize_fixed_T(self.model, sigma, self.tau, self.x_minus,
                                   self.x_plus, self.cfg, k=self.k,
                                   initial=warm)
        else:
            res = minimize_free_T(self.model, sigma, self.k, self.x_minus,
                                  self.x_plus, self.cfg, initial=warm)
            if res.boundary_T:
                raise BifurcationError(
                    f"free-T family hit the time cap at sigma={sigma:.8g} "
                    "(no interior critical point; k below k0?)")
        if not res.converged:
            raise BifurcationError(
                f"corrector failed to converge at sigma={sigma:.8g} "
                f"(residual {res.residual:.3e})")
        return res

    def _nearest_path(self, sigma):
        if not self.paths:
            return None
        j = int(np.argmin(np.abs(self.sigmas - sigma)))
        return self.paths[j]

    def path_at(self, sigma) -> PathState:
        """Converged critical point at sigma (sample, cache, or warm re-solve)."""
        sigma = float(sigma)
        hit = np.nonzero(self.sigmas == sigma)[0]
        if hit.size:
            return self.paths[int(hit[0])]
        if sigma in self._cache:
            return self._cache[sigma]
        res = self._solve(sigma, self._nearest_path(sigma))
        self._cache[sigma] = res.path
        return res.path

    def coefficients(self, sigma, M=None) -> SturmCoefficients:
        return SturmCoefficients.from_path(self.path_at(sigma), self.model, M=M)

    def suggested_dsigma(self):
        if self.sigmas.size >= 2:
            return 1e-3 * (self.sigmas[-1] - self.sigmas[0])
        return 1e-4 * (1.0 + abs(float(self.sigmas[0]) if self.sigmas.size else 1.0))

    def sample_report(self, j) -> IndexReport:
        if self.reports[j] is None:
            path = self.paths[j]
            if self.mode == "free-T":
                self.reports[j] = correction_index(path, self.model, family=self,
                                                   sigma=float(self.sigmas[j]))
            else:
                m_fixed, k_fixed = morse_index_fixed(path, self.model)
                self.reports[j] = IndexReport(
                    float(self.sigmas[j]), path.T,
                    action_value(path, self.model), m_fixed, None, None, None,
                    None, "fixed-T-na", kernel_dim_fixed=k_fixed)
        return self.reports[j]

    def all_reports(self, threads=1):
        """Reports for every sample; fixed-T reports are pure per sample and
        may run on a thread pool (free-T ones re-solve through the shared
        cache and stay sequential)."""
        if threads > 1 and self.mode == "fixed-T":
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(self.sample_report,
                                     range(len(self.paths))))
        return [self.sample_report(j) for j in range(len(self.paths))]

    def relevant_index(self, j):
        rep = self.sample_report(j)
        return rep.m_fixed if self.mode == "fixed-T" else rep.m_free

    def index_at(self, sigma):
        """Mode-relevant Morse index of an off-grid re-solve."""
        path = self.path_at(sigma)
        if self.mode == "fixed-T":
            return morse_index_fixed(path, self.model)[0]
        rep = correction_index(path, self.model, family=None, sigma=sigma)
        return rep.m_free


def continue_family(model: PotentialModel, sigmas, mode, k, tau,
                    cfg: SolveConfig, x_minus, x_plus, seed_path=None,
                    continuity_tol=0.1, max_halvings=6) -> SigmaFamily:
    """Natural-parameter continuation over the requested sigma grid.

    Warm-starts every solve from the previous converged path; on corrector
    failure or a continuity-tolerance violation the step is halved (internal
    intermediate solves) up to max_halvings, after which the family is
    truncated with a diagnostic (possible fold; reported, not followed).
    """
    sigmas = np.atleast_1d(np.asarray(sigmas, float))
    if sigmas.size == 0 or np.any(np.diff(sigmas) <= 0):
        raise BifurcationError("sigma grid must be strictly increasing and nonempty")
    fam = SigmaFamily(model, mode, k, tau, cfg, x_minus, x_plus, continuity_tol)
    collected_s, collected_p = [], []

    def march(sigma, warm):
        res = fam._solve(sigma, warm)
        fam.meta.step_sigmas.append(float(sigma))
        fam.meta.corrector_residuals.append(res.residual)
        return res.path

    try:
        current = march(sigmas[0], seed_path)
    except BifurcationError as exc:
        raise BifurcationError(f"seed solve failed: {exc}") from exc
    collected_s.append(float(sigmas[0]))
    collected_p.append(current)

    for target in sigmas[1:]:
        reached = collected_s[-1]
        path = collected_p[-1]
        ok = True
        while reached < target:
            step = target - reached
            halvings = 0
            while True:
                trial_sigma = reached + step
                try:
                    trial = march(trial_sigma, path)
                except BifurcationError:
                    trial = None
                if trial is not None:
                    defect = float(np.max(np.abs(trial.nodes - path.nodes)))
                    scale = 1.0 + float(np.max(np.abs(path.nodes)))
                    if defect <= continuity_tol * scale:
                        break
                halvings += 1
                if halvings > max_halvings:
                    fam.meta.truncated = True
                    fam.meta.diagnostic = (
                        f"continuation truncated at sigma={reached:.8g}: "
                        "corrector failed below minimum step (possible fold)")
                    ok = False
                    break
                step *= 0.5
            if not ok:
                break
            reached, path = trial_sigma, trial
        if not ok:
            break
        collected_s.append(float(target))
        collected_p.append(path)

    fam.sigmas = np.array(collected_s)
    fam.paths = collected_p
    fam.reports = [None] * len(collected_p)
    for s, p in zip(collected_s, collected_p):
        fam._cache[s] = p
    if fam.meta.truncated:
        warnings.warn(fam.meta.diagnostic, stacklevel=2)
    return fam


class FixtureSigmaFamily:
    """sigma-parametric Sturm fixture: coefficients built per sigma.

    builder(sigma) -> SturmCoefficients. Gives the crossing-form machinery a
    family context independent of the nonlinear solver.
    """

    def __init__(self, builder: Callable[[float], SturmCoefficients],
                 dsigma=1e-4):
        self.builder = builder
        self._dsigma = dsigma

    def coefficients(self, sigma, M=None):
        co = self.builder(float(sigma))
        if M is not None and M != co.M:
            co = SturmCoefficients(co.n, co.T, co.P_of, co.Q_of, co.R_of, M=M,
                                   label=co.label)
        return co

    def suggested_dsigma(self):
        return self._dsigma


@dataclass
class BifurcationPoint:
    sigma_star: float
    kernel_dim: int
    sign: int
    mode: str
    cluster: bool = False

    def as_json(self):
        return {"sigmaStar": self.sigma_star, "kernelDim": self.kernel_dim,
                "sign": self.sign, "mode": self.mode, "cluster": self.cluster}


@dataclass
class CrossingBranch:
    sigma_star: float
    s_star: float
    sigmas: np.ndarray
    s_values: np.ndarray
    slope_ratio: float
    slope_secant: float
    form_sigma: float
    form_s: float

    @property
    def agree(self):
        denom = max(abs(self.slope_ratio), abs(self.slope_secant), 1e-12)
        return abs(self.slope_ratio - self.slope_secant) <= 0.1 * denom


@dataclass
class BifurcationReport:
    sf_sigma: int
    sf_hamiltonian: int
    sf_a: Optional[int]
    sf_a_applicable: bool
    decomposition_holds: Optional[bool]
    endpoint_sigmas: tuple
    notes: str = ""
    bifurcation_points: list = field(default_factory=list)
    branches: list = field(default_factory=list)
    verdict: Optional[str] = None


def _plus_index(value, band):
    """m^+ of a scalar outside its zero band; None inside the band."""
    if value > band:
        return 1
    if value < -band:
        return 0
    return None


def spectral_flow_sigma(family: SigmaFamily) -> BifurcationReport:
    """Endpoint-index spectral flows and the decomposition identity.

    sf_sigma from the free (or fixed, per mode) Morse indices, sf_hamiltonian
    from the fixed ones, sf_a from the correction indices when the
    m^+(a) = n hypothesis holds at both endpoints.
    """
    if len(family.paths) == 0:
        raise BifurcationError("empty family")
    reports = family.all_reports()
    lo, hi = 0, len(reports) - 1
    kdim = (lambda r: r.kernel_dim_fixed) if family.mode == "fixed-T" else \
        (lambda r: r.kernel_dim_free)
    notes = []
    while lo < hi and kdim(reports[lo]):
        lo += 1
    while hi > lo and kdim(reports[hi]):
        hi -= 1
    if lo != 0 or hi != len(reports) - 1:
        warnings.warn("degenerate family endpoints perturbed inward",
                      stacklevel=2)
        notes.append(f"endpoints moved to samples {lo}..{hi} (degeneracy)")
    if lo >= hi:
        raise BifurcationError("no non-degenerate endpoint pair in the family")
    r0, r1 = reports[lo], reports[hi]
    sf_ham = r1.m_fixed - r0.m_fixed
    if family.mode == "fixed-T":
        sf_sigma_val = sf_ham
        sf_a, applicable, holds = None, False, None
    else:
        sf_sigma_val = r1.m_free - r0.m_free
        band0 = 1e-6 * (1.0 + abs(r0.a_sigma or 0.0))
        band1 = 1e-6 * (1.0 + abs(r1.a_sigma or 0.0))
        h0 = _plus_index(r0.a_sigma, band0) if r0.a_sigma is not None else None
        h1 = _plus_index(r1.a_sigma, band1) if r1.a_sigma is not None else None
        applicable = (h0 is not None and h0 == r0.n_correction
                      and h1 is not None and h1 == r1.n_correction)
        if applicable:
            sf_a = r1.n_correction - r0.n_correction
            holds = (sf_sigma_val == sf_ham + sf_a)
            if not holds:
                warnings.warn(
                    f"spectral-flow decomposition violated: {sf_sigma_val} != "
                    f"{sf_ham} + {sf_a}", stacklevel=2)
        else:
            sf_a, holds = None, None
            notes.append("sf(a) not applicable: m+(a) = n fails at an endpoint")
    return BifurcationReport(sf_sigma_val, sf_ham, sf_a, applicable, holds,
                             (float(family.sigmas[lo]), float(family.sigmas[hi])),
                             "; ".join(notes))


def detect_bifurcations(family: SigmaFamily, resolution_rel=1e-6
                        ) -> list[BifurcationPoint]:
    """Localize index jumps by bisection on sigma with warm re-solves."""
    if len(family.paths) < 2:
        return []
    span = float(family.sigmas[-1] - family.sigmas[0])
    resolution = resolution_rel * span
    indices = [family.relevant_index(j) for j in range(len(family.paths))]
    points = []
    for j in range(len(indices) - 1):
        if indices[j] == indices[j + 1]:
            continue
        lo, hi = float(family.sigmas[j]), float(family.sigmas[j + 1])
        ilo, ihi = indices[j], indices[j + 1]
        while hi - lo > resolution:
            mid = 0.5 * (lo + hi)
            imid = family.index_at(mid)
            if imid == ilo:
                lo = mid
            else:
                hi, ihi = mid, imid
        jump = ihi - ilo
        cluster = abs(jump) > family.paths[0].n
        if cluster:
            warnings.warn(
                f"index jump {jump} across one minimal step at sigma~"
                f"{0.5 * (lo + hi):.8g}: unresolved cluster", stacklevel=2)
        points.append(BifurcationPoint(0.5 * (lo + hi), abs(jump),
                                       1 if jump > 0 else -1, family.mode,
                                       cluster))
    return points


def _det_c(coeffs, fs, s):
    n = coeffs.n
    return float(np.linalg.det(phi_at(fs, s)[n:, :n]))


def _track_zero(coeffs, s_guess, bracket=5e-3, refine=1e-10):
    """Nearest zero of det c(s) to s_guess, or None."""
    fs = propagate(coeffs, 1.0)
    width = bracket
    for _ in range(8):
        lo = max(1e-6, s_guess - width)
        hi = min(1.0, s_guess + width)
        flo, fhi = _det_c(coeffs, fs, lo), _det_c(coeffs, fs, hi)
        if flo * fhi < 0:
            while hi - lo > refine:
                mid = 0.5 * (lo + hi)
                fm = _det_c(coeffs, fs, mid)
                if fm == 0.0:
                    return mid
                if flo * fm < 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            return 0.5 * (lo + hi)
        width *= 2.0
        if s_guess + width > 1.0 and s_guess - width < 0.0:
            break
    return None


def crossing_curve(source, sigma_star, s_star, window=None, samples=7, M=None
                   ) -> CrossingBranch:
    """Track the crossing curve s(sigma) through (sigma_star, s_star).

    The slope at the center is computed both as the crossing-form ratio
    -Gamma_sigma/Gamma_s and as the secant of the tracked branch; the two are
    reported for the 10% agreement check. Requires a one-dimensional kernel.
    """
    sigma_star = float(sigma_star)
    coeffs = source.coefficients(sigma_star, M=M)
    s_center = _track_zero(coeffs, float(s_star))
    if s_center is None:
        # crossing may sit exactly at s = 1 (tangency): fall back to supplied
        s_center = float(s_star)
    fs = propagate(coeffs, 1.0, M)
    n = coeffs.n
    c = phi_at(fs, s_center)[n:, :n]
    from .hamiltonian import _kernel_of_block
    dim, basis, smin, scale = _kernel_of_block(c, DEFAULT_KERNEL_TOL, force_dim=1)
    if dim != 1:
        raise BifurcationError(
            f"crossing at (sigma={sigma_star:.6g}, s={s_center:.6g}) has "
            f"kernel dimension {dim}; branch not tracked")
    crossing = Crossing(s_center, 1, basis, smin, scale)
    gs = crossing_form(coeffs, crossing, direction="s", M=M)
    gsig = crossing_form(coeffs, crossing, direction="sigma", family=source,
                         sigma=sigma_star, M=M)
    slope_ratio = -gsig.value / gs.value

    if window is None:
        window = 0.04 * max(abs(sigma_star), source.suggested_dsigma() * 100)
    sigmas = np.linspace(sigma_star - window, sigma_star + window, samples)
    s_values = np.full(samples, np.nan)
    for i, sg in enumerate(sigmas):
        try:
            co = source.coefficients(float(sg), M=M)
        except BifurcationError:
            continue
        guess = s_center + slope_ratio * (sg - sigma_star)
        z = _track_zero(co, min(max(guess, 1e-4), 1.0 - 1e-12))
        if z is not None:
            s_values[i] = z
    good = np.isfinite(s_values)
    if good.sum() >= 2:
        slope_secant = float(np.polyfit(sigmas[good], s_values[good], 1)[0])
    else:
        slope_secant = np.nan
    return CrossingBranch(sigma_star, s_center, sigmas, s_values, slope_ratio,
                          slope_secant, gsig.value, gs.value)


SLOPE_INDETERMINATE_BAND = 1e-4


@dataclass
class StabilityVerdict:
    verdict: str
    sigma0: float
    mode: str
    detail: str = ""
    slope: Optional[float] = None
    n_samples: tuple = ()


def classify_stability(family: SigmaFamily, sigma0=None,
                       kernel_tol=DEFAULT_KERNEL_TOL) -> StabilityVerdict:
    """Stability of the sigma0 minimizer under small positive noise changes.

    Fixed-T regime: a non-degenerate s = 1 operator means the index cannot
    move (positively-stable); a one-dimensional degeneracy is decided by the
    crossing-curve slope. Free-T regime: a correction index of 1 just above
    sigma0 means noise-sensitive; identically 0 reduces to the fixed-T
    verdict.
    """
    if sigma0 is None:
        sigma0 = float(family.sigmas[0])
    hit = np.nonzero(family.sigmas == sigma0)[0]
    if not hit.size:
        raise BifurcationError("sigma0 must be one of the family samples")
    j = int(hit[0])
    rep = family.sample_report(j)
    if rep.m_fixed != 0 or (family.mode == "free-T" and rep.m_free != 0):
        raise BifurcationError(
            f"sigma0 sample is not a certified minimizer (m_fixed={rep.m_fixed}"
            f", m_free={rep.m_free})")
    span = float(family.sigmas[-1] - family.sigmas[0]) or max(abs(sigma0), 1.0)

    def fixed_T_verdict():
        coeffs = family.coefficients(sigma0)
        dim, _basis, smin, scale = endpoint_kernel(coeffs, kernel_tol=kernel_tol)
        if dim == 0:
            return StabilityVerdict("positively-stable", sigma0, family.mode,
                                    "s = 1 operator non-degenerate")
        if dim > 1:
            return StabilityVerdict("indeterminate", sigma0, family.mode,
                                    f"s = 1 kernel dimension {dim} > 1")
        branch = crossing_curve(family, sigma0, 1.0)
        slope = branch.slope_ratio
        if slope >= SLOPE_INDETERMINATE_BAND:
            v = "positively-stable"
        elif slope <= -SLOPE_INDETERMINATE_BAND:
            v = "positively-unstable"
        else:
            v = "indeterminate"
        return StabilityVerdict(v, sigma0, family.mode,
                                f"degenerate s = 1, slope {slope:.6g}",
                                slope=slope)

    if family.mode == "fixed-T":
        return fixed_T_verdict()

    probes = [sigma0 + f * 1e-3 * span for f in (1.0, 2.0, 4.0)]
    ns = []
    for sg in probes:
        path = family.path_at(sg)
        r = correction_index(path, family.model, family=family, sigma=sg)
        ns.append(r.n_correction)
    if all(v == 1 for v in ns):
        return StabilityVerdict("noise-sensitive", sigma0, family.mode,
                                "correction index 1 just above sigma0",
                                n_samples=tuple(ns))
    if all(v == 0 for v in ns):
        verdict = fixed_T_verdict()
        verdict.n_samples = tuple(ns)
        verdict.detail = "n = 0 above sigma0; " + verdict.detail
        return verdict
    return StabilityVerdict("indeterminate", sigma0, family.mode,
                            f"mixed correction indices {ns} above sigma0",
                            n_samples=tuple(ns))
