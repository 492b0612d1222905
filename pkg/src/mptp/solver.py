"""Critical points of the discretized action.

Fixed-time solves run damped Newton on the interior-node gradient with a
banded factorization of the block-tridiagonal Hessian. Free-time solves do a
joint Newton on (nodes, theta), where T = Tmin + (tau - Tmin) * sigmoid(theta)
keeps the duration inside (Tmin, tau] without constrained optimization; the
time cap binding shows up as theta running off to +inf, at which point the
solve finishes as a fixed-time problem at T = tau and is flagged boundary.

The merit for the line search is |grad|^2, so warm-started solves track the
nearby critical-point branch whether or not it stays a minimizer. Minimality
is certified afterwards by the index computations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .action import PathState, action_gradient, action_hessian, action_value, \
    path_energy
from .potential import PotentialModel

THETA_CAP = 36.0


class SolverError(RuntimeError):
    pass


@dataclass
class SolveConfig:
    N: int = 200
    tol_grad: float = 1e-10
    max_iter: int = 200
    tau: float = 2.0
    t_min: float = 1e-3
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    multi_start: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.t_min < self.tau):
            raise ValueError("require 0 < Tmin < tau")
        if self.tol_grad <= 0:
            raise ValueError("tolGrad must be positive")


@dataclass
class SolveResult:
    path: PathState
    converged: bool
    boundary_T: bool
    residual: float
    iterations: int
    grad_T: float = 0.0


@dataclass
class EnergyIdentityReport:
    ok: bool
    interior: bool
    energy_mean: float
    energy_dev: float
    k: float
    grad_T: float
    tolerance: float
    notes: str = ""


def _sigmoid(theta):
    if theta >= 0:
        z = np.exp(-theta)
        return 1.0 / (1.0 + z)
    z = np.exp(theta)
    return z / (1.0 + z)


def _theta_of_T(T, t_min, tau):
    frac = (T - t_min) / (tau - t_min)
    frac = min(max(frac, 1e-12), 1.0 - 1e-12)
    return float(np.log(frac / (1.0 - frac)))


def _initial_path(model, sigma, k, x_minus, x_plus, T, cfg, initial):
    if initial is not None:
        nodes = np.array(initial.nodes)
        if nodes.shape[0] - 1 != cfg.N:
            # resample a warm start onto the configured grid
            ts = np.linspace(0.0, 1.0, cfg.N + 1)
            nodes = initial.at_times(ts)
        nodes[0] = np.atleast_1d(np.asarray(x_minus, float))
        nodes[-1] = np.atleast_1d(np.asarray(x_plus, float))
        return PathState(nodes, T, sigma, k)
    return PathState.straight_line(x_minus, x_plus, cfg.N, T, sigma, k)


def _newton_fixed(path, model, cfg):
    """Damped Newton for grad_x = 0 at fixed T.

    A stall (no damped step reduces the residual, damping exhausted) means
    the start sits in a basin without a critical point; the best iterate is
    returned unconverged and multi-start or a warm start is the remedy.
    """
    lam = 0.0
    z = path.interior()
    gx, _gT = action_gradient(path, model)
    res = float(np.abs(gx).max())
    for it in range(cfg.max_iter):
        if res <= cfg.tol_grad:
            return path, True, res, it
        blocks = action_hessian(path, model, 0.0)
        for attempt in range(12):
            try:
                p = blocks.solve_A(-gx, damping=lam)
            except scipy.linalg.LinAlgError:
                lam = max(4.0 * lam, 1e-8)
                continue
            if np.all(np.isfinite(p)):
                break
            lam = max(4.0 * lam, 1e-8)
        else:
            raise SolverError("non-finite Newton step")
        alpha, accepted = 1.0, False
        for _ in range(cfg.max_backtracks):
            trial = path.with_interior(z + alpha * p)
            g_new, _ = action_gradient(trial, model)
            res_new = float(np.abs(g_new).max())
            if np.isfinite(res_new) and res_new <= res * (1.0 - cfg.armijo * alpha):
                accepted = True
                break
            alpha *= cfg.backtrack
        if not accepted:
            lam = max(4.0 * lam, 1e-8)
            if lam > 1e12:
                break
            continue
        lam = 0.0 if alpha == 1.0 else max(lam * 0.25, 0.0)
        path, z, gx, res = trial, trial.interior(), g_new, res_new
    return path, res <= cfg.tol_grad, res, cfg.max_iter


def minimize_fixed_T(model: PotentialModel, sigma, T, x_minus, x_plus,
                     cfg: SolveConfig, k=0.0, initial=None) -> SolveResult:
    """Critical point of the fixed-duration action; straight-line init."""
    if T <= 0:
        raise ValueError("T must be positive")
    path = _initial_path(model, sigma, k, x_minus, x_plus, T, cfg, initial)
    path, ok, res, its = _newton_fixed(path, model, cfg)
    _gx, gT = action_gradient(path, model)
    return SolveResult(path, ok, False, res, its, grad_T=gT)


def _free_step(path, theta, model, cfg, lam):
    """One damped Newton direction for the joint (nodes, theta) system."""
    t_min, tau = cfg.t_min, cfg.tau
    s = _sigmoid(theta)
    T = t_min + (tau - t_min) * s
    dT = (tau - t_min) * s * (1.0 - s)
    d2T = (tau - t_min) * s * (1.0 - s) * (1.0 - 2.0 * s)
    gx, gT = action_gradient(path, model)
    g_theta = gT * dT
    blocks = action_hessian(path, model, 0.0)
    # Schur elimination of the theta border on the banded A + lam
    rhs = np.column_stack([-gx, blocks.Bcol * dT])
    try:
        sol = blocks.solve_A(rhs, damping=lam)
    except scipy.linalg.LinAlgError:
        return None
    y_g, y_B = sol[:, 0], sol[:, 1]
    h_tt = blocks.C * dT * dT + gT * d2T + lam
    schur = h_tt - float(blocks.Bcol * dT @ y_B)
    if schur == 0.0 or not np.isfinite(schur):
        return None
    p_theta = (-g_theta - float(blocks.Bcol * dT @ y_g)) / schur
    p_x = y_g - y_B * p_theta
    if not (np.all(np.isfinite(p_x)) and np.isfinite(p_theta)):
        return None
    return p_x, float(np.clip(p_theta, -4.0, 4.0)), gx, gT, g_theta, T


def minimize_free_T(model: PotentialModel, sigma, k, x_minus, x_plus,
                    cfg: SolveConfig, initial=None) -> SolveResult:
    """Joint critical point in (path, T) with T constrained to (Tmin, tau].

    If the duration runs into the cap the solve finishes at T = tau and the
    result carries boundary_T = True (the k < k0 regime).
    """
    T0 = cfg.tau / 2.0
    if initial is not None and cfg.t_min < initial.T:
        T0 = min(initial.T, cfg.tau * (1.0 - 1e-9))
    theta = _theta_of_T(T0, cfg.t_min, cfg.tau)
    path = _initial_path(model, sigma, k, x_minus, x_plus, T0, cfg, initial)
    lam = 0.0

    def residual_of(pth):
        gx, gT = action_gradient(pth, model)
        return max(float(np.abs(gx).max()), abs(gT)), gx, gT

    res, gx, gT = residual_of(path)
    for it in range(cfg.max_iter):
        if res <= cfg.tol_grad:
            return SolveResult(path, True, False, res, it, grad_T=gT)
        if theta > THETA_CAP:
            break
        step = _free_step(path, theta, model, cfg, lam)
        if step is None:
            lam = max(4.0 * lam, 1e-8)
            if lam > 1e12:
                raise SolverError("non-finite Newton step in free-T solve")
            continue
        p_x, p_theta, gx, gT, g_theta, T = step
        merit = max(float(np.abs(gx).max()), abs(g_theta))
        alpha, accepted = 1.0, False
        z = path.interior()
        for _ in range(cfg.max_backtracks):
            theta_new = theta + alpha * p_theta
            if theta_new > THETA_CAP:
                accepted = True  # cap reached; handled below
                theta = theta_new
                break
            T_new = cfg.t_min + (cfg.tau - cfg.t_min) * _sigmoid(theta_new)
            trial = PathState(
                np.vstack([path.nodes[0][None, :],
                           (z + alpha * p_x).reshape(path.N - 1, path.n),
                           path.nodes[-1][None, :]]),
                T_new, sigma, k)
            g_newx, g_newT = action_gradient(trial, model)
            dT_new = (cfg.tau - cfg.t_min) * _sigmoid(theta_new) * (1 - _sigmoid(theta_new))
            merit_new = max(float(np.abs(g_newx).max()), abs(g_newT * dT_new))
            if np.isfinite(merit_new) and merit_new <= merit * (1.0 - cfg.armijo * alpha):
                accepted = True
                path, theta = trial, theta_new
                break
            alpha *= cfg.backtrack
        if not accepted:
            lam = max(4.0 * lam, 1e-8)
            if lam > 1e12:
                break
            continue
        if theta > THETA_CAP:
            break
        lam = 0.0 if alpha == 1.0 else max(lam * 0.25, 0.0)
        res, gx, gT = residual_of(path)

    if theta > THETA_CAP or path.T >= cfg.tau * (1.0 - 1e-9):
        fixed = minimize_fixed_T(model, sigma, cfg.tau, x_minus, x_plus, cfg,
                                 k=k, initial=path)
        _gx2, gT2 = action_gradient(fixed.path, model)
        return SolveResult(fixed.path, fixed.converged, True, fixed.residual,
                           fixed.iterations, grad_T=gT2)
    # interior but out of iterations: report best iterate
    res, _gx, gT = residual_of(path)
    return SolveResult(path, res <= cfg.tol_grad, False, res, cfg.max_iter,
                       grad_T=gT)


def minimize_free_T_multistart(model, sigma, k, x_minus, x_plus, cfg,
                               initial=None):
    """Best converged free-T solve over straight-line plus seeded perturbations."""
    results = [minimize_free_T(model, sigma, k, x_minus, x_plus, cfg, initial)]
    if cfg.multi_start > 0:
        rng = np.random.default_rng(cfg.seed)
        base = PathState.straight_line(x_minus, x_plus, cfg.N, cfg.tau / 2.0,
                                       sigma, k)
        ts = np.linspace(0.0, 1.0, cfg.N + 1)
        for _ in range(cfg.multi_start):
            nodes = np.array(base.nodes)
            for m in range(1, 4):
                amp = rng.normal(0.0, 0.5 / m, size=base.n)
                nodes += np.sin(np.pi * m * ts)[:, None] * amp[None, :]
            seed_path = PathState(nodes, base.T, sigma, k)
            results.append(minimize_free_T(model, sigma, k, x_minus, x_plus,
                                           cfg, initial=seed_path))
    converged = [r for r in results if r.converged]
    if not converged:
        return results[0]
    return min(converged, key=lambda r: action_value(r.path, model))


def check_energy_identity(result: SolveResult, model: PotentialModel, k
                          ) -> EnergyIdentityReport:
    """Interior critical points conserve E = k; boundary results report grad_T."""
    stats = path_energy(result.path, model)
    N = result.path.N
    scale = 1.0 + abs(k) + float(np.abs(stats.samples).max())
    tol = 10.0 * scale / N ** 2
    if result.boundary_T:
        note = "" if result.grad_T < 0 else \
            "grad_T >= 0 at the binding cap is inconsistent with a boundary minimizer"
        return EnergyIdentityReport(result.grad_T < 0, False, stats.mean,
                                    stats.dev, k, result.grad_T, tol, note)
    ok = abs(stats.mean - k) <= tol and stats.dev <= tol
    note = "" if ok else "interior critical point off the E = k level"
    return EnergyIdentityReport(ok, True, stats.mean, stats.dev, k,
                                result.grad_T, tol, note)
