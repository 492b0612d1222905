"""Built-in oracle suite behind `mptp selftest`.

Each check returns (name, passed, detail). The suite is intentionally fast
(well under a minute) and pure: closed-form solutions, finite-difference
consistency, symplecticity, and the integer index identities.
"""

from __future__ import annotations

import numpy as np

from .action import (PathState, action_gradient, action_hessian, action_value,
                     k0_value, path_energy)
from .hamiltonian import (SturmCoefficients, assemble_B, conjugate_scan,
                          propagate, spectral_flow_s)
from .morse_index import morse_index_fixed, morse_index_from_coeffs, \
    correction_index
from .potential import PotentialModel
from .solver import SolveConfig, minimize_fixed_T, minimize_free_T


def _check(name, condition, detail):
    return (name, bool(condition), detail)


def run_selftest(tolerances=None):
    tolerances = tolerances or {}
    kernel_tol = float(tolerances.get("kernelTol") or 1e-8)
    results = []
    quad = PotentialModel.quadratic(1)
    dwell = PotentialModel.double_well_1d()

    # 1. fixed-T quadratic closed form
    cfg = SolveConfig(N=400, tau=2.0)
    res = minimize_fixed_T(quad, 0.5, 1.0, [1.0], [2.0], cfg)
    ts = np.linspace(0.0, 1.0, 401)
    beta = (2.0 - np.cosh(1.0)) / np.sinh(1.0)
    exact = np.cosh(ts) + beta * np.sinh(ts)
    err = float(np.abs(res.path.nodes[:, 0] - exact).max())
    results.append(_check("fixed-T cosh oracle", res.converged and err <= 1e-6,
                          f"sup error {err:.2e}"))

    # 2. free-T quadratic action and energy level
    res2 = minimize_free_T(quad, 0.5, 0.0, [1.0], [2.0], cfg)
    target = np.sqrt(3.0) - 0.5 * np.arccosh(2.0)
    act = action_value(res2.path, quad)
    stats = path_energy(res2.path, quad)
    ok2 = (res2.converged and not res2.boundary_T
           and abs(act - target) <= 5e-4 and stats.dev <= 1e-4)
    results.append(_check("free-T action oracle", ok2,
                          f"action err {abs(act - target):.2e}, "
                          f"energy dev {stats.dev:.2e}"))

    # 3. gradient/Hessian finite-difference consistency
    rng = np.random.default_rng(7)
    nodes = np.linspace(-1.0, 1.0, 41)[:, None] + 0.2 * rng.standard_normal((41, 1))
    nodes[0], nodes[-1] = -1.0, 1.0
    path = PathState(nodes, 1.7, 0.3, 0.1)
    gx, _gT = action_gradient(path, dwell)
    h = 1e-6
    z = path.interior()
    fd = np.empty_like(gx)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd[i] = (action_value(path.with_interior(zp), dwell)
                 - action_value(path.with_interior(zm), dwell)) / (2 * h)
    gerr = float(np.abs(fd - gx).max() / np.abs(gx).max())
    A = action_hessian(path, dwell, 0.0).dense_A()
    fdH = np.empty_like(A)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fdH[:, i] = (action_gradient(path.with_interior(zp), dwell)[0]
                     - action_gradient(path.with_interior(zm), dwell)[0]) / (2 * h)
    herr = float(np.abs(fdH - A).max() / np.abs(A).max())
    results.append(_check("derivative FD consistency",
                          gerr <= 1e-6 and herr <= 1e-5,
                          f"grad {gerr:.2e}, hess {herr:.2e}"))

    # 4. symplecticity of propagation
    co_dw = SturmCoefficients.from_path(res.path, quad, M=800)
    fs = propagate(co_dw, 1.0)
    results.append(_check("symplecticity", fs.defect <= 1e-8,
                          f"defect {fs.defect:.2e}"))

    # 5. Sturm fixture: crossings, spectral flow, inertia equality
    R = -(2.5 * np.pi) ** 2
    co = SturmCoefficients.constant(1.0, [[R]], M=1600)
    crossings = [c for c in conjugate_scan(co, kernel_tol=kernel_tol,
                                           compute_forms=False) if c.clean]
    locs = sorted(c.s for c in crossings)
    loc_ok = (len(locs) == 2 and abs(locs[0] - 0.4) <= 1e-6
              and abs(locs[1] - 0.8) <= 1e-6)
    sf = spectral_flow_s(co, kernel_tol=kernel_tol)
    inertia = morse_index_from_coeffs(co, 200)[0]
    ok5 = loc_ok and sf.value == 3 and inertia == 2 and sf.value - 1 == inertia
    results.append(_check("Sturm fixture oracle", ok5,
                          f"crossings {['%.6f' % v for v in locs]}, "
                          f"sf {sf.value}, inertia {inertia}"))

    # 6. conjugate scan cleanliness on a crossing-free fixture
    co_pos = SturmCoefficients.constant(np.arccosh(2.0), [[1.0]], M=800)
    reported = conjugate_scan(co_pos, kernel_tol=kernel_tol,
                              compute_forms=False)
    results.append(_check("no spurious conjugate points", len(reported) == 0,
                          f"{len(reported)} crossing(s) reported"))

    # 7. Morse index theorem on a double-well sample
    cfg_dw = SolveConfig(N=200, tau=4.0)
    res_dw = minimize_fixed_T(dwell, 0.3, 4.0, [-1.0], [1.0], cfg_dw)
    m_fixed = morse_index_fixed(res_dw.path, dwell)[0]
    co_path = SturmCoefficients.from_path(res_dw.path, dwell)
    count = sum(c.kernel_dim for c in conjugate_scan(co_path, kernel_tol=kernel_tol,
                                                     compute_forms=False)
                if c.clean)
    results.append(_check("Morse index theorem", m_fixed == count,
                          f"inertia {m_fixed} vs conjugate count {count}"))

    # 8. correction index in {0, 1} and k0 identity
    rep = correction_index(res2.path, quad)
    cv = k0_value(dwell, 0.2, [-1.0], [1.0])
    ok8 = rep.n_correction in (0, 1) and abs(cv.k0 - 0.4) <= 1e-9 \
        and cv.k0 <= cv.c_u
    results.append(_check("index and k0 identities", ok8,
                          f"n={rep.n_correction}, k0 err {abs(cv.k0 - 0.4):.1e}"))

    # 9. scaled coefficient path symmetry
    B = assemble_B(co_dw, 0.7, np.linspace(0.0, 1.0, 11))
    sym = float(np.abs(B - np.swapaxes(B, -1, -2)).max())
    results.append(_check("coefficient symmetry", sym <= 1e-12,
                          f"asymmetry {sym:.1e}"))
    return results
