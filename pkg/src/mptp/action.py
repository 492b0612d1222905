"""Discretized free-time Lagrangian action and its derivatives.

A path is a piecewise-linear curve x_0..x_N on the uniform grid t_i = i/N of
the unit interval, traversed in physical time T. With midpoint quadrature the
action reads

    L_k(x, T) = sum_i  N |x_{i+1} - x_i|^2 / (2T) + (T/N) (k - U(sigma, m_i)),

m_i the interval midpoints. Gradients and the second-variation blocks
(A, B, C) below are the exact derivatives of this discrete functional, so
finite-difference oracles close to machine precision. The Mane value c_u and
the endpoint critical value k_0 live here too since they are properties of
the same Lagrangian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .potential import PotentialModel, _resolve_box

FMT = "%.17g"


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class PathState:
    """Discrete transition path with its noise and energy-offset context."""

    nodes: np.ndarray          # (N+1, n)
    T: float
    sigma: float = 0.0
    k: float = 0.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[0] < 3:
            raise PathError("nodes must be (N+1, n) with N >= 2")
        if not np.all(np.isfinite(nodes)):
            raise PathError("non-finite path nodes")
        if not (self.T > 0):
            raise PathError("T must be positive")
        if self.sigma < 0:
            raise PathError("sigma must be >= 0")
        nodes = nodes.copy()
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def N(self):
        return self.nodes.shape[0] - 1

    @property
    def n(self):
        return self.nodes.shape[1]

    @property
    def x_minus(self):
        return self.nodes[0]

    @property
    def x_plus(self):
        return self.nodes[-1]

    def midpoints(self):
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def deltas(self):
        return self.nodes[1:] - self.nodes[:-1]

    def interior(self):
        """Interior nodes flattened to shape ((N-1)*n,)."""
        return self.nodes[1:-1].reshape(-1)

    def with_interior(self, z):
        nodes = np.array(self.nodes)
        nodes[1:-1] = np.asarray(z, float).reshape(self.N - 1, self.n)
        return PathState(nodes, self.T, self.sigma, self.k)

    def with_T(self, T):
        return PathState(np.array(self.nodes), float(T), self.sigma, self.k)

    def at_times(self, ts):
        """Piecewise-linear interpolation of the nodes at times in [0, 1]."""
        ts = np.asarray(ts, float)
        out = np.empty(ts.shape + (self.n,))
        grid = np.linspace(0.0, 1.0, self.N + 1)
        for j in range(self.n):
            out[..., j] = np.interp(ts, grid, self.nodes[:, j])
        return out

    @staticmethod
    def straight_line(x_minus, x_plus, N, T, sigma=0.0, k=0.0):
        x_minus = np.atleast_1d(np.asarray(x_minus, float))
        x_plus = np.atleast_1d(np.asarray(x_plus, float))
        ts = np.linspace(0.0, 1.0, N + 1)[:, None]
        return PathState(x_minus[None, :] * (1 - ts) + x_plus[None, :] * ts,
                         T, sigma, k)


@dataclass
class HessianBlocks:
    """Second variation of the discrete action at a path.

    A is the interior-node Hessian (block tridiagonal, stored as diagonal and
    super-diagonal n x n blocks) including the regularization (r/T) * mass;
    Bcol the mixed node/T column; C the T-T entry (1+r) * kappa / T^3 with
    kappa the midpoint quadrature of <P xdot, xdot>.
    """

    diag: np.ndarray      # (N-1, n, n)
    off: np.ndarray       # (N-2, n, n)
    Bcol: np.ndarray      # ((N-1)*n,)
    C: float
    r: float
    T: float
    kappa: float

    @property
    def n(self):
        return self.diag.shape[1]

    @property
    def size(self):
        return self.diag.shape[0] * self.n

    def dense_A(self):
        m, n = self.diag.shape[0], self.n
        A = np.zeros((m * n, m * n))
        for j in range(m):
            A[j * n:(j + 1) * n, j * n:(j + 1) * n] = self.diag[j]
        for j in range(m - 1):
            A[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] = self.off[j]
            A[(j + 1) * n:(j + 2) * n, j * n:(j + 1) * n] = self.off[j].T
        return A

    def banded_A(self):
        """LAPACK band storage (ab, l_and_u) for scipy.linalg.solve_banded."""
        m, n = self.diag.shape[0], self.n
        size = m * n
        half = 2 * n - 1
        ab = np.zeros((2 * half + 1, size))
        A = None
        if n == 1:
            ab[half, :] = self.diag[:, 0, 0]
            if m > 1:
                ab[half - 1, 1:] = self.off[:, 0, 0]
                ab[half + 1, :-1] = self.off[:, 0, 0]
            return ab, half
        A = self.dense_A()
        for i in range(size):
            lo = max(0, i - half)
            hi = min(size, i + half + 1)
            for j in range(lo, hi):
                ab[half + i - j, j] = A[i, j]
        return ab, half

    def bordered_dense(self):
        A = self.dense_A()
        size = A.shape[0]
        out = np.zeros((size + 1, size + 1))
        out[:size, :size] = A
        out[:size, size] = self.Bcol
        out[size, :size] = self.Bcol
        out[size, size] = self.C
        return out

    def solve_A(self, rhs, damping=0.0):
        ab, half = self.banded_A()
        if damping:
            ab[half, :] += damping
        return scipy.linalg.solve_banded((half, half), ab, rhs)


@dataclass
class CriticalValues:
    c_u: float
    k0: float
    k0_method: str
    argmax: Optional[np.ndarray] = None


@dataclass
class EnergyStats:
    samples: np.ndarray
    mean: float
    dev: float


def _midpoint_data(path: PathState, model: PotentialModel):
    mids = path.midpoints()
    U, gU, hU = model.effective_batch(path.sigma, mids)
    return mids, U, gU, hU


def action_value(path: PathState, model: PotentialModel) -> float:
    N, T = path.N, path.T
    d = path.deltas()
    U = model.effective_batch(path.sigma, path.midpoints())[0]
    kinetic = N * float(np.einsum("ij,ij->", d, d)) / (2.0 * T)
    return kinetic + (T / N) * float(np.sum(path.k - U))


def om_value(path: PathState, model: PotentialModel) -> float:
    """Action at k=0 plus the boundary shift V(x+) - V(x-)."""
    zero_k = PathState(np.array(path.nodes), path.T, path.sigma, 0.0)
    shift = float(model.value_batch(path.x_plus[None, :])[0]
                  - model.value_batch(path.x_minus[None, :])[0])
    return action_value(zero_k, model) + shift


def path_energy(path: PathState, model: PotentialModel) -> EnergyStats:
    N, T = path.N, path.T
    d = path.deltas()
    U = model.effective_batch(path.sigma, path.midpoints())[0]
    E = 0.5 * np.einsum("ij,ij->i", d, d) * (N / T) ** 2 + U
    mean = float(np.mean(E))
    return EnergyStats(E, mean, float(np.max(np.abs(E - mean))))


def action_gradient(path: PathState, model: PotentialModel):
    """Exact gradient of the discrete action: (interior flat, dT)."""
    N, T, n = path.N, path.T, path.n
    d = path.deltas()
    _mids, U, gU, _hU = _midpoint_data(path, model)
    # node j gets kinetic terms from intervals j-1, j and the two midpoints
    gx = (N / T) * (path.nodes[1:-1] - path.nodes[:-2]) \
        - (N / T) * (path.nodes[2:] - path.nodes[1:-1]) \
        - (T / (2.0 * N)) * (gU[:-1] + gU[1:])
    E = 0.5 * np.einsum("ij,ij->i", d, d) * (N / T) ** 2 + U
    gT = float(np.mean(path.k - E))
    return gx.reshape(-1), gT


def action_hessian(path: PathState, model: PotentialModel, r: float = 0.0
                   ) -> HessianBlocks:
    if r < 0:
        raise PathError("regularization weight r must be >= 0")
    N, T, n = path.N, path.T, path.n
    d = path.deltas()
    _mids, U, gU, hU = _midpoint_data(path, model)
    eye = np.eye(n)
    diag = np.empty((N - 1, n, n))
    off = np.empty((N - 2, n, n))
    for j in range(N - 1):
        diag[j] = (2.0 * N / T) * eye - (T / (4.0 * N)) * (hU[j] + hU[j + 1])
    for j in range(N - 2):
        off[j] = -(N / T) * eye - (T / (4.0 * N)) * hU[j + 1]
    if r:
        # midpoint mass matrix: diag 1/(2N), off 1/(4N), times P = identity
        diag += (r / T) * (1.0 / (2.0 * N)) * eye
        off += (r / T) * (1.0 / (4.0 * N)) * eye
    second = 2.0 * path.nodes[1:-1] - path.nodes[:-2] - path.nodes[2:]
    Bcol = (-(N / T ** 2) * second - (1.0 / (2.0 * N)) * (gU[:-1] + gU[1:])
            ).reshape(-1)
    kappa = float(np.einsum("ij,ij->", d, d)) * N   # (1/N) sum |N dx|^2
    C = (1.0 + r) * kappa / T ** 3
    return HessianBlocks(diag, off, Bcol, C, r, T, kappa)


def mass_matrix(N, n, T):
    """Per-unit-r regularizer added to A: (1/T) * midpoint mass (x) I_n."""
    m = N - 1
    M = np.zeros((m * n, m * n))
    eye = np.eye(n)
    for j in range(m):
        M[j * n:(j + 1) * n, j * n:(j + 1) * n] = (1.0 / (2.0 * N * T)) * eye
    for j in range(m - 1):
        M[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] = (1.0 / (4.0 * N * T)) * eye
        M[(j + 1) * n:(j + 2) * n, j * n:(j + 1) * n] = (1.0 / (4.0 * N * T)) * eye
    return M


def w12_gram(N, n, T):
    """A W^{1,2}-style Gram matrix (mass + stiffness) on interior nodes."""
    m = N - 1
    G = np.zeros((m * n, m * n))
    eye = np.eye(n)
    for j in range(m):
        G[j * n:(j + 1) * n, j * n:(j + 1) * n] += (1.0 / (2.0 * N)) * eye + 2.0 * N * eye
    for j in range(m - 1):
        G[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] += (1.0 / (4.0 * N)) * eye - N * eye
        G[(j + 1) * n:(j + 2) * n, j * n:(j + 1) * n] += (1.0 / (4.0 * N)) * eye - N * eye
    return G


def r0_select(path: PathState, model: PotentialModel) -> float:
    """Regularization weight making A(r0) and the bordered I(r0) positive.

    Uses the generalized minimum eigenvalue of each block against the exact
    matrices the regularization adds per unit r, doubled for margin.
    """
    blocks = action_hessian(path, model, 0.0)
    A = blocks.dense_A()
    M_A = mass_matrix(path.N, path.n, path.T)
    mu = [scipy.linalg.eigh(A, M_A, eigvals_only=True,
                            subset_by_index=(0, 0))[0]]
    if blocks.kappa > 1e-14 * (1.0 + float(np.abs(path.nodes).max())) ** 2:
        I0 = blocks.bordered_dense()
        M_I = np.zeros_like(I0)
        M_I[:-1, :-1] = M_A
        M_I[-1, -1] = blocks.kappa / path.T ** 3
        mu.append(scipy.linalg.eigh(I0, M_I, eigvals_only=True,
                                    subset_by_index=(0, 0))[0])
    return 2.0 * max(0.0, *(-m for m in mu)) + 1.0


def l2_functional(path: PathState, model: PotentialModel) -> float:
    """Noise-coupling part of the action: -T * (1/N) sum LapV(midpoints)."""
    lap = _laplacian_batch(model, path.midpoints())
    return -path.T * float(np.mean(lap))


def l2_gradient(path: PathState, model: PotentialModel):
    """Exact gradient of l2_functional w.r.t. (interior nodes, T)."""
    mids = path.midpoints()
    glap = _grad_laplacian_batch(model, mids)
    gx = -(path.T / (2.0 * path.N)) * (glap[:-1] + glap[1:])
    lap = _laplacian_batch(model, mids)
    gT = -float(np.mean(lap))
    return gx.reshape(-1), gT


def _laplacian_batch(model, X):
    if model._poly is not None:
        return model._lap(X)
    return np.array([np.trace(model.derivatives(x).hess) for x in X])


def _grad_laplacian_batch(model, X):
    if model._poly is not None:
        out = np.empty(X.shape)
        for i in range(model.n):
            out[:, i] = model._grad_lap[i](X)
        return out
    return np.array([model.derivatives(x).grad_lap for x in X])


# -- critical values ---------------------------------------------------------

def mane_value(model: PotentialModel, sigma, box=None, per_axis=41, starts=8
               ) -> CriticalValues:
    """c_u = sup U over the box: coarse lattice plus local ascent refinement."""
    box = _resolve_box(model, box)
    from .potential import _lattice
    grid = _lattice(box, per_axis)
    U = model.effective_batch(sigma, grid)[0]
    order = np.argsort(U)[::-1][:starts]
    best_val, best_x = -np.inf, None
    bounds = list(box)
    for idx in order:
        res = scipy.optimize.minimize(
            lambda x: -model.effective_batch(sigma, x[None, :])[0][0],
            grid[idx],
            jac=lambda x: -model.effective_batch(sigma, x[None, :])[1][0],
            bounds=bounds, method="L-BFGS-B")
        if -res.fun > best_val:
            best_val, best_x = -float(res.fun), np.asarray(res.x, float)
    spans = [hi - lo for lo, hi in box]
    on_edge = any(
        min(best_x[i] - lo, hi - best_x[i]) < 1e-8 * spans[i]
        for i, (lo, hi) in enumerate(box))
    if on_edge:
        import warnings
        warnings.warn("argmax of U lies on the box boundary; box may be too small",
                      stacklevel=2)
    return CriticalValues(best_val, np.nan, "mane-only", argmax=best_x)


def _flood_connected(mask, start, goal):
    """Face-connectivity BFS on an n-dim boolean lattice."""
    if not (mask[start] and mask[goal]):
        return False
    if start == goal:
        return True
    shape = mask.shape
    seen = np.zeros(shape, dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = []
        for cell in frontier:
            for axis in range(len(shape)):
                for step in (-1, 1):
                    nb = list(cell)
                    nb[axis] += step
                    if not (0 <= nb[axis] < shape[axis]):
                        continue
                    nb = tuple(nb)
                    if mask[nb] and not seen[nb]:
                        if nb == goal:
                            return True
                        seen[nb] = True
                        nxt.append(nb)
        frontier = nxt
    return False


_K0_RESOLUTION = {1: 4097, 2: 257, 3: 49}


def k0_value(model: PotentialModel, sigma, x_minus, x_plus, box=None,
             grad_tol=1e-8, per_axis=None) -> CriticalValues:
    """Least k whose U-sublevel set connects the endpoints.

    Critical endpoints (vanishing gradV) short-circuit to
    max{U(x-), U(x+)}; otherwise bisection over k with lattice flood-fill
    connectivity, bounded below by the exact endpoint values.
    """
    box = _resolve_box(model, box)
    x_minus = np.atleast_1d(np.asarray(x_minus, float))
    x_plus = np.atleast_1d(np.asarray(x_plus, float))
    for x in (x_minus, x_plus):
        if any(not (lo <= x[i] <= hi) for i, (lo, hi) in enumerate(box)):
            raise PathError(f"endpoint {x} outside the configured box")
    mane = mane_value(model, sigma, box)
    c_u = mane.c_u
    U_ends = model.effective_batch(sigma, np.stack([x_minus, x_plus]))[0]
    lo = float(max(U_ends))
    g_minus = model.derivatives(x_minus).grad
    g_plus = model.derivatives(x_plus).grad
    if (np.abs(g_minus).max() <= grad_tol * (1 + np.abs(x_minus).max())
            and np.abs(g_plus).max() <= grad_tol * (1 + np.abs(x_plus).max())):
        return CriticalValues(c_u, lo, "critical-endpoints", argmax=mane.argmax)

    if per_axis is None:
        per_axis = _K0_RESOLUTION.get(model.n, 33)
    axes = [np.linspace(b[0], b[1], per_axis) for b in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    U_lat = model.effective_batch(sigma, pts)[0].reshape([per_axis] * model.n)

    def cell(x):
        return tuple(int(np.argmin(np.abs(axes[i] - x[i]))) for i in range(model.n))

    start, goal = cell(x_minus), cell(x_plus)

    def connected(k):
        mask = U_lat <= k
        # endpoints admitted by their exact values, not the lattice sample
        mask[start] |= U_ends[0] <= k
        mask[goal] |= U_ends[1] <= k
        return _flood_connected(mask, start, goal)

    if connected(lo):
        return CriticalValues(c_u, lo, "sublevel-connectivity", argmax=mane.argmax)
    hi = c_u
    if not connected(hi):
        raise PathError("endpoints disconnected at k = c_u; box too small")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if connected(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * (1.0 + abs(c_u)):
            break
    return CriticalValues(c_u, hi, "sublevel-connectivity", argmax=mane.argmax)


# -- serialization -----------------------------------------------------------

def path_to_csv(path: PathState):
    n = path.n
    header = "t," + ",".join(f"x_{i + 1}" for i in range(n))
    lines = [header]
    ts = np.linspace(0.0, 1.0, path.N + 1)
    for t, row in zip(ts, path.nodes):
        lines.append(",".join([FMT % t] + [FMT % v for v in row]))
    return "\n".join(lines) + "\n"


def path_header(path: PathState, model: PotentialModel):
    stats = path_energy(path, model)
    return {
        "T": path.T,
        "sigma": path.sigma,
        "k": path.k,
        "N": path.N,
        "n": path.n,
        "action": action_value(path, model),
        "om_value": om_value(path, model),
        "energy_mean": stats.mean,
        "energy_dev": stats.dev,
        "x_minus": [float(v) for v in path.x_minus],
        "x_plus": [float(v) for v in path.x_plus],
    }


def path_from_csv(text, T, sigma=0.0, k=0.0) -> PathState:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[0] != "t":
        raise PathError("path CSV must start with a 't' column")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return PathState(rows[:, 1:], T, sigma, k)


def write_path(path: PathState, model: PotentialModel, csv_file, json_file):
    with open(csv_file, "w") as fh:
        fh.write(path_to_csv(path))
    with open(json_file, "w") as fh:
        json.dump(path_header(path, model), fh, sort_keys=True, indent=1,
                  default=float)
        fh.write("\n")
