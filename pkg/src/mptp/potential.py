"""Scalar potentials V and the noise-scaled effective potential U.

U(sigma, x) = sigma * Lap V(x) - |grad V(x)|^2 / 2. Everything downstream
(action integrand, Sturm coefficients) consumes V through the derivative
bundle returned by :func:`eval_potential` and the U bundle returned by
:func:`eval_effective`: value, gradient, Hessian, gradient of the Laplacian
and Hessian of the Laplacian. Built-in and polynomial potentials carry exact
analytic derivatives; user plugins fall back to central finite differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DEFAULT_DEGREE_CAP = 16
FD_STEP = 1e-5


class PotentialError(ValueError):
    pass


class _Poly:
    """Multivariate polynomial: {exponent tuple: coefficient}."""

    def __init__(self, n, terms):
        self.n = n
        clean = {}
        for exps, c in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != n or any(e < 0 for e in exps):
                raise PotentialError(f"bad exponent tuple {exps!r} for n={n}")
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + float(c)
        self.terms = {e: c for e, c in clean.items() if c != 0.0}
        self._exps = np.array(sorted(self.terms), dtype=float).reshape(-1, n)
        self._coefs = np.array([self.terms[tuple(int(v) for v in e)] for e in self._exps])

    @property
    def degree(self):
        return int(self._exps.sum(axis=1).max()) if self.terms else 0

    def diff(self, axis):
        out = {}
        for exps, c in self.terms.items():
            e = exps[axis]
            if e > 0:
                new = list(exps)
                new[axis] = e - 1
                new = tuple(new)
                out[new] = out.get(new, 0.0) + c * e
        return _Poly(self.n, out)

    def __call__(self, X):
        """Evaluate at X of shape (..., n); returns shape (...,)."""
        X = np.asarray(X, dtype=float)
        if not self.terms:
            return np.zeros(X.shape[:-1])
        # (..., 1, n) ** (m, n) -> product over the variable axis
        pw = X[..., None, :] ** self._exps
        return pw.prod(axis=-1) @ self._coefs


def _poly_tables(V: _Poly):
    """Precompute every derivative polynomial eval_potential needs."""
    n = V.n
    grad = [V.diff(i) for i in range(n)]
    hess = [[grad[i].diff(j) for j in range(n)] for i in range(n)]
    lap = _Poly(n, {})
    for i in range(n):
        for e, c in hess[i][i].terms.items():
            lap.terms[e] = lap.terms.get(e, 0.0) + c
    lap = _Poly(n, lap.terms)
    grad_lap = [lap.diff(i) for i in range(n)]
    hess_lap = [[grad_lap[i].diff(j) for j in range(n)] for i in range(n)]
    # third derivatives d3[k][i][j] = d^3 V / dx_k dx_i dx_j, for the HessU contraction
    third = [[[hess[i][j].diff(k) for j in range(n)] for i in range(n)] for k in range(n)]
    return grad, hess, lap, grad_lap, hess_lap, third


class PotentialDerivatives(NamedTuple):
    value: float
    grad: np.ndarray
    hess: np.ndarray
    grad_lap: np.ndarray
    hess_lap: np.ndarray


@dataclass
class EffectivePotentialEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


class PotentialModel:
    """Immutable potential with exact (or FD-fallback) derivative evaluation.

    Use the factory classmethods; the constructor is internal. ``box`` is the
    default search box for sup/connectivity computations, one (lo, hi) pair
    per axis.
    """

    KINDS = (
        "builtin-quadratic",
        "builtin-double-well-1d",
        "builtin-double-well-nd",
        "polynomial",
        "user-plugin",
    )

    def __init__(self, n, kind, poly=None, callables=None, box=None,
                 degree_cap=DEFAULT_DEGREE_CAP):
        if n < 1:
            raise PotentialError("dimension must be a positive integer")
        if kind not in self.KINDS:
            raise PotentialError(f"unknown potential kind {kind!r}")
        self.n = int(n)
        self.kind = kind
        self.box = _check_box(box, self.n) if box is not None else None
        self._poly = poly
        self._callables = callables
        if poly is not None:
            if poly.degree > degree_cap:
                raise PotentialError(
                    f"polynomial degree {poly.degree} exceeds cap {degree_cap}")
            (self._grad, self._hess, self._lap, self._grad_lap,
             self._hess_lap, self._third) = _poly_tables(poly)

    # -- factories ---------------------------------------------------------

    @classmethod
    def quadratic(cls, n=1, box=None):
        """V = |x|^2 / 2."""
        terms = {}
        for i in range(n):
            e = [0] * n
            e[i] = 2
            terms[tuple(e)] = 0.5
        return cls(n, "builtin-quadratic", poly=_Poly(n, terms),
                   box=box if box is not None else [(-4.0, 4.0)] * n)

    @classmethod
    def double_well_1d(cls, box=None):
        """V = (x^2 - 1)^2 / 4, minima at x = +-1 with V''(+-1) = 2."""
        poly = _Poly(1, {(4,): 0.25, (2,): -0.5, (0,): 0.25})
        return cls(1, "builtin-double-well-1d", poly=poly,
                   box=box if box is not None else [(-2.5, 2.5)])

    @classmethod
    def double_well_nd(cls, n, box=None):
        """V = (x1^2 - 1)^2 / 4 + |x_rest|^2 / 2, minima at (+-1, 0, ..)."""
        if n < 2:
            raise PotentialError("double-well-nd needs n >= 2; use double_well_1d")
        terms = {}
        e4 = [0] * n
        e4[0] = 4
        e2 = [0] * n
        e2[0] = 2
        terms[tuple(e4)] = 0.25
        terms[tuple(e2)] = -0.5
        terms[tuple([0] * n)] = 0.25
        for i in range(1, n):
            e = [0] * n
            e[i] = 2
            terms[tuple(e)] = 0.5
        return cls(n, "builtin-double-well-nd", poly=_Poly(n, terms),
                   box=box if box is not None else [(-2.5, 2.5)] * n)

    @classmethod
    def polynomial(cls, n, coeffs, box=None, degree_cap=DEFAULT_DEGREE_CAP):
        """coeffs: iterable of [c, e_1, .., e_n] rows."""
        terms = {}
        for row in coeffs:
            row = list(row)
            if len(row) != n + 1:
                raise PotentialError(
                    f"polynomial coefficient row needs 1+{n} entries, got {row!r}")
            c, exps = float(row[0]), tuple(int(e) for e in row[1:])
            terms[exps] = terms.get(exps, 0.0) + c
        return cls(n, "polynomial", poly=_Poly(n, terms), box=box,
                   degree_cap=degree_cap)

    @classmethod
    def from_callables(cls, n, value, grad=None, hess=None, box=None):
        """User plugin; missing derivatives filled by central differences."""
        return cls(n, "user-plugin",
                   callables={"value": value, "grad": grad, "hess": hess},
                   box=box)

    @classmethod
    def from_config(cls, block):
        """Build from the run-config potential block."""
        known = {"kind", "n", "coeffs", "box"}
        unknown = set(block) - known
        if unknown:
            raise PotentialError(f"unknown potential config keys: {sorted(unknown)}")
        kind = block.get("kind")
        n = int(block.get("n", 1))
        box = block.get("box")
        if box is not None:
            box = [tuple(map(float, pair)) for pair in box]
        if kind == "builtin-quadratic":
            return cls.quadratic(n, box=box)
        if kind == "builtin-double-well-1d":
            return cls.double_well_1d(box=box)
        if kind == "builtin-double-well-nd":
            return cls.double_well_nd(n, box=box)
        if kind == "polynomial":
            return cls.polynomial(n, block.get("coeffs", []), box=box)
        raise PotentialError(f"unknown potential kind {kind!r}")

    # -- batched raw derivatives -------------------------------------------

    def _eval_poly_batch(self, X):
        V = self._poly(X)
        m = X.shape[:-1]
        n = self.n
        grad = np.empty(m + (n,))
        hess = np.empty(m + (n, n))
        grad_lap = np.empty(m + (n,))
        hess_lap = np.empty(m + (n, n))
        third = np.empty(m + (n, n, n))
        for i in range(n):
            grad[..., i] = self._grad[i](X)
            grad_lap[..., i] = self._grad_lap[i](X)
            for j in range(i, n):
                hij = self._hess[i][j](X)
                hess[..., i, j] = hij
                hess[..., j, i] = hij
                lij = self._hess_lap[i][j](X)
                hess_lap[..., i, j] = lij
                hess_lap[..., j, i] = lij
                for k in range(n):
                    tk = self._third[k][i][j](X)
                    third[..., k, i, j] = tk
                    third[..., k, j, i] = tk
        lap = self._lap(X)
        return V, grad, hess, lap, grad_lap, hess_lap, third

    def _eval_plugin_point(self, x):
        c = self._callables
        h = FD_STEP * (1.0 + np.abs(x))
        V = float(c["value"](x))

        def grad_of(f):
            g = np.empty(self.n)
            for i in range(self.n):
                e = np.zeros(self.n)
                e[i] = h[i]
                g[i] = (f(x + e) - f(x - e)) / (2.0 * h[i])
            return g

        grad = np.asarray(c["grad"](x), float) if c["grad"] else grad_of(c["value"])
        if c["hess"]:
            hess = np.asarray(c["hess"](x), float)
        else:
            gfun = c["grad"] if c["grad"] else None
            hess = np.empty((self.n, self.n))
            for i in range(self.n):
                e = np.zeros(self.n)
                e[i] = h[i]
                if gfun:
                    hess[:, i] = (np.asarray(gfun(x + e), float)
                                  - np.asarray(gfun(x - e), float)) / (2.0 * h[i])
                else:
                    for j in range(self.n):
                        ej = np.zeros(self.n)
                        ej[j] = h[j]
                        hess[j, i] = (c["value"](x + e + ej) - c["value"](x + e - ej)
                                      - c["value"](x - e + ej) + c["value"](x - e - ej)
                                      ) / (4.0 * h[i] * h[j])
            hess = 0.5 * (hess + hess.T)

        def hess_at(y):
            if c["hess"]:
                return np.asarray(c["hess"](y), float)
            raise PotentialError("user-plugin without hess cannot supply 4th-order data")

        grad_lap = np.empty(self.n)
        hess_lap = np.empty((self.n, self.n))
        if c["hess"]:
            for i in range(self.n):
                e = np.zeros(self.n)
                e[i] = h[i]
                dh = (hess_at(x + e) - hess_at(x - e)) / (2.0 * h[i])
                grad_lap[i] = np.trace(dh)
            for i in range(self.n):
                for j in range(self.n):
                    e_i = np.zeros(self.n)
                    e_i[i] = h[i]
                    e_j = np.zeros(self.n)
                    e_j[j] = h[j]
                    hess_lap[i, j] = (np.trace(hess_at(x + e_i + e_j))
                                      - np.trace(hess_at(x + e_i - e_j))
                                      - np.trace(hess_at(x - e_i + e_j))
                                      + np.trace(hess_at(x - e_i - e_j))
                                      ) / (4.0 * h[i] * h[j])
            hess_lap = 0.5 * (hess_lap + hess_lap.T)
        else:
            raise PotentialError(
                "user-plugin potentials must supply hess for Laplacian derivatives")
        return V, grad, hess, grad_lap, hess_lap

    # -- public single-point / batched API -----------------------------------

    def derivatives(self, x) -> PotentialDerivatives:
        x = _check_point(x, self.n)
        if self._poly is not None:
            V, grad, hess, _lap, grad_lap, hess_lap, _third = \
                self._eval_poly_batch(x[None, :])
            return PotentialDerivatives(float(V[0]), grad[0], hess[0],
                                        grad_lap[0], hess_lap[0])
        V, grad, hess, grad_lap, hess_lap = self._eval_plugin_point(x)
        return PotentialDerivatives(V, grad, hess, grad_lap, hess_lap)

    def value_batch(self, X):
        X = np.asarray(X, float)
        if self._poly is not None:
            return self._poly(X)
        return np.array([float(self._callables["value"](x)) for x in X.reshape(-1, self.n)]
                        ).reshape(X.shape[:-1])

    def effective_batch(self, sigma, X):
        """U, grad U, Hess U at a batch of points X of shape (m, n)."""
        X = np.atleast_2d(np.asarray(X, float))
        if not np.all(np.isfinite(X)):
            raise PotentialError("non-finite evaluation point")
        if sigma < 0:
            raise PotentialError("sigma must be >= 0")
        if self._poly is not None:
            _V, grad, hess, lap, grad_lap, hess_lap, third = self._eval_poly_batch(X)
            U = sigma * lap - 0.5 * np.einsum("mi,mi->m", grad, grad)
            gU = sigma * grad_lap - np.einsum("mij,mj->mi", hess, grad)
            contraction = np.einsum("mk,mkij->mij", grad, third)
            hU = sigma * hess_lap - np.einsum("mik,mkj->mij", hess, hess) - contraction
            hU = 0.5 * (hU + np.swapaxes(hU, -1, -2))
            return U, gU, hU
        # plugin route: U and grad U from supplied data, Hess U by FD of grad U
        m = X.shape[0]
        U = np.empty(m)
        gU = np.empty((m, self.n))
        hU = np.empty((m, self.n, self.n))
        for r, x in enumerate(X):
            U[r], gU[r], hU[r] = self._effective_plugin_point(sigma, x)
        return U, gU, hU

    def _effective_plugin_point(self, sigma, x):
        V, grad, hess, grad_lap, _hess_lap = self._eval_plugin_point(x)
        U = sigma * np.trace(hess) - 0.5 * float(grad @ grad)
        gU = sigma * grad_lap - hess @ grad

        def gU_of(y):
            _V, g, h, gl, _hl = self._eval_plugin_point(y)
            return sigma * gl - h @ g

        h = FD_STEP * (1.0 + np.abs(x))
        hU = np.empty((self.n, self.n))
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = h[i]
            hU[:, i] = (gU_of(x + e) - gU_of(x - e)) / (2.0 * h[i])
        return U, gU, 0.5 * (hU + hU.T)


def eval_potential(model: PotentialModel, x):
    """(V, grad V, Hess V, grad Lap V, Hess Lap V) at one point."""
    return model.derivatives(x)


def eval_effective(model: PotentialModel, sigma, x) -> EffectivePotentialEval:
    """U = sigma*LapV - |gradV|^2/2 with gradient and Hessian at one point."""
    x = _check_point(x, model.n)
    U, gU, hU = model.effective_batch(sigma, x[None, :])
    return EffectivePotentialEval(float(U[0]), gU[0], hU[0])


def check_bounded_above(model, sigma, box=None, per_axis=33):
    """Lattice check that U(sigma, .) peaks inside the box; warns otherwise."""
    box = _resolve_box(model, box)
    grid = _lattice(box, per_axis)
    U, _g, _h = model.effective_batch(sigma, grid)
    best = grid[int(np.argmax(U))]
    on_edge = any(
        abs(best[i] - lo) < 1e-9 * (hi - lo) or abs(best[i] - hi) < 1e-9 * (hi - lo)
        for i, (lo, hi) in enumerate(box))
    if on_edge:
        warnings.warn(
            "U attains its lattice maximum on the box boundary; box may be too small",
            stacklevel=2)
    return not on_edge


def _lattice(box, per_axis):
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _check_point(x, n):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise PotentialError(f"point has shape {x.shape}, expected ({n},)")
    if not np.all(np.isfinite(x)):
        raise PotentialError("non-finite evaluation point")
    return x


def _check_box(box, n):
    box = [tuple(map(float, pair)) for pair in box]
    if len(box) != n or any(lo >= hi for lo, hi in box):
        raise PotentialError(f"box must be {n} (lo, hi) pairs with lo < hi")
    return box


def _resolve_box(model, box):
    if box is not None:
        return _check_box(box, model.n)
    if model.box is None:
        raise PotentialError("no box configured for this potential")
    return model.box
