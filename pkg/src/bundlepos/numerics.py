"""Finite-difference complex Hessians and tensor-product quadrature on fiber charts.

All derivative and integration machinery lives here.  Points in a chart are
complex arrays of shape ``(..., m)`` where ``m`` is the number of complex
coordinates; scalar fields evaluate such arrays to real values in one
vectorized call.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import roots_legendre


class EvaluationDomainError(ValueError):
    """A field or integrand produced a non-finite value inside its domain."""


class DegenerateMetricError(ValueError):
    """A fiber Hessian or Gram matrix that must be positive definite is not."""


@dataclass(frozen=True)
class ChartScalarField:
    """Smooth real-valued function of chart coordinates.

    ``fn`` maps a complex array of shape ``(n, ncoords)`` to a real array of
    shape ``(n,)``.  The wrapper accepts any leading batch shape.
    """

    ncoords: int
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=complex)
        if pts.shape[-1] != self.ncoords:
            raise ValueError(
                f"field {self.name!r} expects {self.ncoords} coordinates, "
                f"got {pts.shape[-1]}")
        flat = pts.reshape(-1, self.ncoords)
        vals = np.asarray(self.fn(flat), dtype=float)
        return vals.reshape(pts.shape[:-1])


@dataclass(frozen=True)
class ComplexHessianStencil:
    """Finite-difference stencil for mixed second derivatives d^2/du dubar."""

    step: float = 1e-3
    order: int = 2
    richardson: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("stencil step must be positive")
        if self.order not in (2, 4):
            raise ValueError("stencil order must be 2 or 4")


# 1D first- and second-derivative stencils: (offset, coefficient) pairs.
_D1 = {
    2: ((-1, -0.5), (1, 0.5)),
    4: ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12)),
}
_D2 = {
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    4: ((-2, -1.0 / 12), (-1, 16.0 / 12), (0, -30.0 / 12),
        (1, 16.0 / 12), (2, -1.0 / 12)),
}


@functools.lru_cache(maxsize=64)
def _hessian_plan(m: int, order: int, active: tuple[int, ...]):
    """Displacement table and assembly coefficients for an m-coordinate Hessian.

    Returns ``(disp, coeff)`` with ``disp`` of shape ``(P, m)`` (complex unit
    steps) and ``coeff`` of shape ``(na, na, P)`` such that the Hessian over
    the ``active`` coordinates is ``einsum('abp,...p->...ab', coeff, values) / step^2``.
    """
    na = len(active)
    disp: list[np.ndarray] = []
    index: dict[tuple, int] = {}

    def point(off: tuple[complex, ...]) -> int:
        key = off
        if key not in index:
            index[key] = len(disp)
            disp.append(np.array(off, dtype=complex))
        return index[key]

    zero = tuple(0.0 + 0.0j for _ in range(m))
    point(zero)
    entries: list[tuple[int, int, int, complex]] = []

    # diagonal: d^2/du dubar = 1/4 (f_xx + f_yy)
    for a_loc, a in enumerate(active):
        for comp in (1.0, 1.0j):
            for off, c in _D2[order]:
                q = list(zero)
                q[a] = off * comp
                entries.append((a_loc, a_loc, point(tuple(q)), 0.25 * c))

    # off-diagonal a<b:
    # d^2/du_a dubar_b = 1/4 [ (f_{xa xb} + f_{ya yb}) + i (f_{xa yb} - f_{ya xb}) ]
    for ia in range(na):
        for ib in range(ia + 1, na):
            a, b = active[ia], active[ib]
            for compa, compb, cc in ((1.0, 1.0, 0.25), (1.0j, 1.0j, 0.25),
                                     (1.0, 1.0j, 0.25j), (1.0j, 1.0, -0.25j)):
                for offa, ca in _D1[order]:
                    for offb, cb in _D1[order]:
                        q = list(zero)
                        q[a] = offa * compa
                        q[b] = offb * compb
                        entries.append((ia, ib, point(tuple(q)), cc * ca * cb))

    P = len(disp)
    coeff = np.zeros((na, na, P), dtype=complex)
    for ia, ib, ip, c in entries:
        coeff[ia, ib, ip] += c
    disp_arr = np.array(disp)
    return disp_arr, coeff


def _hessian_once(f, points, step, order, active):
    pts = np.asarray(points, dtype=complex)
    m = pts.shape[-1]
    disp, coeff = _hessian_plan(m, order, active)
    big = pts[..., None, :] + step * disp
    vals = np.asarray(f(big.reshape(-1, m))).reshape(big.shape[:-1])
    if not np.all(np.isfinite(vals)):
        raise EvaluationDomainError(
            "non-finite field value inside finite-difference stencil")
    upper = np.einsum("abp,...p->...ab", coeff, vals.astype(complex)) / step**2
    low = np.swapaxes(upper, -1, -2).conj()
    na = len(active)
    eye = np.eye(na)
    return upper * (np.triu(np.ones((na, na))) - 0.5 * eye) \
        + low * (np.tril(np.ones((na, na))) - 0.5 * eye)


def complex_hessian(f, point, stencil: ComplexHessianStencil = ComplexHessianStencil(),
                    active: tuple[int, ...] | None = None) -> np.ndarray:
    """Hermitian matrix of mixed derivatives d^2 f / du_a dubar_b.

    Parameters
    ----------
    f : ChartScalarField or callable
        Vectorized field of ``m`` complex coordinates.
    point : array_like
        Complex array of shape ``(..., m)``; any batch shape is allowed.
    stencil : ComplexHessianStencil
        Step, order and Richardson extrapolation flag.
    active : tuple of int, optional
        Coordinate indices to differentiate; defaults to all ``m``.

    Returns
    -------
    Hermitian array of shape ``(..., len(active), len(active))``.
    """
    pts = np.asarray(point, dtype=complex)
    m = pts.shape[-1]
    act = tuple(range(m)) if active is None else tuple(active)
    H = _hessian_once(f, pts, stencil.step, stencil.order, act)
    if stencil.richardson:
        H_half = _hessian_once(f, pts, stencil.step / 2, stencil.order, act)
        w = 2.0 ** stencil.order
        H = (w * H_half - H) / (w - 1.0)
    return H


@dataclass(frozen=True)
class FiberQuadratureRule:
    """Tensor-product rule on C^{fiber_dim}: angular trapezoid x radial Gauss-Legendre.

    The radial coordinate is compactified by ``rho = t / (1 - t)`` with
    Gauss-Legendre nodes in ``t``; total node count is
    ``(n_theta * n_rho) ** fiber_dim``.
    """

    n_theta: int
    n_rho: int
    fiber_dim: int

    def __post_init__(self):
        if self.n_theta < 8 or self.n_rho < 8:
            raise ValueError("quadrature rule needs n_theta >= 8 and n_rho >= 8")
        if self.fiber_dim < 1:
            raise ValueError("fiber_dim must be positive")

    @property
    def nodes(self) -> np.ndarray:
        return _rule_nodes(self.n_theta, self.n_rho, self.fiber_dim)[0]

    @property
    def weights(self) -> np.ndarray:
        return _rule_nodes(self.n_theta, self.n_rho, self.fiber_dim)[1]

    def refined(self, factor: int = 2) -> "FiberQuadratureRule":
        return FiberQuadratureRule(self.n_theta * factor, self.n_rho * factor,
                                   self.fiber_dim)


@functools.lru_cache(maxsize=32)
def _rule_nodes(n_theta: int, n_rho: int, fiber_dim: int):
    t, wt = roots_legendre(n_rho)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    rho = t / (1.0 - t)
    wrad = wt * rho / (1.0 - t) ** 2
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    wang = 2.0 * np.pi / n_theta
    nodes1 = (rho[:, None] * np.exp(1j * theta)[None, :]).ravel()
    w1 = (wrad[:, None] * np.full(n_theta, wang)[None, :]).ravel()
    if fiber_dim == 1:
        nodes = nodes1[:, None]
        weights = w1
    else:
        grids = np.meshgrid(*([np.arange(nodes1.size)] * fiber_dim), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=-1)
        nodes = nodes1[idx]
        weights = np.prod(w1[idx], axis=-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def fiber_integrate(integrand, rule: FiberQuadratureRule):
    """Integrate over the affine fiber chart C^{fiber_dim} with Lebesgue measure.

    ``integrand`` maps nodes of shape ``(N, fiber_dim)`` to values ``(N,)``
    (real or complex).  The integrand must decay fast enough at chart infinity
    for the compactified rule to converge; all integrands produced in this
    package do.  Reduction order is fixed, so the result is deterministic.
    """
    nodes = rule.nodes
    vals = np.asarray(integrand(nodes))
    if vals.shape != (nodes.shape[0],):
        raise ValueError("integrand must return one value per node")
    if not np.all(np.isfinite(vals)):
        raise EvaluationDomainError("non-finite integrand value at a quadrature node")
    total = np.sum(rule.weights * vals)
    if np.iscomplexobj(vals):
        return complex(total)
    return float(total)
