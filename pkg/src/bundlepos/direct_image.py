"""L2 constructions on direct images: the fiber-integral Gram matrices on
symmetric powers, the induced metric on the determinant, their curvature,
and the inequality behind the positivity of the determinant metric.

Given a potential phi on the O(1) of a projectivized rank-r bundle with
positive fiber restriction, the Gram of the degree-k monomial sections at a
base point is

    gram[a, b] = integral of  wbar^alpha_a w^alpha_b e^{-k phi} det(phi_{i jbar})

over the fiber chart (Lebesgue measure; global constants dropped).  The
determinant metric collapses, in the same chart, to the weight
``-log integral e^{-r phi}``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .base_geometry import LineBundleMetric
from .bundle_metrics import EndCurvature, family_curvature, monomial_exponents
from .numerics import (ChartScalarField, ComplexHessianStencil,
                       DegenerateMetricError, FiberQuadratureRule)
from .projectivization import ProjectivizedPotential


def default_rule(rank: int) -> FiberQuadratureRule:
    """Default quadrature: 32 nodes per direction for rank 2, 24 for rank 3."""
    n = 32 if rank == 2 else 24
    return FiberQuadratureRule(n_theta=n, n_rho=n, fiber_dim=rank - 1)


# Gram curvature differentiates integrals, not closed forms: the classic
# 5-point (order-2) stencil keeps the evaluation count down.
DI_STENCIL = ComplexHessianStencil(step=1e-3, order=2)


def _fiber_det(Hf: np.ndarray) -> np.ndarray:
    """Determinants of batched Hermitian fiber blocks, with a positivity check."""
    fdim = Hf.shape[-1]
    if fdim == 1:
        det = np.real(Hf[:, 0, 0])
        ok = det > 0
    elif fdim == 2:
        d00 = np.real(Hf[:, 0, 0])
        det = d00 * np.real(Hf[:, 1, 1]) - np.abs(Hf[:, 0, 1]) ** 2
        ok = (d00 > 0) & (det > 0)
    else:
        evals = np.linalg.eigvalsh(Hf)
        det = np.prod(evals, axis=-1)
        ok = evals[:, 0] > 0
    if not np.all(ok):
        raise DegenerateMetricError(
            "fiber restriction of the potential curvature is not positive")
    return det


def _kernel(p: ProjectivizedPotential, k: int, z: complex,
            rule: FiberQuadratureRule,
            inner_stencil: ComplexHessianStencil | None = None):
    nodes = rule.nodes
    pts = np.concatenate([np.full((nodes.shape[0], 1), complex(z)), nodes], axis=1)
    phi = p.field(pts)
    det = _fiber_det(p.fiber_block(pts, inner_stencil))
    return nodes, rule.weights * np.exp(-k * phi) * det


@functools.lru_cache(maxsize=4)
def _monomial_matrix(rule_key, exps_key):
    n_theta, n_rho, fiber_dim = rule_key
    nodes = FiberQuadratureRule(n_theta, n_rho, fiber_dim).nodes
    exps = np.array(exps_key)
    Mon = np.empty((exps.shape[0], nodes.shape[0]), dtype=complex)
    for a, al in enumerate(exps):
        Mon[a] = np.prod(nodes ** al, axis=1)
    Mon.setflags(write=False)
    return Mon


def assemble_hk(p: ProjectivizedPotential, k: int, z,
                rule: FiberQuadratureRule | None = None,
                inner_stencil: ComplexHessianStencil | None = None) -> np.ndarray:
    """L2 Gram matrix at z of the degree-k monomial sections against the potential.

    Rows/columns follow ``monomial_exponents(rank, k)``; the matrix convention
    is ``gram[a, b] = <E_b, E_a>`` so that ``|u|^2 = u^H gram u``.  For
    direct-sum inputs the angular integrals kill every off-diagonal entry.
    """
    rule = rule or default_rule(p.rank)
    if rule.fiber_dim != p.fiber_dim:
        raise ValueError("quadrature rule fiber_dim does not match the bundle")
    _, kern = _kernel(p, k, z, rule, inner_stencil)
    mons = monomial_exponents(p.rank, k)
    exps_key = tuple(tuple(al[i] for i in range(p.rank) if i != p.fiber_chart)
                     for al in mons)
    Mon = _monomial_matrix((rule.n_theta, rule.n_rho, rule.fiber_dim), exps_key)
    gram = (np.conj(Mon) * kern) @ Mon.T
    gram = 0.5 * (gram + gram.conj().T)
    if np.any(np.linalg.eigvalsh(gram) <= 0):
        raise DegenerateMetricError("assembled Gram matrix is not positive definite")
    return gram


def assemble_hk_twisted(p_twisted: ProjectivizedPotential, k: int, z,
                        rule: FiberQuadratureRule | None = None) -> np.ndarray:
    """Gram of the twisted-side construction.

    Identical kernel to :func:`assemble_hk`, run on the potential of the
    twisted bundle; the output Gram lives on the k-th symmetric power of the
    twisted bundle's dual.
    """
    return assemble_hk(p_twisted, k, z, rule)


@dataclass
class DirectImageGram:
    """Gram family z -> L2 Gram on the degree-k monomial basis, cached per point."""

    potentials: tuple[ProjectivizedPotential, ProjectivizedPotential]
    k: int
    rule: FiberQuadratureRule
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.rank = self.potentials[0].rank
        self.basis = monomial_exponents(self.rank, self.k)
        self.dim = len(self.basis)

    def at(self, z, chart: int = 0) -> np.ndarray:
        key = (chart, complex(z))
        if key not in self._cache:
            self._cache[key] = assemble_hk(self.potentials[chart], self.k, z, self.rule)
        return self._cache[key]

    def matrix_fn(self, chart: int = 0):
        def fn(zs):
            return np.stack([self.at(z, chart) for z in np.atleast_1d(zs)])
        return fn


@dataclass
class TwistedGramFamily:
    """Gram family of ``base ⊗ (line metric)^power``: entries scaled by
    ``exp(-power * line weight)``."""

    base: DirectImageGram
    line_weights: tuple[ChartScalarField, ChartScalarField]
    power: int

    def __post_init__(self):
        self.rank = self.base.rank
        self.basis = self.base.basis
        self.dim = self.base.dim
        self.k = self.base.k

    def at(self, z, chart: int = 0) -> np.ndarray:
        w = float(self.line_weights[chart](np.array([[z]], dtype=complex))[0])
        return self.base.at(z, chart) * np.exp(-self.power * w)

    def matrix_fn(self, chart: int = 0):
        def fn(zs):
            return np.stack([self.at(z, chart) for z in np.atleast_1d(zs)])
        return fn


@dataclass
class DetImageMetric:
    """Metric on det E from the fiber integral of e^{-r phi}; weight per chart."""

    weights: tuple[ChartScalarField, ChartScalarField]
    rank: int
    rule: FiberQuadratureRule

    def weight(self, z, chart: int = 0) -> float:
        return float(self.weights[chart](np.array([[z]], dtype=complex))[0])

    def line_metric(self, degree: int | None = None) -> LineBundleMetric:
        if degree is None:
            z = 2.0 + 0.0j
            w0 = self.weight(z, 0)
            w1 = self.weight(1.0 / z, 1)
            degree = int(round((w0 - w1) / np.log(abs(z) ** 2)))
        return LineBundleMetric(degree=degree, weights=self.weights)


def assemble_det_metric(potentials, rule: FiberQuadratureRule | None = None) -> DetImageMetric:
    """Determinant metric induced by a positively curved potential.

    ``potentials`` holds one ProjectivizedPotential per base chart.  In the
    fiber chart the relative-canonical and O(r) factors collapse against the
    fiberwise volume density, leaving the weight ``-log integral e^{-r phi}``
    (constants dropped; they cancel in every curvature).
    """
    rank = potentials[0].rank
    rule = rule or default_rule(rank)
    cache: dict = {}

    def make(chart):
        p = potentials[chart]

        def fn(pts):
            out = np.empty(pts.shape[0])
            for i, z in enumerate(pts[:, 0]):
                key = (chart, complex(z))
                if key not in cache:
                    nodes = rule.nodes
                    qpts = np.concatenate(
                        [np.full((nodes.shape[0], 1), z), nodes], axis=1)
                    phi = p.field(qpts)
                    val = float(np.sum(rule.weights * np.exp(-rank * phi)))
                    if not val > 0:
                        raise DegenerateMetricError("determinant integral not positive")
                    cache[key] = -np.log(val)
                out[i] = cache[key]
            return out

        return ChartScalarField(1, fn, name="det-image-weight")

    return DetImageMetric(weights=(make(0), make(1)), rank=rank, rule=rule)


def direct_image_curvature(family, z, chart: int = 0,
                           stencil: ComplexHessianStencil = DI_STENCIL) -> EndCurvature:
    """End-valued curvature of a Gram family by finite differences in the base.

    The Gram plays the role of the weight matrix of a holomorphic frame, so
    the usual ``-d_zbar(G^{-1} d_z G)`` applies entrywise.
    """
    theta = family_curvature(family.matrix_fn(chart), z, stencil)
    return EndCurvature(value=theta, z=complex(z), chart=chart)


@dataclass(frozen=True)
class BerndtssonReport:
    """Both sides of the determinant-curvature inequality at a base point."""

    lhs: float
    rhs: float
    z: complex
    chart: int

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def holds(self, tol: float = 1e-4) -> bool:
        # split direct sums saturate the inequality, so the margin sits at
        # quadrature-noise level; the tolerance reflects that
        return self.lhs <= self.rhs + tol * max(1.0, abs(self.lhs))


def berndtsson_inequality_check(p: ProjectivizedPotential, z,
                                det_image: DetImageMetric | None = None,
                                rule: FiberQuadratureRule | None = None,
                                stencil: ComplexHessianStencil = DI_STENCIL,
                                schur_stencil: ComplexHessianStencil | None = None,
                                chunk: int = 20000) -> BerndtssonReport:
    """Check the inequality driving positivity of the determinant metric.

    lhs is ``-Theta_det`` for a unit determinant vector; rhs is minus the
    density-weighted fiber average of r times the Schur complement of the
    potential Hessian.  Both sides use the toolkit's own quadrature and
    stencils, so the comparison is the assertion under test.
    """
    from .projectivization import kobayashi_batch

    rank = p.rank
    rule = rule or default_rule(rank)
    det_image = det_image or assemble_det_metric((p, p), rule)
    chart = p.chart

    wfield = det_image.weights[chart]
    h = stencil.step
    pts = np.array([[z], [z + h], [z - h], [z + 1j * h], [z - 1j * h]], dtype=complex)
    wv = wfield(pts)
    lhs_curv = 0.25 * (wv[1] + wv[2] + wv[3] + wv[4] - 4.0 * wv[0]) / h**2
    lhs = -float(lhs_curv)

    sten = schur_stencil or ComplexHessianStencil(step=1e-3, order=2)
    nodes = rule.nodes
    weights = rule.weights
    n = nodes.shape[0]
    schur = np.empty(n)
    if p.hessian_blocks is not None:
        from .projectivization import _schur_from_hessian
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            H = p.hessian_blocks(z, nodes[lo:hi], sten)
            schur[lo:hi] = _schur_from_hessian(H)
    else:
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            rows = np.concatenate(
                [np.full((hi - lo, 1), complex(z)), nodes[lo:hi]], axis=1)
            schur[lo:hi] = kobayashi_batch(p, rows, sten)
    qpts = np.concatenate([np.full((n, 1), complex(z)), nodes], axis=1)
    phi = p.field(qpts)
    dens = weights * np.exp(-rank * phi)
    norm = float(np.sum(dens))
    rhs = -rank * float(np.sum(dens * schur)) / norm
    return BerndtssonReport(lhs=lhs, rhs=rhs, z=complex(z), chart=chart)
