"""Hermitian metrics on rank-r bundles over the sphere: Chern curvature,
Griffiths positivity tests, determinant, dual, line twists and symmetric powers.

Convention: a metric with matrix M means ``|u|^2 = u^H M u`` for coordinate
vectors in the holomorphic frame, i.e. ``M[a, b] = <e_b, e_a>``.  The Chern
curvature coefficient (of dz ^ dzbar, one base dimension) is
``Theta = -d_zbar(M^{-1} d_z M)``; for ``diag(e^{-d_i * w})`` it equals
``diag(d_i * w_zz̄)``, so positive degrees give Griffiths-positive metrics.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import factorial

import numpy as np
import scipy.linalg

from .base_geometry import BaseHermitianForm, LineBundleMetric, fubini_study_line
from .numerics import (ChartScalarField, ComplexHessianStencil,
                       DegenerateMetricError, EvaluationDomainError)

DEFAULT_STENCIL = ComplexHessianStencil(step=1e-3, order=4)


@dataclass(frozen=True)
class HermitianMetric:
    """Positive Hermitian matrix-valued weight on a rank-r bundle.

    ``matrix_fns`` holds one vectorized map per chart sending ``(n,)`` complex
    points to ``(n, r, r)`` Hermitian positive matrices.  ``degrees`` tags the
    built-in split families ``diag(e^{-d_i * fs})``; it is ``None`` for
    generic metrics.
    """

    rank: int
    matrix_fns: tuple
    degrees: tuple[int, ...] | None = None
    label: str = ""

    def matrix(self, z, chart: int = 0) -> np.ndarray:
        zs = np.atleast_1d(np.asarray(z, dtype=complex))
        M = np.asarray(self.matrix_fns[chart](zs))
        if np.isscalar(z) or np.asarray(z).ndim == 0:
            return M[0]
        return M

    def check_positive(self, z, chart: int = 0) -> None:
        M = np.atleast_3d(self.matrix(z, chart).reshape(-1, self.rank, self.rank))
        for Mi in M:
            try:
                np.linalg.cholesky(Mi)
            except np.linalg.LinAlgError:
                raise DegenerateMetricError(
                    f"weight matrix not positive definite at a sample (chart {chart})")


def direct_sum_metric(degrees, label: str = "") -> HermitianMetric:
    """diag(e^{-d_i * fs_weight}) in both charts; curvature diag(d_i) * Theta_FS."""
    degs = tuple(int(d) for d in degrees)
    r = len(degs)
    darr = np.array(degs, dtype=float)

    def fn(zs):
        w = np.log1p(np.abs(zs) ** 2)
        diag = np.exp(-np.multiply.outer(w, darr))
        M = np.zeros((zs.size, r, r), dtype=complex)
        idx = np.arange(r)
        M[:, idx, idx] = diag
        return M

    return HermitianMetric(rank=r, matrix_fns=(fn, fn), degrees=degs,
                           label=label or f"sum{degs}")


def constant_metric(M0, label: str = "const") -> HermitianMetric:
    M0 = np.asarray(M0, dtype=complex)
    r = M0.shape[0]

    def fn(zs):
        return np.broadcast_to(M0, (zs.size, r, r)).copy()

    return HermitianMetric(rank=r, matrix_fns=(fn, fn), degrees=None, label=label)


def dual_metric(H: HermitianMetric) -> HermitianMetric:
    """Metric induced on the dual bundle: matrix conj(inv(M)) in the dual frame."""

    def make(chart):
        base = H.matrix_fns[chart]

        def fn(zs):
            return np.conj(np.linalg.inv(base(zs)))

        return fn

    degs = tuple(-d for d in H.degrees) if H.degrees is not None else None
    return HermitianMetric(rank=H.rank, matrix_fns=(make(0), make(1)),
                           degrees=degs, label=f"dual({H.label})")


def twist_by_line(H: HermitianMetric, L: LineBundleMetric, power: int = 1) -> HermitianMetric:
    """Metric on E tensor L^power: weight matrix times e^{-power * weight_L}."""

    def make(chart):
        base = H.matrix_fns[chart]
        wf = L.weights[chart]

        def fn(zs):
            scale = np.exp(-power * wf(zs[:, None]))
            return base(zs) * scale[:, None, None]

        return fn

    degs = None
    if H.degrees is not None:
        degs = tuple(d + power * L.degree for d in H.degrees)
    return HermitianMetric(rank=H.rank, matrix_fns=(make(0), make(1)),
                           degrees=degs, label=f"{H.label}*L^{power}")


def det_metric(H: HermitianMetric) -> LineBundleMetric:
    """Induced metric on det E: weight = -log det M; curvature = trace of Chern curvature."""

    def make(chart):
        base = H.matrix_fns[chart]

        def fn(pts):
            sign, logdet = np.linalg.slogdet(base(pts[:, 0]))
            if np.any(sign.real <= 0):
                raise DegenerateMetricError("determinant weight not positive")
            return -logdet

        return ChartScalarField(1, fn, name=f"det({H.label})")

    degree = sum(H.degrees) if H.degrees is not None else _infer_degree(H)
    return LineBundleMetric(degree=degree, weights=(make(0), make(1)))


def _infer_degree(H: HermitianMetric) -> int:
    z = 2.0 + 0.0j
    sign0, ld0 = np.linalg.slogdet(H.matrix(z, 0))
    sign1, ld1 = np.linalg.slogdet(H.matrix(1.0 / z, 1))
    if sign0.real <= 0 or sign1.real <= 0:
        raise DegenerateMetricError("cannot infer degree of a non-positive metric")
    return int(round((-ld0 + ld1) / np.log(abs(z) ** 2)))


@dataclass(frozen=True)
class EndCurvature:
    """End E-valued curvature coefficient at a base point, in the frame basis."""

    value: np.ndarray
    z: complex
    chart: int

    def hermitian_defect(self, H: HermitianMetric) -> float:
        """Max violation of <Theta u, v> = <u, Theta v>, i.e. of M @ Theta being Hermitian."""
        M = H.matrix(self.z, self.chart)
        A = M @ self.value
        return float(np.max(np.abs(A - A.conj().T)))


def family_derivatives(matfun, z, stencil: ComplexHessianStencil = DEFAULT_STENCIL):
    """(M, d_z M, d_zbar M, d_z d_zbar M) of a matrix family by entrywise stencils."""
    h = stencil.step
    offsets = [0.0 + 0.0j]
    first = _FIRST[stencil.order]
    second = _SECOND[stencil.order]
    for o, _ in first:
        offsets += [o * h, o * h * 1j]
    for o, _ in second:
        if o != 0:
            offsets += [o * h, o * h * 1j]
    offsets = sorted(set(offsets), key=lambda c: (c.real, c.imag))
    pos = {c: i for i, c in enumerate(offsets)}
    zs = np.asarray(z, dtype=complex) + np.array(offsets)
    Ms = np.asarray(matfun(zs))
    if not np.all(np.isfinite(Ms)):
        raise EvaluationDomainError("non-finite weight matrix inside stencil")

    def comb(pairs, comp):
        out = np.zeros_like(Ms[0])
        for o, c in pairs:
            out = out + c * Ms[pos[complex(o * h * comp)]]
        return out

    Mx = comb(first, 1.0) / h
    My = comb(first, 1j) / h
    Mxx = comb(second, 1.0) / h**2
    Myy = comb(second, 1j) / h**2
    M0 = Ms[pos[0.0 + 0.0j]]
    Mz = 0.5 * (Mx - 1j * My)
    Mzb = 0.5 * (Mx + 1j * My)
    Mzzb = 0.25 * (Mxx + Myy)
    return M0, Mz, Mzb, Mzzb


def family_curvature(matfun, z, stencil: ComplexHessianStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Curvature coefficient -d_zbar(M^{-1} d_z M) for a matrix family z -> M(z).

    ``matfun`` maps ``(n,)`` complex points to ``(n, d, d)`` matrices; entrywise
    derivatives use the stencil's order in each real direction.
    """
    M0, Mz, Mzb, Mzzb = family_derivatives(matfun, z, stencil)
    Minv = np.linalg.inv(M0)
    theta = Minv @ Mzb @ Minv @ Mz - Minv @ Mzzb
    remainder = _richardson_remainder(matfun, z, stencil)
    if remainder is not None:
        theta = remainder(theta)
    return theta


_FIRST = {2: ((-1, -0.5), (1, 0.5)),
          4: ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))}
_SECOND = {2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
           4: ((-2, -1 / 12), (-1, 16 / 12), (0, -30 / 12), (1, 16 / 12), (2, -1 / 12))}


def _richardson_remainder(matfun, z, stencil):
    if not stencil.richardson:
        return None
    half = ComplexHessianStencil(step=stencil.step / 2, order=stencil.order,
                                 richardson=False)
    theta_half = family_curvature(matfun, z, half)
    w = 2.0 ** stencil.order

    def extrapolate(theta_full):
        return (w * theta_half - theta_full) / (w - 1.0)

    return extrapolate


def chern_curvature(H: HermitianMetric, z, chart: int = 0,
                    stencil: ComplexHessianStencil = DEFAULT_STENCIL) -> EndCurvature:
    """End E-valued Chern curvature of the weight matrix at a base point."""
    H.check_positive(z, chart)
    theta = family_curvature(H.matrix_fns[chart], z, stencil)
    return EndCurvature(value=theta, z=complex(z), chart=chart)


def curvature_eigenvalues(H: HermitianMetric, z, chart: int = 0,
                          omega: BaseHermitianForm | None = None,
                          stencil: ComplexHessianStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Eigenvalues of the Hermitian pencil (M Theta, M), optionally over an Omega unit.

    These are the extreme values of <Theta(z) v, v> / |v|^2 over fiber vectors,
    divided by Omega's coefficient when given; the extremes over v are exact.
    """
    M = H.matrix(z, chart)
    theta = family_curvature(H.matrix_fns[chart], z, stencil)
    A = M @ theta
    A = 0.5 * (A + A.conj().T)
    vals = scipy.linalg.eigh(A, M, eigvals_only=True)
    if omega is not None:
        vals = vals / float(omega.coefficient(np.array([z]), chart)[0])
    return vals


def griffiths_profile(H: HermitianMetric, samples, omega: BaseHermitianForm,
                      chart: int = 0,
                      stencil: ComplexHessianStencil = DEFAULT_STENCIL):
    """Per-sample (min, max) eigenvalue extremes of the curvature pencil."""
    samples = np.asarray(samples, dtype=complex)
    lo = np.empty(samples.size)
    hi = np.empty(samples.size)
    for i, z in enumerate(samples):
        vals = curvature_eigenvalues(H, z, chart, omega, stencil)
        lo[i] = vals[0]
        hi[i] = vals[-1]
    return lo, hi


def griffiths_extremes(H: HermitianMetric, samples, omega: BaseHermitianForm,
                       chart: int = 0,
                       stencil: ComplexHessianStencil = DEFAULT_STENCIL):
    """(min, max) over samples and unit fiber vectors of the curvature Rayleigh quotient.

    max < 0 certifies Griffiths negativity on the sample set, min > 0 Griffiths
    positivity.  Extremes over fiber vectors come from the exact generalized
    eigenvalue problem, so only the base direction is sampled.
    """
    lo, hi = griffiths_profile(H, samples, omega, chart, stencil)
    return float(np.min(lo)), float(np.max(hi))


# ---------------------------------------------------------------------------
# symmetric powers
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=128)
def monomial_exponents(rank: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Degree-k exponent multi-indices, ordered lexicographically descending."""
    if k == 0:
        return (tuple([0] * rank),)
    seen = set()
    for comb in combinations_with_replacement(range(rank), k):
        alpha = [0] * rank
        for c in comb:
            alpha[c] += 1
        seen.add(tuple(alpha))
    return tuple(sorted(seen, reverse=True))


def multinomial(k: int, alpha) -> int:
    out = factorial(k)
    for a in alpha:
        out //= factorial(a)
    return out


def _permanent(A: np.ndarray) -> complex:
    """Permanent via Ryser's formula; fine for the small k used here."""
    n = A.shape[0]
    if n == 0:
        return 1.0
    total = 0.0 + 0.0j
    for s in range(1, 1 << n):
        cols = [j for j in range(n) if s >> j & 1]
        rowsums = A[:, cols].sum(axis=1)
        total += (-1) ** len(cols) * np.prod(rowsums)
    return (-1) ** n * total


def symmetric_power_gram(M: np.ndarray, k: int) -> np.ndarray:
    """Gram of the induced inner product on the degree-k monomial basis.

    Normalized so that ``<v^k, w^k> = <v, w>^k``; on the flat metric the
    diagonal entries are ``alpha! / k!``.
    """
    r = M.shape[0]
    mons = monomial_exponents(r, k)
    dim = len(mons)
    out = np.empty((dim, dim), dtype=complex)

    def slots(alpha):
        s = []
        for i, a in enumerate(alpha):
            s.extend([i] * a)
        return s

    slot_list = [slots(al) for al in mons]
    for a in range(dim):
        for b in range(a, dim):
            # <E_b, E_a> = perm(P) / k! with P[i, j] = <e_{slots(b)[i]}, e_{slots(a)[j]}>
            # and <e_p, e_q> = M[q, p]; the permanent is transpose-invariant.
            P = M[np.ix_(slot_list[a], slot_list[b])]
            val = _permanent(P) / factorial(k)
            out[a, b] = val
            out[b, a] = np.conj(val)
    return out


def symmetric_power_metric(H: HermitianMetric, k: int):
    """Per-base-point Gram family of the induced metric on the k-th symmetric power."""
    if k < 1:
        raise ValueError("symmetric power requires k >= 1")

    def at(z, chart: int = 0) -> np.ndarray:
        return symmetric_power_gram(H.matrix(z, chart), k)

    return at
