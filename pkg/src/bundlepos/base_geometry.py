"""The base Riemann sphere: two affine charts, sample grids, line-bundle
metrics and positive (1,1)-forms.

Chart 0 carries the coordinate z, chart 1 the coordinate 1/z; the closed unit
disks of the two charts cover the sphere.  A line-bundle weight is the local
``-log`` of the squared frame norm, so the Fubini-Study metric on O(1) has
weight ``log(1 + |z|^2)`` and curvature coefficient ``(1 + |z|^2)^{-2}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ChartScalarField, ComplexHessianStencil, complex_hessian

CHARTS = (0, 1)


def transition(z):
    """Coordinate of the same point in the other chart."""
    return 1.0 / z


def disk_samples(n_radial: int = 21, n_angular: int = 21, radius: float = 1.0) -> np.ndarray:
    """Deterministic polar grid on the closed disk, center included once."""
    radii = np.linspace(0.0, radius, n_radial)[1:]
    angles = 2.0 * np.pi * np.arange(n_angular) / n_angular
    ring = (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()
    return np.concatenate([np.array([0.0 + 0.0j]), ring])


@dataclass(frozen=True)
class BaseChartAtlas:
    """Two affine charts with transition z -> 1/z plus per-chart sample points."""

    samples: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        for pts in self.samples:
            if np.any(np.abs(pts) > 1.0 + 1e-12):
                raise ValueError("sample points must lie in the closed unit disk")

    def chart_samples(self, chart: int) -> np.ndarray:
        return self.samples[chart]

    @staticmethod
    def polar(n_radial: int = 21, n_angular: int = 21) -> "BaseChartAtlas":
        pts = disk_samples(n_radial, n_angular)
        return BaseChartAtlas(samples=(pts, pts.copy()))


def _fs_weight(d: float) -> ChartScalarField:
    return ChartScalarField(
        ncoords=1,
        fn=lambda p: d * np.log1p(np.abs(p[:, 0]) ** 2),
        name=f"fs-weight[{d}]")


def _zero_weight() -> ChartScalarField:
    return ChartScalarField(ncoords=1, fn=lambda p: np.zeros(p.shape[0]), name="flat")


@dataclass(frozen=True)
class LineBundleMetric:
    """Metric on a line bundle of given degree, one weight per chart."""

    degree: int
    weights: tuple[ChartScalarField, ChartScalarField]

    def weight(self, z, chart: int = 0):
        pts = np.asarray(z, dtype=complex)[..., None]
        return self.weights[chart](pts)

    def dual(self) -> "LineBundleMetric":
        w0, w1 = self.weights
        return LineBundleMetric(
            degree=-self.degree,
            weights=(ChartScalarField(1, lambda p, f=w0: -f(p), name="dual"),
                     ChartScalarField(1, lambda p, f=w1: -f(p), name="dual")))

    def power(self, m: int) -> "LineBundleMetric":
        w0, w1 = self.weights
        return LineBundleMetric(
            degree=m * self.degree,
            weights=(ChartScalarField(1, lambda p, f=w0: m * f(p), name="power"),
                     ChartScalarField(1, lambda p, f=w1: m * f(p), name="power")))

    def tensor(self, other: "LineBundleMetric") -> "LineBundleMetric":
        w0, w1 = self.weights
        v0, v1 = other.weights
        return LineBundleMetric(
            degree=self.degree + other.degree,
            weights=(ChartScalarField(1, lambda p, f=w0, g=v0: f(p) + g(p), name="tensor"),
                     ChartScalarField(1, lambda p, f=w1, g=v1: f(p) + g(p), name="tensor")))


def fubini_study_line(d: int) -> LineBundleMetric:
    """O(d) with the d-th power of the Fubini-Study weight in each chart."""
    if d == 0:
        return LineBundleMetric(degree=0, weights=(_zero_weight(), _zero_weight()))
    return LineBundleMetric(degree=d, weights=(_fs_weight(d), _fs_weight(d)))


def line_curvature(L: LineBundleMetric, z, chart: int = 0,
                   stencil: ComplexHessianStencil = ComplexHessianStencil()) -> float:
    """Coefficient of the curvature (1,1)-form of the weight at z."""
    pts = np.asarray(z, dtype=complex)[..., None]
    H = complex_hessian(L.weights[chart], pts, stencil)
    return np.real(H[..., 0, 0])


def line_transition_defect(L: LineBundleMetric, zs) -> float:
    """Max violation of weight_0(z) - weight_1(1/z) = degree * log|z|^2 on overlap points."""
    zs = np.asarray(zs, dtype=complex)
    w0 = L.weight(zs, 0)
    w1 = L.weight(transition(zs), 1)
    return float(np.max(np.abs(w0 - w1 - L.degree * np.log(np.abs(zs) ** 2))))


@dataclass(frozen=True)
class BaseHermitianForm:
    """Positive (1,1)-form on the base; ``coefficient`` is Omega(d/dz, d/dzbar)."""

    coefficients: tuple[ChartScalarField, ChartScalarField]
    label: str = ""

    def coefficient(self, z, chart: int = 0):
        pts = np.asarray(z, dtype=complex)[..., None]
        vals = self.coefficients[chart](pts)
        if np.any(vals <= 0):
            raise ValueError("base Hermitian form must be positive at samples")
        return vals


def fubini_study_form(scale: float = 1.0) -> BaseHermitianForm:
    """Omega = scale * Theta_FS, the (1,1)-form built-in scenarios normalize against."""

    def coeff(p):
        return scale * (1.0 + np.abs(p[:, 0]) ** 2) ** -2

    f = ChartScalarField(1, coeff, name=f"{scale}*Theta_FS")
    return BaseHermitianForm(coefficients=(f, f), label=f"{scale}*Theta_FS")
