"""Independent closed-form oracles used to freeze expected values.

Everything here is derived by hand (Beta integrals, Rayleigh quotients,
polarization) and deliberately avoids the package's quadrature and stencil
code paths.
"""

from math import factorial, pi

import numpy as np


def fs_weight(z, d: float = 1.0) -> float:
    return d * np.log1p(abs(z) ** 2)


def fs_curvature(z) -> float:
    """Second mixed derivative of log(1 + |z|^2), differentiated by hand."""
    return (1.0 + abs(z) ** 2) ** -2


def beta_moment(alpha, p: int) -> float:
    """integral over C^m of prod |v_i|^{2 a_i} (1 + |v|^2)^{-p} dLebesgue.

    Dirichlet integral: pi^m * prod(a_i!) * (p - m - |a| - 1)! / (p - 1)!.
    """
    m = len(alpha)
    s = sum(alpha)
    num = pi ** m
    for a in alpha:
        num *= factorial(a)
    return num * factorial(p - m - s - 1) / factorial(p - 1)


def direct_sum_gram_diagonal(carrier_exponents, k: int, z, exponents) -> list:
    """Diagonal L2 Gram entries for a split carrier metric diag(e^{c_i * fs}).

    For the potential log(sum |e_i|^2 e^{c_i fs}) the substitution
    v_i = w_i e^{(c_i - c_r) fs / 2} collapses every diagonal entry to
    pi^{r-1} alpha! / (k + r - 1)! times prod_i e^{-alpha_i c_i fs}.
    """
    c = np.asarray(carrier_exponents, dtype=float)
    r = c.size
    fs = np.log1p(abs(z) ** 2)
    out = []
    for alpha in exponents:
        alpha = np.asarray(alpha)
        const = pi ** (r - 1) / factorial(k + r - 1)
        for a in alpha:
            const *= factorial(int(a))
        out.append(const * np.exp(-float(alpha @ c) * fs))
    return out


def hermitian_kobayashi(carrier_degrees, z, zeta) -> float:
    """-theta at (z, [zeta]) for the split carrier metric diag(e^{-d_i fs}).

    Hermitian case: the Schur complement equals the Rayleigh quotient of the
    carrier curvature diag(-d_i) * Theta_FS on the line through zeta, negated.
    """
    d = np.asarray(carrier_degrees, dtype=float)
    zeta = np.asarray(zeta, dtype=complex)
    t = np.exp(-d * fs_weight(z))
    w = np.abs(zeta) ** 2 * t
    return float(-np.sum(d * w) / np.sum(w) * fs_curvature(z))


def rayleigh_extremes(values) -> tuple:
    vals = np.asarray(values, dtype=float)
    return float(vals.min()), float(vals.max())
