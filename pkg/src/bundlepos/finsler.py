"""Finsler metrics on bundles: k-th roots of symmetric-power Grams,
convexity checks, line twists, Hermitian perturbation and the dual metric.

A Finsler metric here is a degree-2 homogeneous positive fiber function; the
square root is the actual norm.  The dual is the square of the dual norm,
``F*(xi) = sup_u |xi(u)|^2 / F(u)``, computed by deterministic multi-start
ascent on the unit sphere followed by local refinement.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri
from scipy.stats import qmc

from .base_geometry import LineBundleMetric
from .bundle_metrics import HermitianMetric, monomial_exponents
from .numerics import ComplexHessianStencil
from .projectivization import o1_potential, kobayashi_batch


class DualAscentError(RuntimeError):
    """The dual-norm ascent failed to settle at a point."""


@dataclass(frozen=True)
class FinslerMetric:
    """Degree-2 homogeneous fiber function on a rank-r bundle.

    ``evaluators`` maps (chart) -> callable (z scalar, U of shape (n, r)) ->
    values (n,).  ``gradients`` optionally supplies dF/dubar with the same
    signature; analytic gradients keep the dual ascent fast.
    """

    rank: int
    evaluators: tuple
    gradients: tuple | None = None
    provenance: str = "generic"
    label: str = ""

    def chart_evaluator(self, chart: int):
        return self.evaluators[chart]

    def __call__(self, z, U, chart: int = 0) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=complex))
        return np.asarray(self.evaluators[chart](complex(z), U), dtype=float)

    def grad_ubar(self, z, U, chart: int = 0) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=complex))
        if self.gradients is not None:
            return self.gradients[chart](complex(z), U)
        return _fd_grad(lambda V: self(z, V, chart), U)


def _fd_grad(f, U, h: float = 1e-6) -> np.ndarray:
    """dF/dubar_i = 1/2 (d/dx + i d/dy) by central differences, batched."""
    n, r = U.shape
    g = np.zeros((n, r), dtype=complex)
    for i in range(r):
        for comp in (1.0, 1.0j):
            Up = U.copy()
            Up[:, i] += h * comp
            Um = U.copy()
            Um[:, i] -= h * comp
            d = (f(Up) - f(Um)) / (2.0 * h)
            g[:, i] += 0.5 * d * comp
    return g


def hermitian_finsler(H: HermitianMetric) -> FinslerMetric:
    """The quadratic Finsler metric of a Hermitian metric."""

    def make(chart):
        matfn = H.matrix_fns[chart]

        def ev(z, U):
            M = matfn(np.array([z]))[0]
            return np.real(np.einsum("na,ab,nb->n", np.conj(U), M, U))

        def gr(z, U):
            M = matfn(np.array([z]))[0]
            return np.einsum("ab,nb->na", M, U)

        return ev, gr

    e0, g0 = make(0)
    e1, g1 = make(1)
    return FinslerMetric(rank=H.rank, evaluators=(e0, e1), gradients=(g0, g1),
                         provenance="hermitian", label=H.label)


def kth_root_finsler(gram_family, k: int | None = None, label: str = "") -> FinslerMetric:
    """Finsler metric F(u) = (|u^k|^2 under the Gram)^(1/k) on the underlying bundle.

    ``gram_family`` provides ``at(z, chart)``, ``rank`` and ``k`` (a direct
    image family, a twisted family, or any object with that surface).  The
    k-th tensor power is expanded on the monomial basis with multinomial
    coefficients, matching ``<v^k, v^k> = <v, v>^k`` for Hermitian Grams.
    """
    k = k if k is not None else gram_family.k
    if k < 1:
        raise ValueError("k-th root needs k >= 1")
    rank = gram_family.rank
    mons = monomial_exponents(rank, k)
    exps = np.array(mons)
    coefs = np.array([factorial(k) / np.prod([factorial(a) for a in al])
                      for al in mons])

    def power_coords(U):
        return coefs * np.prod(U[:, None, :] ** exps[None, :, :], axis=2)

    def make(chart):
        def ev(z, U):
            G = gram_family.at(z, chart)
            V = power_coords(U)
            q = np.real(np.einsum("na,ab,nb->n", np.conj(V), G, V))
            return np.maximum(q, 0.0) ** (1.0 / k)

        def gr(z, U):
            G = gram_family.at(z, chart)
            V = power_coords(U)
            q = np.real(np.einsum("na,ab,nb->n", np.conj(V), G, V))
            g = np.zeros((U.shape[0], rank), dtype=complex)
            for i in range(rank):
                mask = exps[:, i] > 0
                alm = exps[mask].copy()
                alm[:, i] -= 1
                dV = np.zeros_like(V)
                dV[:, mask] = (coefs[mask] * exps[mask, i]) * np.prod(
                    U[:, None, :] ** alm[None, :, :], axis=2)
                dq = np.einsum("na,ab,nb->n", np.conj(V), G, dV)
                g[:, i] = np.conj(dq)
            qs = np.maximum(q, 1e-300)
            return (1.0 / k) * (qs ** (1.0 / k - 1.0))[:, None] * g

        return ev, gr

    e0, g0 = make(0)
    e1, g1 = make(1)
    return FinslerMetric(rank=rank, evaluators=(e0, e1), gradients=(g0, g1),
                         provenance=f"kth_root({k})", label=label or f"root{k}")


def twist_finsler(F: FinslerMetric, L: LineBundleMetric, power: int = 1) -> FinslerMetric:
    """Multiply by e^{-power * line weight}; convexity slacks are unchanged."""

    def make(chart):
        base = F.evaluators[chart]
        gbase = F.gradients[chart] if F.gradients is not None else None
        wf = L.weights[chart]

        def ev(z, U):
            s = float(np.exp(-power * wf(np.array([[z]], dtype=complex))[0]))
            return s * base(z, U)

        gr = None
        if gbase is not None:
            def gr(z, U):
                s = float(np.exp(-power * wf(np.array([[z]], dtype=complex))[0]))
                return s * gbase(z, U)

        return ev, gr

    e0, g0 = make(0)
    e1, g1 = make(1)
    grads = None if g0 is None else (g0, g1)
    return FinslerMetric(rank=F.rank, evaluators=(e0, e1), gradients=grads,
                         provenance=F.provenance, label=f"{F.label}*L^{power}")


def perturb_with_hermitian(F: FinslerMetric, H0: HermitianMetric,
                           eps: float) -> FinslerMetric:
    """F + eps * H0: strongly convex and strongly pseudoconvex for small eps."""
    if eps < 0:
        raise ValueError("perturbation size must be nonnegative")

    def make(chart):
        base = F.evaluators[chart]
        gbase = F.gradients[chart] if F.gradients is not None else None
        matfn = H0.matrix_fns[chart]

        def ev(z, U):
            M = matfn(np.array([z]))[0]
            quad = np.real(np.einsum("na,ab,nb->n", np.conj(U), M, U))
            return base(z, U) + eps * quad

        gr = None
        if gbase is not None:
            def gr(z, U):
                M = matfn(np.array([z]))[0]
                return gbase(z, U) + eps * np.einsum("ab,nb->na", M, U)

        return ev, gr

    e0, g0 = make(0)
    e1, g1 = make(1)
    grads = None if g0 is None else (g0, g1)
    return FinslerMetric(rank=F.rank, evaluators=(e0, e1), gradients=grads,
                         provenance=f"perturbed({eps:.3e})", label=F.label)


def suggested_epsilon(H0: HermitianMetric, samples, chart: int = 0,
                      fraction: float = 1e-3) -> float:
    """Perturbation size tied to the reference metric scale over the samples."""
    lam = np.inf
    for z in np.asarray(samples, dtype=complex):
        lam = min(lam, float(np.min(np.linalg.eigvalsh(H0.matrix(z, chart)))))
    return fraction * lam


@dataclass(frozen=True)
class ConvexitySample:
    z: complex
    chart: int
    u: np.ndarray
    v: np.ndarray
    slack: float


def convexity_check(F: FinslerMetric, base_samples, n_triples: int = 10000,
                    seed: int = 20240801, chart: int = 0):
    """Worst slack of sqrt(F)(u + v) <= sqrt(F)(u) + sqrt(F)(v) over seeded triples.

    Returns (worst slack, witness).  Slack >= -1e-8 certifies convexity on the
    sampled triples; the generator is deterministic in the seed.
    """
    rng = np.random.default_rng(seed)
    zs = np.asarray(base_samples, dtype=complex)
    per = max(1, n_triples // zs.size)
    worst = np.inf
    witness = None
    for z in zs:
        n = per
        u = rng.standard_normal((n, F.rank)) + 1j * rng.standard_normal((n, F.rank))
        v = rng.standard_normal((n, F.rank)) + 1j * rng.standard_normal((n, F.rank))
        nu = np.sqrt(F(z, u, chart))
        nv = np.sqrt(F(z, v, chart))
        nuv = np.sqrt(F(z, u + v, chart))
        slack = nu + nv - nuv
        i = int(np.argmin(slack))
        if slack[i] < worst:
            worst = float(slack[i])
            witness = ConvexitySample(z=complex(z), chart=chart, u=u[i], v=v[i],
                                      slack=worst)
    return worst, witness


def _ascent_starts(rank: int, n_starts: int) -> np.ndarray:
    """Coordinate directions plus a deterministic low-discrepancy sphere set."""
    coords = [np.eye(rank, dtype=complex)[i] for i in range(rank)]
    n_extra = max(0, n_starts - rank)
    halton = qmc.Halton(d=2 * rank, scramble=False)
    pts = halton.random(n_extra + 1)[1:]
    g = ndtri(np.clip(pts, 1e-12, 1.0 - 1e-12))
    extra = g[:, :rank] + 1j * g[:, rank:]
    extra /= np.linalg.norm(extra, axis=1)[:, None]
    return np.array(coords + list(extra))


def dual_finsler(F: FinslerMetric, n_starts: int = 32, coarse_steps: int = 25,
                 refine_maxiter: int = 200, label: str = "") -> FinslerMetric:
    """Dual Finsler metric F*(xi) = sup_u |xi(u)|^2 / F(u) on the dual bundle.

    Deterministic multi-start projected ascent over the unit sphere followed
    by quasi-Newton refinement from the best start; the candidate
    ``conj(xi)`` is always among the starts, which makes Hermitian inputs
    exact up to the refinement tolerance.
    """
    rank = F.rank
    base_starts = _ascent_starts(rank, n_starts - 1)

    def make(chart):
        ev = F.evaluators[chart]
        has_grad = F.gradients is not None

        def dual_batch(z, Xi):
            Xi = np.atleast_2d(np.asarray(Xi, dtype=complex))
            nxi = Xi.shape[0]
            ns = base_starts.shape[0] + 1
            U = np.empty((nxi, ns, rank), dtype=complex)
            U[:, :-1, :] = base_starts[None, :, :]
            U[:, -1, :] = np.conj(Xi) / np.linalg.norm(Xi, axis=1)[:, None]
            Uf = U.reshape(-1, rank)
            Xif = np.repeat(Xi, ns, axis=0)

            def rval(Umat):
                pair = np.einsum("na,na->n", Xif, Umat)
                return np.abs(pair) ** 2 / ev(z, Umat)

            def rgrad(Umat):
                pair = np.einsum("na,na->n", Xif, Umat)
                Fv = ev(z, Umat)
                if has_grad:
                    gF = F.gradients[chart](z, Umat)
                else:
                    gF = _fd_grad(lambda V: ev(z, V), Umat)
                return (pair[:, None] * np.conj(Xif) * Fv[:, None]
                        - (np.abs(pair) ** 2)[:, None] * gF) / (Fv ** 2)[:, None]

            step = np.full(Uf.shape[0], 0.3)
            val = rval(Uf)
            for _ in range(coarse_steps):
                gr = rgrad(Uf)
                gn = np.linalg.norm(gr, axis=1)
                gn[gn == 0] = 1.0
                Unew = Uf + step[:, None] * gr / gn[:, None]
                Unew /= np.linalg.norm(Unew, axis=1)[:, None]
                vnew = rval(Unew)
                better = vnew > val
                Uf[better] = Unew[better]
                val[better] = vnew[better]
                step[~better] *= 0.5
                if np.all(step < 1e-12):
                    break
            val = val.reshape(nxi, ns)
            Ubest = Uf.reshape(nxi, ns, rank)[np.arange(nxi), np.argmax(val, axis=1)]
            coarse_best = np.max(val, axis=1)

            out = np.empty(nxi)
            for i in range(nxi):
                out[i] = _refine(ev, F, chart, z, Xi[i], Ubest[i], coarse_best[i],
                                 refine_maxiter, has_grad)
            return out

        return dual_batch

    return FinslerMetric(rank=rank, evaluators=(make(0), make(1)), gradients=None,
                         provenance=f"dual({F.provenance})",
                         label=label or f"dual({F.label})")


def _refine(ev, F, chart, z, xi, u0, v0, maxiter, has_grad):
    rank = xi.size

    def split(x):
        return x[:rank] + 1j * x[rank:]

    def neg(x):
        u = split(x)
        nu = np.linalg.norm(u)
        if nu < 1e-9:
            return 0.0
        u = (u / nu)[None, :]
        pair = np.einsum("a,na->n", xi, u)
        return float(-(np.abs(pair) ** 2 / ev(z, u))[0])

    def neg_jac(x):
        u = split(x)
        nu = np.linalg.norm(u)
        u = (u / nu)[None, :]
        pair = np.einsum("a,na->n", xi, u)
        Fv = ev(z, u)
        gF = (F.gradients[chart](z, u) if has_grad
              else _fd_grad(lambda V: ev(z, V), u))
        gR = (pair[:, None] * np.conj(xi)[None, :] * Fv[:, None]
              - (np.abs(pair) ** 2)[:, None] * gF) / (Fv ** 2)[:, None]
        g = -gR[0] / nu
        return np.concatenate([2.0 * g.real, 2.0 * g.imag])

    x0 = np.concatenate([u0.real, u0.imag])
    res = minimize(neg, x0, jac=neg_jac, method="L-BFGS-B",
                   options={"maxiter": maxiter, "ftol": 1e-16, "gtol": 1e-14})
    best = max(v0, -float(res.fun))
    if not np.isfinite(best) or best <= 0:
        raise DualAscentError(
            f"dual ascent failed at z={z!r}, xi={xi!r} (value {best!r})")
    return best


def finsler_kobayashi_positive(F_dual: FinslerMetric, base_samples, fiber_points,
                               omega=None, chart: int = 0,
                               stencil: ComplexHessianStencil = ComplexHessianStencil(
                                   step=1e-3, order=2)):
    """Extremes of the Kobayashi curvature of the metric carried by the bundle.

    The Kobayashi curvature of the metric F on its bundle is minus the Schur
    complement of its own O(1) potential: a Griffiths-positive Hermitian F
    comes out positive, and min > 0 over the samples certifies Kobayashi
    positivity of the bundle carrying F.  ``fiber_points`` are homogeneous
    fiber vectors, each evaluated in its best chart; values are divided by
    omega when given.
    """
    from .projectivization import best_fiber_chart, dehomogenize

    pots: dict[int, object] = {}
    lo, hi = np.inf, -np.inf
    for z in np.asarray(base_samples, dtype=complex):
        om = 1.0 if omega is None else float(omega.coefficient(np.array([z]), chart)[0])
        groups: dict[int, list[np.ndarray]] = {}
        for zeta in fiber_points:
            fc = best_fiber_chart(zeta)
            groups.setdefault(fc, []).append(dehomogenize(zeta, fc))
        for fc, ws in groups.items():
            if fc not in pots:
                pots[fc] = o1_potential(F_dual, chart, fiber_chart=fc)
            pts = np.column_stack([np.full(len(ws), complex(z)), np.array(ws)])
            vals = -kobayashi_batch(pots[fc], pts, stencil) / om
            lo = min(lo, float(np.min(vals)))
            hi = max(hi, float(np.max(vals)))
    return lo, hi
