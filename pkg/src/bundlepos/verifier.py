"""Hypothesis and conclusion checks for the four positivity statements.

A scenario fixes a split bundle over the sphere (or user-supplied weight
tables), the base form Omega, grids and quadrature rules.  Hypothesis checks
measure the tightest admissible constant M from curvature ratios; conclusion
checks assemble the L2 metrics, test Griffiths negativity of the twisted
families, and for the Finsler statements run the k-th-root / perturb / dual
pipeline end to end.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import bundle_metrics as bm
from .base_geometry import BaseChartAtlas, BaseHermitianForm, fubini_study_form
from .bundle_metrics import (HermitianMetric, det_metric, direct_sum_metric,
                             dual_metric, griffiths_profile, twist_by_line)
from .direct_image import (DI_STENCIL, DirectImageGram, TwistedGramFamily,
                           assemble_det_metric, default_rule,
                           direct_image_curvature)
from .finsler import (convexity_check, dual_finsler, finsler_kobayashi_positive,
                      kth_root_finsler, perturb_with_hermitian,
                      suggested_epsilon)
from .numerics import (ComplexHessianStencil, DegenerateMetricError,
                       FiberQuadratureRule)
from .projectivization import (ProjectivizedPotential, best_fiber_chart,
                               dehomogenize, full_curvature_batch,
                               kobayashi_batch, o1_potential)

LOWER_BOUND_TOL = 1e-6
BORDERLINE_TOL = 1e-6


def env_threads() -> int:
    try:
        return max(1, int(os.environ.get("BUNDLEPOS_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    n = env_threads()
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


@dataclass
class Scenario:
    """A bundle plus all metric, grid and tolerance choices for the checks."""

    name: str
    degrees: tuple[int, ...]
    omega_scale: float
    base_radial: int = 21
    base_angular: int = 21
    fiber_keep: int = 12
    scan_radial: int = 4
    scan_angular: int = 8
    pipeline_radial: int = 2
    pipeline_angular: int = 5
    rule: FiberQuadratureRule | None = None
    conclusion_rule: FiberQuadratureRule | None = None
    stencil: ComplexHessianStencil = ComplexHessianStencil(step=1e-3, order=4)
    k_max: int | None = None
    seed: int = 20240801
    convexity_triples: int = 10000
    metric_e: HermitianMetric | None = None

    def __post_init__(self):
        self.rank = len(self.degrees) if self.metric_e is None else self.metric_e.rank
        if self.metric_e is None:
            self.metric_e = direct_sum_metric(self.degrees)
        if self.rule is None:
            self.rule = default_rule(self.rank)
        if self.conclusion_rule is None:
            # the full-grid Hermitian conclusion sweep is a sign test with a
            # large margin; a coarser rule keeps it inside its time budget
            self.conclusion_rule = FiberQuadratureRule(12, 12, self.rank - 1)
        if self.k_max is None:
            self.k_max = 10 if self.rank == 2 else 6
        self.atlas = BaseChartAtlas.polar(self.base_radial, self.base_angular)
        self.omega = fubini_study_form(self.omega_scale)
        # metric data derived from the bundle metric
        self.metric_h_dual = dual_metric(self.metric_e)        # on E*, induces h
        self.metric_g_dual = self.metric_h_dual                # g = h by default
        self.det_line = det_metric(self.metric_e)
        self.metric_twisted = twist_by_line(self.metric_e, self.det_line, power=-1)

    # ---- sample sets -----------------------------------------------------

    def base_samples(self, chart: int) -> np.ndarray:
        return self.atlas.chart_samples(chart)

    def scan_samples(self, chart: int) -> np.ndarray:
        return BaseChartAtlas.polar(self.scan_radial, self.scan_angular).chart_samples(chart)

    def pipeline_samples(self, chart: int) -> np.ndarray:
        return BaseChartAtlas.polar(self.pipeline_radial,
                                    self.pipeline_angular).chart_samples(chart)

    def fiber_vectors(self) -> list[np.ndarray]:
        """Coordinate directions plus a decimated quadrature-node grid."""
        r = self.rank
        out = [np.eye(r, dtype=complex)[i] for i in range(r)]
        grid_rule = FiberQuadratureRule(8, 8, r - 1)
        nodes = grid_rule.nodes
        stride = max(1, nodes.shape[0] // self.fiber_keep)
        for w in nodes[::stride][:self.fiber_keep]:
            zeta = np.concatenate([w, [1.0 + 0.0j]])
            out.append(zeta / np.linalg.norm(zeta))
        return out

    def pipeline_fiber_vectors(self) -> list[np.ndarray]:
        r = self.rank
        out = [np.eye(r, dtype=complex)[i] for i in range(r)]
        mix = np.ones(r, dtype=complex) + 0.3j * np.arange(r)
        out.append(mix / np.linalg.norm(mix))
        return out

    def resolution(self) -> dict:
        return {
            "base_grid": [self.base_radial, self.base_angular],
            "scan_grid": [self.scan_radial, self.scan_angular],
            "pipeline_grid": [self.pipeline_radial, self.pipeline_angular],
            "fiber_samples": self.fiber_keep + self.rank,
            "quadrature": [self.rule.n_theta, self.rule.n_rho],
            "stencil": [self.stencil.step, self.stencil.order],
        }

    # ---- potentials ------------------------------------------------------

    def potential_h(self, chart: int, fiber_chart: int | None = None) -> ProjectivizedPotential:
        return o1_potential(self.metric_h_dual, chart, fiber_chart)

    def potential_g(self, chart: int, fiber_chart: int | None = None) -> ProjectivizedPotential:
        return o1_potential(self.metric_g_dual, chart, fiber_chart)

    def potential_g_twisted(self, chart: int,
                            fiber_chart: int | None = None) -> ProjectivizedPotential:
        return o1_potential(self.metric_twisted, chart, fiber_chart)


def paper_example_1(**overrides) -> Scenario:
    """The built-in rank-3 split scenario with degrees (9, 8, 7) and Omega = 7 * Theta_FS."""
    kwargs = dict(name="paper-example-1", degrees=(9, 8, 7), omega_scale=7.0)
    kwargs.update(overrides)
    return Scenario(**kwargs)


def rank2_uniform(a: int = 1, **overrides) -> Scenario:
    """L^a + L^a: the borderline M = 1 case."""
    kwargs = dict(name=f"rank2-uniform-{a}", degrees=(a, a), omega_scale=float(a))
    kwargs.update(overrides)
    return Scenario(**kwargs)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _schur_chunked(pot: ProjectivizedPotential, rows: np.ndarray,
                   stencil: ComplexHessianStencil, chunk: int = 3000) -> np.ndarray:
    out = np.empty(rows.shape[0])
    pieces = [(lo, min(lo + chunk, rows.shape[0]))
              for lo in range(0, rows.shape[0], chunk)]

    def work(piece):
        lo, hi = piece
        return lo, kobayashi_batch(pot, rows[lo:hi], stencil)

    for lo, vals in _ordered_map(work, pieces):
        out[lo:lo + vals.size] = vals
    return out


@dataclass
class SweepResult:
    """Schur-complement values over base x fiber samples, one chart."""

    values: np.ndarray          # (n_base, n_fiber)
    base: np.ndarray
    fiber: list
    chart: int


def kobayashi_sweep(metric_on_fibered, base_samples, fiber_vectors, chart: int,
                    stencil: ComplexHessianStencil) -> SweepResult:
    """-theta values (Schur complements) for the metric's O(1) potential.

    Each homogeneous fiber vector is evaluated in its best dehomogenization
    chart; whole (base x fiber-group) blocks go through one batched Hessian.
    """
    base = np.asarray(base_samples, dtype=complex)
    nb = base.size
    values = np.empty((nb, len(fiber_vectors)))
    groups: dict[int, list[int]] = {}
    for j, zeta in enumerate(fiber_vectors):
        groups.setdefault(best_fiber_chart(zeta), []).append(j)
    for fc, idxs in groups.items():
        pot = o1_potential(metric_on_fibered, chart, fiber_chart=fc)
        ws = np.array([dehomogenize(fiber_vectors[j], fc) for j in idxs])
        rows = np.concatenate(
            [np.repeat(base, len(idxs))[:, None],
             np.tile(ws, (nb, 1))], axis=1)
        vals = _schur_chunked(pot, rows, stencil).reshape(nb, len(idxs))
        values[:, idxs] = vals
    return SweepResult(values=values, base=base, fiber=list(fiber_vectors),
                       chart=chart)


def _det_curvature_on(metric: HermitianMetric, base: np.ndarray, chart: int,
                      stencil: ComplexHessianStencil) -> np.ndarray:
    from .base_geometry import line_curvature
    line = det_metric(metric)
    return np.asarray(line_curvature(line, base, chart, stencil))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    theorem: int
    scenario: str
    m_star: float
    m_raw: float
    m_valid: bool
    inconclusive: bool
    lower_bound_min: float
    lower_bound_ok: bool
    epsilon: float | None
    rank: int
    witness: dict
    resolution: dict
    precondition_failure: str | None = None

    @property
    def passed(self) -> bool:
        return self.m_valid and self.lower_bound_ok and not self.inconclusive \
            and self.precondition_failure is None


@dataclass
class KScanEntry:
    k: int
    min_extreme: float
    max_extreme: float
    negative: bool


@dataclass
class ConclusionReport:
    theorem: int
    scenario: str
    certified: bool
    per_k: list = field(default_factory=list)
    k_star: int | None = None
    extremes: tuple | None = None
    dual_extremes: tuple | None = None
    convexity_slack: float | None = None
    epsilon_used: float | None = None
    dual_kobayashi: tuple | None = None
    witness: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)
    message: str = ""


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------

def _precondition_check(scn: Scenario) -> str | None:
    """h must be positively curved; g must be fiber-positive."""
    coarse = scn.scan_samples(0)[::3]
    fib = scn.fiber_vectors()[:4]
    try:
        for chart in (0, 1):
            for zeta in fib:
                fc = best_fiber_chart(zeta)
                pot = scn.potential_h(chart, fc)
                w = dehomogenize(zeta, fc)
                pts = np.column_stack([coarse, np.tile(w, (coarse.size, 1))])
                H = full_curvature_batch(pot, pts, scn.stencil)
                evals = np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, 1, 2).conj()))
                if np.any(evals[:, 0] <= 0):
                    return ("metric h is not positively curved at a sample "
                            f"(chart {chart})")
                pot_g = scn.potential_g(chart, fc)
                kobayashi_batch(pot_g, pts, scn.stencil)  # raises if fiber degenerate
    except DegenerateMetricError as exc:
        return str(exc)
    return None


def check_hypotheses(theorem: int, scn: Scenario) -> HypothesisReport:
    """Measure the tightest M and the lower curvature bound for one theorem.

    The upper-bound form is theorem-specific; the lower bound
    (base form <= -theta(h)) is common to all four.  M is reported as the
    maximum ratio over base and fiber samples, clamped below at 1.
    """
    if theorem not in (1, 2, 3, 4):
        raise ValueError("theorem must be 1..4")
    failure = _precondition_check(scn)
    if failure is not None:
        return HypothesisReport(
            theorem=theorem, scenario=scn.name, m_star=float("nan"),
            m_raw=float("nan"), m_valid=False, inconclusive=False,
            lower_bound_min=float("nan"), lower_bound_ok=False, epsilon=None,
            rank=scn.rank, witness={}, resolution=scn.resolution(),
            precondition_failure=failure)

    r = scn.rank
    fib = scn.fiber_vectors()
    lower_min = np.inf
    m_raw = -np.inf
    witness: dict = {}
    for chart in (0, 1):
        base = scn.base_samples(chart)
        om = scn.omega.coefficient(base, chart)
        sweep_h = kobayashi_sweep(scn.metric_h_dual, base, fib, chart, scn.stencil)
        lower = sweep_h.values / om[:, None]
        lower_min = min(lower_min, float(np.min(lower)))

        if theorem == 1:
            num = kobayashi_sweep(scn.metric_g_dual, base, fib, chart,
                                  scn.stencil).values
        elif theorem == 2:
            num = kobayashi_sweep(scn.metric_twisted, base, fib, chart,
                                  scn.stencil).values
        elif theorem == 3:
            num = (r + 1) * kobayashi_sweep(scn.metric_g_dual, base, fib, chart,
                                            scn.stencil).values
            num = num + _det_curvature_on(scn.metric_g_dual, base, chart,
                                          scn.stencil)[:, None]
        else:
            num = (r + 1) * kobayashi_sweep(scn.metric_twisted, base, fib, chart,
                                            scn.stencil).values
            num = num + _det_curvature_on(scn.metric_twisted, base, chart,
                                          scn.stencil)[:, None]
        ratios = num / om[:, None]
        i, j = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
        if ratios[i, j] > m_raw:
            m_raw = float(ratios[i, j])
            witness = {"chart": chart, "z": str(base[i]),
                       "zeta": [str(c) for c in fib[j]]}

    m_star = max(1.0, m_raw)
    inconclusive = m_star >= r - BORDERLINE_TOL and m_star < r + BORDERLINE_TOL
    m_valid = bool(m_star < r - BORDERLINE_TOL)
    lower_ok = bool(lower_min >= 1.0 - LOWER_BOUND_TOL)
    eps = (r - m_star) / (5.0 * (r + m_star)) if m_valid else None
    return HypothesisReport(
        theorem=theorem, scenario=scn.name, m_star=m_star, m_raw=m_raw,
        m_valid=m_valid, inconclusive=inconclusive, lower_bound_min=lower_min,
        lower_bound_ok=lower_ok, epsilon=eps, rank=r, witness=witness,
        resolution=scn.resolution())


# ---------------------------------------------------------------------------
# conclusion checks
# ---------------------------------------------------------------------------

def _conclusion_potentials(scn: Scenario, side: str):
    if side == "standard":
        return (scn.potential_g(0), scn.potential_g(1))
    return (scn.potential_g_twisted(0), scn.potential_g_twisted(1))


def _twisted_family(scn: Scenario, k: int, side: str, det_image,
                    rule: FiberQuadratureRule | None = None) -> TwistedGramFamily:
    pots = _conclusion_potentials(scn, side)
    gram = DirectImageGram(potentials=pots, k=k, rule=rule or scn.rule)
    dual_line = det_image.line_metric().dual()
    return TwistedGramFamily(base=gram, line_weights=dual_line.weights, power=k)


def _family_extremes(family, samples_by_chart, omega: BaseHermitianForm,
                     stencil: ComplexHessianStencil = DI_STENCIL):
    lo, hi = np.inf, -np.inf
    wit = {}

    def one(args):
        chart, z = args
        theta = direct_image_curvature(family, z, chart, stencil).value
        M = family.at(z, chart)
        A = M @ theta
        A = 0.5 * (A + A.conj().T)
        vals = scipy.linalg.eigh(A, M, eigvals_only=True)
        om = float(omega.coefficient(np.array([z]), chart)[0])
        return vals[0] / om, vals[-1] / om

    jobs = [(chart, z) for chart in (0, 1) for z in samples_by_chart[chart]]
    for (chart, z), (vmin, vmax) in zip(jobs, _ordered_map(one, jobs)):
        if vmin < lo:
            lo = float(vmin)
        if vmax > hi:
            hi = float(vmax)
            wit = {"chart": chart, "z": str(z)}
    return lo, hi, wit


def check_conclusion_hermitian(theorem: int, scn: Scenario,
                               samples_by_chart=None) -> ConclusionReport:
    """Assemble the k = 1 L2 metric, twist by the determinant dual, and test
    Griffiths negativity over base samples; the dual bundle is then positive."""
    if theorem not in (3, 4):
        raise ValueError("Hermitian conclusions are theorems 3 and 4")
    failure = _precondition_check(scn)
    if failure is not None:
        return ConclusionReport(theorem=theorem, scenario=scn.name,
                                certified=False, message=failure,
                                resolution=scn.resolution())
    if samples_by_chart is None:
        samples_by_chart = {c: scn.base_samples(c) for c in (0, 1)}
    det_image = assemble_det_metric((scn.potential_h(0), scn.potential_h(1)),
                                    scn.conclusion_rule)
    side = "standard" if theorem == 3 else "twisted"
    family = _twisted_family(scn, 1, side, det_image, scn.conclusion_rule)
    lo, hi, wit = _family_extremes(family, samples_by_chart, scn.omega)
    return ConclusionReport(
        theorem=theorem, scenario=scn.name, certified=bool(hi < 0),
        per_k=[KScanEntry(k=1, min_extreme=lo, max_extreme=hi,
                          negative=bool(hi < 0))],
        k_star=1 if hi < 0 else None, extremes=(lo, hi),
        dual_extremes=(-hi, -lo), witness=wit, resolution=scn.resolution(),
        message="" if hi < 0 else "max Griffiths extreme not negative")


def check_conclusion_finsler(theorem: int, scn: Scenario,
                             k_max: int | None = None) -> ConclusionReport:
    """Scan k for Griffiths negativity of the twisted L2 family, then run the
    k-th-root / convexity / perturbation / dual pipeline at the first good k."""
    if theorem not in (1, 2):
        raise ValueError("Finsler conclusions are theorems 1 and 2")
    failure = _precondition_check(scn)
    if failure is not None:
        return ConclusionReport(theorem=theorem, scenario=scn.name,
                                certified=False, message=failure,
                                resolution=scn.resolution())
    k_max = scn.k_max if k_max is None else k_max
    det_image = assemble_det_metric((scn.potential_h(0), scn.potential_h(1)),
                                    scn.conclusion_rule)
    side = "standard" if theorem == 1 else "twisted"
    scan = {c: scn.scan_samples(c) for c in (0, 1)}
    per_k: list[KScanEntry] = []
    k_star = None
    family_star = None
    for k in range(1, k_max + 1):
        family = _twisted_family(scn, k, side, det_image, scn.conclusion_rule)
        lo, hi, _ = _family_extremes(family, scan, scn.omega)
        entry = KScanEntry(k=k, min_extreme=lo, max_extreme=hi,
                           negative=bool(hi < 0))
        per_k.append(entry)
        if entry.negative:
            k_star = k
            family_star = family
            break
    if k_star is None:
        return ConclusionReport(
            theorem=theorem, scenario=scn.name, certified=False, per_k=per_k,
            k_star=None, resolution=scn.resolution(),
            message=f"no k <= {k_max} achieves Griffiths negativity")

    pipeline = {c: scn.pipeline_samples(c) for c in (0, 1)}
    froot = kth_root_finsler(family_star, k_star)
    slack, wit = convexity_check(froot, pipeline[0],
                                 n_triples=scn.convexity_triples, seed=scn.seed)
    href = scn.metric_twisted if theorem == 1 else dual_metric(scn.metric_e)
    eps = suggested_epsilon(href, pipeline[0])
    fpert = perturb_with_hermitian(froot, href, eps)
    fdual = dual_finsler(fpert)
    lo_k, hi_k = finsler_kobayashi_positive(
        fdual, pipeline[0], scn.pipeline_fiber_vectors(), omega=scn.omega,
        chart=0)
    certified = bool(slack >= -1e-8 and lo_k > 0)
    return ConclusionReport(
        theorem=theorem, scenario=scn.name, certified=certified, per_k=per_k,
        k_star=k_star, extremes=(per_k[-1].min_extreme, per_k[-1].max_extreme),
        dual_extremes=(-per_k[-1].max_extreme, -per_k[-1].min_extreme),
        convexity_slack=slack, epsilon_used=eps, dual_kobayashi=(lo_k, hi_k),
        witness={"convexity_z": str(wit.z) if wit else ""},
        resolution=scn.resolution(),
        message="" if certified else "pipeline did not certify positivity")


# ---------------------------------------------------------------------------
# approximate constant-curvature band scenario
# ---------------------------------------------------------------------------

@dataclass
class HymReport:
    c: float
    delta: float
    band: tuple
    band_ok: bool
    h_bounds: tuple
    h_ok: bool
    g_upper: float
    g_bound: float
    g_ok: bool
    m_choice: float
    thm2_margin: float
    thm4_margin: float
    m_valid: bool
    witness: dict
    resolution: dict

    @property
    def passed(self) -> bool:
        return self.band_ok and self.h_ok and self.g_ok and self.m_valid


def check_hym_scenario(H_delta: HermitianMetric, omega: BaseHermitianForm,
                       c: float, delta: float,
                       scn: Scenario | None = None,
                       tol: float = 1e-6) -> HymReport:
    """Verify the two-sided eigenvalue band of the contracted curvature and the
    derived hypothesis margins with M = r - 1/2 and base form (c - delta) omega.

    The metric itself is supplied by the caller; only the checks run here.
    """
    r = H_delta.rank
    scn = scn or Scenario(name="hym", degrees=tuple([1] * r), omega_scale=1.0,
                          metric_e=H_delta)
    samples = scn.scan_samples(0)
    band_lo, band_hi = np.inf, -np.inf
    witness = {}
    for chart in (0, 1):
        base = scn.scan_samples(chart)
        for z in base:
            vals = bm.curvature_eigenvalues(H_delta, z, chart, omega, scn.stencil)
            if vals[0] < band_lo:
                band_lo = float(vals[0])
            if vals[-1] > band_hi:
                band_hi = float(vals[-1])
                witness = {"chart": chart, "z": str(z)}
    band_ok = bool(band_lo >= c - delta - tol and band_hi <= c + delta + tol)

    fib = scn.fiber_vectors()
    hdual = dual_metric(H_delta)
    lo_h, hi_h = np.inf, -np.inf
    for chart in (0, 1):
        base = scn.scan_samples(chart)
        om = omega.coefficient(base, chart)
        sw = kobayashi_sweep(hdual, base, fib, chart, scn.stencil)
        vals = sw.values / om[:, None]
        lo_h = min(lo_h, float(np.min(vals)))
        hi_h = max(hi_h, float(np.max(vals)))
    h_ok = bool(lo_h >= c - delta - tol and hi_h <= c + delta + tol)

    det_line = det_metric(H_delta)
    twisted = twist_by_line(H_delta, det_line, power=-1)
    g_upper = -np.inf
    thm4_num = -np.inf
    for chart in (0, 1):
        base = scn.scan_samples(chart)
        om = omega.coefficient(base, chart)
        sw = kobayashi_sweep(twisted, base, fib, chart, scn.stencil)
        vals = sw.values / om[:, None]
        g_upper = max(g_upper, float(np.max(vals)))
        det_curv = _det_curvature_on(twisted, base, chart, scn.stencil)
        num = ((r + 1) * sw.values + det_curv[:, None]) / om[:, None]
        thm4_num = max(thm4_num, float(np.max(num)))

    g_bound = -(c - delta) + r * (c + delta)
    g_ok = bool(g_upper <= g_bound + tol)
    m_choice = r - 0.5
    thm2_margin = m_choice * (c - delta) - g_upper
    thm4_margin = m_choice * (c - delta) - thm4_num
    m_valid = bool(thm2_margin >= -tol and thm4_margin >= -tol)
    return HymReport(
        c=c, delta=delta, band=(band_lo, band_hi), band_ok=band_ok,
        h_bounds=(lo_h, hi_h), h_ok=h_ok, g_upper=g_upper, g_bound=g_bound,
        g_ok=g_ok, m_choice=m_choice, thm2_margin=thm2_margin,
        thm4_margin=thm4_margin, m_valid=m_valid, witness=witness,
        resolution=scn.resolution())
