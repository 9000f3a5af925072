"""Numerical toolkit for curvature positivity of Hermitian and Finsler
metrics on holomorphic vector bundles over the Riemann sphere."""

__version__ = "0.1.0"

from .base_geometry import (BaseChartAtlas, BaseHermitianForm, LineBundleMetric,
                            disk_samples, fubini_study_form, fubini_study_line,
                            line_curvature)
from .bundle_metrics import (EndCurvature, HermitianMetric, chern_curvature,
                             det_metric, direct_sum_metric, dual_metric,
                             griffiths_extremes, symmetric_power_gram,
                             symmetric_power_metric, twist_by_line)
from .direct_image import (BerndtssonReport, DetImageMetric, DirectImageGram,
                           TwistedGramFamily, assemble_det_metric, assemble_hk,
                           assemble_hk_twisted, berndtsson_inequality_check,
                           direct_image_curvature)
from .finsler import (FinslerMetric, convexity_check, dual_finsler,
                      finsler_kobayashi_positive, hermitian_finsler,
                      kth_root_finsler, perturb_with_hermitian, twist_finsler)
from .numerics import (ChartScalarField, ComplexHessianStencil,
                       DegenerateMetricError, EvaluationDomainError,
                       FiberQuadratureRule, complex_hessian, fiber_integrate)
from .projectivization import (ProjectivizedPotential, full_curvature,
                               gamma_curvature, kobayashi_by_minimization,
                               kobayashi_curvature, o1_potential,
                               proof_matrices)
from .verifier import (ConclusionReport, HymReport, HypothesisReport, Scenario,
                       check_conclusion_finsler, check_conclusion_hermitian,
                       check_hym_scenario, check_hypotheses, paper_example_1,
                       rank2_uniform)
