"""Structural equation modeling for latent diffusions observed at high frequency.

The package covers the full loop of the selection benchmark: simulate a
factor-diffusion truth, compute the realized quadratic covariation, fit
candidate models by quasi-maximum likelihood, and compare them with the
quasi-Bayesian information criteria.
"""

from .diffsim import (OuBlock, PathBundle, simulate_custom, simulate_ou,
                      simulate_true_model, true_sigma0)
from .errors import (AllStartsFailedError, HfsemError, NotPositiveDefiniteError,
                     RankDeficientError, SingularStructureError, SpecError)
from .harness import (ExperimentConfig, GapProbeResult, SelectionTable,
                      gap_growth_probe, render_table, run_experiment,
                      write_outputs)
from .infocrit import (CriteriaRow, GammaZero, criteria_row, gamma_zero,
                       posterior_probs, qaic, qbic1, qbic2, select)
from .models import (THETA1_TRUE, THETA2_TRUE, build_model1, build_model2,
                     build_model3, load_builtin, resolve_spec)
from .qlik import LikelihoodSurface, QuadVar, limit_loglik, quad_var
from .qmle import (FitOptions, FitReport, fit, fit_multistart, limit_optimum,
                   moment_start)
from .semspec import (Fixed, Free, ImpliedCov, PatternMatrix, SemSpec,
                      check_identifiability, nested_embedding)

__version__ = "0.1.0"
