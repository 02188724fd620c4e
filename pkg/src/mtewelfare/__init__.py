"""Welfare analysis of treatment assignment through marginal treatment effects."""
from .dgp import (Dataset, DgpSpec, LatentSelectionSpec, normalize_selection, population_moments,
                  reference_spec, simulate, true_integrated_mte, true_mte)
from .exceptions import (ConfigurationError, DomainError, EmptyArm, HarnessError, SingularDesign,
                         UnsupportedDimension)
from .mte import ParametricMTE, ThetaEstimate, build_design, fit_theta, integrated_kernel, mte_hat
from .policy import DecisionSet, EWMPolicy, PolicyClass, argmax_over_class, contains, vc_dimension
from .propensity import LinearPropensity, OraclePropensity, fit_linear, propensity_error
from .rules import PosteriorSpec, bayes_rule, ewm_hybrid, ewm_known, plugin_rule
from .welfare import (brute_force_welfare, empirical_welfare, naive_kernel, oracle_best,
                      representation_welfare)

__version__ = "0.1.0"
