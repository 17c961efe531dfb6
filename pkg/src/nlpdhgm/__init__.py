"""Exact nonlinear primal-dual hybrid gradient method (NL-PDHGM).

Submodules
----------
solver       iteration, step rules, testing ledger, metric and bound diagnostics
problems     saddle-problem interface and the complex phase/amplitude toy
prox         closed-form proximal maps
pde          1D finite elements for the potential-to-state map
experiments  PDE experiments, data generation, rate fits
cli          command-line front end
"""

__version__ = "0.1.0"

from .problems import PrimalDualPoint, SaddleProblem, ComplexToyProblem  # noqa: E402
from .solver import (  # noqa: E402
    Accelerated,
    AnalysisParams,
    ConstantWeak,
    LinearRate,
    StepState,
    nlpdhgm_step,
    solve,
)

__all__ = [
    "__version__",
    "PrimalDualPoint",
    "SaddleProblem",
    "ComplexToyProblem",
    "StepState",
    "ConstantWeak",
    "Accelerated",
    "LinearRate",
    "AnalysisParams",
    "nlpdhgm_step",
    "solve",
]
