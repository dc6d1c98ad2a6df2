"""
Inference, evaluation, ablation, convergence logging, visualization and the
built-in oracle suites.
"""

from .ablation import AblationRow, ablate, ablation_modes
from .convergence import ConvergencePoint, convergence_log
from .evaluation import EvaluationConfig, RunReport, evaluate_run
from .inference import InferenceConfig, NoisePredictor, infer
from .selftest import SuiteResult, run_selftest
from .visualize import visualize

__all__ = [
    "AblationRow",
    "ConvergencePoint",
    "EvaluationConfig",
    "InferenceConfig",
    "NoisePredictor",
    "RunReport",
    "SuiteResult",
    "ablate",
    "ablation_modes",
    "convergence_log",
    "evaluate_run",
    "infer",
    "run_selftest",
    "visualize",
]
