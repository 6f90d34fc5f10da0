"""Region-based modeling, verification, and test generation toolkit."""

from .parser import ParseError, parse_expr, parse_program
from .admission import AdmissionReport, AdmissionStatus, admit
from .evaluator import (Counterexample, EvalError, ReplayReport, eval_call,
                        replay_counterexample)
from .decomp import (DecompError, DecompOptions, DecompResult, Region,
                     classify_input, decompose)
from .verify import Verdict, VerifyError, find_instance, verify_goal
from .testgen import TemplateSpec, TestgenError, generate_tests, render_tests
from .metrics import MetricError, aggregate_scores, load_table, score_assessment
from .project import (Metamodel, Plan, ProjectError, ProjectServer,
                      ServeOptions, apply_plan, plan_reformalization,
                      scan_project, serve)

__version__ = "0.1.0"

__all__ = [
    "AdmissionReport", "AdmissionStatus", "Counterexample", "DecompError",
    "DecompOptions", "DecompResult", "EvalError", "Metamodel", "MetricError",
    "ParseError", "Plan", "ProjectError", "ProjectServer", "Region",
    "ReplayReport", "ServeOptions", "TemplateSpec", "TestgenError", "Verdict",
    "VerifyError", "admit", "aggregate_scores", "apply_plan",
    "classify_input", "decompose", "eval_call", "find_instance",
    "generate_tests", "load_table", "parse_expr", "parse_program",
    "plan_reformalization", "render_tests", "replay_counterexample",
    "scan_project", "score_assessment", "serve", "verify_goal",
    "__version__",
]
