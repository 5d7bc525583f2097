"""Contract-driven verification: protocols, plans, generated unit tests,
synthetic data, sandboxed evaluation, program assembly, and the execution gate."""
from __future__ import annotations

from .protocol import ProgenitorProtocol, SideRule, load_protocol
from .plan import DataContractPlan, TensorContract, devise_plan, parse_plan, verify_plan
from .checks import Check, UnitTestSuite, build_unit_tests
from .sandbox import SandboxReport, SandboxRequest, run_sandbox
from .synthetic import SyntheticDataProgram, generate_synthetic_data
from .evaluator import ModuleEvaluator, make_contextual_evaluator
from .assembly import (
    FalsePositiveBook,
    FpReport,
    GateOutcome,
    ProgramAssembly,
    assemble_program,
    integration_gate,
    materialize_assembly,
)

__all__ = [
    "ProgenitorProtocol",
    "SideRule",
    "load_protocol",
    "DataContractPlan",
    "TensorContract",
    "parse_plan",
    "verify_plan",
    "devise_plan",
    "Check",
    "UnitTestSuite",
    "build_unit_tests",
    "SandboxRequest",
    "SandboxReport",
    "run_sandbox",
    "SyntheticDataProgram",
    "generate_synthetic_data",
    "ModuleEvaluator",
    "make_contextual_evaluator",
    "ProgramAssembly",
    "assemble_program",
    "materialize_assembly",
    "integration_gate",
    "GateOutcome",
    "FalsePositiveBook",
    "FpReport",
]
