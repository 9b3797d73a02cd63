"""paypipe: a deterministic execution engine for payment pipelines.

Token streams flow through a directed acyclic graph of nodes: an originator
turns deposits into streams, routers (built from reusable templates) retain,
split, gate, or report them, and endpoints pay the funds out. Every external
trigger runs as one atomic, gas-metered transaction over an integrated
token ledger, producing a deterministic event trace.
"""

from .bench import (BenchReport, MonolithicPayroll, build_monolith,
                    build_pipeline_fixture, format_report, observables,
                    run_comparison)
from .engine import (
    SETUP_TX,
    ConservationBreach,
    CostTable,
    Engine,
    EventRecord,
    GasMeter,
    Transaction,
    TxResult,
    format_event,
)
from .errors import (
    AmountOverflow,
    EdgeMissing,
    EngineError,
    FatalStreamError,
    InsufficientAllowance,
    InsufficientBalance,
    InsufficientHeld,
    LedgerError,
    NotClaimable,
    NothingToClaim,
    ObservableMismatch,
    RejectedStream,
    SpecSyntaxError,
    SpecValidationError,
    UnknownEdge,
    UnknownNode,
    UntrustedOracle,
    ZeroAmount,
)
from .ledger import MAX_AMOUNT, NULL_ADDRESS, TokenLedger
from .nodes import (
    DEFAULT_POLICY,
    EndpointNode,
    ErrorSeverity,
    Node,
    NodeKind,
    OriginatorNode,
    PolicyAction,
    RouterNode,
    StreamError,
    StreamMessage,
    node_address,
)
from .pipeline import (
    NodeSpec,
    PipelineSpec,
    ValidationError,
    instantiate,
    load_pipeline,
    parse_pipeline,
    serialize_pipeline,
    validate_pipeline,
)
from .predicates import PredicateEvalError, evaluate, parse_predicate, predicate_text
from .scenario import (
    Scenario,
    ScenarioResult,
    Step,
    load_scenario,
    parse_scenario,
    run_scenario,
)
from .templates import TEMPLATES, Template, apportion, make_template, template_names

__version__ = "0.1.0"

__all__ = [
    "BenchReport", "MonolithicPayroll", "build_monolith",
    "build_pipeline_fixture", "format_report", "observables",
    "run_comparison",
    "SETUP_TX", "ConservationBreach", "CostTable", "Engine", "EventRecord",
    "GasMeter", "Transaction", "TxResult", "format_event",
    "AmountOverflow", "EdgeMissing", "EngineError", "FatalStreamError",
    "InsufficientAllowance", "InsufficientBalance", "InsufficientHeld",
    "LedgerError", "NotClaimable", "NothingToClaim", "ObservableMismatch",
    "RejectedStream", "SpecSyntaxError", "SpecValidationError", "UnknownEdge",
    "UnknownNode", "UntrustedOracle", "ZeroAmount",
    "MAX_AMOUNT", "NULL_ADDRESS", "TokenLedger",
    "DEFAULT_POLICY", "EndpointNode", "ErrorSeverity", "Node", "NodeKind",
    "OriginatorNode", "PolicyAction", "RouterNode", "StreamError",
    "StreamMessage", "node_address",
    "NodeSpec", "PipelineSpec", "ValidationError", "instantiate",
    "load_pipeline", "parse_pipeline", "serialize_pipeline",
    "validate_pipeline",
    "PredicateEvalError", "evaluate", "parse_predicate", "predicate_text",
    "Scenario", "ScenarioResult", "Step", "load_scenario", "parse_scenario",
    "run_scenario",
    "TEMPLATES", "Template", "apportion", "make_template", "template_names",
    "__version__",
]
