"""Gas comparison: a payroll built as a pipeline vs one monolithic node.

Both fixtures implement the same contract: an employer deposits a budget, a
schedule releases one payroll batch per period, every batch is reported and
split by weight, and each recipient is paid directly. The pipeline version
wires an originator, a timelock, a distributing splitter, one reporting
router per recipient, and one endpoint per recipient. The monolithic
version is a single node doing all of that inline, with no cross-node
dispatches.

The two runs must be observably equivalent: identical ordered payouts of
(recipient, amount, time), identical release schedule, identical report
counts. The interesting output is the gas ratio, which prices the
decomposition into small auditable units. Absolute gas depends entirely on
the cost table, so only the ratio and the ordering carry information.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .engine import CostTable, Engine
from .errors import EngineError, ObservableMismatch, ZeroAmount
from .ledger import NULL_ADDRESS
from .nodes import Node, NodeKind
from .pipeline import PipelineSpec, instantiate, parse_pipeline
from .templates import apportion

EMPLOYER = "acme"
REPORT_SINK = "tax-authority"
PAY_PER_PERIOD = 100  # per recipient per release, at equal weights
START = 10
PERIOD = 10


def recipient_accounts(n: int) -> list[str]:
    return [f"emp-{i}" for i in range(1, n + 1)]


def _check_shape(recipients: int, periods: int, weights) -> list[int]:
    if recipients < 1 or periods < 1:
        raise ValueError("recipients and periods must be >= 1")
    if weights is None:
        weights = [1] * recipients
    if len(weights) != recipients:
        raise ValueError(f"need {recipients} weights, got {len(weights)}")
    if any(w < 1 for w in weights):
        raise ValueError("weights must be >= 1")
    return list(weights)


def build_pipeline_text(recipients: int, periods: int,
                        weights=None, deposit: Optional[int] = None) -> str:
    """Payroll pipeline source: originator, timelock, splitter, reporters,
    endpoints."""
    weights = _check_shape(recipients, periods, weights)
    pool = PAY_PER_PERIOD * recipients
    funding = pool * periods if deposit is None else deposit
    lines = [
        "pipeline payroll",
        "",
        f"balance {EMPLOYER} {funding}",
        "",
        "node origin",
        "  kind originator",
        "  out main -> lock",
        "",
        "node lock",
        "  kind router",
        "  template timelock",
        "  out main -> split",
        f"  config start {START}",
        f"  config period {PERIOD}",
        f"  config releases {periods}",
        f"  config fixed {pool}",
        "",
        "node split",
        "  kind router",
        "  template distributing",
    ]
    emps = recipient_accounts(recipients)
    for emp in emps:
        lines.append(f"  out {emp} -> rep-{emp}")
    for emp, weight in zip(emps, weights):
        lines.append(f"  config weight {emp} {weight}")
    if recipients == 1:
        lines.append("  config allow_single")
    for emp in emps:
        lines += [
            "",
            f"node rep-{emp}",
            "  kind router",
            "  template reporting",
            f"  out main -> pay-{emp}",
            f"  config sink {REPORT_SINK}",
            "",
            f"node pay-{emp}",
            "  kind endpoint",
            f"  recipient {emp}",
        ]
    return "\n".join(lines) + "\n"


def build_pipeline_fixture(recipients: int, periods: int, weights=None,
                           deposit: Optional[int] = None) -> PipelineSpec:
    """Parsed payroll topology: 1 originator, 1 timelock, 1 splitter, then
    one reporting router and one endpoint per recipient."""
    return parse_pipeline(build_pipeline_text(recipients, periods, weights,
                                              deposit))


class MonolithicPayroll(Node):
    """The whole payroll in one node: schedule, reporting, split, payout."""

    kind = NodeKind.ORIGINATOR

    def __init__(self, node_id: str, recipients: list[str], releases: int,
                 weights=None):
        super().__init__(node_id, outputs=[])
        self.recipients = list(recipients)
        self.weights = _check_shape(len(self.recipients), releases, weights)
        self.per_release = PAY_PER_PERIOD * len(self.recipients)
        self.state = {"released": [False] * releases, "origin": None}

    def deposit(self, from_account, amount, metadata):
        if amount <= 0:
            raise ZeroAmount("deposits must be positive")
        self.engine.ledger.transfer_from(
            self.address, from_account, self.address, amount
        )
        self.state["origin"] = from_account

    def on_receive(self, msg):
        raise EngineError("monolithic payroll takes no streams")

    def due_releases(self, now):
        return [
            (START + k * PERIOD, k)
            for k, done in enumerate(self.state["released"])
            if not done and START + k * PERIOD <= now
        ]

    def crank(self, k, due):
        self.engine.charge("config_read")
        released = self.state["released"]
        if released[k]:
            raise EngineError(f"release {k} already executed")
        held = self.held
        amount = held if k == len(released) - 1 else min(self.per_release, held)
        released[k] = True
        self.engine.emit("Released", self.address,
                         {"release": k, "at": due, "amount": amount})
        if amount == 0:
            return
        origin = self.state["origin"]
        shares = apportion(amount, self.weights)
        for account, share in zip(self.recipients, shares):
            if share == 0:
                continue
            self.engine.emit("Report", self.address,
                             {"sink": REPORT_SINK, "amount": share,
                              "origin": origin})
            self.engine.ledger.transfer(self.address, account, share)


def build_monolith(recipients: int, periods: int, weights=None,
                   deposit: Optional[int] = None,
                   cost_table: Optional[CostTable] = None) -> Engine:
    funding = (PAY_PER_PERIOD * recipients * periods if deposit is None
               else deposit)
    engine = Engine(cost_table=cost_table)
    engine.add_node(MonolithicPayroll("payroll", recipient_accounts(recipients),
                                      periods, weights))
    engine.set_entry("payroll")
    engine.setup_balances({EMPLOYER: funding})
    return engine


def observables(engine: Engine) -> dict:
    """What an outside account holder can see: payouts, releases, reports.

    Payouts are (recipient, amount, time) in commit order; time comes from
    the triggering transaction, None for payouts outside a scheduled crank.
    """
    node_addrs = {n.address for n in engine.nodes.values()}
    payouts = []
    for result in engine.transactions:
        if not result.committed:
            continue
        at = result.tx.info.get("at")
        for ev in result.events:
            if ev.kind != "Transfer":
                continue
            src, dst = ev.payload["from"], ev.payload["to"]
            if src in node_addrs and dst not in node_addrs and dst != NULL_ADDRESS:
                payouts.append((dst, ev.payload["amount"], at))
    return {
        "payouts": payouts,
        "releases": [
            (ev.payload["release"], ev.payload["at"], ev.payload["amount"])
            for ev in engine.events if ev.kind == "Released"
        ],
        "reports": sum(1 for ev in engine.events if ev.kind == "Report"),
    }


def _drive(engine: Engine, deposit: int, periods: int) -> None:
    entry = engine.nodes[engine.entry]
    engine.ledger.approve(EMPLOYER, entry.address, deposit)
    result = engine.submit_deposit(EMPLOYER, deposit)
    if not result.committed:
        raise RuntimeError(f"benchmark deposit reverted: {result.reason}")
    for _ in range(periods):
        for r in engine.advance_time(PERIOD):
            if not r.committed:
                raise RuntimeError(f"benchmark crank reverted: {r.reason}")


def _per_tx(engine: Engine) -> tuple:
    return tuple((r.tx.id, r.tx.trigger, r.tx.status, r.gas)
                 for r in engine.transactions)


@dataclass(frozen=True)
class BenchReport:
    recipients: int
    periods: int
    deposit: int
    gas_pipeline: int
    gas_monolithic: int
    txs_pipeline: int
    txs_monolithic: int
    payouts: tuple  # (recipient, amount, time) rows in commit order
    per_tx_pipeline: tuple  # (tx, trigger, status, gas) rows
    per_tx_monolithic: tuple

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.gas_pipeline, self.gas_monolithic)

    def to_dict(self) -> dict:
        keys = ("tx", "trigger", "status", "gas")
        return {
            "recipients": self.recipients,
            "periods": self.periods,
            "deposit": self.deposit,
            "gas_pipeline": self.gas_pipeline,
            "gas_monolithic": self.gas_monolithic,
            "ratio": float(self.ratio),
            "txs_pipeline": self.txs_pipeline,
            "txs_monolithic": self.txs_monolithic,
            "payouts": [list(row) for row in self.payouts],
            "per_tx_pipeline": [dict(zip(keys, row))
                                for row in self.per_tx_pipeline],
            "per_tx_monolithic": [dict(zip(keys, row))
                                  for row in self.per_tx_monolithic],
        }


def run_comparison(recipients: int = 3, periods: int = 3,
                   deposit: Optional[int] = None,
                   cost_table: Optional[CostTable] = None,
                   weights=None) -> BenchReport:
    """Run both fixtures, check they pay out identically, compare gas."""
    weights = _check_shape(recipients, periods, weights)
    if deposit is None:
        deposit = PAY_PER_PERIOD * recipients * periods
    if deposit < 1:
        raise ValueError("deposit must be >= 1")
    pipe = instantiate(build_pipeline_fixture(recipients, periods, weights,
                                              deposit),
                       cost_table=cost_table)
    mono = build_monolith(recipients, periods, weights, deposit, cost_table)
    _drive(pipe, deposit, periods)
    _drive(mono, deposit, periods)

    obs_pipe, obs_mono = observables(pipe), observables(mono)
    if obs_pipe != obs_mono:
        raise ObservableMismatch(
            f"pipeline and monolith diverged: {obs_pipe} vs {obs_mono}"
        )

    return BenchReport(
        recipients=recipients,
        periods=periods,
        deposit=deposit,
        gas_pipeline=sum(r.gas for r in pipe.transactions),
        gas_monolithic=sum(r.gas for r in mono.transactions),
        txs_pipeline=len(pipe.transactions),
        txs_monolithic=len(mono.transactions),
        payouts=tuple(obs_pipe["payouts"]),
        per_tx_pipeline=_per_tx(pipe),
        per_tx_monolithic=_per_tx(mono),
    )


def format_report(report: BenchReport) -> str:
    """Fixed-width table, the ratio beside its EVM reference point, then one
    machine-readable JSON line."""
    rows = [
        ("fixture", "txs", "gas"),
        ("monolithic", str(report.txs_monolithic),
         f"{report.gas_monolithic:,}"),
        ("pipeline", str(report.txs_pipeline), f"{report.gas_pipeline:,}"),
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(3)]
    table = [
        "  ".join((row[0].ljust(widths[0]), row[1].rjust(widths[1]),
                   row[2].rjust(widths[2]))).rstrip()
        for row in rows
    ]
    ratio = report.gas_pipeline / report.gas_monolithic
    return "\n".join([
        f"payroll comparison: {report.recipients} recipients, "
        f"{report.periods} releases, deposit {report.deposit:,}, "
        f"{len(report.payouts)} payouts",
        *table,
        f"ratio: {ratio:.2f}x pipeline over monolithic",
        "EVM reference for this shape: 257,874 vs 549,995 gas, monolithic "
        "vs pipeline (2.13x); absolute figures are cost-model bound, the "
        "ratio is the signal",
        json.dumps(report.to_dict(), sort_keys=True),
    ]) + "\n"
