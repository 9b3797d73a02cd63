"""Scenario files: scripted triggers and assertions against one pipeline.

A scenario is line oriented like the pipeline format. It names itself, then
lists actions in order:

    scenario payday-happy-path

    approve acme origin 50000
    deposit acme 600 dept=sales
    advance 20
    claim vault alice
    assert balance alice 400
    assert events Report 2

``approve`` grants a node's address an allowance directly on the ledger (it
is setup, not a transaction). ``deposit``, ``advance``, ``instruct``, and
``claim`` submit transactions. An ``expect revert [CODE]`` line marks the
next deposit/instruct/claim as intentionally failing; a commit, or a revert
with a different code, fails the scenario. Reverted time-advance cranks
never fail a scenario directly since later releases proceed regardless;
assert the resulting state instead.

Assertions check committed state: account balances, a node's held funds,
claimable amounts, and event counts by kind.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .engine import Engine, TxResult
from .errors import SpecSyntaxError
from .nodes import node_address
from .pipeline import _line_tokens

_INT_RE = re.compile(r"^-?[0-9]+$")

# steps that submit a transaction and may carry an expect-revert mark
_TX_STEPS = ("deposit", "instruct", "claim")


@dataclass
class Step:
    kind: str
    line: int
    args: dict = field(default_factory=dict)
    expect: Optional[str] = None  # None = must commit, "any" or a code otherwise


@dataclass
class Scenario:
    name: str
    steps: list = field(default_factory=list)


@dataclass
class ScenarioResult:
    ok: bool
    failures: list  # every failure, in encounter order
    assert_failures: list  # state assertions that did not hold
    tx_failures: list  # reverts or commits that defied expectations
    transactions: list


def _int_arg(tokens, i, what, lineno):
    tok, col = tokens[i]
    if not _INT_RE.match(tok):
        raise SpecSyntaxError(f"{what} must be an integer, got {tok!r}", lineno, col)
    return int(tok)


def _metadata(tokens, lineno):
    meta = {}
    for tok, col in tokens:
        if "=" not in tok:
            raise SpecSyntaxError(f"metadata must be key=value, got {tok!r}",
                                  lineno, col)
        key, _, value = tok.partition("=")
        if not key:
            raise SpecSyntaxError("metadata key is empty", lineno, col)
        if key in meta:
            raise SpecSyntaxError(f"duplicate metadata key {key!r}", lineno, col)
        meta[key] = int(value) if _INT_RE.match(value) else value
    return meta


def parse_scenario(text: str) -> Scenario:
    scenario: Optional[Scenario] = None
    pending: Optional[tuple[str, int]] = None  # (code|"any", line of expect)

    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = _line_tokens(raw)
        head, hcol = tokens[0]

        if head == "scenario":
            if scenario is not None:
                raise SpecSyntaxError("duplicate scenario header", lineno, hcol)
            if len(tokens) != 2:
                raise SpecSyntaxError("scenario takes a name", lineno, hcol)
            scenario = Scenario(name=tokens[1][0])
            continue
        if scenario is None:
            raise SpecSyntaxError("expected a scenario header first", lineno, hcol)

        if pending is not None and head not in _TX_STEPS:
            raise SpecSyntaxError(
                "expect revert must precede deposit, instruct, or claim",
                lineno, hcol)

        if head == "expect":
            if len(tokens) < 2 or tokens[1][0] != "revert" or len(tokens) > 3:
                raise SpecSyntaxError("expect syntax: expect revert [CODE]",
                                      lineno, hcol)
            pending = (tokens[2][0] if len(tokens) == 3 else "any", lineno)
        elif head == "approve":
            if len(tokens) != 4:
                raise SpecSyntaxError(
                    "approve syntax: approve ACCOUNT NODE AMOUNT", lineno, hcol)
            scenario.steps.append(Step("approve", lineno, {
                "account": tokens[1][0], "node": tokens[2][0],
                "amount": _int_arg(tokens, 3, "amount", lineno)}))
        elif head == "deposit":
            if len(tokens) < 3:
                raise SpecSyntaxError(
                    "deposit syntax: deposit ACCOUNT AMOUNT [k=v ...]",
                    lineno, hcol)
            step = Step("deposit", lineno, {
                "account": tokens[1][0],
                "amount": _int_arg(tokens, 2, "amount", lineno),
                "metadata": _metadata(tokens[3:], lineno)})
            scenario.steps.append(step)
        elif head == "advance":
            if len(tokens) != 2:
                raise SpecSyntaxError("advance takes a time delta", lineno, hcol)
            delta = _int_arg(tokens, 1, "delta", lineno)
            if delta < 0:
                raise SpecSyntaxError("delta must be >= 0", lineno, tokens[1][1])
            scenario.steps.append(Step("advance", lineno, {"delta": delta}))
        elif head == "instruct":
            if len(tokens) != 5:
                raise SpecSyntaxError(
                    "instruct syntax: instruct NODE ORACLE TAG AMOUNT",
                    lineno, hcol)
            scenario.steps.append(Step("instruct", lineno, {
                "node": tokens[1][0], "oracle": tokens[2][0],
                "tag": tokens[3][0],
                "amount": _int_arg(tokens, 4, "amount", lineno)}))
        elif head == "claim":
            if len(tokens) != 3:
                raise SpecSyntaxError("claim syntax: claim NODE ACCOUNT",
                                      lineno, hcol)
            scenario.steps.append(Step("claim", lineno, {
                "node": tokens[1][0], "account": tokens[2][0]}))
        elif head == "assert":
            scenario.steps.append(_parse_assert(tokens, lineno, hcol))
        else:
            raise SpecSyntaxError(f"unknown action {head!r}", lineno, hcol)

        if pending is not None and head in _TX_STEPS:
            scenario.steps[-1].expect = pending[0]
            pending = None

    if scenario is None:
        raise SpecSyntaxError("missing scenario header", 1, 1)
    if pending is not None:
        raise SpecSyntaxError("expect revert with no following action",
                              pending[1], 1)
    return scenario


def _parse_assert(tokens, lineno, hcol) -> Step:
    if len(tokens) < 2:
        raise SpecSyntaxError("assert takes a subject", lineno, hcol)
    what = tokens[1][0]
    if what == "balance":
        if len(tokens) != 4:
            raise SpecSyntaxError("assert balance ACCOUNT AMOUNT", lineno, hcol)
        return Step("assert_balance", lineno, {
            "account": tokens[2][0],
            "amount": _int_arg(tokens, 3, "amount", lineno)})
    if what == "held":
        if len(tokens) != 4:
            raise SpecSyntaxError("assert held NODE AMOUNT", lineno, hcol)
        return Step("assert_held", lineno, {
            "node": tokens[2][0],
            "amount": _int_arg(tokens, 3, "amount", lineno)})
    if what == "claimable":
        if len(tokens) != 5:
            raise SpecSyntaxError("assert claimable NODE ACCOUNT AMOUNT",
                                  lineno, hcol)
        return Step("assert_claimable", lineno, {
            "node": tokens[2][0], "account": tokens[3][0],
            "amount": _int_arg(tokens, 4, "amount", lineno)})
    if what == "events":
        if len(tokens) != 4:
            raise SpecSyntaxError("assert events KIND COUNT", lineno, hcol)
        return Step("assert_events", lineno, {
            "kind": tokens[2][0],
            "count": _int_arg(tokens, 3, "count", lineno)})
    raise SpecSyntaxError(
        "assert subject must be balance, held, claimable, or events",
        lineno, tokens[1][1])


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def run_scenario(engine: Engine, scenario: Scenario) -> ScenarioResult:
    """Execute every step, collecting failures instead of stopping early."""
    failures: list[str] = []
    assert_failures: list[str] = []
    tx_failures: list[str] = []
    transactions: list[TxResult] = []

    def fail(step, msg, bucket=assert_failures):
        line = f"line {step.line}: {msg}"
        failures.append(line)
        bucket.append(line)

    def check_tx(step: Step, result: TxResult):
        transactions.append(result)
        if step.expect is None:
            if not result.committed:
                fail(step, f"unexpected revert: {result.reason}", tx_failures)
        elif result.committed:
            fail(step, "expected a revert, transaction committed", tx_failures)
        elif step.expect != "any" and not result.reason.startswith(step.expect + ":"):
            fail(step, f"expected revert {step.expect}, got {result.reason}",
                 tx_failures)

    for step in scenario.steps:
        a = step.args
        if step.kind == "approve":
            node = engine.nodes.get(a["node"])
            if node is None:
                fail(step, f"unknown node {a['node']!r}", tx_failures)
                continue
            engine.ledger.approve(a["account"], node.address, a["amount"])
        elif step.kind == "deposit":
            check_tx(step, engine.submit_deposit(a["account"], a["amount"],
                                                 a["metadata"]))
        elif step.kind == "advance":
            transactions.extend(engine.advance_time(a["delta"]))
        elif step.kind == "instruct":
            check_tx(step, engine.submit_oracle_instruct(
                a["node"], a["oracle"], a["tag"], a["amount"]))
        elif step.kind == "claim":
            check_tx(step, engine.submit_claim(a["node"], a["account"]))
        elif step.kind == "assert_balance":
            actual = engine.ledger.balances.get(a["account"], 0)
            if actual != a["amount"]:
                fail(step, f"balance of {a['account']} is {actual}, "
                           f"expected {a['amount']}")
        elif step.kind == "assert_held":
            if a["node"] not in engine.nodes:
                fail(step, f"unknown node {a['node']!r}")
                continue
            actual = engine.ledger.balances.get(node_address(a["node"]), 0)
            if actual != a["amount"]:
                fail(step, f"{a['node']} holds {actual}, expected {a['amount']}")
        elif step.kind == "assert_claimable":
            node = engine.nodes.get(a["node"])
            if node is None:
                fail(step, f"unknown node {a['node']!r}")
                continue
            claimable = node.state.get("claimable")
            if claimable is None:
                fail(step, f"{a['node']} tracks nothing claimable")
                continue
            actual = claimable.get(a["account"], 0)
            if actual != a["amount"]:
                fail(step, f"claimable for {a['account']} at {a['node']} is "
                           f"{actual}, expected {a['amount']}")
        elif step.kind == "assert_events":
            actual = sum(1 for ev in engine.events if ev.kind == a["kind"])
            if actual != a["count"]:
                fail(step, f"{actual} {a['kind']} events, expected {a['count']}")

    return ScenarioResult(ok=not failures, failures=failures,
                          assert_failures=assert_failures,
                          tx_failures=tx_failures,
                          transactions=transactions)
