"""Deterministic transaction executor for payment pipelines.

One external trigger (deposit, time advance, oracle instruction, claim) is
one transaction: the engine snapshots ledger and node state, charges gas per
primitive operation from a configurable cost table, and either commits or
rolls back atomically. Intra-pipeline propagation is synchronous within the
transaction; nodes that hold funds (timelock, threshold, oracle-directed,
claimable endpoints) end the propagation, and the next trigger resumes it.

Gas is an accounting metric only; no limit is enforced. Charge points:

    tx_base         once per transaction
    node_call       per dispatch across an edge (error redirects included)
    ledger_write    per mint / transfer / approve / delegated transfer
    ledger_read     per balance or allowance query during execution
    event_emit      per event appended inside a transaction
    config_read     per node processing a stream, crank, or instruction
    predicate_eval  per conditional predicate evaluation

Two engines built from the same spec and fed the same triggers produce
identical event logs and gas logs; the text exports below are byte-stable.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field as dc_field
from functools import partial
from typing import Callable, Optional

from .errors import EdgeMissing, EngineError, FatalStreamError, RejectedStream, UnknownNode
from .ledger import TokenLedger
from .nodes import (
    ErrorSeverity,
    Node,
    PolicyAction,
    StreamError,
    StreamMessage,
)

EVENT_KINDS = (
    "Transfer", "Approval", "Sent", "StreamError",
    "Report", "Released", "Held", "Claimed",
)

# Setup-time events (minting, scenario approvals) live under this pseudo-id;
# real transactions start at 1.
SETUP_TX = 0


class ConservationBreach(RuntimeError):
    """Sum of balances diverged from total supply: an engine bug, never caught."""


@dataclass(frozen=True)
class CostTable:
    """Gas cost per primitive operation. Loosely inspired by common VM pricing
    so that cross-node calls carry a realistic relative penalty."""

    tx_base: int = 21000
    node_call: int = 2600
    ledger_write: int = 5000
    ledger_read: int = 200
    event_emit: int = 1000
    config_read: int = 100
    predicate_eval: int = 50

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"cost {name} must be non-negative")

    def cost(self, kind: str) -> int:
        return getattr(self, kind)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "CostTable":
        return cls(**mapping)


class GasMeter:
    """Accumulates gas within the current transaction; keeps a per-tx log."""

    def __init__(self, table: CostTable):
        self.table = table
        self.consumed = 0
        self.per_tx_log: list[tuple[int, int]] = []

    def start(self):
        self.consumed = 0

    def charge(self, kind: str):
        self.consumed += self.table.cost(kind)

    def finish(self, tx_id: int):
        self.per_tx_log.append((tx_id, self.consumed))

    def total(self) -> int:
        return sum(gas for _, gas in self.per_tx_log)


@dataclass(frozen=True)
class EventRecord:
    tx_id: int
    seq: int
    emitter: str
    kind: str
    payload: dict


@dataclass
class Transaction:
    id: int
    trigger: str  # Deposit | AdvanceTime | OracleInstruct | Claim
    status: str = "Committed"
    info: dict = dc_field(default_factory=dict)


@dataclass
class TxResult:
    tx: Transaction
    gas: int
    events: tuple
    reason: Optional[str] = None

    @property
    def committed(self) -> bool:
        return self.tx.status == "Committed"


def _esc(value) -> str:
    """Escape a payload scalar so export lines stay single-line and parsable."""
    text = str(value)
    return (
        text.replace("%", "%25")
        .replace(" ", "%20")
        .replace("=", "%3D")
        .replace("\n", "%0A")
    )


def format_event(ev: EventRecord) -> str:
    parts = [f"tx={ev.tx_id}", f"seq={ev.seq}", f"emitter={_esc(ev.emitter)}",
             f"kind={ev.kind}"]
    for key in sorted(ev.payload):
        parts.append(f"{_esc(key)}={_esc(ev.payload[key])}")
    return " ".join(parts)


class Engine:
    """Owns the ledger, clock, gas meter, event log, and node registry."""

    def __init__(self, cost_table: Optional[CostTable] = None, clock_start: int = 0):
        self.cost_table = cost_table or CostTable()
        self.meter = GasMeter(self.cost_table)
        self.now = clock_start
        self.ledger = TokenLedger(on_event=self.emit, on_charge=self.charge)
        self.nodes: dict[str, Node] = {}
        self.edges: set[tuple[str, str]] = set()
        self.entry: Optional[str] = None
        self.events: list[EventRecord] = []
        self.revert_traces: dict[int, tuple] = {}
        self.transactions: list[TxResult] = []
        self._next_tx_id = 1
        self._setup_seq = 0
        self._tx: Optional[dict] = None  # {"id", "seq", "events"} while open

    # -- assembly ------------------------------------------------------------

    def add_node(self, node: Node) -> Node:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        node.engine = self
        self.nodes[node.id] = node
        return node

    def add_edge(self, from_id: str, to_id: str) -> None:
        self.edges.add((from_id, to_id))

    def set_entry(self, node_id: str) -> None:
        self.entry = node_id

    def setup_balances(self, balances: dict[str, int]) -> None:
        for account, amount in balances.items():
            self.ledger.mint(account, amount)

    # -- gas and events --------------------------------------------------------

    def in_transaction(self) -> bool:
        return self._tx is not None

    def charge(self, kind: str) -> None:
        if self._tx is not None:
            self.meter.charge(kind)

    def emit(self, kind: str, emitter: str, payload: dict) -> None:
        if self._tx is not None:
            record = EventRecord(self._tx["id"], self._tx["seq"], emitter, kind,
                                 dict(payload))
            self._tx["seq"] += 1
            self._tx["events"].append(record)
            self.meter.charge("event_emit")
        else:
            record = EventRecord(SETUP_TX, self._setup_seq, emitter, kind,
                                 dict(payload))
            self._setup_seq += 1
            self.events.append(record)

    # -- transaction machinery ---------------------------------------------

    def _snapshot(self):
        return (
            self.ledger.snapshot(),
            {nid: copy.deepcopy(node.state) for nid, node in self.nodes.items()},
        )

    def _restore(self, snap) -> None:
        ledger_snap, node_states = snap
        self.ledger.restore(ledger_snap)
        for nid, state in node_states.items():
            self.nodes[nid].state = state

    def _check_conservation(self) -> None:
        total = self.ledger.sum_of_balances()
        if total != self.ledger.total_supply:
            raise ConservationBreach(
                f"balances sum to {total}, supply is {self.ledger.total_supply}"
            )

    def _run_tx(self, trigger: str, info: dict, body: Callable[[], None]) -> TxResult:
        tx = Transaction(self._next_tx_id, trigger, info=dict(info))
        self._next_tx_id += 1
        snap = self._snapshot()
        self._tx = {"id": tx.id, "seq": 0, "events": []}
        self.meter.start()
        self.meter.charge("tx_base")
        reason = None
        try:
            body()
        except EngineError as err:
            self._restore(snap)
            tx.status = "Reverted"
            reason = f"{err.code}: {err.message}"
        events = tuple(self._tx["events"])
        self._tx = None
        self.meter.finish(tx.id)
        if tx.status == "Committed":
            self.events.extend(events)
            self._check_conservation()
        else:
            self.revert_traces[tx.id] = events
        result = TxResult(tx=tx, gas=self.meter.consumed, events=events,
                          reason=reason)
        self.transactions.append(result)
        return result

    # -- triggers ------------------------------------------------------------

    def _node(self, node_id: str) -> Node:
        node = self.nodes.get(node_id)
        if node is None:
            raise UnknownNode(f"no node {node_id!r}")
        return node

    def submit_deposit(self, from_account: str, amount: int,
                       metadata: Optional[dict] = None) -> TxResult:
        info = {"from": from_account, "amount": amount}
        return self._run_tx(
            "Deposit", info,
            lambda: self._node(self.entry).deposit(from_account, amount,
                                                   metadata or {}),
        )

    def submit_oracle_instruct(self, node_id: str, oracle: str, dest_tag: str,
                               amount: int) -> TxResult:
        info = {"node": node_id, "oracle": oracle, "dest": dest_tag,
                "amount": amount}
        return self._run_tx(
            "OracleInstruct", info,
            lambda: self._node(node_id).instruct(oracle, dest_tag, amount),
        )

    def submit_claim(self, node_id: str, account: str) -> TxResult:
        info = {"node": node_id, "account": account}
        return self._run_tx(
            "Claim", info, lambda: self._node(node_id).claim(account)
        )

    def submit(self, trigger: str, **args):
        """Dispatch on trigger name; one call per external action.

        Returns the TxResult, or the list of them for AdvanceTime.
        """
        if trigger == "Deposit":
            return self.submit_deposit(args["from_account"], args["amount"],
                                       args.get("metadata"))
        if trigger == "AdvanceTime":
            return self.advance_time(args["delta"])
        if trigger == "OracleInstruct":
            return self.submit_oracle_instruct(args["node_id"], args["oracle"],
                                               args["dest_tag"], args["amount"])
        if trigger == "Claim":
            return self.submit_claim(args["node_id"], args["account"])
        raise ValueError(f"unknown trigger {trigger!r}")

    def advance_time(self, delta: int) -> list[TxResult]:
        """Move the clock, then crank every due release as its own transaction.

        Releases are ordered by (due time, node id); a crank that reverts does
        not stop later cranks.
        """
        if delta < 0:
            raise ValueError("time cannot move backwards")
        self.now += delta
        entries = []
        for node_id, node in self.nodes.items():
            for due, k in node.due_releases(self.now):
                entries.append((due, node_id, k))
        entries.sort()
        results = []
        for due, node_id, k in entries:
            info = {"node": node_id, "release": k, "at": due}
            body = partial(self.nodes[node_id].crank, k, due)
            results.append(self._run_tx("AdvanceTime", info, body))
        return results

    # -- stream dispatch -------------------------------------------------------

    def dispatch(self, sender: Node, to_id: str, msg: StreamMessage,
                 via_error: bool = False) -> None:
        """Move a stream message across one edge.

        The sender approves the recipient, the recipient pulls the funds, the
        sender emits ``Sent``, and only then does the recipient's logic run.
        Error-policy redirects use the same mechanics but skip the declared
        edge check (targets are validated statically instead).
        """
        recipient = self.nodes.get(to_id)
        if recipient is None:
            raise EdgeMissing(f"{sender.id} dispatched to unknown node {to_id!r}")
        if not via_error and (sender.id, to_id) not in self.edges:
            raise EdgeMissing(f"no edge {sender.id} -> {to_id}")
        self.charge("node_call")
        try:
            recipient.pre_accept(sender, msg)
        except RejectedStream as rej:
            err = StreamError(ErrorSeverity.RECOVERABLE, f"rejected: {rej.reason}")
            self.handle_error(sender, err, msg)
            return
        self.ledger.approve(sender.address, recipient.address, msg.amount)
        recipient.pull_funds(sender, msg)
        self.emit("Sent", sender.address, {"to": to_id, "amount": msg.amount})
        recipient.process(sender, msg)

    def handle_error(self, node: Node, err: StreamError, msg: StreamMessage) -> None:
        """Emit ``StreamError``, then apply the node's policy for the severity.

        Unhandled fatal errors (and failures inside the chosen action) abort
        the transaction.
        """
        amount = msg.amount if err.amount is None else err.amount
        entry = (err.action_override, None) if err.action_override else \
            node.resolve_policy(err.severity)
        action_label = entry[0].value if entry else "revert"
        self.emit(
            "StreamError", node.address,
            {"severity": err.severity.label, "reason": err.reason,
             "amount": amount, "action": action_label},
        )
        if entry is None:
            raise FatalStreamError(f"{node.id}: {err.reason}")
        action, target = entry
        try:
            if action is PolicyAction.PROCEED:
                if err.continuation is not None:
                    err.continuation()
            elif action is PolicyAction.HOLD:
                pass  # funds stay where they are
            elif action is PolicyAction.REFUND:
                self.ledger.transfer(node.address, msg.origin, amount)
            else:  # REDIRECT
                redirected = msg.child(amount=amount)
                redirected.error = {
                    "severity": err.severity.label,
                    "reason": err.reason,
                    "failed_node": node.id,
                }
                self.dispatch(node, target, redirected, via_error=True)
        except FatalStreamError:
            raise
        except Exception as exc:
            raise FatalStreamError(
                f"{node.id}: {action_label} failed handling {err.reason!r}: {exc}"
            ) from exc

    # -- reports ------------------------------------------------------------

    def gas_report(self) -> dict:
        """Per-transaction gas plus the running total, as plain data."""
        per_tx = [
            {"tx": r.tx.id, "trigger": r.tx.trigger, "status": r.tx.status,
             "gas": r.gas}
            for r in self.transactions
        ]
        return {"per_tx": per_tx, "total": sum(r.gas for r in self.transactions)}

    def trace_text(self) -> str:
        lines = [format_event(ev) for ev in self.events]
        return "\n".join(lines) + ("\n" if lines else "")

    def gas_text(self) -> str:
        lines = [
            f"tx={r.tx.id} trigger={r.tx.trigger} status={r.tx.status} gas={r.gas}"
            for r in self.transactions
        ]
        total = sum(r.gas for r in self.transactions)
        lines.append(f"total txs={len(self.transactions)} gas={total}")
        return "\n".join(lines) + "\n"

    def state_fingerprint(self) -> dict:
        """Plain-data view of all mutable state, for deep comparisons."""
        return {
            "balances": dict(self.ledger.balances),
            "allowances": {
                f"{owner}->{spender}": amt
                for (owner, spender), amt in sorted(self.ledger.allowances.items())
            },
            "total_supply": self.ledger.total_supply,
            "clock": self.now,
            "nodes": {nid: copy.deepcopy(n.state) for nid, n in self.nodes.items()},
        }
