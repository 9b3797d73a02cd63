"""Node classes and the stream protocols.

Three node kinds form a pipeline: an originator turns plain tokens into a
stream, routers retain or forward it, and endpoints turn it back into plain
tokens. Funds always move by approve-then-pull: the sender approves the
recipient, the recipient executes the delegated transfer, and the sender
emits a ``Sent`` event once the pull succeeds.

Errors raised while a node processes a stream are ``StreamError`` values with
a severity; the owning node's error policy decides whether to proceed, hold
the funds, refund the origin, or redirect to a designated handler. An
unhandled fatal error reverts the whole transaction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

from .errors import (
    EngineError,
    NotClaimable,
    NothingToClaim,
    ZeroAmount,
)


def node_address(node_id: str) -> str:
    """Ledger address owned by a node; derived, so instantiation is deterministic."""
    return f"node:{node_id}"


class NodeKind(Enum):
    ORIGINATOR = "originator"
    ROUTER = "router"
    ENDPOINT = "endpoint"


class ErrorSeverity(IntEnum):
    WARNING = 1
    RECOVERABLE = 2
    FATAL = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ErrorSeverity":
        return cls[label.upper()]


class PolicyAction(Enum):
    PROCEED = "proceed"
    HOLD = "hold"
    REFUND = "refund"
    REDIRECT = "redirect"


# Policy entry: the action plus a redirect target node id (redirect only).
PolicyEntry = tuple[PolicyAction, Optional[str]]

# Unconfigured severities fall back here; fatal has no default entry and
# reverts the transaction.
DEFAULT_POLICY: dict[ErrorSeverity, PolicyEntry] = {
    ErrorSeverity.WARNING: (PolicyAction.PROCEED, None),
    ErrorSeverity.RECOVERABLE: (PolicyAction.REFUND, None),
}


class StreamError(Exception):
    """Error raised by template logic while handling a received stream.

    ``amount`` is the affected portion (defaults to the full message),
    ``continuation`` resumes the interrupted forward under a Proceed policy,
    and ``action_override`` forces a handling action regardless of policy.
    """

    def __init__(
        self,
        severity: ErrorSeverity,
        reason: str,
        amount: Optional[int] = None,
        continuation=None,
        action_override: Optional[PolicyAction] = None,
    ):
        super().__init__(f"{severity.label}: {reason}")
        self.severity = severity
        self.reason = reason
        self.amount = amount
        self.continuation = continuation
        self.action_override = action_override


@dataclass
class StreamMessage:
    """The unit flowing through a pipeline.

    ``path`` records every node the message traversed, starting at the
    originator; ``error`` carries context when a message is redirected by an
    error policy.
    """

    amount: int
    origin: str
    originator: str
    path: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    error: Optional[dict] = None

    def child(self, amount: Optional[int] = None) -> "StreamMessage":
        return StreamMessage(
            amount=self.amount if amount is None else amount,
            origin=self.origin,
            originator=self.originator,
            path=list(self.path),
            metadata=dict(self.metadata),
        )


class Node:
    """Base node: identity, wiring, error policy, and mutable state.

    ``state`` holds everything a transaction may mutate; the engine snapshots
    it for rollback, so templates must keep all mutable data inside it.
    """

    kind = NodeKind.ROUTER

    def __init__(
        self,
        node_id: str,
        outputs: Optional[list[tuple[str, str]]] = None,
        error_policy: Optional[dict[ErrorSeverity, PolicyEntry]] = None,
    ):
        self.id = node_id
        self.address = node_address(node_id)
        self.outputs = list(outputs or [])
        self.out_by_tag = dict(self.outputs)
        self.error_policy = dict(error_policy or {})
        self.engine = None  # bound when registered
        self.state: dict = {}  # everything rollback must cover lives here

    # -- wiring ------------------------------------------------------------

    @property
    def held(self) -> int:
        """Tokens currently owned by this node's address."""
        return self.engine.ledger.balance_of(self.address)

    def target(self, tag: str) -> str:
        try:
            return self.out_by_tag[tag]
        except KeyError:
            raise EngineError(f"node {self.id} has no output tagged {tag!r}") from None

    def resolve_policy(self, severity: ErrorSeverity) -> Optional[PolicyEntry]:
        """Policy entry for a severity; None means revert the transaction."""
        if severity in self.error_policy:
            return self.error_policy[severity]
        return DEFAULT_POLICY.get(severity)

    # -- stream protocol ---------------------------------------------------

    def pre_accept(self, sender: "Node", msg: StreamMessage) -> None:
        """Refusal hook; raise RejectedStream to refuse before funds move."""

    def pull_funds(self, sender: "Node", msg: StreamMessage) -> None:
        self.engine.ledger.transfer_from(
            self.address, sender.address, self.address, msg.amount
        )

    def process(self, sender: "Node", msg: StreamMessage) -> None:
        """Run this node's logic after a pull; stream errors go to the policy."""
        msg.path.append(self.id)
        self.engine.charge("config_read")
        try:
            self.on_receive(msg)
        except StreamError as err:
            self.engine.handle_error(self, err, msg)

    def on_receive(self, msg: StreamMessage) -> None:
        raise NotImplementedError

    # -- optional trigger surfaces ------------------------------------------

    def deposit(self, from_account: str, amount: int, metadata: dict) -> None:
        raise EngineError(f"node {self.id} does not accept deposits")

    def due_releases(self, now: int) -> list[tuple[int, int]]:
        return []

    def crank(self, k: int, due: int) -> None:
        raise EngineError(f"node {self.id} has no schedule to crank")

    def claim(self, account: str) -> int:
        raise NotClaimable(f"node {self.id} holds nothing claimable")

    def instruct(self, oracle: str, dest_tag: str, amount: int) -> None:
        raise EngineError(f"node {self.id} does not take oracle instructions")


class OriginatorNode(Node):
    """Entry node: pulls a deposit and streams it along its single output."""

    kind = NodeKind.ORIGINATOR

    def deposit(self, from_account: str, amount: int, metadata: dict) -> None:
        if amount <= 0:
            raise ZeroAmount("deposits must be positive")
        self.engine.ledger.transfer_from(
            self.address, from_account, self.address, amount
        )
        msg = StreamMessage(
            amount=amount,
            origin=from_account,
            originator=self.id,
            path=[self.id],
            metadata=dict(metadata or {}),
        )
        _, to = self.outputs[0]
        self.engine.dispatch(self, to, msg)

    def on_receive(self, msg: StreamMessage) -> None:
        raise EngineError("originators do not receive streams")


class EndpointNode(Node):
    """Terminal node: pays the recipient directly or holds funds for claiming."""

    kind = NodeKind.ENDPOINT

    def __init__(self, node_id, recipient: str, mode: str = "direct",
                 error_policy=None):
        super().__init__(node_id, outputs=[], error_policy=error_policy)
        self.mode = mode
        self.recipient = recipient
        self.state = {"claimable": {}}

    def on_receive(self, msg: StreamMessage) -> None:
        if self.mode == "direct":
            self.engine.ledger.transfer(self.address, self.recipient, msg.amount)
        else:
            claimable = self.state["claimable"]
            claimable[self.recipient] = claimable.get(self.recipient, 0) + msg.amount
            self.engine.emit(
                "Held", self.address,
                {"account": self.recipient, "amount": msg.amount},
            )

    def claim(self, account: str) -> int:
        if self.mode != "claimable":
            raise NotClaimable(f"endpoint {self.id} pays out directly")
        amount = self.state["claimable"].get(account, 0)
        if amount == 0:
            raise NothingToClaim(f"{account} has nothing to claim at {self.id}")
        self.engine.ledger.transfer(self.address, account, amount)
        self.state["claimable"][account] = 0
        self.engine.emit(
            "Claimed", self.address, {"account": account, "amount": amount}
        )
        return amount


class RouterNode(Node):
    """Intermediate node whose behavior is supplied by a template instance."""

    kind = NodeKind.ROUTER

    def __init__(self, node_id, template, outputs=None, error_policy=None):
        super().__init__(node_id, outputs=outputs, error_policy=error_policy)
        self.template = template
        self.state = template.initial_state()

    def on_receive(self, msg: StreamMessage) -> None:
        self.template.receive(self, msg)

    def due_releases(self, now: int) -> list[tuple[int, int]]:
        return self.template.due_releases(self, now)

    def crank(self, k: int, due: int) -> None:
        self.engine.charge("config_read")
        self.template.crank(self, k, due)

    def claim(self, account: str) -> int:
        return self.template.claim(self, account)

    def instruct(self, oracle: str, dest_tag: str, amount: int) -> None:
        self.engine.charge("config_read")
        self.template.instruct(self, oracle, dest_tag, amount)
