"""Fungible-token ledger with balance, allowance, and delegated-transfer semantics.

Amounts are non-negative integers in the smallest denomination. The ledger
enforces conservation (sum of balances equals total supply) and checks all
preconditions before mutating, so a failed operation leaves no trace.
"""

from __future__ import annotations

from typing import Callable, Optional

from .errors import (
    AmountOverflow,
    InsufficientAllowance,
    InsufficientBalance,
)

# Reserved source address used in mint events.
NULL_ADDRESS = "0x0"

# Amounts live in an unsigned 128-bit domain; growing the supply past it fails.
MAX_AMOUNT = 2**128 - 1

Address = str
Amount = int

EventHook = Callable[[str, str, dict], None]
ChargeHook = Callable[[str], None]

_LEDGER = "ledger"


def _check_amount(amount: Amount) -> None:
    if not isinstance(amount, int) or isinstance(amount, bool):
        raise TypeError(f"amount must be an int, got {type(amount).__name__}")
    if amount < 0:
        raise ValueError(f"amount must be non-negative, got {amount}")


class TokenLedger:
    """Single-token account book used by every node in a pipeline.

    ``on_event`` and ``on_charge`` are optional hooks the engine installs to
    record Transfer/Approval events and meter gas; a bare ledger works
    without them.
    """

    def __init__(
        self,
        on_event: Optional[EventHook] = None,
        on_charge: Optional[ChargeHook] = None,
    ):
        self.balances: dict[Address, Amount] = {}
        self.allowances: dict[tuple[Address, Address], Amount] = {}
        self.total_supply: Amount = 0
        self.on_event = on_event
        self.on_charge = on_charge

    # -- hooks -------------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> None:
        if self.on_event is not None:
            self.on_event(kind, _LEDGER, payload)

    def _charge(self, kind: str) -> None:
        if self.on_charge is not None:
            self.on_charge(kind)

    # -- reads -------------------------------------------------------------

    def balance_of(self, account: Address) -> Amount:
        self._charge("ledger_read")
        return self.balances.get(account, 0)

    def allowance(self, owner: Address, spender: Address) -> Amount:
        self._charge("ledger_read")
        return self.allowances.get((owner, spender), 0)

    # -- mutations ---------------------------------------------------------

    def mint(self, to: Address, amount: Amount) -> None:
        _check_amount(amount)
        if self.total_supply + amount > MAX_AMOUNT:
            raise AmountOverflow(f"minting {amount} exceeds the amount domain")
        self._charge("ledger_write")
        self.balances[to] = self.balances.get(to, 0) + amount
        self.total_supply += amount
        self._emit("Transfer", {"from": NULL_ADDRESS, "to": to, "amount": amount})

    def transfer(self, from_: Address, to: Address, amount: Amount) -> None:
        _check_amount(amount)
        if self.balances.get(from_, 0) < amount:
            raise InsufficientBalance(
                f"{from_} holds {self.balances.get(from_, 0)}, needs {amount}"
            )
        self._charge("ledger_write")
        self.balances[from_] = self.balances.get(from_, 0) - amount
        self.balances[to] = self.balances.get(to, 0) + amount
        self._emit("Transfer", {"from": from_, "to": to, "amount": amount})

    def approve(self, owner: Address, spender: Address, amount: Amount) -> None:
        _check_amount(amount)
        if amount > MAX_AMOUNT:
            raise AmountOverflow(f"allowance {amount} exceeds the amount domain")
        self._charge("ledger_write")
        self.allowances[(owner, spender)] = amount
        self._emit("Approval", {"owner": owner, "spender": spender, "amount": amount})

    def transfer_from(
        self, spender: Address, owner: Address, to: Address, amount: Amount
    ) -> None:
        """Move ``amount`` from ``owner`` to ``to`` on behalf of ``spender``.

        Allowance is checked before balance; both checks precede any mutation.
        """
        _check_amount(amount)
        allowed = self.allowances.get((owner, spender), 0)
        if allowed < amount:
            raise InsufficientAllowance(
                f"{spender} allowed {allowed} by {owner}, needs {amount}"
            )
        if self.balances.get(owner, 0) < amount:
            raise InsufficientBalance(
                f"{owner} holds {self.balances.get(owner, 0)}, needs {amount}"
            )
        self._charge("ledger_write")
        self.allowances[(owner, spender)] = allowed - amount
        self.balances[owner] = self.balances.get(owner, 0) - amount
        self.balances[to] = self.balances.get(to, 0) + amount
        self._emit(
            "Transfer", {"from": owner, "to": to, "amount": amount, "spender": spender}
        )

    # -- snapshots ---------------------------------------------------------

    def snapshot(self) -> tuple:
        return (dict(self.balances), dict(self.allowances), self.total_supply)

    def restore(self, snap: tuple) -> None:
        balances, allowances, supply = snap
        self.balances = dict(balances)
        self.allowances = dict(allowances)
        self.total_supply = supply

    def sum_of_balances(self) -> Amount:
        # Internal read, not metered: used by conservation checks.
        return sum(self.balances.values())
