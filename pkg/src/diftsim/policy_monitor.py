"""Security checkpoints, policies, and the monitor state machine.

The monitor receives checkpoint tags, evaluates the bound policy, and on
deny queues a SecurityException, raises the interrupt-pending flag, and
mirrors its state into a four-word I/O register file through which
software observes and clears it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import BadAddress, UnknownPolicy, WidthMismatch
from .tainted import DiftValue
from .taint import Tag

REG_STATUS = 0  # bit 0 = irq pending; writing bit 0 clears irq and the queue
REG_EXC_COUNT = 1  # read-only: exception queue length
REG_TAG_IN = 2  # software-written tag word, may override input tags
REG_TAG_OUT = 3  # tag bits of the most recent denied checkpoint

_WORD_MASK = 0xFFFFFFFF
_ADDRESSES = (REG_STATUS, REG_EXC_COUNT, REG_TAG_IN, REG_TAG_OUT)


class Verdict(Enum):
    ALLOW = "allow"
    DENY = "deny"


class PolicyKind(Enum):
    DENY_IF_ANY = "deny_if_any"
    DENY_IF_MASK = "deny_if_mask"
    ALLOW_ALL = "allow_all"


@dataclass(frozen=True)
class Policy:
    name: str
    kind: PolicyKind
    mask: Tag | None = None  # meaningful for deny_if_mask only


@dataclass(frozen=True)
class SecurityException:
    checkpoint_id: str
    node_id: str
    tag_bits: int
    step: int
    policy_name: str


@dataclass
class RegisterFile:
    """Four addressable 32-bit words at addresses 0..3."""

    words: list[int] = field(default_factory=lambda: [0, 0, 0, 0])


@dataclass
class MonitorState:
    """Single-writer monitor: one simulation run mutates it at a time."""

    policies: dict[str, Policy]
    bindings: dict[str, str]  # checkpoint id -> policy name
    exceptions: list[SecurityException] = field(default_factory=list)
    irq: bool = False
    registers: RegisterFile = field(default_factory=RegisterFile)

    @classmethod
    def for_kernel(cls, kernel) -> "MonitorState":
        return cls(
            policies={p.name: p for p in kernel.policies},
            bindings={cp.id: cp.policy for cp in kernel.checkpoints},
        )


def evaluate_policy(p: Policy, t: Tag) -> Verdict:
    if p.kind is PolicyKind.ALLOW_ALL:
        return Verdict.ALLOW
    if p.kind is PolicyKind.DENY_IF_ANY:
        return Verdict.DENY if t.bits != 0 else Verdict.ALLOW
    if p.mask is None:
        raise UnknownPolicy(f"policy {p.name} has kind deny_if_mask but no mask")
    if p.mask.width != t.width:
        raise WidthMismatch(f"mask width {p.mask.width} does not match tag width {t.width}")
    return Verdict.DENY if (t.bits & p.mask.bits) != 0 else Verdict.ALLOW


def _sync_registers(state: MonitorState) -> None:
    state.registers.words[REG_STATUS] = 1 if state.irq else 0
    state.registers.words[REG_EXC_COUNT] = len(state.exceptions)


def checkpoint(
    state: MonitorState,
    checkpoint_id: str,
    node_id: str,
    v: DiftValue,
    step: int,
) -> SecurityException | None:
    """Submit a value's tag to the monitor; returns the exception on deny.

    Checkpoints never modify the observed value. On deny the exception is
    queued, irq raised, and the registers updated (REG_TAG_OUT receives
    the denying tag bits).
    """
    policy_name = state.bindings.get(checkpoint_id)
    if policy_name is None or policy_name not in state.policies:
        raise UnknownPolicy(f"checkpoint {checkpoint_id} has no registered policy")
    policy = state.policies[policy_name]
    if evaluate_policy(policy, v.tag) is Verdict.ALLOW:
        return None
    exc = SecurityException(
        checkpoint_id=checkpoint_id,
        node_id=node_id,
        tag_bits=v.tag.bits,
        step=step,
        policy_name=policy_name,
    )
    state.exceptions.append(exc)
    state.irq = True
    state.registers.words[REG_TAG_OUT] = v.tag.bits & _WORD_MASK
    _sync_registers(state)
    return exc


def reg_read(state: MonitorState, addr: int) -> int:
    if addr not in _ADDRESSES:
        raise BadAddress(f"no register at address {addr}")
    return state.registers.words[addr]


def reg_write(state: MonitorState, addr: int, word: int) -> None:
    """Write a register. REG_STATUS with bit 0 set clears irq and empties
    the queue; REG_TAG_IN stores the word; the other two are read-only."""
    if addr not in _ADDRESSES:
        raise BadAddress(f"no register at address {addr}")
    word &= _WORD_MASK
    if addr == REG_STATUS:
        if word & 1:
            state.exceptions.clear()
            state.irq = False
            _sync_registers(state)
    elif addr == REG_TAG_IN:
        state.registers.words[REG_TAG_IN] = word
    # REG_EXC_COUNT and REG_TAG_OUT are monitor-owned; writes are ignored.


def drain_exceptions(state: MonitorState) -> list[SecurityException]:
    """Return and remove all queued exceptions in arrival order; clears irq."""
    drained = list(state.exceptions)
    state.exceptions.clear()
    state.irq = False
    _sync_registers(state)
    return drained
