"""Bit-accurate integers with declared width, signedness, and wrap-around.

Values carry their type and are stored as canonical unsigned bit patterns;
signed numbers use two's complement. Every operation computes the exact
integer result and wraps it into an explicitly declared result type, the
way fixed-width hardware datapaths behave. Values are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, unique

from .errors import DivisionByZero, InvalidType, TypeMismatch

MAX_WIDTH = 64


@unique
class OpKind(Enum):
    """Closed operator set of the dataflow IR; parsers reject anything else."""

    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    MOD = "mod"
    AND = "and"
    OR = "or"
    XOR = "xor"
    SHL = "shl"
    SHR = "shr"
    EQ = "eq"
    NE = "ne"
    LT = "lt"
    LE = "le"
    GT = "gt"
    GE = "ge"
    NOT = "not"
    NEG = "neg"
    MUX = "mux"
    LOAD = "load"
    STORE = "store"


COMPARE_OPS = frozenset(
    {OpKind.EQ, OpKind.NE, OpKind.LT, OpKind.LE, OpKind.GT, OpKind.GE}
)
BINARY_OPS = (
    frozenset(
        {
            OpKind.ADD,
            OpKind.SUB,
            OpKind.MUL,
            OpKind.DIV,
            OpKind.MOD,
            OpKind.AND,
            OpKind.OR,
            OpKind.XOR,
            OpKind.SHL,
            OpKind.SHR,
        }
    )
    | COMPARE_OPS
)
UNARY_OPS = frozenset({OpKind.NOT, OpKind.NEG})
VALUE_OPS = BINARY_OPS | UNARY_OPS | {OpKind.MUX}


def op_arity(kind: OpKind) -> int:
    if kind in UNARY_OPS:
        return 1
    if kind in BINARY_OPS or kind is OpKind.LOAD:
        return 2
    return 3  # mux and store


@dataclass(frozen=True)
class BitType:
    """Declared width and signedness of a wire or storage cell."""

    width: int
    signed: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.width, int) or not 1 <= self.width <= MAX_WIDTH:
            raise InvalidType(f"width must be in 1..{MAX_WIDTH}, got {self.width!r}")

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    def __str__(self) -> str:
        return f"{'s' if self.signed else 'u'}{self.width}"


@dataclass(frozen=True)
class BitValue:
    """A canonical bit pattern of a BitType; bits is always in [0, 2^width)."""

    ty: BitType
    bits: int

    def __post_init__(self) -> None:
        if not isinstance(self.bits, int) or not 0 <= self.bits <= self.ty.mask:
            raise InvalidType(f"bits {self.bits!r} not canonical for {self.ty}")

    def __str__(self) -> str:
        return f"{to_int(self)}:{self.ty}"


def make_bitvalue(ty: BitType, raw: int) -> BitValue:
    """Wrap an unbounded integer into ty; result bits = raw mod 2^width."""
    return BitValue(ty, raw & ty.mask)


def to_int(v: BitValue) -> int:
    """Numeric value: the raw bits, two's-complement decoded for signed types."""
    if v.ty.signed and v.bits >> (v.ty.width - 1):
        return v.bits - (1 << v.ty.width)
    return v.bits


def eval_binop(kind: OpKind, a: BitValue, b: BitValue, result_ty: BitType) -> BitValue:
    """Apply a binary operator and wrap the exact result into result_ty.

    div truncates toward zero and mod follows the dividend's sign. The
    shift amount is the unsigned value of b reduced modulo the result
    width; shr is arithmetic when a is signed, logical otherwise.
    Comparisons demand an unsigned 1-bit result type and yield 0 or 1.
    """
    if kind not in BINARY_OPS:
        raise TypeMismatch(f"{kind.value} is not a binary value operator")
    ia = to_int(a)
    ib = to_int(b)
    if kind in COMPARE_OPS:
        if result_ty.width != 1 or result_ty.signed:
            raise TypeMismatch(f"comparison result must be u1, got {result_ty}")
        if kind is OpKind.EQ:
            r = ia == ib
        elif kind is OpKind.NE:
            r = ia != ib
        elif kind is OpKind.LT:
            r = ia < ib
        elif kind is OpKind.LE:
            r = ia <= ib
        elif kind is OpKind.GT:
            r = ia > ib
        else:
            r = ia >= ib
        return make_bitvalue(result_ty, int(r))
    if kind is OpKind.ADD:
        r = ia + ib
    elif kind is OpKind.SUB:
        r = ia - ib
    elif kind is OpKind.MUL:
        r = ia * ib
    elif kind is OpKind.DIV:
        if ib == 0:
            raise DivisionByZero("division by zero")
        r = abs(ia) // abs(ib)
        if (ia < 0) != (ib < 0):
            r = -r
    elif kind is OpKind.MOD:
        if ib == 0:
            raise DivisionByZero("modulo by zero")
        q = abs(ia) // abs(ib)
        if (ia < 0) != (ib < 0):
            q = -q
        r = ia - ib * q
    elif kind is OpKind.AND:
        r = ia & ib
    elif kind is OpKind.OR:
        r = ia | ib
    elif kind is OpKind.XOR:
        r = ia ^ ib
    elif kind is OpKind.SHL:
        r = ia << (b.bits % result_ty.width)
    else:  # SHR
        r = ia >> (b.bits % result_ty.width)
    return make_bitvalue(result_ty, r)


def eval_unop(kind: OpKind, a: BitValue, result_ty: BitType) -> BitValue:
    """not complements the bits within a's own width; neg negates the value."""
    if kind is OpKind.NOT:
        return make_bitvalue(result_ty, ~a.bits & a.ty.mask)
    if kind is OpKind.NEG:
        return make_bitvalue(result_ty, -to_int(a))
    raise TypeMismatch(f"{kind.value} is not a unary value operator")
