# retypelab/schemas/asm.py - Instruction and operand model for 32-bit x86 (Intel syntax)
from enum import Enum
from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class Register(str, Enum):
    """General purpose, x87 and SSE registers."""
    EAX = "eax"
    EBX = "ebx"
    ECX = "ecx"
    EDX = "edx"
    ESI = "esi"
    EDI = "edi"
    EBP = "ebp"
    ESP = "esp"
    AX = "ax"
    BX = "bx"
    CX = "cx"
    DX = "dx"
    SI = "si"
    DI = "di"
    BP = "bp"
    SP = "sp"
    AL = "al"
    AH = "ah"
    BL = "bl"
    BH = "bh"
    CL = "cl"
    CH = "ch"
    DL = "dl"
    DH = "dh"
    ST0 = "st0"
    ST1 = "st1"
    ST2 = "st2"
    ST3 = "st3"
    ST4 = "st4"
    ST5 = "st5"
    ST6 = "st6"
    ST7 = "st7"
    XMM0 = "xmm0"
    XMM1 = "xmm1"
    XMM2 = "xmm2"
    XMM3 = "xmm3"
    XMM4 = "xmm4"
    XMM5 = "xmm5"
    XMM6 = "xmm6"
    XMM7 = "xmm7"

    @property
    def width(self) -> int:
        return register_width(self.value)

    @property
    def family(self) -> "Register":
        """The 32-bit register this one is a part of (itself for st/xmm)."""
        return Register(_FAMILY.get(self.value, self.value))


_GPR32 = ("eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp")
_GPR16 = ("ax", "bx", "cx", "dx", "si", "di", "bp", "sp")
_GPR8 = ("al", "ah", "bl", "bh", "cl", "ch", "dl", "dh")

_FAMILY = {
    "ax": "eax", "al": "eax", "ah": "eax",
    "bx": "ebx", "bl": "ebx", "bh": "ebx",
    "cx": "ecx", "cl": "ecx", "ch": "ecx",
    "dx": "edx", "dl": "edx", "dh": "edx",
    "si": "esi", "di": "edi", "bp": "ebp", "sp": "esp",
}

# Registers that carry a function result under cdecl
ACCUMULATOR = frozenset({"eax", "ax", "al"})
CALLEE_SAVED = frozenset({"ebx", "esi", "edi", "ebp"})


def register_width(name: str) -> int:
    if name in _GPR32:
        return 32
    if name in _GPR16:
        return 16
    if name in _GPR8:
        return 8
    if name.startswith("st"):
        return 80
    if name.startswith("xmm"):
        return 128
    raise ValueError(f"Unknown register {name}")


REGISTER_NAMES = frozenset(r.value for r in Register)

SIZE_PTR_BITS = {"byte": 8, "word": 16, "dword": 32, "qword": 64}
BITS_SIZE_PTR = {bits: name for name, bits in SIZE_PTR_BITS.items()}

CONDITIONAL_JUMPS = frozenset({
    "ja", "jae", "jb", "jbe", "jc", "je", "jz", "jne", "jnz", "jg", "jge", "jl", "jle",
    "jna", "jnae", "jnb", "jnbe", "jnc", "jng", "jnge", "jnl", "jnle", "jno", "jnp",
    "jns", "jo", "jp", "jpe", "jpo", "js", "jecxz",
})
JUMP_MNEMONICS = CONDITIONAL_JUMPS | {"jmp", "loop", "loope", "loopne"}
RETURN_MNEMONICS = frozenset({"retn", "ret"})
MOV_CLASS = frozenset({"mov", "movzx", "movsx"})

_SETCC = ("seta", "setae", "setb", "setbe", "sete", "setne", "setz", "setnz",
          "setg", "setge", "setl", "setle", "setc", "setnc", "sets", "setns")

_ONE = frozenset({1})
_TWO = frozenset({2})
_NONE = frozenset({0})

MNEMONIC_ARITY = {
    "mov": _TWO, "movzx": _TWO, "movsx": _TWO, "movsd": _TWO, "movss": _TWO,
    "movd": _TWO, "movq": _TWO, "lea": _TWO, "xchg": _TWO,
    "add": _TWO, "sub": _TWO, "adc": _TWO, "sbb": _TWO, "and": _TWO, "or": _TWO,
    "xor": _TWO, "cmp": _TWO, "test": _TWO, "shl": _TWO, "shr": _TWO, "sar": _TWO,
    "sal": _TWO, "rol": _TWO, "ror": _TWO,
    "imul": frozenset({1, 2, 3}), "mul": _ONE, "div": _ONE, "idiv": _ONE,
    "inc": _ONE, "dec": _ONE, "neg": _ONE, "not": _ONE,
    "push": _ONE, "pop": _ONE, "call": _ONE,
    "retn": frozenset({0, 1}), "ret": frozenset({0, 1}),
    "cwde": _NONE, "cdq": _NONE, "cbw": _NONE, "cwd": _NONE, "leave": _NONE,
    "nop": _NONE, "fldz": _NONE, "fld1": _NONE, "fchs": _NONE, "fabs": _NONE,
    "fld": _ONE, "fst": _ONE, "fstp": _ONE, "fild": _ONE, "fistp": _ONE,
    "fadd": frozenset({0, 1, 2}), "fsub": frozenset({0, 1, 2}),
    "fmul": frozenset({0, 1, 2}), "fdiv": frozenset({0, 1, 2}),
    "faddp": frozenset({0, 2}), "fmulp": frozenset({0, 2}),
    "cvtsi2sd": _TWO, "cvtsd2ss": _TWO, "cvtss2sd": _TWO, "cvttsd2si": _TWO,
    "addsd": _TWO, "mulsd": _TWO, "subsd": _TWO, "divsd": _TWO,
}
MNEMONIC_ARITY.update({m: _ONE for m in JUMP_MNEMONICS})
MNEMONIC_ARITY.update({m: _ONE for m in _SETCC})

KNOWN_MNEMONICS = frozenset(MNEMONIC_ARITY)

_INT64_MIN = -(2 ** 63)
_INT64_MAX = 2 ** 63 - 1


class OperandKind(str, Enum):
    REG = "reg"
    IMM = "imm"
    MEM = "mem"
    ABS_ADDR = "abs_addr"
    DEREF_ADDR = "deref_addr"
    JUMP_OFFSET = "jump_offset"
    CALL_TARGET = "call_target"


class Operand(BaseModel):
    """A single typed operand. Which fields are set depends on ``kind``."""
    model_config = ConfigDict(frozen=True)

    kind: OperandKind
    register: Optional[Register] = None
    value: Optional[int] = None
    base: Optional[Register] = None
    index: Optional[Register] = None
    scale: Optional[int] = None
    disp: Optional[Union[int, str]] = None
    symbol: Optional[str] = None
    segment: Optional[str] = None
    size_hint: Optional[int] = None

    @field_validator("size_hint")
    @classmethod
    def validate_size_hint(cls, v):
        if v is not None and v not in BITS_SIZE_PTR:
            raise ValueError(f"size hint must be one of {sorted(BITS_SIZE_PTR)}, got {v}")
        return v

    @model_validator(mode="after")
    def validate_shape(self):
        kind = self.kind
        if kind == OperandKind.REG and self.register is None:
            raise ValueError("register operand needs a register")
        if kind == OperandKind.IMM:
            if self.value is None:
                raise ValueError("immediate operand needs a value")
            if not _INT64_MIN <= self.value <= _INT64_MAX:
                raise ValueError(f"immediate {self.value} outside signed 64-bit range")
        if kind == OperandKind.MEM:
            if self.base is None and self.index is None and self.disp is None:
                raise ValueError("memory operand needs a base, an index or a displacement")
            if self.scale is not None and self.index is None:
                raise ValueError("scale given without an index register")
            if self.index is not None and self.scale not in (1, 2, 4, 8):
                raise ValueError(f"scale must be 1, 2, 4 or 8, got {self.scale}")
        if kind in (OperandKind.ABS_ADDR, OperandKind.DEREF_ADDR,
                    OperandKind.JUMP_OFFSET, OperandKind.CALL_TARGET) and not self.symbol:
            raise ValueError(f"{kind.value} operand needs a symbol")
        return self

    @classmethod
    def reg(cls, name: Union[str, Register]) -> "Operand":
        return cls(kind=OperandKind.REG, register=Register(name))

    @classmethod
    def imm(cls, value: int) -> "Operand":
        return cls(kind=OperandKind.IMM, value=value)

    @classmethod
    def mem(cls, base=None, index=None, scale=None, disp=None, size_hint=None) -> "Operand":
        if index is not None and scale is None:
            scale = 1
        return cls(
            kind=OperandKind.MEM,
            base=Register(base) if base else None,
            index=Register(index) if index else None,
            scale=scale,
            disp=disp,
            size_hint=size_hint,
        )

    @classmethod
    def abs_addr(cls, symbol: str) -> "Operand":
        return cls(kind=OperandKind.ABS_ADDR, symbol=symbol)

    @classmethod
    def deref_addr(cls, symbol: str, segment: Optional[str] = None, size_hint=None) -> "Operand":
        return cls(kind=OperandKind.DEREF_ADDR, symbol=symbol, segment=segment, size_hint=size_hint)

    @classmethod
    def jump_offset(cls, symbol: str) -> "Operand":
        return cls(kind=OperandKind.JUMP_OFFSET, symbol=symbol)

    @classmethod
    def call_target(cls, symbol: str) -> "Operand":
        return cls(kind=OperandKind.CALL_TARGET, symbol=symbol)

    @property
    def registers(self) -> Tuple[Register, ...]:
        if self.kind == OperandKind.REG:
            return (self.register,)
        if self.kind == OperandKind.MEM:
            return tuple(r for r in (self.base, self.index) if r is not None)
        return ()

    def is_register(self, *names: str) -> bool:
        return self.kind == OperandKind.REG and self.register.value in names


def render_operand(op: Operand) -> str:
    prefix = f"{BITS_SIZE_PTR[op.size_hint]} ptr " if op.size_hint else ""
    if op.kind == OperandKind.REG:
        return op.register.value
    if op.kind == OperandKind.IMM:
        return str(op.value)
    if op.kind == OperandKind.MEM:
        return prefix + "[" + render_memory_terms(op) + "]"
    if op.kind == OperandKind.ABS_ADDR:
        return f"offset {op.symbol}"
    if op.kind == OperandKind.DEREF_ADDR:
        segment = f"{op.segment}:" if op.segment else ""
        return f"{prefix}{segment}{op.symbol}"
    return op.symbol


def render_memory_terms(op: Operand, base=None, index=None, scale=None, disp=None) -> str:
    """Render the inside of a memory operand; keyword overrides substitute text per component."""
    text = base if base is not None else (op.base.value if op.base else "")
    if op.index is not None:
        idx = index if index is not None else op.index.value
        shown_scale = scale if scale is not None else str(op.scale)
        term = idx if (op.scale == 1 and op.base is not None and scale is None) else f"{idx}*{shown_scale}"
        text = f"{text}+{term}" if text else term
    if op.disp is not None:
        if disp is not None:
            text = f"{text}+{disp}" if text else disp
        elif isinstance(op.disp, int):
            if not text:
                text = str(op.disp)
            elif op.disp < 0:
                text = f"{text}-{-op.disp}"
            else:
                text = f"{text}+{op.disp}"
        else:
            text = f"{text}+{op.disp}" if text else op.disp
    return text


class Instruction(BaseModel):
    """One decoded listing line."""
    model_config = ConfigDict(frozen=True)

    mnemonic: str
    operands: Tuple[Operand, ...] = ()
    label: Optional[str] = None
    opcode_bytes: Optional[Tuple[int, ...]] = None

    @field_validator("mnemonic")
    @classmethod
    def validate_mnemonic(cls, v):
        if not v or not v.strip():
            raise ValueError("mnemonic must not be empty")
        if v != v.lower() or " " in v:
            raise ValueError(f"mnemonic must be a single lowercase token, got {v!r}")
        return v

    @field_validator("opcode_bytes")
    @classmethod
    def validate_opcode_bytes(cls, v):
        if v is not None and any(not 0 <= b <= 0xFF for b in v):
            raise ValueError("opcode bytes must be in 0..255")
        return v

    @model_validator(mode="after")
    def validate_arity(self):
        if len(self.operands) > 3:
            raise ValueError(f"{self.mnemonic} has {len(self.operands)} operands, at most 3 allowed")
        allowed = MNEMONIC_ARITY.get(self.mnemonic)
        if allowed is not None and len(self.operands) not in allowed:
            raise ValueError(
                f"{self.mnemonic} takes {'/'.join(str(n) for n in sorted(allowed))} operand(s), "
                f"got {len(self.operands)}"
            )
        return self

    @property
    def is_return(self) -> bool:
        return self.mnemonic in RETURN_MNEMONICS

    @property
    def is_call(self) -> bool:
        return self.mnemonic == "call"

    @property
    def is_unconditional_jump(self) -> bool:
        return self.mnemonic == "jmp"

    @property
    def is_conditional_jump(self) -> bool:
        return self.mnemonic in CONDITIONAL_JUMPS

    @property
    def call_target(self) -> Optional[str]:
        if self.is_call and self.operands and self.operands[0].kind == OperandKind.CALL_TARGET:
            return self.operands[0].symbol
        return None

    @property
    def destination(self) -> Optional[Operand]:
        return self.operands[0] if self.operands else None

    @property
    def source(self) -> Optional[Operand]:
        return self.operands[1] if len(self.operands) > 1 else None


class TypeLabel(str, Enum):
    """High-level return types. Members are declared in canonical (alphabetical) order."""
    BOOL = "bool"
    CHAR = "char"
    DOUBLE = "double"
    FLOAT = "float"
    INT = "int"
    LONG_LONG = "long_long"
    POINTER = "pointer"
    SHORT = "short"
    STRUCT = "struct"
    VOID = "void"


class SizeRepLabel(str, Enum):
    """Return types grouped by size and representation."""
    INT_1 = "INT_1"
    INT_2 = "INT_2"
    INT_4 = "INT_4"
    INT_8 = "INT_8"
    REAL_4 = "REAL_4"
    REAL_8 = "REAL_8"
    VOID = "VOID"


_SIZEREP = {
    TypeLabel.BOOL: SizeRepLabel.INT_1,
    TypeLabel.CHAR: SizeRepLabel.INT_1,
    TypeLabel.SHORT: SizeRepLabel.INT_2,
    TypeLabel.INT: SizeRepLabel.INT_4,
    TypeLabel.POINTER: SizeRepLabel.INT_4,
    TypeLabel.STRUCT: SizeRepLabel.INT_4,
    TypeLabel.LONG_LONG: SizeRepLabel.INT_8,
    TypeLabel.FLOAT: SizeRepLabel.REAL_4,
    TypeLabel.DOUBLE: SizeRepLabel.REAL_8,
    TypeLabel.VOID: SizeRepLabel.VOID,
}


def map_to_sizerep(label: TypeLabel) -> SizeRepLabel:
    return _SIZEREP[TypeLabel(label)]


class LabelScheme(str, Enum):
    HIGH_LEVEL = "high_level"
    SIZE_REP = "size_rep"

    def classes(self) -> List[str]:
        """All class names of the scheme in canonical order."""
        members = TypeLabel if self == LabelScheme.HIGH_LEVEL else SizeRepLabel
        return sorted(m.value for m in members)

    def label_for(self, label: TypeLabel) -> str:
        if self == LabelScheme.SIZE_REP:
            return map_to_sizerep(label).value
        return TypeLabel(label).value


class FunctionListing(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    instructions: Tuple[Instruction, ...] = ()
    true_return_type: Optional[TypeLabel] = None

    @property
    def is_labeled(self) -> bool:
        return self.true_return_type is not None

    @property
    def return_indices(self) -> List[int]:
        return [i for i, instr in enumerate(self.instructions) if instr.is_return]

    @property
    def call_sites_in_body(self) -> List[Tuple[int, str]]:
        return [
            (i, instr.call_target)
            for i, instr in enumerate(self.instructions)
            if instr.call_target is not None
        ]
