# retypelab/schemas/patterns.py - Chunks cut from listings and the generalized patterns built from them
import re
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from retypelab.schemas.asm import (
    BITS_SIZE_PTR,
    MOV_CLASS,
    REGISTER_NAMES,
    Instruction,
    Operand,
    OperandKind,
    TypeLabel,
    render_memory_terms,
    render_operand,
)

MOV_CLASS_TOKEN = "{mov}"
ELEMENT_SEPARATOR = " | "


class Placeholder(str, Enum):
    LIT = "<lit>"
    REG = "<reg>"
    ADDR = "<addr>"
    DEREF = "<*addr>"
    OFF = "<off>"
    MEM = "<mem>"


class PatternKind(str, Enum):
    RET = "RET"
    POST = "POST"


class MacroName(str, Enum):
    CALLEE_EPILOGUE = "callee_epilogue"
    CALLER_EPILOGUE = "caller_epilogue"
    MOV_CHAIN = "mov_chain"
    BOOL_CAST = "bool_cast"


class ExtractionOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_len: int = Field(default=8, ge=1)
    pattern_budget: int = Field(default=64, ge=1)
    include_post: bool = True
    include_advanced: bool = True
    # None: anchor mode switches on when a listing carries __RETURN<n>__ labels
    anchor_mode: Optional[bool] = None


class RetChunk(BaseModel):
    """Instructions before a return, scanned backwards; the return itself is kept apart."""
    model_config = ConfigDict(frozen=True)

    function: str
    instructions: Tuple[Instruction, ...]
    retn_index: int
    terminator: Instruction

    @field_validator("instructions")
    @classmethod
    def validate_no_inner_return(cls, v):
        if any(instr.is_return for instr in v):
            raise ValueError("a RET chunk cannot contain a return instruction")
        return v

    @property
    def sequence(self) -> Tuple[Instruction, ...]:
        return self.instructions + (self.terminator,)


class PostCallChunk(BaseModel):
    model_config = ConfigDict(frozen=True)

    caller: str
    callee: str
    call_index: int
    call: Instruction
    stack_adjust: Optional[Instruction] = None
    next_instruction: Optional[Instruction] = None

    @model_validator(mode="after")
    def validate_stack_adjust(self):
        adjust = self.stack_adjust
        if adjust is not None and not (
            adjust.mnemonic == "add"
            and adjust.operands[0].is_register("esp")
            and adjust.operands[1].kind == OperandKind.IMM
        ):
            raise ValueError("stack_adjust must be `add esp, <imm>`")
        return self


class ChunkDiagnostics(BaseModel):
    no_return: List[str] = []
    unlabeled: List[str] = []
    truncated: List[str] = []


class ChunkBundle(BaseModel):
    """RET chunks per function and POST-CALL chunks per callee, in listing order."""
    function_order: List[str] = []
    labels: Dict[str, TypeLabel] = {}
    ret_chunks: Dict[str, List[RetChunk]] = {}
    post_chunks: Dict[str, List[PostCallChunk]] = {}
    anchor_mode: bool = False
    diagnostics: ChunkDiagnostics = Field(default_factory=ChunkDiagnostics)

    @model_validator(mode="after")
    def validate_attribution(self):
        for callee, chunks in self.post_chunks.items():
            for chunk in chunks:
                if chunk.callee != callee:
                    raise ValueError(f"POST-CALL chunk for {chunk.callee} filed under {callee}")
        return self


class GeneralizedInstruction(BaseModel):
    model_config = ConfigDict(frozen=True)

    mnemonic: str
    operands: Tuple[str, ...] = ()
    size_tag: Optional[str] = None

    def render(self) -> str:
        if not self.operands:
            return self.mnemonic
        return f"{self.mnemonic} {', '.join(self.operands)}"

    def matches(self, instr: Instruction) -> bool:
        """Whether this form subsumes the concrete instruction."""
        if self.mnemonic == MOV_CLASS_TOKEN:
            if instr.mnemonic not in MOV_CLASS:
                return False
        elif self.mnemonic != instr.mnemonic:
            return False
        if len(self.operands) != len(instr.operands):
            return False
        return all(operand_matches(text, op) for text, op in zip(self.operands, instr.operands))


class MacroElement(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: MacroName
    args: Optional[Tuple[str, ...]] = None

    def render(self) -> str:
        if self.args is None:
            return self.name.value
        return f"{self.name.value}({', '.join(self.args)})"


class SequenceMacro(BaseModel):
    """A matched macro occurrence over a half-open instruction span."""
    model_config = ConfigDict(frozen=True)

    name: MacroName
    span: Tuple[int, int]
    args: Tuple[Operand, ...] = ()

    @field_validator("span")
    @classmethod
    def validate_span(cls, v):
        if v[0] < 0 or v[1] <= v[0]:
            raise ValueError(f"bad macro span {v}")
        return v

    def render(self) -> str:
        """Concrete rendering, e.g. mov_chain([ebp+var_8], ebx, eax, 0)."""
        if not self.args:
            return self.name.value
        return f"{self.name.value}({', '.join(render_operand(a) for a in self.args)})"


class Discriminator(BaseModel):
    """Feature aimed at separating high-level types that share a size."""
    model_config = ConfigDict(frozen=True)

    name: str
    value: Optional[str] = None

    def render(self) -> str:
        return self.name if self.value is None else f"{self.name}({self.value})"


PatternElement = Union[GeneralizedInstruction, MacroElement, Discriminator]


class GeneralizedPattern(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PatternKind
    elements: Tuple[PatternElement, ...]

    @property
    def canonical_name(self) -> str:
        return f"{self.kind.value}: " + ELEMENT_SEPARATOR.join(e.render() for e in self.elements)


def parse_canonical_name(name: str) -> Tuple[PatternKind, List[str]]:
    """Split a feature name into its kind and rendered elements."""
    head, sep, body = name.partition(": ")
    if not sep or head not in PatternKind._value2member_map_:
        raise ValueError(f"Feature name {name!r} lacks a RET:/POST: prefix")
    elements = body.split(ELEMENT_SEPARATOR)
    if any(not e for e in elements):
        raise ValueError(f"Feature name {name!r} has an empty element")
    return PatternKind(head), elements


_LIT_RE = r"(?:-?[\w$.@?]+)"
_REG_RE = "(?:" + "|".join(sorted(REGISTER_NAMES, key=len, reverse=True)) + ")"


def _split_size(text: str) -> Tuple[str, str]:
    m = re.match(r"^((?:byte|word|dword|qword) ptr )?(.*)$", text)
    return m.group(1) or "", m.group(2)


def operand_matches(text: str, op: Operand) -> bool:
    """Placeholder or concrete operand text against a concrete operand."""
    if text == render_operand(op):
        return True
    if text in REGISTER_NAMES:
        return op.kind == OperandKind.REG and op.register.family.value == text
    if text == Placeholder.REG.value:
        return op.kind == OperandKind.REG
    if text == Placeholder.LIT.value:
        return op.kind == OperandKind.IMM
    if text == Placeholder.ADDR.value:
        return op.kind == OperandKind.ABS_ADDR
    if text == Placeholder.OFF.value:
        return op.kind in (OperandKind.JUMP_OFFSET, OperandKind.CALL_TARGET)

    size, rest = _split_size(text)
    op_size = f"{BITS_SIZE_PTR[op.size_hint]} ptr " if op.size_hint else ""
    if size != op_size:
        return False
    if rest == Placeholder.DEREF.value:
        return op.kind == OperandKind.DEREF_ADDR
    if op.kind != OperandKind.MEM:
        return False
    if rest == Placeholder.MEM.value:
        return not op.registers
    if rest == f"[{Placeholder.REG.value}]":
        return bool(op.registers)
    if not (rest.startswith("[") and rest.endswith("]")):
        return False
    pattern = re.escape(rest[1:-1])
    pattern = pattern.replace(re.escape(Placeholder.LIT.value), _LIT_RE)
    pattern = pattern.replace(re.escape(Placeholder.REG.value), _REG_RE)
    concrete = render_memory_terms(
        op,
        scale=str(op.scale) if op.index is not None else None,
        disp=str(op.disp) if op.disp is not None else None,
    )
    return re.fullmatch(pattern, concrete) is not None


class PatternSet(BaseModel):
    """Patterns generated from one chunk, shortest first."""
    model_config = ConfigDict(frozen=True)

    patterns: Tuple[GeneralizedPattern, ...] = ()
    truncated: bool = False

    @property
    def names(self) -> List[str]:
        return [p.canonical_name for p in self.patterns]
