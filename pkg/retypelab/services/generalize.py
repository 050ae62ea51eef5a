# retypelab/services/generalize.py - Operand/mnemonic generalization, sequence macros and discriminator features
import itertools
import logging
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from retypelab.schemas.asm import (
    BITS_SIZE_PTR,
    CALLEE_SAVED,
    MOV_CLASS,
    Instruction,
    Operand,
    OperandKind,
    Register,
    render_memory_terms,
    render_operand,
)
from retypelab.schemas.patterns import (
    MOV_CLASS_TOKEN,
    Discriminator,
    GeneralizedInstruction,
    GeneralizedPattern,
    MacroElement,
    MacroName,
    PatternKind,
    PatternSet,
    Placeholder,
    PostCallChunk,
    RetChunk,
    SequenceMacro,
)

logger = logging.getLogger(__name__)

LIT = Placeholder.LIT.value
REG = Placeholder.REG.value

# Mnemonics whose first operand is written without being read
_PURE_WRITES = MOV_CLASS | {"lea", "pop", "xor"}
_NON_WRITES = frozenset({"cmp", "test", "push"})
_FP_LOADS = frozenset({"fld", "fild"})
_FP_STORES = frozenset({"fstp", "fst"})
_FP_OPCODE_WIDTH = {0xD9: "dword", 0xDD: "qword"}


def _unique(items: Iterable) -> list:
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def _size_prefix(op: Operand) -> str:
    return f"{BITS_SIZE_PTR[op.size_hint]} ptr " if op.size_hint else ""


def operand_forms(op: Operand) -> Tuple[List[str], str]:
    """Per-component alternatives (most concrete first) and the whole-operand collapse."""
    if op.kind == OperandKind.REG:
        return [op.register.value, REG], op.register.family.value
    if op.kind == OperandKind.IMM:
        return [LIT], LIT
    if op.kind == OperandKind.ABS_ADDR:
        return [Placeholder.ADDR.value], Placeholder.ADDR.value
    if op.kind == OperandKind.DEREF_ADDR:
        text = _size_prefix(op) + Placeholder.DEREF.value
        return [text], text
    if op.kind in (OperandKind.JUMP_OFFSET, OperandKind.CALL_TARGET):
        return [Placeholder.OFF.value], Placeholder.OFF.value

    size = _size_prefix(op)
    index_choices: List[Optional[str]] = [op.index.value, REG] if op.index is not None else [None]
    components = []
    for index in index_choices:
        terms = render_memory_terms(
            op,
            index=index,
            scale=LIT if op.index is not None else None,
            disp=LIT if op.disp is not None else None,
        )
        components.append(f"{size}[{terms}]")
    collapse = size + (f"[{REG}]" if op.registers else Placeholder.MEM.value)
    return components, collapse


def generalize_instruction(instr: Instruction) -> List[GeneralizedInstruction]:
    """
    Every form of the generalization lattice for one instruction, in a fixed order.

    Concrete-mnemonic forms come first (component combinations, then the collapsed
    form), then the mov-class forms. The fully concrete form is only kept for
    instructions without operands, or under the mov-class mnemonic.
    """
    concrete = tuple(render_operand(op) for op in instr.operands)
    size_tag = next((BITS_SIZE_PTR[op.size_hint] for op in instr.operands if op.size_hint), None)
    if not instr.operands:
        return [GeneralizedInstruction(mnemonic=instr.mnemonic)]

    forms = [operand_forms(op) for op in instr.operands]
    operand_sets = list(itertools.product(*(components for components, _ in forms)))
    operand_sets.append(tuple(collapse for _, collapse in forms))
    operand_sets = [ops for ops in _unique(operand_sets) if ops != concrete]

    out = [GeneralizedInstruction(mnemonic=instr.mnemonic, operands=ops, size_tag=size_tag) for ops in operand_sets]
    if instr.mnemonic in MOV_CLASS:
        out.append(GeneralizedInstruction(mnemonic=MOV_CLASS_TOKEN, operands=concrete, size_tag=size_tag))
        out.extend(
            GeneralizedInstruction(mnemonic=MOV_CLASS_TOKEN, operands=ops, size_tag=size_tag)
            for ops in operand_sets
        )
    return _unique(out)


def _match_callee_epilogue(seq: Sequence[Instruction], i: int) -> int:
    j = i
    while j < len(seq) and seq[j].mnemonic == "pop" and seq[j].operands[0].kind == OperandKind.REG \
            and seq[j].operands[0].register.value in CALLEE_SAVED:
        j += 1
    if j < len(seq) and seq[j].mnemonic == "mov" and seq[j].operands[0].is_register("esp") \
            and seq[j].operands[1].is_register("ebp"):
        j += 1
    if j < len(seq) and seq[j].mnemonic == "pop" and seq[j].operands[0].is_register("ebp"):
        j += 1
    if j < len(seq) and seq[j].is_return:
        return j + 1 - i
    return 0


def _is_stack_adjust(instr: Instruction) -> bool:
    return instr.mnemonic == "add" and instr.operands[0].is_register("esp") \
        and instr.operands[1].kind == OperandKind.IMM


def _match_caller_epilogue(seq: Sequence[Instruction], i: int) -> int:
    if not seq[i].is_call:
        return 0
    if i + 1 < len(seq) and _is_stack_adjust(seq[i + 1]):
        return 2
    return 1


def _is_plain_mov(instr: Instruction) -> bool:
    return instr.mnemonic == "mov" and len(instr.operands) == 2


def _match_mov_chain(seq: Sequence[Instruction], i: int) -> Tuple[int, Tuple[Operand, ...]]:
    if not _is_plain_mov(seq[i]):
        return 0, ()
    j = i
    while j + 1 < len(seq) and _is_plain_mov(seq[j + 1]) and seq[j + 1].source == seq[j].destination:
        j += 1
    length = j + 1 - i
    if length < 2:
        return 0, ()
    args = tuple(seq[k].destination for k in range(j, i - 1, -1)) + (seq[i].source,)
    return length, args


def _match_bool_cast(seq: Sequence[Instruction], i: int) -> Tuple[int, Tuple[Operand, ...]]:
    if i + 3 >= len(seq) or not seq[i].is_conditional_jump:
        return 0, ()
    set_one, jump, set_zero = seq[i + 1], seq[i + 2], seq[i + 3]
    if not (_is_plain_mov(set_one) and _is_plain_mov(set_zero) and jump.is_unconditional_jump):
        return 0, ()
    if set_one.destination != set_zero.destination:
        return 0, ()
    if set_one.source != Operand.imm(1) or set_zero.source != Operand.imm(0):
        return 0, ()
    return 4, (set_one.destination,)


def _macro_at(seq: Sequence[Instruction], i: int) -> Optional[SequenceMacro]:
    """Longest macro starting at i; earlier names win ties."""
    candidates = [
        (MacroName.CALLEE_EPILOGUE, _match_callee_epilogue(seq, i), ()),
        (MacroName.CALLER_EPILOGUE, _match_caller_epilogue(seq, i), ()),
        (MacroName.BOOL_CAST, *_match_bool_cast(seq, i)),
        (MacroName.MOV_CHAIN, *_match_mov_chain(seq, i)),
    ]
    best = None
    for name, length, args in candidates:
        if length and (best is None or length > best[1]):
            best = (name, length, args)
    if best is None:
        return None
    return SequenceMacro(name=best[0], span=(i, i + best[1]), args=best[2])


def match_sequence_macros(seq: Sequence[Instruction]) -> List[SequenceMacro]:
    """Greedy left-to-right longest-match macro spans; spans never overlap."""
    macros = []
    i = 0
    while i < len(seq):
        macro = _macro_at(seq, i)
        if macro is None:
            i += 1
            continue
        macros.append(macro)
        i = macro.span[1]
    return macros


Segment = Union[Instruction, SequenceMacro]


def segment_sequence(seq: Sequence[Instruction]) -> List[Segment]:
    """Instructions with every macro span replaced by its macro."""
    segments: List[Segment] = []
    macros = {m.span[0]: m for m in match_sequence_macros(seq)}
    i = 0
    while i < len(seq):
        if i in macros:
            segments.append(macros[i])
            i = macros[i].span[1]
        else:
            segments.append(seq[i])
            i += 1
    return segments


def _segment_alternatives(segment: Segment) -> list:
    if isinstance(segment, Instruction):
        return generalize_instruction(segment)
    if not segment.args:
        return [MacroElement(name=segment.name)]
    args = tuple(operand_forms(a)[0][0] for a in segment.args)
    return [MacroElement(name=segment.name, args=args), MacroElement(name=segment.name)]


def _expand(kind: PatternKind, groups: List[list], head: list, tail: list, budget: int,
            patterns: List[GeneralizedPattern]) -> bool:
    """Append head + combo + tail patterns until the budget; True when something was cut."""
    for combo in itertools.product(*groups):
        if len(patterns) >= budget:
            return True
        patterns.append(GeneralizedPattern(kind=kind, elements=tuple(head) + combo + tuple(tail)))
    return False


def generalize_ret_chunk(chunk: RetChunk, budget: int = 64) -> PatternSet:
    segments = segment_sequence(chunk.sequence)
    # a lone return always matches, so the last segment is the callee epilogue
    segments.pop()
    tail_elements = [MacroElement(name=MacroName.CALLEE_EPILOGUE)]

    patterns = [GeneralizedPattern(kind=PatternKind.RET, elements=tuple(tail_elements))]
    alternatives = [_segment_alternatives(s) for s in segments]
    truncated = False
    for k in range(1, len(segments) + 1):
        if _expand(PatternKind.RET, alternatives[-k:], [], tail_elements, budget, patterns):
            truncated = True
            break
    return PatternSet(patterns=tuple(patterns), truncated=truncated)


def generalize_post_chunk(chunk: PostCallChunk, budget: int = 64) -> PatternSet:
    head = [MacroElement(name=MacroName.CALLER_EPILOGUE)]
    if chunk.next_instruction is None:
        return PatternSet(patterns=(GeneralizedPattern(kind=PatternKind.POST, elements=tuple(head)),))
    patterns: List[GeneralizedPattern] = []
    truncated = _expand(PatternKind.POST, [generalize_instruction(chunk.next_instruction)], head, [], budget, patterns)
    return PatternSet(patterns=tuple(patterns), truncated=truncated)


def generalize_chunk(chunk: Union[RetChunk, PostCallChunk], budget: int = 64) -> PatternSet:
    """Macro-segmented, per-instruction generalized patterns of a chunk, shortest first."""
    if isinstance(chunk, RetChunk):
        return generalize_ret_chunk(chunk, budget)
    return generalize_post_chunk(chunk, budget)


def _in_family(op: Optional[Operand], family: Register) -> bool:
    return op is not None and op.kind == OperandKind.REG and op.register.family == family


def _fp_width(instr: Instruction) -> Optional[str]:
    if instr.opcode_bytes and instr.opcode_bytes[0] in _FP_OPCODE_WIDTH:
        return _FP_OPCODE_WIDTH[instr.opcode_bytes[0]]
    for op in instr.operands:
        if op.size_hint in (32, 64):
            return BITS_SIZE_PTR[op.size_hint]
    return None


def _is_struct_return(instr: Instruction) -> bool:
    if instr.mnemonic != "mov" or not instr.destination.is_register("eax"):
        return False
    src = instr.source
    return (
        src.kind == OperandKind.MEM
        and src.base == Register.EBP
        and src.index is None
        and src.disp in ("arg_0", 8)
    )


def _ret_discriminators(chunk: RetChunk) -> List[Discriminator]:
    body = chunk.instructions
    found: List[Discriminator] = []

    last_accumulator_write = None
    for instr in body:
        if instr.mnemonic not in _NON_WRITES and _in_family(instr.destination, Register.EAX):
            last_accumulator_write = instr
    if last_accumulator_write is not None and last_accumulator_write.mnemonic == "mov" \
            and last_accumulator_write.source.kind == OperandKind.IMM:
        literal = last_accumulator_write.source.value
        found.append(Discriminator(name="literal_class", value="bool_like" if literal in (0, 1) else "other"))

    if any(instr.mnemonic in ("div", "idiv") for instr in body):
        found.append(Discriminator(name="div_present"))
    if any(instr.mnemonic == "lea" and _in_family(instr.destination, Register.EAX) for instr in body):
        found.append(Discriminator(name="lea_into_eax"))

    fp_loads = [instr for instr in body if instr.mnemonic in _FP_LOADS]
    if fp_loads:
        width = _fp_width(fp_loads[-1])
        if width is not None:
            found.append(Discriminator(name="fp_width", value=width))

    if any(_is_struct_return(instr) for instr in body):
        found.append(Discriminator(name="struct_return_shape"))
    if any(instr.mnemonic not in _NON_WRITES and _in_family(instr.destination, Register.EDX) for instr in body):
        found.append(Discriminator(name="edx_written"))
    return found


def _uses_result(instr: Instruction) -> bool:
    if instr.mnemonic in ("cwde", "cbw", "cdq") or instr.mnemonic in _FP_STORES:
        return True
    for position, op in enumerate(instr.operands):
        if op.kind == OperandKind.MEM and any(r.family == Register.EAX for r in op.registers):
            return True
        if op.kind == OperandKind.REG and op.register.family in (Register.EAX, Register.EDX):
            if position > 0 or instr.mnemonic not in _PURE_WRITES:
                return True
    return False


def post_destination_class(instr: Optional[Instruction]) -> str:
    """Where the returned value goes right after the call: register, memory or unused."""
    if instr is None or not _uses_result(instr):
        return "unused"
    if instr.mnemonic == "push":
        return "memory"
    if instr.mnemonic in _FP_STORES or instr.mnemonic in MOV_CLASS:
        dest = instr.destination
        return "memory" if dest.kind in (OperandKind.MEM, OperandKind.DEREF_ADDR) else "register"
    return "register"


def _post_discriminators(chunk: PostCallChunk) -> List[Discriminator]:
    instr = chunk.next_instruction
    found: List[Discriminator] = []
    if instr is not None and instr.mnemonic in ("movzx", "movsx") and _in_family(instr.source, Register.EAX):
        found.append(Discriminator(name="widen", value="zero" if instr.mnemonic == "movzx" else "sign"))
    found.append(Discriminator(name="dest_class", value=post_destination_class(instr)))
    if instr is not None and instr.mnemonic in _FP_STORES:
        width = _fp_width(instr)
        if width is not None:
            found.append(Discriminator(name="fp_width", value=width))
    return found


def advanced_features(chunk: Union[RetChunk, PostCallChunk]) -> List[GeneralizedPattern]:
    """Single-element discriminator patterns for the size-sharing types."""
    if isinstance(chunk, RetChunk):
        kind, found = PatternKind.RET, _ret_discriminators(chunk)
    else:
        kind, found = PatternKind.POST, _post_discriminators(chunk)
    return [GeneralizedPattern(kind=kind, elements=(d,)) for d in found]
