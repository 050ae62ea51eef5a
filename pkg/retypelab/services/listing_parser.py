# retypelab/services/listing_parser.py - Listing document parser and canonical renderer
import logging
import re
from typing import Iterable, List, Optional, Tuple

from pydantic import ValidationError as SchemaError

from retypelab.core.errors import (
    DuplicateFunctionError,
    ListingSyntaxError,
    UnknownMnemonicError,
)
from retypelab.schemas.asm import (
    JUMP_MNEMONICS,
    KNOWN_MNEMONICS,
    REGISTER_NAMES,
    SIZE_PTR_BITS,
    FunctionListing,
    Instruction,
    Operand,
    OperandKind,
    TypeLabel,
    render_operand,
)

logger = logging.getLogger(__name__)

_LABEL_RE = re.compile(r"^([A-Za-z_$.@?][\w$.@?]*):(?=\s|$)")
_SYMBOL_RE = re.compile(r"^[A-Za-z_$.@?][\w$.@?]*$")
_MNEMONIC_RE = re.compile(r"^[a-z][a-z0-9.]*$")
_DEC_RE = re.compile(r"^-?\d+$")
_HEX_PREFIX_RE = re.compile(r"^(-?)0[xX]([0-9a-fA-F]+)$")
_HEX_SUFFIX_RE = re.compile(r"^(-?)([0-9][0-9a-fA-F]*)[hH]$")
_SIZEPTR_RE = re.compile(r"^(byte|word|dword|qword)\s+ptr\s+(.+)$", re.IGNORECASE)
_SCALED_RE = re.compile(r"^([a-z0-9]+)\*(\d+)$")
_FUNC_RE = re.compile(r"^\.func\s+(\S+)(?:\s+ret=(\S*))?\s*$")


def parse_integer(token: str) -> Optional[int]:
    """Decimal, 0x-prefixed or IDA-style h-suffixed integer, or None."""
    if _DEC_RE.match(token):
        return int(token)
    m = _HEX_PREFIX_RE.match(token) or _HEX_SUFFIX_RE.match(token)
    if m:
        value = int(m.group(2), 16)
        return -value if m.group(1) else value
    return None


def _split_comment(raw: str) -> Tuple[str, Optional[str]]:
    if ";" not in raw:
        return raw, None
    code, comment = raw.split(";", 1)
    return code, comment.strip()


def _parse_opcode_bytes(comment: str, line_no: int) -> Optional[Tuple[int, ...]]:
    if not comment or not comment.startswith("!bytes"):
        return None
    tokens = comment[len("!bytes"):].split()
    try:
        return tuple(int(t, 16) for t in tokens)
    except ValueError:
        raise ListingSyntaxError(f"bad opcode byte list {comment!r}", line_no)


def _parse_memory(expr: str, size_hint: Optional[int], line_no: int, column: int) -> Operand:
    inner = expr.replace(" ", "")
    if not inner:
        raise ListingSyntaxError("empty memory expression", line_no, column)
    terms = re.findall(r"[+-]?[^+-]+", inner)
    if "".join(terms) != inner:
        raise ListingSyntaxError(f"malformed memory expression [{expr}]", line_no, column)

    base = index = None
    scale = None
    disp = None
    for term in terms:
        negative = term.startswith("-")
        body = term.lstrip("+-")
        scaled = _SCALED_RE.match(body)
        if scaled and scaled.group(1) in REGISTER_NAMES:
            if negative or index is not None:
                raise ListingSyntaxError(f"bad index term {term!r}", line_no, column)
            index = scaled.group(1)
            scale = int(scaled.group(2))
            if scale not in (1, 2, 4, 8):
                raise ListingSyntaxError(f"scale must be 1, 2, 4 or 8, got {scale}", line_no, column)
        elif body in REGISTER_NAMES:
            if negative:
                raise ListingSyntaxError(f"negated register {body}", line_no, column)
            if base is None:
                base = body
            elif index is None:
                index, scale = body, 1
            else:
                raise ListingSyntaxError(f"too many registers in [{expr}]", line_no, column)
        else:
            value = parse_integer(body)
            if value is not None:
                value = -value if negative else value
                if isinstance(disp, str):
                    raise ListingSyntaxError(f"mixed displacements in [{expr}]", line_no, column)
                disp = value if disp is None else disp + value
            elif _SYMBOL_RE.match(body) and not negative:
                if disp is not None:
                    raise ListingSyntaxError(f"mixed displacements in [{expr}]", line_no, column)
                disp = body
            else:
                raise ListingSyntaxError(f"bad memory term {term!r}", line_no, column)

    # A lone scaled register keeps no base: [eax*4+var_8]
    return Operand.mem(base=base, index=index, scale=scale, disp=disp, size_hint=size_hint)


def parse_operand(text: str, mnemonic: str, line_no: int = 1, column: int = 1) -> Operand:
    token = text.strip()
    if not token:
        raise ListingSyntaxError("missing operand", line_no, column)

    size_hint = None
    m = _SIZEPTR_RE.match(token)
    if m:
        size_hint = SIZE_PTR_BITS[m.group(1).lower()]
        token = m.group(2).strip()

    lowered = token.lower()
    if lowered.startswith("offset "):
        symbol = token[len("offset "):].strip()
        if not _SYMBOL_RE.match(symbol) or size_hint is not None:
            raise ListingSyntaxError(f"bad address operand {text.strip()!r}", line_no, column)
        return Operand.abs_addr(symbol)

    if lowered.startswith("ds:"):
        symbol = token[3:].strip()
        if not _SYMBOL_RE.match(symbol):
            raise ListingSyntaxError(f"bad segment operand {text.strip()!r}", line_no, column)
        return Operand.deref_addr(symbol, segment="ds", size_hint=size_hint)

    if token.startswith("["):
        if not token.endswith("]"):
            raise ListingSyntaxError(f"unterminated memory operand {token!r}", line_no, column)
        return _parse_memory(token[1:-1], size_hint, line_no, column)

    if lowered in REGISTER_NAMES:
        if size_hint is not None:
            raise ListingSyntaxError(f"size annotation on register {token}", line_no, column)
        return Operand.reg(lowered)

    value = parse_integer(token)
    if value is not None:
        if size_hint is not None:
            raise ListingSyntaxError(f"size annotation on immediate {token}", line_no, column)
        return Operand.imm(value)

    if _SYMBOL_RE.match(token):
        if mnemonic == "call":
            return Operand.call_target(token)
        if mnemonic in JUMP_MNEMONICS:
            return Operand.jump_offset(token)
        return Operand.deref_addr(token, size_hint=size_hint)

    raise ListingSyntaxError(f"unrecognized operand {text.strip()!r}", line_no, column)


def _parse_line(
    raw: str,
    line_no: int,
    strict: bool,
) -> Tuple[Optional[str], Optional[Instruction]]:
    """Returns (label, instruction); either may be None."""
    code, comment = _split_comment(raw)
    offset = len(code) - len(code.lstrip())
    code = code.strip()

    label = None
    m = _LABEL_RE.match(code)
    if m:
        label = m.group(1)
        consumed = m.end()
        rest = code[consumed:]
        offset += consumed + len(rest) - len(rest.lstrip())
        code = rest.strip()

    if not code:
        return label, None

    parts = code.split(None, 1)
    mnemonic = parts[0].lower()
    if not _MNEMONIC_RE.match(mnemonic):
        raise ListingSyntaxError(f"bad mnemonic {parts[0]!r}", line_no, offset + 1)
    if mnemonic not in KNOWN_MNEMONICS:
        if strict:
            raise UnknownMnemonicError(f"unknown mnemonic {mnemonic!r}", line_no, offset + 1)
        logger.debug(f"Line {line_no}: passing through unknown mnemonic {mnemonic}")

    operands: List[Operand] = []
    if len(parts) > 1:
        operand_text = parts[1]
        column = offset + code.index(operand_text, len(parts[0])) + 1
        for piece in operand_text.split(","):
            leading = len(piece) - len(piece.lstrip())
            operands.append(parse_operand(piece, mnemonic, line_no, column + leading))
            column += len(piece) + 1

    try:
        instr = Instruction(
            mnemonic=mnemonic,
            operands=tuple(operands),
            label=label,
            opcode_bytes=_parse_opcode_bytes(comment, line_no),
        )
    except SchemaError as e:
        raise ListingSyntaxError(e.errors()[0]["msg"], line_no, offset + 1)
    return label, instr


def parse_instruction(line: str, strict: bool = False) -> Instruction:
    """Parse a single instruction line (optionally labeled)."""
    _, instr = _parse_line(line, 1, strict)
    if instr is None:
        raise ListingSyntaxError("no instruction on line", 1)
    return instr


def parse_listing(text: str, strict: bool = False) -> List[FunctionListing]:
    """
    Parse a listing document into function bodies.

    Raises ListingSyntaxError with line/column on malformed input and
    DuplicateFunctionError when a function name repeats.
    """
    functions: List[FunctionListing] = []
    seen = set()
    current_name = None
    current_type = None
    body: List[Instruction] = []
    pending_label = None
    start_line = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith(";"):
            continue

        if stripped.startswith(".func"):
            if current_name is not None:
                raise ListingSyntaxError(f"nested .func inside {current_name}", line_no)
            m = _FUNC_RE.match(stripped)
            if not m:
                raise ListingSyntaxError("malformed .func header", line_no)
            current_name = m.group(1)
            if current_name in seen:
                raise DuplicateFunctionError(f"Function {current_name} defined twice (line {line_no})")
            ret = m.group(2)
            if ret is not None:
                try:
                    current_type = TypeLabel(ret)
                except ValueError:
                    column = raw.index("ret=") + len("ret=") + 1
                    raise ListingSyntaxError(f"unknown return type {ret!r}", line_no, column)
            else:
                current_type = None
            body = []
            pending_label = None
            start_line = line_no
            continue

        if stripped == ".endfunc":
            if current_name is None:
                raise ListingSyntaxError(".endfunc without .func", line_no)
            if pending_label is not None:
                logger.warning(f"Function {current_name}: dropping trailing label {pending_label}")
            functions.append(FunctionListing(
                name=current_name,
                instructions=tuple(body),
                true_return_type=current_type,
            ))
            seen.add(current_name)
            current_name = None
            continue

        if current_name is None:
            raise ListingSyntaxError("instruction outside of a .func block", line_no)

        label, instr = _parse_line(raw, line_no, strict)
        if instr is None:
            if pending_label is not None:
                logger.debug(f"Line {line_no}: label {pending_label} superseded by {label}")
            pending_label = label
            continue
        if instr.label is None and pending_label is not None:
            instr = instr.model_copy(update={"label": pending_label})
        pending_label = None
        body.append(instr)

    if current_name is not None:
        raise ListingSyntaxError(f"function {current_name} opened on line {start_line} is never closed",
                                 start_line)

    logger.debug(f"Parsed {len(functions)} functions")
    return functions


def render_instruction(instr: Instruction) -> str:
    text = instr.mnemonic
    if instr.operands:
        text += " " + ", ".join(render_operand(op) for op in instr.operands)
    if instr.label:
        text = f"{instr.label}: {text}"
    if instr.opcode_bytes:
        text += " ; !bytes " + " ".join(f"{b:02X}" for b in instr.opcode_bytes)
    return text


def render_function(fn: FunctionListing, indent: str = "    ") -> str:
    header = f".func {fn.name}"
    if fn.true_return_type is not None:
        header += f" ret={fn.true_return_type.value}"
    lines = [header]
    lines.extend(indent + render_instruction(instr) for instr in fn.instructions)
    lines.append(".endfunc")
    return "\n".join(lines)


def render_listing(functions: Iterable[FunctionListing], header: Optional[str] = None) -> str:
    blocks = []
    if header:
        blocks.append("\n".join(f"; {line}" for line in header.splitlines()))
    blocks.extend(render_function(fn) for fn in functions)
    return "\n\n".join(blocks) + "\n"
