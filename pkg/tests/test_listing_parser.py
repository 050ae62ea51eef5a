# tests/test_listing_parser.py - Listing parser tests
import pytest

from retypelab.core.errors import DuplicateFunctionError, ListingSyntaxError, UnknownMnemonicError
from retypelab.schemas.asm import (
    LabelScheme,
    Operand,
    OperandKind,
    Register,
    SizeRepLabel,
    TypeLabel,
    map_to_sizerep,
    render_memory_terms,
    render_operand,
)
from retypelab.services.listing_parser import (
    parse_instruction,
    parse_integer,
    parse_listing,
    render_instruction,
    render_listing,
)

LISTING = """\
; two functions
.func _answer ret=int
    push ebp
    mov ebp, esp
    mov eax, 2Ah
    pop ebp
    retn
.endfunc

.func _caller
    call _answer
    add esp, 4
    mov [ebp+var_8], eax
    retn
.endfunc
"""


def test_parse_listing_functions():
    """Test headers, labels and bodies of a small listing."""
    functions = parse_listing(LISTING)

    assert [fn.name for fn in functions] == ["_answer", "_caller"]
    assert functions[0].true_return_type == TypeLabel.INT
    assert functions[1].true_return_type is None
    assert len(functions[0].instructions) == 5
    assert functions[0].return_indices == [4]
    assert functions[1].call_sites_in_body == [(0, "_answer")]


def test_parse_integer_forms():
    """Test decimal, 0x and h-suffixed integers."""
    assert parse_integer("42") == 42
    assert parse_integer("-7") == -7
    assert parse_integer("0x1F") == 31
    assert parse_integer("2Ah") == 42
    assert parse_integer("var_8") is None


def test_parse_operand_kinds():
    """Test every operand kind the parser recognizes."""
    assert parse_instruction("mov eax, 1").operands[1].kind == OperandKind.IMM
    assert parse_instruction("push offset $SG25215").operands[0].kind == OperandKind.ABS_ADDR
    assert parse_instruction("jmp loc_22F").operands[0].kind == OperandKind.JUMP_OFFSET
    assert parse_instruction("call _strlen").operands[0].kind == OperandKind.CALL_TARGET

    deref = parse_instruction("movsd xmm0, ds:__real@43e2eb565391bf9e").operands[1]
    assert deref.kind == OperandKind.DEREF_ADDR
    assert deref.segment == "ds"

    mem = parse_instruction("mov cx, [ebp+eax*2+var_10]").operands[1]
    assert mem.kind == OperandKind.MEM
    assert mem.base == Register.EBP
    assert mem.index == Register.EAX
    assert mem.scale == 2
    assert mem.disp == "var_10"


def test_size_hint_and_opcode_bytes():
    """Test size annotations and the opcode byte comment."""
    instr = parse_instruction("fld dword ptr [ebp+var_8] ; !bytes D9 45 F8")

    assert instr.operands[0].size_hint == 32
    assert instr.opcode_bytes == (0xD9, 0x45, 0xF8)


def test_pending_label_attaches_to_next_instruction():
    """Test a label on its own line labels the following instruction."""
    functions = parse_listing(".func _f\nloc_1:\n    mov eax, 1\n    retn\n.endfunc\n")

    assert functions[0].instructions[0].label == "loc_1"


def test_consecutive_labels_last_wins():
    """Test only the last of two consecutive labels is kept."""
    functions = parse_listing(".func _f\nloc_1:\nloc_2:\n    retn\n.endfunc\n")

    assert functions[0].instructions[0].label == "loc_2"


def test_duplicate_function_rejected():
    """Test a repeated function name fails."""
    text = ".func _f\n    retn\n.endfunc\n.func _f\n    retn\n.endfunc\n"

    with pytest.raises(DuplicateFunctionError):
        parse_listing(text)


def test_unclosed_function_rejected():
    """Test a missing .endfunc reports the opening line."""
    with pytest.raises(ListingSyntaxError) as excinfo:
        parse_listing(".func _f\n    retn\n")

    assert excinfo.value.line == 1


def test_unknown_return_type_column():
    """Test an unknown ret= type reports its column."""
    with pytest.raises(ListingSyntaxError) as excinfo:
        parse_listing(".func _f ret=quad\n    retn\n.endfunc\n")

    assert excinfo.value.line == 1
    assert excinfo.value.column == len(".func _f ret=") + 1


def test_malformed_memory_operand():
    """Test bad memory expressions raise with a location."""
    with pytest.raises(ListingSyntaxError):
        parse_listing(".func _f\n    mov eax, [ebp+eax*3]\n    retn\n.endfunc\n")


def test_unknown_mnemonic_strict_only():
    """Test unknown mnemonics pass through unless strict."""
    text = ".func _f\n    vfmadd eax, ebx\n    retn\n.endfunc\n"

    assert parse_listing(text)[0].instructions[0].mnemonic == "vfmadd"
    with pytest.raises(UnknownMnemonicError):
        parse_listing(text, strict=True)


def test_wrong_arity_rejected():
    """Test a known mnemonic with the wrong operand count fails."""
    with pytest.raises(ListingSyntaxError):
        parse_instruction("mov eax")


def test_render_listing_reparses():
    """Test rendered listings parse back to the same functions."""
    functions = parse_listing(LISTING)

    assert parse_listing(render_listing(functions)) == functions


def test_render_instruction_canonical():
    """Test the canonical instruction rendering."""
    assert render_instruction(parse_instruction("mov   eax ,  [ebp-8]")) == "mov eax, [ebp-8]"


def test_operand_rendering():
    """Test operands render in listing syntax with optional per-term overrides."""
    indexed = Operand.mem(base="ecx", index="eax", scale=4, disp=8)

    assert render_operand(Operand.mem(base="ebp", disp=-8, size_hint=32)) == "dword ptr [ebp-8]"
    assert render_operand(Operand.mem(disp="$SG10001")) == "[$SG10001]"
    assert render_operand(Operand.abs_addr("_table")) == "offset _table"
    assert render_memory_terms(indexed) == "ecx+eax*4+8"
    assert render_memory_terms(indexed, disp="<lit>") == "ecx+eax*4+<lit>"


@pytest.mark.parametrize("label, expected", [
    (TypeLabel.BOOL, SizeRepLabel.INT_1),
    (TypeLabel.CHAR, SizeRepLabel.INT_1),
    (TypeLabel.POINTER, SizeRepLabel.INT_4),
    (TypeLabel.STRUCT, SizeRepLabel.INT_4),
    (TypeLabel.LONG_LONG, SizeRepLabel.INT_8),
    (TypeLabel.DOUBLE, SizeRepLabel.REAL_8),
    (TypeLabel.VOID, SizeRepLabel.VOID),
])
def test_map_to_sizerep(label, expected):
    assert map_to_sizerep(label) == expected
    assert LabelScheme.SIZE_REP.label_for(label) == expected.value


def test_scheme_classes_sorted():
    """Test class names come out in a stable sorted order."""
    assert LabelScheme.SIZE_REP.classes() == ["INT_1", "INT_2", "INT_4", "INT_8", "REAL_4", "REAL_8", "VOID"]
    assert len(LabelScheme.HIGH_LEVEL.classes()) == 10
