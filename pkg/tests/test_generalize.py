# tests/test_generalize.py - Generalization, sequence macro and discriminator tests
import pytest

from retypelab.schemas.patterns import MacroName, PatternKind, PostCallChunk, RetChunk, parse_canonical_name
from retypelab.services.generalize import (
    advanced_features,
    generalize_chunk,
    generalize_instruction,
    generalize_post_chunk,
    generalize_ret_chunk,
    match_sequence_macros,
    post_destination_class,
)
from retypelab.services.listing_parser import parse_instruction


def rendered(line):
    return [g.render() for g in generalize_instruction(parse_instruction(line))]


def instructions(*lines):
    return [parse_instruction(line) for line in lines]


def ret_chunk(*lines):
    body = instructions(*lines)
    return RetChunk(
        function="_f",
        instructions=tuple(body),
        retn_index=len(body),
        terminator=parse_instruction("retn"),
    )


def post_chunk(next_line=None, adjust=True):
    return PostCallChunk(
        caller="_caller",
        callee="_f",
        call_index=0,
        call=parse_instruction("call _f"),
        stack_adjust=parse_instruction("add esp, 4") if adjust else None,
        next_instruction=parse_instruction(next_line) if next_line else None,
    )


@pytest.mark.parametrize("line, expected", [
    ("sub al, 1", "sub al, <lit>"),
    ("mov ecx, [ebp+var_1AC8]", "mov ecx, [ebp+<lit>]"),
    ("mov ecx, [ebp+var_1AC8]", "mov ecx, [<reg>]"),
    ("push offset $SG25215", "push <addr>"),
    ("movsd xmm0, ds:__real@43e2eb565391bf9e", "movsd xmm0, <*addr>"),
    ("jmp loc_22F", "jmp <off>"),
    ("mov cx, [ebp+eax*2+var_10]", "mov cx, [ebp+eax*<lit>+<lit>]"),
    ("mov cx, [ebp+eax*2+var_10]", "mov cx, [ebp+<reg>*<lit>+<lit>]"),
    ("mov cx, [ebp+eax*2+var_10]", "mov ecx, [<reg>]"),
    ("movzx ecx, [ebp+var_A]", "{mov} ecx, [ebp+var_A]"),
    ("movsx ecx, _global_var_1234", "{mov} ecx, _global_var_1234"),
    ("mov [eax], edx", "{mov} [eax], edx"),
    ("mov eax, 32", "mov eax, <lit>"),
    ("mov eax, 32", "mov <reg>, <lit>"),
])
def test_generalized_forms(line, expected):
    """Test each instruction produces the expected generalized form."""
    assert expected in rendered(line)


def test_concrete_form_dropped():
    """Test the fully concrete form is not a feature for plain mnemonics."""
    assert "sub al, 1" not in rendered("sub al, 1")
    assert "mov eax, 32" not in rendered("mov eax, 32")


def test_no_operand_instruction_kept():
    """Test operand-less instructions stay as they are."""
    assert rendered("cwde") == ["cwde"]


def test_forms_unique_and_ordered():
    """Test forms are distinct and concrete-mnemonic forms come first."""
    forms = rendered("mov ecx, [ebp+var_1AC8]")

    assert len(forms) == len(set(forms))
    first_class = next(i for i, f in enumerate(forms) if f.startswith("{mov}"))
    assert all(not f.startswith("{mov}") for f in forms[:first_class])
    assert all(f.startswith("{mov}") for f in forms[first_class:])


def test_size_annotation_kept():
    """Test size prefixes survive operand generalization."""
    assert "fld dword ptr [ebp+<lit>]" in rendered("fld dword ptr [ebp+var_8]")


@pytest.mark.parametrize("lines, name", [
    (("pop esi", "pop edi", "mov esp, ebp", "pop ebp", "retn"), MacroName.CALLEE_EPILOGUE),
    (("mov esp, ebp", "pop ebp", "retn"), MacroName.CALLEE_EPILOGUE),
    (("pop ebp", "retn"), MacroName.CALLEE_EPILOGUE),
    (("call _f", "add esp, 8"), MacroName.CALLER_EPILOGUE),
    (("call _f",), MacroName.CALLER_EPILOGUE),
])
def test_epilogue_macros(lines, name):
    """Test epilogue sequences collapse into a single macro."""
    macros = match_sequence_macros(instructions(*lines))

    assert len(macros) == 1
    assert macros[0].name == name
    assert macros[0].span == (0, len(lines))


def test_mov_chain_macro():
    """Test a chain of dependent moves renders innermost destination first."""
    macros = match_sequence_macros(instructions("mov eax, 0", "mov ebx, eax", "mov [ebp+var_8], ebx"))

    assert len(macros) == 1
    assert macros[0].render() == "mov_chain([ebp+var_8], ebx, eax, 0)"


def test_bool_cast_macro():
    """Test the set-one/set-zero branch shape renders as a bool cast."""
    macros = match_sequence_macros(instructions(
        "ja loc_1",
        "mov [ebp+var_10], 1",
        "jmp loc_2",
        "mov [ebp+var_10], 0",
    ))

    assert len(macros) == 1
    assert macros[0].render() == "bool_cast([ebp+var_10])"


def test_macros_do_not_overlap():
    """Test greedy matching yields disjoint spans."""
    seq = instructions("mov eax, 0", "mov ebx, eax", "pop ebp", "retn")
    macros = match_sequence_macros(seq)

    assert [m.name for m in macros] == [MacroName.MOV_CHAIN, MacroName.CALLEE_EPILOGUE]
    assert macros[0].span[1] <= macros[1].span[0]


def test_ret_patterns_start_with_epilogue():
    """Test the shortest RET pattern is the callee epilogue alone."""
    names = generalize_ret_chunk(ret_chunk("mov eax, 42", "pop ebp")).names

    assert names[0] == "RET: callee_epilogue"
    assert "RET: mov eax, <lit> | callee_epilogue" in names


def test_ret_patterns_grow_backwards():
    """Test longer RET patterns extend toward the chunk start."""
    names = generalize_ret_chunk(ret_chunk("mov ecx, 3", "mov eax, 42", "pop ebp")).names

    assert "RET: mov ecx, <lit> | mov eax, <lit> | callee_epilogue" in names
    assert "RET: mov ecx, <lit> | callee_epilogue" not in names


def test_ret_pattern_budget():
    """Test the pattern budget truncates and flags the set."""
    pattern_set = generalize_ret_chunk(
        ret_chunk("mov ecx, [ebp+var_8]", "mov edx, [ebp+var_C]", "mov eax, [ebp+arg_0]", "pop ebp"),
        budget=5,
    )

    assert len(pattern_set.patterns) == 5
    assert pattern_set.truncated


def test_ret_macro_arguments_generalized():
    """Test macro elements appear with generalized and elided arguments."""
    names = generalize_ret_chunk(ret_chunk("mov eax, 0", "mov ebx, eax", "mov [ebp+var_8], ebx", "pop ebp")).names

    assert "RET: mov_chain([ebp+<lit>], ebx, eax, <lit>) | callee_epilogue" in names
    assert "RET: mov_chain | callee_epilogue" in names


def test_post_patterns():
    """Test POST patterns pair the caller epilogue with the next instruction."""
    names = generalize_post_chunk(post_chunk("movsx edx, al")).names

    assert "POST: caller_epilogue | movsx edx, <reg>" in names
    assert "POST: caller_epilogue | {mov} edx, al" in names


def test_post_pattern_without_next_instruction():
    """Test a call at the end of a body yields the bare epilogue."""
    assert generalize_post_chunk(post_chunk(None)).names == ["POST: caller_epilogue"]


def test_ret_discriminators():
    """Test discriminators of the size-sharing types."""
    def names(*lines):
        return [p.canonical_name for p in advanced_features(ret_chunk(*lines))]

    assert "RET: literal_class(bool_like)" in names("mov al, 1")
    assert "RET: literal_class(other)" in names("mov eax, 42")
    assert "RET: div_present" in names("mov eax, [ebp+arg_0]", "cdq", "idiv dword ptr [ebp+var_8]")
    assert "RET: lea_into_eax" in names("lea eax, [ecx+4]")
    assert "RET: struct_return_shape" in names("mov eax, [ebp+arg_0]")
    assert "RET: edx_written" in names("mov eax, 1", "mov edx, 2")
    assert "RET: fp_width(qword)" in names("fld qword ptr [ebp+var_8] ; !bytes DD 45 F8")


def test_fp_width_from_opcode_bytes():
    """Test the x87 opcode byte decides the width when no size annotation is given."""
    chunk = ret_chunk("fld ds:__real@3f800000 ; !bytes D9 05 00 00 00 00")

    assert "RET: fp_width(dword)" in [p.canonical_name for p in advanced_features(chunk)]


def test_post_discriminators():
    """Test widening and destination features after a call."""
    def names(line):
        return [p.canonical_name for p in advanced_features(post_chunk(line))]

    assert "POST: widen(zero)" in names("movzx edx, al")
    assert "POST: widen(sign)" in names("movsx ecx, al")
    assert "POST: dest_class(memory)" in names("mov [ebp+var_8], eax")
    assert "POST: dest_class(register)" in names("add eax, 3")
    assert "POST: dest_class(unused)" in names("xor ecx, ecx")
    assert "POST: fp_width(dword)" in names("fstp dword ptr [ebp+var_8]")


@pytest.mark.parametrize("line, expected", [
    (None, "unused"),
    ("push eax", "memory"),
    ("push 5", "unused"),
    ("mov ecx, eax", "register"),
    ("mov eax, 0", "unused"),
    ("cwde", "register"),
])
def test_post_destination_class(line, expected):
    """Test where the returned value goes after the call."""
    assert post_destination_class(parse_instruction(line) if line else None) == expected


def test_parse_canonical_name():
    """Test feature names split back into kind and elements."""
    kind, elements = parse_canonical_name("RET: mov eax, <lit> | callee_epilogue")

    assert kind == PatternKind.RET
    assert elements == ["mov eax, <lit>", "callee_epilogue"]


@pytest.mark.parametrize("name", ["mov eax, 1", "JUNK: x", "RET: a |  | b"])
def test_parse_bad_canonical_name(name):
    with pytest.raises(ValueError):
        parse_canonical_name(name)


@pytest.mark.parametrize("line", [
    "mov ecx, [ebp+var_1AC8]",
    "movsx ecx, _global_var_1234",
    "mov cx, [ebp+eax*2+var_10]",
    "push offset $SG25215",
])
def test_forms_cover_their_instruction(line):
    """Test every generalized form subsumes the instruction it came from."""
    instr = parse_instruction(line)

    assert all(form.matches(instr) for form in generalize_instruction(instr))


def test_form_does_not_cover_other_mnemonic():
    form = next(f for f in generalize_instruction(parse_instruction("sub al, 1")) if f.render() == "sub al, <lit>")

    assert not form.matches(parse_instruction("add al, 1"))
    assert form.matches(parse_instruction("sub al, 7"))


def test_generalize_chunk_dispatches_on_kind():
    """Test one entry point handles both RET and POST chunks."""
    ret = generalize_chunk(ret_chunk("mov eax, 7", "pop ebp")).names
    post = generalize_chunk(post_chunk("cwde")).names

    assert "RET: mov eax, <lit> | callee_epilogue" in ret
    assert "POST: caller_epilogue | cwde" in post
    assert generalize_chunk(ret_chunk()).names == ["RET: callee_epilogue"]
