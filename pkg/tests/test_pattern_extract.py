# tests/test_pattern_extract.py - RET and POST-CALL chunk extraction tests
import pytest

from retypelab.services.listing_parser import parse_listing, render_instruction
from retypelab.services.pattern_extract import (
    build_chunk_bundle,
    extract_post_call_chunks,
    extract_ret_chunks,
    prefix_patterns,
)

TWO_EXITS = """\
.func _twice ret=bool
    push ebp
    mov ebp, esp
    cmp ecx, 0
    jz loc_1
    mov al, 1
    pop ebp
    retn
loc_1:
    xor al, al
    pop ebp
    retn
.endfunc
"""

CALLS = """\
.func _callee ret=short
    mov ax, 7
    retn
.endfunc

.func _caller
    push 3
    call _callee
    add esp, 4
    cwde
    call _callee
    movsx ecx, ax
    call _external
.endfunc
"""


def texts(chunk):
    return [render_instruction(i) for i in chunk.instructions]


def test_one_chunk_per_return():
    """Test each return yields its own chunk, stopping at the previous return or a label."""
    fn = parse_listing(TWO_EXITS)[0]
    chunks = extract_ret_chunks(fn)

    assert [c.retn_index for c in chunks] == [6, 9]
    assert texts(chunks[0]) == ["push ebp", "mov ebp, esp", "cmp ecx, 0", "jz loc_1", "mov al, 1", "pop ebp"]
    assert texts(chunks[1]) == ["loc_1: xor al, al", "pop ebp"]


def test_max_len_caps_chunk():
    """Test the backward scan stops after max_len instructions."""
    fn = parse_listing(TWO_EXITS)[0]

    assert texts(extract_ret_chunks(fn, max_len=2)[0]) == ["mov al, 1", "pop ebp"]


def test_scan_stops_before_unconditional_jump():
    """Test a jmp ends the window without being included."""
    fn = parse_listing(".func _f\n    mov eax, 1\n    jmp loc_2\n    mov eax, 2\n    retn\n.endfunc\n")[0]

    assert texts(extract_ret_chunks(fn)[0]) == ["mov eax, 2"]


def test_invalid_max_len():
    fn = parse_listing(TWO_EXITS)[0]

    with pytest.raises(ValueError):
        extract_ret_chunks(fn, max_len=0)


def test_anchor_mode_scan():
    """Test anchor mode scans past labels and jumps up to the return anchor."""
    text = (
        ".func _f ret=int\n"
        "    push ebp\n"
        "__RETURN0__:\n"
        "    mov eax, 1\n"
        "    jmp loc_3\n"
        "loc_3:\n"
        "    pop ebp\n"
        "    retn\n"
        ".endfunc\n"
    )
    fn = parse_listing(text)[0]

    assert texts(extract_ret_chunks(fn, anchor_mode=True)[0]) == [
        "__RETURN0__: mov eax, 1", "jmp loc_3", "loc_3: pop ebp",
    ]
    assert build_chunk_bundle([fn]).anchor_mode


def test_prefix_patterns_nest():
    """Test each prefix sequence extends the previous one backwards."""
    chunk = extract_ret_chunks(parse_listing(TWO_EXITS)[0])[0]
    sequences = prefix_patterns(chunk)

    assert len(sequences) == len(chunk.instructions)
    for shorter, longer in zip(sequences, sequences[1:]):
        assert longer[1:] == shorter
    assert all(seq[-1].is_return for seq in sequences)


def test_post_call_chunks():
    """Test call sites are filed under the callee with the stack cleanup skipped."""
    chunks = extract_post_call_chunks(parse_listing(CALLS))

    assert [(c.callee, c.call_index) for c in chunks] == [("_callee", 1), ("_callee", 4), ("_external", 6)]
    assert render_instruction(chunks[0].stack_adjust) == "add esp, 4"
    assert render_instruction(chunks[0].next_instruction) == "cwde"
    assert chunks[1].stack_adjust is None
    assert render_instruction(chunks[1].next_instruction) == "movsx ecx, ax"
    assert chunks[2].next_instruction is None


def test_chunk_bundle_diagnostics():
    """Test the bundle records labels, unlabeled functions and missing returns."""
    bundle = build_chunk_bundle(parse_listing(CALLS))

    assert bundle.function_order == ["_callee", "_caller"]
    assert bundle.labels == {"_callee": "short"}
    assert bundle.diagnostics.unlabeled == ["_caller"]
    assert bundle.diagnostics.no_return == ["_caller"]
    assert len(bundle.post_chunks["_callee"]) == 2
    assert not bundle.anchor_mode


def test_chunk_bundle_threads_agree(small_corpus):
    """Test chunking is independent of the worker count."""
    single = build_chunk_bundle(small_corpus.functions, threads=1)
    multi = build_chunk_bundle(small_corpus.functions, threads=4)

    assert single == multi
