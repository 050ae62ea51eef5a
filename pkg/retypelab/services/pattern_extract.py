# retypelab/services/pattern_extract.py - Cut RET and POST-CALL chunks out of function listings
import logging
import re
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from retypelab.core.parallel import ordered_map
from retypelab.schemas.asm import FunctionListing, Instruction, OperandKind
from retypelab.schemas.patterns import ChunkBundle, ChunkDiagnostics, PostCallChunk, RetChunk

logger = logging.getLogger(__name__)

ANCHOR_LABEL_RE = re.compile(r"^__RETURN\d+__$")


def is_anchor(instr: Instruction) -> bool:
    return instr.label is not None and ANCHOR_LABEL_RE.match(instr.label) is not None


def has_return_anchors(functions: Iterable[FunctionListing]) -> bool:
    return any(is_anchor(instr) for fn in functions for instr in fn.instructions)


def extract_ret_chunks(fn: FunctionListing, max_len: int = 8, anchor_mode: bool = False) -> List[RetChunk]:
    """
    One chunk per return instruction, scanning backwards at most max_len instructions.

    The scan stops at a previous return or the function start. In window mode it also
    stops before an unconditional jump and after a labeled instruction; in anchor mode
    only a __RETURN<n>__ label ends it.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")

    chunks = []
    instructions = fn.instructions
    for retn_index in fn.return_indices:
        collected: List[Instruction] = []
        i = retn_index - 1
        while i >= 0 and len(collected) < max_len:
            instr = instructions[i]
            if instr.is_return:
                break
            if anchor_mode:
                collected.append(instr)
                if is_anchor(instr):
                    break
            else:
                if instr.is_unconditional_jump:
                    break
                collected.append(instr)
                if instr.label is not None:
                    break
            i -= 1
        chunks.append(RetChunk(
            function=fn.name,
            instructions=tuple(reversed(collected)),
            retn_index=retn_index,
            terminator=instructions[retn_index],
        ))
    return chunks


def prefix_patterns(chunk: RetChunk) -> List[Tuple[Instruction, ...]]:
    """Sequence k holds the last k chunk instructions plus the return; each nests in the next."""
    n = len(chunk.instructions)
    return [chunk.instructions[n - k:] + (chunk.terminator,) for k in range(1, n + 1)]


def _is_stack_adjust(instr: Instruction) -> bool:
    return (
        instr.mnemonic == "add"
        and len(instr.operands) == 2
        and instr.operands[0].is_register("esp")
        and instr.operands[1].kind == OperandKind.IMM
    )


def extract_post_call_chunks(functions: Sequence[FunctionListing]) -> List[PostCallChunk]:
    """Instruction following each call (after an optional stack cleanup), filed under the callee."""
    chunks = []
    for fn in functions:
        body = fn.instructions
        for call_index, callee in fn.call_sites_in_body:
            j = call_index + 1
            stack_adjust: Optional[Instruction] = None
            if j < len(body) and _is_stack_adjust(body[j]):
                stack_adjust = body[j]
                j += 1
            chunks.append(PostCallChunk(
                caller=fn.name,
                callee=callee,
                call_index=call_index,
                call=body[call_index],
                stack_adjust=stack_adjust,
                next_instruction=body[j] if j < len(body) else None,
            ))
    return chunks


def build_chunk_bundle(
    functions: Sequence[FunctionListing],
    max_len: int = 8,
    anchor_mode: Optional[bool] = None,
    threads: int = 1,
) -> ChunkBundle:
    """Extract every chunk of a listing; anchor_mode None means auto-detect."""
    if anchor_mode is None:
        anchor_mode = has_return_anchors(functions)
        if anchor_mode:
            logger.info("Listing carries return anchors, scanning in anchor mode")

    per_function = ordered_map(lambda fn: extract_ret_chunks(fn, max_len, anchor_mode), functions, threads)

    diagnostics = ChunkDiagnostics()
    ret_chunks: Dict[str, List[RetChunk]] = {}
    labels = {}
    for fn, chunks in zip(functions, per_function):
        ret_chunks[fn.name] = chunks
        if not chunks:
            diagnostics.no_return.append(fn.name)
            logger.debug(f"Function {fn.name} has no return instruction")
        if fn.is_labeled:
            labels[fn.name] = fn.true_return_type
        else:
            diagnostics.unlabeled.append(fn.name)

    post_chunks: Dict[str, List[PostCallChunk]] = {}
    for chunk in extract_post_call_chunks(functions):
        post_chunks.setdefault(chunk.callee, []).append(chunk)

    if diagnostics.no_return:
        logger.warning(f"{len(diagnostics.no_return)} functions have no return instruction")
    logger.info(
        f"Extracted {sum(len(c) for c in ret_chunks.values())} RET chunks and "
        f"{sum(len(c) for c in post_chunks.values())} POST-CALL chunks from {len(functions)} functions"
    )
    return ChunkBundle(
        function_order=[fn.name for fn in functions],
        labels=labels,
        ret_chunks=ret_chunks,
        post_chunks=post_chunks,
        anchor_mode=anchor_mode,
        diagnostics=diagnostics,
    )
