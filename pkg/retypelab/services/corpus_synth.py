# retypelab/services/corpus_synth.py - Seeded synthetic assembly corpora built from cdecl codegen templates
import logging
import string
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from retypelab.core.parallel import ordered_map
from retypelab.schemas.asm import (
    ACCUMULATOR,
    CALLEE_SAVED,
    CONDITIONAL_JUMPS,
    FunctionListing,
    Instruction,
    OperandKind,
    TypeLabel,
)
from retypelab.schemas.synth import SynthConfig, SyntheticCorpus
from retypelab.services.listing_parser import parse_instruction, render_listing

logger = logging.getLogger(__name__)

_SETCC = ("sete", "setne", "setg", "setl", "setge", "setle", "seta", "setb")
_PRINTABLE = [ord(c) for c in string.printable if 32 <= ord(c) < 127]
# share of char literals that are 0 or 1, as in predicate-like char returns
_CHAR_FLAG_PROBABILITY = 0.1
_FP_LOADS = frozenset({"fld", "fild", "fld1", "fldz"})


class Template(BaseModel):
    """Instruction lines with ``{slot}`` placeholders filled per instance."""
    model_config = ConfigDict(frozen=True)

    name: str
    lines: Tuple[str, ...]


class TemplateFamily(BaseModel):
    model_config = ConfigDict(frozen=True)

    ret: Tuple[Template, ...]
    post: Tuple[Template, ...]
    # caller-side lines emitted before the pushes and the call
    call_prefix: Tuple[str, ...] = ()


class TemplateInstance(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: TypeLabel
    ret_template: str
    body: Tuple[Instruction, ...]
    post_template: str
    post_call: Tuple[Instruction, ...]
    call_prefix: Tuple[Instruction, ...] = ()


def _t(name: str, *lines: str) -> Template:
    return Template(name=name, lines=tuple(lines))


_BASE_FAMILIES: Dict[TypeLabel, TemplateFamily] = {
    TypeLabel.BOOL: TemplateFamily(
        ret=(
            _t("bool_literal", "mov al, {bool}"),
            _t("bool_compare", "mov ecx, [ebp+{arg}]", "cmp ecx, {small}", "{setcc} al"),
        ),
        post=(_t("zero_extend_edx", "movzx edx, al"), _t("zero_extend_ecx", "movzx ecx, al")),
    ),
    TypeLabel.CHAR: TemplateFamily(
        ret=(
            _t("char_literal", "mov al, {char}"),
            _t("char_load", "mov al, byte ptr [ebp+{var}]"),
        ),
        post=(
            _t("sign_extend_edx", "movsx edx, al"),
            _t("sign_extend_ecx", "movsx ecx, al"),
            _t("store_byte", "mov [ebp+{var}], al"),
        ),
    ),
    TypeLabel.SHORT: TemplateFamily(
        ret=(
            _t("short_literal", "mov ax, {short}"),
            _t("short_load", "mov ax, word ptr [ebp+{var}]"),
        ),
        post=(_t("widen_cwde", "cwde"), _t("store_word", "mov [ebp+{var}], ax")),
    ),
    TypeLabel.INT: TemplateFamily(
        ret=(
            _t("int_literal", "mov eax, {int}"),
            _t("int_division", "mov eax, [ebp+{arg}]", "cdq", "idiv dword ptr [ebp+{var}]"),
            _t("int_compare", "mov ecx, [ebp+{arg}]", "cmp ecx, [ebp+{var}]", "{setcc} cl", "movzx eax, cl"),
        ),
        post=(
            _t("store_dword", "mov [ebp+{var}], eax"),
            _t("add_result", "add eax, {small}"),
            _t("compare_result", "cmp eax, {small}"),
        ),
    ),
    TypeLabel.POINTER: TemplateFamily(
        ret=(
            _t("field_address", "mov ecx, [ebp+{arg}]", "lea eax, [ecx+{field}]"),
            _t("string_address", "lea eax, [{string}]"),
        ),
        post=(_t("deref_field", "mov ecx, [eax+{field}]"), _t("null_test", "test eax, eax")),
    ),
    TypeLabel.STRUCT: TemplateFamily(
        ret=(
            _t(
                "hidden_buffer",
                "mov ecx, [ebp+arg_0]",
                "mov edx, [ebp+{var}]",
                "mov [ecx], edx",
                "mov edx, [ebp+{var2}]",
                "mov [ecx+4], edx",
                "mov eax, [ebp+arg_0]",
            ),
        ),
        post=(_t("copy_first_field_ecx", "mov ecx, [eax]"), _t("copy_first_field_edx", "mov edx, [eax]")),
        call_prefix=("lea eax, [ebp+{var}]", "push eax"),
    ),
    TypeLabel.LONG_LONG: TemplateFamily(
        ret=(
            _t("pair_literal", "mov eax, {int}", "mov edx, {int}"),
            _t("pair_load", "mov eax, [ebp+{var}]", "mov edx, [ebp+{var2}]"),
        ),
        post=(_t("push_high", "push edx"), _t("store_high", "mov [ebp+{var}], edx")),
    ),
    TypeLabel.FLOAT: TemplateFamily(
        ret=(
            _t("float_load", "fld dword ptr [ebp+{var}] ; !bytes D9 45 {disp8}"),
            _t("float_constant", "fld dword ptr ds:{real32} ; !bytes D9 05 00 00 00 00"),
            _t(
                "float_round",
                "fld dword ptr [ebp+{arg}] ; !bytes D9 45 {argdisp8}",
                "fadd dword ptr [ebp+{var2}] ; !bytes D8 45 {disp8}",
                "fstp dword ptr [ebp+{var}] ; !bytes D9 5D {disp8}",
                "fld dword ptr [ebp+{var}] ; !bytes D9 45 {disp8}",
            ),
        ),
        post=(_t("store_single", "fstp dword ptr [ebp+{var}] ; !bytes D9 5D {disp8}"),),
    ),
    TypeLabel.DOUBLE: TemplateFamily(
        ret=(
            _t("double_load", "fld qword ptr [ebp+{var}] ; !bytes DD 45 {disp8}"),
            _t("double_constant", "fld qword ptr ds:{real64} ; !bytes DD 05 00 00 00 00"),
            _t(
                "double_sum",
                "fld qword ptr [ebp+{arg}] ; !bytes DD 45 {argdisp8}",
                "fadd qword ptr [ebp+{var2}] ; !bytes DC 45 {disp8}",
            ),
        ),
        post=(_t("store_double", "fstp qword ptr [ebp+{var}] ; !bytes DD 5D {disp8}"),),
    ),
    TypeLabel.VOID: TemplateFamily(
        ret=(
            _t("bare_return"),
            _t("store_through_argument", "mov ecx, [ebp+{arg}]", "mov dword ptr [ecx], {small}"),
        ),
        post=(
            _t("store_constant", "mov dword ptr [ebp+{var}], {small}"),
            _t("push_constant", "push {small}"),
            _t("clear_counter", "xor ecx, ecx"),
        ),
    ),
}

# Computes a value in eax and never returns it
_VOID_TEMPORARY = _t("discarded_temporary", "mov eax, {int}", "mov [ebp+{var}], eax")

_CONFUSABLE_BYTE_RET = (
    _t("byte_literal", "mov al, {byte}"),
    _t("bool_compare", "mov ecx, [ebp+{arg}]", "cmp ecx, {small}", "{setcc} al"),
    _t("char_load", "mov al, byte ptr [ebp+{var}]"),
)

_DISTRACTORS = (
    "mov ecx, [ebp+{var}]",
    "mov [ebp+{var}], ecx",
    "add ecx, {small}",
    "mov ecx, esi",
    "inc ecx",
    "shl ecx, {shift}",
    "mov ecx, [ebp+{arg}]",
)

_EPILOGUES = (
    ("pop esi", "pop edi", "mov esp, ebp", "pop ebp", "retn"),
    ("mov esp, ebp", "pop ebp", "retn"),
    ("pop ebp", "retn"),
)


class SlotFiller:
    """Draws slot values from one function's RNG stream."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def _pick(self, values: Sequence):
        return values[int(self.rng.integers(len(values)))]

    def _frame_symbol(self, prefix: str, low: int, high: int) -> str:
        return f"{prefix}_{int(self.rng.integers(low, high)) * 4:X}"

    def value(self, slot: str) -> str:
        rng = self.rng
        if slot == "bool":
            return str(int(rng.integers(2)))
        if slot == "char":
            if rng.random() < _CHAR_FLAG_PROBABILITY:
                return str(int(rng.integers(2)))
            return str(self._pick(_PRINTABLE))
        if slot == "byte":
            return str(int(rng.integers(2))) if rng.random() < 0.5 else str(self._pick(_PRINTABLE))
        if slot == "short":
            return str(int(rng.integers(-32768, 32768)))
        if slot == "int":
            return str(int(rng.integers(-2 ** 31, 2 ** 31)))
        if slot == "small":
            return str(int(rng.integers(2, 64)))
        if slot == "shift":
            return str(int(rng.integers(1, 4)))
        if slot in ("var", "var2"):
            return self._frame_symbol("var", 1, 64)
        if slot == "arg":
            return self._frame_symbol("arg", 1, 4)
        if slot == "field":
            return str(int(rng.integers(1, 16)) * 4)
        if slot == "string":
            return f"$SG{int(rng.integers(10000, 100000))}"
        if slot == "real32":
            return f"__real@{int(rng.integers(2 ** 32)):08x}"
        if slot == "real64":
            return f"__real@{int(rng.integers(2 ** 63)):016x}"
        if slot == "setcc":
            return self._pick(_SETCC)
        if slot == "disp8":
            return f"{int(rng.integers(0xC0, 0x100)):02X}"
        if slot == "argdisp8":
            return f"{int(rng.integers(3, 6)) * 4:02X}"
        if slot == "frame":
            return str(int(rng.integers(2, 32)) * 4)
        raise KeyError(f"Unknown template slot {slot}")

    def render(self, lines: Sequence[str]) -> List[Instruction]:
        values: Dict[str, str] = {}
        out = []
        for line in lines:
            for slot in _slots(line):
                if slot not in values:
                    values[slot] = self.value(slot)
            out.append(parse_instruction(line.format(**values)))
        return out


def _slots(line: str) -> List[str]:
    return [name for _, name, _, _ in string.Formatter().parse(line) if name]


def _skeleton(instr: Instruction) -> tuple:
    """Shape of an instruction with literal values and symbols erased."""
    mnemonic = instr.mnemonic
    if mnemonic.startswith("set"):
        mnemonic = "setcc"
    elif mnemonic in CONDITIONAL_JUMPS:
        mnemonic = "jcc"
    shape = []
    for op in instr.operands:
        if op.kind == OperandKind.REG:
            shape.append(("reg", op.register.value))
        elif op.kind == OperandKind.MEM:
            disp_kind = None if op.disp is None else ("int" if isinstance(op.disp, int) else "sym")
            shape.append(("mem", op.size_hint, op.base, op.index, disp_kind))
        elif op.kind == OperandKind.DEREF_ADDR:
            shape.append(("deref", op.size_hint, op.segment))
        else:
            shape.append((op.kind.value,))
    return (mnemonic, tuple(shape))


def _writes_return_value(instr: Instruction) -> bool:
    if instr.mnemonic in _FP_LOADS:
        return True
    dest = instr.destination
    if dest is None or dest.kind != OperandKind.REG or instr.mnemonic in ("cmp", "test", "push"):
        return False
    return dest.register.value in ACCUMULATOR or dest.register.family.value == "edx"


def _strip_epilogue(instructions: Sequence[Instruction]) -> List[Instruction]:
    body = list(instructions)
    if body and body[-1].is_return:
        body.pop()
    if body and body[-1].mnemonic == "pop" and body[-1].operands[0].is_register("ebp"):
        body.pop()
    if body and body[-1].mnemonic == "mov" and body[-1].operands[0].is_register("esp") \
            and body[-1].operands[1].is_register("ebp"):
        body.pop()
    while body and body[-1].mnemonic == "pop" and body[-1].operands[0].kind == OperandKind.REG \
            and body[-1].operands[0].register.value in CALLEE_SAVED:
        body.pop()
    return body


class TemplateCatalog:
    """Code-generation templates per return type."""

    def __init__(self, confusable_mode: bool = False, label_rotation: int = 0):
        self.confusable_mode = confusable_mode
        self.label_rotation = label_rotation
        labels = list(TypeLabel)
        self.families: Dict[TypeLabel, TemplateFamily] = {}
        for i, label in enumerate(labels):
            source = labels[(i + label_rotation) % len(labels)]
            self.families[label] = self._family_for(source)
        self._skeletons = {
            label: [self._template_skeleton(t) for t in family.ret]
            for label, family in self.families.items()
        }
        self._post_skeletons = {
            label: {self._template_skeleton(t)[0] for t in family.post}
            for label, family in self.families.items()
        }

    def _family_for(self, source: TypeLabel) -> TemplateFamily:
        family = _BASE_FAMILIES[source]
        if not self.confusable_mode:
            return family
        if source in (TypeLabel.BOOL, TypeLabel.CHAR):
            return family.model_copy(update={"ret": _CONFUSABLE_BYTE_RET})
        if source in (TypeLabel.INT, TypeLabel.POINTER):
            merged = _BASE_FAMILIES[TypeLabel.INT].ret + _BASE_FAMILIES[TypeLabel.POINTER].ret
            return family.model_copy(update={"ret": merged})
        return family

    @staticmethod
    def _template_skeleton(template: Template) -> List[tuple]:
        filler = SlotFiller(np.random.default_rng(0))
        return [_skeleton(instr) for instr in filler.render(template.lines)]

    def pairs(self, label: TypeLabel) -> List[Tuple[Template, Template]]:
        family = self.families[label]
        return [(ret, post) for ret in family.ret for post in family.post]

    def matches(self, label: TypeLabel, fn: FunctionListing) -> bool:
        """True when fn's body ends with an instance of one of label's RET templates."""
        body = _strip_epilogue(fn.instructions)
        for skeleton in self._skeletons[label]:
            if not skeleton:
                if not body or not _writes_return_value(body[-1]):
                    return True
                continue
            if len(body) >= len(skeleton) and [_skeleton(i) for i in body[-len(skeleton):]] == skeleton:
                return True
        # the discarded temporary of void functions
        if self.families[label] is _BASE_FAMILIES[TypeLabel.VOID]:
            tail = self._template_skeleton(_VOID_TEMPORARY)
            return len(body) >= 2 and [_skeleton(i) for i in body[-2:]] == tail
        return False

    def matches_post(self, label: TypeLabel, instr: Instruction) -> bool:
        return _skeleton(instr) in self._post_skeletons[label]


def template_for(
    label: TypeLabel,
    rng: np.random.Generator,
    catalog: Optional[TemplateCatalog] = None,
    distractor_probability: float = 0.0,
) -> TemplateInstance:
    """Draw and render one (RET body, POST-CALL) template instance for a label."""
    catalog = catalog or TemplateCatalog()
    family = catalog.families[label]
    filler = SlotFiller(rng)
    ret = family.ret[int(rng.integers(len(family.ret)))]
    if family is _BASE_FAMILIES[TypeLabel.VOID] and rng.random() < distractor_probability:
        ret = _VOID_TEMPORARY
    post = family.post[int(rng.integers(len(family.post)))]
    return TemplateInstance(
        label=label,
        ret_template=ret.name,
        body=tuple(filler.render(ret.lines)),
        post_template=post.name,
        post_call=tuple(filler.render(post.lines)),
        call_prefix=tuple(filler.render(family.call_prefix)),
    )


class _CalleePlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    function: FunctionListing
    call_sites: Tuple[Tuple[Instruction, ...], ...]


def _build_callee(index: int, name: str, label: TypeLabel, cfg: SynthConfig,
                  catalog: TemplateCatalog) -> _CalleePlan:
    rng = np.random.default_rng([cfg.rng_seed, index])
    filler = SlotFiller(rng)
    instance = template_for(label, rng, catalog, cfg.distractor_probability)

    variant = int(rng.choice(3, p=np.array(cfg.epilogue_variant_weights, dtype=float)))
    prologue = ["push ebp", "mov ebp, esp"]
    if variant < 2:
        prologue.append("sub esp, {frame}")
    if variant == 0:
        prologue.extend(["push edi", "push esi"])

    n_distractors = int(rng.integers(cfg.max_distractors + 1)) if cfg.max_distractors else 0
    distractors = [_DISTRACTORS[int(rng.integers(len(_DISTRACTORS)))] for _ in range(n_distractors)]

    epilogue = filler.render(_EPILOGUES[variant])
    body = list(instance.body)
    if cfg.return_anchors:
        anchored = body if body else epilogue
        anchored[0] = anchored[0].model_copy(update={"label": "__RETURN0__"})

    instructions = filler.render(prologue) + filler.render(distractors) + body + epilogue
    function = FunctionListing(name=name, instructions=tuple(instructions), true_return_type=label)

    sites = []
    for _ in range(cfg.callers_per_function):
        site = template_for(label, rng, catalog)
        n_args = int(rng.integers(3))
        lines = [instr for instr in site.call_prefix]
        pushes = filler.render(["push {small}", "push dword ptr [ebp+{var}]"][: n_args])
        lines.extend(pushes)
        lines.append(parse_instruction(f"call {name}"))
        stack_words = n_args + (1 if site.call_prefix else 0)
        if stack_words:
            lines.append(parse_instruction(f"add esp, {4 * stack_words}"))
        lines.extend(site.post_call)
        sites.append(tuple(lines))
    return _CalleePlan(function=function, call_sites=tuple(sites))


def _build_caller(name: str, sites: Sequence[Tuple[Instruction, ...]], rng: np.random.Generator) -> FunctionListing:
    filler = SlotFiller(rng)
    instructions = filler.render(["push ebp", "mov ebp, esp", "sub esp, {frame}"])
    for site in sites:
        instructions.extend(site)
    instructions.extend(filler.render(_EPILOGUES[1]))
    return FunctionListing(name=name, instructions=tuple(instructions))


def synthesize_corpus(cfg: SynthConfig, threads: int = 1) -> SyntheticCorpus:
    """
    Generate labeled callee functions and the caller functions that invoke them.

    Every callee draws its own RNG stream from (seed, index), so output is a pure
    function of the config regardless of the worker count.
    """
    catalog = TemplateCatalog(cfg.confusable_mode, cfg.label_rotation)
    labels = [label for label in TypeLabel for _ in range(cfg.counts[label])]
    order_rng = np.random.default_rng([cfg.rng_seed, 2 ** 32])
    labels = [labels[i] for i in order_rng.permutation(len(labels))]

    width = max(5, len(str(len(labels))))
    plans = ordered_map(
        lambda item: _build_callee(item[0], f"{cfg.function_prefix}{item[0] + 1:0{width}d}", item[1], cfg, catalog),
        list(enumerate(labels)),
        threads,
    )

    sites = [site for plan in plans for site in plan.call_sites]
    site_rng = np.random.default_rng([cfg.rng_seed, 2 ** 32 + 1])
    sites = [sites[i] for i in site_rng.permutation(len(sites))]
    callers = []
    for n, start in enumerate(range(0, len(sites), cfg.calls_per_caller)):
        callers.append(_build_caller(
            f"{cfg.function_prefix}_caller{n + 1:0{width}d}",
            sites[start:start + cfg.calls_per_caller],
            np.random.default_rng([cfg.rng_seed, 2 ** 32 + 2, n]),
        ))

    functions = tuple(plan.function for plan in plans) + tuple(callers)
    logger.info(f"Synthesized {len(plans)} labeled functions and {len(callers)} callers (seed {cfg.rng_seed})")
    return SyntheticCorpus(config=cfg, functions=functions)


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, dtype=np.uint64)[0])


def synthesize_programs(cfg: SynthConfig, programs: int, threads: int = 1) -> List[SyntheticCorpus]:
    """Independent programs with their own seeds and symbol prefixes."""
    corpora = []
    for p in range(programs):
        program_cfg = cfg.model_copy(update={
            "rng_seed": derive_seed(cfg.rng_seed, p),
            "function_prefix": f"{cfg.function_prefix}_p{p}_",
        })
        corpora.append(synthesize_corpus(program_cfg, threads))
    return corpora


def emit_listing(corpus: SyntheticCorpus) -> str:
    cfg = corpus.config
    header = (
        f"retypelab synthetic corpus\n"
        f"seed={cfg.rng_seed} labeled={len(corpus.labeled)} callers={len(corpus.callers)} "
        f"confusable={str(cfg.confusable_mode).lower()}"
    )
    return render_listing(corpus.functions, header=header)


def fold_union(field_sizes: Sequence[int]) -> TypeLabel:
    """Return type a union folds to, decided by its biggest field in bytes."""
    if not field_sizes:
        raise ValueError("union without fields")
    biggest = max(field_sizes)
    if biggest <= 4:
        return TypeLabel.INT
    if biggest <= 8:
        return TypeLabel.LONG_LONG
    return TypeLabel.STRUCT
