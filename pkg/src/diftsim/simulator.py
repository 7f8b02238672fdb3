"""Kernel execution, differential consistency checking, the brute-force
independence oracle, and the property fuzzer.

run_baseline executes the untracked kernel; run_dift executes it with tag
propagation and live checkpoints. Both walk the node list in order, so a
single run is sequential; distinct runs over immutable kernels are
independent. All randomness is seeded.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field, replace

from . import taint
from .bitvalue import (
    BINARY_OPS,
    COMPARE_OPS,
    UNARY_OPS,
    BitType,
    BitValue,
    OpKind,
    eval_binop,
    eval_unop,
    make_bitvalue,
    op_arity,
    to_int,
)
from .errors import EvalError, OutOfBoundsAddress, WidthMismatch, WidthTooLarge
from .kernel_ir import Diagnostic, Kernel, MemoryDecl, const_fold, dead_code_elim
from .policy_monitor import REG_TAG_IN, MonitorState, checkpoint, reg_read
from .taint import CoarseBoundary, FineGrained, PropagationRule, Tag, boundary_tag
from .tainted import DiftConfig, DiftValue, apply_binop, apply_mux, apply_unop

_ORACLE_MAX_WIDTH = 6


@dataclass(frozen=True)
class RunInputs:
    """One run's stimulus: input values (wrapped on load), tag overrides,
    and optional per-memory value overrides."""

    values: dict[str, int] = field(default_factory=dict)
    tags: dict[str, int] = field(default_factory=dict)
    memory: dict[str, list[int]] = field(default_factory=dict)


@dataclass(frozen=True)
class SimulationReport:
    """Outputs, exceptions, and monitor state of one tracked run.

    checkpoint_tags and halted are in-memory extras; to_json emits exactly
    the wire schema (outputs, exceptions, irq, steps, mode, rule)."""

    outputs: dict[str, tuple[int, int]]  # id -> (value bits, tag bits)
    exceptions: tuple
    irq: bool
    steps_executed: int
    mode: str
    rule: str | None
    checkpoint_tags: tuple[tuple[str, int], ...] = ()
    halted: bool = False

    def to_json(self) -> str:
        doc = {
            "outputs": {
                oid: {"value": v, "tag": t} for oid, (v, t) in self.outputs.items()
            },
            "exceptions": [
                {
                    "checkpoint": e.checkpoint_id,
                    "node": e.node_id,
                    "tag": e.tag_bits,
                    "step": e.step,
                    "policy": e.policy_name,
                }
                for e in self.exceptions
            ],
            "irq": self.irq,
            "steps": self.steps_executed,
            "mode": self.mode,
            "rule": self.rule,
        }
        return json.dumps(doc, indent=2) + "\n"


def parse_inputs(text: str) -> tuple[RunInputs | None, list[Diagnostic]]:
    """Parse an inputs document: {"values": {...}, "tags": {...}, "memory": {...}}."""
    diags: list[Diagnostic] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        diags.append(Diagnostic("error", f"line {e.lineno}", f"invalid JSON: {e.msg}"))
        return None, diags
    if not isinstance(doc, dict):
        diags.append(Diagnostic("error", "inputs", "top-level document must be an object"))
        return None, diags
    unknown = set(doc) - {"values", "tags", "memory"}
    if unknown:
        diags.append(
            Diagnostic("error", "inputs", f"unknown keys: {', '.join(sorted(unknown))}")
        )
        return None, diags

    def int_map(key: str) -> dict[str, int] | None:
        raw = doc.get(key, {})
        if not isinstance(raw, dict) or not all(
            isinstance(k, str) and isinstance(v, int) and not isinstance(v, bool)
            for k, v in raw.items()
        ):
            diags.append(Diagnostic("error", key, f"{key} must map ids to integers"))
            return None
        return dict(raw)

    values = int_map("values")
    tags = int_map("tags")
    memory_raw = doc.get("memory", {})
    memory: dict[str, list[int]] | None = {}
    if not isinstance(memory_raw, dict):
        diags.append(Diagnostic("error", "memory", "memory must map ids to lists"))
        memory = None
    else:
        for mid, cells in memory_raw.items():
            if not isinstance(cells, list) or not all(
                isinstance(x, int) and not isinstance(x, bool) for x in cells
            ):
                diags.append(Diagnostic("error", "memory", f"{mid} must be a list of integers"))
                memory = None
                break
            memory[mid] = list(cells)
    if values is None or tags is None or memory is None:
        return None, diags
    return RunInputs(values, tags, memory), diags


def inputs_to_json(inputs: RunInputs) -> str:
    doc: dict = {"values": inputs.values, "tags": inputs.tags}
    if inputs.memory:
        doc["memory"] = inputs.memory
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _init_values(
    k: Kernel, inputs: RunInputs, diags: list[Diagnostic] | None
) -> tuple[dict[str, BitValue], dict[str, list[BitValue]]]:
    def warn(loc: str, msg: str) -> None:
        if diags is not None:
            diags.append(Diagnostic("warning", loc, msg))

    known = {i.id for i in k.inputs}
    for unknown in set(inputs.values) - known:
        warn(unknown, "value for unknown input ignored")
    for unknown in set(inputs.tags) - known:
        warn(unknown, "tag for unknown input ignored")
    for unknown in set(inputs.memory) - {m.id for m in k.memories}:
        warn(unknown, "override for unknown memory ignored")

    env: dict[str, BitValue] = {}
    for inp in k.inputs:
        if inp.id in inputs.values:
            env[inp.id] = make_bitvalue(inp.ty, inputs.values[inp.id])
        else:
            warn(inp.id, "input not assigned; defaulting to 0")
            env[inp.id] = BitValue(inp.ty, 0)
    for c in k.constants:
        env[c.id] = c.value

    mems: dict[str, list[BitValue]] = {}
    for m in k.memories:
        cells = [BitValue(m.cell, b) for b in m.init]
        cells += [BitValue(m.cell, 0)] * (m.size - len(cells))
        override = inputs.memory.get(m.id)
        if override is not None:
            if len(override) > m.size:
                raise OutOfBoundsAddress(
                    f"memory override for {m.id} has {len(override)} cells, size is {m.size}",
                    node_id=m.id,
                )
            for i, raw in enumerate(override):
                cells[i] = make_bitvalue(m.cell, raw)
        mems[m.id] = cells
    return env, mems


def _init_tags(
    k: Kernel, inputs: RunInputs, monitor: MonitorState
) -> tuple[dict[str, Tag], dict[str, list[Tag]]]:
    """Input tags resolve as: explicit override, else a nonzero REG_TAG_IN
    word, else the declared default."""
    mask = (1 << k.tag_width) - 1
    tag_in = reg_read(monitor, REG_TAG_IN)
    tags: dict[str, Tag] = {}
    for inp in k.inputs:
        if inp.id in inputs.tags:
            bits = inputs.tags[inp.id] & mask
        elif tag_in:
            bits = tag_in & mask
        else:
            bits = inp.default_tag
        tags[inp.id] = Tag(k.tag_width, bits)
    for c in k.constants:
        tags[c.id] = Tag.zero(k.tag_width)
    mem_tags: dict[str, list[Tag]] = {}
    for m in k.memories:
        cells = [Tag(k.tag_width, b) for b in m.init_tags]
        cells += [Tag.zero(k.tag_width)] * (m.size - len(cells))
        mem_tags[m.id] = cells
    return tags, mem_tags


def _mem_index(mem: MemoryDecl, addr: BitValue, node_id: str, step: int) -> int:
    i = to_int(addr)
    if not 0 <= i < mem.size:
        raise OutOfBoundsAddress(
            f"address {i} outside {mem.id}[0..{mem.size})", node_id=node_id, step=step
        )
    return i


def _locate(exc: EvalError, node_id: str, step: int) -> EvalError:
    if exc.node_id is None:
        exc.node_id = node_id
        exc.step = step
        exc.args = (f"{exc.args[0]} (node {node_id}, step {step})",)
    return exc


def run_baseline(
    k: Kernel, inputs: RunInputs, diags: list[Diagnostic] | None = None
) -> dict[str, int]:
    """Execute the kernel without any tracking; checkpoints are no-ops."""
    env, mems = _init_values(k, inputs, diags)
    mem_decls = {m.id: m for m in k.memories}
    for step, node in enumerate(k.nodes, start=1):
        try:
            if node.op is OpKind.LOAD:
                mem = mem_decls[node.args[0]]
                i = _mem_index(mem, env[node.args[1]], node.id, step)
                env[node.id] = mems[mem.id][i]
            elif node.op is OpKind.STORE:
                mem = mem_decls[node.args[0]]
                i = _mem_index(mem, env[node.args[1]], node.id, step)
                mems[mem.id][i] = make_bitvalue(mem.cell, to_int(env[node.args[2]]))
            elif node.op is OpKind.MUX:
                chosen = node.args[1] if to_int(env[node.args[0]]) != 0 else node.args[2]
                env[node.id] = make_bitvalue(node.ty, to_int(env[chosen]))
            elif node.op in UNARY_OPS:
                env[node.id] = eval_unop(node.op, env[node.args[0]], node.ty)
            else:
                env[node.id] = eval_binop(
                    node.op, env[node.args[0]], env[node.args[1]], node.ty
                )
        except EvalError as e:
            raise _locate(e, node.id, step)
    return {o.id: env[o.source].bits for o in k.outputs}


def run_dift(
    k: Kernel,
    inputs: RunInputs,
    cfg: DiftConfig,
    monitor: MonitorState | None = None,
    diags: list[Diagnostic] | None = None,
) -> SimulationReport:
    """Execute the kernel with tag propagation and live checkpoints.

    Fine mode tracks per operation; memory cells carry tags (a store
    writes the value tag, joined with the address tag under the union
    rule; a load joins cell and address tags under both rules). Coarse
    mode computes values as the baseline and assigns the boundary tag to
    every output and checkpoint observation. Output values always equal
    run_baseline's.
    """
    if cfg.tag_width != k.tag_width:
        raise WidthMismatch(
            f"config tag width {cfg.tag_width} does not match kernel {k.tag_width}"
        )
    if monitor is None:
        monitor = MonitorState.for_kernel(k)
    env, mems = _init_values(k, inputs, diags)
    tags, mem_tags = _init_tags(k, inputs, monitor)
    mem_decls = {m.id: m for m in k.memories}
    coarse = isinstance(cfg.mode, CoarseBoundary)
    rule = cfg.mode.rule if isinstance(cfg.mode, FineGrained) else None
    if coarse:
        bt = boundary_tag(
            [tags[i.id] for i in k.inputs],
            [t for m in k.memories for t in mem_tags[m.id]],
            width=k.tag_width,
        )

    cp_by_arg: dict[str, list] = {}
    for cp in k.checkpoints:
        cp_by_arg.setdefault(cp.arg, []).append(cp)

    observations: list[tuple[str, int]] = []
    halted = False
    steps = 0

    def fire(cp, step: int) -> bool:
        """Submit one checkpoint observation; True means halt now."""
        tag = bt if coarse else tags[cp.arg]
        exc = checkpoint(monitor, cp.id, cp.arg, DiftValue(env[cp.arg], tag), step)
        observations.append((cp.id, tag.bits))
        return exc is not None and cfg.on_exception == "halt"

    def observe(arg_id: str, step: int) -> bool:
        for cp in cp_by_arg.get(arg_id, ()):
            if fire(cp, step):
                return True
        return False

    # Checkpoints on inputs and constants observe before any node runs.
    for cp in k.checkpoints:
        if cp.arg in env and fire(cp, 0):
            halted = True
            break

    if not halted:
        for step, node in enumerate(k.nodes, start=1):
            try:
                if node.op is OpKind.LOAD:
                    mem = mem_decls[node.args[0]]
                    addr = env[node.args[1]]
                    i = _mem_index(mem, addr, node.id, step)
                    env[node.id] = mems[mem.id][i]
                    if not coarse:
                        tags[node.id] = taint.join(mem_tags[mem.id][i], tags[node.args[1]])
                elif node.op is OpKind.STORE:
                    mem = mem_decls[node.args[0]]
                    addr = env[node.args[1]]
                    i = _mem_index(mem, addr, node.id, step)
                    mems[mem.id][i] = make_bitvalue(mem.cell, to_int(env[node.args[2]]))
                    if not coarse:
                        cell_tag = tags[node.args[2]]
                        if rule is PropagationRule.UNION:
                            cell_tag = taint.join(cell_tag, tags[node.args[1]])
                        mem_tags[mem.id][i] = cell_tag
                elif coarse:
                    if node.op is OpKind.MUX:
                        chosen = node.args[1] if to_int(env[node.args[0]]) != 0 else node.args[2]
                        env[node.id] = make_bitvalue(node.ty, to_int(env[chosen]))
                    elif node.op in UNARY_OPS:
                        env[node.id] = eval_unop(node.op, env[node.args[0]], node.ty)
                    else:
                        env[node.id] = eval_binop(
                            node.op, env[node.args[0]], env[node.args[1]], node.ty
                        )
                else:
                    operands = [DiftValue(env[a], tags[a]) for a in node.args]
                    if node.op is OpKind.MUX:
                        dv = apply_mux(operands[0], operands[1], operands[2], node.ty, rule)
                    elif node.op in UNARY_OPS:
                        dv = apply_unop(node.op, operands[0], node.ty, rule)
                    else:
                        dv = apply_binop(node.op, operands[0], operands[1], node.ty, rule)
                    env[node.id] = dv.value
                    tags[node.id] = dv.tag
            except EvalError as e:
                raise _locate(e, node.id, step)
            steps = step
            if node.op is not OpKind.STORE and observe(node.id, step):
                halted = True
                break

    if halted:
        outputs: dict[str, tuple[int, int]] = {}
    else:
        outputs = {
            o.id: (env[o.source].bits, (bt if coarse else tags[o.source]).bits)
            for o in k.outputs
        }
    return SimulationReport(
        outputs=outputs,
        exceptions=tuple(monitor.exceptions),
        irq=monitor.irq,
        steps_executed=steps,
        mode="coarse" if coarse else "fine",
        rule=None if rule is None else rule.value,
        checkpoint_tags=tuple(observations),
        halted=halted,
    )


# ---------------------------------------------------------------------------
# Differential checking
# ---------------------------------------------------------------------------


def sample_inputs(k: Kernel, rng: random.Random) -> RunInputs:
    """Uniform random values, tags, and memory contents for one run."""
    values = {i.id: rng.randrange(1 << i.ty.width) for i in k.inputs}
    tags = {i.id: rng.randrange(1 << k.tag_width) for i in k.inputs}
    memory = {
        m.id: [rng.randrange(1 << m.cell.width) for _ in range(m.size)]
        for m in k.memories
    }
    return RunInputs(values, tags, memory)


@dataclass(frozen=True)
class Mismatch:
    sample: int
    kind: str  # "value" | "error" | "opt_value" | "opt_tag" | "opt_exceptions"
    detail: str
    inputs: RunInputs


@dataclass(frozen=True)
class ConsistencyReport:
    kernel: str
    mode: str
    rule: str | None
    samples: int
    mismatches: tuple[Mismatch, ...]

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def summary(self) -> str:
        return (
            f"check {self.kernel} mode={self.mode} rule={self.rule or '-'}: "
            f"samples={self.samples} mismatches={len(self.mismatches)}"
        )


def _error_sig(e: EvalError) -> tuple[str, str | None]:
    return (type(e).__name__, e.node_id)


def _exception_seq(rep: SimulationReport) -> list[tuple[str, str, int, str]]:
    # Step indices may shift across passes; the sequence is what must hold.
    return [(e.checkpoint_id, e.node_id, e.tag_bits, e.policy_name) for e in rep.exceptions]


def check_consistency(k: Kernel, cfg: DiftConfig, samples: int, seed: int) -> ConsistencyReport:
    """Seeded differential run: baseline vs tracked output values, plus
    optimized (const_fold + dead_code_elim) vs unoptimized tracked runs
    compared on values, tags, and the exception sequence. A pair that
    fails with the same error on the same node is consistent."""
    rng = random.Random(seed)
    opt = dead_code_elim(const_fold(k))
    mismatches: list[Mismatch] = []
    for i in range(samples):
        ri = sample_inputs(k, rng)
        base_err = dift_err = opt_err = None
        base = rep = rep_opt = None
        try:
            base = run_baseline(k, ri)
        except EvalError as e:
            base_err = _error_sig(e)
        try:
            rep = run_dift(k, ri, cfg)
        except EvalError as e:
            dift_err = _error_sig(e)
        try:
            rep_opt = run_dift(opt, ri, cfg)
        except EvalError as e:
            opt_err = _error_sig(e)

        if base_err or dift_err:
            if base_err != dift_err:
                mismatches.append(
                    Mismatch(i, "error", f"baseline {base_err} vs dift {dift_err}", ri)
                )
        elif not rep.halted:
            for oid, value in base.items():
                got = rep.outputs[oid][0]
                if got != value:
                    mismatches.append(
                        Mismatch(i, "value", f"output {oid}: baseline {value}, dift {got}", ri)
                    )

        if dift_err or opt_err:
            if dift_err != opt_err:
                mismatches.append(
                    Mismatch(i, "error", f"unoptimized {dift_err} vs optimized {opt_err}", ri)
                )
            continue
        if _exception_seq(rep) != _exception_seq(rep_opt):
            mismatches.append(
                Mismatch(
                    i,
                    "opt_exceptions",
                    f"unoptimized {_exception_seq(rep)} vs optimized {_exception_seq(rep_opt)}",
                    ri,
                )
            )
        if rep.halted or rep_opt.halted:
            if rep.halted != rep_opt.halted:
                mismatches.append(Mismatch(i, "opt_value", "halt state differs", ri))
            continue
        for oid, (value, tag) in rep.outputs.items():
            ovalue, otag = rep_opt.outputs[oid]
            if value != ovalue:
                mismatches.append(
                    Mismatch(i, "opt_value", f"output {oid}: {value} vs {ovalue}", ri)
                )
            if tag != otag:
                mismatches.append(
                    Mismatch(i, "opt_tag", f"output {oid} tag: {tag} vs {otag}", ri)
                )
    return ConsistencyReport(
        kernel=k.name,
        mode="coarse" if isinstance(cfg.mode, CoarseBoundary) else "fine",
        rule=None if cfg.rule is None else cfg.rule.value,
        samples=samples,
        mismatches=tuple(mismatches),
    )


# ---------------------------------------------------------------------------
# Oracles and property fuzzing
# ---------------------------------------------------------------------------


def independence_oracle(
    kind: OpKind,
    operand_types: list[BitType],
    tainted_positions: set[int],
    untainted_values: dict[int, int],
    result_ty: BitType | None = None,
) -> bool:
    """True iff the op's value result is constant while the tainted
    positions range over all their possible values. Ground truth for
    taint-kill soundness; widths are capped so enumeration stays exact."""
    arity = op_arity(kind)
    if len(operand_types) != arity:
        raise WidthMismatch(f"{kind.value} takes {arity} operand types")
    if any(t.width > _ORACLE_MAX_WIDTH for t in operand_types):
        raise WidthTooLarge(f"operand widths must be <= {_ORACLE_MAX_WIDTH}")
    if set(untainted_values) | set(tainted_positions) != set(range(arity)):
        raise WidthMismatch("tainted positions and untainted values must cover all operands")
    if result_ty is None:
        result_ty = BitType(1) if kind in COMPARE_OPS else operand_types[0]
    order = sorted(tainted_positions)
    fixed = {
        pos: make_bitvalue(operand_types[pos], raw) for pos, raw in untainted_values.items()
    }
    outcomes: set = set()
    for combo in itertools.product(*(range(1 << operand_types[p].width) for p in order)):
        operands = [
            fixed[p] if p in fixed else BitValue(operand_types[p], combo[order.index(p)])
            for p in range(arity)
        ]
        try:
            result = _apply_value_op(kind, operands, result_ty).bits
        except EvalError as e:
            result = ("error", type(e).__name__)
        outcomes.add(result)
        if len(outcomes) > 1:
            return False
    return True


def _apply_value_op(kind: OpKind, operands: list[BitValue], result_ty: BitType) -> BitValue:
    if kind in BINARY_OPS:
        return eval_binop(kind, operands[0], operands[1], result_ty)
    if kind in UNARY_OPS:
        return eval_unop(kind, operands[0], result_ty)
    chosen = operands[1] if to_int(operands[0]) != 0 else operands[2]
    return make_bitvalue(result_ty, to_int(chosen))


@dataclass(frozen=True)
class Counterexample:
    property: str
    trial: int
    inputs: RunInputs
    detail: str


@dataclass(frozen=True)
class PropertyReport:
    kernel: str
    trials: int
    counterexamples: tuple[Counterexample, ...]

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def summary(self) -> str:
        return (
            f"fuzz {self.kernel}: trials={self.trials} "
            f"counterexamples={len(self.counterexamples)}"
        )


def _zero_tag_kernel(k: Kernel) -> Kernel:
    return replace(
        k,
        memories=tuple(replace(m, init_tags=()) for m in k.memories),
    )


def fuzz_properties(k: Kernel, trials: int, seed: int) -> PropertyReport:
    """Seeded random trials of the four tracking properties: untainted
    closure, union-rule monotonicity, precise-subset-of-union, and
    fine-subset-of-coarse. Counterexamples carry the full inputs."""
    rng = random.Random(seed)
    tw = k.tag_width
    union_cfg = DiftConfig(tw, FineGrained(PropagationRule.UNION))
    precise_cfg = DiftConfig(tw, FineGrained(PropagationRule.PRECISE))
    coarse_cfg = DiftConfig(tw, CoarseBoundary())
    zeroed = _zero_tag_kernel(k)
    cexs: list[Counterexample] = []

    for trial in range(trials):
        ri = sample_inputs(k, rng)

        zero_ri = RunInputs(dict(ri.values), {i.id: 0 for i in k.inputs}, dict(ri.memory))
        for cfg in (union_cfg, precise_cfg, coarse_cfg):
            rep = run_dift(zeroed, zero_ri, cfg)
            bad = [oid for oid, (_, t) in rep.outputs.items() if t != 0]
            if bad or rep.exceptions:
                cexs.append(
                    Counterexample(
                        "closure",
                        trial,
                        zero_ri,
                        f"mode={rep.mode} rule={rep.rule} tainted outputs={bad} "
                        f"exceptions={len(rep.exceptions)}",
                    )
                )

        rep_u = run_dift(k, ri, union_cfg)
        rep_p = run_dift(k, ri, precise_cfg)
        rep_c = run_dift(k, ri, coarse_cfg)

        for oid, (_, t_p) in rep_p.outputs.items():
            t_u = rep_u.outputs[oid][1]
            if t_p & ~t_u:
                cexs.append(
                    Counterexample(
                        "precise_subset",
                        trial,
                        ri,
                        f"output {oid}: precise {t_p:#x} not within union {t_u:#x}",
                    )
                )
        for rep in (rep_u, rep_p):
            for oid, (_, t) in rep.outputs.items():
                t_c = rep_c.outputs[oid][1]
                if t & ~t_c:
                    cexs.append(
                        Counterexample(
                            "coarse_subset",
                            trial,
                            ri,
                            f"output {oid}: fine({rep.rule}) {t:#x} not within boundary {t_c:#x}",
                        )
                    )

        if k.inputs:
            picked = rng.choice(k.inputs).id
            extra = rng.randrange(1 << tw)
            wide_tags = dict(ri.tags)
            wide_tags[picked] = wide_tags[picked] | extra
            wide_ri = RunInputs(dict(ri.values), wide_tags, dict(ri.memory))
            rep_w = run_dift(k, wide_ri, union_cfg)
            for oid, (_, base_tag) in rep_u.outputs.items():
                wide_tag = rep_w.outputs[oid][1]
                if base_tag & ~wide_tag:
                    cexs.append(
                        Counterexample(
                            "monotonicity",
                            trial,
                            wide_ri,
                            f"output {oid}: widening {picked} shrank the tag "
                            f"{base_tag:#x} -> {wide_tag:#x}",
                        )
                    )
    return PropertyReport(kernel=k.name, trials=trials, counterexamples=tuple(cexs))
