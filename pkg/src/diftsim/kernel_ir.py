"""Straight-line dataflow kernels: file format, validation, compiler passes,
tracking instrumentation, and DOT export.

A kernel is an ordered list of SSA nodes over declared inputs, constants,
and memories, plus security policies, checkpoints, and named outputs. The
file format is a single JSON document; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

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
from .errors import DivisionByZero, InvalidType
from .policy_monitor import Policy, PolicyKind
from .taint import MAX_TAG_WIDTH, FineGrained, Tag
from .tainted import DiftConfig


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str  # id of the offending item, or "line N" for syntax errors
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


def has_errors(diags: list[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diags)


@dataclass(frozen=True)
class InputDecl:
    id: str
    ty: BitType
    default_tag: int = 0


@dataclass(frozen=True)
class ConstDecl:
    id: str
    value: BitValue


@dataclass(frozen=True)
class MemoryDecl:
    id: str
    size: int
    cell: BitType
    init: tuple[int, ...] = ()  # canonical cell bits, padded with zeros
    init_tags: tuple[int, ...] = ()


@dataclass(frozen=True)
class Node:
    id: str
    op: OpKind
    args: tuple[str, ...]
    ty: BitType | None = None  # absent for store


@dataclass(frozen=True)
class CheckpointDecl:
    id: str
    arg: str
    policy: str


@dataclass(frozen=True)
class OutputDecl:
    id: str
    source: str


@dataclass(frozen=True)
class Kernel:
    name: str
    tag_width: int
    inputs: tuple[InputDecl, ...] = ()
    constants: tuple[ConstDecl, ...] = ()
    memories: tuple[MemoryDecl, ...] = ()
    nodes: tuple[Node, ...] = ()
    checkpoints: tuple[CheckpointDecl, ...] = ()
    policies: tuple[Policy, ...] = ()
    outputs: tuple[OutputDecl, ...] = ()


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "name",
    "tag_width",
    "inputs",
    "constants",
    "memories",
    "nodes",
    "policies",
    "checkpoints",
    "outputs",
}
_ITEM_KEYS = {
    "inputs": {"id", "width", "signed", "default_tag"},
    "constants": {"id", "width", "signed", "value"},
    "memories": {"id", "size", "width", "signed", "init", "init_tags"},
    "nodes": {"id", "op", "args", "width", "signed"},
    "policies": {"name", "kind", "mask"},
    "checkpoints": {"id", "arg", "policy"},
    "outputs": {"id", "source"},
}


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _err(diags: list[Diagnostic], loc: str, msg: str) -> None:
    diags.append(Diagnostic("error", loc, msg))


def _get_str(item: dict, key: str, loc: str, diags: list[Diagnostic]) -> str | None:
    v = item.get(key)
    if not isinstance(v, str) or not v:
        _err(diags, loc, f"{key} must be a non-empty string")
        return None
    return v


def _get_int(item: dict, key: str, loc: str, diags: list[Diagnostic], default=None):
    if key not in item:
        if default is not None:
            return default
        _err(diags, loc, f"missing required key {key}")
        return None
    v = item[key]
    if not _is_int(v):
        _err(diags, loc, f"{key} must be an integer")
        return None
    return v


def _get_type(item: dict, loc: str, diags: list[Diagnostic]) -> BitType | None:
    width = _get_int(item, "width", loc, diags)
    signed = item.get("signed", False)
    if not isinstance(signed, bool):
        _err(diags, loc, "signed must be a boolean")
        return None
    if width is None:
        return None
    try:
        return BitType(width, signed)
    except InvalidType as e:
        _err(diags, loc, str(e))
        return None


def _check_section(doc: dict, key: str, diags: list[Diagnostic]) -> list[dict]:
    raw = doc.get(key, [])
    if not isinstance(raw, list):
        _err(diags, key, f"{key} must be a list")
        return []
    items = []
    for i, item in enumerate(raw):
        loc = f"{key}[{i}]"
        if not isinstance(item, dict):
            _err(diags, loc, "entry must be an object")
            continue
        unknown = set(item) - _ITEM_KEYS[key]
        if unknown:
            _err(diags, loc, f"unknown keys: {', '.join(sorted(unknown))}")
            continue
        items.append(item)
    return items


def parse_kernel(text: str) -> tuple[Kernel | None, list[Diagnostic]]:
    """Parse and validate a kernel document.

    Returns (kernel, diagnostics); the kernel is None whenever any
    error-severity diagnostic was produced.
    """
    diags: list[Diagnostic] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        _err(diags, f"line {e.lineno}", f"invalid JSON: {e.msg}")
        return None, diags
    if not isinstance(doc, dict):
        _err(diags, "kernel", "top-level document must be an object")
        return None, diags
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        _err(diags, "kernel", f"unknown keys: {', '.join(sorted(unknown))}")

    name = _get_str(doc, "name", "kernel", diags) or ""
    tag_width = _get_int(doc, "tag_width", "kernel", diags)
    if tag_width is None or not 1 <= tag_width <= MAX_TAG_WIDTH:
        _err(diags, "kernel", f"tag_width must be an integer in 1..{MAX_TAG_WIDTH}")
        return None, diags

    inputs = []
    for item in _check_section(doc, "inputs", diags):
        iid = _get_str(item, "id", "inputs", diags)
        ty = _get_type(item, f"input {iid}", diags)
        default_tag = _get_int(item, "default_tag", f"input {iid}", diags, default=0)
        if iid is None or ty is None or default_tag is None:
            continue
        inputs.append(InputDecl(iid, ty, default_tag))

    constants = []
    for item in _check_section(doc, "constants", diags):
        cid = _get_str(item, "id", "constants", diags)
        ty = _get_type(item, f"constant {cid}", diags)
        value = _get_int(item, "value", f"constant {cid}", diags)
        if cid is None or ty is None or value is None:
            continue
        constants.append(ConstDecl(cid, make_bitvalue(ty, value)))

    memories = []
    for item in _check_section(doc, "memories", diags):
        mid = _get_str(item, "id", "memories", diags)
        loc = f"memory {mid}"
        size = _get_int(item, "size", loc, diags)
        ty = _get_type(item, loc, diags)
        if mid is None or size is None or ty is None:
            continue
        init_raw = item.get("init", [])
        tags_raw = item.get("init_tags", [])
        if not isinstance(init_raw, list) or not all(_is_int(x) for x in init_raw):
            _err(diags, loc, "init must be a list of integers")
            continue
        if not isinstance(tags_raw, list) or not all(_is_int(x) for x in tags_raw):
            _err(diags, loc, "init_tags must be a list of integers")
            continue
        init = tuple(make_bitvalue(ty, x).bits for x in init_raw)
        memories.append(MemoryDecl(mid, size, ty, init, tuple(tags_raw)))

    nodes = []
    for item in _check_section(doc, "nodes", diags):
        nid = _get_str(item, "id", "nodes", diags)
        loc = f"node {nid}"
        op_raw = item.get("op")
        try:
            op = OpKind(op_raw)
        except ValueError:
            _err(diags, loc, f"unknown op {op_raw!r}")
            continue
        args = item.get("args")
        if not isinstance(args, list) or not all(isinstance(a, str) for a in args):
            _err(diags, loc, "args must be a list of ids")
            continue
        if op is OpKind.STORE:
            if "width" in item or "signed" in item:
                _err(diags, loc, "store nodes must not declare a result type")
                continue
            ty = None
        else:
            ty = _get_type(item, loc, diags)
            if ty is None:
                continue
        if nid is None:
            continue
        nodes.append(Node(nid, op, tuple(args), ty))

    policies = []
    for item in _check_section(doc, "policies", diags):
        pname = _get_str(item, "name", "policies", diags)
        loc = f"policy {pname}"
        kind_raw = item.get("kind")
        try:
            kind = PolicyKind(kind_raw)
        except ValueError:
            _err(diags, loc, f"unknown policy kind {kind_raw!r}")
            continue
        mask = None
        if "mask" in item:
            bits = _get_int(item, "mask", loc, diags)
            if bits is None:
                continue
            if not 0 <= bits < (1 << tag_width):
                _err(diags, loc, f"mask {bits} out of range for tag width {tag_width}")
                continue
            mask = Tag(tag_width, bits)
        if pname is None:
            continue
        policies.append(Policy(pname, kind, mask))

    checkpoints = []
    for item in _check_section(doc, "checkpoints", diags):
        cid = _get_str(item, "id", "checkpoints", diags)
        arg = _get_str(item, "arg", f"checkpoint {cid}", diags)
        policy = _get_str(item, "policy", f"checkpoint {cid}", diags)
        if cid is None or arg is None or policy is None:
            continue
        checkpoints.append(CheckpointDecl(cid, arg, policy))

    outputs = []
    for item in _check_section(doc, "outputs", diags):
        oid = _get_str(item, "id", "outputs", diags)
        source = _get_str(item, "source", f"output {oid}", diags)
        if oid is None or source is None:
            continue
        outputs.append(OutputDecl(oid, source))

    if has_errors(diags):
        return None, diags
    kernel = Kernel(
        name=name,
        tag_width=tag_width,
        inputs=tuple(inputs),
        constants=tuple(constants),
        memories=tuple(memories),
        nodes=tuple(nodes),
        checkpoints=tuple(checkpoints),
        policies=tuple(policies),
        outputs=tuple(outputs),
    )
    diags.extend(validate(kernel))
    if has_errors(diags):
        return None, diags
    return kernel, diags


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(k: Kernel) -> list[Diagnostic]:
    """Check every kernel invariant; zero errors is a precondition of the
    passes and of simulation."""
    diags: list[Diagnostic] = []
    if not 1 <= k.tag_width <= MAX_TAG_WIDTH:
        _err(diags, "kernel", f"tag_width must be in 1..{MAX_TAG_WIDTH}")
        return diags
    tag_limit = 1 << k.tag_width

    seen: set[str] = set()

    def declare(item_id: str, what: str) -> None:
        if item_id in seen:
            _err(diags, item_id, f"duplicate id ({what})")
        seen.add(item_id)

    values: dict[str, BitType] = {}
    mems: dict[str, MemoryDecl] = {}

    for inp in k.inputs:
        declare(inp.id, "input")
        if not 0 <= inp.default_tag < tag_limit:
            _err(diags, inp.id, f"default_tag {inp.default_tag} out of range")
        values[inp.id] = inp.ty
    for c in k.constants:
        declare(c.id, "constant")
        values[c.id] = c.value.ty
    for m in k.memories:
        declare(m.id, "memory")
        if m.size < 1:
            _err(diags, m.id, "memory size must be at least 1")
        if len(m.init) > m.size:
            _err(diags, m.id, f"init has {len(m.init)} values for {m.size} cells")
        if len(m.init_tags) > m.size:
            _err(diags, m.id, f"init_tags has {len(m.init_tags)} values for {m.size} cells")
        if any(not 0 <= t < tag_limit for t in m.init_tags):
            _err(diags, m.id, "init_tags contains a tag out of range")
        mems[m.id] = m

    policy_names: set[str] = set()
    for p in k.policies:
        if p.name in policy_names:
            _err(diags, p.name, "duplicate policy name")
        policy_names.add(p.name)
        if p.kind is PolicyKind.DENY_IF_MASK:
            if p.mask is None:
                _err(diags, p.name, "deny_if_mask requires a mask")
            elif p.mask.width != k.tag_width:
                _err(diags, p.name, "mask width does not match kernel tag width")
        elif p.mask is not None:
            _err(diags, p.name, f"{p.kind.value} does not take a mask")

    def check_value_arg(node_id: str, arg: str) -> None:
        if arg not in values:
            if arg in mems:
                _err(diags, node_id, f"argument {arg} is a memory, not a value")
            else:
                _err(diags, node_id, f"argument {arg} is not defined yet")

    for node in k.nodes:
        declare(node.id, "node")
        if len(node.args) != op_arity(node.op):
            _err(
                diags,
                node.id,
                f"{node.op.value} takes {op_arity(node.op)} args, got {len(node.args)}",
            )
            continue
        if node.op is OpKind.LOAD:
            mem = mems.get(node.args[0])
            if mem is None:
                _err(diags, node.id, f"load target {node.args[0]} is not a memory")
            check_value_arg(node.id, node.args[1])
            if node.ty is None:
                _err(diags, node.id, "load must declare a result type")
            elif mem is not None and node.ty != mem.cell:
                _err(
                    diags,
                    node.id,
                    f"load result type {node.ty} does not match cell type {mem.cell}",
                )
        elif node.op is OpKind.STORE:
            if node.args[0] not in mems:
                _err(diags, node.id, f"store target {node.args[0]} is not a memory")
            check_value_arg(node.id, node.args[1])
            check_value_arg(node.id, node.args[2])
            if node.ty is not None:
                _err(diags, node.id, "store has no result type")
        else:
            for arg in node.args:
                check_value_arg(node.id, arg)
            if node.ty is None:
                _err(diags, node.id, "node must declare a result type")
            elif node.op in COMPARE_OPS and (node.ty.width != 1 or node.ty.signed):
                _err(diags, node.id, "comparison result type must be u1")
        if node.op is not OpKind.STORE and node.ty is not None:
            values[node.id] = node.ty

    for cp in k.checkpoints:
        declare(cp.id, "checkpoint")
        if cp.arg not in values:
            _err(diags, cp.id, f"checkpoint argument {cp.arg} is not a value id")
        if cp.policy not in policy_names:
            _err(diags, cp.id, f"checkpoint names unknown policy {cp.policy}")

    for out in k.outputs:
        declare(out.id, "output")
        if out.source not in values:
            _err(diags, out.id, f"output source {out.source} is not a value id")

    return diags


# ---------------------------------------------------------------------------
# Passes
# ---------------------------------------------------------------------------


def const_fold(k: Kernel, diags: list[Diagnostic] | None = None) -> Kernel:
    """Replace nodes whose arguments are all constants with new constants.

    The folded constant keeps the node's id, so checkpoint arguments and
    output sources keep resolving. Division by zero is reported as a
    warning and the node left unfolded.
    """
    consts: dict[str, BitValue] = {c.id: c.value for c in k.constants}
    new_consts = list(k.constants)
    kept: list[Node] = []
    for node in k.nodes:
        if node.op in (OpKind.LOAD, OpKind.STORE) or not all(a in consts for a in node.args):
            kept.append(node)
            continue
        try:
            value = _eval_const_node(node, consts)
        except DivisionByZero:
            if diags is not None:
                diags.append(
                    Diagnostic("warning", node.id, "division by zero; node not folded")
                )
            kept.append(node)
            continue
        new_consts.append(ConstDecl(node.id, value))
        consts[node.id] = value
    return replace(k, constants=tuple(new_consts), nodes=tuple(kept))


def _eval_const_node(node: Node, consts: dict[str, BitValue]) -> BitValue:
    assert node.ty is not None
    if node.op in BINARY_OPS:
        return eval_binop(node.op, consts[node.args[0]], consts[node.args[1]], node.ty)
    if node.op in UNARY_OPS:
        return eval_unop(node.op, consts[node.args[0]], node.ty)
    # mux over constants
    chosen = node.args[1] if to_int(consts[node.args[0]]) != 0 else node.args[2]
    return make_bitvalue(node.ty, to_int(consts[chosen]))


def dead_code_elim(k: Kernel) -> Kernel:
    """Drop nodes that no output, checkpoint, or store transitively needs.

    Checkpoints, store nodes, and memories are never removed; removing a
    checkpoint would silently weaken the security instrumentation.
    """
    live: set[str] = {o.source for o in k.outputs} | {cp.arg for cp in k.checkpoints}
    kept_rev: list[Node] = []
    for node in reversed(k.nodes):
        if node.op is OpKind.STORE or node.id in live:
            kept_rev.append(node)
            live.update(node.args)
    return replace(k, nodes=tuple(reversed(kept_rev)))


# ---------------------------------------------------------------------------
# Instrumentation and DOT export
# ---------------------------------------------------------------------------

_VALUE_KINDS = frozenset({"input", "const", "memory", "op", "output"})


@dataclass(frozen=True)
class GraphNode:
    id: str
    kind: str
    label: str


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    kind: str  # "value" | "tag"
    label: str = ""


@dataclass(frozen=True)
class InstrumentedGraph:
    """A kernel's value graph plus tag wires, per-op propagation nodes,
    and one monitor node fed by the checkpoints' tag wires."""

    name: str
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]
    monitor_id: str

    def value_view(self) -> tuple[tuple[GraphNode, ...], tuple[GraphEdge, ...]]:
        """The value sub-graph, with tag and monitor structure stripped."""
        return (
            tuple(n for n in self.nodes if n.kind in _VALUE_KINDS),
            tuple(e for e in self.edges if e.kind == "value"),
        )

    def monitor_inputs(self) -> tuple[GraphEdge, ...]:
        return tuple(e for e in self.edges if e.dst == self.monitor_id)


def kernel_value_graph(k: Kernel) -> tuple[tuple[GraphNode, ...], tuple[GraphEdge, ...]]:
    """The kernel's value nodes and edges in declaration order."""
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    for inp in k.inputs:
        nodes.append(GraphNode(f"v:{inp.id}", "input", f"{inp.id} : {inp.ty}"))
    for c in k.constants:
        nodes.append(GraphNode(f"v:{c.id}", "const", f"{c.id} = {to_int(c.value)} : {c.value.ty}"))
    for m in k.memories:
        nodes.append(GraphNode(f"v:{m.id}", "memory", f"{m.id}[{m.size}] : {m.cell}"))
    for n in k.nodes:
        if n.op is OpKind.STORE:
            nodes.append(GraphNode(f"v:{n.id}", "op", f"{n.id}: store"))
        else:
            nodes.append(GraphNode(f"v:{n.id}", "op", f"{n.id} = {n.op.value} : {n.ty}"))
        for a in n.args:
            edges.append(GraphEdge(f"v:{a}", f"v:{n.id}", "value"))
        if n.op is OpKind.STORE:
            edges.append(GraphEdge(f"v:{n.id}", f"v:{n.args[0]}", "value"))
    for o in k.outputs:
        nodes.append(GraphNode(f"v:{o.id}", "output", o.id))
        edges.append(GraphEdge(f"v:{o.source}", f"v:{o.id}", "value"))
    return tuple(nodes), tuple(edges)


def instrument(k: Kernel, cfg: DiftConfig) -> InstrumentedGraph:
    """Add a tag wire per value wire, a propagation node per op node, and
    one monitor consuming every checkpoint's tag wire; the value sub-graph
    is untouched."""
    vnodes, vedges = kernel_value_graph(k)
    rule_label = cfg.mode.rule.value if isinstance(cfg.mode, FineGrained) else "boundary"
    tnodes: list[GraphNode] = []
    tedges: list[GraphEdge] = []
    for inp in k.inputs:
        tnodes.append(GraphNode(f"t:{inp.id}", "tag", f"{inp.id}.tag = {inp.default_tag}"))
    for c in k.constants:
        tnodes.append(GraphNode(f"t:{c.id}", "tag", f"{c.id}.tag = 0"))
    for m in k.memories:
        tnodes.append(GraphNode(f"t:{m.id}", "tag", f"{m.id}.tags"))
    for n in k.nodes:
        tnodes.append(GraphNode(f"t:{n.id}", "tagop", f"{n.id}.tag = {rule_label}"))
        for a in n.args:
            tedges.append(GraphEdge(f"t:{a}", f"t:{n.id}", "tag"))
        if n.op is OpKind.STORE:
            tedges.append(GraphEdge(f"t:{n.id}", f"t:{n.args[0]}", "tag"))
    for o in k.outputs:
        tedges.append(GraphEdge(f"t:{o.source}", f"v:{o.id}", "tag"))
    monitor = GraphNode("monitor:0", "monitor", "monitor")
    for cp in k.checkpoints:
        tedges.append(
            GraphEdge(f"t:{cp.arg}", "monitor:0", "tag", label=f"{cp.id}: {cp.policy}")
        )
    return InstrumentedGraph(
        name=k.name,
        nodes=vnodes + tuple(tnodes) + (monitor,),
        edges=vedges + tuple(tedges),
        monitor_id="monitor:0",
    )


_DOT_STYLES = {
    "input": "shape=ellipse",
    "const": "shape=box",
    "memory": "shape=box3d",
    "op": "shape=box, style=rounded",
    "output": "shape=ellipse, style=bold",
    "checkpoint": "shape=diamond",
    "tag": 'shape=box, style="rounded,dashed", color=gray40, fontcolor=gray40',
    "tagop": 'shape=box, style="rounded,dashed", color=gray40, fontcolor=gray40',
    "monitor": "shape=box, peripheries=2",
}


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_dot(g: Kernel | InstrumentedGraph) -> str:
    """Deterministic DOT rendering: value edges solid, tag edges dashed,
    monitor double-outlined. Identical input gives byte-identical output."""
    if isinstance(g, Kernel):
        name = g.name
        nodes, edges = kernel_value_graph(g)
        extra_nodes = []
        extra_edges = []
        for cp in g.checkpoints:
            extra_nodes.append(GraphNode(f"c:{cp.id}", "checkpoint", f"{cp.id}: {cp.policy}"))
            extra_edges.append(GraphEdge(f"v:{cp.arg}", f"c:{cp.id}", "tag"))
        nodes = nodes + tuple(extra_nodes)
        edges = edges + tuple(extra_edges)
    else:
        name = g.name
        nodes, edges = g.nodes, g.edges
    lines = [
        f"digraph {_quote(name)} {{",
        "  rankdir=LR;",
        "  node [fontname=\"Helvetica\", fontsize=10];",
    ]
    for n in nodes:
        lines.append(f"  {_quote(n.id)} [{_DOT_STYLES[n.kind]}, label={_quote(n.label)}];")
    for e in edges:
        attrs = []
        if e.kind == "tag":
            attrs.append("style=dashed, color=gray40")
        if e.label:
            attrs.append(f"label={_quote(e.label)}, fontsize=9")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"  {_quote(e.src)} -> {_quote(e.dst)}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"
