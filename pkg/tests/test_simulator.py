import json
import random

import pytest

import diftsim.taint
from conftest import load_inputs
from diftsim import (
    BitType,
    CoarseBoundary,
    DiftConfig,
    FineGrained,
    MonitorState,
    OpKind,
    OutOfBoundsAddress,
    PropagationRule,
    REG_TAG_IN,
    RunInputs,
    Tag,
    WidthTooLarge,
    boundary_tag,
    check_consistency,
    fuzz_properties,
    independence_oracle,
    parse_inputs,
    reg_write,
    run_baseline,
    run_dift,
)

UNION = PropagationRule.UNION
PRECISE = PropagationRule.PRECISE


def fine(tag_width, rule=UNION, on_exception="record"):
    return DiftConfig(tag_width, FineGrained(rule), on_exception)


def coarse(tag_width):
    return DiftConfig(tag_width, CoarseBoundary())


def tiny_add_kernel():
    from diftsim import parse_kernel

    doc = {
        "name": "tiny",
        "tag_width": 2,
        "inputs": [
            {"id": "a", "width": 4, "signed": False},
            {"id": "b", "width": 4, "signed": False},
        ],
        "nodes": [{"id": "sum", "op": "add", "args": ["a", "b"], "width": 4, "signed": False}],
        "outputs": [{"id": "out", "source": "sum"}],
    }
    kernel, diags = parse_kernel(json.dumps(doc))
    assert kernel is not None, diags
    return kernel


def mem_kernel(addr_tagged_load=False, size=4):
    from diftsim import parse_kernel

    doc = {
        "name": "memdemo",
        "tag_width": 2,
        "inputs": [
            {"id": "addr", "width": 2, "signed": False},
            {"id": "v", "width": 8, "signed": False},
        ],
        "constants": [{"id": "two", "width": 2, "signed": False, "value": 2}],
        "memories": [{"id": "m", "size": size, "width": 8, "signed": False}],
        "nodes": [
            {"id": "st", "op": "store", "args": ["m", "addr", "v"]},
            {
                "id": "ld",
                "op": "load",
                "args": ["m", "addr" if addr_tagged_load else "two"],
                "width": 8,
                "signed": False,
            },
        ],
        "outputs": [{"id": "out", "source": "ld"}],
    }
    kernel, diags = parse_kernel(json.dumps(doc))
    assert kernel is not None, diags
    return kernel


def test_run_baseline_add():
    kernel = tiny_add_kernel()
    got = run_baseline(kernel, RunInputs(values={"a": 9, "b": 12}))
    assert got == {"out": 5}


def test_run_baseline_fir4_committed_vector(fir4):
    inputs = load_inputs("fir4_inputs.json")
    # 10*2 + (-5)*(-3) + 3*4 + 7*1 = 54, by hand
    assert run_baseline(fir4, inputs) == {"y_out": 54}


def test_missing_input_defaults_to_zero_with_warning():
    kernel = tiny_add_kernel()
    diags = []
    got = run_baseline(kernel, RunInputs(values={"a": 3}), diags)
    assert got == {"out": 3}
    assert any(d.severity == "warning" and d.location == "b" for d in diags)


def test_out_of_bounds_store_names_node_and_step():
    kernel = mem_kernel(size=3)  # addresses go up to 3, memory stops at 2
    with pytest.raises(OutOfBoundsAddress) as exc_info:
        run_baseline(kernel, RunInputs(values={"addr": 3, "v": 1}))
    assert exc_info.value.node_id == "st"
    assert exc_info.value.step == 1
    with pytest.raises(OutOfBoundsAddress):
        run_dift(kernel, RunInputs(values={"addr": 3, "v": 1}), fine(2))


def test_memory_override_too_long_rejected():
    kernel = mem_kernel()
    with pytest.raises(OutOfBoundsAddress):
        run_baseline(kernel, RunInputs(values={"addr": 0, "v": 1}, memory={"m": [0] * 5}))


def test_run_dift_union_tag_flows():
    kernel = tiny_add_kernel()
    rep = run_dift(kernel, RunInputs(values={"a": 9, "b": 12}, tags={"a": 0b1}), fine(2))
    assert rep.outputs == {"out": (5, 0b1)}
    assert rep.exceptions == ()
    assert rep.irq is False


def test_store_load_tag_rules():
    # Tainted address, untainted value: union keeps the address taint in the
    # cell, precise stores only the value tag; the load then joins the
    # (untainted) constant address.
    kernel = mem_kernel()
    ri = RunInputs(values={"addr": 2, "v": 9}, tags={"addr": 0b1, "v": 0})
    union_rep = run_dift(kernel, ri, fine(2, UNION))
    precise_rep = run_dift(kernel, ri, fine(2, PRECISE))
    assert union_rep.outputs == {"out": (9, 0b1)}
    assert precise_rep.outputs == {"out": (9, 0)}
    # Tainted address on the load side joins under both rules.
    kernel2 = mem_kernel(addr_tagged_load=True)
    for rule in (UNION, PRECISE):
        rep = run_dift(kernel2, ri, fine(2, rule))
        assert rep.outputs["out"][1] & 0b1


def test_overflow_demo_hand_trace(overflow_demo):
    tainted = load_inputs("overflow_tainted.json")
    rep = run_dift(overflow_demo, tainted, fine(2))
    assert rep.outputs == {"stored": (93, 0), "slot": (4, 1)}
    assert len(rep.exceptions) == 1
    exc = rep.exceptions[0]
    assert (exc.checkpoint_id, exc.node_id, exc.tag_bits, exc.step) == ("cp_addr", "off", 1, 1)
    assert rep.irq is True

    clean = load_inputs("overflow_clean.json")
    rep = run_dift(overflow_demo, clean, fine(2))
    assert rep.exceptions == () and rep.irq is False


def test_dot8_rule_difference(dot8):
    inputs = load_inputs("dot8_inputs.json")
    union_rep = run_dift(dot8, inputs, fine(2, UNION))
    precise_rep = run_dift(dot8, inputs, fine(2, PRECISE))
    # vb[3] is 0 and untainted, so the precise rule kills va[3]'s taint.
    assert union_rep.outputs == {"out": (137, 1)}
    assert precise_rep.outputs == {"out": (137, 0)}
    assert len(union_rep.exceptions) == 1
    assert precise_rep.exceptions == ()


def test_coarse_mode_boundary_tags(fir4):
    inputs = load_inputs("fir4_inputs.json")
    rep = run_dift(fir4, inputs, coarse(4))
    expected = boundary_tag([Tag(4, inp.default_tag) for inp in fir4.inputs], width=4)
    assert rep.outputs["y_out"] == (54, expected.bits)
    assert rep.mode == "coarse" and rep.rule is None
    assert rep.checkpoint_tags == (("cp_y", expected.bits),)


def test_step_zero_checkpoint_on_input():
    from diftsim import parse_kernel

    doc = {
        "name": "watch_input",
        "tag_width": 2,
        "inputs": [{"id": "a", "width": 4, "signed": False}],
        "policies": [{"name": "any", "kind": "deny_if_any"}],
        "checkpoints": [{"id": "cp_a", "arg": "a", "policy": "any"}],
        "outputs": [{"id": "out", "source": "a"}],
    }
    kernel, _ = parse_kernel(json.dumps(doc))
    rep = run_dift(kernel, RunInputs(values={"a": 1}, tags={"a": 1}), fine(2))
    assert [(e.checkpoint_id, e.step) for e in rep.exceptions] == [("cp_a", 0)]


def test_reg_tag_in_overrides_default_tags(fir4):
    inputs = load_inputs("fir4_inputs.json")
    monitor = MonitorState.for_kernel(fir4)
    reg_write(monitor, REG_TAG_IN, 0b0100)
    rep = run_dift(fir4, inputs, fine(4), monitor=monitor)
    # every input tag becomes 0b0100; the masked policy (mask 0b0010) allows
    assert rep.outputs["y_out"][1] == 0b0100
    assert rep.exceptions == ()


def test_report_json_schema(overflow_demo):
    rep = run_dift(overflow_demo, load_inputs("overflow_tainted.json"), fine(2))
    doc = json.loads(rep.to_json())
    assert list(doc) == ["outputs", "exceptions", "irq", "steps", "mode", "rule"]
    assert doc["exceptions"][0] == {
        "checkpoint": "cp_addr",
        "node": "off",
        "tag": 1,
        "step": 1,
        "policy": "no_tainted_addr",
    }
    assert doc["mode"] == "fine" and doc["rule"] == "union"


def test_parse_inputs_rejects_unknown_keys():
    inputs, diags = parse_inputs('{"values": {}, "bogus": 1}')
    assert inputs is None and any("bogus" in d.message for d in diags)
    inputs, diags = parse_inputs('{"values": {"a": "x"}}')
    assert inputs is None
    inputs, diags = parse_inputs("{nope")
    assert inputs is None and diags[0].location.startswith("line ")


def test_check_consistency_fixtures(fir4, dot8, overflow_demo):
    for kernel in (fir4, dot8, overflow_demo):
        for cfg in (fine(kernel.tag_width), fine(kernel.tag_width, PRECISE), coarse(kernel.tag_width)):
            report = check_consistency(kernel, cfg, samples=100, seed=1)
            assert report.ok, report.mismatches[:3]


def test_check_consistency_deterministic(fir4):
    a = check_consistency(fir4, fine(4), samples=50, seed=9)
    b = check_consistency(fir4, fine(4), samples=50, seed=9)
    assert a == b


def test_independence_oracle():
    u4 = BitType(4)
    assert independence_oracle(OpKind.AND, [u4, u4], {0}, {1: 0}) is True
    assert independence_oracle(OpKind.ADD, [u4, u4], {0}, {1: 3}) is False
    assert independence_oracle(OpKind.OR, [u4, u4], {0}, {1: 15}) is True
    assert independence_oracle(OpKind.MUL, [u4, u4], {1}, {0: 0}) is True
    with pytest.raises(WidthTooLarge):
        independence_oracle(OpKind.ADD, [BitType(7), BitType(7)], {0}, {1: 3})


def test_fuzz_properties_pass_on_fixtures(fir4, dot8, overflow_demo):
    for kernel in (fir4, dot8, overflow_demo):
        report = fuzz_properties(kernel, trials=100, seed=2)
        assert report.ok, report.counterexamples[:3]


def test_fuzz_reproducible(fir4):
    assert fuzz_properties(fir4, 50, seed=4) == fuzz_properties(fir4, 50, seed=4)


def test_mutant_rule_caught_by_monotonicity(fir4, monkeypatch):
    # A broken propagation that drops joint label bits (xor instead of or)
    # must be flagged by the union-rule monotonicity property.
    def xor_propagate(rule, kind, operands):
        bits = 0
        for _, tag in operands:
            bits ^= tag.bits
        return Tag(operands[0][1].width, bits)

    monkeypatch.setattr(diftsim.taint, "propagate", xor_propagate)
    report = fuzz_properties(fir4, trials=200, seed=5)
    assert any(c.property == "monotonicity" for c in report.counterexamples)


def test_halted_run_reports_no_outputs(overflow_demo):
    rep = run_dift(
        overflow_demo,
        load_inputs("overflow_tainted.json"),
        fine(2, on_exception="halt"),
    )
    assert rep.halted and rep.outputs == {} and rep.steps_executed == 1
