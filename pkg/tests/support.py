"""Scripted design backends shared by tests and the fixture recorder.

A playbook holds authored responses for one design: the hierarchy JSON,
per-module Verilog, testbenches, and top-level assemblies. The responder
routes each request on the pipeline's own prompt headers, so recording a
session against a playbook yields a replayable fixture file.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from hivegen.dse import DSE_SYSTEM_PROMPT, SIMPLE_SYSTEM_PROMPT
from hivegen.llm import ChatRequest
from hivegen.orchestrator import MODULE_SYSTEM_PROMPT, TESTBENCH_SYSTEM_PROMPT

MUX64_PROMPT_TEXT = (
    "Design a 64-to-1 single-bit multiplexer named mux_64, built hierarchically"
    " from 4-to-1 multiplexers (mux_4), which are themselves built from 2-to-1"
    " multiplexers (mux_2). 64 data inputs, a 6-bit select, one output y."
)

FIG3_PROMPT_TEXT = (
    "Design a grid processing element GPE_4 with a 4-bit data input, a 2-bit"
    " select, and one output, with a 4-to-1 multiplexer module mux_4 available"
    " as a building block."
)

MUX_2_SOURCE = """\
module mux_2 (input a, input b, input sel, output y);
  assign y = sel ? b : a;
endmodule"""

MUX_4_STRUCTURAL_SOURCE = """\
module mux_4 (input [3:0] d, input [1:0] sel, output y);
  wire w0, w1;
  mux_2 m0 (.a(d[0]), .b(d[1]), .sel(sel[0]), .y(w0));
  mux_2 m1 (.a(d[2]), .b(d[3]), .sel(sel[0]), .y(w1));
  mux_2 m2 (.a(w0), .b(w1), .sel(sel[1]), .y(y));
endmodule"""

MUX_4_BEHAVIORAL_SOURCE = """\
module mux_4 (input [3:0] d, input [1:0] sel, output y);
  assign y = d[sel];
endmodule"""


def _mux64_source() -> str:
    lines = [
        "module mux_64 (input [63:0] d, input [5:0] sel, output y);",
        "  wire [15:0] l1;",
        "  wire [3:0] l2;",
    ]
    for i in range(16):
        lines.append(
            f"  mux_4 m{i} (.d(d[{4 * i + 3}:{4 * i}]), .sel(sel[1:0]), .y(l1[{i}]));"
        )
    for j in range(4):
        lines.append(
            f"  mux_4 m{16 + j} (.d(l1[{4 * j + 3}:{4 * j}]), .sel(sel[3:2]), .y(l2[{j}]));"
        )
    lines.append("  mux_4 m20 (.d(l2), .sel(sel[5:4]), .y(y));")
    lines.append("endmodule")
    return "\n".join(lines)


MUX_64_SOURCE = _mux64_source()

MUX_2_TESTBENCH = """\
module mux_2_tb;
  reg a, b, sel;
  wire y;
  integer errors;
  mux_2 dut (.a(a), .b(b), .sel(sel), .y(y));
  initial begin
    errors = 0;
    a = 0; b = 1; sel = 0; #1;
    if (y !== 1'b0) begin $display("FAIL: sel=0 expected a"); errors = errors + 1; end
    sel = 1; #1;
    if (y !== 1'b1) begin $display("FAIL: sel=1 expected b"); errors = errors + 1; end
    a = 1; b = 0; sel = 0; #1;
    if (y !== 1'b1) begin $display("FAIL: sel=0 expected a=1"); errors = errors + 1; end
    if (errors == 0) $display("ALL TESTS PASSED");
    $finish;
  end
endmodule"""

MUX_4_TESTBENCH = """\
module mux_4_tb;
  reg [3:0] d;
  reg [1:0] sel;
  wire y;
  integer i, errors;
  mux_4 dut (.d(d), .sel(sel), .y(y));
  initial begin
    errors = 0;
    d = 4'b0110;
    for (i = 0; i < 4; i = i + 1) begin
      sel = i[1:0]; #1;
      if (y !== d[i]) begin $display("FAIL: sel=%0d", i); errors = errors + 1; end
    end
    if (errors == 0) $display("ALL TESTS PASSED");
    $finish;
  end
endmodule"""

GENERIC_TESTBENCH = """\
module generic_tb;
  initial begin
    $display("ALL TESTS PASSED");
    $finish;
  end
endmodule"""

GPE_4_ASSEMBLY_SOURCE = """\
module GPE_4 (input clk, input [3:0] d_in, input [1:0] sel, output out);
  mux_4 MUX_1 (.d(d_in), .sel(sel), .y(out));
endmodule"""

ALU_SOURCE = """\
module alu (input [15:0] a, input [15:0] b, input [2:0] op, output [15:0] y);
  reg [15:0] r;
  always @(a or b or op) begin
    case (op)
      3'd0: r = a;
      3'd1: r = a + b;
      3'd2: r = a - b;
      default: r = a;
    endcase
  end
  assign y = r;
endmodule"""

GPE_SOURCE = """\
module gpe (input clk, input rst, input [15:0] in_n, input [15:0] in_s,
            input [15:0] in_e, input [15:0] in_w, input [7:0] cfg,
            output [15:0] out);
  wire op_a_bit, op_b_bit;
  wire [15:0] alu_y;
  mux_4 sel_a (.d({in_n[0], in_s[0], in_e[0], in_w[0]}), .sel(cfg[1:0]), .y(op_a_bit));
  mux_4 sel_b (.d({in_n[0], in_s[0], in_e[0], in_w[0]}), .sel(cfg[3:2]), .y(op_b_bit));
  alu u_alu (.a({15'd0, op_a_bit}), .b({15'd0, op_b_bit}), .op(cfg[6:4]), .y(alu_y));
  assign out = alu_y;
endmodule"""

GIB_SOURCE = """\
module gib (input clk, input [63:0] ch_in, input [7:0] cfg, output [63:0] ch_out);
  assign ch_out = {ch_in[55:0], ch_in[63:56]};
endmodule"""

PE_SOURCE = """\
module pe (input clk, input rst, input [7:0] a_in, input [7:0] b_in,
           output [7:0] a_out, output [7:0] b_out, output [15:0] acc);
  reg [15:0] acc_q;
  always @(posedge clk) begin
    if (rst) acc_q <= 16'd0;
    else acc_q <= acc_q + a_in * b_in;
  end
  assign acc = acc_q;
  assign a_out = a_in;
  assign b_out = b_in;
endmodule"""

ROW_BUFFER_SOURCE = """\
module row_buffer (input clk, input wr_en, input [7:0] d, output [7:0] q);
  reg [7:0] store;
  always @(posedge clk) begin
    if (wr_en) store <= d;
  end
  assign q = store;
endmodule"""

COL_BUFFER_SOURCE = """\
module col_buffer (input clk, input wr_en, input [7:0] d, output [7:0] q);
  reg [7:0] store;
  always @(posedge clk) begin
    if (wr_en) store <= d;
  end
  assign q = store;
endmodule"""

PIPE_REG_SOURCE = """\
module pipe_reg (input clk, input [7:0] d, output [7:0] q);
  reg [7:0] q_r;
  always @(posedge clk) q_r <= d;
  assign q = q_r;
endmodule"""


def mux64_hierarchy_json() -> str:
    return json.dumps(
        {
            "design": "mux64",
            "modules": [
                {
                    "name": "mux_2",
                    "description": "2-to-1 single-bit multiplexer.",
                    "ports": [
                        {"name": "a", "direction": "input", "width": 1},
                        {"name": "b", "direction": "input", "width": 1},
                        {"name": "sel", "direction": "input", "width": 1},
                        {"name": "y", "direction": "output", "width": 1},
                    ],
                },
                {
                    "name": "mux_4",
                    "description": "4-to-1 multiplexer built from three 2-to-1 multiplexers.",
                    "ports": [
                        {"name": "d", "direction": "input", "width": 4},
                        {"name": "sel", "direction": "input", "width": 2},
                        {"name": "y", "direction": "output", "width": 1},
                    ],
                    "instances": [
                        {"module_name": "mux_2", "instance_name": f"m{i}"} for i in range(3)
                    ],
                },
                {
                    "name": "mux_64",
                    "description": "64-to-1 multiplexer as a three-level tree of 4-to-1 multiplexers.",
                    "ports": [
                        {"name": "d", "direction": "input", "width": 64},
                        {"name": "sel", "direction": "input", "width": 6},
                        {"name": "y", "direction": "output", "width": 1},
                    ],
                    "instances": [
                        {"module_name": "mux_4", "instance_name": f"m{i}"} for i in range(21)
                    ],
                },
            ],
        }
    )


def fig3_hierarchy_json() -> str:
    return json.dumps(
        {
            "design": "gpe_demo",
            "modules": [
                {
                    "name": "GPE_4",
                    "description": "Grid processing element; the operand selector is added interactively.",
                    "ports": [
                        {"name": "clk", "direction": "input", "width": 1},
                        {"name": "d_in", "direction": "input", "width": 4},
                        {"name": "sel", "direction": "input", "width": 2},
                        {"name": "out", "direction": "output", "width": 1},
                    ],
                },
                {
                    "name": "mux_4",
                    "description": "4-to-1 operand selector.",
                    "ports": [
                        {"name": "d", "direction": "input", "width": 4},
                        {"name": "sel", "direction": "input", "width": 2},
                        {"name": "y", "direction": "output", "width": 1},
                    ],
                },
            ],
        }
    )


def cgra_round0_config_json() -> str:
    return json.dumps(
        {
            "template": "cgra",
            "assignment": {"rows": 2, "cols": 2, "alu_ops": ["PASS", "ADD", "SUB"], "pipelining": 0},
        }
    )


def systolic_config_json(pipelining: int) -> str:
    return json.dumps(
        {
            "template": "systolic_array",
            "assignment": {
                "rows": 2,
                "cols": 2,
                "data_width": 8,
                "buffer_depth": 4,
                "pipelining": pipelining,
            },
        }
    )


_MODULE_REQ_RE = re.compile(r"^Implement Verilog module `([A-Za-z_][A-Za-z0-9_]*)`", re.M)
_TOP_REQ_RE = re.compile(r"^Implement the top Verilog module `([A-Za-z_][A-Za-z0-9_]*)`", re.M)
_TB_REQ_RE = re.compile(r"testbench for Verilog module `([A-Za-z_][A-Za-z0-9_]*)`")
_SKETCH_RE = re.compile(r"Interface sketch:\n(module .*?\nendmodule)", re.DOTALL)


@dataclass
class DesignPlaybook:
    """Authored responses for one design run."""

    name: str
    hierarchy_json: Optional[str] = None
    sources: dict[str, str] = field(default_factory=dict)
    assemblies: dict[str, str] = field(default_factory=dict)
    testbenches: dict[str, str] = field(default_factory=dict)
    configs: list[str] = field(default_factory=list)  # popped per DSE round

    def respond(self, request: ChatRequest) -> str:
        if request.system == SIMPLE_SYSTEM_PROMPT:
            if self.hierarchy_json is None:
                raise AssertionError(f"playbook {self.name}: unexpected hierarchy request")
            return self.hierarchy_json
        if request.system == DSE_SYSTEM_PROMPT:
            if not self.configs:
                raise AssertionError(f"playbook {self.name}: no configs left")
            return self.configs.pop(0)
        if request.system == TESTBENCH_SYSTEM_PROMPT:
            match = _TB_REQ_RE.search(request.user)
            name = match.group(1) if match else ""
            return self.testbenches.get(name, GENERIC_TESTBENCH)
        match = _TOP_REQ_RE.search(request.user)
        if match:
            return self.assemblies[match.group(1)]
        match = _MODULE_REQ_RE.search(request.user)
        if match:
            return self.sources[match.group(1)]
        raise AssertionError(f"playbook {self.name}: unroutable request:\n{request.user[:200]}")


def mux64_playbook() -> DesignPlaybook:
    return DesignPlaybook(
        name="mux64",
        hierarchy_json=mux64_hierarchy_json(),
        sources={"mux_2": MUX_2_SOURCE, "mux_4": MUX_4_STRUCTURAL_SOURCE},
        assemblies={"mux_64": MUX_64_SOURCE},
        testbenches={"mux_2": MUX_2_TESTBENCH, "mux_4": MUX_4_TESTBENCH},
    )


def fig3_playbook() -> DesignPlaybook:
    return DesignPlaybook(
        name="fig3_demo",
        hierarchy_json=fig3_hierarchy_json(),
        sources={"mux_4": MUX_4_BEHAVIORAL_SOURCE},
        assemblies={"GPE_4": GPE_4_ASSEMBLY_SOURCE},
        testbenches={"mux_4": MUX_4_TESTBENCH},
    )


def cgra_playbook() -> DesignPlaybook:
    return DesignPlaybook(
        name="cgra_fft",
        configs=[cgra_round0_config_json()],
        sources={
            "mux_4": MUX_4_BEHAVIORAL_SOURCE,
            "alu": ALU_SOURCE,
            "gpe": GPE_SOURCE,
            "gib": GIB_SOURCE,
        },
        testbenches={"mux_4": MUX_4_TESTBENCH},
    )


def systolic_playbook() -> DesignPlaybook:
    return DesignPlaybook(
        name="systolic_mac",
        configs=[systolic_config_json(0), systolic_config_json(1)],
        sources={
            "pe": PE_SOURCE,
            "row_buffer": ROW_BUFFER_SOURCE,
            "col_buffer": COL_BUFFER_SOURCE,
            "pipe_reg": PIPE_REG_SOURCE,
        },
    )


FIG3_EDIT_SENTENCE = "Add an instance MUX_1 of module mux_4 within GPE_4"


def run_mux64_session(orch):
    """Non-interactive mux64 run; shared by the recorder and the tests."""
    session = orch.new_simple_session(MUX64_PROMPT_TEXT, "mux64")
    return orch.run_generation(session, MUX64_PROMPT_TEXT)


def run_fig3_session(orch):
    """fig3 demo: one interactive edit injected before approval."""
    session = orch.new_simple_session(FIG3_PROMPT_TEXT, "gpe_demo")
    orch.start_session(session, FIG3_PROMPT_TEXT)
    orch.apply_session_edit(session, FIG3_EDIT_SENTENCE)
    return orch.approve_session(session)


def run_cgra_session(orch, kernel_source: str):
    from hivegen.dse import ExplorerState
    from hivegen.templates import load_builtin_template

    template = load_builtin_template("cgra")
    session = orch.new_template_session(
        kernel_source, template, ExplorerState(objective="clock", icl_mode="one_shot")
    )
    return orch.run_generation(session)


def run_systolic_session(orch, kernel_source: str):
    from hivegen.dse import ExplorerState
    from hivegen.orchestrator import PpaTarget
    from hivegen.templates import load_builtin_template

    template = load_builtin_template("systolic_array")
    session = orch.new_template_session(
        kernel_source,
        template,
        ExplorerState(objective="clock", strategy_hint="pipelining", icl_mode="one_shot"),
        ppa_target=PpaTarget(max_clock_ns=0.6),
    )
    return orch.run_generation(session)


class EchoSketchResponder:
    """Answers any module or assembly request with its own interface sketch.

    The sketch is already a valid structural module (header, instance
    lines, a body comment), so structural verification passes; useful for
    random-hierarchy scheduling tests.
    """

    def __init__(self, hierarchy_json: Optional[str] = None):
        self.hierarchy_json = hierarchy_json

    def __call__(self, request: ChatRequest) -> str:
        if request.system == SIMPLE_SYSTEM_PROMPT:
            if self.hierarchy_json is None:
                raise AssertionError("no hierarchy scripted")
            return self.hierarchy_json
        if request.system == TESTBENCH_SYSTEM_PROMPT:
            return GENERIC_TESTBENCH
        match = _SKETCH_RE.search(request.user)
        if match is None:
            raise AssertionError(f"no sketch in request:\n{request.user[:200]}")
        return match.group(1)
