"""Task planning, sketch rendering, and the edit-command grammar."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hivegen.model import (
    BodyState,
    Direction,
    HierarchicalPrompt,
    InstanceRef,
    ModuleBrief,
    ModuleSpec,
    PortDecl,
)
from hivegen.parsing import (
    AddInstance,
    AddPort,
    AmbiguousCommand,
    Connect,
    CycleError,
    DuplicateInstanceName,
    DuplicateName,
    MissingArgument,
    NotFound,
    RemoveInstance,
    RemovePort,
    RenameModule,
    Role,
    TaskList,
    TaskStatus,
    UnknownParent,
    UnrecognizedVerb,
    apply_edit,
    build_task_list,
    make_sketch,
    make_sketch_set,
    parse_command,
    render_sketch,
    unparse_command,
)

FIG3_SENTENCE = "Add an instance MUX_1 of module mux_4 within GPE_4"
FIG3_LINE = "mux_4 MUX_1 (.port(port));"


def mux_prompt() -> HierarchicalPrompt:
    return HierarchicalPrompt(
        design="mux64",
        modules=(
            ModuleBrief(name="mux_64", instances=(InstanceRef("mux_4", "m0"),)),
            ModuleBrief(name="mux_4", instances=(InstanceRef("mux_2", "m0"),)),
            ModuleBrief(name="mux_4"),  # repeated mention, first one wins
            ModuleBrief(name="mux_2"),
        ),
    )


class TestBuildTaskList:
    def test_mux_family_dedup_and_order(self):
        tasks = build_task_list(mux_prompt())
        assert tasks.module_names() == ["mux_2", "mux_4", "mux_64"]

    def test_single_module(self):
        prompt = HierarchicalPrompt(design="d", modules=(ModuleBrief(name="solo"),))
        assert build_task_list(prompt).module_names() == ["solo"]

    def test_random_dags_satisfy_every_edge(self):
        rng = random.Random(11)
        for _ in range(30):
            n = 12
            briefs = []
            for i in range(n):
                children = [j for j in range(i + 1, n) if rng.random() < 0.3]
                briefs.append(
                    ModuleBrief(
                        name=f"m{i}",
                        instances=tuple(InstanceRef(f"m{j}", f"u{j}") for j in children),
                    )
                )
            rng.shuffle(briefs)
            tasks = build_task_list(HierarchicalPrompt(design="d", modules=tuple(briefs)))
            pos = {name: k for k, name in enumerate(tasks.module_names())}
            # brute-force check of all declared dependency edges
            for module, depends_on in tasks.dependency_edges:
                assert pos[depends_on] < pos[module], (module, depends_on)

    def test_cycle_error_names_the_cycle(self):
        prompt = HierarchicalPrompt(
            design="d",
            modules=(
                ModuleBrief(name="a", instances=(InstanceRef("b", "u0"),)),
                ModuleBrief(name="b", instances=(InstanceRef("a", "u1"),)),
            ),
        )
        with pytest.raises(CycleError) as err:
            build_task_list(prompt)
        assert "a -> b -> a" in str(err.value) or "b -> a -> b" in str(err.value)

    def test_top_module_last(self):
        prompt = HierarchicalPrompt(
            design="d",
            modules=(
                ModuleBrief(name="top", instances=(InstanceRef("leaf", "u0"),)),
                ModuleBrief(name="leaf"),
                ModuleBrief(name="stray"),  # independent helper module
            ),
        )
        assert build_task_list(prompt).module_names()[-1] == "top"

    def test_idempotent_on_own_output_order(self):
        tasks = build_task_list(mux_prompt())
        briefs_in_task_order = tuple(
            next(b for b in (ModuleBrief(name=n, instances=i) for n, i in (
                ("mux_2", ()),
                ("mux_4", (InstanceRef("mux_2", "m0"),)),
                ("mux_64", (InstanceRef("mux_4", "m0"),)),
            )) if b.name == name)
            for name in tasks.module_names()
        )
        again = build_task_list(HierarchicalPrompt(design="d", modules=briefs_in_task_order))
        assert again.module_names() == tasks.module_names()

    def test_undescribed_referenced_module_becomes_task(self):
        prompt = HierarchicalPrompt(
            design="d",
            modules=(ModuleBrief(name="top", instances=(InstanceRef("helper", "u0"),)),),
        )
        names = build_task_list(prompt).module_names()
        assert names == ["helper", "top"]


class TestParseCommand:
    def test_fig3_worked_example(self):
        tree, cmd = parse_command(FIG3_SENTENCE)
        assert cmd == AddInstance(module="mux_4", instance="MUX_1", parent="GPE_4")
        assert tree.role_of("Add") is Role.ROOT_VERB
        assert tree.role_of("instance") is Role.DOBJ
        assert tree.role_of("MUX_1") is Role.NP_MODIFIER
        assert tree.role_of("mux_4") is Role.POBJ
        assert tree.role_of("GPE_4") is Role.POBJ

    def test_roles_cover_every_token_with_one_root(self):
        tree, _ = parse_command(FIG3_SENTENCE)
        assert len(tree.tokens) == len(FIG3_SENTENCE.split())
        assert sum(1 for t in tree.tokens if t.role is Role.ROOT_VERB) == 1

    def test_remove_instance(self):
        _, cmd = parse_command("Remove instance MUX_1 from GPE_4")
        assert cmd == RemoveInstance(instance="MUX_1", parent="GPE_4")

    def test_unrecognized_verb(self):
        with pytest.raises(UnrecognizedVerb):
            parse_command("Frobnicate the flux")

    def test_missing_argument_after_within(self):
        with pytest.raises(MissingArgument):
            parse_command("Add an instance MUX_1 of module mux_4 within")

    def test_rename(self):
        _, cmd = parse_command("rename module mux_old to mux_new")
        assert cmd == RenameModule(old="mux_old", new="mux_new")

    def test_add_port_with_width(self):
        _, cmd = parse_command("add port input data[8] to alu")
        assert cmd == AddPort(parent="alu", port=PortDecl("data", Direction.INPUT, 8))

    def test_add_port_default_width(self):
        _, cmd = parse_command("add port output done to ctrl")
        assert cmd.port.width == 1

    def test_connect(self):
        _, cmd = parse_command("connect MUX_1.sel to net_sel in GPE_4")
        assert cmd == Connect(parent="GPE_4", instance="MUX_1", port="sel", net="net_sel")

    def test_trailing_period_tolerated(self):
        _, cmd = parse_command("Remove instance MUX_1 from GPE_4.")
        assert cmd == RemoveInstance(instance="MUX_1", parent="GPE_4")


identifiers = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,11}", fullmatch=True)


def edit_commands() -> st.SearchStrategy:
    return st.one_of(
        st.builds(AddInstance, module=identifiers, instance=identifiers, parent=identifiers),
        st.builds(RemoveInstance, instance=identifiers, parent=identifiers),
        st.builds(RenameModule, old=identifiers, new=identifiers),
        st.builds(
            AddPort,
            parent=identifiers,
            port=st.builds(
                PortDecl,
                name=identifiers,
                direction=st.sampled_from(list(Direction)),
                width=st.integers(min_value=1, max_value=128),
            ),
        ),
        st.builds(RemovePort, parent=identifiers, name=identifiers),
        st.builds(Connect, parent=identifiers, instance=identifiers, port=identifiers, net=identifiers),
    )


class TestRoundTrip:
    @settings(max_examples=300)
    @given(edit_commands())
    def test_unparse_then_parse_is_identity(self, cmd):
        tree, parsed = parse_command(unparse_command(cmd))
        assert parsed == cmd
        assert sum(1 for t in tree.tokens if t.role is Role.ROOT_VERB) == 1


def gpe_sketches() -> tuple[dict, TaskList]:
    prompt = HierarchicalPrompt(
        design="gpe_demo",
        modules=(
            ModuleBrief(
                name="GPE_4",
                ports=(PortDecl("clk", Direction.INPUT), PortDecl("out", Direction.OUTPUT, 16)),
            ),
        ),
    )
    return make_sketch_set(prompt), build_task_list(prompt)


class TestApplyEdit:
    def test_fig3_edit_renders_exact_line(self):
        sketches, tasks = gpe_sketches()
        _, cmd = parse_command(FIG3_SENTENCE)
        sketches, tasks = apply_edit(sketches, tasks, cmd)
        assert FIG3_LINE in render_sketch(sketches["GPE_4"])

    def test_new_module_inserted_pending_before_parent(self):
        sketches, tasks = gpe_sketches()
        _, cmd = parse_command(FIG3_SENTENCE)
        _, tasks = apply_edit(sketches, tasks, cmd)
        names = tasks.module_names()
        assert names.index("mux_4") < names.index("GPE_4")
        assert tasks.get("mux_4").status is TaskStatus.PENDING
        assert ("GPE_4", "mux_4") in tasks.dependency_edges

    def test_remove_missing_instance_changes_nothing(self):
        sketches, tasks = gpe_sketches()
        before = sketches["GPE_4"].revision
        with pytest.raises(NotFound):
            apply_edit(sketches, tasks, RemoveInstance(instance="MUX_9", parent="GPE_4"))
        assert sketches["GPE_4"].revision == before

    def test_duplicate_instance_rejected(self):
        sketches, tasks = gpe_sketches()
        cmd = AddInstance(module="mux_4", instance="MUX_1", parent="GPE_4")
        sketches, tasks = apply_edit(sketches, tasks, cmd)
        with pytest.raises(DuplicateInstanceName):
            apply_edit(sketches, tasks, cmd)

    def test_unknown_parent(self):
        sketches, tasks = gpe_sketches()
        with pytest.raises(UnknownParent):
            apply_edit(sketches, tasks, AddInstance(module="m", instance="u0", parent="nowhere"))

    def test_done_parent_reopens(self):
        sketches, tasks = gpe_sketches()
        tasks = tasks.with_status("GPE_4", TaskStatus.DONE)
        _, cmd = parse_command(FIG3_SENTENCE)
        _, tasks = apply_edit(sketches, tasks, cmd)
        assert tasks.get("GPE_4").status is TaskStatus.PENDING

    def test_rename_updates_references_everywhere(self):
        sketches, tasks = gpe_sketches()
        sketches, tasks = apply_edit(
            sketches, tasks, AddInstance(module="mux_4", instance="MUX_1", parent="GPE_4")
        )
        sketches, tasks = apply_edit(sketches, tasks, RenameModule(old="mux_4", new="mux_four"))
        assert "mux_four" in sketches
        assert "mux_4" not in sketches
        assert "mux_four MUX_1" in render_sketch(sketches["GPE_4"])
        assert "mux_four" in tasks.module_names()

    def test_rename_collision_rejected(self):
        sketches, tasks = gpe_sketches()
        sketches["other"] = make_sketch(ModuleSpec(name="other"))
        with pytest.raises(DuplicateName):
            apply_edit(sketches, tasks, RenameModule(old="GPE_4", new="other"))

    def test_add_and_remove_port(self):
        sketches, tasks = gpe_sketches()
        sketches, tasks = apply_edit(
            sketches, tasks, AddPort(parent="GPE_4", port=PortDecl("cfg", Direction.INPUT, 8))
        )
        assert "input [7:0] cfg" in render_sketch(sketches["GPE_4"])
        sketches, tasks = apply_edit(sketches, tasks, RemovePort(parent="GPE_4", name="cfg"))
        assert "cfg" not in render_sketch(sketches["GPE_4"])
        with pytest.raises(NotFound):
            apply_edit(sketches, tasks, RemovePort(parent="GPE_4", name="cfg"))

    def test_connect_fills_placeholder(self):
        sketches, tasks = gpe_sketches()
        sketches, tasks = apply_edit(
            sketches, tasks, AddInstance(module="mux_4", instance="MUX_1", parent="GPE_4")
        )
        sketches, tasks = apply_edit(
            sketches, tasks, Connect(parent="GPE_4", instance="MUX_1", port="sel", net="pick")
        )
        assert "mux_4 MUX_1 (.sel(pick));" in render_sketch(sketches["GPE_4"])

    def test_instance_names_stay_unique_per_parent(self):
        rng = random.Random(23)
        sketches, tasks = gpe_sketches()
        for i in range(30):
            cmd = AddInstance(module=f"mod{rng.randint(0, 3)}", instance=f"u{rng.randint(0, 9)}", parent="GPE_4")
            try:
                sketches, tasks = apply_edit(sketches, tasks, cmd)
            except DuplicateInstanceName:
                continue
            names = [i.instance_name for i in sketches["GPE_4"].instance_lines]
            assert len(names) == len(set(names))

    def test_untouched_sketches_keep_revision(self):
        sketches, tasks = gpe_sketches()
        sketches["bystander"] = make_sketch(ModuleSpec(name="bystander"))
        new_sketches, _ = apply_edit(
            sketches, tasks, AddInstance(module="mux_4", instance="MUX_1", parent="GPE_4")
        )
        assert new_sketches["bystander"].revision == 0
        assert new_sketches["GPE_4"].revision == 1


class TestRenderSketch:
    def test_canonical_layout(self):
        sketch = make_sketch(
            ModuleSpec(
                name="m",
                ports=(PortDecl("a", Direction.INPUT), PortDecl("y", Direction.OUTPUT)),
            )
        )
        assert render_sketch(sketch) == "module m (input a, output y);\n  /* body block */\nendmodule"

    def test_render_is_deterministic_per_revision(self):
        sketches, _ = gpe_sketches()
        sketch = sketches["GPE_4"]
        assert render_sketch(sketch) == render_sketch(sketch)

    def test_filled_body_drops_placeholder(self):
        from dataclasses import replace

        sketch = make_sketch(ModuleSpec(name="m"))
        filled = replace(sketch, body_state=BodyState.FILLED)
        assert "/* body block */" not in render_sketch(filled)

    def test_parameters_render_in_header(self):
        sketch = make_sketch(ModuleSpec(name="m", parameters={"WIDTH": 8}))
        assert render_sketch(sketch).startswith("module m #(parameter WIDTH = 8) ();")
