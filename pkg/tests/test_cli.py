"""End-to-end command-line behaviour: pipelines, outputs, exit codes."""

from __future__ import annotations

import pathlib
import shutil

import pytest

from trafficlogic.cli import main

DATA = pathlib.Path(__file__).parent / "data"

OK, SEMANTIC, INPUT, UNSUPPORTED = 0, 1, 2, 3


def data(name: str) -> str:
    return str(DATA / name)


class TestIngest:
    def test_map_to_facts_and_coords(self, tmp_path, capsys):
        out = tmp_path / "net.facts"
        coords = tmp_path / "net.coords"
        code = main(
            ["ingest", data("ex5_overlap.xodr"), "--out", str(out), "--coords-out", str(coords)]
        )
        assert code == OK
        text = out.read_text()
        assert "overlap(pos1,poe1)." in text
        assert "% meta sampling_step=0.5" in text
        assert "pos1 30.000000 -2.000000 0.000000" in coords.read_text()

    def test_facts_to_stdout_by_default(self, capsys):
        assert main(["ingest", data("ex1_straight.xodr")]) == OK
        captured = capsys.readouterr()
        assert "lane(l1,r1)." in captured.out
        assert "left(l1,l2)." in captured.out

    def test_missing_file(self, capsys):
        assert main(["ingest", "no_such.xodr"]) == INPUT
        assert "error:" in capsys.readouterr().err

    def test_unsupported_geometry(self, tmp_path, capsys):
        bad = tmp_path / "spiral.xodr"
        text = (DATA / "ex1_straight.xodr").read_text().replace("<line/>", "<spiral/>")
        bad.write_text(text)
        assert main(["ingest", str(bad)]) == UNSUPPORTED
        assert "spiral" in capsys.readouterr().err

    def test_malformed_xml(self, tmp_path, capsys):
        bad = tmp_path / "broken.xodr"
        bad.write_text("<OpenDRIVE><road>")
        assert main(["ingest", str(bad)]) == INPUT


class TestGenerate:
    @pytest.mark.parametrize(
        "req,count,tstar",
        [
            ("ex1_overtake.req", 4, "4"),
            ("ex2_crossing.req", 2, "4"),
            ("ex3_branching.req", 3, "3"),
            ("ex4_two_crossings.req", 2, "5"),
            ("ex5_opposing_pass.req", 2, "6"),
        ],
    )
    def test_fixture_counts_on_stderr(self, req, count, tstar, tmp_path, capsys):
        out = tmp_path / "r.result"
        assert main(["generate", data(req), "--out", str(out)]) == OK
        err = capsys.readouterr().err
        assert f"scenarios: {count} (" in err
        assert f"T*={tstar}" in err
        assert out.read_text().count("#scenario ") == count

    def test_stats_line_shape(self, tmp_path, capsys):
        out = tmp_path / "r.result"
        assert main(["generate", data("ex1_overtake.req"), "--out", str(out)]) == OK
        err = capsys.readouterr().err.strip()
        assert err.startswith("scenarios: 4 (mode=shortest, T*=4, nodes=64, pruned=")
        assert err.endswith("s)")

    def test_mode_and_horizon_overrides(self, tmp_path, capsys):
        out = tmp_path / "r.result"
        code = main(
            ["generate", data("ex1_overtake.req"), "--out", str(out),
             "--mode", "exact", "--horizon", "4"]
        )
        assert code == OK
        # exact mode keeps straddling finals that steadiness filtered out
        err = capsys.readouterr().err
        assert "mode=exact" in err and "scenarios: 16 (" in err

    def test_workers_flag_changes_nothing_in_output(self, tmp_path, capsys):
        a, b = tmp_path / "a.result", tmp_path / "b.result"
        assert main(["generate", data("ex5_opposing_pass.req"), "--out", str(a)]) == OK
        assert main(
            ["generate", data("ex5_opposing_pass.req"), "--out", str(b), "--workers", "4"]
        ) == OK
        assert a.read_bytes() == b.read_bytes()

    def test_dot_timeline(self, tmp_path, capsys):
        dot = tmp_path / "t.dot"
        out = tmp_path / "r.result"
        assert main(
            ["generate", data("ex3_branching.req"), "--out", str(out), "--dot", str(dot)]
        ) == OK
        text = dot.read_text()
        assert text.startswith("digraph scenarios {")
        assert "s1_1 -> s1_2" in text

    def test_malformed_request(self, tmp_path, capsys):
        bad = tmp_path / "bad.req"
        bad.write_text("lane(l1, ra).\n#init\non(c1, l1).\n")  # no #horizon
        assert main(["generate", str(bad)]) == INPUT
        assert "horizon" in capsys.readouterr().err

    def test_infeasible_initial_scene(self, tmp_path, capsys):
        bad = tmp_path / "bad.req"
        bad.write_text(
            "lane(l1, ra).\nlane(l2, ra).\nleft(l1, l2).\n"
            "#init\non(c1, l1).\non(c2, l2).\n#horizon 2\n"
        )
        assert main(["generate", str(bad)]) == INPUT
        assert "initial scene" in capsys.readouterr().err

    def test_outdir_config_places_result(self, tmp_path, capsys):
        cfg = tmp_path / "t.cfg"
        outdir = tmp_path / "results"
        cfg.write_text(f"outdir={outdir}\n")
        assert main(["--config", str(cfg), "generate", data("ex3_branching.req")]) == OK
        assert (outdir / "ex3_branching.result").exists()


class TestCheck:
    def test_generated_results_pass(self, tmp_path, capsys):
        out = tmp_path / "r.result"
        assert main(["generate", data("ex1_overtake.req"), "--out", str(out)]) == OK
        capsys.readouterr()
        assert main(["check", str(out), data("ex1_overtake.net")]) == OK
        assert capsys.readouterr().out == ""

    def test_violations_reported_with_scenario_prefix(self, tmp_path, capsys):
        sc = tmp_path / "bad.scenario"
        sc.write_text(
            "#scenario 1\n#step 1\non(c1,l2).\n#step 2\non(c1,l1).\n"
            "#scenario 2\n#step 1\non(c1,l1).\n"
        )
        assert main(["check", str(sc), data("ex1_overtake.net")]) == SEMANTIC
        out = capsys.readouterr().out
        assert "scenario 1: PR7 @step 1->2 [c1]" in out

    def test_single_scenario_report_has_no_prefix(self, tmp_path, capsys):
        sc = tmp_path / "bad.scenario"
        sc.write_text(
            "#step 1\non(c1,l2).\non(c2,l2).\nlonr(c1,c2,behind).\n"
            "#step 2\non(c1,l1).\non(c2,l2).\nlonr(c1,c2,behind).\n"
        )
        assert main(["check", str(sc), data("ex1_overtake.net")]) == SEMANTIC
        out = capsys.readouterr().out
        assert out.splitlines() == ["PR7 @step 1->2 [c1]"]

    def test_parse_error_is_input_error(self, tmp_path, capsys):
        sc = tmp_path / "bad.scenario"
        sc.write_text("#step 1\nwobble(c1,l2).\n")
        assert main(["check", str(sc), data("ex1_overtake.net")]) == INPUT


class TestAbstract:
    def test_trace_pipeline_round_trip(self, tmp_path, capsys):
        out = tmp_path / "t.scenario"
        assert main(
            ["abstract", data("ex1_overtake_trace.csv"), data("ex1_straight.xodr"),
             "--out", str(out)]
        ) == OK
        net_out = tmp_path / "net.facts"
        assert main(["ingest", data("ex1_straight.xodr"), "--out", str(net_out)]) == OK
        capsys.readouterr()
        assert main(["check", str(out), str(net_out)]) == OK
        text = out.read_text()
        assert text.count("#step ") == 7

    def test_opposing_trace(self, tmp_path, capsys):
        out = tmp_path / "t.scenario"
        assert main(
            ["abstract", data("ex5_squeeze_trace.csv"), data("ex5_overlap.xodr"),
             "--out", str(out)]
        ) == OK
        assert "lonro(c1,c3,cover)." in out.read_text()

    def test_off_road_trace(self, tmp_path, capsys):
        trace = tmp_path / "bad.csv"
        trace.write_text("t,vehicle,x,y,heading,length\n0,c1,10,-50,0,4\n")
        assert main(["abstract", str(trace), data("ex1_straight.xodr")]) == INPUT
        assert "off-road" in capsys.readouterr().err


class TestExport:
    def _single(self, tmp_path, req: str, net: str) -> pathlib.Path:
        result = tmp_path / "r.result"
        assert main(["generate", data(req), "--out", str(result)]) == OK
        first = result.read_text().split("#scenario ")[1]
        single = tmp_path / "one.scenario"
        single.write_text("#scenario " + first)
        return single

    def test_export_first_scenario_matches_golden(self, tmp_path, capsys):
        single = self._single(tmp_path, "ex2_crossing.req", "ex2_crossing.net")
        out = tmp_path / "one.osc"
        assert main(
            ["export", str(single), data("ex2_crossing.net"), "--out", str(out)]
        ) == OK
        assert out.read_text() == (DATA / "golden_ex2_first.osc").read_text()

    def test_export_with_coords_inlines_positions(self, tmp_path, capsys):
        net_out = tmp_path / "net.facts"
        coords = tmp_path / "net.coords"
        assert main(
            ["ingest", data("ex5_overlap.xodr"), "--out", str(net_out),
             "--coords-out", str(coords)]
        ) == OK
        trace_sc = tmp_path / "t.scenario"
        assert main(
            ["abstract", data("ex5_squeeze_trace.csv"), data("ex5_overlap.xodr"),
             "--out", str(trace_sc)]
        ) == OK
        out = tmp_path / "t.osc"
        assert main(
            ["export", str(trace_sc), str(net_out), "--coords", str(coords),
             "--out", str(out)]
        ) == OK
        assert "position_3d(x: 30.000000, y: -2.000000, z: 0.000000)" in out.read_text()

    def test_export_rejects_multi_scenario_files(self, tmp_path, capsys):
        result = tmp_path / "r.result"
        assert main(["generate", data("ex1_overtake.req"), "--out", str(result)]) == OK
        assert main(["export", str(result), data("ex1_overtake.net")]) == INPUT
        assert "exactly one scenario" in capsys.readouterr().err

    def test_export_invalid_scenario_is_semantic_failure(self, tmp_path, capsys):
        sc = tmp_path / "bad.scenario"
        sc.write_text("#step 1\non(c1,l2).\n#step 2\non(c1,l1).\n")
        assert main(["export", str(sc), data("ex1_overtake.net")]) == SEMANTIC
        assert "PR7" in capsys.readouterr().err


class TestConfig:
    def test_bad_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("workers\n")
        assert main(["--config", str(cfg), "check", "x", "y"]) == INPUT

    def test_config_tolerances_reach_metadata(self, tmp_path, capsys):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("sampling_step=0.25\n")
        out = tmp_path / "net.facts"
        assert main(
            ["--config", str(cfg), "ingest", data("ex1_straight.xodr"), "--out", str(out)]
        ) == OK
        assert "% meta sampling_step=0.25" in out.read_text()
