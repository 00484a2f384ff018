"""Descriptor parsing, validation diagnostics, and the CLI surface."""

import dataclasses
import json
import os

import pytest

from adaptsim import cli, descriptors, trace

DATA = os.path.join(os.path.dirname(__file__), "data")
APP = os.path.join(DATA, "app.json")
NET = os.path.join(DATA, "net.json")
SCENARIO = os.path.join(DATA, "scenario.json")


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def load(path):
    with open(path) as fh:
        return json.load(fh)


class TestParsing:
    def test_reference_descriptors_are_clean(self):
        app, d1 = descriptors.parse_app(load(APP))
        net, d2 = descriptors.parse_net(load(NET))
        assert d1 == d2 == []
        assert descriptors.validate(app, net) == []
        assert [c.id for c in app.components] == ["reader", "relay",
                                                  "writer"]

    def test_unknown_field_is_reported(self):
        doc = load(APP)
        doc["components"][0]["colour"] = "red"
        _, diags = descriptors.parse_app(doc)
        assert diags == ["components[0]: unknown field 'colour'"]

    def test_bad_endpoint_shape(self):
        doc = load(APP)
        doc["connectors"][0]["from"] = "no-dot"
        _, diags = descriptors.parse_app(doc)
        assert any("must be 'component.port'" in d for d in diags)

    def test_scenario_event_beyond_duration(self):
        sc, diags = descriptors.parse_scenario(
            {"duration": 5, "events": [
                {"at": 9, "kind": "HostLeave", "host": "h1"}]})
        assert any("beyond duration" in d for d in diags)
        assert sc.events == []

    def test_malformed_json_carries_position(self):
        import tempfile
        with tempfile.NamedTemporaryFile("w", suffix=".json",
                                         delete=False) as fh:
            fh.write("{\n  broken\n}")
            path = fh.name
        from adaptsim.errors import DescriptorError
        with pytest.raises(DescriptorError) as err:
            descriptors.load_json(path)
        assert f"{path}:2:" in str(err.value)


class TestCrossValidation:
    def app_net(self):
        app, _ = descriptors.parse_app(load(APP))
        net, _ = descriptors.parse_net(load(NET))
        return app, net

    def test_unknown_initial_host(self):
        app, net = self.app_net()
        app.components[0] = dataclasses.replace(app.components[0],
                                                initial_host="h9")
        assert any("initial host 'h9' unknown" in d
                   for d in descriptors.validate(app, net))

    def test_variant_tier_mismatch(self):
        app, net = self.app_net()
        app.components[2] = dataclasses.replace(
            app.components[2], initial_host="h3")     # writer is Full-only
        assert any("no variant for tier LightStd" in d
                   for d in descriptors.validate(app, net))

    def test_missing_port_and_double_binding(self):
        app, net = self.app_net()
        app.connectors[1].sinks[0] = descriptors.Endpoint("writer", "oops")
        diags = descriptors.validate(app, net)
        assert any("unknown in port writer.oops" in d for d in diags)
        app, net = self.app_net()
        app.connectors[1].source = descriptors.Endpoint("reader", "out")
        assert any("already bound" in d
                   for d in descriptors.validate(app, net))


class TestRoundTrip:
    def test_app_survives_serialize_parse(self):
        app, _ = descriptors.parse_app(load(APP))
        again, diags = descriptors.parse_app(descriptors.serialize_app(app))
        assert diags == []
        assert descriptors.serialize_app(again) == \
            descriptors.serialize_app(app)

    def test_net_survives_serialize_parse(self):
        net, _ = descriptors.parse_net(load(NET))
        again, diags = descriptors.parse_net(descriptors.serialize_net(net))
        assert diags == []
        assert descriptors.serialize_net(again) == \
            descriptors.serialize_net(net)


class TestCli:
    def test_validate_ok(self, capsys):
        assert cli.main(["validate", "--app", APP, "--net", NET]) == 0
        assert capsys.readouterr().out == ""

    def test_validate_reports_diagnostics(self, tmp_path, capsys):
        doc = load(APP)
        doc["components"][1]["initial_host"] = "h9"
        bad = write(tmp_path, "bad_app.json", doc)
        assert cli.main(["validate", "--app", bad, "--net", NET]) == 1
        assert "initial host 'h9' unknown" in capsys.readouterr().out

    def test_run_produces_a_trace(self, tmp_path):
        out = str(tmp_path / "run.trace")
        rc = cli.main(["run", "--app", APP, "--net", NET,
                       "--scenario", SCENARIO, "--mode", "M3",
                       "--trace", out])
        assert rc == 0
        records = trace.parse_file(out)
        assert any(r.kind == "QOS" for r in records)
        assert records == sorted(
            records, key=lambda r: r.tick)        # tick-ordered

    def test_run_exit_two_when_no_feasible_deployment(self, tmp_path):
        # "probe" only runs on the light tier; when the sole light host
        # leaves, no compatible placement remains
        app = write(tmp_path, "app.json", {
            "components": [
                {"id": "probe", "out_ports": [], "in_ports": [],
                 "variants": [{"tier": "LightStd", "cpu_demand": 0.5,
                               "mem_demand": 0.5, "behavior": "sink"}],
                 "initial_host": "h2"}],
            "connectors": []})
        net = write(tmp_path, "net.json", {
            "hosts": [
                {"id": "h1", "tier": "Full", "cpu_capacity": 4.0,
                 "mem_capacity": 4.0},
                {"id": "h2", "tier": "LightStd", "cpu_capacity": 4.0,
                 "mem_capacity": 4.0}],
            "links": [{"endpoints": ["h1", "h2"]}]})
        sc = write(tmp_path, "sc.json", {
            "duration": 10, "seed": 0,
            "events": [{"at": 2, "kind": "HostLeave", "host": "h2"}]})
        out = str(tmp_path / "run.trace")
        rc = cli.main(["run", "--app", app, "--net", net,
                       "--scenario", sc, "--mode", "M3", "--trace", out])
        assert rc == 2
        assert any("result=Infeasible" in l
                   for l in open(out).read().splitlines())

    def test_inspect_queries(self, tmp_path, capsys):
        out = str(tmp_path / "run.trace")
        cli.main(["run", "--app", APP, "--net", NET,
                  "--scenario", SCENARIO, "--trace", out])
        capsys.readouterr()
        assert cli.main(["inspect", "--trace", out, "--query", "qos"]) == 0
        qos = capsys.readouterr().out
        assert "tick=0 global=1.0000" in qos
        assert cli.main(["inspect", "--trace", out,
                         "--query", "flows"]) == 0
        flows = capsys.readouterr().out
        assert "k1->relay.in:" in flows
        assert cli.main(["inspect", "--trace", out,
                         "--query", "commands"]) == 0
        cmds = capsys.readouterr().out
        assert "cmd=Move comp=relay" in cmds

    def test_parse_failure_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "x.json"
        bad.write_text("{nope")
        assert cli.main(["validate", "--app", str(bad), "--net", NET]) == 1
        assert str(bad) in capsys.readouterr().err


class TestBuildWorld:
    def test_bootstrap_leaves_no_trace(self):
        app, _ = descriptors.parse_app(load(APP))
        net, _ = descriptors.parse_net(load(NET))
        w = cli.build_world(app, net)
        assert w.trace_lines == []
        assert w._tick_buffer == []
        assert w.coordinator.host == "h1"    # first full-tier host
        assert set(w.model.components) == {"reader", "relay", "writer"}

    def test_undeployable_app_is_rejected(self):
        app, _ = descriptors.parse_app(load(APP))
        net, _ = descriptors.parse_net(load(NET))
        app.components[2] = dataclasses.replace(
            app.components[2], initial_host="h3")
        from adaptsim.errors import DescriptorError
        with pytest.raises(DescriptorError):
            cli.build_world(app, net)
