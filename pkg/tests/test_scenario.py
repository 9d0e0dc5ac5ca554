"""Scenario grammar: parsing, validation diagnostics, and render round-trips."""

import random

import pytest

from fedemu.errors import ScenarioError
from fedemu.scenario import (
    canonical_spec,
    canonical_text,
    parse_scenario,
    render_scenario,
)
from scen_gen import random_scenario_text

MINIMAL = (
    "site A subnet=10.0.0.0/24\n"
    "router gw site=A ip=10.0.0.1\n"
    "host h1 site=A ip=10.0.0.2\n"
    "link h1 gw bw=1000 lat=0.001\n"
)


class TestParse:
    def test_canonical_counts(self):
        spec = canonical_spec()
        assert spec.seed == 42
        assert len(spec.sites) == 3
        assert len(spec.routers) == 3
        assert len(spec.hosts) == 3
        assert len(spec.links) == 6
        assert len(spec.images) == 1
        assert len(spec.instruments) == 1
        assert len(spec.workflows) == 1

    def test_canonical_workflow_shape(self):
        wf = canonical_spec().workflows[0]
        assert wf.id == "wf-recon"
        assert [t.name for t in wf.tasks] == ["acq", "ship-img", "run-svc", "recon", "view"]
        recon = wf.tasks[3]
        assert recon.kind == "reconstruct"
        assert recon.get("n") == "64"
        assert recon.depends == ("acq", "run-svc")

    def test_comments_and_blanks_skipped(self):
        spec = parse_scenario("# nothing\n\n" + MINIMAL + "\n# tail\n")
        assert len(spec.hosts) == 1

    def test_default_seed(self):
        assert parse_scenario(MINIMAL).seed == 42

    def test_seed_override(self):
        assert parse_scenario("seed=7\n" + MINIMAL).seed == 7

    def test_image_and_instrument_fields(self):
        spec = canonical_spec()
        image = spec.images[0]
        assert (image.name, image.tag) == ("imars3d", "1.0")
        assert image.ref == "imars3d:1.0"
        assert image.size == 100_000_000
        assert (image.service_kind, image.service_port) == ("notebook", 8888)
        instrument = spec.instruments[0]
        assert instrument.phantom.n == 64
        assert instrument.phantom.radius == pytest.approx(0.5)
        assert instrument.bins == 95


def _error(text: str) -> ScenarioError:
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    return info.value


class TestDiagnostics:
    def test_unknown_stanza_reports_line(self):
        err = _error(MINIMAL + "frobnicate x=1\n")
        assert err.line_no == 5
        assert "frobnicate" in str(err)

    def test_error_includes_offending_line_verbatim(self):
        bad = "host h2 site=NOPE ip=10.0.0.3"
        err = _error(MINIMAL + bad + "\n")
        assert bad in str(err)

    @pytest.mark.parametrize(
        "line",
        [
            "site A subnet=10.0.0.0/24",  # duplicate site
            "host h1 site=A ip=10.0.0.9",  # duplicate node name
            "router gw2 site=B ip=10.0.0.8",  # unknown site
            "link h1 missing bw=1 lat=0.1",  # unknown endpoint
            "host h2 site=A",  # missing ip
            "host h2 site=A ip=10.0.0.4 extra=1",  # unknown field
            "link h1 gw bw=x lat=0.1",  # non-numeric
            "seed=13",  # seed after declarations? no: seed anywhere ok; see below
        ],
    )
    def test_bad_declarations(self, line):
        if line.startswith("seed="):
            parse_scenario(MINIMAL + line + "\n")  # legal anywhere, once
            return
        assert _error(MINIMAL + line + "\n")

    def test_duplicate_seed(self):
        assert _error("seed=1\nseed=2\n" + MINIMAL)

    def test_second_gateway_rejected_at_build(self):
        from fedemu.errors import TopologyError
        from fedemu.topology import build_topology

        spec = parse_scenario(MINIMAL + "router gw2 site=A ip=10.0.0.7\n")
        with pytest.raises(TopologyError):
            build_topology(spec)

    def test_workflow_requires_end(self):
        err = _error(MINIMAL + "workflow wf\n  task t kind=acquire instrument=I angles=3\n")
        assert "end" in str(err)

    def test_task_outside_workflow(self):
        assert _error(MINIMAL + "task t kind=acquire instrument=I angles=3\n")

    @pytest.mark.parametrize(
        "task",
        [
            "task t kind=warp speed=9",
            "task t kind=acquire instrument=I",  # missing angles
            "task t kind=acquire instrument=I angles=0",
            "task t kind=reconstruct source=a service=r n=1 filter=ramlak",
            "task t kind=reconstruct source=a service=r n=8 filter=hann",
            "task t kind=run image=x:1 host=h1 ports=99999:1",
            "task t kind=fetch from=h1 service=r path=index.html",
            "task t kind=acquire instrument=I angles=3 depends=ghost",
        ],
    )
    def test_bad_tasks(self, task):
        text = MINIMAL + "workflow wf\n  " + task + "\nend\n"
        assert _error(text)

    def test_duplicate_task_names(self):
        text = (
            MINIMAL
            + "workflow wf\n"
            + "  task t kind=acquire instrument=I angles=3\n"
            + "  task t kind=acquire instrument=I angles=4\n"
            + "end\n"
        )
        assert _error(text)

    def test_unknown_image_host(self):
        assert _error(MINIMAL + "image x:1 host=ghost size=10 service=notebook:80\n")

    def test_unknown_instrument_host(self):
        assert _error(MINIMAL + "instrument I host=ghost phantom=disk:8:0.5:1.0 bins=9\n")


class TestRoundTrip:
    def test_canonical_round_trips(self):
        spec = canonical_spec()
        assert parse_scenario(render_scenario(spec)) == spec

    def test_canonical_text_parses_to_canonical_spec(self):
        assert parse_scenario(canonical_text()) == canonical_spec()

    def test_generated_scenarios_round_trip(self):
        rng = random.Random(99)
        for _ in range(25):
            text = random_scenario_text(
                rng, with_instrument=True, with_image=True
            )
            spec = parse_scenario(text)
            assert parse_scenario(render_scenario(spec)) == spec

    def test_render_starts_with_seed(self):
        assert render_scenario(canonical_spec()).startswith("seed=42\n")
