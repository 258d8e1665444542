"""Map-format parsing: document mirroring, subset policing, sampling."""

from __future__ import annotations

import math
import pathlib

import numpy as np
import pytest

from trafficlogic.opendrive import (
    MapParseError,
    RefLineSegment,
    UnsupportedFeatureError,
    parse_opendrive,
    sample_centerline,
)

DATA = pathlib.Path(__file__).parent / "data"


def doc(body: str) -> str:
    return (
        '<?xml version="1.0"?>\n<OpenDRIVE>\n'
        "<header revMajor=\"1\" revMinor=\"6\"/>\n" + body + "\n</OpenDRIVE>\n"
    )


def straight_road(road_id: str = "1", length: float = 100.0, lanes_left: int = 2) -> str:
    lane_xml = "\n".join(
        f'<lane id="{i}" type="driving" level="false">'
        f'<width sOffset="0" a="4.0" b="0" c="0" d="0"/></lane>'
        for i in range(1, lanes_left + 1)
    )
    return f"""
<road id="{road_id}" length="{length}" junction="-1">
  <planView>
    <geometry s="0" x="0" y="0" hdg="0" length="{length}">
      <line/>
    </geometry>
  </planView>
  <lanes>
    <laneSection s="0">
      <left>{lane_xml}</left>
      <center><lane id="0" type="none" level="false"/></center>
    </laneSection>
  </lanes>
</road>"""


class TestRefLineSegment:
    def test_line_point_and_heading(self):
        seg = RefLineSegment("line", (1.0, 2.0), math.pi / 2, 10.0, 0.0)
        assert seg.point_at(4.0) == pytest.approx((1.0, 6.0))
        assert seg.heading_at(4.0) == pytest.approx(math.pi / 2)

    def test_arc_matches_circle_parametrization(self):
        # curvature 0.01 over 10 m, starting east from the origin
        seg = RefLineSegment("arc", (0.0, 0.0), 0.0, 10.0, 0.01)
        r = 100.0
        x, y = seg.point_at(10.0)
        assert x == pytest.approx(r * math.sin(10.0 / r), abs=1e-9)
        assert y == pytest.approx(r * (1.0 - math.cos(10.0 / r)), abs=1e-9)
        assert seg.heading_at(10.0) == pytest.approx(0.1)

    def test_negative_curvature_bends_right(self):
        seg = RefLineSegment("arc", (0.0, 0.0), 0.0, 10.0, -0.01)
        _, y = seg.point_at(10.0)
        assert y < 0.0

    def test_invalid_segments_rejected(self):
        with pytest.raises(ValueError):
            RefLineSegment("line", (0.0, 0.0), 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            RefLineSegment("arc", (0.0, 0.0), 0.0, 5.0, 0.0)


class TestParsing:
    def test_single_road_mirrors_document(self):
        model = parse_opendrive(doc(straight_road()))
        assert list(model.roads) == ["1"]
        road = model.road("1")
        assert road.length == 100.0
        assert len(road.sections) == 1
        lanes = road.sections[0].all_lanes()
        assert sorted(l.id for l in lanes) == [1, 2]
        assert {l.side for l in lanes} == {"left"}
        assert lanes[0].width_at(50.0) == pytest.approx(4.0)

    def test_duplicate_road_id(self):
        body = straight_road("7") + straight_road("7")
        with pytest.raises(MapParseError, match="duplicate road id"):
            parse_opendrive(doc(body))

    def test_dangling_road_link(self):
        body = straight_road("1").replace(
            "<planView>",
            '<link><successor elementType="road" elementId="99"/></link><planView>',
        )
        with pytest.raises(MapParseError, match="dangling"):
            parse_opendrive(doc(body))

    def test_junction_with_missing_lane_rejected(self):
        body = (
            straight_road("1")
            + straight_road("2")
            + """
<junction id="10" name="j">
  <connection id="0" incomingRoad="1" connectingRoad="2" contactPoint="start">
    <laneLink from="1" to="9"/>
  </connection>
</junction>"""
        )
        with pytest.raises(MapParseError, match="missing lane 9"):
            parse_opendrive(doc(body))

    @pytest.mark.parametrize("kind", ["spiral", "poly3", "paramPoly3"])
    def test_unsupported_geometry_named_with_line(self, kind):
        body = straight_road().replace("<line/>", f"<{kind}/>")
        with pytest.raises(UnsupportedFeatureError, match=kind) as err:
            parse_opendrive(doc(body))
        assert "(line " in str(err.value)

    def test_malformed_xml(self):
        with pytest.raises(MapParseError, match="XML"):
            parse_opendrive("<OpenDRIVE><road></OpenDRIVE>")

    def test_wrong_root_element(self):
        with pytest.raises(MapParseError, match="OpenDRIVE"):
            parse_opendrive("<granny/>")

    def test_elevation_ignored_with_warning(self, caplog):
        body = straight_road().replace(
            "<planView>", "<elevationProfile/><planView>"
        )
        with caplog.at_level("WARNING"):
            model = parse_opendrive(doc(body))
        assert "planar" in caplog.text
        assert list(model.roads) == ["1"]

    def test_tee_junction_has_six_connecting_roads(self):
        model = parse_opendrive((DATA / "tee_junction.xodr").read_bytes())
        connecting = {
            conn.connecting_road
            for junc in model.junctions.values()
            for conn in junc.connections
        }
        assert len(connecting) == 6


class TestSampling:
    def test_constant_width_left_lane(self):
        model = parse_opendrive(doc(straight_road(lanes_left=1)))
        line = sample_centerline(model, ("1", 1), step=50.0)
        np.testing.assert_allclose(
            line.points, [[0.0, 2.0], [50.0, 2.0], [100.0, 2.0]], atol=1e-12
        )

    def test_right_lane_offsets_negative(self):
        body = straight_road(lanes_left=1).replace(
            "<center><lane id=\"0\" type=\"none\" level=\"false\"/></center>",
            "<center><lane id=\"0\" type=\"none\" level=\"false\"/></center>"
            '<right><lane id="-1" type="driving" level="false">'
            '<width sOffset="0" a="4.0" b="0" c="0" d="0"/></lane></right>',
        )
        model = parse_opendrive(doc(body))
        line = sample_centerline(model, ("1", -1), step=50.0)
        assert line.points[0][1] == pytest.approx(-2.0)

    def test_width_polynomial_is_evaluated(self):
        body = straight_road(lanes_left=1).replace(
            'a="4.0" b="0"', 'a="2.0" b="0.01"'
        )
        model = parse_opendrive(doc(body))
        line = sample_centerline(model, ("1", 1), step=100.0)
        # center offset at the end is half of width(100) = (2 + 0.01*100)/2
        assert line.points[-1][1] == pytest.approx(1.5)

    def test_arc_endpoint_exact(self):
        body = straight_road(lanes_left=1).replace(
            "<line/>", '<arc curvature="0.01"/>'
        ).replace('length="100"', 'length="10"')
        body = body.replace('length="100.0"', 'length="10.0"')
        model = parse_opendrive(doc(body))
        road = model.road("1")
        r = 100.0
        x, y = road.point_at(road.length)
        assert x == pytest.approx(r * math.sin(road.length / r), abs=1e-9)
        assert y == pytest.approx(r * (1.0 - math.cos(road.length / r)), abs=1e-9)

    def test_step_bounds_spacing_and_keeps_endpoints(self):
        model = parse_opendrive(doc(straight_road(lanes_left=1)))
        line = sample_centerline(model, ("1", 1), step=7.0)
        gaps = np.diff(line.arclength)
        assert gaps.max() <= 7.0 + 1e-9
        assert line.points[0][0] == pytest.approx(0.0)
        assert line.points[-1][0] == pytest.approx(100.0)

    def test_unknown_lane(self):
        model = parse_opendrive(doc(straight_road(lanes_left=1)))
        with pytest.raises(KeyError):
            sample_centerline(model, ("1", 5), step=10.0)
        with pytest.raises(MapParseError, match="unknown road"):
            model.road("42")

    def test_nonpositive_step(self):
        model = parse_opendrive(doc(straight_road(lanes_left=1)))
        with pytest.raises(ValueError):
            sample_centerline(model, ("1", 1), step=0.0)
