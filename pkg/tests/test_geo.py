import math

import numpy as np
import pytest

from notilab.geo import (EARTH_RADIUS_KM, GeoPoint, ServerRecord, ServerTableError,
                         great_circle_distance, load_server_table, resolve_location_code)

LONDON = GeoPoint(51.5074, -0.1278)
PARIS = GeoPoint(48.8566, 2.3522)

# computed ahead of time with a 50-digit mpmath haversine, R = 6371.0 km
LONDON_PARIS_KM = 343.556060341042


def test_self_distance_is_exactly_zero():
    assert great_circle_distance(LONDON, LONDON) == 0.0


def test_antipodal_points_half_circumference():
    d = great_circle_distance(GeoPoint(0.0, 0.0), GeoPoint(0.0, 180.0))
    assert abs(d - math.pi * EARTH_RADIUS_KM) < 1.0
    assert abs(d - 20015.1) < 1.0


def test_london_paris_regression_constant():
    assert great_circle_distance(LONDON, PARIS) == pytest.approx(LONDON_PARIS_KM, abs=1e-6)


def _random_points(rng, n):
    lat = rng.uniform(-90.0, 90.0, size=n)
    lon = rng.uniform(-180.0, 180.0, size=n)
    return [GeoPoint(a, o) for a, o in zip(lat, lon)]


def test_symmetry_on_random_pairs():
    rng = np.random.default_rng(7)
    pts = _random_points(rng, 400)
    for a, b in zip(pts[::2], pts[1::2]):
        assert great_circle_distance(a, b) == great_circle_distance(b, a)


def test_triangle_inequality_on_random_triples():
    rng = np.random.default_rng(11)
    pts = _random_points(rng, 3000)
    for a, b, c in zip(pts[::3], pts[1::3], pts[2::3]):
        ab = great_circle_distance(a, b)
        bc = great_circle_distance(b, c)
        ac = great_circle_distance(a, c)
        assert ac <= ab + bc + 1e-6


def test_distance_nonnegative_and_bounded():
    rng = np.random.default_rng(3)
    pts = _random_points(rng, 200)
    for a, b in zip(pts[::2], pts[1::2]):
        d = great_circle_distance(a, b)
        assert 0.0 <= d <= math.pi * EARTH_RADIUS_KM + 1e-9


@pytest.mark.parametrize("lat,lon", [(90.5, 0.0), (-91.0, 0.0), (0.0, 180.5), (0.0, -200.0)])
def test_geopoint_rejects_out_of_bounds(lat, lon):
    with pytest.raises(ValueError):
        GeoPoint(lat, lon)


@pytest.mark.parametrize("code", ["FRA", "fr", "fra1", "fraa", "f-a"])
def test_server_record_rejects_bad_codes(code):
    with pytest.raises(ValueError):
        ServerRecord("signal", "198.51.100.1", LONDON, code)


def test_server_record_accepts_valid_code_and_none():
    ServerRecord("signal", "198.51.100.1", LONDON, "fra")
    ServerRecord("signal", "198.51.100.1", LONDON, None)


def test_resolve_location_code():
    pt = resolve_location_code("fra")
    assert pt is not None and 49 < pt.latitude < 51
    assert resolve_location_code("FRA") == pt  # case-insensitive lookup
    assert resolve_location_code("qqq") is None


HEADER = "messenger,address,code,lat,lon\n"


def test_load_server_table_header_only(tmp_path):
    p = tmp_path / "servers.csv"
    p.write_text(HEADER)
    assert load_server_table(p) == []


def test_load_server_table_single_row(tmp_path):
    p = tmp_path / "servers.csv"
    p.write_text(HEADER + "whatsapp,192.0.2.44,fra,50.1,8.6\n")
    records = load_server_table(p)
    assert len(records) == 1
    rec = records[0]
    assert rec.messenger == "whatsapp"
    assert rec.address == "192.0.2.44"
    assert rec.location == GeoPoint(50.1, 8.6)
    assert rec.location_code == "fra"


def test_load_server_table_row_count_preserved(tmp_path):
    p = tmp_path / "servers.csv"
    rows = "".join(f"threema,203.0.113.{i},,47.4,8.5\n" for i in range(7))
    p.write_text(HEADER + rows)
    assert len(load_server_table(p)) == 7


def test_load_server_table_bad_latitude_names_row_and_field(tmp_path):
    p = tmp_path / "servers.csv"
    p.write_text(HEADER + "signal,198.51.100.1,,123.0,8.0\n")
    with pytest.raises(ServerTableError, match=r":2: field lat"):
        load_server_table(p)


def test_load_server_table_bad_code_names_row(tmp_path):
    p = tmp_path / "servers.csv"
    p.write_text(HEADER + "signal,198.51.100.1,FRA,50.0,8.0\n")
    with pytest.raises(ServerTableError, match=r":2: field code"):
        load_server_table(p)


def test_load_server_table_resolves_code_when_coords_missing(tmp_path):
    p = tmp_path / "servers.csv"
    p.write_text(HEADER + "whatsapp,192.0.2.44,zrh,,\n")
    rec = load_server_table(p)[0]
    assert rec.location == resolve_location_code("zrh")


def test_load_server_table_unresolvable_code_without_coords(tmp_path):
    p = tmp_path / "servers.csv"
    p.write_text(HEADER + "whatsapp,192.0.2.44,qqq,,\n")
    with pytest.raises(ServerTableError, match="qqq"):
        load_server_table(p)


def test_load_server_table_rejects_wrong_header(tmp_path):
    p = tmp_path / "servers.csv"
    p.write_text("a,b,c\nx,y,z\n")
    with pytest.raises(ServerTableError, match="header"):
        load_server_table(p)
