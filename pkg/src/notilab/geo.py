"""Server location bookkeeping and great-circle distances."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

EARTH_RADIUS_KM = 6371.0


class ServerTableError(ValueError):
    """Raised when a server table row cannot be parsed or validated."""


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class ServerRecord:
    messenger: str
    address: str
    location: GeoPoint
    location_code: str | None = None

    def __post_init__(self):
        code = self.location_code
        if code is not None and not (len(code) == 3 and code.isascii() and code.isalpha() and code.islower()):
            raise ValueError(f"location code {code!r} is not 3 lowercase ASCII letters")


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance in km on a sphere of radius 6371.0 km."""
    lat1, lon1 = math.radians(a.latitude), math.radians(a.longitude)
    lat2, lon2 = math.radians(b.latitude), math.radians(b.longitude)
    h = (math.sin((lat2 - lat1) / 2.0) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def _load_code_table() -> dict[str, GeoPoint]:
    table = {}
    with resources.files("notilab.data").joinpath("location_codes.csv").open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            table[row["code"]] = GeoPoint(float(row["lat"]), float(row["lon"]))
    return table


_CODE_TABLE: dict[str, GeoPoint] | None = None


def resolve_location_code(code: str) -> GeoPoint | None:
    """Look up a 3-letter location code in the bundled table.

    Unknown codes return None; they are never guessed from similar codes.
    """
    global _CODE_TABLE
    if _CODE_TABLE is None:
        _CODE_TABLE = _load_code_table()
    return _CODE_TABLE.get(code.lower())


def load_server_table(path) -> list[ServerRecord]:
    """Read a server table CSV (header: messenger,address,code,lat,lon).

    Rows with empty lat/lon fall back to resolving the code column;
    any violation is reported with its line number and field name.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["messenger", "address", "code", "lat", "lon"]
        if reader.fieldnames != expected:
            raise ServerTableError(f"{path}: expected header {','.join(expected)}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            code = row["code"].strip() or None
            if row["lat"].strip() == "" and row["lon"].strip() == "":
                if code is None:
                    raise ServerTableError(f"{path}:{lineno}: no coordinates and no code to resolve")
                loc = resolve_location_code(code)
                if loc is None:
                    raise ServerTableError(f"{path}:{lineno}: code {code!r} not in bundled lookup and no coordinates given")
            else:
                try:
                    lat = float(row["lat"])
                except ValueError:
                    raise ServerTableError(f"{path}:{lineno}: field lat: not a number: {row['lat']!r}") from None
                try:
                    lon = float(row["lon"])
                except ValueError:
                    raise ServerTableError(f"{path}:{lineno}: field lon: not a number: {row['lon']!r}") from None
                try:
                    loc = GeoPoint(lat, lon)
                except ValueError as exc:
                    field = "lat" if "latitude" in str(exc) else "lon"
                    raise ServerTableError(f"{path}:{lineno}: field {field}: {exc}") from None
            try:
                records.append(ServerRecord(row["messenger"], row["address"], loc, code))
            except ValueError as exc:
                raise ServerTableError(f"{path}:{lineno}: field code: {exc}") from None
    return records
