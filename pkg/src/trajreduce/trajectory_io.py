"""Ingestion, validation and pre-filtering of raw trajectory data.

Trajectories arrive as CSV with one point per row
(``traj_id,time_s,east_m,north_m,alt_m``). Coordinates are assumed to be
already projected onto a local metric plane; no geodetic handling is done
here. This module also classifies tracks as approach or departure, assigns
them to a runway and cuts them down to the airport-side segment below an
altitude ceiling.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

CSV_HEADER = ["traj_id", "time_s", "east_m", "north_m", "alt_m"]


class TrajectoryError(ValueError):
    """Raised on malformed trajectory or airport geometry input."""


class Phase(Enum):
    APPROACH = "approach"
    DEPARTURE = "departure"


@dataclass(frozen=True)
class TrajectoryPoint:
    """One time-stamped 3-D track sample (metres, seconds since track start)."""

    time: float
    east: float
    north: float
    altitude: float

    def __post_init__(self):
        for name in ("time", "east", "north", "altitude"):
            if not math.isfinite(getattr(self, name)):
                raise TrajectoryError(f"non-finite {name} in trajectory point")
        if self.time < 0:
            raise TrajectoryError("negative time in trajectory point")


@dataclass
class Trajectory:
    """Ordered 3-D track of a single aircraft movement.

    Invariants: at least two points, time strictly increasing.
    """

    id: str
    points: list[TrajectoryPoint]

    def __post_init__(self):
        if len(self.points) < 2:
            raise TrajectoryError(f"trajectory {self.id!r} has fewer than 2 points")
        times = [p.time for p in self.points]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise TrajectoryError(f"trajectory {self.id!r} has non-increasing time")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def duration(self) -> float:
        return self.points[-1].time - self.points[0].time

    def first_ground(self) -> tuple[float, float]:
        p = self.points[0]
        return (p.east, p.north)

    def last_ground(self) -> tuple[float, float]:
        p = self.points[-1]
        return (p.east, p.north)


@dataclass(frozen=True)
class Runway:
    id: str
    endpoint_a: tuple[float, float]
    endpoint_b: tuple[float, float]

    def __post_init__(self):
        if self.endpoint_a == self.endpoint_b:
            raise TrajectoryError(f"runway {self.id!r} has coincident endpoints")


@dataclass
class AirportGeometry:
    """Airport reference point and runway centerline segments (metres)."""

    airport_center: tuple[float, float]
    runways: list[Runway]

    def __post_init__(self):
        if not self.runways:
            raise TrajectoryError("airport geometry needs at least one runway")


@dataclass
class ParseResult:
    """Parsed trajectories plus ingestion bookkeeping."""

    trajectories: list[Trajectory]
    n_rejected_short: int = 0
    warnings: list[str] = field(default_factory=list)


def parse_trajectories(source: str | bytes | io.IOBase | Path) -> ParseResult:
    """Parse trajectory CSV into one Trajectory per distinct id.

    Rows for one id need not be contiguous; points are sorted by time.
    Malformed rows raise TrajectoryError naming the 1-based line number.
    Ids with fewer than 2 points are dropped and counted in the result.
    Duplicate timestamps within an id raise TrajectoryError naming the id.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TrajectoryError("empty input: missing header row") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise TrajectoryError(
            f"bad header {header!r}, expected {','.join(CSV_HEADER)}"
        )

    by_id: dict[str, list[tuple[float, float, float, float]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise TrajectoryError(f"line {lineno}: expected 5 fields, got {len(row)}")
        traj_id = row[0].strip()
        if not traj_id:
            raise TrajectoryError(f"line {lineno}: empty traj_id")
        try:
            t, e, n, a = (float(v) for v in row[1:])
        except ValueError:
            raise TrajectoryError(f"line {lineno}: non-numeric field in {row!r}") from None
        if not all(math.isfinite(v) for v in (t, e, n, a)):
            raise TrajectoryError(f"line {lineno}: non-finite value in {row!r}")
        if t < 0:
            raise TrajectoryError(f"line {lineno}: negative time {t}")
        by_id.setdefault(traj_id, []).append((t, e, n, a))

    trajectories = []
    warnings = []
    n_short = 0
    for traj_id, rows in by_id.items():
        rows.sort(key=lambda r: r[0])
        if len(rows) < 2:
            n_short += 1
            warnings.append(f"trajectory {traj_id!r} dropped: fewer than 2 points")
            continue
        if any(r0[0] == r1[0] for r0, r1 in zip(rows, rows[1:])):
            raise TrajectoryError(f"trajectory {traj_id!r} has duplicate timestamps")
        points = [TrajectoryPoint(t, e, n, a) for t, e, n, a in rows]
        trajectories.append(Trajectory(traj_id, points))
    return ParseResult(trajectories, n_short, warnings)


def serialize_trajectories(trajectories: list[Trajectory]) -> str:
    """Inverse of parse_trajectories; floats keep full round-trip precision."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for traj in trajectories:
        for p in traj.points:
            writer.writerow([traj.id, repr(p.time), repr(p.east), repr(p.north), repr(p.altitude)])
    return out.getvalue()


def load_airport_geometry(source: str | Path) -> AirportGeometry:
    """Parse the key-value airport geometry format.

    Lines: ``airport_center = <e>,<n>`` once and
    ``runway = <id>,<ea>,<na>,<eb>,<nb>`` one or more times.
    Blank lines and ``#`` comments are ignored.
    """
    text = source.read_text(encoding="utf-8") if isinstance(source, Path) else source
    center = None
    runways = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise TrajectoryError(f"airport geometry line {lineno}: missing '='")
        key, _, value = line.partition("=")
        key = key.strip()
        parts = [v.strip() for v in value.split(",")]
        try:
            if key == "airport_center":
                if len(parts) != 2:
                    raise ValueError
                center = (float(parts[0]), float(parts[1]))
            elif key == "runway":
                if len(parts) != 5:
                    raise ValueError
                runways.append(
                    Runway(parts[0], (float(parts[1]), float(parts[2])),
                           (float(parts[3]), float(parts[4])))
                )
            else:
                raise TrajectoryError(f"airport geometry line {lineno}: unknown key {key!r}")
        except ValueError:
            raise TrajectoryError(f"airport geometry line {lineno}: malformed value {value!r}") from None
    if center is None:
        raise TrajectoryError("airport geometry: missing airport_center")
    return AirportGeometry(center, runways)


def serialize_airport_geometry(geometry: AirportGeometry) -> str:
    lines = [f"airport_center = {geometry.airport_center[0]!r},{geometry.airport_center[1]!r}"]
    for rw in geometry.runways:
        lines.append(
            f"runway = {rw.id},{rw.endpoint_a[0]!r},{rw.endpoint_a[1]!r},"
            f"{rw.endpoint_b[0]!r},{rw.endpoint_b[1]!r}"
        )
    return "\n".join(lines) + "\n"


def _ground_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def classify_phase(trajectory: Trajectory, geometry: AirportGeometry) -> Phase:
    """Departure iff the track starts closer to the airport than it ends.

    Equidistant endpoints classify as Approach (documented tie-break).
    """
    d_first = _ground_distance(geometry.airport_center, trajectory.first_ground())
    d_last = _ground_distance(geometry.airport_center, trajectory.last_ground())
    return Phase.DEPARTURE if d_first < d_last else Phase.APPROACH


def point_segment_distance(p: tuple[float, float], a: tuple[float, float],
                           b: tuple[float, float]) -> float:
    """Ground distance from point p to segment ab."""
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def assign_runway(trajectory: Trajectory, geometry: AirportGeometry, phase: Phase) -> str:
    """Runway whose centerline is closest to the airport-side track endpoint.

    Departures are matched on their first point, approaches on their last.
    Ties resolve to the lexicographically smallest runway id.
    """
    endpoint = trajectory.first_ground() if phase is Phase.DEPARTURE else trajectory.last_ground()
    best = min(
        geometry.runways,
        key=lambda rw: (point_segment_distance(endpoint, rw.endpoint_a, rw.endpoint_b), rw.id),
    )
    return best.id


def filter_altitude(trajectory: Trajectory, max_altitude: float, phase: Phase) -> Trajectory | None:
    """Keep the airport-side contiguous run of points at or below max_altitude.

    Departures keep the maximal prefix, approaches the maximal suffix, so the
    filtered track stays a single connected segment. Returns None when fewer
    than 2 points survive (caller decides how to count the drop).
    """
    if max_altitude <= 0:
        raise ValueError("max_altitude must be positive")
    pts = trajectory.points
    if phase is Phase.DEPARTURE:
        cut = 0
        while cut < len(pts) and pts[cut].altitude <= max_altitude:
            cut += 1
        kept = pts[:cut]
    else:
        cut = len(pts)
        while cut > 0 and pts[cut - 1].altitude <= max_altitude:
            cut -= 1
        kept = pts[cut:]
    if len(kept) < 2:
        return None
    if len(kept) == len(pts):
        return trajectory
    return Trajectory(trajectory.id, list(kept))
