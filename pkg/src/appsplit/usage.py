"""Usage metrics from activity visit logs.

Logs are CSV with header ``timestamp,user_id,app_id,activity``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import InvalidParams, NoVisits
from .model import AppPackage

__all__ = [
    "UsageRecord", "UsageDataset", "read_usage_csv", "write_usage_csv", "feature_usage_ratio",
    "user_counts", "distinct_users", "usage_entropy", "entropy_from_counts",
    "select_base_activities",
]

log = logging.getLogger(__name__)
CSV_FIELDS = ("timestamp", "user_id", "app_id", "activity")


@dataclass(frozen=True)
class UsageRecord:
    timestamp: str
    user_id: str
    app_id: str
    activity: str


@dataclass
class UsageDataset:
    records: list = field(default_factory=list)

    def for_app(self, app: AppPackage) -> list[UsageRecord]:
        """Records of ``app`` whose activity the manifest declares.

        Activities the manifest does not know are dropped with a warning;
        they usually come from logs of another app version.
        """
        declared = app.activities
        kept, unknown = [], set()
        for r in self.records:
            if r.app_id != app.app_id:
                continue
            if r.activity in declared:
                kept.append(r)
            else:
                unknown.add(r.activity)
        if unknown:
            log.warning("%s: ignoring undeclared activities %s", app.app_id, sorted(unknown))
        return kept


def read_usage_csv(source) -> UsageDataset:
    """Read a usage log from a path or a text stream."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as f:
            return read_usage_csv(f)
    reader = csv.DictReader(source)
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_FIELDS:
        raise InvalidParams(f"usage CSV header must be {','.join(CSV_FIELDS)}")
    records = []
    for row in reader:
        if not row["activity"]:
            raise InvalidParams(f"empty activity on line {reader.line_num}")
        records.append(UsageRecord(row["timestamp"], row["user_id"], row["app_id"], row["activity"]))
    return UsageDataset(records)


def write_usage_csv(ds: UsageDataset, dest=None):
    """Write ``ds`` to a path, or return the CSV text when ``dest`` is None."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in ds.records:
        writer.writerow((r.timestamp, r.user_id, r.app_id, r.activity))
    if dest is None:
        return buf.getvalue()
    Path(dest).write_text(buf.getvalue(), encoding="utf-8")


def feature_usage_ratio(ds: UsageDataset, app: AppPackage) -> float:
    visited = {r.activity for r in ds.for_app(app)}
    return len(visited) / len(app.activities)


def user_counts(ds: UsageDataset, app: AppPackage) -> dict[str, int]:
    """Number of distinct users per visited activity."""
    users = defaultdict(set)
    for r in ds.for_app(app):
        users[r.activity].add(r.user_id)
    return {a: len(u) for a, u in sorted(users.items())}


def distinct_users(ds: UsageDataset, app: AppPackage) -> int:
    return len({r.user_id for r in ds.for_app(app)})


def entropy_from_counts(counts) -> float:
    counts = [c for c in counts if c > 0]
    if not counts:
        raise NoVisits("no visited activity")
    total = math.fsum(counts)
    return max(0.0, -math.fsum((c / total) * math.log(c / total) for c in counts))


def usage_entropy(ds: UsageDataset, app: AppPackage) -> float:
    """Shannon entropy (natural log) of the per-activity distinct-user distribution."""
    counts = user_counts(ds, app)
    if not counts:
        raise NoVisits(app.app_id)
    return entropy_from_counts(counts.values())


def select_base_activities(ds: UsageDataset, app: AppPackage, coverage: float) -> list[str]:
    """Most visited activities covering ``coverage`` of all visits, plus launcher and welcome.

    Activities are ranked by visit count (ties by name) and the shortest
    prefix whose cumulative share reaches ``coverage`` is kept.
    """
    if not 0 < coverage <= 1:
        raise InvalidParams(f"coverage must be in (0, 1], got {coverage}")
    man = app.manifest
    chosen = [man.launcher_activity, *man.welcome_activities]
    visits = Counter(r.activity for r in ds.for_app(app))
    total = sum(visits.values())
    if total:
        # Decimal reading of the float, so 0.8 means 4/5 and not its binary neighbour.
        goal = Fraction(repr(coverage)) * total
        cumulative = 0
        for activity, count in sorted(visits.items(), key=lambda kv: (-kv[1], kv[0])):
            if cumulative >= goal:
                break
            chosen.append(activity)
            cumulative += count
    return list(dict.fromkeys(chosen))
