"""Abstract application package model and its ``.apkg`` archive format.

An :class:`AppPackage` is the triple of code (classes), identifier
resources plus assets, and opaque other payloads.  Only sizes and the
reference structure matter; payload contents are never modelled.

The archive is a deflate zip holding ``manifest.json``, ``code.json``,
``res.json``, ``assets.json`` and ``other.json``.  Top-level arrays are
sorted by name and every zip entry carries a fixed timestamp, so equal
packages serialize to identical bytes.
"""

from __future__ import annotations

import enum
import hashlib
import io
import json
import re
import zipfile
import zlib
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator

from .errors import MalformedArchive, SchemaViolation

__all__ = [
    "ClassKind", "ComponentKind", "IntentFilter", "ActivityDecl", "ComponentDecl",
    "Manifest", "CallSite", "LaunchSite", "MethodDef", "ClassUnit", "ResourceItem",
    "AssetItem", "OtherPayload", "AppPackage", "method_id", "split_method_id",
    "validate_package", "parse_package", "serialize_package", "total_size",
    "record_digest", "class_to_record", "class_from_record", "resource_to_record",
    "resource_from_record", "manifest_to_record", "manifest_from_record",
    "write_zip", "read_zip", "canonical_json",
]

# Fixed zip timestamp: the earliest date the format can represent.
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
RESOURCE_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*/[^/\s]+$")
LIFECYCLE_METHODS = ("onCreate", "onStart", "onResume")


class ClassKind(str, enum.Enum):
    ACTIVITY = "Activity"
    SERVICE = "Service"
    BROADCAST_RECEIVER = "BroadcastReceiver"
    CONTENT_PROVIDER = "ContentProvider"
    POJO = "Pojo"


class ComponentKind(str, enum.Enum):
    SERVICE = "Service"
    BROADCAST_RECEIVER = "BroadcastReceiver"
    CONTENT_PROVIDER = "ContentProvider"


def method_id(class_name: str, method_name: str) -> str:
    return f"{class_name}.{method_name}"


def split_method_id(mid: str) -> tuple[str, str]:
    """Split ``pkg.Cls.method`` into ``("pkg.Cls", "method")``."""
    cls, sep, name = mid.rpartition(".")
    if not sep or not cls or not name:
        raise ValueError(f"not a qualified method id: {mid!r}")
    return cls, name


@dataclass(frozen=True)
class IntentFilter:
    action: str
    categories: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "categories", frozenset(self.categories))

    def matches(self, action: str, categories: Iterable[str]) -> bool:
        return self.action == action and self.categories >= frozenset(categories)


@dataclass(frozen=True)
class ActivityDecl:
    class_name: str
    intent_filters: tuple = ()
    welcome: bool = False

    def __post_init__(self):
        object.__setattr__(self, "intent_filters", tuple(self.intent_filters))

    @property
    def exported(self) -> bool:
        return bool(self.intent_filters)


@dataclass(frozen=True)
class ComponentDecl:
    class_name: str
    kind: ComponentKind

    def __post_init__(self):
        object.__setattr__(self, "kind", ComponentKind(self.kind))


@dataclass(frozen=True)
class Manifest:
    launcher_activity: str
    activities: tuple = ()
    other_components: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "activities", tuple(self.activities))
        object.__setattr__(self, "other_components", tuple(self.other_components))

    def activity(self, name: str) -> ActivityDecl | None:
        for decl in self.activities:
            if decl.class_name == name:
                return decl
        return None

    @property
    def welcome_activities(self) -> tuple[str, ...]:
        """Welcome activities in declaration order, launcher excluded."""
        return tuple(
            d.class_name for d in self.activities
            if d.welcome and d.class_name != self.launcher_activity
        )


@dataclass(frozen=True)
class CallSite:
    target_method: str
    dynamic: bool = False


@dataclass(frozen=True)
class LaunchSite:
    """An intent launch inside a method body.

    ``kind`` is ``"explicit"`` (``target_activity`` set) or ``"implicit"``
    (``action`` and ``categories`` set).
    """

    kind: str
    target_activity: str | None = None
    action: str | None = None
    categories: frozenset = frozenset()
    hooked: bool = False

    def __post_init__(self):
        object.__setattr__(self, "categories", frozenset(self.categories))
        if self.kind == "explicit":
            if not self.target_activity or self.action is not None or self.categories:
                raise ValueError("explicit launch needs target_activity only")
        elif self.kind == "implicit":
            if not self.action or self.target_activity is not None:
                raise ValueError("implicit launch needs an action and no target")
        else:
            raise ValueError(f"unknown launch kind {self.kind!r}")

    @classmethod
    def explicit(cls, target: str, hooked: bool = False) -> "LaunchSite":
        return cls("explicit", target_activity=target, hooked=hooked)

    @classmethod
    def implicit(cls, action: str, categories: Iterable[str] = ()) -> "LaunchSite":
        return cls("implicit", action=action, categories=frozenset(categories))


@dataclass(frozen=True)
class MethodDef:
    name: str
    calls: tuple = ()
    resource_refs: tuple = ()
    launches: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "calls", tuple(self.calls))
        object.__setattr__(self, "resource_refs", tuple(self.resource_refs))
        object.__setattr__(self, "launches", tuple(self.launches))


@dataclass(frozen=True)
class ClassUnit:
    name: str
    kind: ClassKind
    size_bytes: int
    methods: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ClassKind(self.kind))
        object.__setattr__(self, "methods", tuple(self.methods))

    def method(self, name: str) -> MethodDef | None:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    def launch_sites(self) -> list[LaunchSite]:
        """All launch sites of the class, in method then statement order."""
        return [site for m in self.methods for site in m.launches]

    def referred_resources(self) -> set[str]:
        return {r for m in self.methods for r in m.resource_refs}


@dataclass(frozen=True)
class ResourceItem:
    id: str
    size_bytes: int
    refs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "refs", tuple(self.refs))


@dataclass(frozen=True)
class AssetItem:
    path: str
    size_bytes: int


@dataclass(frozen=True)
class OtherPayload:
    name: str
    size_bytes: int


@dataclass(frozen=True)
class AppPackage:
    """A complete application: manifest, code, resources, assets, other payloads.

    Entity collections are stored as tuples sorted by name so that
    structural equality does not depend on construction order.
    """

    app_id: str
    version: int
    manifest: Manifest
    classes: tuple = ()
    resources: tuple = ()
    assets: tuple = ()
    other: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(sorted(self.classes, key=lambda c: c.name)))
        object.__setattr__(self, "resources", tuple(sorted(self.resources, key=lambda r: r.id)))
        object.__setattr__(self, "assets", tuple(sorted(self.assets, key=lambda a: a.path)))
        object.__setattr__(self, "other", tuple(sorted(self.other, key=lambda o: o.name)))

    @cached_property
    def class_map(self) -> dict[str, ClassUnit]:
        return {c.name: c for c in self.classes}

    @cached_property
    def resource_map(self) -> dict[str, ResourceItem]:
        return {r.id: r for r in self.resources}

    def cls(self, name: str) -> ClassUnit:
        return self.class_map[name]

    def classes_of_kind(self, *kinds: ClassKind) -> set[str]:
        return {c.name for c in self.classes if c.kind in kinds}

    @property
    def activities(self) -> set[str]:
        return self.classes_of_kind(ClassKind.ACTIVITY)

    @property
    def other_components(self) -> set[str]:
        """OLS: services, broadcast receivers and content providers."""
        return self.classes_of_kind(
            ClassKind.SERVICE, ClassKind.BROADCAST_RECEIVER, ClassKind.CONTENT_PROVIDER
        )

    @property
    def pojos(self) -> set[str]:
        return self.classes_of_kind(ClassKind.POJO)

    def methods(self) -> Iterator[tuple[str, MethodDef]]:
        for c in self.classes:
            for m in c.methods:
                yield method_id(c.name, m.name), m

    def has_method(self, mid: str) -> bool:
        try:
            cls_name, name = split_method_id(mid)
        except ValueError:
            return False
        c = self.class_map.get(cls_name)
        return c is not None and c.method(name) is not None


def total_size(app: AppPackage) -> int:
    """Sum of ``size_bytes`` over classes, resources, assets and other payloads."""
    return (
        sum(c.size_bytes for c in app.classes)
        + sum(r.size_bytes for r in app.resources)
        + sum(a.size_bytes for a in app.assets)
        + sum(o.size_bytes for o in app.other)
    )


# -- validation ---------------------------------------------------------------

def _check_size(entity: str, value) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise SchemaViolation(entity, f"size_bytes must be a non-negative integer, got {value!r}")


def _check_unique(names: list[str], what: str) -> None:
    seen = set()
    for n in names:
        if n in seen:
            raise SchemaViolation(n, f"duplicate {what}")
        seen.add(n)


def validate_package(app: AppPackage) -> AppPackage:
    """Raise :class:`SchemaViolation` on the first invariant breach; return ``app``."""
    _check_unique([c.name for c in app.classes], "class name")
    _check_unique([r.id for r in app.resources], "resource id")
    _check_unique([a.path for a in app.assets], "asset path")
    _check_unique([o.name for o in app.other], "payload name")

    for a in app.assets:
        _check_size(a.path, a.size_bytes)
    for o in app.other:
        _check_size(o.name, o.size_bytes)

    res_ids = set(app.resource_map)
    for r in app.resources:
        if not RESOURCE_ID.match(r.id):
            raise SchemaViolation(r.id, "resource id must have the form type/name")
        _check_size(r.id, r.size_bytes)
        for ref in r.refs:
            if ref == r.id:
                raise SchemaViolation(r.id, "resource refers to itself")
            if ref not in res_ids:
                raise SchemaViolation(r.id, f"reference to undeclared resource {ref!r}")

    man = app.manifest
    declared_acts = [d.class_name for d in man.activities]
    _check_unique(declared_acts, "activity declaration")
    _check_unique([d.class_name for d in man.other_components], "component declaration")
    if man.launcher_activity not in declared_acts:
        raise SchemaViolation(man.launcher_activity, "launcher is not a declared activity")
    for d in man.activities:
        c = app.class_map.get(d.class_name)
        if c is None:
            raise SchemaViolation(d.class_name, "declared activity has no class")
        if c.kind is not ClassKind.ACTIVITY:
            raise SchemaViolation(d.class_name, f"declared as activity but class kind is {c.kind.value}")
        for f in d.intent_filters:
            if not f.action:
                raise SchemaViolation(d.class_name, "intent filter without action")
    for d in man.other_components:
        c = app.class_map.get(d.class_name)
        if c is None:
            raise SchemaViolation(d.class_name, "declared component has no class")
        if c.kind.value != d.kind.value:
            raise SchemaViolation(d.class_name, f"declared {d.kind.value} but class kind is {c.kind.value}")
    declared = set(declared_acts) | {d.class_name for d in man.other_components}
    for c in app.classes:
        if c.kind is not ClassKind.POJO and c.name not in declared:
            raise SchemaViolation(c.name, f"{c.kind.value} class missing from manifest")

    act_names = set(declared_acts)
    for c in app.classes:
        if not c.name:
            raise SchemaViolation(c.name, "empty class name")
        _check_size(c.name, c.size_bytes)
        _check_unique([method_id(c.name, m.name) for m in c.methods], "method")
        for m in c.methods:
            mid = method_id(c.name, m.name)
            if not m.name or "." in m.name:
                raise SchemaViolation(mid, "method names must be non-empty and dot-free")
            for call in m.calls:
                if not app.has_method(call.target_method):
                    raise SchemaViolation(mid, f"call to unknown method {call.target_method!r}")
            for ref in m.resource_refs:
                if ref not in res_ids:
                    raise SchemaViolation(mid, f"reference to undeclared resource {ref!r}")
            for site in m.launches:
                if site.kind == "explicit" and site.target_activity not in act_names:
                    raise SchemaViolation(mid, f"launch of undeclared activity {site.target_activity!r}")
    return app


# -- records ------------------------------------------------------------------

def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def record_digest(record: dict) -> str:
    return hashlib.sha256(canonical_json(record)).hexdigest()


def _launch_to_record(site: LaunchSite) -> dict:
    if site.kind == "explicit":
        return {"kind": "explicit", "target_activity": site.target_activity, "hooked": site.hooked}
    return {
        "kind": "implicit",
        "action": site.action,
        "categories": sorted(site.categories),
        "hooked": site.hooked,
    }


def class_to_record(c: ClassUnit) -> dict:
    return {
        "name": c.name,
        "kind": c.kind.value,
        "size_bytes": c.size_bytes,
        "methods": [
            {
                "name": m.name,
                "calls": [{"target_method": s.target_method, "dynamic": s.dynamic} for s in m.calls],
                "resource_refs": list(m.resource_refs),
                "launches": [_launch_to_record(s) for s in m.launches],
            }
            for m in c.methods
        ],
    }


def resource_to_record(r: ResourceItem) -> dict:
    return {"id": r.id, "size_bytes": r.size_bytes, "refs": list(r.refs)}


def manifest_to_record(app: AppPackage) -> dict:
    man = app.manifest
    return {
        "app_id": app.app_id,
        "version": app.version,
        "launcher_activity": man.launcher_activity,
        "activities": [
            {
                "class_name": d.class_name,
                "welcome": d.welcome,
                "intent_filters": [
                    {"action": f.action, "categories": sorted(f.categories)} for f in d.intent_filters
                ],
            }
            for d in man.activities
        ],
        "other_components": [
            {"class_name": d.class_name, "kind": d.kind.value} for d in man.other_components
        ],
    }


class _Reader:
    """Typed field access over decoded JSON; any mismatch is a MalformedArchive."""

    def __init__(self, where: str):
        self.where = where

    def fail(self, msg: str):
        raise MalformedArchive(f"{self.where}: {msg}")

    def obj(self, value, what: str) -> dict:
        if not isinstance(value, dict):
            self.fail(f"{what} must be an object")
        return value

    def get(self, d: dict, key: str, typ, what: str):
        if key not in d:
            self.fail(f"{what} lacks field {key!r}")
        value = d[key]
        if typ is int and isinstance(value, bool):
            self.fail(f"{what}.{key} must be an integer")
        if not isinstance(value, typ):
            self.fail(f"{what}.{key} has wrong type {type(value).__name__}")
        return value

    def strings(self, d: dict, key: str, what: str) -> list[str]:
        values = self.get(d, key, list, what)
        if not all(isinstance(v, str) for v in values):
            self.fail(f"{what}.{key} must hold strings")
        return values


def _launch_from_record(rd: _Reader, d, what: str) -> LaunchSite:
    d = rd.obj(d, what)
    kind = rd.get(d, "kind", str, what)
    hooked = rd.get(d, "hooked", bool, what)
    try:
        if kind == "explicit":
            return LaunchSite.explicit(rd.get(d, "target_activity", str, what), hooked=hooked)
        if kind == "implicit":
            return LaunchSite("implicit", action=rd.get(d, "action", str, what),
                              categories=frozenset(rd.strings(d, "categories", what)), hooked=hooked)
    except ValueError as exc:
        rd.fail(f"{what}: {exc}")
    rd.fail(f"{what} has unknown launch kind {kind!r}")


def class_from_record(d, where: str = "code.json") -> ClassUnit:
    rd = _Reader(where)
    d = rd.obj(d, "class record")
    name = rd.get(d, "name", str, "class")
    what = f"class {name!r}"
    kind = rd.get(d, "kind", str, what)
    try:
        kind = ClassKind(kind)
    except ValueError:
        rd.fail(f"{what} has unknown kind {kind!r}")
    methods = []
    for md in rd.get(d, "methods", list, what):
        md = rd.obj(md, f"{what} method")
        mname = rd.get(md, "name", str, f"{what} method")
        mwhat = f"method {name}.{mname}"
        calls = []
        for cd in rd.get(md, "calls", list, mwhat):
            cd = rd.obj(cd, f"{mwhat} call")
            calls.append(CallSite(rd.get(cd, "target_method", str, f"{mwhat} call"),
                                  rd.get(cd, "dynamic", bool, f"{mwhat} call")))
        launches = [_launch_from_record(rd, ld, f"{mwhat} launch")
                    for ld in rd.get(md, "launches", list, mwhat)]
        methods.append(MethodDef(mname, tuple(calls), tuple(rd.strings(md, "resource_refs", mwhat)),
                                 tuple(launches)))
    return ClassUnit(name, kind, rd.get(d, "size_bytes", int, what), tuple(methods))


def resource_from_record(d, where: str = "res.json") -> ResourceItem:
    rd = _Reader(where)
    d = rd.obj(d, "resource record")
    rid = rd.get(d, "id", str, "resource")
    what = f"resource {rid!r}"
    return ResourceItem(rid, rd.get(d, "size_bytes", int, what), tuple(rd.strings(d, "refs", what)))


def manifest_from_record(d, where: str = "manifest.json") -> tuple[str, int, Manifest]:
    rd = _Reader(where)
    d = rd.obj(d, "manifest")
    acts = []
    for ad in rd.get(d, "activities", list, "manifest"):
        ad = rd.obj(ad, "activity declaration")
        cname = rd.get(ad, "class_name", str, "activity declaration")
        what = f"activity {cname!r}"
        filters = []
        for fd in rd.get(ad, "intent_filters", list, what):
            fd = rd.obj(fd, f"{what} filter")
            filters.append(IntentFilter(rd.get(fd, "action", str, f"{what} filter"),
                                        frozenset(rd.strings(fd, "categories", f"{what} filter"))))
        acts.append(ActivityDecl(cname, tuple(filters), rd.get(ad, "welcome", bool, what)))
    comps = []
    for cd in rd.get(d, "other_components", list, "manifest"):
        cd = rd.obj(cd, "component declaration")
        cname = rd.get(cd, "class_name", str, "component declaration")
        kind = rd.get(cd, "kind", str, f"component {cname!r}")
        try:
            comps.append(ComponentDecl(cname, ComponentKind(kind)))
        except ValueError:
            rd.fail(f"component {cname!r} has unknown kind {kind!r}")
    man = Manifest(rd.get(d, "launcher_activity", str, "manifest"), tuple(acts), tuple(comps))
    return rd.get(d, "app_id", str, "manifest"), rd.get(d, "version", int, "manifest"), man


# -- zip container --------------------------------------------------------------

def write_zip(entries: dict[str, object]) -> bytes:
    """Deterministic deflate zip of JSON documents, entries in name order."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, canonical_json(entries[name]))
    return buf.getvalue()


def read_zip(data: bytes, required: Iterable[str], optional: Iterable[str] = ()) -> dict[str, object]:
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise MalformedArchive("archive must be bytes")
    try:
        zf = zipfile.ZipFile(io.BytesIO(bytes(data)))
    except (zipfile.BadZipFile, OSError, ValueError, NotImplementedError) as exc:
        raise MalformedArchive(f"not a deflate container: {exc}") from None
    out = {}
    with zf:
        names = set(zf.namelist())
        for name in list(required) + list(optional):
            if name not in names:
                if name in required:
                    raise MalformedArchive(f"missing entry {name}")
                continue
            try:
                out[name] = json.loads(zf.read(name).decode("utf-8"))
            except (zipfile.BadZipFile, zlib.error, OSError, ValueError, EOFError,
                    NotImplementedError, RuntimeError) as exc:
                raise MalformedArchive(f"{name}: unreadable ({exc})") from None
    return out


PACKAGE_ENTRIES = ("assets.json", "code.json", "manifest.json", "other.json", "res.json")


def serialize_package(app: AppPackage) -> bytes:
    return write_zip({
        "manifest.json": manifest_to_record(app),
        "code.json": [class_to_record(c) for c in app.classes],
        "res.json": [resource_to_record(r) for r in app.resources],
        "assets.json": [{"path": a.path, "size_bytes": a.size_bytes} for a in app.assets],
        "other.json": [{"name": o.name, "size_bytes": o.size_bytes} for o in app.other],
    })


def _sized_items(rd: _Reader, doc, key: str, cls):
    if not isinstance(doc, list):
        rd.fail("top level must be an array")
    items = []
    for d in doc:
        d = rd.obj(d, "record")
        items.append(cls(rd.get(d, key, str, "record"), rd.get(d, "size_bytes", int, "record")))
    return items


def parse_package(archive_bytes: bytes) -> AppPackage:
    docs = read_zip(archive_bytes, PACKAGE_ENTRIES)
    app_id, version, man = manifest_from_record(docs["manifest.json"])
    for name in ("code.json", "res.json"):
        if not isinstance(docs[name], list):
            raise MalformedArchive(f"{name}: top level must be an array")
    app = AppPackage(
        app_id=app_id,
        version=version,
        manifest=man,
        classes=tuple(class_from_record(d) for d in docs["code.json"]),
        resources=tuple(resource_from_record(d) for d in docs["res.json"]),
        assets=tuple(_sized_items(_Reader("assets.json"), docs["assets.json"], "path", AssetItem)),
        other=tuple(_sized_items(_Reader("other.json"), docs["other.json"], "name", OtherPayload)),
    )
    return validate_package(app)
