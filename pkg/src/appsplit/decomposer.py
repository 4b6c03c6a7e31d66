"""Split a package into one base bundle and one feature bundle per remaining activity.

The base bundle holds the selected activities with their related POJO
classes, every non-activity component (plus the POJOs those reach), the
resources all of these refer to (closed under resource references), all
assets and all other payloads.  A feature bundle holds an activity's
related classes and resources minus whatever the base already carries.
Feature bundles are only reduced by the base, so two of them may share
a class or resource.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import ActivityInBase, InvalidSelection, MalformedArchive, SchemaViolation, UnknownActivity
from .graphs import (
    activity_related_classes, build_call_graph, build_refer, build_resource_graph,
    class_related_resources, component_related_classes, resource_closure,
)
from .model import (
    AppPackage, LaunchSite, class_from_record, class_to_record, manifest_from_record,
    manifest_to_record, read_zip, resource_from_record, resource_to_record, total_size,
    write_zip,
)

__all__ = [
    "WhiteList", "BaseBundle", "FeatureBundle", "DecompositionPlan", "BundleArchive",
    "Analysis", "analyze", "compute_base_bundle", "compute_feature_bundle", "decompose",
    "rewrite_launch_sites", "pack_bundle", "pack_plan", "unpack_bundle", "open_bundle", "bundle_size",
    "saving_ratio", "static_footprint", "plan_to_json", "plan_from_json",
]

BASE = "base"


@dataclass(frozen=True)
class WhiteList:
    """Developer-forced classes and resources.

    ``scope`` maps an entry to ``"base"`` or to the name of a feature
    activity; entries without a scope go to the base bundle.
    """

    classes: frozenset = frozenset()
    resources: frozenset = frozenset()
    scope: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "classes", frozenset(self.classes))
        object.__setattr__(self, "resources", frozenset(self.resources))
        object.__setattr__(self, "scope", dict(self.scope))

    def __hash__(self):
        return hash((self.classes, self.resources, tuple(sorted(self.scope.items()))))

    def _scoped(self, entries, target: str) -> set[str]:
        return {e for e in entries if self.scope.get(e, BASE) == target}

    def base_classes(self) -> set[str]:
        return self._scoped(self.classes, BASE)

    def base_resources(self) -> set[str]:
        return self._scoped(self.resources, BASE)

    def feature_classes(self, activity: str) -> set[str]:
        return self._scoped(self.classes, activity)

    def feature_resources(self, activity: str) -> set[str]:
        return self._scoped(self.resources, activity)

    def validate(self, app: AppPackage) -> None:
        for c in self.classes:
            if c not in app.class_map:
                raise SchemaViolation(c, "whitelisted class not in package")
            if c in app.activities:
                raise SchemaViolation(c, "activities are placed by the base selection, not the whitelist")
        for r in self.resources:
            if r not in app.resource_map:
                raise SchemaViolation(r, "whitelisted resource not in package")
        activities = app.activities
        for entry, target in self.scope.items():
            if entry not in self.classes and entry not in self.resources:
                raise SchemaViolation(entry, "scoped entry is not whitelisted")
            if target != BASE and target not in activities:
                raise SchemaViolation(entry, f"scope {target!r} is neither 'base' nor an activity")

    def to_json(self) -> dict:
        return {
            "classes": sorted(self.classes),
            "resources": sorted(self.resources),
            "scope": dict(sorted(self.scope.items())),
        }

    @classmethod
    def from_json(cls, d: dict) -> "WhiteList":
        return cls(frozenset(d.get("classes", ())), frozenset(d.get("resources", ())),
                   dict(d.get("scope", {})))


@dataclass(frozen=True)
class BaseBundle:
    classes: frozenset
    resources: frozenset
    assets: frozenset
    other: frozenset
    size_bytes: int


@dataclass(frozen=True)
class FeatureBundle:
    activity: str
    classes: frozenset
    resources: frozenset
    size_bytes: int


@dataclass(frozen=True)
class DecompositionPlan:
    app_id: str
    base_activities: tuple
    whitelist: WhiteList
    base: BaseBundle
    features: Mapping[str, FeatureBundle]

    def __post_init__(self):
        object.__setattr__(self, "base_activities", tuple(self.base_activities))
        object.__setattr__(self, "features", dict(sorted(self.features.items())))

    def bundle_of(self, activity: str):
        """The bundle that ships ``activity``."""
        if activity in self.base.classes:
            return self.base
        return self.features[activity]

    def bundles(self) -> list:
        return [self.base, *self.features.values()]


class Analysis:
    """Graphs and memoized closures for one package.

    Decomposition, recovery and the tests all query the same closures many
    times; this keeps them computed once per package.
    """

    def __init__(self, app: AppPackage):
        self.app = app
        self.cg = build_call_graph(app, include_dynamic=False)
        self.rg = build_resource_graph(app)
        self.refer = build_refer(app)
        self._arcls: dict[str, frozenset] = {}
        self._crres: dict[str, frozenset] = {}

    def arcls(self, activity: str) -> frozenset:
        if activity not in self._arcls:
            self._arcls[activity] = frozenset(activity_related_classes(self.cg, self.app, activity))
        return self._arcls[activity]

    def crres(self, class_name: str) -> frozenset:
        if class_name not in self._crres:
            self._crres[class_name] = frozenset(class_related_resources(self.rg, self.refer, class_name))
        return self._crres[class_name]

    def resources_for(self, classes: Iterable[str]) -> set[str]:
        out: set[str] = set()
        for c in classes:
            out |= self.crres(c)
        return out

    def component_classes(self) -> set[str]:
        """OLS plus the POJO classes their methods reach."""
        out: set[str] = set()
        for comp in self.app.other_components:
            out |= component_related_classes(self.cg, self.app, comp)
        return out


def analyze(app: AppPackage) -> Analysis:
    return Analysis(app)


def _member_size(app: AppPackage, classes, resources, assets=(), other=()) -> int:
    cmap, rmap = app.class_map, app.resource_map
    amap = {a.path: a.size_bytes for a in app.assets}
    omap = {o.name: o.size_bytes for o in app.other}
    return (
        sum(cmap[c].size_bytes for c in classes)
        + sum(rmap[r].size_bytes for r in resources)
        + sum(amap[a] for a in assets)
        + sum(omap[o] for o in other)
    )


def bundle_size(app: AppPackage, bundle) -> int:
    if isinstance(bundle, BaseBundle):
        return _member_size(app, bundle.classes, bundle.resources, bundle.assets, bundle.other)
    return _member_size(app, bundle.classes, bundle.resources)


def _check_selection(app: AppPackage, sel: Iterable[str]) -> tuple[str, ...]:
    sel = tuple(dict.fromkeys(sel))
    activities = app.activities
    for a in sel:
        if a not in activities:
            raise InvalidSelection(f"{a!r} is not an activity of {app.app_id}")
    man = app.manifest
    if man.launcher_activity not in sel:
        raise InvalidSelection(f"launcher {man.launcher_activity!r} missing from selection")
    for w in man.welcome_activities:
        if w not in sel:
            raise InvalidSelection(f"welcome activity {w!r} missing from selection")
    return sel


def compute_base_bundle(app: AppPackage, sel: Iterable[str], whitelist: WhiteList | None = None,
                        analysis: Analysis | None = None) -> BaseBundle:
    sel = _check_selection(app, sel)
    whitelist = whitelist or WhiteList()
    whitelist.validate(app)
    an = analysis or Analysis(app)

    classes: set[str] = set()
    for a in sel:
        classes |= an.arcls(a)
    classes |= an.component_classes()
    classes |= whitelist.base_classes()
    resources = an.resources_for(classes) | resource_closure(an.rg, whitelist.base_resources())
    assets = frozenset(a.path for a in app.assets)
    other = frozenset(o.name for o in app.other)
    return BaseBundle(
        frozenset(classes), frozenset(resources), assets, other,
        _member_size(app, classes, resources, assets, other),
    )


def compute_feature_bundle(app: AppPackage, base: BaseBundle, activity: str,
                           whitelist: WhiteList | None = None,
                           analysis: Analysis | None = None) -> FeatureBundle:
    if activity not in app.activities:
        raise UnknownActivity(activity)
    if activity in base.classes:
        raise ActivityInBase(activity)
    whitelist = whitelist or WhiteList()
    an = analysis or Analysis(app)
    classes = (an.arcls(activity) | whitelist.feature_classes(activity)) - base.classes
    resources = (
        an.resources_for(classes) | resource_closure(an.rg, whitelist.feature_resources(activity))
    ) - base.resources
    return FeatureBundle(activity, frozenset(classes), frozenset(resources),
                         _member_size(app, classes, resources))


def decompose(app: AppPackage, sel: Iterable[str], whitelist: WhiteList | None = None,
              analysis: Analysis | None = None) -> DecompositionPlan:
    sel = _check_selection(app, sel)
    whitelist = whitelist or WhiteList()
    for entry, target in whitelist.scope.items():
        if target in sel:
            raise InvalidSelection(f"whitelist scopes {entry!r} to {target!r}, which ships in the base bundle")
    an = analysis or Analysis(app)
    base = compute_base_bundle(app, sel, whitelist, an)
    features = {
        a: compute_feature_bundle(app, base, a, whitelist, an)
        for a in sorted(app.activities - set(sel))
    }
    return DecompositionPlan(app.app_id, sel, whitelist, base, features)


def saving_ratio(app: AppPackage, plan: DecompositionPlan) -> Fraction:
    """Fraction of the full package a user no longer downloads up front."""
    total = total_size(app)
    if total == 0:
        return Fraction(0)
    return 1 - Fraction(plan.base.size_bytes, total)


def static_footprint(app: AppPackage, analysis: Analysis | None = None) -> tuple[set, set]:
    """Classes and resources reachable by static analysis from any activity or component."""
    an = analysis or Analysis(app)
    classes = an.component_classes()
    for a in app.activities:
        classes |= an.arcls(a)
    return classes, an.resources_for(classes)


def rewrite_launch_sites(app: AppPackage, plan: DecompositionPlan) -> AppPackage:
    """Hook every explicit launch whose target does not ship in the base bundle."""
    in_base = set(plan.base_activities)

    def hook(site: LaunchSite) -> LaunchSite:
        if site.kind == "explicit" and site.target_activity not in in_base and not site.hooked:
            return replace(site, hooked=True)
        return site

    classes = []
    for c in app.classes:
        methods = tuple(replace(m, launches=tuple(hook(s) for s in m.launches)) for m in c.methods)
        classes.append(c if methods == c.methods else replace(c, methods=methods))
    return replace(app, classes=tuple(classes))


# -- bundle archives ------------------------------------------------------------

@dataclass(frozen=True)
class BundleArchive:
    """A decoded ``.abundle``: the bundle plus the records a device needs to run it.

    ``app_id``, ``version`` and ``manifest`` come from the base bundle's
    manifest entry; feature archives carry no manifest.
    """

    kind: str
    app_id: str
    version: int
    bundle: object
    classes: tuple
    resources: tuple
    manifest: object = None


def pack_bundle(bundle, app: AppPackage) -> bytes:
    """Deterministic ``.abundle`` bytes for a base or feature bundle of ``app``."""
    is_base = isinstance(bundle, BaseBundle)
    meta = {
        "schema": 1,
        "kind": "base" if is_base else "feature",
        "app_id": app.app_id,
        "version": app.version,
        "classes": sorted(bundle.classes),
        "resources": sorted(bundle.resources),
        "size_bytes": bundle.size_bytes,
    }
    if is_base:
        meta["assets"] = sorted(bundle.assets)
        meta["other"] = sorted(bundle.other)
    else:
        meta["activity"] = bundle.activity
    entries = {
        "bundle.json": meta,
        "code.json": [class_to_record(app.cls(c)) for c in sorted(bundle.classes)],
        "res.json": [resource_to_record(app.resource_map[r]) for r in sorted(bundle.resources)],
    }
    if is_base:
        entries["manifest.json"] = manifest_to_record(app)
    return write_zip(entries)


def pack_plan(app: AppPackage, plan: DecompositionPlan) -> tuple[bytes, dict[str, bytes]]:
    """Archives for every bundle of ``plan``, packed from the launch-hooked app."""
    rewritten = rewrite_launch_sites(app, plan)
    return (pack_bundle(plan.base, rewritten),
            {a: pack_bundle(f, rewritten) for a, f in plan.features.items()})


def _str_list(meta: dict, key: str) -> frozenset:
    value = meta.get(key)
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise MalformedArchive(f"bundle.json: {key} must be an array of strings")
    return frozenset(value)


def open_bundle(data: bytes) -> BundleArchive:
    docs = read_zip(data, ("bundle.json", "code.json", "res.json"), ("manifest.json",))
    meta = docs["bundle.json"]
    if not isinstance(meta, dict):
        raise MalformedArchive("bundle.json must be an object")
    kind = meta.get("kind")
    size = meta.get("size_bytes")
    if isinstance(size, bool) or not isinstance(size, int) or size < 0:
        raise MalformedArchive("bundle.json: size_bytes must be a non-negative integer")
    if not isinstance(meta.get("app_id"), str) or not isinstance(meta.get("version"), int):
        raise MalformedArchive("bundle.json: app_id/version missing")
    classes, resources = _str_list(meta, "classes"), _str_list(meta, "resources")
    if kind == "base":
        bundle = BaseBundle(classes, resources, _str_list(meta, "assets"), _str_list(meta, "other"), size)
        if "manifest.json" not in docs:
            raise MalformedArchive("base bundle lacks manifest.json")
    elif kind == "feature":
        activity = meta.get("activity")
        if not isinstance(activity, str):
            raise MalformedArchive("feature bundle lacks activity")
        bundle = FeatureBundle(activity, classes, resources, size)
    else:
        raise MalformedArchive(f"bundle.json: unknown kind {kind!r}")
    if not isinstance(docs["code.json"], list) or not isinstance(docs["res.json"], list):
        raise MalformedArchive("code.json/res.json must be arrays")
    class_records = tuple(class_from_record(d) for d in docs["code.json"])
    res_records = tuple(resource_from_record(d) for d in docs["res.json"])
    if {c.name for c in class_records} != classes or {r.id for r in res_records} != resources:
        raise MalformedArchive("bundle.json member lists disagree with code.json/res.json")
    manifest = None
    if kind == "base":
        _, _, manifest = manifest_from_record(docs["manifest.json"])
    return BundleArchive(kind, meta["app_id"], meta["version"], bundle, class_records, res_records, manifest)


def unpack_bundle(data: bytes):
    return open_bundle(data).bundle


# -- plan.json ------------------------------------------------------------------

def plan_to_json(app: AppPackage, plan: DecompositionPlan) -> dict:
    ratio = saving_ratio(app, plan)
    return {
        "schema": 1,
        "app_id": plan.app_id,
        "version": app.version,
        "sel": list(plan.base_activities),
        "whitelist": plan.whitelist.to_json(),
        "original_size": total_size(app),
        "base": {
            "classes": sorted(plan.base.classes),
            "resources": sorted(plan.base.resources),
            "assets": sorted(plan.base.assets),
            "other": sorted(plan.base.other),
            "size_bytes": plan.base.size_bytes,
        },
        "features": {
            a: {"classes": sorted(f.classes), "resources": sorted(f.resources), "size_bytes": f.size_bytes}
            for a, f in plan.features.items()
        },
        "saving_ratio": float(ratio),
        "saving_ratio_exact": f"{ratio.numerator}/{ratio.denominator}",
    }


def plan_from_json(d: dict) -> DecompositionPlan:
    b = d["base"]
    base = BaseBundle(frozenset(b["classes"]), frozenset(b["resources"]), frozenset(b["assets"]),
                      frozenset(b["other"]), b["size_bytes"])
    features = {
        a: FeatureBundle(a, frozenset(f["classes"]), frozenset(f["resources"]), f["size_bytes"])
        for a, f in d["features"].items()
    }
    return DecompositionPlan(d["app_id"], tuple(d["sel"]), WhiteList.from_json(d["whitelist"]), base, features)


def dumps_plan(app: AppPackage, plan: DecompositionPlan) -> str:
    return json.dumps(plan_to_json(app, plan), indent=2, sort_keys=True) + "\n"
