"""Call graph, resource graph, class-to-resource references and the activity
transition graph, plus the two closures that drive decomposition.

Reachability is plain breadth-first search; both graphs may be cyclic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from .errors import UnknownActivity, UnknownClass
from .model import AppPackage, ClassKind, method_id, split_method_id

__all__ = [
    "CallGraph", "ResourceGraph", "ReferRelation", "ActivityTransitionGraph",
    "build_call_graph", "build_resource_graph", "build_refer", "build_atg",
    "activity_related_classes", "component_related_classes", "class_related_resources",
    "resource_closure", "matching_activities", "classify_activity", "to_dot",
]


def _adjacency(edges) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {}
    for e in sorted(edges):
        adj.setdefault(e[0], []).append(e[1])
    return adj


def reachable(adj: dict[str, list[str]], sources: Iterable[str]) -> set[str]:
    """Nodes reachable from ``sources`` (sources included)."""
    seen = set(sources)
    queue = deque(seen)
    while queue:
        node = queue.popleft()
        for nxt in adj.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


@dataclass(frozen=True)
class CallGraph:
    nodes: frozenset
    edges: frozenset  # of (caller, callee, dynamic)

    @cached_property
    def successors(self) -> dict[str, list[str]]:
        return _adjacency(self.edges)

    def reachable_methods(self, sources: Iterable[str]) -> set[str]:
        return reachable(self.successors, sources)


@dataclass(frozen=True)
class ResourceGraph:
    nodes: frozenset
    edges: frozenset  # of (referrer, referee)

    @cached_property
    def successors(self) -> dict[str, list[str]]:
        return _adjacency(self.edges)


@dataclass(frozen=True)
class ReferRelation:
    pairs: frozenset  # of (class_name, resource_id)
    classes: frozenset = frozenset()  # every class of the package, for lookups

    @cached_property
    def by_class(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for c, r in self.pairs:
            out.setdefault(c, set()).add(r)
        return out

    def resources_of(self, class_name: str) -> set[str]:
        return self.by_class.get(class_name, set())


@dataclass(frozen=True)
class ActivityTransitionGraph:
    nodes: frozenset
    edges: frozenset  # of (source, target, "Explicit" | "Implicit")

    def successors(self, activity: str) -> list[str]:
        return sorted({t for s, t, _ in self.edges if s == activity})

    def predecessors(self, activity: str) -> list[str]:
        return sorted({s for s, t, _ in self.edges if t == activity})


def build_call_graph(app: AppPackage, include_dynamic: bool = False) -> CallGraph:
    nodes = frozenset(mid for mid, _ in app.methods())
    edges = frozenset(
        (mid, call.target_method, call.dynamic)
        for mid, m in app.methods()
        for call in m.calls
        if include_dynamic or not call.dynamic
    )
    return CallGraph(nodes, edges)


def build_resource_graph(app: AppPackage) -> ResourceGraph:
    return ResourceGraph(
        frozenset(r.id for r in app.resources),
        frozenset((r.id, ref) for r in app.resources for ref in r.refs),
    )


def build_refer(app: AppPackage) -> ReferRelation:
    return ReferRelation(
        frozenset((c.name, r) for c in app.classes for r in c.referred_resources()),
        frozenset(app.class_map),
    )


def _class_closure(cg: CallGraph, app: AppPackage, root: str) -> set[str]:
    """Classes owning some method reachable from any method of ``root``."""
    sources = [method_id(root, m.name) for m in app.cls(root).methods]
    return {split_method_id(mid)[0] for mid in cg.reachable_methods(sources)}


def activity_related_classes(cg: CallGraph, app: AppPackage, activity: str) -> set[str]:
    """The activity itself plus every POJO class it can reach through calls.

    Traversal passes through methods of any class, but only POJO classes
    (and the activity) are reported.
    """
    c = app.class_map.get(activity)
    if c is None or c.kind is not ClassKind.ACTIVITY:
        raise UnknownActivity(activity)
    pojos = app.pojos
    return {activity} | (_class_closure(cg, app, activity) & pojos)


def component_related_classes(cg: CallGraph, app: AppPackage, component: str) -> set[str]:
    """Same closure as :func:`activity_related_classes`, rooted at any class."""
    if component not in app.class_map:
        raise UnknownClass(component)
    return {component} | (_class_closure(cg, app, component) & app.pojos)


def resource_closure(rg: ResourceGraph, roots: Iterable[str]) -> set[str]:
    return reachable(rg.successors, roots)


def class_related_resources(rg: ResourceGraph, refer: ReferRelation, class_name: str) -> set[str]:
    """Directly referred resources plus everything reachable from them in ``rg``."""
    if refer.classes and class_name not in refer.classes:
        raise UnknownClass(class_name)
    return resource_closure(rg, refer.resources_of(class_name))


def build_atg(app: AppPackage) -> ActivityTransitionGraph:
    nodes = frozenset(d.class_name for d in app.manifest.activities)
    edges = set()
    for act in sorted(nodes):
        for site in app.cls(act).launch_sites():
            if site.kind == "explicit":
                edges.add((act, site.target_activity, "Explicit"))
            else:
                for target in matching_activities(app, site.action, site.categories):
                    edges.add((act, target, "Implicit"))
    return ActivityTransitionGraph(nodes, frozenset(edges))


def matching_activities(app: AppPackage, action: str, categories: Iterable[str]) -> list[str]:
    """Activities with a filter of equal action whose categories cover ``categories``."""
    cats = frozenset(categories)
    return sorted(
        d.class_name for d in app.manifest.activities
        if any(f.matches(action, cats) for f in d.intent_filters)
    )


def classify_activity(atg: ActivityTransitionGraph, activity: str) -> str:
    if activity not in atg.nodes:
        raise UnknownActivity(activity)
    has_in = any(t == activity and s != activity for s, t, _ in atg.edges)
    has_out = any(s == activity and t != activity for s, t, _ in atg.edges)
    if has_in and has_out:
        return "Mediate"
    if has_in:
        return "ReceivingOnly"
    if has_out:
        return "Source"
    return "Isolated"


def to_dot(app: AppPackage) -> str:
    """Graphviz dump: one node per class and resource, labelled call and reference edges."""
    lines = [f'digraph "{app.app_id}" {{']
    for c in app.classes:
        lines.append(f'  "{c.name}" [shape=box, label="{c.name}\\n{c.kind.value}"];')
    for r in app.resources:
        lines.append(f'  "{r.id}" [shape=ellipse];')
    seen = set()
    for c in app.classes:
        for m in c.methods:
            for call in m.calls:
                target = split_method_id(call.target_method)[0]
                label = "dynamic" if call.dynamic else "static"
                seen.add((c.name, target, label))
            for ref in m.resource_refs:
                seen.add((c.name, ref, "refer"))
    for r in app.resources:
        for ref in r.refs:
            seen.add((r.id, ref, "refer"))
    for src, dst, label in sorted(seen):
        style = ", style=dashed" if label == "dynamic" else ""
        lines.append(f'  "{src}" -> "{dst}" [label="{label}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
