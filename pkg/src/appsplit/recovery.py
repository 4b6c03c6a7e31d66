"""Replay-driven repair of decomposition plans.

Static analysis cannot see reflective calls, so a freshly decomposed plan
may lack classes or resources that only show up at run time.  Recovery
replays authored action scripts against the plan; the first absent class or
resource stops the run, is added to the bundle whose activity was running,
and the script is replayed again until every script runs clean.

Code executing inside an activity only sees the base bundle and that
activity's own feature bundle.  A repair discovered on one navigation path
therefore holds on every path that reaches the same activity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .decomposer import BaseBundle, DecompositionPlan, FeatureBundle, _member_size
from .errors import InvalidScript, MalformedScript, NoMatchingActivity, NonTermination, SchemaViolation
from .graphs import matching_activities
from .model import AppPackage, split_method_id
from .runtime import ActivityStack, Missing, MissingItem, invoke, run_callback

__all__ = [
    "Launch", "Tap", "Navigate", "Back", "ReplayScript", "RunTrace", "MissingItem",
    "RecoveryReport", "parse_script", "serialize_script", "execute_script", "recover",
    "resolve_launch",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Launch:
    def __str__(self):
        return "LAUNCH"


@dataclass(frozen=True)
class Tap:
    method: str

    def __str__(self):
        return f"TAP {self.method}"


@dataclass(frozen=True)
class Navigate:
    index: int

    def __str__(self):
        return f"NAV {self.index}"


@dataclass(frozen=True)
class Back:
    def __str__(self):
        return "BACK"


@dataclass(frozen=True)
class ReplayScript:
    name: str
    target_activity: str
    actions: tuple

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))


def parse_script(data: bytes | str, name: str = "") -> ReplayScript:
    """Parse the line format: ``TARGET <activity>`` then one action per line."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    target = None
    actions = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        word, _, arg = line.partition(" ")
        arg = arg.strip()
        if target is None:
            if word != "TARGET" or not arg:
                raise MalformedScript(no, "first line must be TARGET <activity>")
            target = arg
            continue
        if word == "LAUNCH" and not arg:
            actions.append(Launch())
        elif word == "BACK" and not arg:
            actions.append(Back())
        elif word == "TAP":
            try:
                split_method_id(arg)
            except ValueError:
                raise MalformedScript(no, f"TAP needs <class>.<method>, got {arg!r}") from None
            actions.append(Tap(arg))
        elif word == "NAV":
            try:
                index = int(arg)
            except ValueError:
                raise MalformedScript(no, f"NAV needs an integer index, got {arg!r}") from None
            if index < 0:
                raise MalformedScript(no, "NAV index must be non-negative")
            actions.append(Navigate(index))
        else:
            raise MalformedScript(no, f"unknown action {line!r}")
        if len(actions) == 1 and not isinstance(actions[0], Launch):
            raise MalformedScript(no, "first action must be LAUNCH")
    if target is None:
        raise MalformedScript(0, "empty script")
    if not actions:
        raise MalformedScript(0, "script has no actions")
    return ReplayScript(name, target, tuple(actions))


def serialize_script(script: ReplayScript) -> bytes:
    lines = [f"TARGET {script.target_activity}", *(str(a) for a in script.actions)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def resolve_launch(app: AppPackage, activity: str, index: int) -> str:
    """Target of the ``index``-th launch site of ``activity``."""
    sites = app.cls(activity).launch_sites()
    if not 0 <= index < len(sites):
        raise InvalidScript(f"{activity} has no launch site {index} ({len(sites)} sites)")
    site = sites[index]
    if site.kind == "explicit":
        return site.target_activity
    matches = matching_activities(app, site.action, site.categories)
    if not matches:
        raise NoMatchingActivity(f"{site.action} {sorted(site.categories)}")
    return matches[0]


@dataclass
class RunTrace:
    executed: list = field(default_factory=list)  # of (action, "ok" | "fault")
    fault: MissingItem | None = None
    reached_target: bool = False
    fault_activity: str | None = None
    events: list = field(default_factory=list)


class _Availability:
    """What code running in a given activity can see."""

    def __init__(self, app: AppPackage, installed: Iterable, on_demand: Mapping | None):
        self.app = app
        bases = [b for b in installed if isinstance(b, BaseBundle)]
        if not bases:
            raise InvalidScript("installed bundles must include the base bundle")
        self.base = bases[0]
        self.features = {b.activity: b for b in installed if isinstance(b, FeatureBundle)}
        self.on_demand = dict(on_demand or {})
        self._views: dict[str, tuple[dict, dict]] = {}

    def view(self, activity: str) -> tuple[dict, dict]:
        if activity not in self._views:
            names, res = set(self.base.classes), set(self.base.resources)
            if activity not in self.base.classes:
                feature = self.features.get(activity) or self.on_demand.get(activity)
                if feature is not None:
                    self.features[activity] = feature
                    names |= feature.classes
                    res |= feature.resources
            cmap, rmap = self.app.class_map, self.app.resource_map
            self._views[activity] = ({n: cmap[n] for n in names if n in cmap},
                                     {r: rmap[r] for r in res if r in rmap})
        return self._views[activity]


def execute_script(app: AppPackage, installed: Iterable, script: ReplayScript,
                   on_demand: Mapping[str, FeatureBundle] | None = None) -> RunTrace:
    """Replay ``script`` and stop at the first missing class or resource.

    ``installed`` must contain a base bundle; feature bundles listed in
    ``on_demand`` are installed when their activity is first navigated to,
    as the virtual device does.
    """
    avail = _Availability(app, installed, on_demand)
    trace = RunTrace()

    def run(activity, callback):
        classes, resources = avail.view(activity)
        run_callback(classes, resources, activity, callback, stack.events)

    stack = ActivityStack(run)
    trace.events = stack.events
    entered = False
    for action in script.actions:
        try:
            if isinstance(action, Launch):
                if stack.frames:
                    raise InvalidScript(f"{script.name}: LAUNCH while the app is running")
                sequence = [*app.manifest.welcome_activities, app.manifest.launcher_activity]
                stack.start(sequence[0])
                for a in sequence[1:]:
                    stack.replace_top(a)
                entered = entered or script.target_activity in sequence
            elif isinstance(action, Tap):
                top = _require_top(stack, script)
                cls, name = split_method_id(action.method)
                if cls != top or app.cls(top).method(name) is None:
                    raise InvalidScript(f"{script.name}: {action.method} is not a method of {top}")
                classes, resources = avail.view(top)
                try:
                    invoke(classes, resources, action.method, "tap", stack.events)
                except Missing as exc:
                    exc.activity = top
                    raise
            elif isinstance(action, Navigate):
                target = resolve_launch(app, _require_top(stack, script), action.index)
                stack.start(target)
                entered = entered or target == script.target_activity
            elif isinstance(action, Back):
                _require_top(stack, script)
                stack.back()
        except Missing as exc:
            trace.executed.append((action, "fault"))
            trace.fault = exc.item
            trace.fault_activity = exc.activity or stack.top
            return trace
        trace.executed.append((action, "ok"))
    trace.reached_target = entered
    return trace


def _require_top(stack: ActivityStack, script: ReplayScript) -> str:
    if stack.top is None:
        raise InvalidScript(f"{script.name}: no activity is running")
    return stack.top


@dataclass
class RecoveryReport:
    iterations: dict = field(default_factory=dict)  # bundle key ("base" | activity) -> int
    script_iterations: dict = field(default_factory=dict)
    added: list = field(default_factory=list)

    @property
    def total_iterations(self) -> int:
        return sum(self.script_iterations.values())

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "total_iterations": self.total_iterations,
            "iterations": dict(sorted(self.iterations.items())),
            "script_iterations": dict(sorted(self.script_iterations.items())),
            "added": list(self.added),
        }


def _check_plan(app: AppPackage, plan: DecompositionPlan) -> None:
    for key, bundle in [("base", plan.base), *plan.features.items()]:
        unknown = (set(bundle.classes) - app.class_map.keys()) | (set(bundle.resources) - app.resource_map.keys())
        if unknown:
            raise SchemaViolation(key, f"plan lists members absent from {app.app_id}: {sorted(unknown)[:3]}")


def recover(app: AppPackage, plan: DecompositionPlan, scripts: Iterable[ReplayScript],
            max_iterations: int | None = None) -> tuple[DecompositionPlan, RecoveryReport]:
    """Replay every script, adding one missing item per run until all run clean.

    Scripts whose target ships in the base bundle run first.  A missing item
    goes to the bundle of the activity that was executing when it was found;
    items added to the base bundle leave every feature bundle.

    ``max_iterations`` caps the additions per bundle; it defaults to the
    number of classes plus resources, which a consistent plan never needs.
    """
    _check_plan(app, plan)
    sel = set(plan.base_activities)
    base_c, base_r = set(plan.base.classes), set(plan.base.resources)
    feats = {a: (set(f.classes), set(f.resources)) for a, f in plan.features.items()}
    report = RecoveryReport(iterations={"base": 0, **{a: 0 for a in feats}})
    bound = len(app.classes) + len(app.resources) if max_iterations is None else max_iterations

    def current():
        base = BaseBundle(frozenset(base_c), frozenset(base_r), plan.base.assets, plan.base.other,
                          _member_size(app, base_c, base_r, plan.base.assets, plan.base.other))
        features = {
            a: FeatureBundle(a, frozenset(c), frozenset(r), _member_size(app, c, r))
            for a, (c, r) in feats.items()
        }
        return base, features

    scripts = list(scripts)
    ordered = [s for s in scripts if s.target_activity in sel] + \
              [s for s in scripts if s.target_activity not in sel]
    changed = False
    for script in ordered:
        report.script_iterations.setdefault(script.name, 0)
        while True:
            base, features = current()
            trace = execute_script(app, [base], script, on_demand=features)
            if trace.fault is None:
                if not trace.reached_target:
                    raise InvalidScript(f"{script.name} never reaches {script.target_activity}")
                break
            item = trace.fault
            key = "base" if trace.fault_activity in sel or trace.fault_activity not in feats \
                else trace.fault_activity
            if key == "base":
                target_c, target_r = base_c, base_r
            else:
                target_c, target_r = feats[key]
            members = target_c if item.kind == "Class" else target_r
            if item.name in members:
                raise NonTermination(f"{script.name}: {item.kind} {item.name} is in {key} yet missing")
            if report.iterations[key] >= bound:
                raise NonTermination(f"{script.name}: {key} still incomplete after {bound} iterations")
            members.add(item.name)
            if key == "base":
                for c, r in feats.values():
                    (c if item.kind == "Class" else r).discard(item.name)
            report.iterations[key] += 1
            report.script_iterations[script.name] += 1
            report.added.append({
                "script": script.name, "bundle": key, "kind": item.kind,
                "name": item.name, "raising_context": item.raising_context,
            })
            log.debug("%s: added %s %s to %s", script.name, item.kind, item.name, key)
            changed = True
    if not changed:
        return plan, report
    base, features = current()
    return DecompositionPlan(plan.app_id, plan.base_activities, plan.whitelist, base, features), report
