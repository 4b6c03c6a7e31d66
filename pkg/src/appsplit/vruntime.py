"""Simulated app-level virtualization client.

A :class:`VirtualDevice` installs base bundles, runs activities inside a
fixed pool of pre-registered stub slots, resolves intents against the
installed manifests and fetches feature bundles the first time one of
their activities is opened.  Lifecycle callbacks always name the real
activity class; the stub slot is bookkeeping only.
"""

from __future__ import annotations

import base64
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from .decomposer import BaseBundle, BundleArchive, open_bundle
from .errors import (
    ActivityNotFound, AlreadyInstalled, InvalidScript, LoadConflict, MalformedArchive,
    MergeConflict, NoMatchingActivity, NotInstalled, StubPoolExhausted,
)
from .model import (
    AppPackage, LaunchSite, Manifest, class_to_record, record_digest, resource_to_record,
    split_method_id,
)
from .recovery import Back, Launch, Navigate, ReplayScript, Tap, resolve_launch
from .runtime import ActivityStack, invoke, run_callback
from .store import BundleStore

__all__ = [
    "IntentObj", "RunMetrics", "InstallState", "VirtualDevice", "Warm", "Cold",
    "resolve_intent", "merge_resources", "load_code", "run_direct", "DEFAULT_STUB_POOL",
]

log = logging.getLogger(__name__)

DEFAULT_STUB_POOL = 16


@dataclass(frozen=True)
class IntentObj:
    kind: str  # "explicit" | "implicit"
    target: str | None = None
    action: str | None = None
    categories: frozenset = frozenset()

    @classmethod
    def explicit(cls, target: str) -> "IntentObj":
        return cls("explicit", target=target)

    @classmethod
    def implicit(cls, action: str, categories: Iterable[str] = ()) -> "IntentObj":
        return cls("implicit", action=action, categories=frozenset(categories))

    @classmethod
    def from_launch(cls, site: LaunchSite) -> "IntentObj":
        if site.kind == "explicit":
            return cls.explicit(site.target_activity)
        return cls.implicit(site.action, site.categories)


@dataclass(frozen=True)
class Warm:
    activity: str


@dataclass(frozen=True)
class Cold:
    activity: str
    bytes_fetched: int


@dataclass
class RunMetrics:
    fetches: list = field(default_factory=list)  # of (activity, bytes)
    cold_starts: int = 0
    warm_starts: int = 0
    lifecycle_events: list = field(default_factory=list)
    merged_bytes: int = 0
    prefetches: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "fetches": [[a, n] for a, n in self.fetches],
            "cold_starts": self.cold_starts,
            "warm_starts": self.warm_starts,
            "merged_bytes": self.merged_bytes,
            "prefetches": [[a, n] for a, n in self.prefetches],
            "lifecycle_events": [list(e) for e in self.lifecycle_events],
        }


@dataclass
class InstallState:
    app_id: str
    version: int
    manifest: Manifest
    base: BaseBundle
    loaded_features: dict = field(default_factory=dict)  # activity -> FeatureBundle
    merged_resources: dict = field(default_factory=dict)  # resource id -> digest
    loaded_classes: dict = field(default_factory=dict)  # class name -> digest
    code: dict = field(default_factory=dict)  # class name -> ClassUnit
    res: dict = field(default_factory=dict)  # resource id -> ResourceItem
    archives: dict = field(default_factory=dict)  # "base" | activity -> raw bytes

    def is_local(self, activity: str) -> bool:
        return activity in self.base.classes or activity in self.loaded_features


def resolve_intent(registry: Manifest, intent: IntentObj) -> str:
    """Explicit intents name their target; implicit ones match filters.

    A filter matches when its action is equal and its categories cover the
    intent's.  Several matches resolve to the smallest class name.
    """
    if intent.kind == "explicit":
        if registry.activity(intent.target) is None:
            raise NoMatchingActivity(f"{intent.target} is not declared")
        return intent.target
    matches = sorted(
        d.class_name for d in registry.activities
        if any(f.matches(intent.action, intent.categories) for f in d.intent_filters)
    )
    if not matches:
        raise NoMatchingActivity(f"no activity handles {intent.action} {sorted(intent.categories)}")
    return matches[0]


def _plan_merge(current: dict, records, to_record, key, conflict) -> dict:
    additions = {}
    for rec in records:
        digest = record_digest(to_record(rec))
        name = key(rec)
        have = current.get(name, additions.get(name))
        if have is None:
            additions[name] = digest
        elif have != digest:
            raise conflict(f"{name}: digest {digest[:12]} differs from loaded {have[:12]}")
    return additions


def merge_resources(state: InstallState, feature: BundleArchive) -> InstallState:
    """Add the feature's resources; identical duplicates are skipped."""
    additions = _plan_merge(state.merged_resources, feature.resources, resource_to_record,
                            lambda r: r.id, MergeConflict)
    for r in feature.resources:
        if r.id in additions:
            state.res[r.id] = r
    state.merged_resources.update(additions)
    return state


def load_code(state: InstallState, feature: BundleArchive) -> InstallState:
    """Load the feature's classes; identical duplicates are skipped."""
    additions = _plan_merge(state.loaded_classes, feature.classes, class_to_record,
                            lambda c: c.name, LoadConflict)
    for c in feature.classes:
        if c.name in additions:
            state.code[c.name] = c
    state.loaded_classes.update(additions)
    return state


class VirtualDevice:
    def __init__(self, stub_pool_size: int = DEFAULT_STUB_POOL):
        self.installed_apps: dict[str, InstallState] = {}
        self.stub_pool: list = [None] * stub_pool_size  # slot -> (app_id, activity) | None
        self.activity_stack: list[tuple[str, str, int]] = []
        self.metrics = RunMetrics()
        self._stacks: dict[str, ActivityStack] = {}

    # -- installation ------------------------------------------------------

    def install_base(self, store: BundleStore, app_id: str) -> InstallState:
        if app_id in self.installed_apps:
            raise AlreadyInstalled(app_id)
        data = store.get_base(app_id)
        return self._install_archive(app_id, data)

    def _install_archive(self, app_id: str, data: bytes) -> InstallState:
        archive = open_bundle(data)
        if archive.kind != "base" or archive.app_id != app_id:
            raise MalformedArchive(f"expected base bundle of {app_id}, got {archive.kind} of {archive.app_id}")
        state = InstallState(app_id, archive.version, archive.manifest, archive.bundle)
        merge_resources(state, archive)
        load_code(state, archive)
        state.archives["base"] = data
        self.installed_apps[app_id] = state
        return state

    def _state(self, app_id: str) -> InstallState:
        try:
            return self.installed_apps[app_id]
        except KeyError:
            raise NotInstalled(app_id) from None

    def _fetch_feature(self, store: BundleStore, state: InstallState, activity: str) -> tuple[BundleArchive, bytes]:
        data = store.get_feature(state.app_id, activity)
        archive = open_bundle(data)
        if archive.kind != "feature" or archive.bundle.activity != activity or archive.app_id != state.app_id:
            raise MalformedArchive(f"expected feature bundle for {activity}")
        return archive, data

    def _install_feature(self, state: InstallState, archive: BundleArchive, data: bytes) -> None:
        merge_resources(state, archive)
        load_code(state, archive)
        state.loaded_features[archive.bundle.activity] = archive.bundle
        state.archives[archive.bundle.activity] = data
        self.metrics.merged_bytes += sum(r.size_bytes for r in archive.resources)

    def prefetch(self, store: BundleStore, app_id: str, activities: Iterable[str]) -> list[str]:
        """Fetch feature bundles ahead of navigation; returns the activities fetched.

        Downloads overlap on a thread pool; installation happens here, in order.
        """
        state = self._state(app_id)
        todo = sorted({a for a in activities if not state.is_local(a)})
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(lambda a: self._fetch_feature(store, state, a), todo))
        for activity, (archive, data) in zip(todo, results):
            self._install_feature(state, archive, data)
            self.metrics.prefetches.append((activity, len(data)))
        return todo

    # -- stub slots and stack -----------------------------------------------

    def _acquire_slot(self, app_id: str, activity: str) -> int:
        for i, occupant in enumerate(self.stub_pool):
            if occupant is None:
                self.stub_pool[i] = (app_id, activity)
                return i
        raise StubPoolExhausted(f"all {len(self.stub_pool)} stub activities are in use")

    def _push(self, app_id: str, activity: str, start) -> int:
        slot = self._acquire_slot(app_id, activity)
        try:
            start(activity)
        except BaseException:
            self.stub_pool[slot] = None
            raise
        self.activity_stack.append((app_id, activity, slot))
        return slot

    def _app_stack(self, app_id: str) -> ActivityStack:
        if app_id not in self._stacks:
            state = self._state(app_id)

            def run(activity, callback):
                run_callback(state.code, state.res, activity, callback, self.metrics.lifecycle_events)

            stack = ActivityStack(run)
            stack.events = self.metrics.lifecycle_events
            self._stacks[app_id] = stack
        return self._stacks[app_id]

    def running(self, app_id: str) -> bool:
        return any(a == app_id for a, _, _ in self.activity_stack)

    def top(self, app_id: str) -> str | None:
        frames = [act for a, act, _ in self.activity_stack if a == app_id]
        return frames[-1] if frames else None

    def launch_app(self, app_id: str) -> list[tuple[int, str, tuple[str, ...]]]:
        """Start the app's welcome activities and launcher, each in a stub slot.

        Returns ``(stub_slot, real_activity, callbacks)`` per activity shown.
        """
        state = self._state(app_id)
        if self.running(app_id):
            raise InvalidScript(f"{app_id} is already running")
        stack = self._app_stack(app_id)
        sequence = [*state.manifest.welcome_activities, state.manifest.launcher_activity]
        trace = []
        slot = self._push(app_id, sequence[0], stack.start)
        trace.append((slot, sequence[0], ("create", "start", "resume")))
        for activity in sequence[1:]:
            prev = self.activity_stack.pop()
            slot = self._push(app_id, activity, stack.replace_top)
            self.stub_pool[prev[2]] = None
            trace.append((slot, activity, ("create", "start", "resume")))
        return trace

    def navigate(self, store: BundleStore, app_id: str, intent: IntentObj):
        """Open the activity ``intent`` resolves to, fetching its bundle if needed."""
        state = self._state(app_id)
        if not self.running(app_id):
            raise InvalidScript(f"{app_id} is not running")
        target = resolve_intent(state.manifest, intent)
        stack = self._app_stack(app_id)
        if state.is_local(target):
            self._push(app_id, target, stack.start)
            self.metrics.warm_starts += 1
            return Warm(target)
        archive, data = self._fetch_feature(store, state, target)
        self._install_feature(state, archive, data)
        self.metrics.fetches.append((target, len(data)))
        self.metrics.cold_starts += 1
        self._push(app_id, target, stack.start)
        return Cold(target, len(data))

    def back(self, app_id: str) -> str:
        if not self.activity_stack or self.activity_stack[-1][0] != app_id:
            raise InvalidScript(f"{app_id} is not in the foreground")
        _, activity, slot = self.activity_stack[-1]
        self._app_stack(app_id).back()
        self.activity_stack.pop()
        self.stub_pool[slot] = None
        return activity

    def stop_app(self, app_id: str) -> None:
        """Kill the app process: drop its frames and free their slots without callbacks."""
        keep = []
        for frame in self.activity_stack:
            if frame[0] == app_id:
                self.stub_pool[frame[2]] = None
            else:
                keep.append(frame)
        self.activity_stack = keep
        if app_id in self._stacks:
            self._stacks[app_id].frames.clear()

    # -- sessions ----------------------------------------------------------

    def tap(self, app_id: str, method: str) -> None:
        state = self._state(app_id)
        top = self.top(app_id)
        cls, name = split_method_id(method)
        if top is None or cls != top or state.code[top].method(name) is None:
            raise InvalidScript(f"{method} is not a method of the foreground activity {top}")
        invoke(state.code, state.res, method, "tap", self.metrics.lifecycle_events)

    def follow_launch(self, store: BundleStore, app_id: str, index: int):
        """Fire the ``index``-th launch site of the foreground activity."""
        state = self._state(app_id)
        top = self.top(app_id)
        if top is None:
            raise InvalidScript(f"{app_id} is not running")
        sites = state.code[top].launch_sites()
        if not 0 <= index < len(sites):
            raise InvalidScript(f"{top} has no launch site {index}")
        site = sites[index]
        if site.kind == "explicit" and not site.hooked and not state.is_local(site.target_activity):
            # Without the rewritten hook the system never asks the client to fetch.
            raise ActivityNotFound(f"{site.target_activity} is not installed")
        return self.navigate(store, app_id, IntentObj.from_launch(site))

    def run_session(self, store: BundleStore, app_id: str, script: ReplayScript) -> RunMetrics:
        """Replay ``script`` on a fresh process of an installed app."""
        self._state(app_id)
        self.stop_app(app_id)
        for action in script.actions:
            if isinstance(action, Launch):
                self.launch_app(app_id)
            elif isinstance(action, Tap):
                self.tap(app_id, action.method)
            elif isinstance(action, Navigate):
                self.follow_launch(store, app_id, action.index)
            elif isinstance(action, Back):
                self.back(app_id)
        return self.metrics

    # -- persistence ---------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "schema": 1,
            "stub_pool_size": len(self.stub_pool),
            "apps": {
                app_id: {k: base64.b64encode(v).decode("ascii") for k, v in sorted(st.archives.items())}
                for app_id, st in sorted(self.installed_apps.items())
            },
        }

    @classmethod
    def from_state(cls, d: dict) -> "VirtualDevice":
        device = cls(d.get("stub_pool_size", DEFAULT_STUB_POOL))
        for app_id, archives in d.get("apps", {}).items():
            state = device._install_archive(app_id, base64.b64decode(archives["base"]))
            for key, blob in archives.items():
                if key != "base":
                    data = base64.b64decode(blob)
                    device._install_feature(state, open_bundle(data), data)
        device.metrics = RunMetrics()
        return device


def run_direct(app: AppPackage, script: ReplayScript) -> list:
    """Lifecycle and invocation events of ``script`` on the undecomposed app."""
    stack = ActivityStack(lambda a, cb: run_callback(app.class_map, app.resource_map, a, cb, stack.events))
    for action in script.actions:
        if isinstance(action, Launch):
            if stack.frames:
                raise InvalidScript("LAUNCH while the app is running")
            sequence = [*app.manifest.welcome_activities, app.manifest.launcher_activity]
            stack.start(sequence[0])
            for a in sequence[1:]:
                stack.replace_top(a)
        elif isinstance(action, Tap):
            cls, name = split_method_id(action.method)
            if cls != stack.top or app.cls(cls).method(name) is None:
                raise InvalidScript(f"{action.method} is not a method of {stack.top}")
            invoke(app.class_map, app.resource_map, action.method, "tap", stack.events)
        elif isinstance(action, Navigate):
            if stack.top is None:
                raise InvalidScript("no activity is running")
            stack.start(resolve_launch(app, stack.top, action.index))
        elif isinstance(action, Back):
            if stack.top is None:
                raise InvalidScript("no activity is running")
            stack.back()
    return stack.events
