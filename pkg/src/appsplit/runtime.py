"""Execution semantics shared by the replay simulator and the virtual device.

Running a method follows every call site, dynamic ones included, and looks
up every resource it refers to (and, transitively, what those resources
refer to).  The first class or resource that is not available stops the
run with :class:`Missing`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .model import ClassUnit, ResourceItem, method_id, split_method_id

# Lifecycle callback -> the method it runs, if the class defines one.
CALLBACK_METHODS = {"create": "onCreate", "start": "onStart", "resume": "onResume"}


@dataclass(frozen=True)
class MissingItem:
    kind: str  # "Class" | "Resource"
    name: str
    raising_context: str


class Missing(Exception):
    def __init__(self, item: MissingItem, activity: str | None = None):
        super().__init__(f"{item.kind} {item.name} not found (from {item.raising_context})")
        self.item = item
        self.activity = activity


def invoke(classes: Mapping[str, ClassUnit], resources: Mapping[str, ResourceItem],
           root: str, context: str, events: list | None = None) -> None:
    """Run method ``root`` depth-first; each method and resource is visited once."""
    seen_methods: set[str] = set()
    seen_res: set[str] = set()
    stack = [(root, context)]
    while stack:
        mid, caller = stack.pop()
        if mid in seen_methods:
            continue
        seen_methods.add(mid)
        cls_name, name = split_method_id(mid)
        cls = classes.get(cls_name)
        if cls is None:
            raise Missing(MissingItem("Class", cls_name, caller))
        method = cls.method(name)
        if method is None:
            raise Missing(MissingItem("Class", cls_name, caller))
        if events is not None:
            events.append(("invoke", mid))
        for ref in method.resource_refs:
            _lookup(resources, ref, mid, seen_res)
        for call in reversed(method.calls):
            stack.append((call.target_method, mid))


def _lookup(resources, rid: str, context: str, seen: set) -> None:
    todo = [(rid, context)]
    while todo:
        rid, ctx = todo.pop()
        if rid in seen:
            continue
        item = resources.get(rid)
        if item is None:
            raise Missing(MissingItem("Resource", rid, ctx))
        seen.add(rid)
        todo.extend((ref, rid) for ref in reversed(item.refs))


class ActivityStack:
    """Activity back stack with lifecycle callbacks.

    ``run`` executes one callback of one activity and may raise
    :class:`Missing`; the event list records callbacks as
    ``(callback, activity)`` and invoked methods as ``("invoke", mid)``.
    """

    def __init__(self, run: Callable[[str, str], None]):
        self.run = run
        self.frames: list[str] = []
        self.events: list[tuple[str, str]] = []

    @property
    def top(self) -> str | None:
        return self.frames[-1] if self.frames else None

    def _cb(self, activity: str, callback: str) -> None:
        self.events.append((callback, activity))
        self.run(activity, callback)

    def start(self, activity: str) -> None:
        prev = self.top
        if prev is not None:
            self._cb(prev, "pause")
        self._cb(activity, "create")
        self._cb(activity, "start")
        self._cb(activity, "resume")
        if prev is not None:
            self._cb(prev, "stop")
        self.frames.append(activity)

    def replace_top(self, activity: str) -> None:
        """Start ``activity`` and finish the current top (welcome screens)."""
        prev = self.frames.pop()
        self._cb(prev, "pause")
        self._cb(activity, "create")
        self._cb(activity, "start")
        self._cb(activity, "resume")
        self._cb(prev, "stop")
        self._cb(prev, "destroy")
        self.frames.append(activity)

    def back(self) -> str:
        top = self.frames.pop()
        self._cb(top, "pause")
        below = self.top
        if below is not None:
            self._cb(below, "restart")
            self._cb(below, "start")
            self._cb(below, "resume")
        self._cb(top, "stop")
        self._cb(top, "destroy")
        return top


def run_callback(classes, resources, activity: str, callback: str, events=None) -> None:
    """Execute the method bound to ``callback`` on ``activity``, if there is one."""
    cls = classes.get(activity)
    if cls is None:
        raise Missing(MissingItem("Class", activity, f"intent:{activity}"), activity)
    name = CALLBACK_METHODS.get(callback)
    if name is None or cls.method(name) is None:
        return
    try:
        invoke(classes, resources, method_id(activity, name), f"lifecycle:{callback}", events)
    except Missing as exc:
        exc.activity = activity
        raise
