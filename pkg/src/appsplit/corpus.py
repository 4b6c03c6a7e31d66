"""Seeded synthetic apps, replay scripts and usage logs.

Everything here is a pure function of its parameters: the same
``(params, index)`` always yields the same package, byte for byte.
"""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import InvalidParams
from .model import (
    ActivityDecl, AppPackage, AssetItem, CallSite, ClassKind, ClassUnit, ComponentDecl,
    ComponentKind, IntentFilter, LaunchSite, Manifest, MethodDef, OtherPayload, ResourceItem,
    serialize_package, validate_package,
)
from .recovery import Launch, Navigate, ReplayScript, Tap, resolve_launch, serialize_script
from .runtime import CALLBACK_METHODS
from .usage import UsageDataset, UsageRecord, write_usage_csv

__all__ = [
    "CorpusParams", "gen_app", "gen_scripts", "gen_usage", "write_corpus",
    "three_activity_app", "three_activity_scripts", "hidden_chain_app",
]

MAIN = "android.intent.action.MAIN"
LAUNCHER = "android.intent.category.LAUNCHER"
DEFAULT = "android.intent.category.DEFAULT"
LIFECYCLE = set(CALLBACK_METHODS.values())


@dataclass(frozen=True)
class CorpusParams:
    """Generator knobs; ``(lo, hi)`` pairs are inclusive ranges.

    ``resource_count`` counts ordinary resources; every activity also gets
    one layout of its own on top of them.
    """

    seed: int = 0
    activity_count: tuple = (3, 10)
    pojo_count: tuple = (4, 24)
    resource_count: tuple = (4, 40)
    service_count: tuple = (0, 2)
    asset_count: tuple = (0, 3)
    share_ratio: float = 0.3
    dynamic_edge_rate: float = 0.1
    welcome_rate: float = 0.2
    implicit_rate: float = 0.2
    class_size: tuple = (500, 20_000)
    resource_size: tuple = (200, 40_000)
    asset_size: tuple = (1_000, 100_000)
    other_size: tuple = (5_000, 400_000)
    zipf_exponent: float = 1.2
    users: int = 20
    visits_per_user: int = 10

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                object.__setattr__(self, f.name, tuple(value))
        self.validate()

    def validate(self) -> None:
        for name in ("share_ratio", "dynamic_edge_rate", "welcome_rate", "implicit_rate"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise InvalidParams(f"{name} must be in [0, 1], got {value}")
        for name in ("activity_count", "pojo_count", "resource_count", "service_count",
                     "asset_count", "class_size", "resource_size", "asset_size", "other_size"):
            lo, hi = getattr(self, name)
            if not (isinstance(lo, int) and isinstance(hi, int)) or lo < 0 or lo > hi:
                raise InvalidParams(f"{name} must be a non-empty integer range, got {(lo, hi)}")
        if self.activity_count[0] < 1:
            raise InvalidParams("apps need at least one activity")
        if self.zipf_exponent < 0 or self.users < 1 or self.visits_per_user < 1:
            raise InvalidParams("zipf_exponent must be >= 0; users and visits_per_user >= 1")

    @classmethod
    def from_json(cls, d: dict) -> "CorpusParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParams(f"unknown parameters {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise InvalidParams(str(exc)) from None

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _size(rng: random.Random, bounds) -> int:
    lo, hi = bounds
    if lo == hi or hi <= 1:
        return lo
    return int(round(math.exp(rng.uniform(math.log(max(lo, 1)), math.log(hi)))))


class _Builder:
    def __init__(self, params: CorpusParams, index: int):
        self.p = params
        self.rng = random.Random(f"appsplit:{params.seed}:{index}")
        self.pkg = f"com.gen{params.seed}.app{index:04d}"

    def maybe_dynamic(self) -> bool:
        return self.rng.random() < self.p.dynamic_edge_rate

    def build(self, index: int) -> AppPackage:
        rng, p, pkg = self.rng, self.p, self.pkg
        n_act = rng.randint(*p.activity_count)
        n_pojo = rng.randint(*p.pojo_count)
        n_res = rng.randint(*p.resource_count)
        n_svc = rng.randint(*p.service_count)
        acts = [f"{pkg}.ui.Act{k:02d}" for k in range(n_act)]
        launcher = acts[0]
        welcome = acts[1] if n_act > 1 and rng.random() < p.welcome_rate else None

        # Ownership: each POJO/resource is private to one activity or shared.
        owners = acts + [f"{pkg}.svc.Service{k}" for k in range(n_svc)]
        def owner():
            return None if rng.random() < p.share_ratio else rng.choice(owners)

        pojo_names = [f"{pkg}.core.C{k:02d}" for k in range(n_pojo)]
        pojo_owner = {c: owner() for c in pojo_names}
        res_types = ("drawable", "string", "color", "dimen", "raw")
        res_names = [f"{rng.choice(res_types)}/r{k:02d}" for k in range(n_res)]
        res_owner = {r: owner() for r in res_names}

        # Resources: non-layout items may refer to later ones (cycles allowed rarely).
        resources = []
        for k, rid in enumerate(res_names):
            refs = []
            if rng.random() < 0.3 and n_res > 1:
                later = res_names[k + 1:] if rng.random() < 0.9 else res_names[:k]
                if later:
                    refs.append(rng.choice(later))
            resources.append(ResourceItem(rid, _size(rng, p.resource_size), tuple(refs)))

        def usable_res(who):
            return [r for r in res_names if res_owner[r] in (None, who)]

        def usable_pojo(who):
            return [c for c in pojo_names if pojo_owner[c] in (None, who)]

        layouts = []
        for a in acts:
            rid = f"layout/{a.rsplit('.', 1)[1].lower()}"
            pool = usable_res(a)
            refs = tuple(sorted(rng.sample(pool, min(len(pool), rng.randint(1, 3))))) if pool else ()
            layouts.append(ResourceItem(rid, _size(rng, p.resource_size), refs))
        resources.extend(layouts)

        # POJO methods: calls point mostly forward to keep chains finite-looking, some back edges.
        pojo_methods = {c: [f"m{j}" for j in range(rng.randint(1, 3))] for c in pojo_names}
        classes = []
        for k, c in enumerate(pojo_names):
            who = pojo_owner[c]
            methods = []
            for name in pojo_methods[c]:
                calls = []
                targets = [t for t in usable_pojo(who) if t != c]
                forward = [t for t in targets if pojo_names.index(t) > k]
                for _ in range(rng.randint(0, 2)):
                    pool = forward if forward and rng.random() < 0.85 else targets
                    if pool:
                        t = rng.choice(pool)
                        calls.append(CallSite(f"{t}.{rng.choice(pojo_methods[t])}", self.maybe_dynamic()))
                rpool = usable_res(who)
                refs = tuple(rng.sample(rpool, min(len(rpool), rng.randint(0, 2)))) if rpool else ()
                methods.append(MethodDef(name, tuple(calls), refs))
            classes.append(ClassUnit(c, ClassKind.POJO, _size(rng, p.class_size), tuple(methods)))

        def pojo_calls(who, lo, hi):
            pool = usable_pojo(who)
            out = []
            for _ in range(rng.randint(lo, hi)):
                if pool:
                    t = rng.choice(pool)
                    out.append(CallSite(f"{t}.{rng.choice(pojo_methods[t])}", self.maybe_dynamic()))
            return tuple(out)

        # Activity transition tree rooted at the launcher; welcome screens never parent.
        parents_ok = [a for a in acts if a != welcome]
        launches: dict[str, list[LaunchSite]] = {a: [] for a in acts}
        filters: dict[str, list[IntentFilter]] = {a: [] for a in acts}
        filters[launcher].append(IntentFilter(MAIN, frozenset({LAUNCHER})))
        for k in range(1, n_act):
            a = acts[k]
            candidates = [x for x in acts[:k] if x != welcome] if a != welcome else [launcher]
            parent = rng.choice(candidates)
            if rng.random() < p.implicit_rate:
                action = f"{pkg}.action.OPEN_{a.rsplit('.', 1)[1].upper()}"
                filters[a].append(IntentFilter(action, frozenset({DEFAULT})))
                launches[parent].append(LaunchSite.implicit(action, {DEFAULT}))
            else:
                launches[parent].append(LaunchSite.explicit(a))
        for a in parents_ok:
            if n_act > 1 and rng.random() < 0.3:
                launches[a].append(LaunchSite.explicit(rng.choice(acts)))

        for a in acts:
            layout = f"layout/{a.rsplit('.', 1)[1].lower()}"
            methods = [MethodDef("onCreate", pojo_calls(a, 1, 3), (layout,))]
            if rng.random() < 0.5:
                methods.append(MethodDef("onResume", pojo_calls(a, 0, 2)))
            sites = launches[a]
            n_handlers = max(1 if sites else 0, rng.randint(0, 2))
            for h in range(n_handlers):
                mine = tuple(sites[h::n_handlers]) if sites else ()
                rpool = usable_res(a)
                refs = tuple(rng.sample(rpool, min(len(rpool), rng.randint(0, 1)))) if rpool else ()
                methods.append(MethodDef(f"onClick{h}", pojo_calls(a, 0, 2), refs, mine))
            classes.append(ClassUnit(a, ClassKind.ACTIVITY, _size(rng, p.class_size), tuple(methods)))

        comps = []
        for s in owners[n_act:]:
            classes.append(ClassUnit(s, ClassKind.SERVICE, _size(rng, p.class_size),
                                     (MethodDef("onStartCommand", pojo_calls(s, 0, 2)),)))
            comps.append(ComponentDecl(s, ComponentKind.SERVICE))

        manifest = Manifest(
            launcher,
            tuple(ActivityDecl(a, tuple(filters[a]), a == welcome) for a in acts),
            tuple(comps),
        )
        assets = [AssetItem(f"assets/a{k}.bin", _size(rng, p.asset_size))
                  for k in range(rng.randint(*p.asset_count))]
        other = [OtherPayload("resources.arsc", _size(rng, p.other_size)),
                 OtherPayload("lib/arm64-v8a/libnative.so", _size(rng, p.other_size))]
        app = AppPackage(f"{pkg}", 1, manifest, tuple(classes), tuple(resources),
                         tuple(assets), tuple(other))
        return validate_package(app)


def gen_app(params: CorpusParams, index: int) -> AppPackage:
    return _Builder(params, index).build(index)


def gen_scripts(app: AppPackage) -> list[ReplayScript]:
    """One script per activity: launch, follow the shortest launch path, tap every handler."""
    man = app.manifest
    start = man.launcher_activity
    paths = {start: []}
    for w in man.welcome_activities:
        paths.setdefault(w, [])
    queue = deque([start])
    while queue:
        a = queue.popleft()
        for i in range(len(app.cls(a).launch_sites())):
            target = resolve_launch(app, a, i)
            if target not in paths:
                paths[target] = paths[a] + [i]
                queue.append(target)
    scripts = []
    for n, a in enumerate(sorted(paths)):
        taps = [Tap(f"{a}.{m.name}") for m in app.cls(a).methods if m.name not in LIFECYCLE]
        if a in man.welcome_activities:
            taps = []  # welcome screens are gone by the time the user can tap
        actions = [Launch(), *(Navigate(i) for i in paths[a]), *taps]
        scripts.append(ReplayScript(f"{n:02d}_{a.rsplit('.', 1)[1]}", a, tuple(actions)))
    return scripts


def gen_usage(params: CorpusParams, app: AppPackage) -> UsageDataset:
    """Visits drawn from a Zipf law over a seeded popularity ranking of the activities."""
    rng = random.Random(f"appsplit-usage:{params.seed}:{app.app_id}")
    acts = sorted(app.activities)
    others = [a for a in acts if a != app.manifest.launcher_activity]
    rng.shuffle(others)
    ranking = [app.manifest.launcher_activity, *others]
    weights = [1.0 / (rank ** params.zipf_exponent) for rank in range(1, len(ranking) + 1)]
    records = []
    t = 1_500_000_000
    for u in range(params.users):
        for _ in range(params.visits_per_user):
            t += rng.randint(1, 600)
            activity = rng.choices(ranking, weights)[0]
            records.append(UsageRecord(str(t), f"u{u:03d}", app.app_id, activity))
    return UsageDataset(records)


def write_corpus(params: CorpusParams, count: int, out) -> list[Path]:
    """Write ``count`` apps, each as ``<app_id>/app.apkg`` + ``scripts/`` + ``usage.csv``."""
    out = Path(out)
    written = []
    for i in range(count):
        app = gen_app(params, i)
        d = out / app.app_id
        (d / "scripts").mkdir(parents=True, exist_ok=True)
        (d / "app.apkg").write_bytes(serialize_package(app))
        for s in gen_scripts(app):
            (d / "scripts" / f"{s.name}.script").write_bytes(serialize_script(s))
        write_usage_csv(gen_usage(params, app), d / "usage.csv")
        written.append(d)
    (out / "params.json").write_text(json.dumps(params.to_json(), indent=2, sort_keys=True) + "\n")
    return written


# -- hand-built fixtures ----------------------------------------------------------

def three_activity_app() -> AppPackage:
    """Three activities sharing one helper class, with one reflective dependency.

    A1 (launcher) and A2 form the intended base; A3 is a feature.  A1 calls
    C0 statically and C2 only through reflection.  Sizes total 3,900 bytes.
    """
    A1, A2, A3, C0, C2, S1 = "app.A1", "app.A2", "app.A3", "app.C0", "app.C2", "app.S1"
    R1, R2, R3, R4 = "layout/R1", "string/R2", "drawable/R3", "drawable/R4"
    classes = [
        ClassUnit(A1, ClassKind.ACTIVITY, 600, (
            MethodDef("onCreate", (CallSite(f"{C0}.run"), CallSite(f"{C2}.init", dynamic=True)), (R1,)),
            MethodDef("onClick0", launches=(LaunchSite.explicit(A2), LaunchSite.explicit(A3))),
        )),
        ClassUnit(A2, ClassKind.ACTIVITY, 500, (
            MethodDef("onCreate", (CallSite(f"{C0}.run"),), (R2,)),
            MethodDef("onClick0", launches=(LaunchSite.explicit(A3),)),
        )),
        ClassUnit(A3, ClassKind.ACTIVITY, 700, (
            MethodDef("onCreate", (CallSite(f"{C0}.run"),), (R2, R4)),
        )),
        ClassUnit(C0, ClassKind.POJO, 400, (MethodDef("run"),)),
        ClassUnit(C2, ClassKind.POJO, 300, (MethodDef("init"),)),
        ClassUnit(S1, ClassKind.SERVICE, 200, (MethodDef("onStartCommand"),)),
    ]
    resources = [
        ResourceItem(R1, 300, (R3,)),
        ResourceItem(R2, 250),
        ResourceItem(R3, 200),
        ResourceItem(R4, 250),
    ]
    manifest = Manifest(
        A1,
        (ActivityDecl(A1, (IntentFilter(MAIN, frozenset({LAUNCHER})),)),
         ActivityDecl(A2), ActivityDecl(A3)),
        (ComponentDecl(S1, ComponentKind.SERVICE),),
    )
    return validate_package(AppPackage(
        "app.sample", 1, manifest, tuple(classes), tuple(resources),
        (AssetItem("assets/index.html", 150),), (OtherPayload("resources.arsc", 50),),
    ))


def three_activity_scripts() -> list[ReplayScript]:
    return [
        ReplayScript("launch", "app.A1", (Launch(),)),
        ReplayScript("open_a2", "app.A2", (Launch(), Navigate(0))),
        ReplayScript("open_a3", "app.A3", (Launch(), Navigate(1))),
    ]


def hidden_chain_app(k: int, with_resources: bool = True) -> AppPackage:
    """Launcher whose start-up reaches ``k`` items only through reflection.

    The chain alternates hidden classes and the resources only they use,
    so each replay can discover exactly one of them.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    launcher, feature = "chain.Main", "chain.Detail"
    items = []  # ("Class" | "Resource", index)
    c = r = 0
    while len(items) < k:
        items.append(("Class", c))
        c += 1
        if with_resources and len(items) < k:
            items.append(("Resource", c - 1))
            r += 1
    n_cls = c
    classes, resources = [], []
    for i in range(n_cls):
        calls = (CallSite(f"chain.H{i + 1}.run", dynamic=True),) if i + 1 < n_cls else ()
        refs = (f"raw/h{i}",) if i < r else ()
        classes.append(ClassUnit(f"chain.H{i}", ClassKind.POJO, 100 + i, (MethodDef("run", calls, refs),)))
    for i in range(r):
        resources.append(ResourceItem(f"raw/h{i}", 50 + i))
    entry = (CallSite("chain.H0.run", dynamic=True),) if n_cls else ()
    classes.append(ClassUnit(launcher, ClassKind.ACTIVITY, 1000, (
        MethodDef("onCreate", entry + (CallSite("chain.Util.help"),), ("layout/main",)),
        MethodDef("onClick0", launches=(LaunchSite.explicit(feature),)),
    )))
    classes.append(ClassUnit(feature, ClassKind.ACTIVITY, 800, (MethodDef("onCreate", (), ("layout/detail",)),)))
    classes.append(ClassUnit("chain.Util", ClassKind.POJO, 300, (MethodDef("help"),)))
    resources += [ResourceItem("layout/main", 400), ResourceItem("layout/detail", 300)]
    manifest = Manifest(launcher, (ActivityDecl(launcher, (IntentFilter(MAIN, frozenset({LAUNCHER})),)),
                                   ActivityDecl(feature)))
    return validate_package(AppPackage(f"chain.k{k}", 1, manifest, tuple(classes), tuple(resources)))
