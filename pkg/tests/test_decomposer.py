import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appsplit.corpus import CorpusParams, gen_app, gen_usage, three_activity_app
from appsplit.decomposer import (
    WhiteList, compute_base_bundle, compute_feature_bundle, decompose, dumps_plan, open_bundle,
    pack_bundle, plan_from_json, plan_to_json, rewrite_launch_sites, saving_ratio,
    unpack_bundle,
)
from appsplit.errors import ActivityInBase, InvalidSelection, SchemaViolation, UnknownActivity
from appsplit.model import (
    ActivityDecl, AppPackage, CallSite, ClassKind, ClassUnit, Manifest, MethodDef, ResourceItem,
    validate_package,
)
from appsplit.usage import select_base_activities

from oracles import check_partition, plan_oracle

SEL = ["app.A1", "app.A2"]


def test_fixture_base_and_feature():
    app = three_activity_app()
    plan = decompose(app, SEL)
    assert plan.base.classes == {"app.A1", "app.A2", "app.C0", "app.S1"}
    assert plan.base.resources == {"layout/R1", "string/R2", "drawable/R3"}
    assert plan.base.assets == {"assets/index.html"}
    assert plan.base.other == {"resources.arsc"}
    assert list(plan.features) == ["app.A3"]
    a3 = plan.features["app.A3"]
    assert (a3.classes, a3.resources) == ({"app.A3"}, {"drawable/R4"})
    # Hand arithmetic on the fixture's sizes.
    assert plan.base.size_bytes == 600 + 500 + 400 + 200 + 300 + 250 + 200 + 150 + 50
    assert a3.size_bytes == 700 + 250
    assert saving_ratio(app, plan) == 1 - Fraction(2650, 3900)


def test_all_activities_selected():
    app = three_activity_app()
    plan = decompose(app, ["app.A1", "app.A2", "app.A3"])
    assert plan.features == {}
    used = {r for c in plan.base.classes for r in app.cls(c).referred_resources()}
    assert used <= plan.base.resources


def test_selection_must_include_launcher():
    with pytest.raises(InvalidSelection):
        decompose(three_activity_app(), ["app.A2"])
    with pytest.raises(InvalidSelection):
        decompose(three_activity_app(), ["app.A1", "app.C0"])


def test_feature_bundle_errors():
    app = three_activity_app()
    base = compute_base_bundle(app, SEL)
    with pytest.raises(ActivityInBase):
        compute_feature_bundle(app, base, "app.A2")
    with pytest.raises(UnknownActivity):
        compute_feature_bundle(app, base, "app.Nope")


def shared_helper_app():
    """Launcher L; features F1 and F2 both use POJO C9 and resource raw/shared."""
    cls = [
        ClassUnit("s.L", ClassKind.ACTIVITY, 10, (MethodDef("onCreate", (), ("layout/main",)),)),
        ClassUnit("s.F1", ClassKind.ACTIVITY, 20, (MethodDef("onCreate", (CallSite("s.C9.run"),)),)),
        ClassUnit("s.F2", ClassKind.ACTIVITY, 30, (MethodDef("onCreate", (CallSite("s.C9.run"),)),)),
        ClassUnit("s.F3", ClassKind.ACTIVITY, 40, (MethodDef("onCreate", (), ("layout/main",)),)),
        ClassUnit("s.C9", ClassKind.POJO, 100, (MethodDef("run", (), ("raw/shared",)),)),
    ]
    res = [ResourceItem("layout/main", 5), ResourceItem("raw/shared", 7)]
    man = Manifest("s.L", tuple(ActivityDecl(n) for n in ("s.L", "s.F1", "s.F2", "s.F3")))
    return validate_package(AppPackage("s.app", 1, man, tuple(cls), tuple(res)))


def test_feature_with_everything_in_base():
    app = shared_helper_app()
    plan = decompose(app, ["s.L"])
    f3 = plan.features["s.F3"]
    assert f3.classes == {"s.F3"}
    assert f3.resources == set()


def test_features_may_share_a_class():
    app = shared_helper_app()
    plan = decompose(app, ["s.L"])
    for a in ("s.F1", "s.F2"):
        assert "s.C9" in plan.features[a].classes
        assert "raw/shared" in plan.features[a].resources


def test_single_activity_app_has_no_features():
    app = gen_app(CorpusParams(activity_count=(1, 1)), 0)
    plan = decompose(app, [app.manifest.launcher_activity])
    assert plan.features == {}


def test_whitelist_scopes():
    app = three_activity_app()
    plan = decompose(app, SEL, WhiteList(classes={"app.C2"}))
    assert "app.C2" in plan.base.classes
    scoped = decompose(app, SEL, WhiteList(classes={"app.C2"}, scope={"app.C2": "app.A3"}))
    assert "app.C2" not in scoped.base.classes
    assert "app.C2" in scoped.features["app.A3"].classes
    res = decompose(app, SEL, WhiteList(resources={"drawable/R4"}))
    assert "drawable/R4" in res.base.resources
    assert res.features["app.A3"].resources == set()
    with pytest.raises(SchemaViolation):
        decompose(app, SEL, WhiteList(classes={"app.Ghost"}))
    with pytest.raises(SchemaViolation):
        decompose(app, SEL, WhiteList(classes={"app.A3"}))
    with pytest.raises(InvalidSelection):
        decompose(app, SEL, WhiteList(classes={"app.C2"}, scope={"app.C2": "app.A2"}))
    round_tripped = WhiteList.from_json(json.loads(json.dumps(
        WhiteList(classes={"app.C2"}, scope={"app.C2": "app.A3"}).to_json())))
    assert round_tripped == WhiteList(classes={"app.C2"}, scope={"app.C2": "app.A3"})


def test_rewrite_launch_sites():
    app = three_activity_app()
    plan = decompose(app, SEL)
    rewritten = rewrite_launch_sites(app, plan)
    a1 = rewritten.cls("app.A1").launch_sites()
    assert [(s.target_activity, s.hooked) for s in a1] == [("app.A2", False), ("app.A3", True)]
    assert [s.hooked for s in rewritten.cls("app.A2").launch_sites()] == [True]
    gen = gen_app(CorpusParams(implicit_rate=1.0, seed=5), 0)
    gplan = decompose(gen, [gen.manifest.launcher_activity])
    for c in rewrite_launch_sites(gen, gplan).classes:
        for s in c.launch_sites():
            if s.kind == "implicit":
                assert not s.hooked


def test_pack_round_trip():
    app = three_activity_app()
    plan = decompose(app, SEL)
    for bundle in plan.bundles():
        data = pack_bundle(bundle, app)
        assert data == pack_bundle(bundle, app)
        assert unpack_bundle(data) == bundle
    archive = open_bundle(pack_bundle(plan.base, app))
    assert archive.manifest == app.manifest
    assert {c.name for c in archive.classes} == plan.base.classes


def test_empty_resource_feature_archive():
    app = shared_helper_app()
    plan = decompose(app, ["s.L"])
    data = pack_bundle(plan.features["s.F3"], app)
    archive = open_bundle(data)
    assert archive.resources == ()
    assert unpack_bundle(data).resources == frozenset()


def test_plan_json_round_trip():
    app = three_activity_app()
    plan = decompose(app, SEL, WhiteList(classes={"app.C2"}))
    doc = json.loads(dumps_plan(app, plan))
    assert doc["schema"] == 1
    assert doc["original_size"] == 3900
    assert Fraction(doc["saving_ratio_exact"]) == saving_ratio(app, plan)
    assert plan_from_json(doc) == plan
    assert plan_to_json(app, plan_from_json(doc)) == doc


def test_usage_driven_selection_feeds_decompose():
    params = CorpusParams(seed=4)
    app = gen_app(params, 2)
    sel = select_base_activities(gen_usage(params, app), app, 0.8)
    plan = decompose(app, sel)
    assert set(plan.base_activities) == set(sel)


# -- invariants --------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), index=st.integers(0, 40), data=st.data())
def test_partition_invariants(seed, index, data):
    app = gen_app(CorpusParams(seed=seed), index)
    must = [app.manifest.launcher_activity, *app.manifest.welcome_activities]
    rest = sorted(app.activities - set(must))
    extra = data.draw(st.lists(st.sampled_from(rest), unique=True)) if rest else []
    plan = decompose(app, must + extra)
    assert check_partition(app, plan) == []
    base_c, base_r, features = plan_oracle(app, must + extra)
    assert (plan.base.classes, plan.base.resources) == (base_c, base_r)
    assert {a: (f.classes, f.resources) for a, f in plan.features.items()} == features
    assert decompose(app, must + extra) == plan


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), data=st.data())
def test_whitelist_monotone(seed, data):
    app = gen_app(CorpusParams(seed=seed), 0)
    sel = [app.manifest.launcher_activity, *app.manifest.welcome_activities]
    small = WhiteList(classes=set(data.draw(st.lists(st.sampled_from(sorted(app.class_map.keys() - app.activities)), max_size=3))))
    big = WhiteList(classes=small.classes | set(data.draw(
        st.lists(st.sampled_from(sorted(app.class_map.keys() - app.activities)), max_size=3))),
        resources=set(data.draw(st.lists(st.sampled_from(sorted(app.resource_map) or ["x/none"]),
                                         max_size=2))) & set(app.resource_map))
    p1, p2 = decompose(app, sel, small), decompose(app, sel, big)
    members = lambda p: {("base", x) for x in p.base.classes | p.base.resources} | {  # noqa: E731
        (a, x) for a, f in p.features.items() for x in f.classes | f.resources}
    # Anything the small whitelist placed somewhere is still shipped somewhere.
    shipped = lambda p: {x for _, x in members(p)}  # noqa: E731
    assert shipped(p1) <= shipped(p2)
    assert p1.base.classes <= p2.base.classes
    assert p1.base.resources <= p2.base.resources
