import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appsplit.corpus import CorpusParams, gen_app, three_activity_app
from appsplit.errors import UnknownActivity, UnknownClass
from appsplit.graphs import (
    activity_related_classes, build_atg, build_call_graph, build_refer, build_resource_graph,
    class_related_resources, classify_activity, to_dot,
)
from appsplit.model import (
    ActivityDecl, AppPackage, CallSite, ClassKind, ClassUnit, IntentFilter, LaunchSite, Manifest,
    MethodDef, ResourceItem, validate_package,
)

from oracles import arcls_oracle, crres_oracle


def make_app(classes, resources=(), activities=None, launcher=None):
    acts = activities or [c.name for c in classes if c.kind is ClassKind.ACTIVITY]
    decls = tuple(a if isinstance(a, ActivityDecl) else ActivityDecl(a) for a in acts)
    return validate_package(AppPackage(
        "t.app", 1, Manifest(launcher or decls[0].class_name, decls), tuple(classes), tuple(resources)))


def three_method_app():
    return make_app([
        ClassUnit("t.A", ClassKind.ACTIVITY, 1, (
            MethodDef("m1", (CallSite("t.P.m2"), CallSite("t.P.m3", dynamic=True))),)),
        ClassUnit("t.P", ClassKind.POJO, 1, (MethodDef("m2"), MethodDef("m3"))),
    ])


def test_no_calls_no_edges():
    app = make_app([ClassUnit("t.A", ClassKind.ACTIVITY, 1, (MethodDef("onCreate"),))])
    assert build_call_graph(app).edges == frozenset()


def test_dynamic_filter():
    app = three_method_app()
    static = build_call_graph(app)
    full = build_call_graph(app, include_dynamic=True)
    assert {(s, t) for s, t, _ in static.edges} == {("t.A.m1", "t.P.m2")}
    assert {(s, t) for s, t, _ in full.edges} == {("t.A.m1", "t.P.m2"), ("t.A.m1", "t.P.m3")}


def test_resource_graph():
    app = three_activity_app()
    rg = build_resource_graph(app)
    assert rg.edges == {("layout/R1", "drawable/R3")}
    empty = make_app([ClassUnit("t.A", ClassKind.ACTIVITY, 1)])
    assert build_resource_graph(empty).edges == frozenset()


def cyclic_app():
    return make_app(
        [ClassUnit("t.A", ClassKind.ACTIVITY, 1, (MethodDef("onCreate", (), ("raw/r1",)),)),
         ClassUnit("t.B", ClassKind.ACTIVITY, 1)],
        [ResourceItem("raw/r1", 1, ("raw/r2",)), ResourceItem("raw/r2", 1, ("raw/r1",))],
    )


def test_resource_cycle():
    app = cyclic_app()
    rg = build_resource_graph(app)
    assert rg.edges == {("raw/r1", "raw/r2"), ("raw/r2", "raw/r1")}
    assert class_related_resources(rg, build_refer(app), "t.A") == {"raw/r1", "raw/r2"}
    assert class_related_resources(rg, build_refer(app), "t.B") == set()


def test_arcls_examples():
    app = three_activity_app()
    cg = build_call_graph(app)
    assert activity_related_classes(cg, app, "app.A1") == {"app.A1", "app.C0"}
    lone = make_app([ClassUnit("t.A", ClassKind.ACTIVITY, 1, (MethodDef("onCreate"),))])
    assert activity_related_classes(build_call_graph(lone), lone, "t.A") == {"t.A"}
    chain = make_app([
        ClassUnit("t.A", ClassKind.ACTIVITY, 1, (MethodDef("onCreate", (CallSite("t.C1.m"),)),)),
        ClassUnit("t.C1", ClassKind.POJO, 1, (MethodDef("m", (CallSite("t.C2.m", dynamic=True),)),)),
        ClassUnit("t.C2", ClassKind.POJO, 1, (MethodDef("m"),)),
    ])
    assert activity_related_classes(build_call_graph(chain), chain, "t.A") == {"t.A", "t.C1"}
    with pytest.raises(UnknownActivity):
        activity_related_classes(cg, app, "app.C0")


def test_arcls_passes_through_other_activities():
    app = make_app([
        ClassUnit("t.A", ClassKind.ACTIVITY, 1, (MethodDef("onCreate", (CallSite("t.B.helper"),)),)),
        ClassUnit("t.B", ClassKind.ACTIVITY, 1, (MethodDef("helper", (CallSite("t.P.m"),)),)),
        ClassUnit("t.P", ClassKind.POJO, 1, (MethodDef("m"),)),
    ])
    assert activity_related_classes(build_call_graph(app), app, "t.A") == {"t.A", "t.P"}


def test_crres_fixture():
    app = three_activity_app()
    rg, refer = build_resource_graph(app), build_refer(app)
    assert class_related_resources(rg, refer, "app.A1") == {"layout/R1", "drawable/R3"}
    assert class_related_resources(rg, refer, "app.C0") == set()
    with pytest.raises(UnknownClass):
        class_related_resources(rg, refer, "app.Nope")


def atg_app():
    view = IntentFilter("VIEW", frozenset({"DEFAULT"}))
    return make_app(
        [
            ClassUnit("t.L", ClassKind.ACTIVITY, 1, (MethodDef("onClick0", launches=(
                LaunchSite.explicit("t.A3"), LaunchSite.implicit("VIEW", ["DEFAULT"]))),)),
            ClassUnit("t.A2", ClassKind.ACTIVITY, 1),
            ClassUnit("t.A3", ClassKind.ACTIVITY, 1, (MethodDef("onClick0", launches=(
                LaunchSite.explicit("t.A2"),)),)),
            ClassUnit("t.A5", ClassKind.ACTIVITY, 1),
            ClassUnit("t.Lone", ClassKind.ACTIVITY, 1),
        ],
        activities=[ActivityDecl("t.L"), ActivityDecl("t.A2", (view,)), ActivityDecl("t.A3"),
                    ActivityDecl("t.A5", (view,)), ActivityDecl("t.Lone")],
    )


def test_atg_edges():
    atg = build_atg(atg_app())
    assert ("t.L", "t.A3", "Explicit") in atg.edges
    assert {e for e in atg.edges if e[2] == "Implicit"} == {("t.L", "t.A2", "Implicit"), ("t.L", "t.A5", "Implicit")}
    assert "t.Lone" in atg.nodes
    assert not [e for e in atg.edges if "t.Lone" in e[:2]]


def test_classify():
    atg = build_atg(atg_app())
    assert classify_activity(atg, "t.A3") == "Mediate"
    assert classify_activity(atg, "t.A2") == "ReceivingOnly"
    assert classify_activity(atg, "t.L") == "Source"
    assert classify_activity(atg, "t.Lone") == "Isolated"


def test_dot_mentions_everything():
    app = three_activity_app()
    dot = to_dot(app)
    assert dot.startswith("digraph")
    for c in app.classes:
        assert c.name in dot
    assert "dynamic" in dot


# -- oracle equivalence and properties -------------------------------------------

@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), index=st.integers(0, 30))
def test_closures_match_oracle(seed, index):
    app = gen_app(CorpusParams(seed=seed, dynamic_edge_rate=0.3), index)
    cg, rg, refer = build_call_graph(app), build_resource_graph(app), build_refer(app)
    for a in app.activities:
        assert activity_related_classes(cg, app, a) == arcls_oracle(app, a)
    for c in app.classes:
        assert class_related_resources(rg, refer, c.name) == crres_oracle(app, c.name)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), index=st.integers(0, 30))
def test_dynamic_view_is_superset(seed, index):
    app = gen_app(CorpusParams(seed=seed, dynamic_edge_rate=0.4), index)
    static, full = build_call_graph(app), build_call_graph(app, include_dynamic=True)
    for a in app.activities:
        assert activity_related_classes(static, app, a) <= activity_related_classes(full, app, a)
        assert activity_related_classes(full, app, a) == arcls_oracle(app, a, include_dynamic=True)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), data=st.data())
def test_adding_an_edge_never_shrinks(seed, data):
    app = gen_app(CorpusParams(seed=seed), 0)
    methods = [mid for mid, _ in app.methods()]
    src = data.draw(st.sampled_from(methods))
    dst = data.draw(st.sampled_from(methods))
    cls_name, mname = src.rsplit(".", 1)
    c = app.cls(cls_name)
    new_methods = tuple(
        dataclasses.replace(m, calls=m.calls + (CallSite(dst),)) if m.name == mname else m
        for m in c.methods)
    bigger = dataclasses.replace(app, classes=tuple(
        dataclasses.replace(x, methods=new_methods) if x.name == cls_name else x for x in app.classes))
    before, after = build_call_graph(app), build_call_graph(bigger)
    for a in app.activities:
        assert activity_related_classes(before, app, a) <= activity_related_classes(after, bigger, a)

    res = [r.id for r in app.resources]
    if len(res) >= 2:
        r1, r2 = data.draw(st.sampled_from(res)), data.draw(st.sampled_from(res))
        if r1 != r2:
            more = dataclasses.replace(app, resources=tuple(
                dataclasses.replace(r, refs=r.refs + (r2,)) if r.id == r1 and r2 not in r.refs else r
                for r in app.resources))
            rg0, rg1 = build_resource_graph(app), build_resource_graph(more)
            refer = build_refer(app)
            for c in app.classes:
                assert class_related_resources(rg0, refer, c.name) <= class_related_resources(rg1, refer, c.name)
