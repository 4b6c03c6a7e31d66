import dataclasses
import io
import json
import zipfile

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from appsplit.corpus import CorpusParams, gen_app, three_activity_app
from appsplit.errors import AppSplitError, MalformedArchive, SchemaViolation
from appsplit.model import (
    ActivityDecl, AppPackage, AssetItem, CallSite, ClassKind, ClassUnit, IntentFilter, LaunchSite,
    Manifest, MethodDef, ResourceItem, parse_package, serialize_package, total_size,
    validate_package, write_zip,
)


def minimal_app(size=100):
    return validate_package(AppPackage(
        "min.app", 1, Manifest("min.Main", (ActivityDecl("min.Main"),)),
        (ClassUnit("min.Main", ClassKind.ACTIVITY, size, (MethodDef("onCreate"),)),),
    ))


def test_minimal_package_parses():
    app = parse_package(serialize_package(minimal_app()))
    assert len(app.classes) == 1
    assert app.resources == ()


def test_call_to_missing_class_is_rejected():
    app = minimal_app()
    bad = dataclasses.replace(app, classes=(ClassUnit(
        "min.Main", ClassKind.ACTIVITY, 100,
        (MethodDef("onCreate", (CallSite("min.Ghost.run"),)),)),))
    with pytest.raises(SchemaViolation) as exc:
        validate_package(bad)
    assert exc.value.entity == "min.Main.onCreate"
    with pytest.raises(SchemaViolation):
        parse_package(serialize_package(bad))


def test_round_trip_fixture():
    app = three_activity_app()
    data = serialize_package(app)
    assert parse_package(data) == app
    assert serialize_package(parse_package(data)) == data


def test_serialization_is_deterministic():
    assert serialize_package(three_activity_app()) == serialize_package(three_activity_app())


def test_one_size_change_changes_bytes():
    assert serialize_package(minimal_app(100)) != serialize_package(minimal_app(101))


def test_total_size():
    assert total_size(minimal_app(100)) == 100
    app = three_activity_app()
    assert total_size(app) == 600 + 500 + 700 + 400 + 300 + 200 + 300 + 250 + 200 + 250 + 150 + 50
    assert total_size(app) == 3900
    bigger = dataclasses.replace(app, assets=app.assets + (AssetItem("assets/extra.bin", 10),))
    assert total_size(bigger) == total_size(app) + 10


def test_total_size_is_additive():
    app = three_activity_app()
    only_classes = dataclasses.replace(app, resources=(), assets=(), other=())
    assert total_size(only_classes) == sum(c.size_bytes for c in app.classes)


@pytest.mark.parametrize("index", range(10))
def test_generated_round_trip(index):
    app = gen_app(CorpusParams(seed=11), index)
    assert parse_package(serialize_package(app)) == app


@pytest.mark.parametrize("mutate, entity", [
    (lambda a: dataclasses.replace(a, resources=a.resources + (ResourceItem("bad id", 1),)), "bad id"),
    (lambda a: dataclasses.replace(a, resources=(ResourceItem("raw/x", 1, ("raw/x",)),)), "raw/x"),
    (lambda a: dataclasses.replace(a, manifest=Manifest("min.Nope", a.manifest.activities)), "min.Nope"),
    (lambda a: dataclasses.replace(a, classes=(dataclasses.replace(a.classes[0], size_bytes=-1),)), "min.Main"),
    (lambda a: dataclasses.replace(a, classes=a.classes + (ClassUnit("min.S", ClassKind.SERVICE, 1),)), "min.S"),
    (lambda a: dataclasses.replace(a, classes=(ClassUnit(
        "min.Main", ClassKind.ACTIVITY, 1,
        (MethodDef("go", launches=(LaunchSite.explicit("min.Else"),)),)),)), "min.Main.go"),
])
def test_validation_names_the_entity(mutate, entity):
    with pytest.raises(SchemaViolation) as exc:
        validate_package(mutate(minimal_app()))
    assert exc.value.entity == entity


def test_garbage_bytes_are_malformed():
    with pytest.raises(MalformedArchive):
        parse_package(b"not a zip")
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("manifest.json", "{}")
    with pytest.raises(MalformedArchive):
        parse_package(buf.getvalue())


# -- property tests ----------------------------------------------------------

def _mutations(app):
    """Structural breakages, each of which must be rejected."""
    first = app.classes[0]
    res_id = app.resources[0].id if app.resources else None
    yield "dangling call", dataclasses.replace(app, classes=(
        dataclasses.replace(first, methods=first.methods + (MethodDef("zz", (CallSite("no.Such.m"),)),)),
        *app.classes[1:]))
    yield "dangling resource ref", dataclasses.replace(app, classes=(
        dataclasses.replace(first, methods=first.methods + (MethodDef("zz", (), ("raw/none",)),)),
        *app.classes[1:]))
    yield "duplicate class", dataclasses.replace(app, classes=app.classes + (first,))
    yield "negative size", dataclasses.replace(app, classes=(
        dataclasses.replace(first, size_bytes=-5), *app.classes[1:]))
    yield "launcher removed", dataclasses.replace(app, classes=tuple(
        c for c in app.classes if c.name != app.manifest.launcher_activity))
    if res_id is not None:
        yield "self reference", dataclasses.replace(app, resources=(
            dataclasses.replace(app.resources[0], refs=(res_id,)), *app.resources[1:]))
        yield "resource removed", dataclasses.replace(app, resources=app.resources[1:]) \
            if any(res_id in m.resource_refs for _, m in app.methods()) else None


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 10_000), index=st.integers(0, 50))
def test_every_mutation_is_rejected(seed, index):
    app = gen_app(CorpusParams(seed=seed), index)
    for label, broken in _mutations(app):
        if broken is None:
            continue
        with pytest.raises(SchemaViolation):
            validate_package(broken)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10_000), data=st.data())
def test_corrupted_archives_never_crash(seed, data):
    blob = bytearray(serialize_package(gen_app(CorpusParams(seed=seed), 0)))
    for _ in range(data.draw(st.integers(1, 8))):
        pos = data.draw(st.integers(0, len(blob) - 1))
        blob[pos] = data.draw(st.integers(0, 255))
    try:
        parse_package(bytes(blob))
    except AppSplitError:
        pass


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), index=st.integers(0, 20))
def test_round_trip_property(seed, index):
    app = gen_app(CorpusParams(seed=seed), index)
    assert parse_package(serialize_package(app)) == app


def test_intent_filter_matching():
    f = IntentFilter("VIEW", frozenset({"DEFAULT", "BROWSABLE"}))
    assert f.matches("VIEW", {"DEFAULT"})
    assert f.matches("VIEW", ())
    assert not f.matches("VIEW", {"OTHER"})
    assert not f.matches("EDIT", ())


def _json_paths(obj, prefix=()):
    yield prefix
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _json_paths(v, prefix + (k,))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _json_paths(v, prefix + (i,))


JUNK = st.sampled_from([None, True, -1, 0, 1.5, "", "x", [], {}, ["a"], {"a": 1}, 10 ** 30])


@settings(max_examples=300, deadline=None)
@given(data=st.data())
def test_mutated_records_are_rejected_or_valid(data):
    """Replace one JSON value anywhere in a package; parsing either succeeds or raises a library error."""
    with zipfile.ZipFile(io.BytesIO(serialize_package(gen_app(CorpusParams(), 0)))) as zf:
        docs = {n: json.loads(zf.read(n)) for n in zf.namelist()}
    name = data.draw(st.sampled_from(sorted(docs)))
    path = data.draw(st.sampled_from(list(_json_paths(docs[name]))))
    if not path:
        docs[name] = data.draw(JUNK)
    else:
        holder = docs[name]
        for key in path[:-1]:
            holder = holder[key]
        holder[path[-1]] = data.draw(JUNK)
    try:
        parse_package(write_zip(docs))
    except AppSplitError:
        pass
