"""Shared helpers for building decomposed corpora in tests."""

from __future__ import annotations

from functools import lru_cache

from appsplit.corpus import CorpusParams, gen_app, gen_scripts, gen_usage
from appsplit.decomposer import decompose, pack_plan
from appsplit.recovery import recover
from appsplit.store import MemoryStore
from appsplit.usage import select_base_activities

DEFAULT = CorpusParams()


@lru_cache(maxsize=None)
def pipeline(params: CorpusParams, index: int, coverage: float = 0.8):
    """Generate app ``index``, decompose by usage, recover with its scripts."""
    app = gen_app(params, index)
    sel = select_base_activities(gen_usage(params, app), app, coverage)
    plan = decompose(app, sel)
    scripts = gen_scripts(app)
    recovered, report = recover(app, plan, scripts)
    return app, plan, recovered, report, scripts


def store_for(app, plan, store: MemoryStore | None = None) -> MemoryStore:
    base, features = pack_plan(app, plan)
    return (store or MemoryStore()).add(app.app_id, base, features)
