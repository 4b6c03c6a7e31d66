"""Run usage-driven decomposition and replay repair over a generated corpus.

Run with ``python demos/corpus_recovery.py``.
"""
import statistics

from appsplit import decompose, recover, saving_ratio
from appsplit.corpus import CorpusParams, gen_app, gen_scripts, gen_usage
from appsplit.usage import select_base_activities

params = CorpusParams(seed=3, dynamic_edge_rate=0.3)
ratios, iterations, added = [], [], 0
for index in range(40):
    app = gen_app(params, index)
    sel = select_base_activities(gen_usage(params, app), app, 0.8)
    plan, report = recover(app, decompose(app, sel), gen_scripts(app))
    ratios.append(float(saving_ratio(app, plan)))
    iterations += report.iterations.values()
    added += len(report.added)

print(f"median saving ratio: {statistics.median(ratios):.1%}")
print(f"items restored by replay: {added}")
print(f"largest per-bundle iteration count: {max(iterations)}")
print(f"bundles finished within 10 iterations: {sum(n <= 10 for n in iterations) / len(iterations):.0%}")
