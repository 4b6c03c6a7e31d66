"""Summarise how evenly users spread across activities, then choose a base set.

Run with ``python demos/usage_entropy.py``.
"""
import math
from collections import Counter

from appsplit.corpus import CorpusParams, gen_app, gen_usage
from appsplit.usage import feature_usage_ratio, select_base_activities, usage_entropy

# Steep popularity (a few activities dominate) versus flat popularity.
datasets = {}
for exponent in (3.0, 1.0, 0.0):
    params = CorpusParams(seed=11, activity_count=(8, 8), zipf_exponent=exponent, users=300)
    app = gen_app(params, 0)
    usage = datasets[exponent] = gen_usage(params, app)
    print(f"zipf exponent {exponent}: entropy {usage_entropy(usage, app):.3f} "
          f"(max ln 8 = {math.log(8):.3f}), feature usage ratio {feature_usage_ratio(usage, app):.2f}")

# Base activities are the most visited ones, taken until 80% of all visits are covered,
# plus the launcher.  With steep popularity only a few are needed.
steep = datasets[3.0]
visits = Counter(r.activity for r in steep.for_app(app))
for activity, n in visits.most_common():
    print(f"  {activity:<28} {n:>5} visits")
print("base for 80% coverage:", select_base_activities(steep, app, 0.8))
