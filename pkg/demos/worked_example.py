"""Decompose the three-activity sample app and repair it by replay.

Run with ``python demos/worked_example.py``.
"""
from appsplit import decompose, recover, saving_ratio, total_size
from appsplit.corpus import three_activity_app, three_activity_scripts

# The sample app: a launcher A1, a second base activity A2 and a rarely used A3.
# A1 reaches the helper C2 only through reflection, so static analysis misses it.
app = three_activity_app()
print("package size:", total_size(app), "bytes")

plan = decompose(app, ["app.A1", "app.A2"])
print("base classes:  ", sorted(plan.base.classes))
print("base resources:", sorted(plan.base.resources))
for activity, feature in plan.features.items():
    print(f"feature {activity}: classes={sorted(feature.classes)} resources={sorted(feature.resources)}")
print("saving ratio:", saving_ratio(app, plan), "=", float(saving_ratio(app, plan)))

# Replaying the recorded scripts exposes the missing reflective target and moves it to base.
recovered, report = recover(app, plan, three_activity_scripts())
print("added by recovery:", report.added)
print("iterations per bundle:", report.iterations)
print("saving ratio after recovery:", float(saving_ratio(app, recovered)))
