"""Install the base bundle over HTTP and fetch a feature the first time it is opened.

Run with ``python demos/on_demand_install.py``.
"""
from appsplit import decompose, recover
from appsplit.decomposer import pack_plan
from appsplit.corpus import three_activity_app, three_activity_scripts
from appsplit.store import BundleServer, HttpStore, MemoryStore
from appsplit.vruntime import IntentObj, VirtualDevice

app = three_activity_app()
plan, _ = recover(app, decompose(app, ["app.A1", "app.A2"]), three_activity_scripts())
base, features = pack_plan(app, plan)

with BundleServer(MemoryStore().add(app.app_id, base, features)) as server:
    print("serving bundles on", server.url)
    store = HttpStore(server.url)
    device = VirtualDevice()
    device.install_base(store, app.app_id)
    print("launch:", device.launch_app(app.app_id))
    # A3 is not in the base bundle, so the first visit downloads it (cold start) ...
    print("first visit:", device.navigate(store, app.app_id, IntentObj.explicit("app.A3")))
    device.back(app.app_id)
    # ... and later visits reuse what was loaded (warm start).
    print("second visit:", device.navigate(store, app.app_id, IntentObj.explicit("app.A3")))

print("fetches:", device.metrics.fetches)
print("cold/warm starts:", device.metrics.cold_starts, device.metrics.warm_starts)
