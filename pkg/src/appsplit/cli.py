"""Command-line front end.

Exit codes: 0 success, 1 I/O or malformed input, 2 invalid selection or
parameters, 3 recovery did not terminate, 4 bundle store unavailable.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import shutil
import sys
from pathlib import Path

from .corpus import CorpusParams, write_corpus
from .decomposer import (
    WhiteList, decompose, dumps_plan, pack_plan, plan_from_json,
)
from .errors import (
    AppSplitError, InvalidParams, InvalidSelection, MalformedArchive, NonTermination,
    SchemaViolation, StoreUnavailable,
)
from .graphs import to_dot
from .model import parse_package, serialize_package
from .recovery import parse_script, recover
from .store import BundleServer, HttpStore, PlanStore
from .usage import read_usage_csv, select_base_activities
from .vruntime import DEFAULT_STUB_POOL, VirtualDevice

log = logging.getLogger("appsplit")

EXIT_IO, EXIT_INVALID, EXIT_NONTERM, EXIT_STORE = 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _dump(obj, dest: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if dest is None:
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def _load_app(path):
    return parse_package(Path(path).read_bytes())


def write_plan_dir(out: Path, app, plan) -> None:
    """Write ``app.apkg``, ``plan.json``, ``base.abundle`` and ``features/``."""
    base, features = pack_plan(app, plan)
    out.mkdir(parents=True, exist_ok=True)
    feat_dir = out / "features"
    if feat_dir.exists():
        shutil.rmtree(feat_dir)
    feat_dir.mkdir()
    (out / "app.apkg").write_bytes(serialize_package(app))
    (out / "base.abundle").write_bytes(base)
    for activity, data in features.items():
        (feat_dir / f"{activity}.abundle").write_bytes(data)
    (out / "plan.json").write_text(dumps_plan(app, plan), encoding="utf-8")


def cmd_decompose(args) -> int:
    app = _load_app(args.app)
    if args.base_activities:
        sel = [a.strip() for a in args.base_activities.split(",") if a.strip()]
    else:
        sel = select_base_activities(read_usage_csv(args.usage), app, args.coverage)
    whitelist = WhiteList()
    if args.whitelist:
        whitelist = WhiteList.from_json(json.loads(Path(args.whitelist).read_text(encoding="utf-8")))
    try:
        plan = decompose(app, sel, whitelist)
    except (InvalidSelection, SchemaViolation) as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    write_plan_dir(Path(args.out), app, plan)
    log.info("%s: base %d bytes, %d feature bundles", app.app_id, plan.base.size_bytes, len(plan.features))
    return 0


def cmd_recover(args) -> int:
    plan_dir = Path(args.plan)
    app = _load_app(plan_dir / "app.apkg")
    plan = plan_from_json(json.loads((plan_dir / "plan.json").read_text(encoding="utf-8")))
    scripts = [parse_script(p.read_bytes(), name=p.stem) for p in sorted(Path(args.scripts).glob("*.script"))]
    try:
        plan, report = recover(app, plan, scripts, args.max_iterations)
    except NonTermination as exc:
        raise CliError(EXIT_NONTERM, str(exc)) from None
    write_plan_dir(plan_dir, app, plan)
    _dump(report.to_json(), plan_dir / "recovery-report.json")
    log.info("%s: %d recovery iterations", app.app_id, report.total_iterations)
    return 0


def cmd_simulate(args) -> int:
    if args.store_url:
        store = HttpStore(args.store_url)
        app_id = args.app_id
        if not app_id:
            raise CliError(EXIT_INVALID, "--app-id is required with --store-url")
    else:
        store = PlanStore.from_dir(args.plan)
        app_id = args.app_id or next(iter(store.plans), None)
        if app_id is None:
            raise CliError(EXIT_IO, f"{args.plan}: no plan.json found")
    state_path = Path(args.device_state) if args.device_state else None
    if state_path is not None and state_path.exists():
        device = VirtualDevice.from_state(json.loads(state_path.read_text(encoding="utf-8")))
    else:
        device = VirtualDevice(args.stub_pool)
    script = parse_script(Path(args.script).read_bytes(), name=Path(args.script).stem)
    if app_id not in device.installed_apps:
        device.install_base(store, app_id)
    metrics = device.run_session(store, app_id, script)
    if state_path is not None:
        _dump(device.to_state(), state_path)
    _dump({"app_id": app_id, "script": script.name, **metrics.to_json()},
          Path(args.report) if args.report else None)
    return 0


def cmd_serve(args) -> int:
    host, _, port = args.addr.rpartition(":")
    store = PlanStore.from_dir(args.plan)
    if not store.plans:
        raise CliError(EXIT_IO, f"{args.plan}: no plan.json found")
    try:
        server = BundleServer(store, host or "127.0.0.1", int(port))
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot bind {args.addr}: {exc}") from None
    print(f"serving {', '.join(sorted(store.plans))} on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()
    return 0


def nearest_rank(values, q: float):
    """Smallest value with at least ``q`` of the data at or below it."""
    if not values:
        return None
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


def distribution(values) -> dict:
    return {
        "count": len(values),
        "min": min(values) if values else None,
        "p10": nearest_rank(values, 0.10),
        "p50": nearest_rank(values, 0.50),
        "p90": nearest_rank(values, 0.90),
        "max": max(values) if values else None,
    }


def corpus_stats(root) -> dict:
    ratios, feature_sizes, iterations, base_sizes = [], [], [], []
    plans = sorted(Path(root).rglob("plan.json"))
    for path in plans:
        plan = json.loads(path.read_text(encoding="utf-8"))
        ratios.append(plan["saving_ratio"])
        base_sizes.append(plan["base"]["size_bytes"])
        feature_sizes.extend(f["size_bytes"] for f in plan["features"].values())
        report = path.parent / "recovery-report.json"
        if report.exists():
            iterations.extend(json.loads(report.read_text(encoding="utf-8"))["iterations"].values())
    under = sum(1 for s in feature_sizes if s < 500 * 1024)
    return {
        "schema": 1,
        "plans": len(plans),
        "saving_ratio": distribution(ratios),
        "median_saving_ratio": nearest_rank(ratios, 0.5),
        "base_bundle_size": distribution(base_sizes),
        "feature_bundle_size": distribution(feature_sizes),
        "feature_bundles_under_500kb": under / len(feature_sizes) if feature_sizes else None,
        "iterations": distribution(iterations),
        "bundles_within_10_iterations": (
            sum(1 for i in iterations if i <= 10) / len(iterations) if iterations else None
        ),
    }


def cmd_stats(args) -> int:
    _dump(corpus_stats(args.plans), Path(args.out) if args.out else None)
    return 0


def cmd_gen(args) -> int:
    try:
        params = CorpusParams.from_json(json.loads(Path(args.params).read_text(encoding="utf-8")))
    except (InvalidParams, json.JSONDecodeError) as exc:
        raise CliError(EXIT_INVALID, f"invalid params: {exc}") from None
    if args.count < 0:
        raise CliError(EXIT_INVALID, "--count must be non-negative")
    write_corpus(params, args.count, args.out)
    return 0


def cmd_graph(args) -> int:
    sys.stdout.write(to_dot(_load_app(args.app)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="appsplit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="split a package into base and feature bundles")
    p.add_argument("--app", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--base-activities", help="comma-separated activity names")
    group.add_argument("--usage", help="usage CSV for usage-driven selection")
    p.add_argument("--coverage", type=float, default=0.8)
    p.add_argument("--whitelist")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("recover", help="replay scripts and repair a plan directory in place")
    p.add_argument("--plan", required=True)
    p.add_argument("--scripts", required=True)
    p.add_argument("--max-iterations", type=int, help="cap on additions per bundle")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("simulate", help="run a script on a virtual device")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--plan", help="plan directory (or directory of plans) used as local store")
    group.add_argument("--store-url")
    p.add_argument("--app-id")
    p.add_argument("--script", required=True)
    p.add_argument("--report")
    p.add_argument("--device-state", help="JSON file persisting installed bundles between runs")
    p.add_argument("--stub-pool", type=int, default=DEFAULT_STUB_POOL)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="serve plan directories over HTTP")
    p.add_argument("--plan", required=True)
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("stats", help="aggregate plan and recovery statistics")
    p.add_argument("--plans", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--params", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("graph", help="dump class/resource dependencies")
    p.add_argument("--app", required=True)
    p.add_argument("--dot", action="store_true", default=True)
    p.set_defaults(func=cmd_graph)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"appsplit: {exc}", file=sys.stderr)
        return exc.code
    except StoreUnavailable as exc:
        print(f"appsplit: store unavailable: {exc}", file=sys.stderr)
        return EXIT_STORE
    except (InvalidSelection, InvalidParams) as exc:
        print(f"appsplit: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NonTermination as exc:
        print(f"appsplit: {exc}", file=sys.stderr)
        return EXIT_NONTERM
    except (OSError, MalformedArchive, SchemaViolation, AppSplitError, json.JSONDecodeError) as exc:
        print(f"appsplit: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
