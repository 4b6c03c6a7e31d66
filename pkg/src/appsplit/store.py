"""Bundle stores: where a device fetches ``.abundle`` archives from.

Wire protocol::

    GET /apps/{app_id}/base.abundle
    GET /apps/{app_id}/features/{activity}.abundle

200 carries the archive bytes; 404 means the bundle does not exist.  A
local store is a directory laid out with the same paths.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Protocol

from .errors import StoreUnavailable

__all__ = ["BundleStore", "MemoryStore", "LocalStore", "PlanStore", "HttpStore", "BundleServer",
           "base_path", "feature_path", "load_plan_dirs"]

log = logging.getLogger(__name__)


class BundleStore(Protocol):
    def get_base(self, app_id: str) -> bytes: ...

    def get_feature(self, app_id: str, activity: str) -> bytes: ...


def base_path(app_id: str) -> str:
    return f"apps/{urllib.parse.quote(app_id, safe='')}/base.abundle"


def feature_path(app_id: str, activity: str) -> str:
    return (f"apps/{urllib.parse.quote(app_id, safe='')}/features/"
            f"{urllib.parse.quote(activity, safe='')}.abundle")


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise StoreUnavailable(f"{path}: {exc.strerror or exc}") from None


class MemoryStore:
    """Archives held in memory, keyed by app id and activity."""

    def __init__(self):
        self.bases: dict[str, bytes] = {}
        self.features: dict[tuple[str, str], bytes] = {}

    def add(self, app_id: str, base: bytes, features: Mapping[str, bytes]) -> "MemoryStore":
        self.bases[app_id] = base
        for activity, data in features.items():
            self.features[(app_id, activity)] = data
        return self

    def get_base(self, app_id: str) -> bytes:
        try:
            return self.bases[app_id]
        except KeyError:
            raise StoreUnavailable(f"no base bundle for {app_id!r}") from None

    def get_feature(self, app_id: str, activity: str) -> bytes:
        try:
            return self.features[(app_id, activity)]
        except KeyError:
            raise StoreUnavailable(f"no feature bundle for {activity!r} of {app_id!r}") from None


class LocalStore:
    """A directory mirroring the HTTP paths."""

    def __init__(self, root):
        self.root = Path(root)

    def get_base(self, app_id: str) -> bytes:
        return _read(self.root / base_path(app_id))

    def get_feature(self, app_id: str, activity: str) -> bytes:
        return _read(self.root / feature_path(app_id, activity))


class PlanStore:
    """Serves the plan directories written by ``decompose``.

    ``plans`` maps app id to a directory holding ``base.abundle`` and
    ``features/<activity>.abundle``.
    """

    def __init__(self, plans: Mapping[str, Path]):
        self.plans = {k: Path(v) for k, v in plans.items()}

    @classmethod
    def from_dir(cls, plan_dir) -> "PlanStore":
        return cls(load_plan_dirs(plan_dir))

    def _dir(self, app_id: str) -> Path:
        try:
            return self.plans[app_id]
        except KeyError:
            raise StoreUnavailable(f"unknown app {app_id!r}") from None

    def get_base(self, app_id: str) -> bytes:
        return _read(self._dir(app_id) / "base.abundle")

    def get_feature(self, app_id: str, activity: str) -> bytes:
        if "/" in activity or activity in ("", ".", ".."):
            raise StoreUnavailable(f"bad activity name {activity!r}")
        return _read(self._dir(app_id) / "features" / f"{activity}.abundle")


def load_plan_dirs(root) -> dict[str, Path]:
    """Map app id to plan directory for ``root`` itself or its immediate subdirectories."""
    root = Path(root)
    if (root / "plan.json").is_file():
        candidates = [root]
    elif root.is_dir():
        candidates = sorted(p for p in root.iterdir() if (p / "plan.json").is_file())
    else:
        candidates = []
    out = {}
    for d in candidates:
        with open(d / "plan.json", encoding="utf-8") as f:
            out[json.load(f)["app_id"]] = d
    return out


class HttpStore:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _get(self, path: str) -> bytes:
        url = f"{self.base_url}/{path}"
        try:
            with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            raise StoreUnavailable(f"GET {url}: HTTP {exc.code}") from None
        except (urllib.error.URLError, OSError) as exc:
            raise StoreUnavailable(f"GET {url}: {getattr(exc, 'reason', exc)}") from None

    def get_base(self, app_id: str) -> bytes:
        return self._get(base_path(app_id))

    def get_feature(self, app_id: str, activity: str) -> bytes:
        return self._get(feature_path(app_id, activity))


class _Handler(BaseHTTPRequestHandler):
    store: BundleStore  # set on the subclass built by BundleServer

    def do_GET(self):
        parts = [urllib.parse.unquote(p) for p in self.path.split("?", 1)[0].strip("/").split("/")]
        try:
            if len(parts) == 3 and parts[0] == "apps" and parts[2] == "base.abundle":
                body = self.store.get_base(parts[1])
            elif (len(parts) == 4 and parts[0] == "apps" and parts[2] == "features"
                  and parts[3].endswith(".abundle")):
                body = self.store.get_feature(parts[1], parts[3][: -len(".abundle")])
            else:
                raise StoreUnavailable(self.path)
        except StoreUnavailable:
            self.send_error(404)
            return
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


class BundleServer:
    """Threaded HTTP server over any :class:`BundleStore`.

    Use as a context manager to run it on a background thread.
    """

    def __init__(self, store: BundleStore, host: str = "127.0.0.1", port: int = 0):
        handler = type("BundleHandler", (_Handler,), {"store": store})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def serve_forever(self):
        self.httpd.serve_forever()

    def __enter__(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()
