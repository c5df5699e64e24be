"""Assemble a mesh (nodes, DMMS, hub, federated executor) from fixtures,
either in-process over ``LocalTransport`` or on real sockets."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .auth import TokenVerifier
from .clients import DmmsClient, NodeClient
from .errors import BadFixture
from .federated import FederatedExecutor
from .http import (
    App,
    Capture,
    CapturingTransport,
    HttpTransport,
    JsonClient,
    LocalTransport,
    Server,
    Transport,
    capturing_app,
)
from .hub import Hub
from .journal import Journal
from .manifest import MeshManifest, load_manifest
from .node import NodeConfig, PlatformNode, load_node_config
from .registry import Registry
from .services import DmmsService, dmms_app, hub_app, node_app


def demo_dir() -> Path:
    return Path(str(resources.files("meshkit") / "data" / "demo"))


def demo_scenario_path() -> Path:
    return demo_dir() / "scenario.json"


@dataclass
class ScenarioConfig:
    manifest: Path
    nodes: list[Path]
    hub: dict[str, Any] = field(default_factory=dict)
    output_dir: Path = Path("meshkit-out")

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise BadFixture(f"scenario not found: {path}") from None
        except ValueError as exc:
            raise BadFixture(f"{path}: {exc}") from None
        base = path.parent
        cfg = cls(
            manifest=base / data["manifest"],
            nodes=[base / n for n in data.get("nodes", [])],
            hub=dict(data.get("hub", {})),
            output_dir=Path(data.get("output_dir", "meshkit-out")),
        )
        for p in [cfg.manifest, *cfg.nodes]:
            if not p.exists():
                raise BadFixture(f"fixture file missing: {p}")
        return cfg

    @classmethod
    def demo(cls) -> ScenarioConfig:
        return cls.load(demo_scenario_path())


def load_fixtures(cfg: ScenarioConfig) -> tuple[MeshManifest, list[NodeConfig]]:
    manifest_path = os.environ.get("MESHKIT_MANIFEST") or cfg.manifest
    return load_manifest(manifest_path), [load_node_config(p) for p in cfg.nodes]


def _host(name: str) -> str:
    return f"http://{name.lower()}.mesh.local"


class Mesh:
    """A running mesh. Build with :meth:`in_process` or :meth:`serve`."""

    def __init__(self):
        self.manifest: MeshManifest
        self.nodes: dict[str, PlatformNode] = {}
        self.registry: Registry
        self.dmms_service: DmmsService
        self.hub: Hub
        self.executor: FederatedExecutor
        self.capture = Capture()
        self.transport: Transport
        self.node_urls: dict[str, str] = {}
        self.dmms_url = ""
        self.hub_url = ""
        self.servers: list[Server] = []

    # -- construction -------------------------------------------------------

    @staticmethod
    def _trust(configs: list[NodeConfig]) -> dict[str, str]:
        return {c.platform_id: c.issuer_secret for c in configs}

    def _build(self, manifest, configs, node_urls, dmms_url, hub_url, client_transport, hub_transport, *,
               journal, hub_options, dmms_faults, hub_faults):
        self.manifest = manifest
        self.node_urls = dict(node_urls)
        self.dmms_url = dmms_url
        self.hub_url = hub_url
        trust = self._trust(configs)
        for cfg in configs:
            cfg.trusted_issuers = {**trust, **cfg.trusted_issuers}
            node = PlatformNode(cfg, node_urls[cfg.platform_id])
            if cfg.platform_id in self.nodes:
                raise BadFixture(f"duplicate platform {cfg.platform_id}")
            self.nodes[cfg.platform_id] = node
        platforms = {pid: n.descriptor() for pid, n in self.nodes.items()}
        self.registry = Registry(manifest, platforms, journal)
        verifier = TokenVerifier(trust)
        self.dmms_service = DmmsService(self.registry, verifier, dmms_faults)
        node_clients = {pid: NodeClient(url, hub_transport) for pid, url in node_urls.items()}
        self.hub = Hub(
            manifest,
            DmmsClient(dmms_url, hub_transport),
            node_clients,
            platforms=platforms,
            verifier=verifier,
            live_authz=bool(hub_options.get("live_authz", False)),
            linkage_key=str(hub_options.get("linkage_key", "")),
            faults=hub_faults,
        )
        self.executor = FederatedExecutor(node_clients)
        self.transport = client_transport

    def apps(self) -> dict[str, App]:
        out = {url: node_app(node) for url, node in ((self.node_urls[p], n) for p, n in self.nodes.items())}
        out[self.dmms_url] = dmms_app(self.dmms_service)
        out[self.hub_url] = capturing_app(hub_app(self.hub, self.executor), self.capture)
        return out

    @classmethod
    def in_process(cls, manifest: MeshManifest, configs: list[NodeConfig], *, journal: Journal | None = None,
                   hub_options: dict | None = None, dmms_faults=(), hub_faults=()) -> Mesh:
        mesh = cls()
        local = LocalTransport()
        node_urls = {c.platform_id: _host(c.platform_id) for c in configs}
        mesh._build(
            manifest, configs, node_urls, _host("dmms"), _host("hub"), local,
            CapturingTransport(local, mesh.capture),
            journal=journal, hub_options=hub_options or {}, dmms_faults=set(dmms_faults), hub_faults=set(hub_faults),
        )
        for url, app in mesh.apps().items():
            local.mount(url, app)
        return mesh

    @classmethod
    def serve(cls, manifest: MeshManifest, configs: list[NodeConfig], *, host: str = "127.0.0.1",
              port_base: int = 0, journal: Journal | None = None, hub_options: dict | None = None,
              dmms_faults=(), hub_faults=()) -> Mesh:
        """Bind one port per service (consecutive from ``port_base``; 0 = OS-assigned)."""
        mesh = cls()
        placeholder = App("starting")
        names = ["dmms", "hub", *[c.platform_id for c in configs]]
        try:
            for i, _ in enumerate(names):
                mesh.servers.append(Server(placeholder, host, port_base + i if port_base else 0))
        except Exception:
            for s in mesh.servers:
                s.httpd.server_close()
            raise
        urls = {name: s.url for name, s in zip(names, mesh.servers)}
        http = HttpTransport()
        mesh._build(
            manifest, configs, {c.platform_id: urls[c.platform_id] for c in configs}, urls["dmms"], urls["hub"],
            http, CapturingTransport(http, mesh.capture),
            journal=journal, hub_options=hub_options or {}, dmms_faults=set(dmms_faults), hub_faults=set(hub_faults),
        )
        apps = mesh.apps()
        for name, server in zip(names, mesh.servers):
            server.set_app(apps[urls[name]])
            server.start()
        return mesh

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig, *, serve: bool = False, **kw) -> Mesh:
        manifest, configs = load_fixtures(cfg)
        kw.setdefault("hub_options", cfg.hub)
        if serve:
            return cls.serve(manifest, configs, **kw)
        return cls.in_process(manifest, configs, **kw)

    @classmethod
    def demo(cls, **kw) -> Mesh:
        return cls.from_scenario(ScenarioConfig.demo(), **kw)

    def stop(self) -> None:
        for s in self.servers:
            s.stop()
        self.servers.clear()

    def __enter__(self) -> Mesh:
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- client handles -----------------------------------------------------

    def endpoint_table(self) -> list[tuple[str, str]]:
        rows = [("dmms", self.dmms_url), ("hub", self.hub_url)]
        rows += [(f"node:{pid}", url) for pid, url in sorted(self.node_urls.items())]
        return rows

    def node_client(self, platform_id: str) -> NodeClient:
        return NodeClient(self.node_urls[platform_id], self.transport)

    def dmms_client(self) -> DmmsClient:
        return DmmsClient(self.dmms_url, self.transport)

    def hub_client(self, session_id: str | None = None) -> JsonClient:
        headers = {"X-Session-Id": session_id} if session_id else None
        return JsonClient(self.hub_url, self.transport, headers)

    def content_sentinels(self) -> list[bytes]:
        return [o.content for n in self.nodes.values() for o in n.objects()]

    def mesh_descriptor(self) -> dict:
        return {
            "manifest": self.manifest.to_json(),
            "dmms": self.dmms_url,
            "hub": self.hub_url,
            "nodes": {
                pid: {
                    "endpoint": url,
                    "usage_opt_out": self.nodes[pid].config.usage_opt_out,
                    "profile": self.nodes[pid].config.conformance_profile,
                }
                for pid, url in sorted(self.node_urls.items())
            },
        }
