"""Single-fault fixtures: one per pillar, each breaking exactly that pillar."""

from __future__ import annotations

import copy
import dataclasses

from .manifest import DataObjectType
from .mesh import Mesh, ScenarioConfig, load_fixtures

NODE_FAULTS = {
    1: "bare_listing",
    2: "no_metadata_endpoint",
    3: "corrupt_checksum",
    4: "ignore_visas",
    5: "any_aae",
}


def node_mesh(pillar: int | None = None, cfg: ScenarioConfig | None = None) -> Mesh:
    """Demo mesh whose first node carries the fault for ``pillar`` (1-5)."""
    manifest, configs = load_fixtures(cfg or ScenarioConfig.demo())
    if pillar is not None:
        configs[0].faults = {NODE_FAULTS[pillar]}
    return Mesh.in_process(manifest, configs, hub_options=(cfg or ScenarioConfig.demo()).hub)


def mesh_with_fault(pillar: int | None = None, cfg: ScenarioConfig | None = None) -> Mesh:
    """Harvested demo mesh with the fault for ``pillar`` (6-10) injected."""
    cfg = cfg or ScenarioConfig.demo()
    manifest, configs = load_fixtures(cfg)
    dmms_faults: set[str] = set()
    hub_faults: set[str] = set()
    if pillar == 6:
        # declared type with no schema; nothing of that type is registered
        manifest.supported_types = set(manifest.supported_types) | {DataObjectType.IMAGING_OBJECT}
    elif pillar == 8:
        dmms_faults.add("resolve_omits_primary")
    elif pillar == 9:
        hub_faults.add("skip_usage_delivery")
    mesh = Mesh.in_process(manifest, configs, hub_options=cfg.hub, dmms_faults=dmms_faults, hub_faults=hub_faults)
    mesh.hub.harvest()
    records = mesh.registry.records()
    if pillar == 7:
        # stored record missing a required field, as if written by a buggy importer
        broken = copy.deepcopy(records[-1])
        broken.metadata.pop("description", None)
        mesh.registry.put_unchecked(broken)
    elif pillar == 10:
        for rec in records:
            mesh.registry.put_unchecked(dataclasses.replace(rec, license=""))
    return mesh
