"""Node/edge type tables and meta relations."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

from exception import ConfigError, UnknownType

REVERSE_SUFFIX = "~rev"
SELF_PREFIX = "self~"


@dataclass(frozen=True)
class NodeType:
    name: str
    feature_dim: int
    is_event: bool = False


@dataclass(frozen=True)
class EdgeType:
    name: str
    src: int
    tgt: int
    symmetric: bool = False
    inverse: int = -1
    is_self_loop: bool = False
    generated: bool = False  # reverse type synthesised by the schema


@dataclass(frozen=True)
class MetaPath:
    """A composed edge type materialised at ingestion (e.g. co-authorship = writes then writes~rev)."""
    name: str
    path: tuple[str, ...]
    symmetric: bool = False


class MetaRelation(NamedTuple):
    src_type: int
    edge_type: int
    tgt_type: int


@dataclass(frozen=True)
class Schema:
    node_types: tuple[NodeType, ...]
    edge_types: tuple[EdgeType, ...]
    metapaths: tuple[MetaPath, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "_node_ids", {t.name: i for i, t in enumerate(self.node_types)})
        object.__setattr__(self, "_edge_ids", {t.name: i for i, t in enumerate(self.edge_types)})
        if len(self._node_ids) != len(self.node_types):
            raise ConfigError("duplicate node type names in schema")
        if len(self._edge_ids) != len(self.edge_types):
            raise ConfigError("duplicate edge type names in schema")

    # --- lookups ---

    @property
    def num_node_types(self) -> int:
        return len(self.node_types)

    @property
    def num_edge_types(self) -> int:
        return len(self.edge_types)

    def node_type_id(self, name: str) -> int:
        try:
            return self._node_ids[name]
        except KeyError:
            raise UnknownType(f"undeclared node type '{name}'") from None

    def edge_type_id(self, name: str) -> int:
        try:
            return self._edge_ids[name]
        except KeyError:
            raise UnknownType(f"undeclared edge type '{name}'") from None

    def path_step(self, name: str) -> int:
        """Edge type of a meta path step; "X~rev" names the inverse of X even when X declares its own."""
        if name not in self._edge_ids and name.endswith(REVERSE_SUFFIX):
            base = name[: -len(REVERSE_SUFFIX)]
            if base in self._edge_ids:
                return self.inverse(self._edge_ids[base])
        return self.edge_type_id(name)

    def node_name(self, type_id: int) -> str:
        return self.node_types[type_id].name

    def edge_name(self, type_id: int) -> str:
        return self.edge_types[type_id].name

    def inverse(self, edge_type: int) -> int:
        return self.edge_types[edge_type].inverse

    def meta_relation(self, edge_type: int) -> MetaRelation:
        et = self.edge_types[edge_type]
        return MetaRelation(et.src, edge_type, et.tgt)

    def meta_relations(self) -> list[MetaRelation]:
        return [self.meta_relation(i) for i in range(len(self.edge_types))]

    def relations_into(self, tgt_type: int) -> list[MetaRelation]:
        return [r for r in self.meta_relations() if r.tgt_type == tgt_type]

    def relation_name(self, rel: MetaRelation) -> str:
        return f"{self.node_name(rel.src_type)}/{self.edge_name(rel.edge_type)}/{self.node_name(rel.tgt_type)}"

    @property
    def has_self_loops(self) -> bool:
        return any(e.is_self_loop for e in self.edge_types)

    def self_loop_type(self, node_type: int) -> int | None:
        for i, e in enumerate(self.edge_types):
            if e.is_self_loop and e.src == node_type:
                return i
        return None

    # --- construction ---

    @classmethod
    def build(
        cls,
        node_types: list[NodeType],
        edge_specs: list[dict],
        metapaths: list[MetaPath] | None = None,
        self_loops: bool = False,
    ) -> "Schema":
        """Resolve declared edge types, add missing reverse types ("~rev") and optional self-loops.

        ``edge_specs`` items: ``name``, ``src``, ``tgt`` (node type names), optional
        ``symmetric`` and ``inverse`` (name of a declared reverse type).
        """
        node_ids = {t.name: i for i, t in enumerate(node_types)}

        def type_id(name: str, where: str) -> int:
            if name not in node_ids:
                raise UnknownType(f"edge type '{where}' references undeclared node type '{name}'")
            return node_ids[name]

        names = [spec["name"] for spec in edge_specs]
        declared: list[dict] = []
        for spec in edge_specs:
            src = type_id(spec["src"], spec["name"])
            tgt = type_id(spec["tgt"], spec["name"])
            symmetric = bool(spec.get("symmetric", False))
            if symmetric and src != tgt:
                raise ConfigError(f"symmetric edge type '{spec['name']}' must connect one node type")
            inverse = spec.get("inverse")
            if inverse is not None and inverse not in names:
                raise ConfigError(f"edge type '{spec['name']}' names undeclared inverse '{inverse}'")
            declared.append({"name": spec["name"], "src": src, "tgt": tgt,
                             "symmetric": symmetric, "inverse": inverse})

        for mp in metapaths or []:
            declared.append(cls._metapath_spec(mp, declared, node_types))

        pairs: dict[str, str] = {}
        for spec in declared:
            if spec["inverse"] is not None:
                other = spec["inverse"]
                if pairs.get(other, spec["name"]) != spec["name"]:
                    raise ConfigError(f"edge type '{other}' is declared as inverse of two types")
                pairs[spec["name"]] = other
                pairs[other] = spec["name"]

        result: list[EdgeType] = []
        index: dict[str, int] = {}
        for spec in declared:
            index[spec["name"]] = len(result)
            result.append(EdgeType(spec["name"], spec["src"], spec["tgt"], spec["symmetric"]))
        for spec in declared:
            if spec["symmetric"] or spec["name"] in pairs:
                continue
            rev = spec["name"] + REVERSE_SUFFIX
            if rev in index:
                raise ConfigError(f"edge type '{rev}' collides with a generated reverse type")
            index[rev] = len(result)
            result.append(EdgeType(rev, spec["tgt"], spec["src"], generated=True))
            pairs[spec["name"]] = rev
            pairs[rev] = spec["name"]
        if self_loops:
            for i, nt in enumerate(node_types):
                name = SELF_PREFIX + nt.name
                index[name] = len(result)
                result.append(EdgeType(name, i, i, symmetric=True, is_self_loop=True))

        resolved = []
        for i, et in enumerate(result):
            inv = i if et.symmetric else index[pairs[et.name]]
            if not et.symmetric:
                partner = result[inv]
                if (partner.src, partner.tgt) != (et.tgt, et.src):
                    raise ConfigError(f"edge types '{et.name}' and '{partner.name}' are not reverses of each other")
            resolved.append(replace(et, inverse=inv))
        return cls(tuple(node_types), tuple(resolved), tuple(metapaths or ()))

    @staticmethod
    def _metapath_spec(mp: MetaPath, declared: list[dict], node_types: list[NodeType]) -> dict:
        by_name = {d["name"]: d for d in declared}
        steps = []
        for name in mp.path:
            if name.endswith(REVERSE_SUFFIX) and name[: -len(REVERSE_SUFFIX)] in by_name:
                fwd = by_name[name[: -len(REVERSE_SUFFIX)]]
                steps.append((fwd["tgt"], fwd["src"]))
            elif name in by_name:
                steps.append((by_name[name]["src"], by_name[name]["tgt"]))
            else:
                raise UnknownType(f"meta path '{mp.name}' uses undeclared edge type '{name}'")
        for (_, mid), (nxt, _) in zip(steps, steps[1:]):
            if mid != nxt:
                raise ConfigError(f"meta path '{mp.name}' does not chain: {node_types[mid].name} != {node_types[nxt].name}")
        src, tgt = steps[0][0], steps[-1][1]
        if mp.symmetric and src != tgt:
            raise ConfigError(f"symmetric meta path '{mp.name}' must start and end on one node type")
        return {"name": mp.name, "src": src, "tgt": tgt, "symmetric": mp.symmetric, "inverse": None}

    def without_self_loops(self) -> "Schema":
        if not self.has_self_loops:
            return self
        return Schema.from_dict(self.to_dict(), self_loops=False)

    def with_self_loops(self) -> "Schema":
        if self.has_self_loops:
            return self
        return Schema.from_dict(self.to_dict(), self_loops=True)

    # --- (de)serialisation ---

    def to_dict(self) -> dict:
        """The declared schema (generated reverse and self-loop types are implied, not listed)."""
        metapath_names = {mp.name for mp in self.metapaths}
        edges = []
        for et in self.edge_types:
            if et.generated or et.is_self_loop or et.name in metapath_names:
                continue
            entry = {"name": et.name, "src": self.node_name(et.src), "tgt": self.node_name(et.tgt),
                     "symmetric": et.symmetric}
            if not et.symmetric and not self.edge_types[et.inverse].generated:
                entry["inverse"] = self.edge_name(et.inverse)
            edges.append(entry)
        return {
            "node_types": [{"name": t.name, "feature_dim": t.feature_dim, "is_event": t.is_event}
                           for t in self.node_types],
            "edge_types": edges,
            "metapaths": [{"name": mp.name, "path": list(mp.path), "symmetric": mp.symmetric}
                          for mp in self.metapaths],
        }

    @classmethod
    def from_dict(cls, data: dict, self_loops: bool = False) -> "Schema":
        try:
            node_types = [NodeType(str(n["name"]), int(n["feature_dim"]), bool(n.get("is_event", False)))
                          for n in data["node_types"]]
            metapaths = [MetaPath(str(m["name"]), tuple(m["path"]), bool(m.get("symmetric", False)))
                         for m in data.get("metapaths", [])]
            edge_specs = list(data["edge_types"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed schema: {exc}") from exc
        return cls.build(node_types, edge_specs, metapaths, self_loops=self_loops)

    @classmethod
    def from_json(cls, path: str | Path, self_loops: bool = False) -> "Schema":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"schema file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"schema {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data, self_loops=self_loops)

    def schema_hash(self) -> str:
        """Hash of the declared schema; self-loop use does not change it."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
