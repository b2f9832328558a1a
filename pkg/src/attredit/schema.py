"""Attribute schema: named binary attributes partitioned into one-hot groups.

A schema lists ``n`` attribute value names (e.g. ``red``, ``long``) and
partitions the index range ``[0, n)`` into mutually exclusive groups
(e.g. ``color``, ``sleeve``). A valid attribute vector has exactly one
active value per group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class SchemaError(ValueError):
    """A schema document or attribute vector violates the schema rules."""


@dataclass(frozen=True)
class AttributeGroup:
    name: str
    indices: tuple[int, ...]


@dataclass(frozen=True)
class AttributeSchema:
    names: tuple[str, ...]
    groups: tuple[AttributeGroup, ...]

    def __post_init__(self):
        if len(self.names) < 1:
            raise SchemaError("schema must declare at least one attribute")
        if any(not name for name in self.names):
            raise SchemaError("attribute names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise SchemaError("attribute names must be unique")
        group_names = [g.name for g in self.groups]
        if len(set(group_names)) != len(group_names):
            raise SchemaError("group names must be unique")
        seen: set[int] = set()
        for group in self.groups:
            if not group.indices:
                raise SchemaError(f"group {group.name!r} is empty")
            for idx in group.indices:
                if not 0 <= idx < len(self.names):
                    raise SchemaError(
                        f"group {group.name!r} references index {idx} outside [0, {len(self.names)})"
                    )
                if idx in seen:
                    raise SchemaError(f"index {idx} appears in more than one group")
                seen.add(idx)
        if len(seen) != len(self.names):
            missing = sorted(set(range(len(self.names))) - seen)
            raise SchemaError(f"indices {missing} belong to no group")

    @property
    def n(self) -> int:
        return len(self.names)

    def group_by_name(self, name: str) -> AttributeGroup:
        for group in self.groups:
            if group.name == name:
                return group
        raise SchemaError(f"unknown group {name!r}")

    def group_of_index(self, index: int) -> AttributeGroup:
        for group in self.groups:
            if index in group.indices:
                return group
        raise SchemaError(f"index {index} belongs to no group")

    def value_index(self, group_name: str, value_name: str) -> int:
        group = self.group_by_name(group_name)
        for idx in group.indices:
            if self.names[idx] == value_name:
                return idx
        raise SchemaError(f"group {group_name!r} has no value {value_name!r}")

    def group_values(self, group_name: str) -> tuple[str, ...]:
        group = self.group_by_name(group_name)
        return tuple(self.names[i] for i in group.indices)

    @classmethod
    def from_group_values(cls, groups: dict[str, list[str]]) -> "AttributeSchema":
        """Build a schema whose groups occupy contiguous index runs."""
        names: list[str] = []
        built: list[AttributeGroup] = []
        for group_name, values in groups.items():
            start = len(names)
            names.extend(values)
            built.append(AttributeGroup(group_name, tuple(range(start, len(names)))))
        return cls(tuple(names), tuple(built))

    def to_json_dict(self) -> dict:
        groups = []
        for group in self.groups:
            run = list(group.indices)
            contiguous = run == list(range(run[0], run[0] + len(run)))
            if contiguous:
                groups.append({"name": group.name, "values": [self.names[i] for i in run]})
            else:
                groups.append({"name": group.name, "indices": run})
        if all("values" in g for g in groups):
            return {"groups": groups}
        return {"names": list(self.names), "groups": groups}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AttributeSchema":
        if not isinstance(doc, dict) or "groups" not in doc:
            raise SchemaError("schema document must be an object with a 'groups' list")
        raw_groups = doc["groups"]
        if not isinstance(raw_groups, list) or not raw_groups:
            raise SchemaError("'groups' must be a non-empty list")
        if all(isinstance(g, dict) and "values" in g for g in raw_groups):
            return cls.from_group_values(
                {g["name"]: list(g["values"]) for g in raw_groups}
            )
        names = doc.get("names")
        if names is None:
            raise SchemaError("schema with index groups must list 'names'")
        built = tuple(
            AttributeGroup(g["name"], tuple(int(i) for i in g["indices"]))
            for g in raw_groups
        )
        return cls(tuple(names), built)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AttributeSchema":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from exc
        return cls.from_json_dict(doc)


@dataclass(frozen=True)
class AttributeVector:
    """Binary attribute values, one-hot within every schema group."""

    values: tuple[int, ...]

    def validate(self, schema: AttributeSchema) -> "AttributeVector":
        if len(self.values) != schema.n:
            raise SchemaError(
                f"attribute vector has {len(self.values)} entries, schema expects {schema.n}"
            )
        for v in self.values:
            if v not in (0, 1):
                raise SchemaError(f"attribute values must be 0 or 1, got {v!r}")
        for group in schema.groups:
            active = sum(self.values[i] for i in group.indices)
            if active != 1:
                raise SchemaError(
                    f"group {group.name!r} must have exactly one active value, found {active}"
                )
        return self

    @classmethod
    def from_group_choices(cls, schema: AttributeSchema, choices: dict[str, str]) -> "AttributeVector":
        values = [0] * schema.n
        for group in schema.groups:
            if group.name not in choices:
                raise SchemaError(f"missing choice for group {group.name!r}")
            values[schema.value_index(group.name, choices[group.name])] = 1
        return cls(tuple(values)).validate(schema)

    def with_edit(self, schema: AttributeSchema, group_name: str, value_name: str) -> "AttributeVector":
        """Move the group's one-hot to the named value; other groups untouched."""
        target = schema.value_index(group_name, value_name)
        group = schema.group_by_name(group_name)
        values = list(self.values)
        for idx in group.indices:
            values[idx] = 1 if idx == target else 0
        return AttributeVector(tuple(values))

    def group_value(self, schema: AttributeSchema, group_name: str) -> str:
        group = schema.group_by_name(group_name)
        for idx in group.indices:
            if self.values[idx] == 1:
                return schema.names[idx]
        raise SchemaError(f"group {group_name!r} has no active value")
