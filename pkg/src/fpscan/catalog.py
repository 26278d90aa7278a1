"""Feature-group catalog.

The catalog maps raw monitored property/function names onto the 40 named
feature groups used for signatures and scores. It ships as a versioned JSON
data file and can be replaced at runtime (``--catalog PATH`` on the CLI).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

CATALOG_VERSION = 1


class Rating(str, Enum):
    SENSITIVE = "sensitive"
    AGGRESSIVE = "aggressive"


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    rating: Rating
    members: tuple[str, ...]


class CatalogError(ValueError):
    pass


def _normalize(raw_name: str) -> str:
    name = raw_name.strip()
    if name.endswith("()"):
        name = name[:-2]
    return name


class FeatureCatalog:
    """Lookup table from raw names to feature groups."""

    def __init__(self, groups: list[FeatureGroup], version: int = CATALOG_VERSION):
        self.version = version
        self.groups: tuple[FeatureGroup, ...] = tuple(groups)
        self._by_name: dict[str, FeatureGroup] = {}
        self._by_member: dict[str, str] = {}
        for group in self.groups:
            if group.name in self._by_name:
                raise CatalogError(f"duplicate feature group {group.name!r}")
            self._by_name[group.name] = group
            for member in group.members:
                key = _normalize(member)
                owner = self._by_member.get(key)
                if owner is not None and owner != group.name:
                    raise CatalogError(
                        f"raw name {member!r} listed under {owner!r} and {group.name!r}"
                    )
                self._by_member[key] = group.name

    def __len__(self) -> int:
        return len(self.groups)

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> FeatureGroup:
        return self._by_name[name]

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.groups]

    @property
    def aggressive(self) -> list[str]:
        return [g.name for g in self.groups if g.rating is Rating.AGGRESSIVE]

    @property
    def members(self) -> list[str]:
        return sorted(self._by_member)

    def group_of(self, raw_name: str) -> str | None:
        """Return the group name for ``raw_name``, or None when unmapped.

        Matching ignores a trailing ``()`` so ``getImageData`` and
        ``getImageData()`` resolve identically.
        """
        return self._by_member.get(_normalize(raw_name))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "groups": [
                {"name": g.name, "rating": g.rating.value, "members": list(g.members)}
                for g in self.groups
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureCatalog":
        try:
            version = int(payload.get("version", CATALOG_VERSION))
            groups = [
                FeatureGroup(
                    name=str(row["name"]),
                    rating=Rating(row["rating"]),
                    members=tuple(str(m) for m in row.get("members", [])),
                )
                for row in payload["groups"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogError(f"malformed catalog: {exc}") from exc
        return cls(groups, version=version)

    @classmethod
    def from_file(cls, path: str | Path) -> "FeatureCatalog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@lru_cache(maxsize=1)
def default_catalog() -> FeatureCatalog:
    text = resources.files("fpscan.data").joinpath("feature_groups.json").read_text("utf-8")
    return FeatureCatalog.from_dict(json.loads(text))


def load_catalog(path: str | Path | None = None) -> FeatureCatalog:
    return default_catalog() if path is None else FeatureCatalog.from_file(path)
