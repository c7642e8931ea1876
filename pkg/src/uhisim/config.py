"""Engine configuration: data directories, defaults, service settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import CatalogConfig
from .render import ColorMapSpec


@dataclass
class EngineConfig:
    data_dir: str = "data"
    store_dir: str = "store"
    port: int = 8765
    workers: int = 2
    checkpoint: str = "model"
    patch_size: int = 64
    colormap: ColorMapSpec = field(default_factory=ColorMapSpec)
    catalog: CatalogConfig = field(default_factory=CatalogConfig)

    @classmethod
    def from_json(cls, doc: dict | str | Path) -> "EngineConfig":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        kwargs = {}
        for key in ("data_dir", "store_dir", "port", "workers",
                    "checkpoint", "patch_size"):
            if key in doc:
                kwargs[key] = doc[key]
        if "colormap" in doc:
            kwargs["colormap"] = ColorMapSpec.from_json(doc["colormap"])
        if "catalog" in doc:
            kwargs["catalog"] = CatalogConfig.from_json(doc["catalog"])
        return cls(**kwargs)

    def to_json(self) -> dict:
        return {
            "data_dir": self.data_dir,
            "store_dir": self.store_dir,
            "port": self.port,
            "workers": self.workers,
            "checkpoint": self.checkpoint,
            "patch_size": self.patch_size,
            "colormap": self.colormap.to_json(),
        }
