"""Export manifest: what a fixture file contains and where it came from."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class Manifest:
    source: str
    tensors: dict[str, list[int]]  # name -> shape
    embeddings: dict[str, int] = field(default_factory=dict)  # label -> token count
    total_unet_params: int = 0
    selected_kv_params: int = 0

    @property
    def kv_fraction(self) -> float:
        if not self.total_unet_params:
            return 0.0
        return self.selected_kv_params / self.total_unet_params

    def to_json(self) -> str:
        return json.dumps(
            {
                "source": self.source,
                "tensors": self.tensors,
                "embeddings": self.embeddings,
                "total_unet_params": self.total_unet_params,
                "selected_kv_params": self.selected_kv_params,
                "kv_fraction": self.kv_fraction,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        data = json.loads(text)
        return cls(
            source=data["source"],
            tensors={k: list(v) for k, v in data["tensors"].items()},
            embeddings=dict(data.get("embeddings", {})),
            total_unet_params=int(data.get("total_unet_params", 0)),
            selected_kv_params=int(data.get("selected_kv_params", 0)),
        )

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "Manifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def manifest_path_for(output_path) -> Path:
    return Path(str(output_path) + ".manifest.json")
