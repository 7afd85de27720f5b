"""Metric report records and their JSON / CSV serialization."""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

CSV_FIELDS = ["metric", "space", "value", "config_hash", "seed"]


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetricReport:
    metric: str
    value: float
    config: dict
    seed: int
    space: Optional[str] = None
    wall_time: float = 0.0
    images_seen: Optional[int] = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value != self.value or self.value in (float("inf"), float("-inf")):
            raise ValueError(f"{self.metric} produced a non-finite value")

    @property
    def config_hash(self):
        return config_hash(self.config)

    def to_dict(self):
        d = asdict(self)
        d["config_hash"] = self.config_hash
        return d

    def csv_row(self):
        return {"metric": self.metric, "space": self.space or "", "value": repr(float(self.value)),
                "config_hash": self.config_hash, "seed": self.seed}


def append_reports(reports, json_path, csv_path=None):
    json_path = Path(json_path)
    with json_path.open("a") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict(), default=str) + "\n")
    if csv_path is not None:
        csv_path = Path(csv_path)
        new = not csv_path.exists()
        with csv_path.open("a", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            if new:
                writer.writeheader()
            for r in reports:
                writer.writerow(r.csv_row())


def read_reports(json_path):
    path = Path(json_path)
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
