"""Newline-delimited configuration records.

One configuration per line; points are fixed-precision decimals with 9
significant digits, coordinates comma-joined within a point and points
space-separated.  Dynamics snapshots carry an optional leading `@time`
token.  The header records the model hash and seed so a file identifies the
run that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import TorusDomain
from .model import Configuration

_MAGIC = "# torusgas-configs v1"


@dataclass
class RecordMeta:
    d: int
    L: float
    model_hash: str
    seed: str


def _format_point(p: np.ndarray) -> str:
    return ",".join(f"{c:.9g}" for c in p)


def _format_line(points: np.ndarray, time: Optional[float]) -> str:
    body = " ".join(_format_point(p) for p in points)
    if time is None:
        return body
    return f"@{time:.9g} {body}".rstrip()


def write_records(path, configs: Sequence[Configuration], model_hash: str,
                  seed, times: Optional[Sequence[float]] = None) -> None:
    if times is not None and len(times) != len(configs):
        raise ValueError("one timestamp per configuration")
    first = configs[0] if configs else None
    d = first.dom.d if first else 0
    L = first.dom.L if first else 0.0
    with open(path, "w") as fh:
        fh.write(f"{_MAGIC} d={d} L={L:.9g} model={model_hash} seed={seed}\n")
        for i, cfg in enumerate(configs):
            fh.write(_format_line(cfg.points,
                                  None if times is None else times[i]) + "\n")


def read_records(path) -> tuple[RecordMeta, list[tuple[Optional[float], Configuration]]]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(_MAGIC):
            raise ValueError(f"not a torusgas record file: {path}")
        fields = dict(tok.split("=", 1) for tok in header.split()[3:])
        meta = RecordMeta(int(fields["d"]), float(fields["L"]),
                          fields["model"], fields["seed"])
        dom = TorusDomain(meta.d, meta.L)
        out = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            time = None
            if line.startswith("@"):
                head, _, rest = line.partition(" ")
                time = float(head[1:])
                line = rest
            if line:
                pts = np.array([[float(c) for c in tok.split(",")]
                                for tok in line.split()])
            else:
                pts = np.empty((0, meta.d))
            out.append((time, Configuration(pts, dom)))
    return meta, out
