"""JSON round-tripping of PMBM densities.

The on-disk form is strict JSON (no NaN/Infinity literals): minus-infinite
log weights are written as the string "-inf". Floats survive unchanged
because Python's JSON writer emits shortest round-trip representations.

Top-level schema, version 1:

{
  "format": "pmbm-density", "version": 1,
  "undetected": [<component>, ...],
  "tracks": [{"track_id": [t, j], "leaves": [<leaf>, ...]}, ...],
  "hypotheses": [{"log_weight": <logf>, "leaf_index": [i, ...]}, ...]
}

component = {"weight": f, "birth_time": t, "end_time": t,
             "y": [f, ...], "diag": [[[f]]], "offdiag": [[[f]]]}
leaf      = {"log_weight": <logf>, "existence": f,
             "assoc_history": [[t, j], ...], "density": null | [<component>, ...]}
logf      = float | "-inf"
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .gaussinfo import InfoGaussian
from .mixtures import (
    BernoulliComponent,
    GlobalHypothesis,
    MixtureComponent,
    PMBMDensity,
    Track,
    TrajectoryMixture,
)

__all__ = [
    "density_to_dict",
    "density_from_dict",
    "save_density",
    "load_density",
]

FORMAT = "pmbm-density"
VERSION = 1


def _enc_log(x: float):
    return "-inf" if x == -math.inf else float(x)


def _dec_log(x) -> float:
    return -math.inf if x == "-inf" else float(x)


def _enc_component(c: MixtureComponent) -> dict:
    return {
        "weight": c.weight,
        "birth_time": c.birth_time,
        "end_time": c.end_time,
        "y": c.seq.y.tolist(),
        "diag": c.seq.diag.tolist(),
        "offdiag": c.seq.offdiag.tolist(),
    }


def _dec_component(d: dict) -> MixtureComponent:
    diag = np.asarray(d["diag"], dtype=float)
    n = diag.shape[1]
    offdiag = np.asarray(d["offdiag"], dtype=float).reshape(-1, n, n)
    seq = InfoGaussian(np.asarray(d["y"], dtype=float), diag, offdiag)
    return MixtureComponent(float(d["weight"]), int(d["birth_time"]), int(d["end_time"]), seq)


def _enc_mixture(m: TrajectoryMixture) -> list:
    return [_enc_component(c) for c in m.components]


def _dec_mixture(items: list) -> TrajectoryMixture:
    return TrajectoryMixture(tuple(_dec_component(d) for d in items))


def density_to_dict(d: PMBMDensity) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "undetected": _enc_mixture(d.undetected),
        "tracks": [
            {
                "track_id": list(t.track_id),
                "leaves": [
                    {
                        "log_weight": _enc_log(leaf.log_weight),
                        "existence": leaf.existence,
                        "assoc_history": sorted(list(p) for p in leaf.assoc_history),
                        "density": None if leaf.density is None else _enc_mixture(leaf.density),
                    }
                    for leaf in t.leaves
                ],
            }
            for t in d.tracks
        ],
        "hypotheses": [
            {"log_weight": _enc_log(h.log_weight), "leaf_index": list(h.leaf_index)}
            for h in d.hypotheses
        ],
    }


def density_from_dict(data: dict) -> PMBMDensity:
    if data.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    if data.get("version") != VERSION:
        raise ValueError(f"unsupported version {data.get('version')!r}")
    tracks = tuple(
        Track(
            tuple(t["track_id"]),
            tuple(
                BernoulliComponent(
                    _dec_log(leaf["log_weight"]),
                    float(leaf["existence"]),
                    None if leaf["density"] is None else _dec_mixture(leaf["density"]),
                    frozenset((int(a), int(b)) for a, b in leaf["assoc_history"]),
                )
                for leaf in t["leaves"]
            ),
        )
        for t in data["tracks"]
    )
    hyps = tuple(
        GlobalHypothesis(_dec_log(h["log_weight"]), tuple(int(i) for i in h["leaf_index"]))
        for h in data["hypotheses"]
    )
    return PMBMDensity(_dec_mixture(data["undetected"]), tracks, hyps)


def save_density(d: PMBMDensity, path) -> None:
    Path(path).write_text(json.dumps(density_to_dict(d), allow_nan=False))


def load_density(path) -> PMBMDensity:
    return density_from_dict(json.loads(Path(path).read_text()))
