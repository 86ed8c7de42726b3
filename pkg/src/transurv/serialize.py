"""JSON documents for forests, structure distributions and networks.

Every document carries ``format_version`` and ``type`` fields. Floats are
written with Python's shortest round-trip representation, so loading a
document reproduces predictions bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .core import StepFunction
from .forest import Forest, GrowthConfig, Internal, SurvivalTree, Terminal
from .nn import DiscreteTimeGrid, Standardizer, SurvivalNetwork
from .tsf import DepthwiseDistribution, StructureDistribution, StructureSignature

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _step_to(f: StepFunction) -> dict:
    return {"knots": _floats(f.knots), "values": _floats(f.values), "initial": f.initial_value}


def _step_from(d: dict) -> StepFunction:
    return StepFunction(d["knots"], d["values"], d["initial"])


def _signature_to(sig):
    return None if sig is None else {"k": sig.k, "nodes": [list(n) for n in sig.nodes]}


def _signature_from(d):
    return None if d is None else StructureSignature(d["k"], tuple(tuple(n) for n in d["nodes"]))


def _tree_to(tree: SurvivalTree) -> dict:
    # pre-order: internal -> [feature, value], terminal -> [n_samples, knots, values]
    flat = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if isinstance(node, Internal):
            flat.append([node.feature_index, float(node.split_value)])
            stack.append(node.right)
            stack.append(node.left)
        else:
            f = node.cum_hazard
            flat.append([node.n_samples, _floats(f.knots), _floats(f.values)])
    return {"nodes": flat, "truncated": list(tree.truncated),
            "prototype": _signature_to(tree.prototype)}


def _tree_from(d: dict) -> SurvivalTree:
    items = iter(d["nodes"])

    def build():
        item = next(items)
        if len(item) == 2:
            left = build()
            return Internal(int(item[0]), float(item[1]), left, build())
        return Terminal(StepFunction(item[1], item[2], 0.0), int(item[0]))
    root = build()
    return SurvivalTree(root, tuple(d["truncated"]), _signature_from(d["prototype"]))


def forest_to_dict(forest: Forest) -> dict:
    return {"format_version": FORMAT_VERSION, "type": "forest",
            "config": asdict(forest.config), "time_grid": _floats(forest.time_grid),
            "n_features": forest.n_features, "trees": [_tree_to(t) for t in forest.trees]}


def forest_from_dict(d: dict) -> Forest:
    _check(d, "forest")
    return Forest(tuple(_tree_from(t) for t in d["trees"]), GrowthConfig(**d["config"]),
                  np.array(d["time_grid"], dtype=float), int(d["n_features"]))


def distribution_to_dict(dist) -> dict:
    if isinstance(dist, StructureDistribution):
        entries = [[_signature_to(s), dist.entries[s]] for s in dist.support()]
        return {"format_version": FORMAT_VERSION, "type": "structure_distribution",
                "k": dist.k, "source_n_trees": dist.source_n_trees, "entries": entries}
    if isinstance(dist, DepthwiseDistribution):
        levels = [[[f, p] for f, p in sorted(level.items())] for level in dist.levels]
        return {"format_version": FORMAT_VERSION, "type": "depthwise_distribution",
                "levels": levels}
    raise TypeError(f"cannot serialize {type(dist).__name__}")


def distribution_from_dict(d: dict):
    if d.get("type") == "depthwise_distribution":
        _check(d, "depthwise_distribution")
        return DepthwiseDistribution(tuple({int(f): p for f, p in level} for level in d["levels"]))
    _check(d, "structure_distribution")
    entries = {_signature_from(s): p for s, p in d["entries"]}
    return StructureDistribution(d["k"], entries, int(d["source_n_trees"]))


def network_to_dict(net: SurvivalNetwork) -> dict:
    return {
        "format_version": FORMAT_VERSION, "type": "network", "kind": net.kind,
        "activation": net.activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "scaler": None if net.scaler is None else {"mean": _floats(net.scaler.mean),
                                                   "scale": _floats(net.scaler.scale)},
        "grid": None if net.grid is None else _floats(net.grid.cuts),
        "baseline": None if net.baseline is None else _step_to(net.baseline),
    }


def network_from_dict(d: dict) -> SurvivalNetwork:
    _check(d, "network")
    scaler = d["scaler"]
    return SurvivalNetwork(
        [np.array(w, dtype=float).reshape(len(w), -1) for w in d["weights"]],
        [np.array(b, dtype=float) for b in d["biases"]],
        d["kind"], d["activation"],
        None if scaler is None else Standardizer(np.array(scaler["mean"]), np.array(scaler["scale"])),
        None if d["grid"] is None else DiscreteTimeGrid(d["grid"]),
        None if d["baseline"] is None else _step_from(d["baseline"]),
    )


def _check(d: dict, kind: str) -> None:
    if d.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {d.get('format_version')!r}")
    if d.get("type") != kind:
        raise FormatError(f"expected a {kind} document, found {d.get('type')!r}")


_WRITERS = {Forest: forest_to_dict, StructureDistribution: distribution_to_dict,
            DepthwiseDistribution: distribution_to_dict, SurvivalNetwork: network_to_dict}
_READERS = {"forest": forest_from_dict, "structure_distribution": distribution_from_dict,
            "depthwise_distribution": distribution_from_dict, "network": network_from_dict}


def save(obj, path) -> None:
    try:
        writer = _WRITERS[type(obj)]
    except KeyError:
        raise TypeError(f"cannot serialize {type(obj).__name__}") from None
    Path(path).write_text(json.dumps(writer(obj)))


def load(path):
    d = json.loads(Path(path).read_text())
    if d.get("type") not in _READERS:
        raise FormatError(f"unknown document type {d.get('type')!r}")
    return _READERS[d["type"]](d)
