"""Scenario files: JSON in, JSON out.

Indices in files are 1-based. Unknown fields are rejected with their
location so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .dde_sim import SimOptions
from .errors import HierconError
from .hierarchy import GroupSpec, HierarchySpec, LayerSpec
from .powershare import GeneratorFleet

TOP_FIELDS = {"name", "description", "physical_weights", "layers", "hop_delays",
              "generators", "demand", "initial_state", "sim", "output"}
LAYER_FIELDS = {"groups", "collecting"}
GROUP_FIELDS = {"size", "edges", "edge_weights"}
GENERATOR_FIELDS = {"p_max", "p_init"}
SIM_FIELDS = {"step", "t_end", "tol", "stride", "window", "align_activation"}
OUTPUT_FIELDS = {"csv", "report"}

BUILTIN = ("fig1", "fig1_case1", "fig1_case2", "fig1_case3", "fig1_case4")


class ScenarioError(HierconError, ValueError):
    """The document is well-formed JSON but not a valid scenario."""


class ScenarioReadError(HierconError, OSError):
    """The file could not be read or is not JSON."""


@dataclass
class Scenario:
    spec: HierarchySpec
    fleet: Optional[GeneratorFleet] = None
    initial_state: Optional[tuple] = None
    sim: Optional[SimOptions] = None
    output: dict = field(default_factory=dict)
    name: Optional[str] = None
    description: Optional[str] = None

    def x0(self):
        if self.initial_state is not None:
            return np.asarray(self.initial_state, dtype=float)
        if self.fleet is not None:
            return np.asarray(self.fleet.p_init, dtype=float) / np.asarray(self.fleet.p_max, dtype=float)
        return None


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {', '.join(unknown)}")


def _numbers(value, where) -> tuple:
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ScenarioError(f"{where}: expected an array of numbers")
    return tuple(float(v) for v in value)


def _group(obj, where) -> GroupSpec:
    _check_keys(obj, GROUP_FIELDS, where)
    size = obj.get("size")
    if not isinstance(size, int) or isinstance(size, bool):
        raise ScenarioError(f"{where}.size: expected an integer")
    edges = []
    for k, e in enumerate(obj.get("edges", [])):
        if (not isinstance(e, list) or len(e) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in e)):
            raise ScenarioError(f"{where}.edges[{k}]: expected a pair of integers")
        q, r = e
        edges.append((min(q, r) - 1, max(q, r) - 1))
    weights = _numbers(obj["edge_weights"], f"{where}.edge_weights") if "edge_weights" in obj else ()
    return GroupSpec(size, tuple(edges), weights)


def from_dict(doc) -> Scenario:
    _check_keys(doc, TOP_FIELDS, "scenario")
    if "layers" not in doc or not isinstance(doc["layers"], list):
        raise ScenarioError("scenario.layers: required array")
    layers = []
    for li, layer in enumerate(doc["layers"]):
        where = f"layers[{li}]"
        _check_keys(layer, LAYER_FIELDS, where)
        groups = layer.get("groups")
        if not isinstance(groups, list):
            raise ScenarioError(f"{where}.groups: required array")
        gs = tuple(_group(g, f"{where}.groups[{gi}]") for gi, g in enumerate(groups))
        collecting = None
        if "collecting" in layer:
            if not isinstance(layer["collecting"], list):
                raise ScenarioError(f"{where}.collecting: expected an array of arrays")
            collecting = tuple(_numbers(r, f"{where}.collecting[{k}]") for k, r in enumerate(layer["collecting"]))
        layers.append(LayerSpec(gs, collecting))

    fleet = None
    if "generators" in doc:
        gens = doc["generators"]
        if not isinstance(gens, list):
            raise ScenarioError("scenario.generators: expected an array")
        p_max, p_init = [], []
        for k, g in enumerate(gens):
            _check_keys(g, GENERATOR_FIELDS, f"generators[{k}]")
            try:
                p_max.append(float(g["p_max"]))
                p_init.append(float(g["p_init"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ScenarioError(f"generators[{k}]: p_max and p_init must be numbers") from exc
        demand = doc.get("demand")
        if demand is not None and (not isinstance(demand, (int, float)) or isinstance(demand, bool)):
            raise ScenarioError("scenario.demand: expected a number")
        fleet = GeneratorFleet(tuple(p_max), tuple(p_init), None if demand is None else float(demand))
    elif "demand" in doc:
        raise ScenarioError("scenario.demand: only meaningful together with generators")

    if "physical_weights" in doc:
        weights = _numbers(doc["physical_weights"], "scenario.physical_weights")
        if fleet is not None and weights != fleet.p_max:
            raise ScenarioError("scenario.physical_weights: must equal the generators' p_max")
    elif fleet is not None:
        weights = fleet.p_max
    else:
        raise ScenarioError("scenario.physical_weights: required unless generators are given")

    delays = _numbers(doc.get("hop_delays", []), "scenario.hop_delays")
    initial = _numbers(doc["initial_state"], "scenario.initial_state") if "initial_state" in doc else None

    sim = None
    if "sim" in doc:
        _check_keys(doc["sim"], SIM_FIELDS, "sim")
        try:
            sim = SimOptions(**doc["sim"])
        except TypeError as exc:
            raise ScenarioError(f"sim: {exc}") from exc
    output = {}
    if "output" in doc:
        _check_keys(doc["output"], OUTPUT_FIELDS, "output")
        output = dict(doc["output"])

    return Scenario(HierarchySpec(tuple(layers), weights, delays), fleet, initial, sim, output,
                    doc.get("name"), doc.get("description"))


def to_dict(sc: Scenario) -> dict:
    """Serialize a scenario; ``from_dict(to_dict(s))`` reproduces ``s``."""
    doc = {}
    if sc.name is not None:
        doc["name"] = sc.name
    if sc.description is not None:
        doc["description"] = sc.description
    doc["physical_weights"] = list(sc.spec.physical_weights)
    layers = []
    for layer in sc.spec.layers:
        groups = []
        for g in layer.groups:
            gd = {"size": g.size, "edges": [[q + 1, r + 1] for q, r in g.edges]}
            if g.weights:
                gd["edge_weights"] = list(g.weights)
            groups.append(gd)
        ld = {"groups": groups}
        if layer.collecting is not None:
            ld["collecting"] = [list(r) for r in layer.collecting]
        layers.append(ld)
    doc["layers"] = layers
    doc["hop_delays"] = list(sc.spec.hop_delays)
    if sc.fleet is not None:
        doc["generators"] = [{"p_max": a, "p_init": p} for a, p in zip(sc.fleet.p_max, sc.fleet.p_init)]
        if sc.fleet.demand is not None:
            doc["demand"] = sc.fleet.demand
    if sc.initial_state is not None:
        doc["initial_state"] = list(sc.initial_state)
    if sc.sim is not None:
        defaults = SimOptions()
        doc["sim"] = {f.name: getattr(sc.sim, f.name) for f in fields(SimOptions)
                      if getattr(sc.sim, f.name) != getattr(defaults, f.name)}
    if sc.output:
        doc["output"] = dict(sc.output)
    return doc


def builtin_path(name: str):
    return resources.files("hiercon").joinpath("scenarios", f"{name}.json")


def load(path) -> Scenario:
    """Read a scenario file. Bare built-in names (``fig1_case2``) also work."""
    p = Path(path)
    if not p.exists() and p.stem in BUILTIN and p.parent == Path("."):
        text = builtin_path(p.stem).read_text()
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ScenarioReadError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioReadError(f"{path}: malformed JSON: {exc}") from exc
    return from_dict(doc)


def dumps(sc: Scenario) -> str:
    return json.dumps(to_dict(sc), indent=2)


def with_sim(sc: Scenario, **overrides) -> Scenario:
    base = sc.sim or SimOptions()
    kept = {k: v for k, v in overrides.items() if v is not None}
    return replace(sc, sim=replace(base, **kept))
