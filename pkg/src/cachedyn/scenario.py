"""Scenario files: parsing, schema validation and expansion into runs.

A scenario is a TOML document describing a traffic mix, a cache topology,
the policy variants to compare and a sweep of leaf capacities.  The JSON
schema shipped in ``cachedyn/scenarios/schema.json`` is the reference for
the format; semantic checks that the schema cannot express (class labels
referenced by filters and compositions) are done here.  Errors carry the
dotted path of the offending field.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import jsonschema
import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .che import LRU, QLRU, RANDOM, TwoLRU
from .errors import DomainError, ScenarioError
from .network import LCE, LCP, binary_tree, single_cache
from .sim.workload import IndependentOnOff, SnmRectangular, SynchronizedOnOff
from .traffic import ContentClass, Degenerate, Pareto, TrafficMix, Zipf, pareto_with_mean

__all__ = [
    "Variant",
    "Scenario",
    "builtin_names",
    "load_scenario",
    "parse_scenario",
    "schema",
]

_PACKAGE = "cachedyn.scenarios"
_MODES = {
    "synchronized": SynchronizedOnOff,
    "independent": IndependentOnOff,
    "snm": SnmRectangular,
}


def schema():
    """The scenario JSON schema as a dict."""
    return json.loads(resources.files(_PACKAGE).joinpath("schema.json").read_text())


def builtin_names():
    """Names of the scenarios shipped with the package."""
    return sorted(
        p.name[:-5] for p in resources.files(_PACKAGE).iterdir() if p.name.endswith(".toml")
    )


def _path(parts):
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass(frozen=True)
class Variant:
    """One policy configuration compared along the sweep."""

    policy: object
    replication: object
    filter: Tuple[str, ...] = ()

    @property
    def policy_label(self):
        return self.policy.name

    @property
    def replication_label(self):
        return self.replication.name

    @property
    def filter_label(self):
        return "+".join(self.filter)


@dataclass
class Scenario:
    """A validated scenario with the scale factor already applied.

    ``mixes`` maps a composition name to its traffic mix; scenarios without
    compositions have a single entry under the empty name.
    """

    id: str
    scale: float
    engine: str
    routing: str
    topology: dict
    mixes: Dict[str, TrafficMix]
    variants: List[Variant]
    capacities: List[int]
    n_nodes: int = 256
    simulation: Optional[dict] = None
    description: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def scenario_ids(self):
        return [self.id if not name else f"{self.id}/{name}" for name in self.mixes]

    def build_topology(self, capacity, variant: Variant):
        t = self.topology
        if t["kind"] == "single":
            return single_cache(capacity, variant.policy, variant.filter)
        return binary_tree(t.get("layers", 4), capacity, variant.policy,
                           t.get("sizing", "equal"), variant.filter)

    def sim_config(self, seed=None):
        from .sim.engine import SimConfig

        if self.simulation is None:
            raise ScenarioError("the scenario has no simulation section", "simulation")
        s = self.simulation
        return SimConfig(
            horizon=s["horizon"], warmup=s.get("warmup"),
            seed=int(s.get("seed", 0) if seed is None else seed),
            batches=s.get("batches", 30), mode=_MODES[s.get("mode", "synchronized")](),
            routing=self.routing,
        )


def _popularity(entry, catalogue, where):
    law = entry["law"]
    try:
        if law == "pareto":
            if "mean" in entry:
                return pareto_with_mean(entry["mean"], entry["beta"], entry.get("v_max"))
            return Pareto(entry["beta"], entry["v_min"], entry.get("v_max"))
        if law == "zipf":
            return Zipf(entry["alpha"], max(int(round(catalogue)), 1), entry["total_volume"])
        return Degenerate(entry["v"])
    except DomainError as err:
        raise ScenarioError(str(err), where) from err


def _variant(entry, labels, where):
    name = entry["policy"]
    q = entry.get("q")
    coupling = entry.get("coupling")
    if q is not None and name != "q-LRU":
        raise ScenarioError(f"'q' only applies to q-LRU, not {name}", f"{where}.q")
    if coupling is not None and name != "2-LRU":
        raise ScenarioError(f"'coupling' only applies to 2-LRU, not {name}", f"{where}.coupling")
    if name == "q-LRU":
        if q is None:
            raise ScenarioError("q-LRU needs 'q'", f"{where}.q")
        policy = QLRU(q)
    elif name == "2-LRU":
        policy = TwoLRU(coupling or "renewal")
    else:
        policy = {"LRU": LRU(), "RANDOM": RANDOM()}[name]
    rep = entry.get("replication", "LCE")
    if rep == "LCP":
        if "lcp_q" not in entry:
            raise ScenarioError("LCP needs 'lcp_q'", f"{where}.lcp_q")
        replication = LCP(entry["lcp_q"])
    elif "lcp_q" in entry:
        raise ScenarioError("'lcp_q' only applies to LCP", f"{where}.lcp_q")
    else:
        replication = LCE()
    filt = tuple(entry.get("filter", ()))
    for i, lab in enumerate(filt):
        if lab not in labels:
            raise ScenarioError(f"unknown class label {lab!r}", f"{where}.filter[{i}]")
    return Variant(policy, replication, filt)


def _capacities(sweep, scale):
    if "capacities" in sweep:
        base = np.asarray(sweep["capacities"], dtype=float)
    else:
        r = sweep["range"]
        if r["stop"] < r["start"]:
            raise ScenarioError("stop must not be below start", "sweep.range.stop")
        if r.get("spacing", "log") == "log":
            base = np.geomspace(r["start"], r["stop"], r["num"])
        else:
            base = np.linspace(r["start"], r["stop"], r["num"])
    # a positive capacity never rounds down to a pass-through cache
    caps = [int(round(c * scale)) for c in base]
    return [max(c, 1) if b > 0 else 0 for c, b in zip(caps, base)]


def parse_scenario(doc: dict, scale=None) -> Scenario:
    """Validate a parsed document and build a :class:`Scenario`.

    ``scale`` overrides the document's scale factor, which multiplies every
    class catalogue and every capacity.
    """
    validator = jsonschema.Draft202012Validator(schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise ScenarioError(err.message, _path(err.absolute_path) or "<root>")
    scale = float(doc.get("scale", 1.0) if scale is None else scale)
    if not scale > 0:
        raise ScenarioError("scale must be positive", "scale")
    labels = [c["label"] for c in doc["classes"]]
    if len(set(labels)) != len(labels):
        raise ScenarioError("class labels must be unique", "classes")
    topo = dict(doc["topology"])
    if topo["kind"] == "single":
        for key in ("layers", "sizing"):
            if key in topo:
                raise ScenarioError("only binary trees take this field", f"topology.{key}")
        leaves = 1
    else:
        leaves = 1 << (topo.get("layers", 4) - 1)
    if doc.get("ingress_count", leaves) != leaves:
        raise ScenarioError(f"the topology has {leaves} leaves", "ingress_count")
    compositions = doc.get("compositions", {"": {}})
    for name, comp in compositions.items():
        for lab in comp:
            if lab not in labels:
                raise ScenarioError(f"unknown class label {lab!r}", f"compositions.{name}.{lab}")
    mixes = {}
    for name, comp in compositions.items():
        classes = []
        for i, c in enumerate(doc["classes"]):
            cat = comp.get(c["label"], c["catalogue"]) * scale
            where = f"classes[{i}]"
            pop = _popularity(c["popularity"], cat, f"{where}.popularity")
            try:
                classes.append(ContentClass(c["label"], c["t_on"], c["t_off"], pop, cat,
                                            c.get("cacheable", True)))
            except DomainError as err:
                raise ScenarioError(str(err), where) from err
        try:
            mixes[name] = TrafficMix(classes, leaves)
        except DomainError as err:
            raise ScenarioError(str(err), f"compositions.{name}" if name else "classes") from err
    variants = [_variant(v, labels, f"variants[{i}]") for i, v in enumerate(doc["variants"])]
    sim = doc.get("simulation")
    if sim is not None and sim.get("warmup", 0) >= sim["horizon"]:
        raise ScenarioError("warmup must be shorter than the horizon", "simulation.warmup")
    engine = doc.get("engine", "analytic")
    if engine != "analytic" and sim is None:
        raise ScenarioError(f"engine {engine!r} needs a simulation section", "engine")
    return Scenario(
        id=doc["id"], scale=scale, engine=engine, routing=doc.get("routing", "per_leaf"),
        topology=topo, mixes=mixes, variants=variants,
        capacities=_capacities(doc["sweep"], scale),
        n_nodes=doc.get("analytic", {}).get("n_nodes", 256), simulation=sim,
        description=doc.get("description", ""), raw=doc,
    )


def load_scenario(source, scale=None) -> Scenario:
    """Load a scenario from a file path or a built-in name."""
    path = Path(source)
    if path.is_file():
        text_source = path
    elif str(source) in builtin_names():
        text_source = resources.files(_PACKAGE).joinpath(f"{source}.toml")
    else:
        raise ScenarioError(f"no scenario file or built-in named {source!r}")
    try:
        doc = tomllib.loads(text_source.read_text())
    except (OSError, UnicodeDecodeError) as err:
        raise ScenarioError(f"cannot read {source}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ScenarioError(f"invalid TOML in {source}: {err}") from err
    return parse_scenario(doc, scale)
