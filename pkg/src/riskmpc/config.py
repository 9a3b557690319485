"""JSON run configuration: schema, invariant checks and object builders."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .cost import CostWeights
from .errors import ConfigurationError, RiskMPCError
from .model import Line, MicrogridSpec, Network, flow_matrix
from .mpc import CONSTANT_OFFSET, OCCASIONAL, ControllerConfig, NoiseModel, SyntheticWorld
from .ocp import SolverOptions
from .plant import PlantParams
from .uncertainty import ForecasterSpec, HelpSpec, SignalModel, WindCurve

_num = {"type": "number"}
_int = {"type": "integer"}
_vec = {"type": "array", "items": _num}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_signal = _obj({
    "ar": _vec, "ma": _vec, "seasonal_ar": _vec, "seasonal_ma": _vec,
    "d": _int, "seasonal_d": _int, "season": _int, "sigma": _num, "mean": _num,
    "curve": _obj({"coefficient": _num, "rated_power": _num}, ["coefficient", "rated_power"]),
}, ["sigma", "mean"])

_noise = _obj({
    "kind": {"enum": ["none", "constant", "occasional"]},
    "wind_mean": _num, "wind_sd": _num, "load_mean": _num, "load_sd": _num, "event_rate": _num,
}, ["kind"])

SCHEMA = _obj({
    "microgrid": _obj({
        "conventional": _obj({"p_min": _vec, "p_max": _vec, "chi": _vec}, ["p_min", "p_max", "chi"]),
        "storage": _obj({"p_min": _vec, "p_max": _vec, "x_max": _vec, "x_soft_min": _vec, "x_soft_max": _vec,
                         "chi": _vec, "x0": _vec}, ["p_min", "p_max", "x_max", "x_soft_min", "x_soft_max", "chi",
                                                    "x0"]),
        "renewable": _obj({"p_min": _vec, "p_max": _vec}, ["p_min", "p_max"]),
        "n_loads": _int,
        "sampling_time": _num,
        "network": _obj({
            "buses": _int,
            "lines": {"type": "array", "items": _obj({"from": _int, "to": _int, "b": _num, "g": _num,
                                                      "p_min": _num, "p_max": _num}, ["from", "to", "b"])},
            "unit_bus": {"type": "array", "items": _int},
            "load_bus": {"type": "array", "items": _int},
            "reference": _int,
            "voltages": _vec,
        }, ["buses", "lines", "unit_bus", "load_bus", "reference"]),
        "flow_matrix": _obj({"F": {"type": "array", "items": _vec}, "p_min": _vec, "p_max": _vec}, ["F"]),
        "weights": _obj({"c_t": _vec, "c_t_lin": _vec, "c_t_quad": _vec, "c_sw": _vec, "c_r": _vec, "c_s": _vec,
                         "discount": _num}, ["c_t", "c_t_lin", "c_t_quad", "c_sw", "c_r", "c_s", "discount"]),
    }, ["conventional", "storage", "renewable", "sampling_time", "weights"]),
    "forecaster": _obj({
        "wind": {"type": "array", "items": _signal},
        "load": {"type": "array", "items": _signal},
        "n_fan": _int,
        "load_amplitude": _num,
        "period": _int,
    }, ["wind", "load"]),
    "tree": _obj({
        "branching": {"type": "array", "items": _int},
        "help": _obj({"enabled": {"type": "boolean"}, "epsilon": _num, "low_quantile": _num,
                      "high_quantile": _num}, ["enabled"]),
    }, ["branching"]),
    "controller": _obj({
        "mode": {"enum": ["risk-averse", "certainty-equivalent", "worst-case", "risk-neutral"]},
        "alpha": _num,
        "alphas": _vec,
        "horizon": _int,
        "relax_stage": _int,
        "delta0": _vec,
        "solver": _obj({"rel_gap": _num, "abs_gap": _num, "node_limit": _int,
                        "time_limit": {"type": ["number", "null"]}}),
    }, ["horizon"]),
    "simulation": _obj({
        "steps": _int,
        "seed": _int,
        "plant": _obj({"eta_c": _vec, "eta_d": _vec, "self_discharge": _vec, "ac": {"type": "boolean"},
                       "violation_tol": _num}),
        "noise": _noise,
        "replicas": _int,
        "workers": _int,
    }, ["steps"]),
    "output": _obj({"directory": {"type": "string"}}),
}, ["microgrid", "forecaster", "tree", "controller", "simulation"])


def _invariants(doc: dict) -> list:
    """Named semantic checks; returns ``(name, message)`` pairs for failures."""
    out = []
    mg = doc["microgrid"]
    conv, sto, ren, wts = mg["conventional"], mg["storage"], mg["renewable"], mg["weights"]

    def fail(name, msg):
        out.append((name, msg))

    T, S, R = len(conv["p_min"]), len(sto["p_min"]), len(ren["p_min"])
    D = mg.get("n_loads", 1)
    lens = {"conventional": [len(conv[k]) for k in ("p_min", "p_max", "chi")] + [len(wts[k]) for k in
                                                                               ("c_t", "c_t_lin", "c_t_quad",
                                                                                "c_sw")],
            "storage": [len(sto[k]) for k in ("p_min", "p_max", "x_max", "x_soft_min", "x_soft_max", "chi", "x0")]
            + [len(wts["c_s"])],
            "renewable": [len(ren[k]) for k in ("p_min", "p_max")] + [len(wts["c_r"])]}
    for group, ls in lens.items():
        if len(set(ls)) != 1:
            fail("unit_counts_consistent", f"{group} vectors have differing lengths {ls}")
    if out:
        return out
    if S < 1:
        fail("storage_present", "at least one storage unit is required")
    if D < 1:
        fail("loads_present", "at least one load is required")
    if any(c <= 0 for c in conv["chi"] + sto["chi"]):
        fail("power_sharing_gain_positive", "every power-sharing gain chi must be > 0")
    if mg["sampling_time"] <= 0:
        fail("sampling_time_positive", "sampling time must be > 0")
    if any(a > 0 for a in sto["p_min"]) or any(b < 0 for b in sto["p_max"]):
        fail("storage_limits_bracket_zero", "storage power limits must satisfy p_min <= 0 <= p_max")
    if any(a < 0 for a in conv["p_min"] + ren["p_min"]):
        fail("unit_lower_limits_nonnegative", "conventional and renewable lower limits must be >= 0")
    if any(a > b for a, b in zip(conv["p_min"] + ren["p_min"], conv["p_max"] + ren["p_max"])):
        fail("unit_limits_ordered", "a lower unit limit exceeds its upper limit")
    for lo, hi, cap in zip(sto["x_soft_min"], sto["x_soft_max"], sto["x_max"]):
        if not 0.0 <= lo <= hi <= cap:
            fail("soft_band_within_capacity", f"soft band [{lo}, {hi}] must lie in [0, {cap}]")
    for key in ("c_t", "c_t_lin", "c_t_quad", "c_sw", "c_r", "c_s"):
        if any(v <= 0 for v in wts[key]):
            fail("cost_weights_positive", f"weight {key} must be > 0")
    if not 0.0 < wts["discount"] < 1.0:
        fail("discount_in_unit_interval", "discount must lie in (0, 1)")
    fc = doc["forecaster"]
    if len(fc["wind"]) != R:
        fail("forecaster_matches_renewables", f"{len(fc['wind'])} wind signals for {R} renewable units")
    if len(fc["load"]) != D:
        fail("forecaster_matches_loads", f"{len(fc['load'])} load signals for {D} loads")
    if any("curve" not in s for s in fc["wind"]):
        fail("wind_curve_present", "every wind signal needs a power curve")
    if any(s["sigma"] < 0 for s in fc["wind"] + fc["load"]):
        fail("signal_sigma_nonnegative", "innovation standard deviations must be >= 0")
    ctl = doc["controller"]
    N = ctl["horizon"]
    if N < 1:
        fail("horizon_positive", "horizon must be >= 1")
    if len(doc["tree"]["branching"]) != N:
        fail("branching_matches_horizon", f"{len(doc['tree']['branching'])} branching limits for horizon {N}")
    if any(b < 1 for b in doc["tree"]["branching"]):
        fail("branching_positive", "branching limits must be >= 1")
    for a in [ctl.get("alpha", 0.5)] + list(ctl.get("alphas", [])):
        if not 0.0 <= a <= 1.0:
            fail("alpha_in_unit_interval", f"alpha {a} outside [0, 1]")
    hp = doc["tree"].get("help", {"enabled": False})
    if hp.get("enabled") and not 0.0 < hp.get("epsilon", 1e-3) < 0.5:
        fail("help_mass_valid", "HELP mass epsilon must lie in (0, 1/2)")
    sim = doc["simulation"]
    if sim["steps"] < 1:
        fail("steps_positive", "simulation steps must be >= 1")
    plant = sim.get("plant", {})
    for key in ("eta_c", "eta_d"):
        if any(not 0.0 < e <= 1.0 for e in plant.get(key, [])):
            fail("efficiency_in_unit_interval", f"{key} must lie in (0, 1]")
    if any(v < 0 for v in plant.get("self_discharge", [])):
        fail("self_discharge_nonnegative", "self-discharge must be >= 0")
    if "network" in mg and "flow_matrix" in mg:
        fail("single_network_description", "give either a network or a flow matrix, not both")
    if "network" in mg:
        net = mg["network"]
        if len(net["unit_bus"]) != T + S + R or len(net["load_bus"]) != D:
            fail("network_places_all_units", "every unit and load needs a bus")
        elif not out:
            try:
                flow_matrix(_spec(doc))
            except RiskMPCError as exc:
                fail("network_connected", str(exc))
    return out


def validate(doc: dict) -> list:
    """All schema and invariant problems of ``doc`` as human-readable strings."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.path)):
        where = "/".join(str(p) for p in err.path) or "<root>"
        problems.append(f"schema: {where}: {err.message}")
    if problems:
        return problems
    return [f"invariant {name}: {msg}" for name, msg in _invariants(doc)]


def parse(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def read_document(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return parse(text)


def _spec(doc: dict) -> MicrogridSpec:
    mg = doc["microgrid"]
    conv, sto, ren = mg["conventional"], mg["storage"], mg["renewable"]
    kw = {}
    if "network" in mg:
        net = mg["network"]
        lines = tuple(Line(l["from"], l["to"], l["b"], l.get("g", 0.0), l.get("p_min", -np.inf),
                           l.get("p_max", np.inf)) for l in net["lines"])
        kw["network"] = Network(net["buses"], lines, tuple(net["unit_bus"]), tuple(net["load_bus"]),
                                net["reference"], net.get("voltages"))
    elif "flow_matrix" in mg:
        fm = mg["flow_matrix"]
        kw.update(F=np.array(fm["F"], dtype=float), pe_min=fm.get("p_min"), pe_max=fm.get("p_max"))
    return MicrogridSpec(pt_min=conv["p_min"], pt_max=conv["p_max"], ps_min=sto["p_min"], ps_max=sto["p_max"],
                         pr_min=ren["p_min"], pr_max=ren["p_max"], x_max=sto["x_max"], xs_min=sto["x_soft_min"],
                         xs_max=sto["x_soft_max"], chi_t=conv["chi"], chi_s=sto["chi"], Ts=mg["sampling_time"],
                         n_loads=mg.get("n_loads", 1), **kw)


def _signal_model(d: dict) -> SignalModel:
    return SignalModel(ar=tuple(d.get("ar", ())), ma=tuple(d.get("ma", ())),
                       seasonal_ar=tuple(d.get("seasonal_ar", ())), seasonal_ma=tuple(d.get("seasonal_ma", ())),
                       d=d.get("d", 0), seasonal_d=d.get("seasonal_d", 0), season=d.get("season", 1),
                       sigma=d["sigma"], mean=d["mean"])


@dataclass(frozen=True)
class RunConfig:
    spec: MicrogridSpec
    weights: CostWeights
    forecaster: ForecasterSpec
    controller: ControllerConfig
    plant: PlantParams
    noise: NoiseModel | None
    alphas: tuple
    replicas: int
    workers: int
    load_amplitude: float
    period: int
    output_dir: str
    document: dict

    def world(self, noise: NoiseModel | None = None, seed: int | None = None, noise_seed: int | None = None,
              steps: int | None = None) -> SyntheticWorld:
        return SyntheticWorld(self.forecaster, self.controller.steps if steps is None else steps,
                              self.controller.seed if seed is None else seed, noise, noise_seed,
                              self.load_amplitude, self.period)

    def with_controller(self, **changes) -> "RunConfig":
        return replace(self, controller=replace(self.controller, **changes))


def _noise(d: dict | None) -> NoiseModel | None:
    if not d or d["kind"] == "none":
        return None
    base = CONSTANT_OFFSET if d["kind"] == "constant" else OCCASIONAL
    fields = {k: d[k] for k in ("wind_mean", "wind_sd", "load_mean", "load_sd", "event_rate") if k in d}
    return replace(base, **fields)


def build(doc: dict) -> RunConfig:
    problems = validate(doc)
    if problems:
        raise ConfigurationError("; ".join(problems))
    doc = copy.deepcopy(doc)
    spec = _spec(doc)
    w = doc["microgrid"]["weights"]
    sto = doc["microgrid"]["storage"]
    weights = CostWeights(w["c_t"], w["c_t_lin"], w["c_t_quad"], w["c_sw"], w["c_r"], w["c_s"],
                          sto["x_soft_min"], sto["x_soft_max"], w["discount"])
    fc = doc["forecaster"]
    sim = doc["simulation"]
    forecaster = ForecasterSpec(tuple(_signal_model(s) for s in fc["wind"]),
                                tuple(_signal_model(s) for s in fc["load"]),
                                tuple(WindCurve(s["curve"]["coefficient"], s["curve"]["rated_power"])
                                      for s in fc["wind"]), sim.get("seed", 0))
    hp = doc["tree"].get("help", {"enabled": False})
    help_spec = None
    if hp.get("enabled"):
        help_spec = HelpSpec(hp.get("epsilon", 1e-3), hp.get("low_quantile", 0.005), hp.get("high_quantile", 0.995))
    ctl = doc["controller"]
    so = ctl.get("solver", {})
    solver = SolverOptions(rel_gap=so.get("rel_gap", 1e-6), abs_gap=so.get("abs_gap", 1e-9),
                           node_limit=so.get("node_limit", 100_000), time_limit=so.get("time_limit"))
    controller = ControllerConfig(mode=ctl.get("mode", "risk-averse"), alpha=ctl.get("alpha", 0.5),
                                  horizon=ctl["horizon"], branching=tuple(doc["tree"]["branching"]),
                                  help=help_spec, relax_stage=ctl.get("relax_stage", 4), solver=solver,
                                  n_fan=fc.get("n_fan", 100), steps=sim["steps"], seed=sim.get("seed", 0),
                                  x0=tuple(sto["x0"]), delta0=tuple(ctl.get("delta0", [0.0] * spec.T)))
    pl = sim.get("plant", {})
    plant = PlantParams(pl.get("eta_c", [1.0] * spec.S), pl.get("eta_d", [1.0] * spec.S),
                        pl.get("self_discharge", [0.0] * spec.S), ac=pl.get("ac", True),
                        tol=pl.get("violation_tol", 1e-6))
    return RunConfig(spec=spec, weights=weights, forecaster=forecaster, controller=controller, plant=plant,
                     noise=_noise(sim.get("noise")), alphas=tuple(ctl.get("alphas", [controller.alpha])),
                     replicas=sim.get("replicas", 10), workers=sim.get("workers", 1),
                     load_amplitude=fc.get("load_amplitude", 0.25), period=fc.get("period", 48),
                     output_dir=doc.get("output", {}).get("directory", "out"), document=doc)


def load(path) -> RunConfig:
    return build(read_document(path))


def shipped_config_path(name: str = "case_study.json") -> Path:
    return Path(str(resources.files("riskmpc") / "configs" / name))


def load_shipped(name: str = "case_study.json") -> RunConfig:
    return load(shipped_config_path(name))
