"""Scenario files: JSON schema, validation with field paths, model resolution."""

from __future__ import annotations

import copy
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .calibration import DEFAULT_LAMBDA_GRID, DEFAULT_SIGMA_GRID, SimSettings, VirusInputs
from .errors import ValidationError
from .geometry import HOUSEHOLD, INDEX_PATIENT, SITE_KINDS, CommunityMap, Site, gamma_matrix
from .model import EpidemicModel

ENGINES = ("quantum", "markov", "rk4")
RUN_MODES = ("density", "shots", "trajectories")

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_rect = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_positive = {"type": "number", "exclusiveMinimum": 0}
_grid = {"type": "array", "items": _positive, "minItems": 3}

SCHEMA = {
    "type": "object",
    "required": ["sites"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "sites": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer"},
                    "kind": {"enum": list(SITE_KINDS)},
                    "position": _point,
                    "rect": _rect,
                    "population": _positive,
                    "label": {"type": "string"},
                },
            },
        },
        "virus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sar": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "sar_horizon": {"type": "integer", "minimum": 1},
                "r0": _positive,
                "incubation": {"type": "integer", "minimum": 1},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": {"type": "number"},
                "alpha": {"oneOf": [{"const": "auto"}, _positive]},
                "sigma": _positive,
                "delta_t": _positive,
                "trotter_dt": _positive,
                "gamma": {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                "resonant_household": {"type": "boolean"},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "days": {"type": "integer", "minimum": 1},
                "mode": {"enum": list(RUN_MODES)},
                "shots": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "engine": {"enum": list(ENGINES)},
            },
        },
        "calibration": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda_grid": _grid, "sigma_grid": _grid, "shots": {"type": "integer", "minimum": 1}},
        },
        "gamma_scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"gammas": _grid, "lambda": _positive},
        },
    },
}

DEFAULTS = {
    "virus": {"sar_horizon": 7, "incubation": 4},
    "model": {"alpha": "auto", "delta_t": 1.0, "trotter_dt": 0.01, "resonant_household": True},
    "run": {"days": 7, "mode": "density", "shots": 4096, "seed": 0, "engine": "quantum"},
    "calibration": {"lambda_grid": list(DEFAULT_LAMBDA_GRID), "sigma_grid": list(DEFAULT_SIGMA_GRID)},
    "gamma_scan": {"gammas": [round(0.25 * k, 2) for k in range(2, 24)]},
}


def _path(parts) -> str:
    return ".".join(str(p) for p in parts)


@dataclass
class ScenarioConfig:
    """A validated scenario with every default filled in."""

    data: dict
    source: str = ""

    @property
    def sites(self) -> list[Site]:
        return [
            Site(
                id=s["id"],
                kind=s["kind"],
                position=tuple(s["position"]) if "position" in s else None,
                rect=tuple(s["rect"]) if "rect" in s else None,
                population=s.get("population"),
            )
            for s in self.data["sites"]
        ]

    @property
    def community_map(self) -> CommunityMap:
        return CommunityMap(self.sites)

    @property
    def virus(self) -> VirusInputs:
        return VirusInputs(**self.data["virus"])

    @property
    def model_params(self) -> dict:
        return self.data["model"]

    @property
    def run(self) -> dict:
        return self.data["run"]

    @property
    def alpha(self) -> float | None:
        a = self.model_params["alpha"]
        return None if a == "auto" else float(a)

    def settings(self, shots: int | None = None, seed: int | None = None) -> SimSettings:
        m, r = self.model_params, self.run
        return SimSettings(
            delta_t=m["delta_t"],
            trotter_dt=m["trotter_dt"],
            mode=r["mode"],
            shots=r["shots"] if shots is None else shots,
            seed=r["seed"] if seed is None else seed,
        )

    def require(self, section: str, key: str):
        value = self.data.get(section, {}).get(key)
        if value is None:
            raise ValidationError("required for this command", f"{section}.{key}")
        return value

    def gamma(self, sigma: float | None = None) -> np.ndarray:
        """Coupling matrix: explicit, from sigma, or resonant households."""
        m = self.model_params
        cmap = self.community_map
        if "gamma" in m and sigma is None:
            return np.asarray(m["gamma"], dtype=float)
        sigma = m.get("sigma") if sigma is None else sigma
        if sigma is not None:
            return gamma_matrix(cmap, sigma, m["delta_t"])
        if m["resonant_household"] and all(s.kind == HOUSEHOLD for s in cmap.susceptible):
            shape = (len(cmap.index_patients), len(cmap.susceptible))
            return np.full(shape, math.pi / m["delta_t"])
        raise ValidationError("needed to derive couplings for community sites (or give model.gamma)", "model.sigma")

    def build_model(self, lam: float | None = None, sigma: float | None = None) -> EpidemicModel:
        m = self.model_params
        lam = self.require("model", "lambda") if lam is None else lam
        cmap = self.community_map
        return EpidemicModel(
            gamma=self.gamma(sigma),
            lam=float(lam),
            alpha=self.alpha,
            delta_t=m["delta_t"],
            trotter_dt=m["trotter_dt"],
            populations=cmap.populations,
            site_ids=cmap.site_ids,
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def _check_sites(data: dict) -> None:
    sites = data["sites"]
    seen = set()
    for k, s in enumerate(sites):
        where = f"sites.{k}"
        if s["id"] in seen:
            raise ValidationError(f"duplicate site id {s['id']}", f"{where}.id")
        seen.add(s["id"])
        if s["kind"] == INDEX_PATIENT:
            if "position" not in s:
                raise ValidationError("index patients need a position", f"{where}.position")
            continue
        if "population" not in s:
            raise ValidationError("susceptible sites need a population", f"{where}.population")
        if s["kind"] == HOUSEHOLD and "position" not in s:
            raise ValidationError("households are points and need a position", f"{where}.position")
        if s["kind"] != HOUSEHOLD:
            if "rect" not in s:
                raise ValidationError("communities need a rectangle", f"{where}.rect")
            x1, y1, x2, y2 = s["rect"]
            if not (x1 < x2 and y1 < y2):
                raise ValidationError("rectangle needs x1 < x2 and y1 < y2", f"{where}.rect")
    if not any(s["kind"] == INDEX_PATIENT for s in sites):
        raise ValidationError("at least one index_patient site is required", "sites")
    if not any(s["kind"] != INDEX_PATIENT for s in sites):
        raise ValidationError("at least one susceptible site is required", "sites")


def validate(raw: dict) -> ScenarioConfig:
    """Validate a parsed scenario and fill in defaults."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ValidationError(err.message, _path(err.absolute_path) or "<root>")
    data = copy.deepcopy(raw)
    for section, defaults in DEFAULTS.items():
        merged = dict(defaults)
        merged.update(data.get(section, {}))
        data[section] = merged
    _check_sites(data)
    m = data["model"]
    if "gamma" in m:
        n_i = sum(s["kind"] == INDEX_PATIENT for s in data["sites"])
        n_s = len(data["sites"]) - n_i
        g = np.asarray(m["gamma"], dtype=float)
        if g.shape != (n_i, n_s):
            raise ValidationError(f"expected a {n_i} x {n_s} matrix, got shape {g.shape}", "model.gamma")
    ratio = m["delta_t"] / m["trotter_dt"]
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise ValidationError("delta_t must be an integer multiple of trotter_dt", "model.trotter_dt")
    cfg = ScenarioConfig(data)
    overlaps = cfg.community_map.overlapping_communities()
    if overlaps:
        warnings.warn(f"overlapping community rectangles {overlaps}", stacklevel=2)
    return cfg


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"no such file {path}", "config") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not valid JSON ({exc})", "config") from None
    cfg = validate(raw)
    cfg.source = str(path)
    return cfg


def shipped_scenario(name: str) -> Path:
    """Path of a scenario file bundled with the package."""
    from importlib import resources

    return Path(str(resources.files("qepidemic") / "scenarios" / name))
