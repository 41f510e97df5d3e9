"""Run configuration: TOML (or JSON) documents parsed into a :class:`RunSpec`."""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import initial
from .errors import ParseError
from .model import (
    DemographyParams,
    Linear,
    ModelParams,
    PolynomialRejuvenation,
    SaturatingAging,
    ValidatedParams,
    validate,
)

SCENARIOS = ("ibm", "pde", "moments", "compare", "analyze-chi")
_SECTIONS = {"scenario", "model", "demography", "initial", "numerics", "output"}
_MODEL_KEYS = {
    "tau_plus", "tau_minus", "tau", "p",
    "delta_plus", "delta_minus", "g_plus", "g_minus",
    "family_plus", "family_minus",
}
_DEMOGRAPHY_KEYS = {"mu", "beta", "alpha", "gamma_rate"}
_OUTPUT_KEYS = {"dir", "density"}


@dataclass
class Numerics:
    n_individuals: int = 100_000
    replicates: int = 1
    seed: int = 0
    b_max: Optional[float] = None
    n_cells: Optional[int] = None
    cell_width: float = 1.0 / 16.0
    courant: float = 1.0
    order: int = 1
    dt: float = 1e-3
    K: Optional[int] = None
    t_end: float = 30.0
    output_times: list = field(default_factory=list)
    bin_width: Union[float, str] = 1.0
    hist_b_max: Optional[float] = None

    def moment_order(self, scenario: str) -> int:
        if self.K is not None:
            return self.K
        return 100 if scenario in ("analyze-chi", "moments") else 4


_NUMERIC_KEYS = set(Numerics.__dataclass_fields__)


@dataclass
class OutputSpec:
    dir: str = "out"
    density: bool = True


@dataclass
class RunSpec:
    scenario: str
    params: ValidatedParams
    initial: object
    initial_desc: dict
    numerics: Numerics
    output: OutputSpec
    model_desc: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Fully materialised echo (defaults included) for run metadata."""
        num = asdict(self.numerics)
        num["K"] = self.numerics.moment_order(self.scenario)
        return {
            "scenario": self.scenario,
            "model": self.model_desc,
            "params": self.params.to_dict(),
            "initial": self.initial_desc,
            "numerics": num,
            "output": asdict(self.output),
        }


def _unknown(section: str, got: dict, allowed: set):
    extra = sorted(set(got) - allowed)
    if extra:
        raise ParseError(f"unknown key {section + '.' if section else ''}{extra[0]!r}; allowed: {sorted(allowed)}")


def _family(desc, side: str):
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ParseError(f"model.family_{side} must be a table with a 'kind' key")
    d = dict(desc)
    kind = d.pop("kind")
    try:
        if kind == "linear":
            return Linear(**d)
        if kind == "polynomial" and side == "plus":
            return PolynomialRejuvenation(**d)
        if kind == "saturating" and side == "minus":
            return SaturatingAging(**d)
    except TypeError as exc:
        raise ParseError(f"model.family_{side}: {exc}") from None
    raise ParseError(f"model.family_{side}: unsupported kind {kind!r}")


def _model(m: dict) -> ModelParams:
    _unknown("model", m, _MODEL_KEYS)
    direct = {"tau_plus", "tau_minus"} & set(m)
    prob = {"tau", "p"} & set(m)
    if not ((len(direct) == 2 and not prob) or (len(prob) == 2 and not direct)):
        raise ParseError(
            "model: give exactly one parameterization, either (tau_plus, tau_minus) or (tau, p); "
            f"found {sorted(direct | prob)}"
        )
    kw = {}
    for side in ("plus", "minus"):
        keys = {f"delta_{side}", f"g_{side}", f"family_{side}"} & set(m)
        if len(keys) > 1:
            raise ParseError(f"model: give only one of delta_{side}, g_{side}, family_{side}")
        if f"family_{side}" in m:
            kw[f"family_{side}"] = _family(m[f"family_{side}"], side)
        elif f"g_{side}" in m:
            kw[f"g_{side}"] = float(m[f"g_{side}"])
        elif f"delta_{side}" in m:
            d = float(m[f"delta_{side}"])
            kw[f"g_{side}"] = 1.0 + d if side == "plus" else 1.0 - d
    if direct:
        return ModelParams(float(m["tau_plus"]), float(m["tau_minus"]), **kw)
    return ModelParams.from_tau_p(float(m["tau"]), float(m["p"]), **kw)


def _numerics(d: dict) -> Numerics:
    _unknown("numerics", d, _NUMERIC_KEYS)
    num = Numerics(**d)
    if num.bin_width != "auto":
        num.bin_width = float(num.bin_width)
        if not num.bin_width > 0:
            raise ParseError("numerics.bin_width must be positive or 'auto'")
    if not num.output_times:
        num.output_times = [float(num.t_end)]
    times = [float(t) for t in num.output_times]
    if times != sorted(times) or len(set(times)) != len(times):
        raise ParseError("numerics.output_times must be strictly increasing")
    if times[0] < 0 or times[-1] > num.t_end:
        raise ParseError(f"numerics.output_times must lie within [0, t_end={num.t_end}]")
    num.output_times = times
    for name in ("n_individuals", "replicates"):
        if int(getattr(num, name)) < 1:
            raise ParseError(f"numerics.{name} must be >= 1")
    if num.seed < 0:
        raise ParseError("numerics.seed must be >= 0")
    if not 0 < num.courant <= 1:
        raise ParseError("numerics.courant must lie in (0, 1]")
    if num.order not in (1, 2):
        raise ParseError("numerics.order must be 1 or 2")
    if num.n_cells is not None and num.b_max is None:
        raise ParseError("numerics.n_cells needs numerics.b_max")
    return num


def spec_from_dict(doc: dict, scenario: Optional[str] = None) -> RunSpec:
    _unknown("", doc, _SECTIONS)
    scenario = scenario or doc.get("scenario")
    if scenario not in SCENARIOS:
        raise ParseError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    if "model" not in doc:
        raise ParseError("missing [model] section")
    mp = _model(dict(doc["model"]))
    dem = None
    if "demography" in doc:
        _unknown("demography", doc["demography"], _DEMOGRAPHY_KEYS)
        try:
            dem = DemographyParams(**doc["demography"])
        except TypeError as exc:
            raise ParseError(f"demography: {exc}") from None
    vp = validate(mp, dem)
    init_desc = dict(doc.get("initial", {"kind": "dirac", "b0": 20.0}))
    try:
        ic = initial.from_dict(init_desc)
    except TypeError as exc:
        raise ParseError(f"initial: {exc}") from None
    num = _numerics(dict(doc.get("numerics", {})))
    out = dict(doc.get("output", {}))
    _unknown("output", out, _OUTPUT_KEYS)
    return RunSpec(scenario, vp, ic, init_desc, num, OutputSpec(**out), dict(doc["model"]))


def parse_config(text: str, fmt: str = "toml", scenario: Optional[str] = None) -> RunSpec:
    """Parse a TOML (default) or JSON document.

    Raises
    ------
    ParseError
        Malformed document, unknown key or a broken parameterization rule.
    RangeError
        Parameter values rejected by :func:`biolage.model.validate`.
    """
    try:
        doc = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"malformed {fmt} document: {exc}") from None
    return spec_from_dict(doc, scenario)


def load_config(path: Union[str, Path], scenario: Optional[str] = None) -> RunSpec:
    path = Path(path)
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    return parse_config(path.read_text(encoding="utf-8"), fmt, scenario)

