"""Parameter files: JSON with the unit spelled out in every key name.

A parameter file has sections ``erm``, ``ecm``, ``spm``, ``sei`` and
``degradation``; any section may be omitted, in which case the models
that need it are unavailable. Keys starting with ``_`` are comments.
Unknown keys are rejected so a misspelt unit suffix never passes
silently.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .core import ValidationError
from .degradation import SeiParams, StressFunction, ThroughputModel
from .ecm import EcmModel, EcmParams, EcmState, OcvCurve
from .erm import ErmModel, ErmParams, ErmState
from .spm import ElectrodeParams, OcpCurve, SpmModel, SpmParams, spm_initial_state

# file key -> dataclass field
_ERM_KEYS = {
    "eta_ch": "eta_ch", "eta_dis": "eta_dis", "e_max_mwh": "e_max",
    "p_ch_max_mw": "p_ch_max", "p_dis_max_mw": "p_dis_max", "limit_curve": "limit_curve",
}
_ECM_KEYS = {
    "r0_ohm": "r0", "rd_ohm": "rd", "cd_farad": "cd", "eta_c": "eta_c", "q_max_ah": "q_max",
    "v_min_v": "v_min", "v_max_v": "v_max", "i_max_ch_a": "i_max_ch", "i_max_dis_a": "i_max_dis",
    "n_cells": "n_cells", "ocv": "ocv", "exact_hold": "exact_hold",
}
_ELECTRODE_KEYS = {
    "radius_m": "radius", "diff_m2_s": "diff", "k_rate": "k", "c_max_mol_m3": "c_max",
    "c_min_op_mol_m3": "c_min_op", "c_max_op_mol_m3": "c_max_op", "eps": "eps", "vol_m3": "vol",
    "z0_ohm": "z0", "ocp": "ocp",
}
_SPM_KEYS = {
    "pos": "pos", "neg": "neg", "c_el_mol_m3": "c_el", "temp_k": "temp", "v_min_v": "v_min",
    "v_max_v": "v_max", "i_max_ch_a": "i_max_ch", "i_max_dis_a": "i_max_dis", "n_cells": "n_cells",
    "q_rated_ah": "q_rated", "n_shells": "n_shells", "faraday_c_mol": "faraday",
    "gas_const_j_mol_k": "gas_const", "scheme": "scheme",
}
_SEI_KEYS = {
    "j0_sei_a_m2": "j0_sei", "ocp_sei_v": "ocp_sei", "molar_mass_kg_mol": "molar_mass",
    "density_kg_m3": "density", "conductivity_s_m": "conductivity", "z0_n_ohm": "z0_n",
}
_DEG_KEYS = {
    "lifetime_throughput_mwh", "eol_fraction", "stress_a", "stress_b", "replacement_cost_usd",
}
_INIT_KEYS = {"erm": {"soe0_mwh"}, "ecm": {"soc0_fraction", "v_d0_v"}, "spm": {"soc0_fraction"}}


def _fields(section: Mapping[str, Any], keys: Mapping[str, str], where: str,
            extra: set[str] = frozenset()) -> dict[str, Any]:
    if not isinstance(section, Mapping):
        raise ValidationError(f"{where}: expected an object")
    out = {}
    for key, value in section.items():
        if key.startswith("_") or key in extra:
            continue
        if key not in keys:
            raise ValidationError(f"{where}: unknown key {key!r}")
        out[keys[key]] = value
    return out


def _curve_pairs(value, where: str):
    if not isinstance(value, (list, tuple)) or not all(
            isinstance(p, (list, tuple)) and len(p) == 2 for p in value):
        raise ValidationError(f"{where}: expected a list of [x, y] pairs")
    return [(float(a), float(b)) for a, b in value]


def load_curve_csv(path: str | Path) -> list[tuple[float, float]]:
    """Two-column numeric CSV (x, volts); a non-numeric first row is a header."""
    pairs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}:{lineno}: expected two columns")
            try:
                pairs.append((float(row[0]), float(row[1])))
            except ValueError:
                if lineno == 1:
                    continue
                raise ValidationError(f"{path}:{lineno}: non-numeric value") from None
    if len(pairs) < 2:
        raise ValidationError(f"{path}: need at least two rows")
    return pairs


def _resolve_curve(value, base: Path | None, where: str):
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute() and base is not None:
            path = base / path
        return load_curve_csv(path)
    return _curve_pairs(value, where)


@dataclass(frozen=True)
class ParamSet:
    """Everything a parameter file can describe.

    Model blocks are ``None`` when their section is absent.
    """

    erm: ErmParams | None = None
    erm_init: ErmState | None = None
    ecm: EcmParams | None = None
    ecm_init: EcmState | None = None
    spm: SpmParams | None = None
    spm_soc0: float = 0.5
    throughput: ThroughputModel | None = None
    stress: StressFunction = StressFunction()
    replacement_cost: float = 0.0

    @property
    def eol_fraction(self) -> float:
        return self.throughput.eol_fraction if self.throughput else 0.2

    def model(self, name: str, degrade: bool = False):
        """Build the simulator ``name`` (erm, ecm or spm) at its initial state."""
        if name == "erm":
            if self.erm is None:
                raise ValidationError("parameter set has no erm section")
            return ErmModel(self.erm, self.erm_init)
        if name == "ecm":
            if self.ecm is None:
                raise ValidationError("parameter set has no ecm section")
            return EcmModel(self.ecm, self.ecm_init)
        if name == "spm":
            if self.spm is None:
                raise ValidationError("parameter set has no spm section")
            return SpmModel(self.spm, spm_initial_state(self.spm, self.spm_soc0), degrade)
        raise ValidationError(f"unknown model {name!r}; expected erm, ecm or spm")


def params_from_dict(data: Mapping[str, Any], base: Path | None = None) -> ParamSet:
    known = {"erm", "ecm", "spm", "sei", "degradation"}
    for key in data:
        if not key.startswith("_") and key not in known:
            raise ValidationError(f"unknown parameter section {key!r}")
    out: dict[str, Any] = {}
    try:
        if "erm" in data:
            f = _fields(data["erm"], _ERM_KEYS, "erm", _INIT_KEYS["erm"])
            if f.get("limit_curve") is not None:
                f["limit_curve"] = tuple(_curve_pairs(f["limit_curve"], "erm.limit_curve"))
            erm = ErmParams(**f)
            out["erm"] = erm
            out["erm_init"] = ErmState(float(data["erm"].get("soe0_mwh", 0.0)))
        if "ecm" in data:
            f = _fields(data["ecm"], _ECM_KEYS, "ecm", _INIT_KEYS["ecm"])
            if "ocv" in f:
                f["ocv"] = OcvCurve.from_pairs(_resolve_curve(f["ocv"], base, "ecm.ocv"))
            ecm = EcmParams(**f)
            soc0 = float(data["ecm"].get("soc0_fraction", 0.5))
            out["ecm"] = ecm
            out["ecm_init"] = EcmState(soc0 * ecm.q_max, float(data["ecm"].get("v_d0_v", 0.0)))
        sei = None
        if "sei" in data:
            sei = SeiParams(**_fields(data["sei"], _SEI_KEYS, "sei"))
        if "spm" in data:
            f = _fields(data["spm"], _SPM_KEYS, "spm", _INIT_KEYS["spm"])
            for side in ("pos", "neg"):
                if side not in f:
                    raise ValidationError(f"spm: missing electrode {side!r}")
                e = _fields(f[side], _ELECTRODE_KEYS, f"spm.{side}")
                if "ocp" not in e:
                    raise ValidationError(f"spm.{side}: missing ocp")
                e["ocp"] = OcpCurve.from_pairs(_resolve_curve(e["ocp"], base, f"spm.{side}.ocp"))
                f[side] = ElectrodeParams(**e)
            out["spm"] = SpmParams(**f, sei=sei)
            out["spm_soc0"] = float(data["spm"].get("soc0_fraction", 0.5))
        if "degradation" in data:
            d = data["degradation"]
            _fields(d, {k: k for k in _DEG_KEYS}, "degradation")
            eol = float(d.get("eol_fraction", 0.2))
            if "lifetime_throughput_mwh" in d:
                out["throughput"] = ThroughputModel(float(d["lifetime_throughput_mwh"]), eol)
            out["stress"] = StressFunction(float(d.get("stress_a", 5.24e-4)), float(d.get("stress_b", 2.03)))
            out["replacement_cost"] = float(d.get("replacement_cost_usd", 0.0))
    except TypeError as exc:
        # missing required dataclass fields
        raise ValidationError(str(exc)) from None
    return ParamSet(**out)


def load_params(path: str | Path) -> ParamSet:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return params_from_dict(data, base=path.parent)


def data_path(name: str) -> Path:
    """Path of a file shipped in the package's data directory."""
    return Path(str(resources.files("battsched") / "data" / name))


def default_params() -> ParamSet:
    """The packaged synthetic parameter set."""
    return load_params(data_path("demo_params.json"))
