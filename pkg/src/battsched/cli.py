"""Command-line front end.

    battsched {simulate,solve,replay,compare,validate-params} [--config PATH] [--out DIR] [--seed N]

The run configuration is a JSON file; relative paths inside it are taken
from the configuration file's directory. Without ``--config`` the packaged
demo configuration is used.

Exit codes: 0 success, 1 bad input or infeasible simulation, 2 solver
failure. Set ``BATTSCHED_LOG`` (e.g. ``DEBUG``) for log output on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .core import BatteryError, InfeasibleStepError, PriceSeries, TimeGrid, ValidationError
from .io import (
    ingest_load,
    ingest_prices,
    read_schedule_csv,
    read_trace_csv,
    write_schedule_csv,
    write_trace_csv,
)
from .optimizer.dp import dp_solve
from .optimizer.gradient import PenaltyConfig, SpmProblem, gradient_solve
from .optimizer.objectives import (
    DEGRADATION_MODES,
    ArbitrageObjective,
    Degradation,
    PeakShavingObjective,
)
from .optimizer.replay import replay
from .optimizer.report import SolverFailure
from .params import ParamSet, data_path, load_params
from .spm import spm_ledger

log = logging.getLogger("battsched")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2

_CONFIG_KEYS = {
    "model", "objective", "degradation", "degradation_weight", "params_file", "prices_file",
    "load_file", "demand_charge_usd_per_mw", "schedule_file", "solver", "compare",
}
_SOLVER_KEYS = {
    "dp_mode", "state_grid", "control_levels_mw", "control_levels_a", "n_caps", "local_passes",
    "penalty_ladder", "max_iter", "rtol", "gradient", "fd_step_a", "margin_v", "margin_c",
}


@dataclass
class RunConfig:
    model: str = "erm"
    objective: str = "arbitrage"
    degradation: str = "none"
    degradation_weight: float = 0.0
    params_file: Path | None = None
    prices_file: Path | None = None
    load_file: Path | None = None
    demand_charge: float = 0.0
    schedule_file: Path | None = None
    solver: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.model not in ("erm", "ecm", "spm"):
            raise ValidationError(f"model must be erm, ecm or spm, got {self.model!r}")
        if self.objective not in ("arbitrage", "peakshaving"):
            raise ValidationError(f"objective must be arbitrage or peakshaving, got {self.objective!r}")
        if self.degradation not in DEGRADATION_MODES:
            raise ValidationError(f"degradation must be one of {', '.join(DEGRADATION_MODES)}")
        if self.degradation == "sei" and self.model != "spm":
            raise ValidationError("sei degradation requires model=spm")
        if self.degradation_weight < 0:
            raise ValidationError("degradation_weight must be nonnegative")
        if self.objective == "peakshaving" and self.load_file is None:
            raise ValidationError("peakshaving needs load_file")
        unknown = set(self.solver) - _SOLVER_KEYS
        if unknown:
            raise ValidationError(f"unknown solver keys: {', '.join(sorted(unknown))}")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        path = data_path("demo_config.json")
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    unknown = {k for k in raw if not k.startswith("_")} - _CONFIG_KEYS
    if unknown:
        raise ValidationError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    base = path.parent

    def resolve(key):
        v = raw.get(key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else base / p

    cfg = RunConfig(
        model=raw.get("model", "erm"),
        objective=raw.get("objective", "arbitrage"),
        degradation=raw.get("degradation", "none"),
        degradation_weight=float(raw.get("degradation_weight", 0.0)),
        params_file=resolve("params_file") or data_path("demo_params.json"),
        prices_file=resolve("prices_file") or data_path("demo_prices.csv"),
        load_file=resolve("load_file"),
        demand_charge=float(raw.get("demand_charge_usd_per_mw", 0.0)),
        schedule_file=resolve("schedule_file"),
        solver=dict(raw.get("solver", {})),
        compare=dict(raw.get("compare", {})),
        raw=raw,
    )
    cfg.validate()
    return cfg


def _sha256(path: Path | None) -> str | None:
    if path is None or not Path(path).is_file():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(cfg: RunConfig) -> str:
    """Hash of the configuration and the content of every input file it names."""
    payload = {
        "config": cfg.raw,
        "params": _sha256(cfg.params_file),
        "prices": _sha256(cfg.prices_file),
        "load": _sha256(cfg.load_file),
        "schedule": _sha256(cfg.schedule_file),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# building blocks


@dataclass
class Setup:
    cfg: RunConfig
    params: ParamSet
    prices: PriceSeries
    load: np.ndarray | None

    @property
    def grid(self) -> TimeGrid:
        return self.prices.grid

    def degradation(self) -> Degradation:
        p = self.params
        return Degradation(
            mode=self.cfg.degradation,
            weight=self.cfg.degradation_weight,
            replacement_cost=p.replacement_cost,
            throughput=p.throughput,
            stress=p.stress,
            eol_fraction=p.eol_fraction,
        )

    def objective(self):
        if self.cfg.objective == "peakshaving":
            return PeakShavingObjective(self.prices, self.load, self.cfg.demand_charge, self.degradation())
        return ArbitrageObjective(self.prices, self.degradation())

    def model(self, name: str | None = None):
        name = name or self.cfg.model
        return self.params.model(name, degrade=(name == "spm" and self.cfg.degradation == "sei"))


def setup(cfg: RunConfig) -> Setup:
    params = load_params(cfg.params_file)
    prices = ingest_prices(cfg.prices_file)
    load = ingest_load(cfg.load_file, prices.grid) if cfg.load_file is not None else None
    return Setup(cfg, params, prices, load)


def _levels(setup_: Setup, model) -> list:
    s = setup_.cfg.solver
    if model.name == "erm":
        if "control_levels_mw" in s:
            return [tuple(v) if isinstance(v, list) else float(v) for v in s["control_levels_mw"]]
        p = model.params
        return [-p.p_ch_max, -p.p_ch_max / 2, 0.0, p.p_dis_max / 2, p.p_dis_max]
    if "control_levels_a" in s:
        return [float(v) for v in s["control_levels_a"]]
    lo, hi = model.current_bounds()
    return np.linspace(lo, hi, 9).tolist()


def _penalty_config(setup_: Setup) -> PenaltyConfig:
    s = setup_.cfg.solver
    kw = {}
    if "penalty_ladder" in s:
        kw["ladder"] = tuple(float(v) for v in s["penalty_ladder"])
    for key, name in (("max_iter", "max_iter"), ("rtol", "rtol"), ("gradient", "gradient"),
                      ("fd_step_a", "fd_step"), ("margin_v", "margin_v"), ("margin_c", "margin_c")):
        if key in s:
            kw[name] = s[key]
    return PenaltyConfig(**kw)


def solve(setup_: Setup, model_name: str | None = None):
    model = setup_.model(model_name)
    objective = setup_.objective()
    s = setup_.cfg.solver
    if model.name == "spm":
        return gradient_solve(model, objective, config=_penalty_config(setup_))
    grid_sizes = s.get("state_grid", 101)
    return dp_solve(model, objective, _levels(setup_, model), state_grid_sizes=grid_sizes,
                    mode=s.get("dp_mode", "grid"), n_caps=int(s.get("n_caps", 41)),
                    local_passes=int(s.get("local_passes", 5)))


def _ledger(model, trace) -> dict:
    out = {
        "throughput_mwh": float(trace.throughput_mwh[-1]),
        "final_soc_fraction": float(trace.soc_fraction[-1]),
    }
    if model.name == "spm":
        led = spm_ledger(trace.final_state, model.params)
        out.update(capacity_loss=led.capacity_loss, li_loss_mol=led.li_loss,
                   sei_thickness_m=led.sei_thickness, z_n_ohm=led.z_n)
    return out


def _gradient_check(setup_: Setup, seed: int) -> dict:
    """Adjoint against central differences at one seeded random schedule."""
    model = setup_.model("spm")
    objective = setup_.objective()
    if objective.degradation.mode == "rainflow":
        return {"skipped": "rainflow cost is not differentiable"}
    cfg = _penalty_config(setup_)
    problem = SpmProblem(model, objective, cfg.ladder[-1], cfg)
    rng = np.random.default_rng(seed)
    lo, hi = model.current_bounds()
    u = rng.uniform(0.1 * lo, 0.1 * hi, setup_.grid.steps)
    ga = problem.adjoint_gradient(u)
    gf = problem.fd_gradient(u, step=1e-5, central=True)
    err = float(np.linalg.norm(ga - gf) / max(np.linalg.norm(gf), 1e-300))
    return {"seed": seed, "relative_error": err}


# --------------------------------------------------------------------------
# output


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_clean(data), sort_keys=True, indent=2) + "\n")


def _report_base(command: str, cfg: RunConfig, seed: int) -> dict:
    return {
        "command": command,
        "config": cfg.raw,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _write_trace(out: Path, name: str, setup_: Setup, trace) -> None:
    write_trace_csv(out / name, trace, setup_.prices.prices, setup_.load)


def reevaluate_trace(trace_csv: str | Path, config: str | Path | None = None) -> float:
    """Objective value recomputed from a written trace CSV and its run config."""
    cfg = load_config(config)
    params = load_params(cfg.params_file)
    cols = read_trace_csv(trace_csv)
    stamps = [datetime.fromisoformat(t) for t in cols["timestamp"]]
    tau = (stamps[1] - stamps[0]).total_seconds()
    grid = TimeGrid(stamps[0], tau, len(stamps) - 1)
    prices = PriceSeries(grid, cols["price"][1:])
    setup_ = Setup(cfg, params, prices, cols["load_mw"][1:] if "load_mw" in cols else None)
    objective = setup_.objective()

    class _Columns:
        pass

    view = _Columns()
    view.pack_power_mw = cols["pack_power_mw"]
    view.throughput_mwh = cols["throughput_mwh"]
    view.soc_fraction = cols["soc_fraction"]
    view.capacity_loss = cols["capacity_loss"]
    return objective.value(view)


# --------------------------------------------------------------------------
# commands


def cmd_validate(args, cfg: RunConfig) -> int:
    params = load_params(cfg.params_file)
    sections = [n for n in ("erm", "ecm", "spm") if getattr(params, n) is not None]
    msg = f"{cfg.params_file}: ok ({', '.join(sections)}"
    msg += ", sei" if params.spm is not None and params.spm.sei is not None else ""
    print(msg + ")")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig, out: Path) -> int:
    st = setup(cfg)
    if cfg.schedule_file is None:
        raise ValidationError("simulate needs schedule_file in the config")
    schedule = read_schedule_csv(cfg.schedule_file)
    model = st.model()
    objective = st.objective()
    report = _report_base("simulate", cfg, args.seed)
    report["model"] = model.name
    try:
        trace = model.simulate(schedule)
    except InfeasibleStepError as exc:
        report.update(status="infeasible", violation={"kind": exc.kind, "step": exc.step,
                                                      "magnitude": exc.magnitude, "message": exc.detail})
        write_json(out / "report.json", report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _write_trace(out, "trace.csv", st, trace)
    report.update(status="ok", value_usd=objective.value(trace), breakdown=objective.breakdown(trace),
                  degradation_ledger=_ledger(model, trace), files=["trace.csv"])
    write_json(out / "report.json", report)
    return EXIT_OK


def _solve_report(command: str, args, cfg, st, result) -> dict:
    objective = st.objective()
    model = st.model()
    report = _report_base(command, cfg, args.seed)
    report.update(
        status="ok",
        model=result.model,
        objective=cfg.objective,
        degradation=cfg.degradation,
        solver=result.solver,
        certified=result.certified,
        value_usd=result.value,
        breakdown=objective.breakdown(result.trace),
        diagnostics=result.diagnostics,
        degradation_ledger=_ledger(model, result.trace),
    )
    return report


def cmd_solve(args, cfg: RunConfig, out: Path) -> int:
    st = setup(cfg)
    try:
        result = solve(st)
    except SolverFailure as exc:
        report = _report_base("solve", cfg, args.seed)
        report.update(status="solver_failure", message=str(exc), diagnostics=exc.diagnostics)
        write_json(out / "report.json", report)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report = _solve_report("solve", args, cfg, st, result)
    if result.model == "spm":
        report["gradient_check"] = _gradient_check(st, args.seed)
    _write_trace(out, "trace.csv", st, result.trace)
    write_schedule_csv(out / "schedule.csv", result.schedule)
    report["files"] = ["schedule.csv", "trace.csv"]
    write_json(out / "report.json", report)
    return EXIT_OK


def cmd_replay(args, cfg: RunConfig, out: Path) -> int:
    st = setup(cfg)
    if cfg.schedule_file is None:
        raise ValidationError("replay needs schedule_file in the config")
    schedule = read_schedule_csv(cfg.schedule_file)
    model = st.model()
    objective = st.objective()
    rep = replay(schedule, model, objective)
    _write_trace(out, "trace.csv", st, rep.trace)
    report = _report_base("replay", cfg, args.seed)
    report.update(status="ok", replay=rep.summary(), value_usd=rep.realized_value,
                  breakdown=objective.breakdown(rep.trace),
                  degradation_ledger=_ledger(model, rep.trace), files=["trace.csv"])
    write_json(out / "report.json", report)
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig, out: Path) -> int:
    st = setup(cfg)
    source = cfg.compare.get("source", "erm")
    targets = list(cfg.compare.get("targets", ["ecm", "spm"]))
    if cfg.degradation == "sei":
        raise ValidationError("compare replays on several models; sei degradation is not allowed")
    objective = st.objective()
    try:
        result = solve(st, source)
    except SolverFailure as exc:
        report = _report_base("compare", cfg, args.seed)
        report.update(status="solver_failure", message=str(exc), diagnostics=exc.diagnostics)
        write_json(out / "report.json", report)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    files = ["compare.json", "schedule.csv", f"trace_{source}.csv"]
    write_schedule_csv(out / "schedule.csv", result.schedule)
    _write_trace(out, f"trace_{source}.csv", st, result.trace)
    replays = {}
    for name in targets:
        rep = replay(result.schedule, st.model(name), objective, result)
        replays[name] = rep.summary()
        _write_trace(out, f"trace_{name}.csv", st, rep.trace)
        files.append(f"trace_{name}.csv")
    realized = [replays[n]["realized_value_usd"] for n in targets]
    chain = [result.value] + realized
    compare = {
        "source": source,
        "claimed_value_usd": result.value,
        "replays": replays,
        "overestimation_direction_holds": all(a >= b for a, b in zip(chain, chain[1:])),
    }
    write_json(out / "compare.json", compare)
    report = _solve_report("compare", args, cfg, st, result)
    report.update(compare=compare, files=sorted(files))
    write_json(out / "report.json", report)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "replay": cmd_replay,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="battsched", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=[*COMMANDS, "validate-params"])
    parser.add_argument("--config", type=Path, default=None, help="run configuration JSON (default: packaged demo)")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomised diagnostics")
    parser.add_argument("--model", choices=["erm", "ecm", "spm"], default=None,
                        help="override the configured model")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("BATTSCHED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.model:
            cfg.model = args.model
            cfg.raw = {**cfg.raw, "model": args.model}
            cfg.validate()
        if args.command == "validate-params":
            return cmd_validate(args, cfg)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, args.out)
    except (ValidationError, InfeasibleStepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BatteryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
