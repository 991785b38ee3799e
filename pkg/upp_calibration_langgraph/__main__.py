import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, List, TypedDict

import numpy as np
import pandas as pd
from langgraph.graph import END, StateGraph

from .audit.trail import AuditTrail, configure_logging
from .calibration import (
    FringeScan,
    evaluate_campaign,
    fit_fringe,
    fit_model,
    generate_training_set,
    load_model,
    make_targets,
    optimize_routing,
    plan_unitary,
    save_model,
    stability_trace,
)
from .config import RunConfig, load_environment
from .device import (
    device_document,
    load_processor,
    read_device_public,
    records_to_frame,
    synth_device,
)
from .errors import TwinError, ValidationError
from .thermal import total_power
from .utils import SCHEMA_VERSION, write_json

logger = logging.getLogger(__name__)


class CalibrationState(TypedDict, total=False):
    config: RunConfig
    device: Any
    audit_trail: Any
    insertion_loss_db: float
    p2pi_init: dict
    records: List[Any]
    model: Any
    error: Any
    status: str


def build_graph():
    """Builds and returns the LangGraph compiled calibration workflow."""

    def start_calibration(state: CalibrationState) -> CalibrationState:
        config, device = state["config"], state["device"]
        audit_trail = AuditTrail(f"calibrate-{device.layout.layout_hash()}-seed{config.seed}")
        audit_trail.log_step("Start", "Success", f"{device.n_modes}-mode device, {device.n_heaters} heaters.")
        return {**state, "audit_trail": audit_trail, "status": "running"}

    def characterize(state: CalibrationState) -> CalibrationState:
        report = state["device"].insertion_loss_report()
        state["audit_trail"].log_step("Characterize", "Success",
                                      f"Average insertion loss {report.average_before_pigtail_db:.3f} dB before "
                                      f"and {report.average_db:.3f} dB after pigtailing.")
        return {**state, "insertion_loss_db": report.average_db}

    def route(state: CalibrationState) -> CalibrationState:
        config, device = state["config"], state["device"]
        try:
            result = optimize_routing(device, config.input_port, config.output_port_for(device.n_modes),
                                      n_samples=config.scan_samples, max_passes=config.routing_passes,
                                      audit=state["audit_trail"])
        except TwinError as e:
            return {**state, "error": e}
        p2pi_init = {h: fit.p2pi for h, fit in result.fits.items()}
        state["audit_trail"].log_step("Routing", "Success",
                                      f"Extinction {result.extinction_db:.2f} dB after {result.passes} passes, "
                                      f"{len(p2pi_init)} fringe periods measured.")
        return {**state, "p2pi_init": p2pi_init}

    def acquire(state: CalibrationState) -> CalibrationState:
        config = state["config"]
        try:
            records = generate_training_set(state["device"], config.train_count,
                                            (config.power_min_mw, config.power_max_mw), config.seed)
        except TwinError as e:
            return {**state, "error": e}
        state["audit_trail"].log_step("Acquisition", "Success", f"{len(records)} amplitude matrices measured.")
        return {**state, "records": records}

    def fit(state: CalibrationState) -> CalibrationState:
        config = state["config"]
        try:
            model = fit_model(state["device"].layout, state["records"], config.fit_hyperparameters(),
                              p2pi_init=state.get("p2pi_init"), audit=state["audit_trail"])
        except TwinError as e:
            return {**state, "error": e}
        state["audit_trail"].log_step("Fit", "Success",
                                      f"{model.metadata['iterations']} iterations, "
                                      f"stop reason '{model.metadata['stop_reason']}'.")
        return {**state, "model": model}

    def validate(state: CalibrationState) -> CalibrationState:
        model, config = state["model"], state["config"]
        rms = model.metadata.get("validation_rms")
        if rms is None:
            state["audit_trail"].log_step("Validation", "Skipped", "No held-out records.")
        elif rms > config.validation_rms_limit:
            details = f"Held-out amplitude RMS {rms:.3e} exceeds the {config.validation_rms_limit:.3e} limit."
            state["audit_trail"].highlight_anomaly("Validation", details)
            state["audit_trail"].log_step("Validation", "Anomaly", details)
        else:
            state["audit_trail"].log_step("Validation", "Success", f"Held-out amplitude RMS {rms:.3e}.")
        return {**state, "status": "completed"}

    def failure(state: CalibrationState) -> CalibrationState:
        error = state["error"]
        state["audit_trail"].log_step("Calibration", "failed", f"{type(error).__name__}: {error}")
        return {**state, "status": "failed"}

    def route_on_error(next_node: str):
        return lambda state: "failure" if state.get("error") is not None else next_node

    workflow = StateGraph(CalibrationState)
    workflow.add_node("start", start_calibration)
    workflow.add_node("characterize", characterize)
    workflow.add_node("route", route)
    workflow.add_node("acquire", acquire)
    workflow.add_node("fit", fit)
    workflow.add_node("validate", validate)
    workflow.add_node("failure", failure)
    workflow.set_entry_point("start")
    workflow.add_edge("start", "characterize")
    workflow.add_edge("characterize", "route")
    workflow.add_conditional_edges("route", route_on_error("acquire"))
    workflow.add_conditional_edges("acquire", route_on_error("fit"))
    workflow.add_conditional_edges("fit", route_on_error("validate"))
    workflow.add_edge("validate", END)
    workflow.add_edge("failure", END)
    return workflow.compile()


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _output_path(config: RunConfig, name: str) -> Path:
    directory = Path(config.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory / name


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format="%.12g")
    print(f"INFO: Wrote {path}")
    return path


def _stamp(layout_hash: str, document: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "layout_hash": layout_hash, **document}


def cmd_synth(config: RunConfig):
    truth = synth_device(config.n_modes, config.seed, config.imperfection_config())
    write_json(config.device_path, device_document(truth))
    layout = truth.layout
    print(f"{layout.n_nodes} MZIs, {layout.n_couplers} couplers, {layout.n_heaters} heaters")


def cmd_characterize(config: RunConfig):
    device = load_processor(config.device_path, config.noise_seed, session="characterize")
    report = device.insertion_loss_report()
    _write_frame(report.to_frame(), _output_path(config, "insertion_loss.csv"))
    static = device.static_transformation()
    frame = pd.DataFrame(static, columns=[f"input_{k}" for k in range(device.n_modes)])
    frame.insert(0, "output_port", np.arange(device.n_modes))
    _write_frame(frame, _output_path(config, "static_transformation.csv"))
    print(f"Average insertion loss: {report.average_before_pigtail_db:.2f} dB before pigtailing, "
          f"{report.average_db:.2f} dB after")


def cmd_fringe(config: RunConfig):
    device = load_processor(config.device_path, config.noise_seed, session="fringe")
    if not 0 <= config.heater < device.n_heaters:
        raise ValidationError(f"Heater {config.heater} outside 0..{device.n_heaters - 1}")
    grid = np.linspace(0.0, device.max_power, config.scan_samples)
    batch = np.zeros((config.scan_samples, device.n_heaters))
    batch[:, config.heater] = grid
    signal = device.port_powers(config.input_port, batch)[:, config.output_port_for(device.n_modes)]
    fit = fit_fringe(FringeScan(config.heater, grid, signal, device.max_power))
    _write_frame(pd.DataFrame({"power_mw": grid, "intensity": signal}), _output_path(config, "fringe_scan.csv"))
    write_json(_output_path(config, "fringe_fit.json"), _stamp(device.layout.layout_hash(), fit.to_json()))
    print(f"Heater {fit.heater}: p2pi = {fit.p2pi:.3f} mW, visibility = {fit.visibility:.3f}")


def cmd_route(config: RunConfig):
    device = load_processor(config.device_path, config.noise_seed, session="route")
    result = optimize_routing(device, config.input_port, config.output_port_for(device.n_modes),
                              n_samples=config.scan_samples, max_passes=config.routing_passes)
    write_json(_output_path(config, "route.json"), _stamp(device.layout.layout_hash(), result.to_json()))
    print(f"Route {config.input_port} -> {config.output_port_for(device.n_modes)}: extinction ratio "
          f"{result.extinction_db:.2f} dB ({result.passes} passes, converged={result.converged})")


def cmd_stability(config: RunConfig):
    device = load_processor(config.device_path, config.noise_seed, session="stability")
    trace = stability_trace(device, config.heater, config.input_port, config.output_port_for(device.n_modes),
                            power_mw=config.stability_power_mw, hours=config.stability_hours,
                            interval_hours=config.stability_interval_hours, n_samples=config.scan_samples)
    _write_frame(trace.frame, _output_path(config, "stability.csv"))
    write_json(_output_path(config, "stability.json"), _stamp(device.layout.layout_hash(), trace.to_json()))
    print(f"Heater {trace.heater} at {trace.power_mw} mW: {trace.frame['phase_pi'].iloc[0]:.3f} pi, "
          f"drift {trace.drift_pct_per_hour:.5f} %/h")


def cmd_trainset(config: RunConfig):
    device = load_processor(config.device_path, config.noise_seed, session="trainset")
    records = generate_training_set(device, config.train_count, (config.power_min_mw, config.power_max_mw),
                                    config.seed)
    _write_frame(records_to_frame(records), _output_path(config, "trainset.csv"))


def cmd_calibrate(config: RunConfig):
    device = load_processor(config.device_path, config.noise_seed, session="calibrate")
    app = build_graph()
    print("\nStarting Calibration Workflow...")
    final_state = app.invoke({"config": config, "device": device})
    audit_trail = final_state["audit_trail"]
    write_json(_output_path(config, "fit_log.json"),
               _stamp(device.layout.layout_hash(),
                      {**audit_trail.to_dict(), "metadata": {"created_at": _timestamp()}}))
    _output_path(config, "fit_summary.txt").write_text(audit_trail.summary_report())
    if final_state.get("status") != "completed":
        raise final_state["error"]
    model = final_state["model"]
    save_model(config.model_path, model)
    counts = model.parameter_counts()
    print(f"Model: {counts['static_phases']} offsets, {counts['coupler_ratios']} ratios, "
          f"{counts['crosstalk']} crosstalk terms; validation RMS {model.metadata['validation_rms']}")


def cmd_program(config: RunConfig):
    public = read_device_public(config.device_path)
    model = load_model(config.model_path, expected_hash=public["layout_hash"])
    target = make_targets(config.targets, model.n_modes, 1, config.target_seed, config.targets_path)[0]
    plan = plan_unitary(model, target)
    write_json(_output_path(config, "program.json"),
               _stamp(model.layout_hash(),
                      {"powers_mw": plan.powers.tolist(), "total_power_mw": total_power(plan.powers),
                       "phase_residual_rad": plan.phase_residual}))
    print(f"Programmed target: total power {total_power(plan.powers):.1f} mW")


def cmd_evaluate(config: RunConfig):
    device = load_processor(config.device_path, config.noise_seed, session="evaluate")
    model = load_model(config.model_path, expected_hash=device.layout.layout_hash())
    targets = make_targets(config.targets, device.n_modes, config.target_count, config.target_seed,
                           config.targets_path)
    result = evaluate_campaign(model, device, targets)
    result.write_csv(_output_path(config, "campaign.csv"))
    summary = result.summary()
    write_json(_output_path(config, "campaign_summary.json"),
               _stamp(model.layout_hash(),
                      {**summary, "target_kind": config.targets, "metadata": {"created_at": _timestamp()}}))
    if summary["fidelity"]:
        print(f"Mean amplitude fidelity {summary['fidelity']['mean']:.5f} "
              f"(reference {summary['fidelity_reference']}) over {summary['targets']} targets")


COMMANDS = {"synth": cmd_synth, "characterize": cmd_characterize, "fringe": cmd_fringe, "route": cmd_route,
            "trainset": cmd_trainset, "calibrate": cmd_calibrate, "program": cmd_program,
            "evaluate": cmd_evaluate, "stability": cmd_stability}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="upp-twin-cli",
                                     description="Digital twin of a thermally tuned MZI-mesh photonic processor.")
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--output-dir", dest="output_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    def device_flag(p):
        p.add_argument("--device", dest="device_path", help="device JSON file")

    p = sub.add_parser("synth", help="create a simulated device")
    device_flag(p)
    p.add_argument("--modes", dest="n_modes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--coupler-delta", dest="coupler_delta", type=float, help="coupler imperfection (t = 0.5 +- delta)")
    p.add_argument("--crosstalk-eps", dest="crosstalk_eps", type=float, help="crosstalk scale relative to 2pi/46 mW")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, help="relative amplitude noise")
    p.add_argument("--input-loss-db", dest="input_loss_db", type=float, help="input facet loss (dB)")
    p.add_argument("--output-loss-db", dest="output_loss_db", type=float, help="output facet loss (dB)")
    p.add_argument("--pigtail-loss-db", dest="pigtail_loss_db", type=float, help="extra loss added by fibre pigtailing (dB)")
    p.add_argument("--max-power-mw", dest="max_power_mw", type=float, help="per-heater power limit (mW)")
    p.add_argument("--window", type=int, help="crosstalk neighbours per heater")
    p.add_argument("--drift", dest="drift_enabled", action="store_const", const=True,
                   help="enable the heater resistance drift clock")

    p = sub.add_parser("characterize", help="insertion loss and static transformation")
    device_flag(p)

    for name, text in (("fringe", "scan and fit one heater"), ("route", "optimize one input-output route")):
        p = sub.add_parser(name, help=text)
        device_flag(p)
        p.add_argument("--input-port", dest="input_port", type=int)
        p.add_argument("--output-port", dest="output_port", type=int)
        p.add_argument("--samples", dest="scan_samples", type=int, help="scan points over 0..max power")
        if name == "fringe":
            p.add_argument("--heater", type=int)

    p = sub.add_parser("stability", help="hold one heater and track its phase over time")
    device_flag(p)
    p.add_argument("--heater", type=int)
    p.add_argument("--input-port", dest="input_port", type=int)
    p.add_argument("--output-port", dest="output_port", type=int)
    p.add_argument("--samples", dest="scan_samples", type=int, help="fringe scan points per time step")
    p.add_argument("--power-mw", dest="stability_power_mw", type=float, help="held heater power (mW)")
    p.add_argument("--hours", dest="stability_hours", type=float)
    p.add_argument("--interval-hours", dest="stability_interval_hours", type=float)

    p = sub.add_parser("trainset", help="random-power measurement campaign (CSV)")
    device_flag(p)
    p.add_argument("--count", dest="train_count", type=int)
    p.add_argument("--power-min-mw", dest="power_min_mw", type=float)
    p.add_argument("--power-max-mw", dest="power_max_mw", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("calibrate", help="fringe scans, routing, training set and model fit")
    device_flag(p)
    p.add_argument("--model", dest="model_path", help="output model JSON")
    p.add_argument("--count", dest="train_count", type=int)
    p.add_argument("--power-max-mw", dest="power_max_mw", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--residual-mode", dest="residual_mode", choices=["amplitude", "intensity"])
    p.add_argument("--starts", dest="fit_starts", type=int, help="basin search starts before the full fit")
    p.add_argument("--validation-rms-limit", dest="validation_rms_limit", type=float,
                   help="held-out amplitude RMS above which the run is flagged")
    p.add_argument("--seed", type=int)

    for name, text in (("program", "powers for one target"), ("evaluate", "programming campaign")):
        p = sub.add_parser(name, help=text)
        device_flag(p)
        p.add_argument("--model", dest="model_path")
        p.add_argument("--targets", choices=["haar", "permutation", "phase-screen", "file"])
        p.add_argument("--targets-path", dest="targets_path")
        p.add_argument("--target-seed", dest="target_seed", type=int)
        if name == "evaluate":
            p.add_argument("--count", dest="target_count", type=int)
    return parser


def main(argv=None) -> int:
    """Main function for the command-line interface."""
    load_environment()
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        config = RunConfig.load(args.config) if args.config else RunConfig()
        config = config.with_overrides(**overrides)
        configure_logging(config.log_level)
        COMMANDS[args.command](config)
    except TwinError as e:
        print(f"ERROR: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
