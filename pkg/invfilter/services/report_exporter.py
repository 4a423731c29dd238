# invfilter/services/report_exporter.py

import csv
import io
from pathlib import Path
from typing import List, Optional, Sequence, Union

from invfilter.models.schemas import (
    AgreementReport,
    ConvergenceReport,
    CplMonitorReport,
    InvarianceReport,
    RateFit,
    TrajectoryLog,
    ValidityReport,
)


def fmt(value: Optional[float]) -> str:
    """17 significant digits, enough to reproduce the double exactly"""
    if value is None:
        return ""
    return format(float(value), ".17g")


def _verdict(passed: bool) -> str:
    return "PASS" if passed else "FAIL"


def trajectory_header(log: TrajectoryLog) -> List[str]:
    n_values = len(log.records[0].values) if log.records else 0
    return (
        ["t"]
        + [f"x_{i + 1}" for i in range(log.state_dim)]
        + [f"u_{i + 1}" for i in range(log.control_dim)]
        + [f"{log.value_kind}_{i + 1}" for i in range(n_values)]
        + ["cpl", "tier", "min_residual"]
    )


def trajectory_csv(log: TrajectoryLog) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(trajectory_header(log))
    for record in log.records:
        writer.writerow(
            [fmt(record.t)]
            + [fmt(v) for v in record.x]
            + [fmt(v) for v in record.u]
            + [fmt(v) for v in record.values]
            + ["" if record.cpl is None else str(record.cpl), record.tier, fmt(record.min_residual)]
        )
    return buffer.getvalue()


def write_trajectory_csv(log: TrajectoryLog, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(trajectory_csv(log), encoding="utf-8")
    return path


def generate_run_report(
    log: TrajectoryLog,
    invariance: Optional[InvarianceReport] = None,
    convergence: Optional[ConvergenceReport] = None,
    cpl: Optional[CplMonitorReport] = None,
    fit: Optional[RateFit] = None,
    fit_note: str = "",
) -> str:
    """Plain-text run report: status, monitor verdicts, CPL events and the rate fit"""
    lines = [
        f"Scenario: {log.scenario_name}",
        f"Status: {log.status.value}",
        f"Records: {len(log.records)} (dt = {fmt(log.dt)})",
    ]
    if log.failure:
        lines.append(f"Failure: {log.failure}")
    if log.certificate:
        lines.append(f"Certificate: {', '.join(log.certificate)}")
    if log.gradient_warnings:
        lines.append(f"Boundary gradient warnings: {log.gradient_warnings}")

    label = "min h" if log.value_kind == "h" else "min b - V (initial level)"
    lines += ["", "== Monitors ==", f"{label}: {fmt(log.min_value)}"]

    if invariance is not None:
        lines.append(
            f"Invariance: {_verdict(invariance.passed)} (min margin {fmt(invariance.min_margin)}"
            f" at t = {fmt(invariance.worst_time)}, tol {fmt(invariance.tol)})"
        )
    if convergence is not None:
        entry = fmt(convergence.entry_time) if convergence.entry_time is not None else "never"
        lines.append(
            f"Convergence: {_verdict(convergence.passed)} (inside from t = {entry},"
            f" final margin {fmt(convergence.final_margin)}, tol {fmt(convergence.tol)})"
        )
    if cpl is not None:
        lines.append(
            f"Priority level: {_verdict(cpl.passed)} ({cpl.initial_level} -> {cpl.final_level} of {cpl.top_level},"
            f" {len(cpl.decreases)} decreases, continuous sat+inc: {'yes' if cpl.continuous_sat_inc else 'no'})"
        )
        lines += ["", "== Priority level events =="]
        events = sorted(cpl.increases + cpl.decreases, key=lambda e: e.step)
        if not events:
            lines.append("none")
        for event in events:
            kind = "increase" if event.to_level > event.from_level else "DECREASE"
            lines.append(f"t = {fmt(event.t)} (step {event.step}): {event.from_level} -> {event.to_level} {kind}")
        lines.append(f"Trace: {_compress(log.cpl_trace)}")

    lines += ["", "== Exponential fit of the smallest margin =="]
    if fit is None:
        lines.append(f"not fitted{': ' + fit_note if fit_note else ''}")
    elif not fit.decaying:
        lines.append(f"not decaying (slope {fmt(fit.slope)}, {fit.samples_used} samples)")
    else:
        lines.append(f"time constant {fmt(fit.time_constant)} (slope {fmt(fit.slope)}, {fit.samples_used} samples)")
    return "\n".join(lines) + "\n"


def _compress(trace: Sequence[int]) -> str:
    """1,1,2,2,3 -> 1->2->3"""
    levels: List[int] = []
    for level in trace:
        if not levels or levels[-1] != level:
            levels.append(level)
    return "->".join(str(level) for level in levels) if levels else "-"


def generate_agreement_report(report: AgreementReport, scenario_name: str = "") -> str:
    lines = [
        f"Scenario: {scenario_name}" if scenario_name else "Equivalence check",
        f"Mode: {report.mode.value}",
        f"Verdict: {_verdict(report.passed)}",
        f"Pairs checked: {report.pairs_checked}",
        f"Agreements: {report.agreements}",
        f"Boundary-ambiguous pairs: {report.boundary_pairs}",
        f"Disagreements: {len(report.disagreements)}",
        f"States outside C skipped (level 0): {report.asymmetric_states}",
        f"Max residual identity error: {fmt(report.max_identity_error)} (tol {fmt(report.identity_tol)})",
    ]
    for d in report.disagreements[:10]:
        lines.append(
            f"  x = {[fmt(v) for v in d.state]}, u = {[fmt(v) for v in d.control]}:"
            f" cbf residual {fmt(d.cbf_residual)}, sat slack {fmt(d.sat_slack)}"
        )
    if len(report.disagreements) > 10:
        lines.append(f"  ... {len(report.disagreements) - 10} more in disagreements.csv")
    return "\n".join(lines) + "\n"


def disagreements_csv(report: AgreementReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if not report.disagreements:
        writer.writerow(["state", "control", "cbf_residual", "sat_slack", "in_cbf", "in_sat"])
        return buffer.getvalue()
    n, m = report.disagreements[0].state.size, report.disagreements[0].control.size
    writer.writerow(
        [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)] + ["cbf_residual", "sat_slack", "in_cbf", "in_sat"]
    )
    for d in report.disagreements:
        writer.writerow(
            [fmt(v) for v in d.state]
            + [fmt(v) for v in d.control]
            + [fmt(d.cbf_residual), fmt(d.sat_slack), int(d.in_cbf), int(d.in_sat)]
        )
    return buffer.getvalue()


def generate_validity_report(label: str, report: ValidityReport) -> str:
    verdict = "VACUOUS PASS" if report.vacuous else _verdict(report.passed)
    lines = [f"{label}: {verdict} ({report.detail})"]
    if report.worst_state is not None:
        lines.append(
            f"  worst x = {[fmt(v) for v in report.worst_state]}, value {fmt(report.worst_value)},"
            f" threshold {fmt(report.threshold)}, {report.samples_checked} samples"
        )
    return "\n".join(lines)
