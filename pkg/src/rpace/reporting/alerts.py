from __future__ import annotations

from pathlib import Path

from rpace.core.errors import RpaceError
from rpace.reporting.md import Section, bullets, write_report

NEXT_STEPS = {
    "ingest": "Check the CSV header and the rows listed above; use --project-on-ingest for rounding noise.",
    "bandwidth": "Supply --h-mean explicitly or widen the time coverage of the data.",
    "mean": "Increase --h-mean; non-convergence usually means too few observations per window.",
    "residuals": "An observation sits opposite the mean; inspect the listed subject.",
    "covariance": "Increase --h-cov; too few within-subject pairs near the listed grid points.",
    "scores": "Inspect the listed subject; the conditional covariance is ill-conditioned.",
    "study": "Lower the replicate count to reproduce the failing replicate, then refit it alone.",
}


def write_failure_report(out_dir: Path, command: str, exc: RpaceError) -> Path:
    stage_name = exc.stage or "unknown"
    details = [f"{type(exc).__name__}: {exc}"]
    offenders = getattr(exc, "offenders", None) or getattr(exc, "failures", None)
    if offenders:
        details += [f"offender: {o}" for o in list(offenders)[:20]]
    return write_report(
        out_dir,
        "FAILED.md",
        f"{command} failed at stage {stage_name}",
        [
            Section("Reason", bullets(details)),
            Section("Next step", NEXT_STEPS.get(stage_name, "Re-run with --verbose for stage logs.")),
        ],
    )
