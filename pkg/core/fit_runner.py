import logging
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np

from core.graph_builder import fit_graph
from core.state_models import EnvelopeTrace, FitOutcome


class FitRunner:
    """Runs the two-stage fitting graph over a sampled envelope."""

    terminal_nodes = ("prepare_report", "prepare_partial_report", "abort")

    def __init__(self):
        self.logger = logging.getLogger(self.__class__.__name__)

    def process_trace(
            self,
            trace: EnvelopeTrace,
            shadow_ratio: float = 1.0,
            grid: Optional[Sequence[float]] = None,
            progress_callback: Optional[Callable[[str], None]] = None,
            shadow_doppler_hz: Optional[float] = None
            ) -> FitOutcome:
        """
        Fit kappa, mu, m and r_bar, then f_m and rho, to a trace.

        Args:
            trace: Uniformly sampled envelope.
            shadow_ratio: Shadow-to-multipath Doppler ratio assumed by the
                crossing-rate model.
            grid: LCR thresholds in dB relative to the trace rms; the
                configured default grid when omitted.
            progress_callback: Called with a short message after each node.
            shadow_doppler_hz: Shadowing bandwidth in Hz; when given it
                replaces shadow_ratio and the ratio follows the fitted f_m.

        Returns:
            FitOutcome; lcr_error is set when only stage one succeeded.

        Raises:
            FadingError: the input was rejected or stage one failed.
        """
        self.logger.info(f"Fitting trace of {trace.samples.size} samples "
                         f"at {trace.sample_rate_hz} Hz")
        initial_state = {
            "amplitudes": trace.samples,
            "sample_rate_hz": trace.sample_rate_hz,
            "shadow_ratio": shadow_ratio,
            "shadow_doppler_hz": shadow_doppler_hz,
            "grid_db": None if grid is None else np.asarray(grid, dtype=float),
            "error": None,
            "lcr_error": None,
            "report": None,
        }

        final_state: Dict[str, Any] = dict(initial_state)
        for event in fit_graph.stream(initial_state):
            current_node = list(event.keys())[0]
            self.logger.debug(f"Finished node: {current_node}")
            final_state.update(event[current_node] or {})
            if progress_callback:
                progress_callback(f"{current_node} done")
            if current_node in self.terminal_nodes:
                break

        if final_state.get("error") is not None:
            raise final_state["error"]
        report = final_state.get("report")
        if report is None:
            raise RuntimeError("fit graph ended without a report")
        if final_state.get("lcr_error"):
            self.logger.warning("Returning a partial fit report")
        return FitOutcome(report=report, lcr_error=final_state.get("lcr_error"))
