import logging

from core.errors import FadingError
from core.estimator import fit_lcr, fit_pdf, make_sample_set
from core.state_models import FitReport, FitState


logger = logging.getLogger(__name__)


def normalize_node(state: FitState) -> FitState:
    """Wraps the raw amplitudes into an rms-normalizable sample set."""
    logger.info("NODE: normalize_node - Checking input amplitudes")
    try:
        sample_set = make_sample_set(state["amplitudes"])
    except FadingError as e:
        logger.error(f"Input rejected: {e}")
        return {"error": e}
    logger.debug(f"{sample_set.amplitudes.size} samples, "
                 f"rms={sample_set.rms:.6g}")
    return {"sample_set": sample_set}


def fit_pdf_node(state: FitState) -> FitState:
    """Stage one: shape parameters from the amplitude histogram."""
    logger.info("NODE: fit_pdf_node - Fitting envelope PDF")
    try:
        result = fit_pdf(state["sample_set"])
    except FadingError as e:
        logger.error(f"PDF stage failed: {e}")
        return {"error": e}
    logger.info(f"PDF stage: kappa={result.params.kappa:.4g}, "
                f"mu={result.params.mu:.4g}, m={result.params.m:.4g}, "
                f"r_bar={result.params.r_bar:.4g}")
    return {
        "params_hat": result.params,
        "pdf_residual": result.residual,
        "n_bins": result.n_bins,
        "pdf_converged": result.converged,
    }


def fit_lcr_node(state: FitState) -> FitState:
    """Stage two: Doppler frequency and slope correlation from the LCR."""
    logger.info("NODE: fit_lcr_node - Fitting level crossing rate")
    try:
        result = fit_lcr(state["sample_set"], state["sample_rate_hz"],
                         state["params_hat"],
                         shadow_ratio=state.get("shadow_ratio", 1.0),
                         grid=state.get("grid_db"),
                         shadow_doppler_hz=state.get("shadow_doppler_hz"))
    except FadingError as e:
        logger.warning(f"LCR stage failed, reporting stage one only: {e}")
        return {"lcr_error": str(e)}
    logger.info(f"LCR stage: f_m={result.f_m_hat:.4g} Hz, "
                f"rho={result.rho_hat:.4g}")
    return {
        "f_m_hat": result.f_m_hat,
        "rho_hat": result.rho_hat,
        "lcr_residual": result.residual,
        "lcr_converged": result.converged,
    }


def _stage_one_fields(state: FitState) -> dict:
    p = state["params_hat"]
    return {
        "kappa_hat": p.kappa,
        "mu_hat": p.mu,
        "r_bar_hat": p.r_bar,
        "m_hat": p.m,
        "pdf_residual": state["pdf_residual"],
        "n_bins": state["n_bins"],
        "rms": state["sample_set"].rms,
    }


def prepare_report_node(state: FitState) -> FitState:
    logger.info("NODE: prepare_report_node - Both stages finished")
    report = FitReport(
        **_stage_one_fields(state),
        f_m_hat=state["f_m_hat"],
        rho_hat=state["rho_hat"],
        lcr_residual=state["lcr_residual"],
        converged={"pdf": state["pdf_converged"],
                   "lcr": state["lcr_converged"]},
    )
    return {"report": report}


def prepare_partial_report_node(state: FitState) -> FitState:
    logger.warning("NODE: prepare_partial_report_node - "
                   f"Stage two failed: {state['lcr_error']}")
    report = FitReport(
        **_stage_one_fields(state),
        converged={"pdf": state["pdf_converged"], "lcr": False},
    )
    return {"report": report}


def abort_node(state: FitState) -> FitState:
    logger.error(f"NODE: abort_node - Fit aborted: {state['error']}")
    return {"report": None}


def after_stage(state: FitState) -> str:
    """Router: stop as soon as a stage recorded an error."""
    if state.get("error") is not None:
        return "abort"
    return "continue"


def after_lcr(state: FitState) -> str:
    """Router: full report, or stage one only when stage two failed."""
    if state.get("lcr_error"):
        return "partial"
    return "complete"
