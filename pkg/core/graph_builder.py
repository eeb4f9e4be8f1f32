from langgraph.graph import END, START, StateGraph

from core.nodes import (abort_node, after_lcr, after_stage, fit_lcr_node,
                        fit_pdf_node, normalize_node,
                        prepare_partial_report_node, prepare_report_node)
from core.state_models import FitState


workflow = StateGraph(FitState)

workflow.add_node("normalize", normalize_node)
workflow.add_node("fit_pdf", fit_pdf_node)
workflow.add_node("fit_lcr", fit_lcr_node)
workflow.add_node("prepare_report", prepare_report_node)
workflow.add_node("prepare_partial_report", prepare_partial_report_node)
workflow.add_node("abort", abort_node)


workflow.add_edge(START, "normalize")

workflow.add_conditional_edges(
    "normalize",
    after_stage,
    {"continue": "fit_pdf", "abort": "abort"},
)
workflow.add_conditional_edges(
    "fit_pdf",
    after_stage,
    {"continue": "fit_lcr", "abort": "abort"},
)
workflow.add_conditional_edges(
    "fit_lcr",
    after_lcr,
    {"complete": "prepare_report", "partial": "prepare_partial_report"},
)

workflow.add_edge("prepare_report", END)
workflow.add_edge("prepare_partial_report", END)
workflow.add_edge("abort", END)

fit_graph = workflow.compile()
