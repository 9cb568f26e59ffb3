"""Synthetic impression generation, treatments, metrics, and scenarios."""

from .config import SimConfig, config_from_dict, config_to_dict, load_sim_config, save_sim_config
from .generate import Catalog, Epoch, build_catalog, generate_epoch, page_subcat_of
from .metrics import (
    DiversityRow,
    GroupDiversity,
    MeanStat,
    diversity_metrics,
    significance_marker,
    two_sample_z,
)
from .scenarios import (
    SCENARIOS,
    ArmReport,
    ExperimentReport,
    render_report_text,
    report_to_dict,
    report_to_json,
    run_experiment_suite,
    subcat_revenue_csv,
)
from .treatments import ArmStats, Treatment, realize_clicks, run_treatment

__all__ = [
    "ArmReport",
    "ArmStats",
    "Catalog",
    "DiversityRow",
    "Epoch",
    "ExperimentReport",
    "GroupDiversity",
    "MeanStat",
    "SCENARIOS",
    "SimConfig",
    "Treatment",
    "build_catalog",
    "config_from_dict",
    "config_to_dict",
    "diversity_metrics",
    "generate_epoch",
    "load_sim_config",
    "page_subcat_of",
    "realize_clicks",
    "render_report_text",
    "report_to_dict",
    "report_to_json",
    "run_experiment_suite",
    "run_treatment",
    "save_sim_config",
    "significance_marker",
    "subcat_revenue_csv",
    "two_sample_z",
]
