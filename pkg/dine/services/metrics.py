"""
Metrics for CI-test benchmarks and summaries of estimation benchmarks
"""

import logging
from typing import List, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import f1_score, roc_auc_score

from dine.core.exceptions import ContractError
from dine.schemas import CellSummary, MetricsSummary, RunRecord
from dine.services.citest import decide

logger = logging.getLogger(__name__)

CI_Z = 1.96


def compute_metrics(records: Sequence[RunRecord], alpha: float) -> MetricsSummary:
    """
    F1, AUC and error rates of labelled p-values. "dependent" is the positive
    class; the AUC score of a run is 1 - p_value.
    """
    labelled = [r for r in records if r.label is not None and r.p_value is not None]
    if not labelled:
        raise ContractError("compute_metrics needs records carrying a label and a p-value")

    truth = np.array([r.label == "dependent" for r in labelled], dtype=int)
    p_values = np.array([r.p_value for r in labelled], dtype=float)
    predicted = np.array([decide(p, alpha) == "dependent" for p in p_values], dtype=int)
    n_dependent = int(truth.sum())
    n_independent = len(truth) - n_dependent

    warnings = []
    auc = None
    if n_dependent and n_independent:
        auc = float(roc_auc_score(truth, 1.0 - p_values))
    else:
        warnings.append("AUC is undefined when only one label is present")
        logger.warning(f"Cell {labelled[0].cell}: {warnings[-1]}")

    type1 = float(predicted[truth == 0].mean()) if n_independent else None
    type2 = float(1 - predicted[truth == 1].mean()) if n_dependent else None
    first = labelled[0]
    return MetricsSummary(
        cell=first.cell, n=first.n, d=first.d, d_z=first.d_z, alpha=alpha,
        f1=float(f1_score(truth, predicted, pos_label=1, zero_division=0)),
        auc=auc,
        type1_rate=type1,
        type2_rate=type2,
        counts={"independent": n_independent, "dependent": n_dependent},
        warnings=warnings,
    )


def summarize_estimates(records: Sequence[RunRecord]) -> List[CellSummary]:
    """Per-cell mean with a mean +/- 1.96 * stderr interval"""
    if not records:
        return []
    frame = pd.DataFrame([r.model_dump() for r in records])
    summaries = []
    for cell, group in frame.groupby("cell", sort=True):
        runs = len(group)
        mean = float(group["estimate"].mean())
        stderr = float(group["estimate"].std(ddof=1) / np.sqrt(runs)) if runs > 1 else 0.0
        first = group.iloc[0]
        truth = float(first["ground_truth"])
        summaries.append(CellSummary(
            cell=int(cell), n=int(first["n"]), d=int(first["d"]), d_z=int(first["d_z"]),
            rho=float(first["rho"]), runs=runs, mean=mean, stderr=stderr,
            ci_low=mean - CI_Z * stderr, ci_high=mean + CI_Z * stderr,
            ground_truth=truth, bias=mean - truth,
        ))
    return summaries
