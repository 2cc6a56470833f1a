"""Causal belief-revision sandbox.

A discrete-SCM environment with valid do-operations, an agent that keeps
its causal knowledge in an external weighted DAG revised by interventional
evidence, a failure-mode guard layer, saga-style physical transactions,
and quorum consensus across agent swarms.
"""

from .ctl import CtlEntry, CtlLog, required_samples
from .errors import ErmError
from .graph import (
    BeliefSet,
    CausalClaim,
    CausalGraph,
    EvidenceTables,
    belief_set,
    consistency_loss,
    enforce_dag,
    predict_do,
)
from .revision import (
    ErmConfig,
    LossBreakdown,
    check_agm_postulates,
    detect_aleatoric_success,
    epistemic_regret,
    erm_revise,
    total_loss,
)
from .scm import (
    Intervention,
    Scm,
    WorldState,
    detect_rung_collapse,
    exact_conditional,
    exact_do_distribution,
    sample_interventional,
    sample_observational,
)

__all__ = [
    "BeliefSet",
    "CausalClaim",
    "CausalGraph",
    "CtlEntry",
    "CtlLog",
    "ErmConfig",
    "ErmError",
    "EvidenceTables",
    "Intervention",
    "LossBreakdown",
    "Scm",
    "WorldState",
    "belief_set",
    "check_agm_postulates",
    "consistency_loss",
    "detect_aleatoric_success",
    "detect_rung_collapse",
    "enforce_dag",
    "epistemic_regret",
    "erm_revise",
    "exact_conditional",
    "exact_do_distribution",
    "predict_do",
    "required_samples",
    "sample_interventional",
    "sample_observational",
    "total_loss",
]

__version__ = "0.1.0"
