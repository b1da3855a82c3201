"""causalchef: causal action-structure learning and causally guided planning.

The package covers the full desk-scale pipeline for a two-agent kitchen MDP:
simulate macro-action episodes, collect trajectory buffers under scripted
behavior policies, fit a structural causal action model (per-action
generating networks plus a learned soft adjacency), distill it into a
pruned causal action matrix, and use that matrix to reweight or replace
candidate actions from a (possibly hallucinating) proposal source during
planning.  A closed-form ridge oracle provides an independent
structure-recovery route for validation.
"""

__version__ = "0.1.0"

from .buffer import Buffer, TimestepRecord, collect_buffer, load_buffer, relabel_movement, save_buffer
from .features import (
    FeatureSchema,
    active_indices,
    decode_state,
    encode_action,
    encode_state,
    schema_for_pots,
)
from .kitchen import (
    ACTIONS,
    KitchenLayout,
    KitchenState,
    MacroAction,
    StepOutcome,
    legal_actions,
    load_layout,
    reset,
    step,
)
from .matrix import (
    CausalActionMatrix,
    build_matrix,
    export_heatmap_triples,
    export_matrix,
    import_matrix,
    query_all_scores,
    query_score,
)
from .planner import (
    PlanDecision,
    PlannerConfig,
    Proposal,
    ProposalSet,
    backup_action,
    canonicalize,
    default_gamma,
    merge_redundant,
    plan,
    reweight,
    sample_action,
    softmax,
)
from .policies import PolicySpec, policy_act
from .proposers import (
    EndpointConfig,
    HallucinationProfile,
    ProposalLog,
    RemoteProposer,
    replay_propose,
    scripted_propose,
)
from .ridge import (
    RidgeFit,
    SyntheticScm,
    dataset_to_buffer,
    generate_synthetic,
    recover_structure,
    ridge_fit,
    structural_metrics,
)
from .sca import (
    ScaModel,
    TrainConfig,
    causal_loss,
    gate_graph,
    load_checkpoint,
    reg_loss,
    save_checkpoint,
    train,
)

__all__ = [
    "__version__",
    "ACTIONS",
    "Buffer",
    "CausalActionMatrix",
    "EndpointConfig",
    "FeatureSchema",
    "HallucinationProfile",
    "KitchenLayout",
    "KitchenState",
    "MacroAction",
    "PlanDecision",
    "PlannerConfig",
    "PolicySpec",
    "Proposal",
    "ProposalLog",
    "ProposalSet",
    "RemoteProposer",
    "RidgeFit",
    "ScaModel",
    "StepOutcome",
    "SyntheticScm",
    "TimestepRecord",
    "TrainConfig",
    "active_indices",
    "backup_action",
    "build_matrix",
    "canonicalize",
    "causal_loss",
    "collect_buffer",
    "dataset_to_buffer",
    "decode_state",
    "default_gamma",
    "encode_action",
    "encode_state",
    "export_heatmap_triples",
    "export_matrix",
    "gate_graph",
    "generate_synthetic",
    "import_matrix",
    "legal_actions",
    "load_buffer",
    "load_checkpoint",
    "load_layout",
    "merge_redundant",
    "plan",
    "policy_act",
    "query_all_scores",
    "query_score",
    "recover_structure",
    "reg_loss",
    "relabel_movement",
    "replay_propose",
    "reset",
    "reweight",
    "ridge_fit",
    "sample_action",
    "save_buffer",
    "save_checkpoint",
    "schema_for_pots",
    "scripted_propose",
    "softmax",
    "step",
    "structural_metrics",
    "train",
]
