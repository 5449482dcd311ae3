"""Resilience auditing for voting decision-tree ensembles on IoT traffic.

The pipeline: train or load a hard-voting forest over per-flow packet and
byte counts, search for adversarial recipes (interval boxes that a
volumetric attack can steer an epoch into while keeping the victim's
predicted class and score), simulate launching those attacks against the
epoch-based inference loop, and patch the model's leaves with upper-bound
guards so the same attacks are detected.
"""

from .attacks import (AttackProfile, BUILTIN_PROFILES,
                      SSDP_RESPONSE_FRAME_BYTES, SYN_ACK_FRAME_BYTES,
                      TargetRules, attack_delta, build_target_rules,
                      classify_impact, load_profile, ssdp_reflection,
                      syn_reflection)
from .datasets import (BenignTraceModel, FlowProfile, build_corpus,
                       configured_maxima, default_trace_model,
                       generate_benign_trace, trace_to_dataset)
from .ensemble import (ClassThresholds, ThresholdError, VotingEnsemble,
                       compute_thresholds, flags_anomaly)
from .forest import VotingForestClassifier, train_forest
from .intervals import (DEFAULT_P_CAP, FULL, Interval, Provenance, RecipeBox,
                        boundary_consistent, box_consistent, box_from_json,
                        box_to_json, frame_size_consistent, merge,
                        min_injection, pair_consistent,
                        single_feature_consistent)
from .model_io import (ModelFormatError, load_dataset, load_model,
                       load_recipes, save_dataset, save_model, save_recipes)
from .patching import (ANOMALOUS_LABEL, LeafBounds, PatchError, PatchRecord,
                       additional_patch, analyze_leaf_bounds, audit_patched,
                       compute_class_maxima, compute_leaf_maxima,
                       essential_patch)
from .schema import (FeatureDescriptor, FeatureSchema, count_features_schema,
                     default_iot_schema)
from .search import (AdversarialPath, ProjectionError, SearchBudgetExceeded,
                     SearchStats, find_adv_path, find_recipe,
                     generate_recipes, project, sample_instances)
from .simulate import (EpochOutcome, FlowInjection, InjectionPlan,
                       NoFeasibleRecipe, SPOOF_METADATA, TelemetryEpoch,
                       TimingConfig, feasible_recipes, plan_injection,
                       run_episode, select_closest)
from .tree import (DecisionNode, Guard, Leaf, PathCondition, iter_paths,
                   map_leaves, route)

__version__ = "0.1.0"

__all__ = [
    "ANOMALOUS_LABEL", "AdversarialPath", "AttackProfile", "BUILTIN_PROFILES",
    "BenignTraceModel",
    "ClassThresholds", "DEFAULT_P_CAP", "DecisionNode", "EpochOutcome",
    "FULL", "FeatureDescriptor", "FeatureSchema", "FlowInjection",
    "FlowProfile", "Guard", "InjectionPlan", "Interval", "Leaf", "LeafBounds",
    "ModelFormatError", "NoFeasibleRecipe", "PatchError", "PatchRecord",
    "PathCondition", "Provenance", "ProjectionError", "RecipeBox",
    "SPOOF_METADATA", "SSDP_RESPONSE_FRAME_BYTES", "SYN_ACK_FRAME_BYTES",
    "SearchBudgetExceeded", "SearchStats", "TargetRules", "TelemetryEpoch",
    "ThresholdError", "TimingConfig", "VotingEnsemble",
    "VotingForestClassifier", "additional_patch", "analyze_leaf_bounds",
    "attack_delta", "audit_patched", "boundary_consistent", "box_consistent",
    "box_from_json", "box_to_json", "build_corpus", "build_target_rules",
    "classify_impact", "compute_class_maxima", "compute_leaf_maxima",
    "compute_thresholds", "configured_maxima", "count_features_schema",
    "default_iot_schema", "default_trace_model", "essential_patch",
    "feasible_recipes", "find_adv_path", "find_recipe", "flags_anomaly",
    "frame_size_consistent", "generate_benign_trace", "generate_recipes",
    "iter_paths", "load_dataset", "load_model", "load_profile",
    "load_recipes", "map_leaves", "merge", "min_injection", "pair_consistent",
    "plan_injection", "project", "route", "run_episode", "sample_instances",
    "save_dataset", "save_model", "save_recipes", "select_closest",
    "single_feature_consistent", "ssdp_reflection", "syn_reflection",
    "trace_to_dataset", "train_forest",
]
