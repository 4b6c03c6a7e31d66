"""Activity-level decomposition of application packages with on-demand installation."""

from .decomposer import (
    BaseBundle, DecompositionPlan, FeatureBundle, WhiteList, compute_base_bundle,
    compute_feature_bundle, decompose, pack_bundle, rewrite_launch_sites, saving_ratio,
    unpack_bundle,
)
from .errors import (
    ActivityInBase, ActivityNotFound, AlreadyInstalled, AppSplitError, InvalidParams,
    InvalidScript, InvalidSelection, LoadConflict, MalformedArchive, MalformedScript,
    MergeConflict, NoMatchingActivity, NoVisits, NonTermination, NotInstalled,
    SchemaViolation, StoreUnavailable, StubPoolExhausted, UnknownActivity, UnknownClass,
)
from .graphs import (
    activity_related_classes, build_atg, build_call_graph, build_refer, build_resource_graph,
    class_related_resources, classify_activity,
)
from .model import AppPackage, parse_package, serialize_package, total_size, validate_package
from .recovery import ReplayScript, execute_script, parse_script, recover, serialize_script
from .usage import feature_usage_ratio, select_base_activities, usage_entropy
from .vruntime import IntentObj, VirtualDevice, resolve_intent

__version__ = "0.1.0"

__all__ = [
    "AppPackage", "parse_package", "serialize_package", "total_size", "validate_package",
    "activity_related_classes", "build_atg", "build_call_graph", "build_refer",
    "build_resource_graph", "class_related_resources", "classify_activity",
    "BaseBundle", "DecompositionPlan", "FeatureBundle", "WhiteList", "compute_base_bundle",
    "compute_feature_bundle", "decompose", "pack_bundle", "rewrite_launch_sites",
    "saving_ratio", "unpack_bundle",
    "ReplayScript", "execute_script", "parse_script", "recover", "serialize_script",
    "feature_usage_ratio", "select_base_activities", "usage_entropy",
    "IntentObj", "VirtualDevice", "resolve_intent",
    "ActivityInBase", "ActivityNotFound", "AlreadyInstalled", "AppSplitError",
    "InvalidParams", "InvalidScript", "InvalidSelection", "LoadConflict",
    "MalformedArchive", "MalformedScript", "MergeConflict", "NoMatchingActivity",
    "NoVisits", "NonTermination", "NotInstalled", "SchemaViolation", "StoreUnavailable",
    "StubPoolExhausted", "UnknownActivity", "UnknownClass",
]
