"""Hierarchical visual budgeting for video VLM inputs.

Stage one picks keyframes from candidate frames (importance scoring plus
adaptive temporal bucketing); stage two spends a token budget over those
keyframes (core tokens by attention, then per-frame diverse context tokens
via a batched MMR pass).
"""

from .errors import ConfigError, ConsistencyError, InputError, TriageError
from .frame_budget import (
    BucketPlan,
    FrameFeatureSet,
    FrameScoreTable,
    KeyframeSelection,
    ScoreWeights,
    bucket_allocate,
    frame_importance,
    motion_scores,
    normalize_component,
    relevance_scores,
    scene_change_scores,
    select_keyframes,
)
from .pipeline import CostProfile, PipelineConfig, run, run_pipeline
from .scenario import Scenario, load_scenario, write_scenario
from .synth import ScenarioSpec, evaluate_selection, generate
from .tensor_io import TensorBundle, read_bundle, write_bundle
from .token_budget import (
    BudgetConfig,
    TokenSelection,
    assemble_selection,
    batched_mmr,
    distribute_context_budget,
    run_token_budgeting,
    select_core,
    select_seeds,
    token_importance,
)

__version__ = "0.1.0"
