"""Unified graphic-layout generation toolkit.

Six layout subtasks (unconstrained, type-, type+size-, relationship-
conditioned generation, refinement and completion) share one token-sequence
format, one transformer, FSM-constrained decoding, and one metric suite.
"""
from .core import (
    Canvas,
    CategorySet,
    Element,
    Layout,
    QuantizedBox,
    dequantize,
    normalize_layout,
    quantize,
)
from .relations import RELATIONS, Relationship, relation_holds
from .vocab import (
    ConstraintSpec,
    Task,
    TokenSequence,
    Vocabulary,
    add_refinement_noise,
    decode_input,
    decode_layout,
    encode_input,
    encode_layout,
    extract_relationships,
    order_elements,
)
from .fsm import FeasibleSet, Fsm
from .model import ModelConfig, TransformerModel, coord_embedding_similarity
from .sampling import SampleResult, SamplerConfig, complete, generate, mask_logits, refine
from .training import MixingPlan, TrainingExample, TrainSchedule, train_multi, train_single
from .metrics import MetricReport, alignment, fid, miou, overlap, train_feature_net, violation_rate
from .data import DatasetManifest, ExampleOptions, build_examples, ingest, split, synthesize

__version__ = "0.1.0"
