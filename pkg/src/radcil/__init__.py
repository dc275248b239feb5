"""Exemplar-free class-incremental learning benchmark.

Three strategies over class-disjoint task streams: plain finetuning (the
catastrophic-forgetting lower bound), a frozen extractor with nearest-class-
mean classification, and rotation-augmented training with feature
distillation toward the frozen initial extractor. Everything is seeded and
reproducible; runs persist self-contained records.
"""

from .data import (
    Dataset,
    SyntheticSpec,
    TaskStream,
    TaskView,
    augment_rotation,
    generate_synthetic,
    load_dataset,
    rotate_image,
    save_dataset,
    split_tasks,
)
from .errors import (
    BenchError,
    ComparisonError,
    ConfigError,
    CorruptionError,
    DataError,
    FormatError,
    LabelError,
    MetricError,
    NormalizationError,
    ProtocolError,
    ShapeError,
    StateError,
)
from .evaluate import AccuracyMatrix, accuracy, evaluate_step, head_classify, nme_classify
from .harness import (
    ExperimentConfig,
    RunRecord,
    compare,
    load_run_records,
    parse_config,
    parse_protocol,
    report,
    run_experiment,
    run_one_seed,
    sweep_ablation,
    sweep_parameter,
)
from .metrics import (
    MetricsReport,
    avg_incremental_accuracy,
    build_report,
    forgetting,
    intransigence,
    step_accuracy,
)
from .model import (
    FrozenExtractor,
    IncrementalModel,
    PrototypeStore,
    append_head,
    compute_prototypes,
    freeze_snapshot,
    load_checkpoint,
    save_checkpoint,
)
from .nn import (
    SGD,
    FeatureExtractor,
    Head,
    HeadSet,
    backward,
    cosine_lr,
    cross_entropy,
    feature_kl,
    feature_l2,
    init_network,
    softmax,
)
from .seeding import rng_for
from .strategies import (
    EpochLog,
    FeatStarStrategy,
    FinetuneStrategy,
    RadStrategy,
    Strategy,
    TrainConfig,
    make_strategy,
    train_initial,
    train_reference,
    train_task_finetune,
    train_task_rad,
)

__version__ = "0.1.0"
