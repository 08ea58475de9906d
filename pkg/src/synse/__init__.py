"""Zero-shot and generalized zero-shot action recognition over precomputed
visual features, via per-modality generative latent spaces aligned with
verb/noun language embeddings and a confidence-gated predictor."""

__version__ = "0.1.0"

from .alignment_trainer import (  # noqa: F401
    AlignedModel,
    AnnealSchedule,
    TrainConfig,
    anneal_coefficients,
    build_model,
    concat_pos_latents,
    cross_modal_loss,
    split_skeleton_latent,
    total_loss,
    train,
)
from .eval_metrics import MetricsReport, assemble_report, harmonic_mean, per_class_mean_accuracy  # noqa: F401
from .feature_store import (  # noqa: F401
    LabeledFeatureSet,
    SplitResult,
    SplitSpec,
    load_feature_set,
    partition,
    save_feature_set,
    validate_zero_shot,
)
from .generative_core import (  # noqa: F401
    GaussianLatent,
    VaePair,
    decode,
    encode,
    init_vae_pair,
    kl_to_standard_normal,
    multimodal_vae_loss,
    reparameterize,
    vae_loss,
)
from .gzsl_gate import (  # noqa: F401
    GateFeatures,
    GateModel,
    build_gate_features,
    gzsl_predict,
    temperature_scale,
    train_gate,
    tune_gate,
)
from .synth_bench import SynthSpec, generate, oracle_ceiling  # noqa: F401
from .text_pipeline import (  # noqa: F401
    ClassDescription,
    PosEmbeddingTable,
    WordVectorSource,
    build_embedding_table,
    fill_missing_pos,
)
from .zsl_head import (  # noqa: F401
    LatentSampleSet,
    SoftmaxClassifier,
    generate_unseen_latents,
    train_joint_classifier,
    train_softmax,
    zsl_predict,
)
