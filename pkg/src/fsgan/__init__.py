"""Fault-signature synthesis for spectral domain adaptation.

Learns additive fault signatures in the Fourier domain from one machine's
faulty and healthy data, then transplants them onto another machine's healthy
spectra so a classifier can be trained for fault classes that machine has
never exhibited.
"""

from .blocks import (
    ArchitectureError,
    LayerSpec,
    Model,
    ModelSpec,
    build_aux_classifier,
    build_discriminator,
    build_eval_classifier,
    build_generator,
    build_model,
    build_triplet_encoder,
    input_gradient,
)
from .containers import ContainerError, load_arrays, save_arrays
from .experiments import (
    ExperimentSpec,
    LeakageError,
    ResultRow,
    ResultsTable,
    balanced_accuracy,
    residual_summary,
    run_experiment,
    run_openset_partial,
    run_partial,
    select_model_on_synthetic,
    train_eval_classifier,
)
from .gan import (
    GanBundle,
    GanConfig,
    TrainingDivergedError,
    compose_fake,
    critic_loss,
    early_stop_check,
    generator_loss,
    gradient_penalty,
    load_bundle,
    save_bundle,
    semi_hard_triplets,
    train,
    triplet_loss,
)
from .rig import DomainSpec, FaultClassSpec, PeakSpec, RigSpec, make_all, make_dataset
from .spectra import (
    DomainDataset,
    RawRecording,
    SampleSet,
    SpectrumSample,
    fft_magnitude,
    preprocess_case_study,
    split_train_test,
    window,
)
from .synthesis import (
    ClassNotCoveredError,
    FaultSignature,
    ScalingFactor,
    complete_label_space,
    generate_signatures,
    scaling_factor,
    synthesize_target_fault,
)
from .tensor import (
    SecondOrderUnsupportedError,
    ShapeError,
    TapeError,
    Tensor,
    gradients,
    no_grad,
)

__version__ = "0.1.0"

__all__ = [
    "ArchitectureError",
    "ClassNotCoveredError",
    "ContainerError",
    "DomainDataset",
    "DomainSpec",
    "ExperimentSpec",
    "FaultClassSpec",
    "FaultSignature",
    "GanBundle",
    "GanConfig",
    "LayerSpec",
    "LeakageError",
    "Model",
    "ModelSpec",
    "PeakSpec",
    "RawRecording",
    "ResultRow",
    "ResultsTable",
    "RigSpec",
    "SampleSet",
    "ScalingFactor",
    "SecondOrderUnsupportedError",
    "ShapeError",
    "SpectrumSample",
    "TapeError",
    "Tensor",
    "TrainingDivergedError",
    "balanced_accuracy",
    "build_aux_classifier",
    "build_discriminator",
    "build_eval_classifier",
    "build_generator",
    "build_model",
    "build_triplet_encoder",
    "complete_label_space",
    "compose_fake",
    "critic_loss",
    "early_stop_check",
    "fft_magnitude",
    "generate_signatures",
    "generator_loss",
    "gradient_penalty",
    "gradients",
    "input_gradient",
    "load_arrays",
    "load_bundle",
    "make_all",
    "make_dataset",
    "no_grad",
    "preprocess_case_study",
    "residual_summary",
    "run_experiment",
    "run_openset_partial",
    "run_partial",
    "save_arrays",
    "save_bundle",
    "scaling_factor",
    "select_model_on_synthetic",
    "semi_hard_triplets",
    "split_train_test",
    "synthesize_target_fault",
    "train",
    "train_eval_classifier",
    "triplet_loss",
    "window",
]
