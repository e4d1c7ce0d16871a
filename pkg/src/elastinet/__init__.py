"""elastinet: learn and audit anisotropic finite-strain stored-energy models.

The package is organised around six submodules:

``kinematics``
    Finite-strain tensor algebra: Voigt packing, strain measures, polar
    decomposition, rotation charts, and monoclinic crystal bases.
``data``
    Loading-path synthesis, a monoclinic ground-truth material, correlated
    measurement noise, series I/O, smoothing, and dataset assembly.
``network``
    The stored-energy network with analytic first and second derivatives,
    input normalisation, and model (de)serialisation.
``training``
    Derivative-matching losses, physics penalties (frame invariance and
    material symmetry), the Nadam optimiser, and train/transfer drivers.
``validation``
    Tangent extraction in three stress/strain pairings, strong-ellipticity
    and convexity audits, energy-growth classification, anisotropy indices,
    and pressure-resolved tangent tables.
``cli``
    The ``elastinet`` command-line interface with replayable run configs.

The most commonly used names are re-exported at the top level.
"""

from .data import (
    Dataset,
    GroundTruthModel,
    LoadingPath,
    NoiseModel,
    StressSeries,
    build_dataset,
    default_paths,
    filter_series,
    load_dataset,
    load_series,
    save_dataset,
    save_series,
    synthesize_stress,
)
from .errors import (
    ConfigError,
    DataError,
    ElastinetError,
    NumericalError,
)
from .kinematics import (
    CrystalBasis,
    green_strain,
    monoclinic_stiffness,
    polar_decompose,
)
from .network import (
    EnergyNet,
    ModelBundle,
    Normalizer,
    init_model,
    load_model,
    save_model,
)
from .training import (
    LossTrace,
    LossWeights,
    TrainConfig,
    analytic_model,
    constraint_metrics,
    train,
    transfer_train,
)
from .validation import (
    AnisotropyReport,
    ConvexityReport,
    EllipticityReport,
    GrowthReport,
    TangentTable,
    anisotropy_index,
    convexity_check,
    growth_test,
    strong_ellipticity_test,
    tangent_PF,
    tangent_sigma_eps,
    tangent_table,
)

__version__ = "0.1.0"

__all__ = [
    "AnisotropyReport",
    "ConfigError",
    "ConvexityReport",
    "CrystalBasis",
    "DataError",
    "Dataset",
    "ElastinetError",
    "EllipticityReport",
    "EnergyNet",
    "GroundTruthModel",
    "GrowthReport",
    "LoadingPath",
    "LossTrace",
    "LossWeights",
    "ModelBundle",
    "NoiseModel",
    "Normalizer",
    "NumericalError",
    "StressSeries",
    "TangentTable",
    "TrainConfig",
    "analytic_model",
    "anisotropy_index",
    "build_dataset",
    "constraint_metrics",
    "convexity_check",
    "default_paths",
    "filter_series",
    "green_strain",
    "growth_test",
    "init_model",
    "load_dataset",
    "load_model",
    "load_series",
    "monoclinic_stiffness",
    "polar_decompose",
    "save_dataset",
    "save_model",
    "save_series",
    "strong_ellipticity_test",
    "synthesize_stress",
    "tangent_PF",
    "tangent_sigma_eps",
    "tangent_table",
    "train",
    "transfer_train",
    "__version__",
]
