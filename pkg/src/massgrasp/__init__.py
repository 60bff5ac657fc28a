"""Target-mass grasping of granular food with uncertainty-aware point selection."""
from .config import ExperimentConfig, MaterialParams, TrainConfig, get_material
from .core import Dataset, GraspRecord, Patch, Tray, load_dataset, save_dataset, total_mass_g
from .errors import MassGraspError

__all__ = [
    "Dataset", "ExperimentConfig", "GraspRecord", "MassGraspError", "MaterialParams",
    "Patch", "TrainConfig", "Tray", "get_material", "load_dataset", "save_dataset",
    "total_mass_g",
]
__version__ = "0.1.0"
