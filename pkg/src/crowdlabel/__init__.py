"""Crowdsourced relation re-labeling: planning, annotation workflow, analytics."""

from crowdlabel.data import Dataset, Instance, load_dataset
from crowdlabel.taxonomy import NO_RELATION, WRONG_TYPE, Taxonomy, load_taxonomy

__version__ = "1.0.0"

__all__ = [
    "Dataset",
    "Instance",
    "load_dataset",
    "NO_RELATION",
    "WRONG_TYPE",
    "Taxonomy",
    "load_taxonomy",
    "__version__",
]
