from .dataset import (
    PATCH_CELLS,
    PATCH_SIDE,
    Dataset,
    PatchSample,
    load_dataset,
    save_dataset,
    split,
    split_indices,
)
from .ingest import features_to_patch, ingest_domain_strings, ingest_tabular_csv, string_to_patch
from .synthetic import SyntheticSpec, class_means, generate_synthetic

__all__ = [
    "PATCH_CELLS",
    "PATCH_SIDE",
    "Dataset",
    "PatchSample",
    "SyntheticSpec",
    "class_means",
    "features_to_patch",
    "generate_synthetic",
    "ingest_domain_strings",
    "ingest_tabular_csv",
    "load_dataset",
    "save_dataset",
    "split",
    "split_indices",
    "string_to_patch",
]
