"""Tensor star-M products, the t-SVDM, and learned orthogonal transforms."""

from starm.tensor import (
    Transform,
    TransformKind,
    facewise_product,
    mode3_product,
    starm_product,
    starm_transpose,
)
from starm.transforms import (
    TransformSpec,
    make_data_dependent,
    make_dct,
    make_identity,
    make_random_orthogonal,
)
from starm.tsvdm import low_rank_approx, tsvdm

__all__ = [
    "Transform",
    "TransformKind",
    "TransformSpec",
    "facewise_product",
    "low_rank_approx",
    "make_data_dependent",
    "make_dct",
    "make_identity",
    "make_random_orthogonal",
    "mode3_product",
    "starm_product",
    "starm_transpose",
    "tsvdm",
]
