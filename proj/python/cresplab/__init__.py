from ._core import (
    Pomdp,
    cf_losses,
    cf_targets,
    discounted_inner,
    oracle_verify,
    random_pomdp,
    sample_omegas,
    train,
    validate_config,
)

__all__ = [
    "Pomdp",
    "cf_losses",
    "cf_targets",
    "discounted_inner",
    "oracle_verify",
    "random_pomdp",
    "sample_omegas",
    "train",
    "validate_config",
]
