"""Model families implementing the latent-variable contract."""

from .base import LatentModel
from .car import CAR_VARIANTS, CarModel, CarPriors, CarStructure, car_conditional, car_log_joint_prior
from .mixture import MixtureModel, MixturePriors, mixture_simulate
from .seeds import SeedsModel, SeedsPriors
from .toys import EnumToy, NormalMeanToy

__all__ = [
    "LatentModel",
    "MixtureModel",
    "MixturePriors",
    "mixture_simulate",
    "CarModel",
    "CarPriors",
    "CarStructure",
    "car_conditional",
    "car_log_joint_prior",
    "CAR_VARIANTS",
    "SeedsModel",
    "SeedsPriors",
    "EnumToy",
    "NormalMeanToy",
]
