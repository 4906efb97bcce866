"""Binary linear discriminants sharing one fit/score interface."""

from ._base import (
    ClassifierError,
    LinearDiscriminant,
    LinearModel,
    TrainingSet,
    load_model,
    save_model,
    score,
)
from .blda import BLDA, fit_blda
from .lda import LDA, RLDA, SKLDA, fit_lda, fit_rlda, fit_sklda, ledoit_wolf_gamma
from .stda import STDA, fit_stda
from .swlda import SWLDA, fit_swlda

CLASSIFIERS = {
    "lda": LDA,
    "rlda": RLDA,
    "swlda": SWLDA,
    "blda": BLDA,
    "sklda": SKLDA,
    "stda": STDA,
}


def make_classifier(spec, **overrides):
    """Build an estimator from a name or a ``{"name": ..., **params}`` mapping."""
    if isinstance(spec, LinearDiscriminant):
        return spec.set_params(**overrides) if overrides else spec
    if isinstance(spec, str):
        name, params = spec, {}
    else:
        params = dict(spec)
        name = params.pop("name")
    try:
        cls = CLASSIFIERS[name.lower()]
    except KeyError:
        raise ClassifierError(
            f"unknown classifier {name!r}; choose from {', '.join(CLASSIFIERS)}"
        ) from None
    params.update(overrides)
    return cls(**params)


__all__ = [
    "BLDA", "CLASSIFIERS", "ClassifierError", "LDA", "LinearDiscriminant", "LinearModel",
    "RLDA", "SKLDA", "STDA", "SWLDA", "TrainingSet", "fit_blda", "fit_lda", "fit_rlda",
    "fit_sklda", "fit_stda", "fit_swlda", "ledoit_wolf_gamma", "load_model",
    "make_classifier", "save_model", "score",
]
