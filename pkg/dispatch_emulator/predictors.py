# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.

from typing import Mapping, Optional, Type

from dispatch_emulator.demand import (
    DemandPredictor,
    PredictorSpec,
    ReplayOraclePredictor,
    ReplayPreviousPredictor,
    SyntheticPoissonPredictor,
    UnknownPredictorError,
)
from dispatch_emulator.plugin_helpers import entrypoint_style_load, is_entrypoint_reference

PREDICTORS: Mapping[str, Type[DemandPredictor]] = {
    ReplayPreviousPredictor.kind: ReplayPreviousPredictor,
    ReplayOraclePredictor.kind: ReplayOraclePredictor,
    SyntheticPoissonPredictor.kind: SyntheticPoissonPredictor,
}


def predictor_class(kind: str, relative=None) -> Type[DemandPredictor]:
    if kind in PREDICTORS:
        return PREDICTORS[kind]
    if is_entrypoint_reference(kind):
        try:
            clazz = list(entrypoint_style_load(kind, relative=relative))[0]
        except (ImportError, AttributeError, KeyError) as error:
            raise UnknownPredictorError(f"Cannot load predictor plugin {kind!r}: {error}") from error
        if not (isinstance(clazz, type) and issubclass(clazz, DemandPredictor)):
            raise UnknownPredictorError(f"{kind!r} is not a DemandPredictor subclass")
        return clazz
    raise UnknownPredictorError(
        f"Unknown predictor kind {kind!r}, expected one of {sorted(PREDICTORS)} or module:Class"
    )


def create_predictor(spec: PredictorSpec, relative=None) -> DemandPredictor:
    return predictor_class(spec.kind, relative)(spec.parameters)
