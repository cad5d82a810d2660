from enum import StrEnum


UNIT: str = "unit"
TIME: str = "time"
TREATMENT: str = "treatment"
OUTCOME: str = "outcome"

DEFAULT_SEED: int = 20240601
DEFAULT_EPSILON: float = 0.01
DEFAULT_MIN_STRATUM: int = 25
DEFAULT_CV_FOLDS: int = 10
LAMBDA_GRID_SIZE: int = 20


class VariableKind(StrEnum):

    COVARIATE = "covariate"
    OUTCOME = "outcome"

    @classmethod
    def values(self) -> list[str]:
        return [str(item) for item in self]

    @classmethod
    def from_string(self, value: str) -> "VariableKind":
        for item in self:
            if item.value == value.lower():
                return item
        raise KeyError(value)


class LearnerKind(StrEnum):

    MEAN = "mean"
    LINEAR = "linear"
    RIDGE = "ridge"
    ELASTIC_NET = "elastic_net"
    LOGISTIC = "logistic"
    LOGISTIC_ELASTIC_NET = "logistic_elastic_net"
    TREE = "tree"
    BAGGED_TREES = "bagged_trees"
    SATURATED = "saturated"
    STACK = "stack"

    def is_penalized(self) -> bool:
        match self:
            case self.RIDGE | self.ELASTIC_NET | self.LOGISTIC_ELASTIC_NET:
                return True
            case _:
                return False

    @classmethod
    def values(self) -> list[str]:
        return [str(item) for item in self]

    @classmethod
    def from_string(self, value: str) -> "LearnerKind":
        for item in self:
            if item.value == value:
                return item
        raise KeyError(value)


class FeatureMapKind(StrEnum):

    IDENTITY = "identity"
    POLYNOMIAL = "polynomial"
    CUSTOM = "custom"

    @classmethod
    def values(self) -> list[str]:
        return [str(item) for item in self]

    @classmethod
    def from_string(self, value: str) -> "FeatureMapKind":
        for item in self:
            if item.value == value:
                return item
        raise KeyError(value)


class TransformKind(StrEnum):

    SIN = "sin"
    COS = "cos"
    SQUARE = "square"
    PRODUCT = "product"

    @classmethod
    def values(self) -> list[str]:
        return [str(item) for item in self]

    @classmethod
    def from_string(self, value: str) -> "TransformKind":
        for item in self:
            if item.value == value:
                return item
        raise KeyError(value)


class PredictionMode(StrEnum):

    REAL = "real"
    PROBABILITY = "probability"


class EstimatorLabel(StrEnum):

    TRUE = "true"
    GFAL = "gfal"
    QFAL = "qfal"
    BFAL = "bfal"
    SUPER = "super"

    @classmethod
    def values(self) -> list[str]:
        return [str(item) for item in self]

    @classmethod
    def from_string(self, value: str) -> "EstimatorLabel":
        for item in self:
            if item.value == value:
                return item
        raise KeyError(value)


class Subcommand(StrEnum):

    SIMULATE = "simulate"
    ESTIMATE = "estimate"
    BENCH = "bench"
    DIAGNOSE = "diagnose"

    @classmethod
    def values(self) -> list[str]:
        return [str(item) for item in self]

    @classmethod
    def from_string(self, value: str) -> "Subcommand":
        for item in self:
            if item.value == value:
                return item
        raise KeyError(value)
