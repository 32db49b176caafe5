"""Exception taxonomy. Every domain failure raises a subclass of GarmentGanError."""

from __future__ import annotations


class GarmentGanError(Exception):
    """Base class for all domain errors."""


# --- dataset / manifest ---------------------------------------------------


class MissingFile(GarmentGanError):
    pass


class SchemaViolation(GarmentGanError):
    def __init__(self, line: int, field: str, message: str = ""):
        self.line = line
        self.field = field
        super().__init__(f"line {line}, field '{field}': {message}" if message else f"line {line}, field '{field}'")


class LandmarkOutOfBounds(GarmentGanError):
    pass


class EmptyManifest(GarmentGanError):
    pass


class DegenerateSplit(GarmentGanError):
    pass


class BatchLargerThanDataset(GarmentGanError):
    pass


class UnwritableOutputDir(GarmentGanError):
    pass


# --- preprocessing --------------------------------------------------------


class MissingLandmark(GarmentGanError):
    pass


class MissingBackendWeights(GarmentGanError):
    pass


# --- networks / losses ----------------------------------------------------


class ShapeMismatch(GarmentGanError):
    pass


class ExtractorUnavailable(GarmentGanError):
    pass


# --- training -------------------------------------------------------------


class DataEmpty(GarmentGanError):
    pass


class SingleClassDataset(GarmentGanError):
    pass


class NonFiniteLoss(GarmentGanError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class StageMismatch(GarmentGanError):
    pass


class CorruptCheckpoint(GarmentGanError):
    pass


# --- evaluation -----------------------------------------------------------


class InsufficientClasses(GarmentGanError):
    pass


class ClassifierUnavailable(GarmentGanError):
    pass
