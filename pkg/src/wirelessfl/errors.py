"""Exception types raised across the package.

Each class matches one failure mode named in the module contracts so tests
can assert on the exact type rather than parse messages.
"""


class WirelessFlError(Exception):
    """Base class for all package errors."""


# -- learning ---------------------------------------------------------------

class EmptyBatch(WirelessFlError):
    """A gradient was requested over an empty mini-batch."""


class DegenerateData(WirelessFlError):
    """Dataset makes a derived quantity collapse (e.g. all-zero features)."""


class InvalidWeights(WirelessFlError):
    """Objective weights are not on the probability simplex."""


class NoConvergence(WirelessFlError):
    """An iterative oracle hit its iteration cap before reaching tolerance."""


# -- schemes ----------------------------------------------------------------

class DegenerateDesign(WirelessFlError):
    """A transmission design with zero effective post-scaler."""


class CorruptPayload(WirelessFlError):
    """A quantized payload failed validation on decode."""


class DegenerateRate(WirelessFlError):
    """A non-positive spectral efficiency where a positive one is required."""


# -- convex solver ----------------------------------------------------------

class Infeasible(WirelessFlError):
    """No strictly feasible point exists (phase-I certified)."""


class NumericalFailure(WirelessFlError):
    """Newton iteration stalled with the residual above tolerance."""


class DomainViolation(WirelessFlError):
    """A callback was evaluated outside the open domain of its log/exp terms."""


# -- design optimization ----------------------------------------------------

class BadInit(WirelessFlError):
    """An SCA starting point violates the constraints it must strictly satisfy."""


class RoundingInfeasible(WirelessFlError):
    """Integer bit recovery cannot be repaired to meet the latency budget."""


# -- harness ----------------------------------------------------------------

class NotIdx(WirelessFlError):
    """File does not start with a recognized IDX magic number."""


class CorruptIdx(WirelessFlError):
    """IDX header and payload disagree (dimensions or byte count)."""


class CountMismatch(WirelessFlError):
    """Image and label files describe different sample counts."""


class PartitionArityMismatch(WirelessFlError):
    """One-class-per-device partition requires device count == class count."""


class TooFewSamples(WirelessFlError):
    """Dataset lacks the requested per-class sample count."""


class ConfigError(WirelessFlError):
    """Experiment configuration is malformed or inconsistent."""
