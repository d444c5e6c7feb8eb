"""Exception types shared across the package."""


class DoseguideError(Exception):
    """Base class for all package errors."""


class CohortValidationError(DoseguideError):
    """A cohort file failed validation; carries row/column context."""

    def __init__(self, message, row=None, column=None, patient_id=None):
        self.row = row
        self.column = column
        self.patient_id = patient_id
        parts = [message]
        if patient_id is not None:
            parts.append(f"patient={patient_id!r}")
        if row is not None:
            parts.append(f"row={row}")
        if column is not None:
            parts.append(f"column={column!r}")
        super().__init__(" ".join(parts))


class FactorizationError(DoseguideError):
    """Cholesky factorization failed; carries the failing pivot index."""

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix not positive definite at pivot {pivot}")


class ConvergenceError(DoseguideError):
    """An iterative fit did not converge; carries the final gradient norm."""

    def __init__(self, gradient_norm, iterations):
        self.gradient_norm = gradient_norm
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(gradient norm {gradient_norm:.3e})"
        )


class InsufficientDataError(DoseguideError):
    """Not enough qualifying samples to fit a model."""


class ArtifactError(DoseguideError):
    """Base class for serialization errors."""


class ArtifactVersionError(ArtifactError):
    """Artifact format version does not match this implementation."""

    def __init__(self, found, supported):
        self.found = found
        self.supported = supported
        super().__init__(f"artifact format version {found} not supported "
                         f"(this build reads version {supported})")


class ArtifactDigestError(ArtifactError):
    """Artifact content digest does not match its payload."""

    def __init__(self, stated, computed):
        self.stated = stated
        self.computed = computed
        super().__init__("artifact digest mismatch: "
                         f"stated {stated[:12]}…, computed {computed[:12]}…")


class ArtifactTruncatedError(ArtifactError):
    """Artifact stream is truncated or not parseable."""
