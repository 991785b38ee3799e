"""Dense complex matrices, unitarity checks and Haar-random sampling."""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr

from ..errors import ValidationError

RNG_ALGORITHM = "PCG64"
DEFAULT_UNITARITY_TOL = 1e-10


def make_rng(seed, stream: int | None = None) -> np.random.Generator:
    """Seeded PCG64 generator; `stream` derives an independent sub-stream of the same seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    if stream is None:
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


def _as_array(matrix) -> np.ndarray:
    if isinstance(matrix, ComplexMatrix):
        return matrix.data
    return np.asarray(matrix, dtype=complex)


@dataclass(frozen=True, eq=False)
class ComplexMatrix:
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"Expected a non-empty 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("Matrix entries must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def to_json(self) -> dict:
        flat = self.data.ravel()
        return {"rows": self.rows, "cols": self.cols,
                "re": flat.real.tolist(), "im": flat.imag.tolist()}

    @classmethod
    def from_json(cls, payload: dict, **kwargs):
        try:
            rows, cols = int(payload["rows"]), int(payload["cols"])
            re = np.asarray(payload["re"], dtype=float)
            im = np.asarray(payload["im"], dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed matrix document: {e}") from e
        if re.size != rows * cols or im.size != rows * cols:
            raise ValidationError("Matrix document entry count does not match rows*cols")
        return cls((re + 1j * im).reshape(rows, cols), **kwargs)


@dataclass(frozen=True, eq=False)
class Unitary(ComplexMatrix):
    tol: float = field(default=DEFAULT_UNITARITY_TOL)

    def __post_init__(self):
        super().__post_init__()
        if self.rows != self.cols:
            raise ValidationError(f"A unitary must be square, got {self.rows}x{self.cols}")
        defect = unitarity_defect(self.data)
        if defect > self.tol:
            raise ValidationError(f"Matrix is not unitary: defect {defect:.3e} > {self.tol:.1e}")

    @property
    def n_modes(self) -> int:
        return self.rows

    def amplitudes(self) -> np.ndarray:
        return np.abs(self.data)


def unitarity_defect(matrix) -> float:
    """Returns max |M^H M - I|."""
    m = _as_array(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"unitarity_defect needs a square matrix, got shape {m.shape}")
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def identity_unitary(n: int) -> Unitary:
    return Unitary(np.eye(n, dtype=complex))


def haar_random_unitary(n: int, seed) -> Unitary:
    """
    Haar-distributed n x n unitary: QR of a complex Ginibre matrix with the
    phases of diag(R) moved into Q.
    """
    if n < 1:
        raise ValidationError(f"Mode count must be >= 1, got {n}")
    rng = make_rng(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return Unitary(q)


def embed_two_mode(n: int, i: int, block) -> ComplexMatrix:
    """Identity on n modes except rows/cols (i, i+1), which carry the 2x2 `block`."""
    t = _as_array(block)
    if t.shape != (2, 2):
        raise ValidationError(f"Expected a 2x2 block, got shape {t.shape}")
    if not 0 <= i <= n - 2:
        raise ValidationError(f"Mode index {i} out of range for {n} modes")
    out = np.eye(n, dtype=complex)
    out[i:i + 2, i:i + 2] = t
    return ComplexMatrix(out)
