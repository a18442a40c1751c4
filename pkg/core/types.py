"""
Domain types shared by all modules.

Images and gradient fields are wrapped numpy arrays of shape (height, width),
intensities on the [0, 1] scale. The BGGD parametrisation (p, phi, rho, m) is
converted here into the regulariser's representation (Lambda, theta, e1).
"""

import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from core.errors import DomainError

TWO_PI = 2.0 * math.pi


def _as_finite_grid(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DomainError(f"{name} must be a non-empty 2D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


class Image(BaseModel):
    """Single-channel intensity grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _check_data(cls, value):
        return _as_finite_grid(value, "Image data")

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "Image":
        """Build an image from row-major values of length width*height."""
        flat = np.asarray(values, dtype=np.float64).ravel()
        if width < 1 or height < 1 or flat.size != width * height:
            raise DomainError(
                f"Expected {width * height} values for a {width}x{height} image, got {flat.size}"
            )
        return cls(data=flat.reshape(height, width))


class GradientField(BaseModel):
    """Per-pixel horizontal/vertical derivative pair."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gx: np.ndarray
    gy: np.ndarray

    @field_validator("gx", "gy", mode="before")
    @classmethod
    def _check_channel(cls, value):
        return _as_finite_grid(value, "Gradient channel")

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.gx.shape != self.gy.shape:
            raise DomainError(f"Gradient channels differ in shape: {self.gx.shape} vs {self.gy.shape}")
        return self

    @property
    def width(self) -> int:
        return int(self.gx.shape[1])

    @property
    def height(self) -> int:
        return int(self.gx.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.gx.shape

    def vectors(self) -> np.ndarray:
        """Return the field as an (n, 2) array of gradient vectors, row-major."""
        return np.stack([self.gx.ravel(), self.gy.ravel()], axis=1)


class BggdParams(BaseModel):
    """Shape, orientation and scale of a bivariate generalised Gaussian."""

    model_config = ConfigDict(frozen=True)

    p: float
    phi: float
    rho: float
    m: float = 1.0

    @field_validator("p")
    @classmethod
    def _check_p(cls, value: float) -> float:
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"Shape exponent p must be positive, got {value}")
        return value

    @field_validator("phi")
    @classmethod
    def _wrap_phi(cls, value: float) -> float:
        if not math.isfinite(value):
            raise DomainError(f"Angle phi must be finite, got {value}")
        return value % TWO_PI

    @field_validator("rho")
    @classmethod
    def _check_rho(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise DomainError(f"Polar radius rho must lie in [0, 1), got {value}")
        return value

    @field_validator("m")
    @classmethod
    def _check_m(cls, value: float) -> float:
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"Scale m must be positive, got {value}")
        return value

    @property
    def weights(self) -> "AnisotropyWeights":
        return weights_from_polar(self.rho, self.phi)

    @property
    def sigma(self) -> np.ndarray:
        return sigma_from_polar(self.rho, self.phi)[0]

    @property
    def sigma_inv(self) -> np.ndarray:
        return sigma_from_polar(self.rho, self.phi)[1]

    @classmethod
    def from_geometry(cls, p: float, e1: float, theta: float, m: float = 1.0) -> "BggdParams":
        """Build parameters from the major eigenvalue and orientation."""
        rho, phi = polar_from_geometry(e1, theta)
        return cls(p=p, phi=phi, rho=rho, m=m)


class AnisotropyWeights(BaseModel):
    """Eigen-structure of the covariance and the weights of Lambda."""

    model_config = ConfigDict(frozen=True)

    e1: float
    e2: float
    lambda1: float
    lambda2: float
    theta: float

    @model_validator(mode="after")
    def _check_invariants(self):
        if not (self.e1 >= self.e2 > 0):
            raise DomainError(f"Eigenvalues must satisfy e1 >= e2 > 0, got ({self.e1}, {self.e2})")
        if abs(self.e1 + self.e2 - 2.0) > 1e-12:
            raise DomainError(f"Eigenvalues must sum to 2, got {self.e1 + self.e2}")
        if not 0.0 <= self.theta < math.pi:
            raise DomainError(f"Orientation must lie in [0, pi), got {self.theta}")
        return self


def orientation_from_phi(phi):
    """Orientation of the major eigenvector of Sigma(rho, phi), in [0, pi).

    The eigenvector of the eigenvalue 1 + rho is proportional to
    (sin(phi/2), cos(phi/2)); the two-argument arctangent avoids the 0/0 of the
    ratio form at phi = pi. Works element-wise on arrays.
    """
    half = 0.5 * np.asarray(phi, dtype=np.float64)
    theta = np.mod(np.arctan2(np.cos(half), np.sin(half)), math.pi)
    # mod can round up to pi exactly for tiny negative inputs
    theta = np.where(theta >= math.pi, 0.0, theta)
    if np.ndim(theta) == 0:
        return float(theta)
    return theta


def polar_from_geometry(e1, theta):
    """Inverse of (rho, phi) -> (e1, theta); element-wise on arrays."""
    rho = np.asarray(e1, dtype=np.float64) - 1.0
    phi = np.mod(math.pi - 2.0 * np.asarray(theta, dtype=np.float64), TWO_PI)
    if np.ndim(rho) == 0:
        return float(rho), float(phi)
    return rho, phi


def weights_from_polar(rho: float, phi: float) -> AnisotropyWeights:
    """Convert the ML parametrisation (rho, phi) into the regulariser weights.

    Args:
        rho: Polar radius in [0, 1)
        phi: Polar angle in radians

    Returns:
        AnisotropyWeights with e1 = 1 + rho, e2 = 1 - rho, lambda_k = 1/sqrt(e_k)

    Raises:
        DomainError: If rho lies outside [0, 1)
    """
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"Polar radius rho must lie in [0, 1), got {rho}")
    e1 = 1.0 + rho
    e2 = 1.0 - rho
    return AnisotropyWeights(
        e1=e1,
        e2=e2,
        lambda1=1.0 / math.sqrt(e1),
        lambda2=1.0 / math.sqrt(e2),
        theta=orientation_from_phi(phi),
    )


def sigma_from_polar(rho: float, phi: float) -> Tuple[np.ndarray, np.ndarray]:
    """Return the trace-2 covariance Sigma(rho, phi) and its inverse.

    Raises:
        DomainError: If rho lies outside [0, 1)
    """
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"Polar radius rho must lie in [0, 1), got {rho}")
    c = rho * math.cos(phi)
    s = rho * math.sin(phi)
    sigma = np.array([[1.0 - c, s], [s, 1.0 + c]])
    sigma_inv = np.array([[1.0 + c, -s], [-s, 1.0 - c]]) / (1.0 - rho * rho)
    return sigma, sigma_inv


def ellipse_geometry(weights: AnisotropyWeights) -> Tuple[float, float, float]:
    """Semi-axes and eccentricity of the BGGD level curves."""
    a = math.sqrt(weights.e1)
    b = math.sqrt(weights.e2)
    ecc = math.sqrt(max(weights.e1 - weights.e2, 0.0)) / a
    return a, b, ecc


def rotation_matrix(theta):
    """Modal matrix R_theta whose first row is the major eigenvector direction.

    With this convention R^T diag(e1, e2) R equals Sigma. Accepts a scalar or
    an array of angles; the result has shape theta.shape + (2, 2).
    """
    theta = np.asarray(theta, dtype=np.float64)
    c = np.cos(theta)
    s = np.sin(theta)
    return np.stack([np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)], axis=-2)


def regularizer_matrix(lambda1, lambda2, theta) -> np.ndarray:
    """A = R_theta^T Lambda^2 R_theta, element-wise over arrays of weights."""
    rot = rotation_matrix(theta)
    lam_sq = np.stack(
        [np.asarray(lambda1, dtype=np.float64) ** 2, np.asarray(lambda2, dtype=np.float64) ** 2],
        axis=-1,
    )
    return np.einsum("...ki,...k,...kj->...ij", rot, lam_sq, rot)


class ParamMaps(BaseModel):
    """Per-pixel BGGD parameters and the derived anisotropy weights."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    p: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    m: np.ndarray

    @field_validator("p", "phi", "rho", "m", mode="before")
    @classmethod
    def _check_grid(cls, value):
        return _as_finite_grid(value, "Parameter map")

    @model_validator(mode="after")
    def _check_invariants(self):
        shape = self.p.shape
        if any(arr.shape != shape for arr in (self.phi, self.rho, self.m)):
            raise DomainError("Parameter maps must share one shape")
        if np.any(self.p <= 0):
            raise DomainError("Parameter map p must be positive")
        if np.any(self.rho < 0) or np.any(self.rho >= 1):
            raise DomainError("Parameter map rho must lie in [0, 1)")
        if np.any(self.m <= 0):
            raise DomainError("Parameter map m must be positive")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return self.p.shape

    @property
    def e1(self) -> np.ndarray:
        return 1.0 + self.rho

    @property
    def e2(self) -> np.ndarray:
        return 1.0 - self.rho

    @property
    def lambda1(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.e1)

    @property
    def lambda2(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.e2)

    @property
    def theta(self) -> np.ndarray:
        return orientation_from_phi(self.phi)

    def regularizer_matrices(self) -> np.ndarray:
        """Per-pixel A_i = R^T Lambda^2 R as an (n, 2, 2) array, row-major."""
        a = regularizer_matrix(self.lambda1, self.lambda2, self.theta)
        return a.reshape(-1, 2, 2)

    def at(self, row: int, col: int) -> Tuple[BggdParams, AnisotropyWeights]:
        params = BggdParams(
            p=float(self.p[row, col]),
            phi=float(self.phi[row, col]),
            rho=float(self.rho[row, col]),
            m=float(self.m[row, col]),
        )
        return params, params.weights

    def isotropic(self) -> "ParamMaps":
        """Same exponents and scales with Lambda = I (rho forced to 0)."""
        return ParamMaps(p=self.p, phi=np.zeros_like(self.phi), rho=np.zeros_like(self.rho), m=self.m)

    @classmethod
    def uniform(
        cls,
        shape: Tuple[int, int],
        p: float = 1.0,
        rho: float = 0.0,
        phi: float = 0.0,
        m: float = 1.0,
    ) -> "ParamMaps":
        """Spatially constant maps, e.g. the TV baseline p = 1, Lambda = I."""
        return cls(
            p=np.full(shape, p),
            phi=np.full(shape, phi % TWO_PI),
            rho=np.full(shape, rho),
            m=np.full(shape, m),
        )

    @classmethod
    def from_geometry(
        cls,
        p: np.ndarray,
        e1: np.ndarray,
        theta: np.ndarray,
        m: Optional[np.ndarray] = None,
    ) -> "ParamMaps":
        """Build maps from the (p, e1, theta, m) grids stored on disk."""
        rho, phi = polar_from_geometry(e1, theta)
        rho = np.clip(rho, 0.0, None)
        if m is None:
            m = np.ones_like(np.asarray(p, dtype=np.float64))
        return cls(p=p, phi=phi, rho=rho, m=m)
