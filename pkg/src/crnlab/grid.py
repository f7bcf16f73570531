"""Cell-centered box grids with homogeneous Neumann boundaries.

Mirror (ghost-cell reflection) closure makes the orthonormal DCT-II the exact
eigenbasis of the discrete Laplacian, with eigenvalue magnitudes
``mu_k = sum_axes (2/h^2) (1 - cos(pi k / N))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft

NORM_KINDS = ("L2", "H2", "Linf")


@dataclass(frozen=True)
class BoxDomain:
    dim: int = 1
    lengths: tuple[float, ...] = (1.0,)
    cells: tuple[int, ...] = (64,)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        lengths = tuple(float(x) for x in self.lengths)
        cells = tuple(int(x) for x in self.cells)
        if len(lengths) == 1 and self.dim > 1:
            lengths = lengths * self.dim
        if len(cells) == 1 and self.dim > 1:
            cells = cells * self.dim
        if len(lengths) != self.dim or len(cells) != self.dim:
            raise ValueError(f"need {self.dim} lengths and cells, got {lengths} and {cells}")
        if not all(x > 0 for x in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if not all(n >= 1 for n in cells):
            raise ValueError(f"cells must be positive, got {cells}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def unit(cls, cells: int | Sequence[int] = 64, dim: int = 1) -> "BoxDomain":
        cells = (cells,) * dim if isinstance(cells, int) else tuple(cells)
        return cls(dim=dim, lengths=(1.0,) * dim, cells=cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    def centers(self) -> list[np.ndarray]:
        """Cell-center coordinates per axis."""
        return [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.centers(), indexing="ij")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Laplacian eigenvalue magnitudes ``mu`` on the mode grid."""
        mu = np.zeros(self.cells)
        for ax, (n, h) in enumerate(zip(self.cells, self.spacing)):
            mu_axis = (2.0 / h**2) * (1.0 - np.cos(np.pi * np.arange(n) / n))
            shape = [1] * self.dim
            shape[ax] = n
            mu = mu + mu_axis.reshape(shape)
        return mu

    def cosine_mode(self, k: Sequence[int]) -> np.ndarray:
        """``prod_axes cos(pi k x / L)`` sampled at cell centers."""
        k = self._check_mode(k)
        out = np.ones(self.cells)
        for ax, (kk, x, L) in enumerate(zip(k, self.centers(), self.lengths)):
            shape = [1] * self.dim
            shape[ax] = x.size
            out = out * np.cos(np.pi * kk * x / L).reshape(shape)
        return out

    def _check_mode(self, k) -> tuple[int, ...]:
        k = (int(k),) if np.isscalar(k) else tuple(int(x) for x in k)
        if len(k) != self.dim:
            raise ValueError(f"mode {k} has {len(k)} entries, domain is {self.dim}-dimensional")
        for kk, n in zip(k, self.cells):
            if not 0 <= kk < n:
                raise ValueError(f"mode {k} out of range for cells {self.cells}")
        return k

    # array-level kernels; leading axes (e.g. species) broadcast

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros_like(values, dtype=float)
        for ax, h in zip(self.axes, self.spacing):
            n = values.shape[ax]
            if n == 1:
                continue
            left = np.concatenate([np.take(values, [0], axis=ax), np.take(values, np.arange(n - 1), axis=ax)], axis=ax)
            right = np.concatenate([np.take(values, np.arange(1, n), axis=ax), np.take(values, [n - 1], axis=ax)], axis=ax)
            out += (left - 2.0 * values + right) / h**2
        return out

    def dct(self, values: np.ndarray) -> np.ndarray:
        return scipy.fft.dctn(values, type=2, norm="ortho", axes=self.axes)

    def idct(self, coeffs: np.ndarray) -> np.ndarray:
        return scipy.fft.idctn(coeffs, type=2, norm="ortho", axes=self.axes)

    def _spatial_sum(self, values: np.ndarray) -> np.ndarray:
        # flatten the spatial block so numpy's pairwise summation runs in a fixed order
        flat = np.ascontiguousarray(values).reshape(values.shape[: values.ndim - self.dim] + (-1,))
        return np.sum(flat, axis=-1)

    def mean(self, values: np.ndarray) -> np.ndarray:
        return self._spatial_sum(values) / self.n_cells

    def integral(self, values: np.ndarray) -> np.ndarray:
        return self._spatial_sum(values) * self.cell_volume

    def l2(self, values: np.ndarray) -> np.ndarray:
        return np.sqrt(self._spatial_sum(values * values) * self.cell_volume)

    def h2(self, values: np.ndarray) -> np.ndarray:
        c = self.dct(values) * (1.0 + self.eigenvalues)
        return np.sqrt(self._spatial_sum(c * c) * self.cell_volume)

    def linf(self, values: np.ndarray) -> np.ndarray:
        flat = np.abs(values).reshape(values.shape[: values.ndim - self.dim] + (-1,))
        return np.max(flat, axis=-1)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(self._spatial_sum(f * g) * self.cell_volume)


@dataclass(frozen=True)
class ScalarField:
    domain: BoxDomain
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.domain.n_cells:
            raise ValueError(f"field has {values.size} values, domain has {self.domain.n_cells} cells")
        values = values.reshape(self.domain.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, domain: BoxDomain, c: float) -> "ScalarField":
        return cls(domain, np.full(domain.shape, float(c)))

    @classmethod
    def mode(cls, domain: BoxDomain, k, amplitude: float = 1.0) -> "ScalarField":
        return cls(domain, amplitude * domain.cosine_mode(k))

    def mean(self) -> float:
        return float(self.domain.mean(self.values))


def laplacian_apply(f: ScalarField, diffusion: float = 1.0) -> ScalarField:
    """``diffusion * Delta_h f`` with the three-point stencil per axis and mirror closure."""
    if diffusion < 0:
        raise ValueError("diffusion must be nonnegative")
    return ScalarField(f.domain, diffusion * f.domain.laplacian(f.values))


def dct_forward(f: ScalarField) -> np.ndarray:
    return f.domain.dct(f.values)


def dct_inverse(domain: BoxDomain, coeffs: np.ndarray) -> ScalarField:
    return ScalarField(domain, domain.idct(np.asarray(coeffs, dtype=float).reshape(domain.shape)))


def laplacian_eigenvalue(domain: BoxDomain, mode) -> float:
    """Magnitude ``mu >= 0`` of the discrete Laplacian eigenvalue for ``mode``."""
    k = domain._check_mode(mode)
    return float(
        sum((2.0 / h**2) * (1.0 - np.cos(np.pi * kk / n)) for kk, n, h in zip(k, domain.cells, domain.spacing))
    )


def norm(f: ScalarField, kind: str = "L2") -> float:
    """Discrete ``L2``, spectral ``H2`` or ``Linf`` norm of a field.

    The H2 norm is ``sqrt(sum_k (1 + mu_k)^2 |f_k|^2)`` over orthonormal cosine
    coefficients, an equivalent H2 norm on the grid.
    """
    if kind == "L2":
        return float(f.domain.l2(f.values))
    if kind == "H2":
        return float(f.domain.h2(f.values))
    if kind == "Linf":
        return float(f.domain.linf(f.values))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
