"""Probability measures on uniform grids, with an explicit point mass at zero.

Every message the decoder passes around is a mixture of a Dirac spike at
zero and a continuous part.  Both components are stored as finite *masses*
(bin integrals, not density heights): normalization is plain summation, the
spike is a first-class number instead of a tall bin, and linear convolution
of mass vectors is exactly the mass vector of the convolved measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtr

# A single zeroed-out bin must not annihilate a whole product; continuous
# factors are clamped to this value before multiplying.
MASS_FLOOR = 1e-12

# Below this total a message carries no usable information.
TOTAL_FLOOR = 1e-300


class DegenerateMessageError(ValueError):
    """A message lost essentially all of its probability mass."""


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric grid over [-half_range, +half_range].

    The point count is odd so that index (points - 1) // 2 sits exactly at
    zero.  A single-point grid (half_range 0) represents a one-bin unit mass
    and acts as the convolution identity; its spacing is reported as 0 and
    treated as compatible with any other grid.
    """

    half_range: float
    points: int

    def __post_init__(self):
        if self.points < 1 or self.points % 2 == 0:
            raise ValueError(f"points must be odd and >= 1, got {self.points}")
        if self.points == 1:
            if self.half_range != 0.0:
                raise ValueError("a single-point grid must have half_range 0")
        elif self.half_range <= 0.0:
            raise ValueError(f"half_range must be > 0, got {self.half_range}")

    @property
    def spacing(self) -> float:
        if self.points == 1:
            return 0.0
        return 2.0 * self.half_range / (self.points - 1)

    @property
    def zero_index(self) -> int:
        return (self.points - 1) // 2

    def centers(self) -> np.ndarray:
        return np.linspace(-self.half_range, self.half_range, self.points)

    @staticmethod
    def from_spacing(spacing: float, points: int) -> "Grid":
        if points == 1:
            return Grid(0.0, 1)
        return Grid(spacing * (points - 1) / 2.0, points)


# Convolution identity: all mass in one bin at zero.
DIRAC_GRID = Grid(0.0, 1)


@dataclass(frozen=True)
class ContinuousDensity:
    """Per-bin masses of a (sub)probability measure on a grid."""

    grid: Grid
    mass: np.ndarray

    def __post_init__(self):
        if self.mass.shape != (self.grid.points,):
            raise ValueError("mass length does not match grid")

    def total(self) -> float:
        return float(self.mass.sum())


@dataclass(frozen=True)
class SpikedDensity:
    """Mixture of a point mass at zero and a continuous part.

    spike_weight is the mass of the atom; the continuous masses live in
    ``cont``.  A normalized instance satisfies spike_weight + cont.total() = 1.
    """

    spike_weight: float
    cont: ContinuousDensity

    def __post_init__(self):
        if self.spike_weight < 0.0:
            raise ValueError("spike weight must be >= 0")

    @property
    def grid(self) -> Grid:
        return self.cont.grid

    def total(self) -> float:
        return self.spike_weight + self.cont.total()


def _compatible_spacing(a: Grid, b: Grid) -> bool:
    if a.points == 1 or b.points == 1:
        return True
    return np.isclose(a.spacing, b.spacing, rtol=1e-9, atol=0.0)


def gaussian_on_grid(std: float, grid: Grid) -> ContinuousDensity:
    """Bin masses of a centered normal: CDF differences at the bin edges.

    A std much smaller than the bin width simply concentrates all mass in
    the zero bin; that is the intended behaviour, not an error.
    """
    if std <= 0.0:
        raise ValueError(f"std must be > 0, got {std}")
    if grid.points == 1:
        return ContinuousDensity(grid, np.ones(1))
    edges = np.linspace(
        -grid.half_range - grid.spacing / 2.0,
        grid.half_range + grid.spacing / 2.0,
        grid.points + 1,
    )
    cdf = ndtr(edges / std)
    mass = np.diff(cdf)
    return normalize(ContinuousDensity(grid, mass))


def normalize(d):
    """Scale spike and continuous masses by a common factor so they sum to 1."""
    if isinstance(d, SpikedDensity):
        total = d.total()
        if total <= TOTAL_FLOOR:
            raise DegenerateMessageError(f"total mass {total} below floor")
        return SpikedDensity(d.spike_weight / total, ContinuousDensity(d.grid, d.cont.mass / total))
    total = d.total()
    if total <= TOTAL_FLOOR:
        raise DegenerateMessageError(f"total mass {total} below floor")
    return ContinuousDensity(d.grid, d.mass / total)


def product_spiked(base: SpikedDensity, factors) -> SpikedDensity:
    """Pointwise product of a spiked density with continuous factors, normalized.

    The spike multiplies by each factor's raw zero-bin mass, the same value
    that scales the zero bin of the continuous part, so the spike/slab ratio
    depends only on the factors' shape and not on the bin width.  Factors are
    clamped to MASS_FLOOR first.
    """
    grid = base.grid
    spike = base.spike_weight
    cont = base.cont.mass.copy()
    z0 = grid.zero_index
    for f in factors:
        if f.grid != grid:
            raise ValueError("product requires identical grids")
        fm = np.maximum(f.mass, MASS_FLOOR)
        spike *= fm[z0]
        cont *= fm
    return normalize(SpikedDensity(spike, ContinuousDensity(grid, cont)))


def _linconv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Raw linear convolution of two mass vectors (length la + lb - 1)."""
    out = fftconvolve(a, b)
    return np.maximum(out, 0.0)


def _conv_grid(a: Grid, b: Grid) -> Grid:
    points = a.points + b.points - 1
    spacing = a.spacing if a.points > 1 else b.spacing
    return Grid.from_spacing(spacing, points)


def _embed(mass: np.ndarray, out_points: int) -> np.ndarray:
    """Center a mass vector in a longer one (zero padding both sides)."""
    out = np.zeros(out_points)
    off = (out_points - len(mass)) // 2
    out[off : off + len(mass)] = mass
    return out


def convolve(a: ContinuousDensity, b: ContinuousDensity) -> ContinuousDensity:
    """Linear convolution of two continuous densities, normalized.

    Half-ranges add; the spacing must match (a one-bin unit mass is the
    identity and is compatible with everything).
    """
    if not _compatible_spacing(a.grid, b.grid):
        raise ValueError("convolve requires equal grid spacing")
    grid = _conv_grid(a.grid, b.grid)
    return normalize(ContinuousDensity(grid, _linconv(a.mass, b.mass)))


def convolve_spiked(a: SpikedDensity, b):
    """Convolve a spiked density with a continuous or spiked one.

    The spike is the convolution identity, so its weight scales an unshifted
    copy of the other operand; only the continuous parts are actually
    convolved.  A spiked ``b`` yields a spiked result whose spike is the
    product of the two spike weights (both atoms sit at zero).
    """
    if not _compatible_spacing(a.grid, b.grid):
        raise ValueError("convolve requires equal grid spacing")
    if isinstance(b, SpikedDensity):
        grid = _conv_grid(a.grid, b.grid)
        cont = (
            a.spike_weight * _embed(b.cont.mass, grid.points)
            + b.spike_weight * _embed(a.cont.mass, grid.points)
            + _linconv(a.cont.mass, b.cont.mass)
        )
        return normalize(SpikedDensity(a.spike_weight * b.spike_weight, ContinuousDensity(grid, cont)))
    grid = _conv_grid(a.grid, b.grid)
    cont = a.spike_weight * _embed(b.mass, grid.points) + _linconv(a.cont.mass, b.mass)
    return normalize(ContinuousDensity(grid, cont))


def reflect(d: SpikedDensity) -> SpikedDensity:
    """Density of -x given the density of x; on a symmetric grid this is a
    reversal of the continuous masses, and the spike is untouched."""
    return SpikedDensity(d.spike_weight, ContinuousDensity(d.grid, d.cont.mass[::-1].copy()))


def _read_shifted(d: ContinuousDensity, observation: float, sign: int, out_grid: Grid) -> np.ndarray:
    """Raw linear-interpolation reads of d at observation - sign * x.

    Points outside d's support read as MASS_FLOOR; no normalization.
    """
    queries = observation - sign * out_grid.centers()
    if d.grid.points == 1:
        return np.full(out_grid.points, MASS_FLOOR)
    return np.interp(queries, d.grid.centers(), d.mass, left=MASS_FLOOR, right=MASS_FLOOR)


def evaluate_shifted(d: ContinuousDensity, observation: float, sign: int, out_grid: Grid) -> ContinuousDensity:
    """Turn a density over a sum into a likelihood over one term.

    Reads d at observation - sign * x for every x on out_grid (linear
    interpolation, out-of-range reads floored), then normalizes.
    """
    if not _compatible_spacing(d.grid, out_grid):
        raise ValueError("evaluate_shifted requires equal grid spacing")
    return normalize(ContinuousDensity(out_grid, _read_shifted(d, observation, sign, out_grid)))


def spike_and_slab_prior(q: float, slab_std: float, grid: Grid) -> SpikedDensity:
    """Mixture prior: weight q on a centered Gaussian slab, 1 - q on the spike."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"sparsity rate must be in [0, 1], got {q}")
    if q == 0.0:
        return SpikedDensity(1.0, ContinuousDensity(grid, np.zeros(grid.points)))
    slab = gaussian_on_grid(slab_std, grid)
    return SpikedDensity(1.0 - q, ContinuousDensity(grid, q * slab.mass))


def total_variation(a, b) -> float:
    """TV distance between two measures of the same type on the same grid."""
    if isinstance(a, SpikedDensity):
        return 0.5 * (abs(a.spike_weight - b.spike_weight) + np.abs(a.cont.mass - b.cont.mass).sum())
    return 0.5 * float(np.abs(a.mass - b.mass).sum())


def dump_density(d, fh) -> None:
    """Write `x mass` pairs (spike first, tagged with x=0) for plotting."""
    if isinstance(d, SpikedDensity):
        fh.write(f"spike {d.spike_weight:.12g}\n")
        d = d.cont
    for x, m in zip(d.grid.centers(), d.mass):
        fh.write(f"{x:.12g} {m:.12g}\n")
