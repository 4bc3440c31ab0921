"""Belief propagation with density messages on the measurement factor graph.

Variables carry spike-and-slab beliefs over their value; factors constrain
noisy sums of signed variables.  A factor-to-variable update convolves the
incoming variable beliefs with the noise density and reads the result at the
observed measurement; a variable-to-factor update multiplies the prior with
the other incoming likelihoods.  The flooding schedule runs all factor
updates, then all variable updates, per iteration.

``factor_update`` / ``variable_update`` are the per-edge reference forms.
The decoder batches each iteration's factor updates through padded real
FFTs, grouping factors by degree: messages are wrapped so that x = 0 sits at
index 0, which turns the spike into a flat +w on the spectrum, and the
exclude-one convolutions become prefix/suffix products of spectra.  Both
paths compute the same messages and the tests hold them together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .density import (
    DIRAC_GRID,
    MASS_FLOOR,
    TOTAL_FLOOR,
    ContinuousDensity,
    DegenerateMessageError,
    Grid,
    SpikedDensity,
    _read_shifted,
    convolve_spiked,
    gaussian_on_grid,
    normalize,
    product_spiked,
    reflect,
)
from .model import Measurement, SparseBernoulliMatrix


@dataclass(frozen=True)
class BpConfig:
    """Decoder settings: iteration budget, damping, stop tolerance, grid shape.

    Undamped flooding occasionally flip-flops on short cycles instead of
    converging (the residual stays near 1 rather than decaying).  When the
    main pass ends with a residual at or above ``rescue_residual``, the
    decoder restarts once from the prior with ``rescue_damping`` for up to
    ``rescue_max_iters`` iterations; set rescue_max_iters=0 to disable.
    """

    max_iters: int = 10
    damping: float = 0.0
    convergence_tol: float = 1e-6
    grid_points: int = 513
    grid_sigmas: float = 4.0        # x-grid half range, in units of slab_std
    noise_tail_sigmas: float = 8.0  # noise-density half range, in units of noise_std
    rescue_residual: float = 1e-2
    rescue_damping: float = 0.3
    rescue_max_iters: int = 30

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")
        if not 0.0 <= self.rescue_damping < 1.0:
            raise ValueError("rescue_damping must be in [0, 1)")

    def grid(self, slab_std: float) -> Grid:
        return Grid(self.grid_sigmas * slab_std, self.grid_points)


@dataclass
class BpDiagnostics:
    iterations: int
    max_residual: float
    degenerate_count: int
    rescued: bool = False


class FactorGraph:
    """Bipartite adjacency between signal coordinates and measurements.

    Edges are numbered factor-major; per-edge arrays give the endpoint
    indices and the coupling sign.
    """

    def __init__(self, matrix: SparseBernoulliMatrix, meas: Measurement):
        if len(meas.z) != matrix.m:
            raise ValueError("measurement length does not match matrix rows")
        self.n = matrix.n
        self.m = matrix.m
        self.z = np.asarray(meas.z, dtype=float)
        self.noise_std = meas.noise_std
        edge_var, edge_factor, edge_sign = [], [], []
        factor_edges = []
        for j in range(matrix.m):
            ids = []
            for i, s in zip(matrix.row_cols[j], matrix.row_signs[j]):
                ids.append(len(edge_var))
                edge_var.append(int(i))
                edge_factor.append(j)
                edge_sign.append(int(s))
            factor_edges.append(np.asarray(ids, dtype=np.int64))
        self.edge_var = np.asarray(edge_var, dtype=np.int64)
        self.edge_factor = np.asarray(edge_factor, dtype=np.int64)
        self.edge_sign = np.asarray(edge_sign, dtype=np.int64)
        self.factor_edges = tuple(factor_edges)
        var_edges = [[] for _ in range(matrix.n)]
        for e, i in enumerate(self.edge_var):
            var_edges[i].append(e)
        self.var_edges = tuple(np.asarray(v, dtype=np.int64) for v in var_edges)
        self.num_edges = len(self.edge_var)

    def factor_degree(self, j: int) -> int:
        return len(self.factor_edges[j])


def build_graph(matrix: SparseBernoulliMatrix, meas: Measurement) -> FactorGraph:
    return FactorGraph(matrix, meas)


class MessageStore:
    """Per-edge messages, array-backed.

    a-messages (variable to factor) are spiked: ``a_spike[e]`` plus the row
    ``a_cont[e]`` on the x-grid.  b-messages (factor to variable) are purely
    continuous rows on the same grid.  Every stored row is normalized.
    """

    def __init__(self, grid: Grid, num_edges: int):
        self.grid = grid
        self.a_spike = np.zeros(num_edges)
        self.a_cont = np.zeros((num_edges, grid.points))
        self.b_cont = np.full((num_edges, grid.points), 1.0 / grid.points)

    def a_message(self, e: int) -> SpikedDensity:
        return SpikedDensity(float(self.a_spike[e]), ContinuousDensity(self.grid, self.a_cont[e].copy()))

    def b_message(self, e: int) -> ContinuousDensity:
        return ContinuousDensity(self.grid, self.b_cont[e].copy())

    def set_a(self, e: int, msg: SpikedDensity) -> None:
        self.a_spike[e] = msg.spike_weight
        self.a_cont[e] = msg.cont.mass

    def set_b(self, e: int, msg: ContinuousDensity) -> None:
        self.b_cont[e] = msg.mass


def init_messages(graph: FactorGraph, prior: SpikedDensity) -> MessageStore:
    """Every a-message starts at the prior (the empty-product update); the
    b-messages start uniform."""
    store = MessageStore(prior.grid, graph.num_edges)
    store.a_spike[:] = prior.spike_weight
    store.a_cont[:] = prior.cont.mass
    return store


def _noise_density(noise_std: float, spacing: float, tail_sigmas: float):
    """Noise term of the factor convolution: a Gaussian on its own grid, or
    an exact point mass when the channel is noiseless."""
    if noise_std == 0.0:
        return SpikedDensity(1.0, ContinuousDensity(DIRAC_GRID, np.zeros(1)))
    half_bins = max(1, math.ceil(tail_sigmas * noise_std / spacing))
    grid = Grid.from_spacing(spacing, 2 * half_bins + 1)
    return gaussian_on_grid(noise_std, grid)


def _scatter(raw: np.ndarray, grid: Grid, x: float, weight: float) -> None:
    """Deposit a point mass onto the two bins bracketing x (linear split)."""
    if weight <= 0.0:
        return
    pos = (x + grid.half_range) / grid.spacing
    i0 = math.floor(pos)
    frac = pos - i0
    if 0 <= i0 < grid.points:
        raw[i0] += weight * (1.0 - frac)
    if 0 <= i0 + 1 < grid.points and frac > 0.0:
        raw[i0 + 1] += weight * frac


def _evaluate_factor(acc, z_j: float, sign: int, out_grid: Grid) -> tuple[np.ndarray, bool]:
    """Read the accumulated sum density at z_j - sign * x; returns the raw
    likelihood row and whether it was degenerate (all floored)."""
    if isinstance(acc, SpikedDensity):
        if acc.cont.grid.points > 1:
            raw = _read_shifted(acc.cont, z_j, sign, out_grid)
        else:
            raw = np.full(out_grid.points, MASS_FLOOR)
        _scatter(raw, out_grid, sign * z_j, acc.spike_weight)
    else:
        raw = _read_shifted(acc, z_j, sign, out_grid)
    if raw.max() <= MASS_FLOOR:
        return np.ones(out_grid.points), True
    return raw, False


def factor_update(graph: FactorGraph, store: MessageStore, edge: int,
                  tail_sigmas: float = 8.0) -> ContinuousDensity:
    """Reference factor-to-variable update for one edge.

    Convolves the sign-adjusted incoming a-messages (all edges of the factor
    except this one) with the noise density, then reads the result at the
    observation.  Degenerate reads come back uniform.
    """
    j = int(graph.edge_factor[edge])
    grid = store.grid
    acc = _noise_density(graph.noise_std, grid.spacing, tail_sigmas)
    for e in graph.factor_edges[j]:
        if e == edge:
            continue
        a = store.a_message(int(e))
        if graph.edge_sign[e] < 0:
            a = reflect(a)
        acc = convolve_spiked(a, acc)
    raw, _ = _evaluate_factor(acc, float(graph.z[j]), int(graph.edge_sign[edge]), grid)
    return normalize(ContinuousDensity(grid, raw))


def variable_update(graph: FactorGraph, store: MessageStore, edge: int,
                    prior: SpikedDensity, damping: float = 0.0) -> SpikedDensity:
    """Reference variable-to-factor update for one edge: prior times the
    b-messages of the variable's other edges, optionally damped toward the
    previous message."""
    i = int(graph.edge_var[edge])
    factors = [store.b_message(int(e)) for e in graph.var_edges[i] if e != edge]
    try:
        new = product_spiked(prior, factors)
    except DegenerateMessageError:
        new = _prior_spike_fallback(prior)
    if damping > 0.0:
        old = store.a_message(edge)
        blended = SpikedDensity(
            (1.0 - damping) * new.spike_weight + damping * old.spike_weight,
            ContinuousDensity(new.grid, (1.0 - damping) * new.cont.mass + damping * old.cont.mass),
        )
        new = normalize(blended)
    return new


def _prior_spike_fallback(prior: SpikedDensity) -> SpikedDensity:
    """Replacement for a fully degenerate product: keep the prior's spike
    weight and spread the rest uniformly."""
    g = prior.grid
    w = prior.spike_weight
    return SpikedDensity(w, ContinuousDensity(g, np.full(g.points, (1.0 - w) / g.points)))


def _exclusive_products(slots: np.ndarray, base: np.ndarray | None = None) -> np.ndarray:
    """Per-slot products of all other slots along axis 1 (prefix * suffix),
    each seeded with ``base`` when given.  Explicit slot loop keeps the
    elementwise multiplies contiguous."""
    d = slots.shape[1]
    out = np.empty_like(slots)
    if base is None:
        out[:, 0] = 1.0
    else:
        out[:, 0] = base
    for t in range(1, d):
        np.multiply(out[:, t - 1], slots[:, t - 1], out=out[:, t])
    suffix = np.ones_like(slots[:, 0])
    for t in range(d - 1, 0, -1):
        out[:, t] *= suffix
        suffix *= slots[:, t]
    out[:, 0] *= suffix
    return out


@dataclass
class _FactorGroup:
    """All factors of one degree, batched for the FFT sweep."""

    degree: int
    edges: np.ndarray       # (factors, degree) edge ids
    flat: np.ndarray        # edges.ravel()
    fft_len: int
    half: int               # half-width in bins of the exclude-one support
    noise_spec: np.ndarray | None  # spectrum of the wrapped noise mass
    neg: np.ndarray | None = None  # which rows of the batch carry sign -1
    wrap_buf: np.ndarray | None = None  # (edges, fft_len) reusable input
    # fixed read geometry: z_j - sign * x never moves between iterations, so
    # the interpolation gathers (direct into the wrapped layout) are static
    read_lo: np.ndarray | None = None     # (edges, G) int gather indices
    read_hi: np.ndarray | None = None
    read_w_hi: np.ndarray | None = None   # interpolation weight of read_hi
    read_valid: np.ndarray | None = None  # in-range mask


@dataclass
class _VariableGroup:
    degree: int
    variables: np.ndarray
    edges: np.ndarray       # (variables, degree) edge ids
    flat: np.ndarray


class BeliefPropagationDecoder:
    """Flooding-schedule decoder over one problem instance.

    Owns a mutable message store; one instance per trial.  ``iterate`` runs
    one full factor-then-variable sweep and returns the largest total
    variation change over a-messages; ``run`` loops to the iteration budget
    or the convergence tolerance and returns the per-variable posteriors.
    """

    def __init__(self, matrix: SparseBernoulliMatrix, meas: Measurement,
                 prior: SpikedDensity, config: BpConfig = BpConfig()):
        self.graph = build_graph(matrix, meas)
        self.prior = prior
        self.config = config
        self.store = init_messages(self.graph, prior)
        self.degenerate_count = 0
        self.iterations = 0
        self.last_residual = math.inf
        grid = prior.grid
        self._grid = grid
        noise = _noise_density(self.graph.noise_std, grid.spacing, config.noise_tail_sigmas)
        self._noiseless = isinstance(noise, SpikedDensity)
        self._noise_mass = None if self._noiseless else noise.mass
        noise_points = 1 if self._noiseless else noise.grid.points
        self._noise_points = noise_points

        graph = self.graph
        # Likelihood read points z_j - sign * x, and the landing spot of the
        # noiseless point mass, are fixed per edge.
        self._queries = (graph.z[graph.edge_factor][:, None]
                         - graph.edge_sign[:, None] * grid.centers()[None, :])
        if grid.spacing > 0:
            self._scatter_pos = (graph.edge_sign * graph.z[graph.edge_factor]
                                 + grid.half_range) / grid.spacing
        else:
            self._scatter_pos = np.zeros(graph.num_edges)
        self._neg = graph.edge_sign < 0

        by_degree: dict[int, list[int]] = {}
        for j in range(graph.m):
            d = graph.factor_degree(j)
            if d > 0:
                by_degree.setdefault(d, []).append(j)
        self._fgroups = []
        for d in sorted(by_degree):
            edges = np.stack([graph.factor_edges[j] for j in by_degree[d]])
            flat = edges.ravel()
            support = (d - 1) * (grid.points - 1) + noise_points
            fft_len = next_fast_len(support)
            half = (support - 1) // 2
            noise_spec = None
            if not self._noiseless:
                noise_spec = rfft(_wrap_rows(self._noise_mass[None, :], fft_len), axis=1)[0]
            grp = _FactorGroup(d, edges, flat, fft_len, half, noise_spec)
            if d > 1:
                pos = self._queries[flat] / grid.spacing + half
                grp.read_valid = (pos >= 0.0) & (pos <= support - 1)
                lo = np.clip(np.floor(pos), 0, support - 2).astype(np.int64)
                grp.read_w_hi = pos - lo
                # interpolation endpoints, addressed directly in wrapped layout
                grp.read_lo = ((lo - half) % fft_len).astype(np.int64)
                grp.read_hi = ((lo + 1 - half) % fft_len).astype(np.int64)
                grp.neg = self._neg[flat]
                grp.wrap_buf = np.zeros((len(flat), fft_len))
            self._fgroups.append(grp)

        by_vdegree: dict[int, list[int]] = {}
        for i, edges in enumerate(graph.var_edges):
            if len(edges) > 0:
                by_vdegree.setdefault(len(edges), []).append(i)
        self._vgroups = []
        for d in sorted(by_vdegree):
            vids = np.asarray(by_vdegree[d], dtype=np.int64)
            edges = np.stack([graph.var_edges[i] for i in vids])
            self._vgroups.append(_VariableGroup(d, vids, edges, edges.ravel()))

    # -- factor side -------------------------------------------------------

    def _factor_sweep(self) -> None:
        store = self.store
        grid = self._grid
        G = grid.points
        spacing = grid.spacing
        z0 = grid.zero_index
        for grp in self._fgroups:
            nfac, d = grp.edges.shape
            if d == 1:
                if self._noiseless:
                    raw = np.full((nfac, G), MASS_FLOOR)
                    zspike = np.ones(nfac)
                else:
                    half = (self._noise_points - 1) // 2
                    centers = np.arange(-half, half + 1) * spacing
                    q = self._queries[grp.flat].ravel()
                    raw = np.interp(q, centers, self._noise_mass,
                                    left=MASS_FLOOR, right=MASS_FLOOR).reshape(nfac, G)
                    zspike = None
                self._finish_b(raw, grp.flat, zspike)
                continue
            nat = store.a_cont[grp.flat]
            buf = grp.wrap_buf
            buf[:, : G - z0] = nat[:, z0:]
            buf[:, -z0:] = nat[:, :z0]
            spec = rfft(buf, axis=1)
            # sign -1 reflects the message about 0; for a real wrapped signal
            # that is exactly complex conjugation of the spectrum
            spec[grp.neg] = np.conjugate(spec[grp.neg])
            spec += store.a_spike[grp.flat, None]
            spec = spec.reshape(nfac, d, -1)
            zspike = None
            if self._noiseless:
                bspec = _exclusive_products(spec)
                zspike = _exclusive_products(store.a_spike[grp.flat].reshape(nfac, d)).ravel()
            else:
                bspec = _exclusive_products(spec, base=grp.noise_spec)
            bw = irfft(bspec.reshape(nfac * d, -1), n=grp.fft_len, axis=1)
            if zspike is not None:
                bw[:, 0] -= zspike
            rows = np.arange(len(bw))[:, None]
            hi = grp.read_w_hi
            vals = bw[rows, grp.read_lo] * (1.0 - hi) + bw[rows, grp.read_hi] * hi
            np.maximum(vals, 0.0, out=vals)
            raw = np.where(grp.read_valid, vals, MASS_FLOOR)
            self._finish_b(raw, grp.flat, zspike)

    def _finish_b(self, raw: np.ndarray, edge_ids: np.ndarray,
                  zspike: np.ndarray | None) -> None:
        """Common tail of a factor update batch: add the noiseless point mass,
        swap degenerate rows for uniform ones, normalize, store."""
        G = self._grid.points
        if zspike is not None:
            pos = self._scatter_pos[edge_ids]
            i0 = np.floor(pos).astype(np.int64)
            frac = pos - i0
            rows = np.arange(len(raw))
            ok = (i0 >= 0) & (i0 < G)
            raw[rows[ok], i0[ok]] += zspike[ok] * (1.0 - frac[ok])
            ok = (i0 + 1 >= 0) & (i0 + 1 < G) & (frac > 0.0)
            raw[rows[ok], i0[ok] + 1] += zspike[ok] * frac[ok]
        bad = raw.max(axis=1) <= MASS_FLOOR
        if bad.any():
            raw[bad] = 1.0
            self.degenerate_count += int(bad.sum())
        raw /= raw.sum(axis=1, keepdims=True)
        self.store.b_cont[edge_ids] = raw

    # -- variable side -----------------------------------------------------

    def _variable_sweep(self, damping: float | None = None) -> float:
        store = self.store
        G = self._grid.points
        z0 = self._grid.zero_index
        pw = self.prior.spike_weight
        pc = self.prior.cont.mass
        if damping is None:
            damping = self.config.damping
        residual = 0.0
        for grp in self._vgroups:
            nvar, d = grp.edges.shape
            rows = np.maximum(store.b_cont[grp.flat].reshape(nvar, d, G), MASS_FLOOR)
            excl = _exclusive_products(rows)
            spike = pw * excl[:, :, z0]
            cont = pc * excl
            total = spike + cont.sum(axis=2)
            bad = total <= TOTAL_FLOOR
            safe = np.where(bad, 1.0, total)
            spike = spike / safe
            cont = cont / safe[:, :, None]
            if bad.any():
                spike[bad] = pw
                cont[bad] = (1.0 - pw) / G
                self.degenerate_count += int(bad.sum())
            old_spike = store.a_spike[grp.flat].reshape(nvar, d)
            old_cont = store.a_cont[grp.flat].reshape(nvar, d, G)
            if damping > 0.0:
                spike = (1.0 - damping) * spike + damping * old_spike
                cont = (1.0 - damping) * cont + damping * old_cont
                total = spike + cont.sum(axis=2)
                spike = spike / total
                cont = cont / total[:, :, None]
            change = 0.5 * (np.abs(spike - old_spike)
                            + np.abs(cont - old_cont).sum(axis=2))
            if change.size:
                residual = max(residual, float(change.max()))
            store.a_spike[grp.flat] = spike.ravel()
            store.a_cont[grp.flat] = cont.reshape(-1, G)
        return residual

    # -- driver ------------------------------------------------------------

    def iterate(self, damping: float | None = None) -> float:
        self._factor_sweep()
        residual = self._variable_sweep(damping)
        self.iterations += 1
        self.last_residual = residual
        return residual

    def posteriors(self) -> list[SpikedDensity]:
        """Per-variable beliefs from the prior and all incident b-messages."""
        grid = self._grid
        G = grid.points
        z0 = grid.zero_index
        pw = self.prior.spike_weight
        pc = self.prior.cont.mass
        out: list[SpikedDensity | None] = [None] * self.graph.n
        for grp in self._vgroups:
            nvar, d = grp.edges.shape
            rows = np.maximum(self.store.b_cont[grp.flat].reshape(nvar, d, G), MASS_FLOOR)
            full = rows.prod(axis=1)
            spike = pw * full[:, z0]
            cont = pc * full
            total = spike + cont.sum(axis=1)
            for t, i in enumerate(grp.variables):
                if total[t] <= TOTAL_FLOOR:
                    out[i] = _prior_spike_fallback(self.prior)
                    self.degenerate_count += 1
                else:
                    out[i] = SpikedDensity(float(spike[t] / total[t]),
                                           ContinuousDensity(grid, cont[t] / total[t]))
        for i in range(self.graph.n):
            if out[i] is None:  # isolated variable: belief stays at the prior
                out[i] = self.prior
        return out

    def run(self) -> tuple[list[SpikedDensity], BpDiagnostics]:
        rescued = False
        for _ in range(self.config.max_iters):
            residual = self.iterate()
            if residual < self.config.convergence_tol:
                break
        if (self.config.rescue_max_iters > 0
                and self.last_residual >= self.config.rescue_residual):
            # the flood is flip-flopping, not merely trailing off: restart
            # from the prior with damped variable updates
            rescued = True
            self.store = init_messages(self.graph, self.prior)
            for _ in range(self.config.rescue_max_iters):
                residual = self.iterate(damping=self.config.rescue_damping)
                if residual < self.config.convergence_tol:
                    break
        posts = self.posteriors()
        return posts, BpDiagnostics(self.iterations, self.last_residual,
                                    self.degenerate_count, rescued)


def _wrap_rows(nat: np.ndarray, length: int) -> np.ndarray:
    """Wrap natural-layout rows so the zero bin lands at index 0."""
    rows, width = nat.shape
    z0 = (width - 1) // 2
    out = np.zeros((rows, length))
    out[:, : width - z0] = nat[:, z0:]
    if z0:
        out[:, -z0:] = nat[:, :z0]
    return out


def run(matrix: SparseBernoulliMatrix, meas: Measurement, prior: SpikedDensity,
        config: BpConfig = BpConfig()) -> tuple[list[SpikedDensity], BpDiagnostics]:
    """Decode one instance: returns the n posterior beliefs and diagnostics."""
    return BeliefPropagationDecoder(matrix, meas, prior, config).run()
