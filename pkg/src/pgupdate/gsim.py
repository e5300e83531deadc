"""Sequential Gaussian simulation on the block grid.

Blocks are visited in a seeded random path; each is assigned a draw from
the simple-kriging conditional given nearby conditioning data and
previously simulated nodes. Neighbour search runs in anisotropy-normalised
coordinates with a two-part budget (simulated nodes and data nodes).
Conditioning data are honoured at block support: with a nugget-free model
the containing block receives the datum exactly.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.spatial import cKDTree

from .ensemble import Ensemble
from .errors import DataError
from .gibbs import GibbsSampler
from .grid import GridSpec
from .kriging import simple_krige
from .rng import STAGE_PRIOR, derive_rng
from .truncation import TruncationRule
from .variogram import VariogramModel

MAX_SIM_NEIGHBORS = 24
MAX_DATA_NEIGHBORS = 8
_CHUNK = 384


def simulate_conditional(
    grid: GridSpec,
    cond_locations,
    cond_values,
    model: VariogramModel,
    seed=None,
    max_sim_neighbors: int = MAX_SIM_NEIGHBORS,
    max_data_neighbors: int = MAX_DATA_NEIGHBORS,
) -> np.ndarray:
    """Simulate one standard-GRF realization over the whole grid.

    Parameters
    ----------
    grid : GridSpec
    cond_locations : array-like (n, 3) or None
        Conditioning coordinates (empty for an unconditional run).
    cond_values : array-like (n,)
    model : VariogramModel
        Must have total sill 1.
    seed : int or numpy Generator seed material

    Returns
    -------
    numpy.ndarray of shape (grid.n_blocks,)
    """
    model.require_standard("simulation model")
    rng = np.random.default_rng(seed)
    n_blocks = grid.n_blocks
    values = np.full(n_blocks, np.nan)
    transform = model.anisotropy_transform()
    centroids = grid.centroids()
    norm_coords = centroids @ transform.T

    if cond_locations is None:
        cond_locations = np.empty((0, 3))
        cond_values = np.empty(0)
    cond_locations = np.atleast_2d(np.asarray(cond_locations, dtype=np.float64))
    cond_values = np.atleast_1d(np.asarray(cond_values, dtype=np.float64))
    if cond_locations.shape[0] != cond_values.size:
        raise DataError("conditioning locations and values differ in length")
    if cond_values.size and not np.all(np.isfinite(cond_values)):
        raise DataError("conditioning values must be finite")

    known = np.zeros(n_blocks, dtype=bool)
    if cond_values.size and model.nugget == 0:
        # Assign data to their blocks (collisions averaged); the block then
        # reproduces the datum exactly and conditions the rest of the path.
        idx = grid.block_containing(
            cond_locations[:, 0], cond_locations[:, 1], cond_locations[:, 2]
        )
        sums = np.zeros(n_blocks)
        counts = np.zeros(n_blocks)
        np.add.at(sums, idx, cond_values)
        np.add.at(counts, idx, 1.0)
        hit = counts > 0
        values[hit] = sums[hit] / counts[hit]
        known |= hit
        data_coords = norm_coords[hit]
        data_locs = centroids[hit]
        data_vals = values[hit]
    elif cond_values.size:
        data_locs = cond_locations
        data_coords = cond_locations @ transform.T
        data_vals = cond_values
    else:
        data_locs = np.empty((0, 3))
        data_coords = np.empty((0, 3))
        data_vals = np.empty(0)

    data_tree = cKDTree(data_coords) if data_vals.size else None
    path = rng.permutation(np.flatnonzero(~known))
    draws = rng.standard_normal(path.size)

    sim_order = np.empty(path.size, dtype=np.int64)  # global ids, visit order
    n_done = 0
    for start in range(0, path.size, _CHUNK):
        chunk = path[start:start + _CHUNK]
        chunk_coords = norm_coords[chunk]
        # One batched query per chunk against the earlier-chunk nodes and
        # the data; this chunk's own nodes are scanned brute-force below.
        if n_done:
            back_tree = cKDTree(norm_coords[sim_order[:n_done]])
            kq = min(max_sim_neighbors, n_done)
            back_d, back_i = back_tree.query(chunk_coords, k=kq)
            back_d = back_d.reshape(chunk.size, -1)
            back_i = back_i.reshape(chunk.size, -1)
        else:
            back_d = back_i = None
        if data_tree is not None:
            kd = min(max_data_neighbors, data_vals.size)
            _, data_i = data_tree.query(chunk_coords, k=kd)
            data_i = data_i.reshape(chunk.size, -1)
        base = n_done
        for j, node in enumerate(chunk):
            if back_d is not None:
                cand_d = back_d[j]
                cand_pos = back_i[j]
            else:
                cand_d = np.empty(0)
                cand_pos = np.empty(0, dtype=np.int64)
            if j > 0:
                local = chunk[:j]
                dl = np.linalg.norm(norm_coords[local] - chunk_coords[j], axis=1)
                cand_d = np.concatenate([cand_d, dl])
                cand_pos = np.concatenate([cand_pos, base + np.arange(j)])
            if cand_pos.size > max_sim_neighbors:
                take = np.argpartition(cand_d, max_sim_neighbors - 1)[:max_sim_neighbors]
                cand_pos = cand_pos[take]
            sim_ids = sim_order[cand_pos] if cand_pos.size else np.empty(0, dtype=np.int64)
            neigh_locs = centroids[sim_ids]
            neigh_vals = values[sim_ids]
            if data_tree is not None:
                neigh_locs = np.concatenate([neigh_locs, data_locs[data_i[j]]])
                neigh_vals = np.concatenate([neigh_vals, data_vals[data_i[j]]])
            est, var = simple_krige(centroids[node], neigh_locs, neigh_vals, model)
            values[node] = est + np.sqrt(var) * draws[start + j]
            sim_order[n_done] = node
            n_done += 1

    return values


def simulate_prior_ensemble(
    grid: GridSpec,
    drill_locations,
    drill_labels,
    variograms,
    rule: TruncationRule,
    n_real: int,
    seed: int,
    gibbs_iterations: int = 1000,
    threads: int = 1,
) -> Ensemble:
    """Prior ensemble of both Gaussian fields plus truncated domain codes.

    Each realization re-runs the Gibbs sampler on the drill data with its
    own derived seed, simulates both fields conditionally, and truncates.
    Realizations are independent, so worker count never changes the result.
    """
    if n_real < 1:
        raise DataError("ensemble size must be >= 1")
    drill_locations = (
        np.empty((0, 3)) if drill_locations is None
        else np.atleast_2d(np.asarray(drill_locations, dtype=np.float64))
    )
    drill_labels = [] if drill_labels is None else list(drill_labels)
    args = [
        (grid, drill_locations, drill_labels, variograms, rule, seed, r, gibbs_iterations)
        for r in range(n_real)
    ]
    if threads > 1 and n_real > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_prior_worker, args))
    else:
        results = [_prior_worker(a) for a in args]

    ens = Ensemble.allocate(grid, ("g1", "g2", "domain"), n_real)
    for r, (g1, g2, dom) in enumerate(results):
        ens.values[r, 0] = g1
        ens.values[r, 1] = g2
        ens.values[r, 2] = dom
    return ens


def _prior_worker(args):
    grid, locs, labels, variograms, rule, seed, r, gibbs_iterations = args
    if labels:
        sampler = GibbsSampler(rule, variograms, iterations=gibbs_iterations)
        gseed = derive_rng(seed, STAGE_PRIOR, r, 0)
        gvals = sampler.run(locs, labels, seed=gseed)
    else:
        gvals = np.empty((0, 2))
    sims = []
    for f in (0, 1):
        s = derive_rng(seed, STAGE_PRIOR, r, 1 + f)
        cond_locs = locs if gvals.size else None
        cond_vals = gvals[:, f] if gvals.size else None
        sims.append(simulate_conditional(grid, cond_locs, cond_vals, variograms[f], seed=s))
    dom = rule.truncate_codes(sims[0], sims[1]).astype(np.float64)
    return sims[0], sims[1], dom
