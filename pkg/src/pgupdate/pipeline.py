"""Per-period joint updating of geological domains and grades.

One period runs: neighbourhood extraction around the new observations,
Gibbs conversion of their labels into Gaussian values, localized ES-MDA on
both Gaussian fields over the neighbourhood, threshold re-optimization
against every observation seen so far, re-truncation of the neighbourhood,
and finally per-domain grade updating in Gaussianised factor space with a
separate pass for extreme values. Blocks outside the neighbourhood are
never touched.

Every random stream is derived from (seed, stage, period, ...), so a
resumed run and an uninterrupted run produce identical output.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .ensemble import Ensemble, read_ensemble, write_ensemble
from .errors import DataError
from .esmda import AssimilationProblem, MdaSchedule, mda_update
from .gibbs import GibbsSampler
from .grid import extract_neighbourhood
from .metrics import confusion, mse, probability_and_accuracy_maps, r2
from .observations import ObservationSet
from .rbig import IterativeGaussianizer, MarginalGaussianizer
from .rng import (
    STAGE_ESMDA,
    STAGE_GIBBS,
    STAGE_GRADE_PRIOR,
    STAGE_GRADES,
    STAGE_OBS_NOISE,
    STAGE_THRESHOLDS,
    derive_rng,
)
from .thresholds import (
    ScoreWeights,
    ThresholdSearchSpace,
    classification_score,
    most_probable_codes,
    optimise_thresholds,
)
from .truncation import TruncationRule

GRF_VARS = ("g1", "g2")
DOMAIN_VAR = "domain"


def _log(message: str) -> None:
    print(message, file=sys.stderr)


@dataclass
class PeriodResult:
    """Reporting record for one updating period."""

    period: int
    n_obs: int
    subset_size: int
    grf_mse_reduction: tuple[float, float]
    domain_accuracy_obs: float
    score_prior: float
    score_opt: float
    thresholds: tuple[float, ...]
    grade_mse_reduction: dict = field(default_factory=dict)
    grade_r2: dict = field(default_factory=dict)
    duration_s: float = 0.0

    def row(self, variables) -> list:
        out = [
            self.period, self.n_obs, self.subset_size,
            *self.grf_mse_reduction,
            self.domain_accuracy_obs, self.score_prior, self.score_opt,
            *self.thresholds,
        ]
        for v in variables:
            out.append(self.grade_mse_reduction.get(v, float("nan")))
            out.append(self.grade_r2.get(v, float("nan")))
        return out

    @staticmethod
    def header(rule: TruncationRule, variables) -> list:
        out = [
            "period", "n_obs", "subset_size",
            "g1_mse_reduction", "g2_mse_reduction",
            "obs_accuracy", "score_prior", "score_opt",
            *rule.threshold_names,
        ]
        for v in variables:
            out += [f"mse_reduction_{v}", f"r2_{v}"]
        return out


def _obs_positions(subset: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(subset, blocks)
    if np.any(pos >= subset.size) or np.any(subset[np.minimum(pos, subset.size - 1)] != blocks):
        raise DataError("observation block missing from the neighbourhood subset")
    return pos


def update_domains_period(
    ens: Ensemble,
    obs_t: ObservationSet,
    rule: TruncationRule,
    variograms,
    cfg: PipelineConfig,
    period: int,
    seen_blocks: np.ndarray,
    seen_labels,
):
    """Assimilate one period's domain observations into the ensemble.

    Mutates the Gaussian and domain variables of ``ens`` on the period
    neighbourhood only. ``seen_blocks`` / ``seen_labels`` must already
    include this period's observations. Returns ``(rule', stats)``;
    ``stats`` is None when the period is empty.
    """
    if len(obs_t) == 0:
        return rule, None

    grid = ens.grid
    obs_blocks = obs_t.block_indices
    labels = obs_t.domains
    if any(lab is None for lab in labels):
        raise DataError("domain updating needs a label on every observation")
    subset = extract_neighbourhood(grid, obs_blocks, cfg.neighbourhood_k)
    pos = _obs_positions(subset, obs_blocks)

    sampler = GibbsSampler(rule, variograms, iterations=cfg.gibbs_iterations)
    obs_coords = grid.centroids(obs_blocks)
    gvals = sampler.run(obs_coords, labels, seed=derive_rng(cfg.rng_seed, STAGE_GIBBS, period))
    noise_rng = derive_rng(cfg.rng_seed, STAGE_OBS_NOISE, period)
    g_obs = gvals + cfg.grf_obs_noise_sd * noise_rng.standard_normal(gvals.shape)

    subset_coords = grid.centroids(subset)
    reductions = []
    for f, var in enumerate(GRF_VARS):
        full = ens.get(var)
        state = full[:, subset].copy()
        problem = AssimilationProblem(
            state=state,
            observations=g_obs[:, f],
            obs_error_sd=cfg.grf_obs_noise_sd,
            state_locations=subset_coords,
            obs_locations=obs_coords,
            localization_radius=cfg.localization_radius,
        )
        before = mse(state[:, pos].mean(axis=0), g_obs[:, f])
        updated = mda_update(
            problem,
            MdaSchedule.constant(cfg.n_assimilations),
            forward=lambda s: s[:, pos],
            seed=derive_rng(cfg.rng_seed, STAGE_ESMDA, period, f),
        )
        after = mse(updated[:, pos].mean(axis=0), g_obs[:, f])
        full[:, subset] = updated
        reductions.append(100.0 * (1.0 - after / before) if before > 0 else 0.0)

    # threshold optimization against everything observed so far
    seen_labels = np.asarray(seen_labels, dtype=object)
    g_seen = np.stack(
        [ens.get("g1")[:, seen_blocks], ens.get("g2")[:, seen_blocks]], axis=-1
    )
    if cfg.optimize_thresholds_every_period:
        space = ThresholdSearchSpace.around(
            rule,
            budget=cfg.threshold_search_budget,
            seed=int(derive_rng(cfg.rng_seed, STAGE_THRESHOLDS, period).integers(2**32)),
        )
        new_rule, score_opt, trials = optimise_thresholds(
            g_seen, seen_labels, rule, space, ScoreWeights()
        )
        score_prior = trials[0][2]
    else:
        new_rule = rule
        modal = most_probable_codes(
            rule.truncate_codes(g_seen[:, :, 0], g_seen[:, :, 1]), len(rule.domains)
        )
        score_prior = score_opt = classification_score(
            seen_labels, np.asarray(rule.domains, dtype=object)[modal]
        )
        trials = []

    codes = new_rule.truncate_codes(ens.get("g1")[:, subset], ens.get("g2")[:, subset])
    ens.get(DOMAIN_VAR)[:, subset] = codes.astype(np.float64)

    modal_obs = most_probable_codes(codes[:, pos], len(new_rule.domains))
    obs_codes = np.asarray([new_rule.domain_code(lab) for lab in labels])
    stats = {
        "subset": subset,
        "g_obs": g_obs,
        "grf_mse_reduction": tuple(reductions),
        "domain_accuracy_obs": float(np.mean(modal_obs == obs_codes)),
        "score_prior": float(score_prior),
        "score_opt": float(score_opt),
        "trials": trials,
    }
    return new_rule, stats


def update_grades_period(
    ens: Ensemble,
    obs_t: ObservationSet,
    subset: np.ndarray,
    domains,
    cfg: PipelineConfig,
    period: int,
    log=_log,
):
    """Update cross-correlated grades domain by domain in factor space.

    For each domain with enough complete-grade observations: fit the
    Gaussianiser on the pooled neighbourhood realizations plus
    observations, assimilate each factor with localized ES-MDA, invert,
    then re-assimilate per-variable extreme values (above the configured
    percentile of the observed values) on the exceedance region through a
    univariate normal-score map. Negative grades are clamped to zero.

    Observations participate in their observed label's domain; their
    blocks join that domain's state even when the updated model disagrees.
    Returns per-variable (MSE reduction %, r2) dicts over this period's
    observations.
    """
    variables = obs_t.variables
    if not variables or len(obs_t) == 0:
        return {}, {}, {}
    grades = obs_t.grades_matrix()
    complete = ~np.any(np.isnan(grades), axis=1)
    if not np.any(complete):
        return {}, {}, {}

    m = len(variables)
    grid = ens.grid
    obs_blocks_all = obs_t.block_indices
    labels = np.asarray(obs_t.domains, dtype=object)
    var_idx = [ens.var_index(v) for v in variables]
    modal_subset = most_probable_codes(
        ens.get(DOMAIN_VAR)[:, subset].astype(np.int64), len(domains)
    )

    eval_blocks = obs_blocks_all[complete]
    before = {v: ens.mean(v)[eval_blocks] for v in variables}
    schedule = MdaSchedule.constant(cfg.n_assimilations)
    fitted = {}

    for code, dom in enumerate(domains):
        rows = complete & (labels == dom)
        n_obs_d = int(np.sum(rows))
        if n_obs_d == 0:
            continue
        if n_obs_d < cfg.min_domain_observations:
            if log:
                log(f"period {period}: domain {dom} has {n_obs_d} grade observations, skipped")
            continue
        obs_blocks = obs_blocks_all[rows]
        obs_vals = grades[rows]
        mask = np.union1d(subset[modal_subset == code], obs_blocks)
        opos = _obs_positions(mask, obs_blocks)
        real = ens.values[:, var_idx, :][:, :, mask]  # (n_real, m, n_mask)
        n_real, _, n_mask = real.shape

        pooled = np.concatenate(
            [real.transpose(0, 2, 1).reshape(n_real * n_mask, m), obs_vals], axis=0
        )
        gauss = IterativeGaussianizer(max_iterations=cfg.rbig_max_iterations).fit(pooled)
        fitted[dom] = gauss
        factors_real = gauss.transform(
            real.transpose(0, 2, 1).reshape(n_real * n_mask, m)
        ).reshape(n_real, n_mask, m)
        factors_obs = gauss.transform(obs_vals)

        mask_coords = grid.centroids(mask)
        obs_coords = grid.centroids(obs_blocks)
        for j in range(m):
            problem = AssimilationProblem(
                state=factors_real[:, :, j],
                observations=factors_obs[:, j],
                obs_error_sd=cfg.grf_obs_noise_sd,
                state_locations=mask_coords,
                obs_locations=obs_coords,
                localization_radius=cfg.localization_radius,
            )
            factors_real[:, :, j] = mda_update(
                problem,
                schedule,
                forward=lambda s: s[:, opos],
                seed=derive_rng(cfg.rng_seed, STAGE_GRADES, period, code, j),
            )
        updated = gauss.inverse_transform(factors_real.reshape(n_real * n_mask, m))
        updated = np.maximum(updated.reshape(n_real, n_mask, m), 0.0)
        for j, vi in enumerate(var_idx):
            ens.values[:, vi, mask] = updated[:, :, j]

        if cfg.tail_pass:
            _tail_pass(
                ens, cfg, period, code, var_idx, mask, obs_blocks, obs_vals, schedule
            )

    after = {v: ens.mean(v)[eval_blocks] for v in variables}
    reductions = {}
    r2s = {}
    for j, v in enumerate(variables):
        target = grades[complete][:, j]
        mb = mse(before[v], target)
        ma = mse(after[v], target)
        reductions[v] = 100.0 * (1.0 - ma / mb) if mb > 0 else 0.0
        r2s[v] = (
            r2(after[v], target)
            if target.size >= 2 and np.var(target) > 0
            else float("nan")
        )
    return reductions, r2s, fitted


def _tail_pass(ens, cfg, period, code, var_idx, mask, obs_blocks, obs_vals, schedule):
    """Re-assimilate per-variable extremes on the exceedance region."""
    grid = ens.grid
    for j, vi in enumerate(var_idx):
        threshold = float(np.quantile(obs_vals[:, j], cfg.extreme_percentile))
        tail_rows = obs_vals[:, j] > threshold
        if not np.any(tail_rows):
            continue
        emean = ens.values[:, vi, mask].mean(axis=0)
        tail_mask = np.union1d(mask[emean > threshold], obs_blocks[tail_rows])
        tpos = _obs_positions(tail_mask, obs_blocks[tail_rows])
        state = ens.values[:, vi, :][:, tail_mask]
        tail_obs = obs_vals[tail_rows, j]
        nscore = MarginalGaussianizer().fit(np.concatenate([state.ravel(), tail_obs]))
        problem = AssimilationProblem(
            state=nscore.transform(state),
            observations=nscore.transform(tail_obs),
            obs_error_sd=cfg.grf_obs_noise_sd,
            state_locations=grid.centroids(tail_mask),
            obs_locations=grid.centroids(obs_blocks[tail_rows]),
            localization_radius=cfg.localization_radius,
        )
        updated = mda_update(
            problem,
            schedule,
            forward=lambda s: s[:, tpos],
            seed=derive_rng(cfg.rng_seed, STAGE_GRADES, period, code, 100 + j),
        )
        ens.values[:, vi, tail_mask] = np.maximum(nscore.inverse(updated), 0.0)


# ---------------------------------------------------------------------------
# prior grades
# ---------------------------------------------------------------------------

def add_prior_grades(
    ens: Ensemble,
    drill_obs: ObservationSet,
    factor_variograms,
    domains,
    seed: int,
    rbig_max_iterations: int = 30,
    threads: int = 1,
) -> Ensemble:
    """Extend a domain prior with grade realizations.

    Per domain, a Gaussianiser is fitted on the drill grades (domains with
    fewer than 10 m complete samples fall back to the pooled drill data);
    each realization then simulates one independent standard factor field
    per variable and inverts the fitted map on that realization's domain
    blocks. Factor fields have per-(realization, variable) seeds, so the
    worker count never changes the result.
    """
    variables = drill_obs.variables
    if not variables:
        raise DataError("drill data has no grade columns")
    m = len(variables)
    if len(factor_variograms) != m:
        raise DataError("one factor variogram per grade variable required")
    grades = drill_obs.grades_matrix()
    complete = ~np.any(np.isnan(grades), axis=1)
    labels = np.asarray(drill_obs.domains, dtype=object)
    codes = ens.get(DOMAIN_VAR)

    pooled = grades[complete]
    if pooled.shape[0] < 10 * m:
        raise DataError("too few complete drill grade samples to fit any domain")
    transforms = []
    for dom in domains:
        dom_rows = complete & (labels == dom)
        sample = grades[dom_rows] if np.sum(dom_rows) >= 10 * m else pooled
        transforms.append(
            IterativeGaussianizer(max_iterations=rbig_max_iterations).fit(sample)
        )

    tasks = [
        (ens.grid, factor_variograms[j], seed, r, j)
        for r in range(ens.n_real)
        for j in range(m)
    ]
    if threads > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            fields_flat = list(pool.map(_factor_field_worker, tasks, chunksize=4))
    else:
        fields_flat = [_factor_field_worker(t) for t in tasks]

    new_vars = ens.variables + tuple(variables)
    values = np.concatenate(
        [ens.values, np.zeros((ens.n_real, m, ens.grid.n_blocks))], axis=1
    )
    out = Ensemble(ens.grid, new_vars, values)
    for r in range(ens.n_real):
        fields = np.column_stack(fields_flat[r * m:(r + 1) * m])
        dom_r = codes[r].astype(np.int64)
        grade_r = np.zeros((ens.grid.n_blocks, m))
        for code in range(len(domains)):
            blocks = np.flatnonzero(dom_r == code)
            if blocks.size == 0:
                continue
            grade_r[blocks] = transforms[code].inverse_transform(fields[blocks])
        grade_r = np.maximum(grade_r, 0.0)
        for j in range(m):
            out.values[r, len(ens.variables) + j] = grade_r[:, j]
    return out


def _factor_field_worker(task):
    from .gsim import simulate_conditional  # local import avoids a cycle

    grid, model, seed, r, j = task
    return simulate_conditional(
        grid, None, None, model, seed=derive_rng(seed, STAGE_GRADE_PRIOR, r, j)
    )


# ---------------------------------------------------------------------------
# sequence driver
# ---------------------------------------------------------------------------

@dataclass
class SequenceResult:
    periods: list
    ensemble: Ensemble
    rule: TruncationRule
    reconciliation: dict
    summary: dict
    transforms: dict  # latest period's fitted grade transforms, per domain


def run_sequence(
    prior_ens: Ensemble,
    obs: ObservationSet,
    rule: TruncationRule,
    variograms,
    cfg: PipelineConfig,
    out_dir=None,
    resume: bool = False,
    log=_log,
) -> SequenceResult:
    """Process all observation periods in order against a copy of the prior.

    With ``out_dir`` the ensemble and run state are checkpointed after
    every period; ``resume=True`` continues from the last checkpoint and
    produces output identical to an uninterrupted run. To keep that
    guarantee with the float32 on-disk payload, the working ensemble is
    rounded to float32 resolution at every period boundary whether or not
    a checkpoint is written. The summary reconciles prior-model and
    final-model predictions at every observation location.
    """
    domains = rule.domains
    variables = obs.variables
    n_obs_total = len(obs)
    if n_obs_total == 0:
        raise DataError("observation set is empty")
    all_blocks = obs.block_indices
    all_labels = np.asarray(obs.domains, dtype=object)
    all_periods = np.asarray([r.period for r in obs.records])
    all_grades = obs.grades_matrix()

    ens = prior_ens.copy()
    _quantize(ens)  # disk-resolution state, as if read back from a file
    recon = {
        "g_obs": np.full((n_obs_total, 2), np.nan),
        "g_obs_by_period": {},
        "prior_g": np.stack(
            [ens.mean("g1")[all_blocks], ens.mean("g2")[all_blocks]], axis=1
        ),
        "prior_grades": (
            np.stack([ens.mean(v)[all_blocks] for v in variables], axis=1)
            if variables and all(v in ens.variables for v in variables)
            else None
        ),
    }
    results: list[PeriodResult] = []
    start_period = 0
    if resume:
        state = _load_state(out_dir)
        if state is not None:
            start_period = state["next_period"]
            rule = rule.with_thresholds(np.asarray(state["thresholds"]))
            results = [PeriodResult(**r) for r in state["results"]]
            # stored per period so the observation file may grow between runs
            recon["g_obs_by_period"] = dict(state["g_obs"])
            for key, rows in state["g_obs"].items():
                sel = np.flatnonzero(all_periods == int(key))
                rows = np.asarray(rows, dtype=np.float64)
                if rows.shape[0] != sel.size:
                    raise DataError(
                        f"period {key} changed since the checkpoint "
                        f"({sel.size} observations now, {rows.shape[0]} then)"
                    )
                recon["g_obs"][sel] = rows
            ens = read_ensemble(os.path.join(out_dir, "checkpoint.pgue"), grid=ens.grid)
            log(f"resuming at period {start_period}")

    seen_blocks: list[int] = []
    seen_labels: list[str] = []
    trial_rows: list[tuple] = []
    transforms: dict = {}
    for t in range(start_period):
        sel = all_periods == t
        seen_blocks.extend(all_blocks[sel].tolist())
        seen_labels.extend(all_labels[sel].tolist())

    for t in range(start_period, obs.n_periods):
        t_start = time.perf_counter()
        obs_t = obs.for_period(t)
        sel = np.flatnonzero(all_periods == t)
        if len(obs_t) == 0:
            results.append(
                PeriodResult(
                    period=t, n_obs=0, subset_size=0,
                    grf_mse_reduction=(0.0, 0.0),
                    domain_accuracy_obs=float("nan"),
                    score_prior=float("nan"), score_opt=float("nan"),
                    thresholds=tuple(rule.threshold_vector()),
                )
            )
            _quantize(ens)
            _checkpoint(out_dir, ens, rule, results, recon, t + 1)
            continue
        seen_blocks.extend(obs_t.block_indices.tolist())
        seen_labels.extend(obs_t.domains)
        rule, dstats = update_domains_period(
            ens, obs_t, rule, variograms, cfg, t,
            np.asarray(seen_blocks, dtype=np.int64), seen_labels,
        )
        recon["g_obs"][sel] = dstats["g_obs"]
        recon["g_obs_by_period"][str(t)] = dstats["g_obs"].tolist()
        trial_rows.extend(
            (t, trial, *theta.tolist(), score) for trial, theta, score in dstats["trials"]
        )
        grade_red, grade_r2 = {}, {}
        if variables and all(v in ens.variables for v in variables):
            grade_red, grade_r2, fitted = update_grades_period(
                ens, obs_t, dstats["subset"], domains, cfg, t, log=log
            )
            if fitted:
                transforms = fitted
        ens.assert_finite()
        res = PeriodResult(
            period=t,
            n_obs=len(obs_t),
            subset_size=int(dstats["subset"].size),
            grf_mse_reduction=dstats["grf_mse_reduction"],
            domain_accuracy_obs=dstats["domain_accuracy_obs"],
            score_prior=dstats["score_prior"],
            score_opt=dstats["score_opt"],
            thresholds=tuple(rule.threshold_vector()),
            grade_mse_reduction=grade_red,
            grade_r2=grade_r2,
            duration_s=time.perf_counter() - t_start,
        )
        results.append(res)
        _quantize(ens)
        _checkpoint(out_dir, ens, rule, results, recon, t + 1)
        if log:
            log(
                f"period {t}: {len(obs_t)} obs, subset {res.subset_size}, "
                f"obs accuracy {res.domain_accuracy_obs:.3f}, "
                f"score {res.score_prior:.4f} -> {res.score_opt:.4f} "
                f"({res.duration_s:.1f}s)"
            )

    summary = _sequence_summary(ens, rule, recon, all_blocks, all_labels, all_grades, variables)
    if out_dir is not None:
        _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), results, rule, variables)
        _write_reconciliation_csv(
            os.path.join(out_dir, "reconciliation.csv"),
            ens, recon, all_blocks, all_labels, all_periods, all_grades, variables,
        )
        _write_trials_csv(os.path.join(out_dir, "threshold_trials.csv"), trial_rows, rule)
    return SequenceResult(results, ens, rule, recon, summary, transforms)


def _sequence_summary(ens, rule, recon, all_blocks, all_labels, all_grades, variables):
    """Prior-vs-final reconciliation pooled over every observation."""
    final_g = np.stack([ens.mean("g1")[all_blocks], ens.mean("g2")[all_blocks]], axis=1)
    out = {}
    have = ~np.isnan(recon["g_obs"][:, 0])
    for f, name in enumerate(GRF_VARS):
        target = recon["g_obs"][have, f]
        prior_mse = mse(recon["prior_g"][have, f], target)
        final_mse = mse(final_g[have, f], target)
        out[f"{name}_mse_reduction"] = (
            100.0 * (1.0 - final_mse / prior_mse) if prior_mse > 0 else 0.0
        )
    codes = ens.get(DOMAIN_VAR).astype(np.int64)[:, all_blocks]
    modal = most_probable_codes(codes, len(rule.domains))
    obs_codes = np.asarray([rule.domain_code(lab) for lab in all_labels])
    out["obs_accuracy_final"] = float(np.mean(modal == obs_codes))
    if variables and recon["prior_grades"] is not None:
        complete = ~np.any(np.isnan(all_grades), axis=1)
        for j, v in enumerate(variables):
            target = all_grades[complete, j]
            prior_mse = mse(recon["prior_grades"][complete, j], target)
            final_mse = mse(ens.mean(v)[all_blocks[complete]], target)
            out[f"{v}_mse_reduction"] = (
                100.0 * (1.0 - final_mse / prior_mse) if prior_mse > 0 else 0.0
            )
            out[f"{v}_r2"] = r2(ens.mean(v)[all_blocks[complete]], target)
    return out


def _quantize(ens: Ensemble) -> None:
    """Round to the on-disk float32 resolution between periods."""
    ens.values[:] = ens.values.astype("<f4").astype(np.float64)


def _checkpoint(out_dir, ens, rule, results, recon, next_period) -> None:
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    write_ensemble(os.path.join(out_dir, "checkpoint.pgue"), ens)
    state = {
        "next_period": next_period,
        "thresholds": rule.threshold_vector().tolist(),
        "g_obs": recon["g_obs_by_period"],
        "results": [
            {
                "period": r.period,
                "n_obs": r.n_obs,
                "subset_size": r.subset_size,
                "grf_mse_reduction": tuple(r.grf_mse_reduction),
                "domain_accuracy_obs": r.domain_accuracy_obs,
                "score_prior": r.score_prior,
                "score_opt": r.score_opt,
                "thresholds": tuple(r.thresholds),
                "grade_mse_reduction": r.grade_mse_reduction,
                "grade_r2": r.grade_r2,
            }
            for r in results
        ],
    }
    with open(os.path.join(out_dir, "state.json"), "w", encoding="utf-8") as fh:
        json.dump(state, fh)


def _load_state(out_dir):
    if out_dir is None:
        return None
    path = os.path.join(out_dir, "state.json")
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_trials_csv(path, trial_rows, rule) -> None:
    header = ["period", "trial", *rule.threshold_names, "score"]
    lines = [",".join(header)]
    for row in trial_rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_metrics_csv(path, results, rule, variables) -> None:
    header = PeriodResult.header(rule, variables)
    lines = [",".join(header)]
    for r in results:
        lines.append(",".join(_fmt(x) for x in r.row(variables)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_reconciliation_csv(
    path, ens, recon, all_blocks, all_labels, all_periods, all_grades, variables
) -> None:
    final_g1 = ens.mean("g1")[all_blocks]
    final_g2 = ens.mean("g2")[all_blocks]
    final_grades = [ens.mean(v)[all_blocks] for v in variables]
    header = [
        "period", "block", "domain",
        "g1_obs", "g2_obs", "g1_prior", "g2_prior", "g1_final", "g2_final",
    ]
    for v in variables:
        header += [f"{v}_obs", f"{v}_prior", f"{v}_final"]
    lines = [",".join(header)]
    for i in range(all_blocks.size):
        row = [
            str(int(all_periods[i])), str(int(all_blocks[i])), str(all_labels[i]),
            _fmt(recon["g_obs"][i, 0]), _fmt(recon["g_obs"][i, 1]),
            _fmt(recon["prior_g"][i, 0]), _fmt(recon["prior_g"][i, 1]),
            _fmt(final_g1[i]), _fmt(final_g2[i]),
        ]
        for j in range(len(variables)):
            row.append(_fmt(all_grades[i, j]))
            row.append(
                _fmt(recon["prior_grades"][i, j]) if recon["prior_grades"] is not None else ""
            )
            row.append(_fmt(final_grades[j][i]))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def pack_transforms(transforms: dict) -> bytes:
    """Frame per-domain fitted grade transforms for the aux section."""
    import struct

    from .rbig import serialize_transform

    parts = [struct.pack("<H", len(transforms))]
    for dom, tr in sorted(transforms.items()):
        name = str(dom).encode("utf-8")
        blob = serialize_transform(tr)
        parts.append(struct.pack("<BI", len(name), len(blob)))
        parts.append(name)
        parts.append(blob)
    return b"".join(parts)


def unpack_transforms(blob: bytes) -> dict:
    """Inverse of :func:`pack_transforms`."""
    import struct

    from .rbig import deserialize_transform

    (count,) = struct.unpack_from("<H", blob, 0)
    off = 2
    out = {}
    for _ in range(count):
        name_len, blob_len = struct.unpack_from("<BI", blob, off)
        off += struct.calcsize("<BI")
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        out[name] = deserialize_transform(blob[off:off + blob_len])
        off += blob_len
    return out


def evaluate_domains(ens: Ensemble, truth_codes, domains):
    """Compare an ensemble's domain model against a truth grid.

    Returns the confusion matrix, overall and per-domain accuracy of the
    most-probable model, plus the modal / probability / accuracy maps.
    """
    truth_codes = np.asarray(truth_codes, dtype=np.int64)
    codes = ens.get(DOMAIN_VAR).astype(np.int64)
    modal, prob, accmap = probability_and_accuracy_maps(codes, len(domains), truth_codes)
    names = np.asarray(domains, dtype=object)
    cm = confusion(names[truth_codes], names[modal], labels=domains)
    return {
        "confusion": cm,
        "accuracy": cm.accuracy,
        "per_domain_accuracy": cm.per_class_accuracy(),
        "modal": modal,
        "probability": prob,
        "accuracy_map": accmap,
    }
