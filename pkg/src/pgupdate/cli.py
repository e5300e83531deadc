"""Command-line interface.

Subcommands: ``synth`` (generate the synthetic truth, drill data and
observations), ``prior`` (simulate the prior ensemble), ``update`` (run
the sequential updating pipeline), ``evaluate`` (compare an ensemble
against a truth raster) and ``export`` (rasters from an ensemble file).

Exit codes: 0 success, 2 configuration error, 3 data/format error.
stdout carries only the summary table; diagnostics go to stderr.
"""

from __future__ import annotations

import functools
import os
import sys

import click
import numpy as np

from . import pipeline as pl
from .config import load_config
from .ensemble import (
    read_ensemble,
    read_raster_csv,
    write_ensemble,
    write_raster_csv,
    write_raster_pgm,
)
from .errors import ConfigError, DataError
from .gsim import simulate_prior_ensemble
from .observations import load_observations, write_observations
from .pipeline import DOMAIN_VAR, add_prior_grades, evaluate_domains, run_sequence
from .rng import derive_rng
from .synthetic import generate_truth, sample_drill, sample_observations
from .thresholds import most_probable_codes


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _load(config_path, seed):
    cfg = load_config(config_path)
    if seed is not None:
        cfg.pipeline.rng_seed = int(seed)
    return cfg


def _summary(rows) -> None:
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        click.echo(f"{k.ljust(width)}  {v}")


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(), help="Project config file."
)
output_option = click.option(
    "--output", "out_dir", default=".", show_default=True, help="Output directory."
)
seed_option = click.option("--seed", type=int, default=None, help="Override pipeline rng_seed.")
threads_option = click.option(
    "--threads", type=int, default=1, show_default=True, help="Worker process cap."
)


@click.group()
def main() -> None:
    """Pluri-Gaussian rapid updating of domain and grade models."""


@main.command()
@config_option
@output_option
@seed_option
@_handle_errors
def synth(config_path, out_dir, seed) -> None:
    """Generate the synthetic truth, drill data and period observations."""
    cfg = _load(config_path, seed)
    if cfg.synthetic is None:
        raise ConfigError("config has no [synthetic] section")
    need = ("truth.g1", "truth.g2") + (("truth.latent",) if cfg.variables else ())
    for key in need:
        cfg.require_variogram(key)
    _assert_truth_differs(cfg)
    os.makedirs(out_dir, exist_ok=True)
    varios = {
        "g1": cfg.require_variogram("truth.g1"),
        "g2": cfg.require_variogram("truth.g2"),
    }
    if cfg.variables:
        varios["latent"] = cfg.require_variogram("truth.latent")
    truth = generate_truth(
        cfg.grid,
        cfg.rule(),
        varios,
        cfg.truth_grades,
        cfg.variables,
        latent_correlation=cfg.synthetic.latent_correlation,
        threshold_shift=cfg.synthetic.truth_threshold_shift,
        seed=cfg.pipeline.rng_seed,
    )
    obs = sample_observations(
        truth,
        cfg.synthetic.sampling_fraction,
        cfg.synthetic.n_periods,
        seed=cfg.pipeline.rng_seed,
        variables=cfg.variables,
    )
    drill = sample_drill(
        truth, cfg.synthetic.drill_fraction, seed=cfg.pipeline.rng_seed,
        variables=cfg.variables,
    )
    write_observations(os.path.join(out_dir, "observations.csv"), obs)
    write_observations(os.path.join(out_dir, "drill.csv"), drill)
    write_raster_csv(os.path.join(out_dir, "truth_domain.csv"), cfg.grid,
                     truth.domain_codes.astype(np.float64), fmt="%d")
    for v in cfg.variables:
        write_raster_csv(os.path.join(out_dir, f"truth_{v}.csv"), cfg.grid, truth.grades[v])
    _summary([
        ("observations", str(len(obs))),
        ("periods", str(obs.n_periods)),
        ("drill samples", str(len(drill))),
        ("truth domain raster", os.path.join(out_dir, "truth_domain.csv")),
    ])


def _assert_truth_differs(cfg) -> None:
    """The truth generator must not share the prior's field parameters."""
    same = (
        cfg.variograms.get("truth.g1") == cfg.variograms.get("g1")
        and cfg.variograms.get("truth.g2") == cfg.variograms.get("g2")
        and cfg.synthetic.truth_threshold_shift is None
    )
    if same:
        raise ConfigError(
            "truth parameters equal the prior's; vary the truth variograms "
            "or set truth_threshold_shift"
        )


@main.command()
@config_option
@output_option
@seed_option
@threads_option
@click.option("--drill", "drill_path", default=None, type=click.Path(),
              help="Drill observations CSV conditioning the prior.")
@_handle_errors
def prior(config_path, out_dir, seed, threads, drill_path) -> None:
    """Simulate the prior ensemble (domains, Gaussian fields, grades)."""
    cfg = _load(config_path, seed)
    os.makedirs(out_dir, exist_ok=True)
    drill = None
    if drill_path is not None:
        drill = load_observations(
            drill_path, grid=cfg.grid, domains=cfg.domains,
            variables=cfg.variables or None,
        )
    rule = cfg.rule()
    locs = drill.grid.centroids(drill.block_indices) if drill is not None else None
    labels = drill.domains if drill is not None else None
    ens = simulate_prior_ensemble(
        cfg.grid, locs, labels, cfg.grf_variograms(), rule,
        n_real=cfg.n_real, seed=cfg.pipeline.rng_seed,
        gibbs_iterations=cfg.pipeline.gibbs_iterations, threads=threads,
    )
    if cfg.variables:
        if drill is None:
            raise DataError("grade prior needs --drill data to fit distributions")
        ens = add_prior_grades(
            ens, drill, cfg.factor_variograms(), cfg.domains,
            seed=cfg.pipeline.rng_seed,
            rbig_max_iterations=cfg.pipeline.rbig_max_iterations,
            threads=threads,
        )
    path = os.path.join(out_dir, "prior.pgue")
    write_ensemble(path, ens)
    _export_rasters(ens, cfg.domains, cfg.variables, out_dir, tag="prior")
    _summary([
        ("realizations", str(ens.n_real)),
        ("variables", ",".join(ens.variables)),
        ("ensemble", path),
    ])


@main.command()
@config_option
@output_option
@seed_option
@click.option("--ensemble", "ens_path", required=True, type=click.Path(),
              help="Prior ensemble file.")
@click.option("--observations", "obs_path", required=True, type=click.Path(),
              help="Period-tagged observations CSV.")
@click.option("--resume", is_flag=True, help="Continue from the last checkpoint.")
@_handle_errors
def update(config_path, out_dir, seed, ens_path, obs_path, resume) -> None:
    """Run the sequential updating pipeline over all periods."""
    cfg = _load(config_path, seed)
    os.makedirs(out_dir, exist_ok=True)
    ens = read_ensemble(ens_path, grid=cfg.grid)
    obs = load_observations(
        obs_path, grid=cfg.grid, domains=cfg.domains, variables=cfg.variables or None
    )
    result = run_sequence(
        ens, obs, cfg.rule(), cfg.grf_variograms(), cfg.pipeline,
        out_dir=out_dir, resume=resume,
    )
    final_path = os.path.join(out_dir, "updated.pgue")
    aux = pl.pack_transforms(result.transforms) if result.transforms else None
    write_ensemble(final_path, result.ensemble, aux=aux)
    _export_rasters(result.ensemble, cfg.domains, cfg.variables, out_dir, tag="updated")
    _write_thresholds_csv(os.path.join(out_dir, "thresholds.csv"), result.rule)
    rows = [("periods", str(len(result.periods))), ("ensemble", final_path)]
    rows += [(k, f"{v:.4f}") for k, v in result.summary.items()]
    _summary(rows)


def _write_thresholds_csv(path, rule) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name,value\n")
        for name, value in zip(rule.threshold_names, rule.threshold_vector()):
            fh.write(f"{name},{value!r}\n")


@main.command()
@config_option
@output_option
@seed_option
@click.option("--observations", "obs_path", required=True, type=click.Path())
@_handle_errors
def gibbs(config_path, out_dir, seed, obs_path) -> None:
    """Convert observed labels to Gaussian values; audit CSV per period."""
    from .gibbs import GibbsSampler
    from .rng import STAGE_GIBBS

    cfg = _load(config_path, seed)
    os.makedirs(out_dir, exist_ok=True)
    obs = load_observations(
        obs_path, grid=cfg.grid, domains=cfg.domains, variables=cfg.variables or None
    )
    rule = cfg.rule()
    sampler = GibbsSampler(
        rule, cfg.grf_variograms(), iterations=cfg.pipeline.gibbs_iterations
    )
    path = os.path.join(out_dir, "gibbs_values.csv")
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,z,period,domain,g1,g2\n")
        for t in range(obs.n_periods):
            obs_t = obs.for_period(t)
            if len(obs_t) == 0:
                continue
            locs = cfg.grid.centroids(obs_t.block_indices)
            gvals = sampler.run(
                locs, obs_t.domains,
                seed=derive_rng(cfg.pipeline.rng_seed, STAGE_GIBBS, t),
            )
            for (x, y, z), r, (g1, g2) in zip(locs, obs_t.records, gvals):
                fh.write(
                    f"{float(x)!r},{float(y)!r},{float(z)!r},{t},"
                    f"{r.domain},{float(g1)!r},{float(g2)!r}\n"
                )
            n += len(obs_t)
    _summary([("observations", str(n)), ("gibbs values", path)])


@main.command()
@config_option
@output_option
@click.option("--ensemble", "ens_path", required=True, type=click.Path())
@click.option("--truth", "truth_path", required=True, type=click.Path(),
              help="Truth domain raster CSV.")
@_handle_errors
def evaluate(config_path, out_dir, ens_path, truth_path) -> None:
    """Score an ensemble's domain model against a truth raster."""
    cfg = _load(config_path, None)
    os.makedirs(out_dir, exist_ok=True)
    ens = read_ensemble(ens_path, grid=cfg.grid)
    truth_codes = read_raster_csv(truth_path, cfg.grid).astype(np.int64)
    report = evaluate_domains(ens, truth_codes, cfg.domains)
    cm = report["confusion"]
    with open(os.path.join(out_dir, "confusion.csv"), "w", encoding="utf-8") as fh:
        fh.write("true\\pred," + ",".join(cm.labels) + "\n")
        for i, lab in enumerate(cm.labels):
            fh.write(lab + "," + ",".join(str(int(c)) for c in cm.counts[i]) + "\n")
    write_raster_csv(os.path.join(out_dir, "modal_domain.csv"), cfg.grid,
                     report["modal"].astype(np.float64), fmt="%d")
    write_raster_csv(os.path.join(out_dir, "modal_probability.csv"), cfg.grid,
                     report["probability"])
    write_raster_csv(os.path.join(out_dir, "accuracy_map.csv"), cfg.grid,
                     report["accuracy_map"])
    rows = [("accuracy", f"{report['accuracy']:.4f}")]
    rows += [
        (f"accuracy[{d}]", "n/a" if np.isnan(a) else f"{a:.4f}")
        for d, a in report["per_domain_accuracy"].items()
    ]
    _summary(rows)


@main.command()
@config_option
@output_option
@click.option("--ensemble", "ens_path", required=True, type=click.Path())
@_handle_errors
def export(config_path, out_dir, ens_path) -> None:
    """Write rasters (CSV + PGM) for an ensemble file."""
    cfg = _load(config_path, None)
    os.makedirs(out_dir, exist_ok=True)
    ens = read_ensemble(ens_path, grid=cfg.grid)
    grade_vars = tuple(v for v in cfg.variables if v in ens.variables)
    _export_rasters(ens, cfg.domains, grade_vars, out_dir, tag="export")
    _summary([("rasters", out_dir)])


def _export_rasters(ens, domains, variables, out_dir, tag) -> None:
    codes = ens.get(DOMAIN_VAR).astype(np.int64)
    modal = most_probable_codes(codes, len(domains))
    freq = np.zeros(modal.shape)
    for d in range(len(domains)):
        freq = np.maximum(freq, np.mean(codes == d, axis=0))
    write_raster_csv(os.path.join(out_dir, f"{tag}_modal_domain.csv"), ens.grid,
                     modal.astype(np.float64), fmt="%d")
    write_raster_pgm(os.path.join(out_dir, f"{tag}_modal_domain.pgm"), ens.grid,
                     modal.astype(np.float64), lo=0, hi=max(len(domains) - 1, 1))
    write_raster_csv(os.path.join(out_dir, f"{tag}_modal_probability.csv"), ens.grid, freq)
    for v in variables:
        etype = ens.mean(v)
        write_raster_csv(os.path.join(out_dir, f"{tag}_{v}_etype.csv"), ens.grid, etype)
        write_raster_pgm(os.path.join(out_dir, f"{tag}_{v}_etype.pgm"), ens.grid, etype)


if __name__ == "__main__":
    main()
