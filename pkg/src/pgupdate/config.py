"""Project configuration file: one INI-style file drives every command.

Sections::

    [grid]        nx ny nz dx dy dz origin_x origin_y origin_z
    [domains]     names, proportions (both comma-separated, same length)
    [grades]      variables (optional; enables grade modelling)
    [pipeline]    every PipelineConfig field
    [prior]       n_real, drill CSV is passed on the command line
    [variogram.*] nugget + structureN lines:
                  kind, sill, range_x, range_y, range_z, ang1, ang2, ang3
                  required: g1, g2; per grade variable: factor.<var>;
                  for the synthetic generator: truth.g1, truth.g2, truth.latent
    [synthetic]   sampling_fraction, n_periods, drill_fraction,
                  latent_correlation, truth_threshold_shift (optional
                  "name, delta")
    [truth_grades] per-domain line: m1, m2, ... | s1, s2, ...

Unknown sections or keys are configuration errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .grid import GridSpec
from .truncation import TruncationRule, thresholds_from_proportions
from .variogram import Structure, VariogramModel


@dataclass
class PipelineConfig:
    """Tuning knobs of the per-period updating loop."""

    neighbourhood_k: int = 3
    n_assimilations: int = 5
    localization_radius: float = 50.0
    gibbs_iterations: int = 1000
    grf_obs_noise_sd: float = 0.1
    extreme_percentile: float = 0.95
    rbig_max_iterations: int = 30
    threshold_search_budget: int = 200
    rng_seed: int = 0
    min_domain_observations: int = 5
    optimize_thresholds_every_period: bool = True
    tail_pass: bool = True

    def __post_init__(self) -> None:
        if self.n_assimilations < 1:
            raise ConfigError("n_assimilations must be >= 1")
        if not self.localization_radius > 0:
            raise ConfigError("localization_radius must be > 0")
        if not 0.5 < self.extreme_percentile < 1.0:
            raise ConfigError("extreme_percentile must lie in (0.5, 1)")
        if self.neighbourhood_k < 0:
            raise ConfigError("neighbourhood_k must be >= 0")
        if self.gibbs_iterations < 1:
            raise ConfigError("gibbs_iterations must be >= 1")
        if self.rbig_max_iterations < 1:
            raise ConfigError("rbig_max_iterations must be >= 1")
        if self.threshold_search_budget < 1:
            raise ConfigError("threshold_search_budget must be >= 1")
        if not self.grf_obs_noise_sd > 0:
            raise ConfigError("grf_obs_noise_sd must be > 0")
        if self.min_domain_observations < 1:
            raise ConfigError("min_domain_observations must be >= 1")


@dataclass
class SyntheticConfig:
    sampling_fraction: float = 0.25
    n_periods: int = 20
    drill_fraction: float = 0.03
    latent_correlation: float = 0.6
    truth_threshold_shift: tuple[str, float] | None = None

    def __post_init__(self) -> None:
        if not 0 < self.sampling_fraction <= 1:
            raise ConfigError("sampling_fraction must lie in (0, 1]")
        if self.n_periods < 1:
            raise ConfigError("n_periods must be >= 1")
        if not 0 < self.drill_fraction <= 1:
            raise ConfigError("drill_fraction must lie in (0, 1]")
        if not 0 <= self.latent_correlation < 1:
            raise ConfigError("latent_correlation must lie in [0, 1)")


@dataclass
class ProjectConfig:
    grid: GridSpec
    domains: tuple[str, ...]
    proportions: tuple[float, ...]
    pipeline: PipelineConfig
    n_real: int
    variables: tuple[str, ...] = ()
    variograms: dict = field(default_factory=dict)
    synthetic: SyntheticConfig | None = None
    truth_grades: dict = field(default_factory=dict)  # domain -> (means, sds)

    def rule(self) -> TruncationRule:
        return thresholds_from_proportions(self.domains, self.proportions)

    def grf_variograms(self) -> tuple[VariogramModel, VariogramModel]:
        return (self.require_variogram("g1"), self.require_variogram("g2"))

    def factor_variograms(self) -> list[VariogramModel]:
        return [self.require_variogram(f"factor.{v}") for v in self.variables]

    def require_variogram(self, key: str) -> VariogramModel:
        try:
            return self.variograms[key]
        except KeyError:
            raise ConfigError(f"missing config section [variogram.{key}]") from None


def _parse_floats(text: str, n: int | None = None):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} values, got {len(vals)} in {text!r}")
    return vals


def _parse_names(text: str):
    names = tuple(p.strip() for p in text.split(",") if p.strip())
    if not names:
        raise ConfigError(f"expected a comma-separated name list, got {text!r}")
    return names


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(value: str, kind):
    if kind is bool:
        try:
            return _BOOL[value.strip().lower()]
        except KeyError:
            raise ConfigError(f"expected a boolean, got {value!r}") from None
    try:
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"expected {kind.__name__}, got {value!r}") from exc


def _section(parser: configparser.ConfigParser, name: str, required: bool = True):
    if not parser.has_section(name):
        if required:
            raise ConfigError(f"missing config section [{name}]")
        return None
    return parser[name]


def _check_keys(section, allowed, section_name: str) -> None:
    unknown = set(section.keys()) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in config section [{section_name}]"
        )


def parse_variogram(section, section_name: str) -> VariogramModel:
    structures = []
    nugget = 0.0
    for key in section:
        if key == "nugget":
            nugget = _coerce(section[key], float)
        elif key.startswith("structure"):
            parts = [p.strip() for p in section[key].split(",")]
            if len(parts) != 8:
                raise ConfigError(
                    f"[{section_name}] {key}: expected kind, sill, 3 ranges, 3 angles"
                )
            kind = parts[0]
            nums = _parse_floats(",".join(parts[1:]), 7)
            structures.append(
                Structure(kind, nums[0], tuple(nums[1:4]), tuple(nums[4:7]))
            )
        else:
            raise ConfigError(f"unknown key {key!r} in config section [{section_name}]")
    return VariogramModel(nugget, tuple(structures))


def load_config(path) -> ProjectConfig:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    known_fixed = {"grid", "domains", "grades", "pipeline", "prior", "synthetic", "truth_grades"}
    for section in parser.sections():
        if section not in known_fixed and not section.startswith("variogram."):
            raise ConfigError(f"unknown config section [{section}]")

    gsec = _section(parser, "grid")
    _check_keys(gsec, {"nx", "ny", "nz", "dx", "dy", "dz", "origin_x", "origin_y", "origin_z"}, "grid")
    try:
        grid = GridSpec(
            nx=_coerce(gsec.get("nx", ""), int),
            ny=_coerce(gsec.get("ny", ""), int),
            nz=_coerce(gsec.get("nz", ""), int),
            dx=_coerce(gsec.get("dx", ""), float),
            dy=_coerce(gsec.get("dy", ""), float),
            dz=_coerce(gsec.get("dz", ""), float),
            origin=(
                _coerce(gsec.get("origin_x", "0"), float),
                _coerce(gsec.get("origin_y", "0"), float),
                _coerce(gsec.get("origin_z", "0"), float),
            ),
        )
    except Exception as exc:
        raise ConfigError(f"invalid [grid] section: {exc}") from exc

    dsec = _section(parser, "domains")
    _check_keys(dsec, {"names", "proportions"}, "domains")
    domains = _parse_names(dsec.get("names", ""))
    proportions = _parse_floats(dsec.get("proportions", ""), len(domains))

    variables: tuple[str, ...] = ()
    vsec = _section(parser, "grades", required=False)
    if vsec is not None:
        _check_keys(vsec, {"variables"}, "grades")
        variables = _parse_names(vsec.get("variables", ""))

    psec = _section(parser, "pipeline")
    pipe_fields = {f.name: f.type for f in fields(PipelineConfig)}
    _check_keys(psec, set(pipe_fields), "pipeline")
    kwargs = {}
    for f in fields(PipelineConfig):
        if psec.get(f.name) is None:
            continue
        kind = {"int": int, "float": float, "bool": bool}[f.type]
        kwargs[f.name] = _coerce(psec[f.name], kind)
    pipeline = PipelineConfig(**kwargs)

    prsec = _section(parser, "prior")
    _check_keys(prsec, {"n_real"}, "prior")
    n_real = _coerce(prsec.get("n_real", ""), int)
    if n_real < 1:
        raise ConfigError("prior n_real must be >= 1")

    variograms = {}
    for section in parser.sections():
        if section.startswith("variogram."):
            key = section[len("variogram."):]
            variograms[key] = parse_variogram(parser[section], section)
    for required_key in ("g1", "g2"):
        if required_key not in variograms:
            raise ConfigError(f"missing config section [variogram.{required_key}]")
    for v in variables:
        if f"factor.{v}" not in variograms:
            raise ConfigError(f"missing config section [variogram.factor.{v}]")

    synthetic = None
    ssec = _section(parser, "synthetic", required=False)
    if ssec is not None:
        allowed = {
            "sampling_fraction", "n_periods", "drill_fraction",
            "latent_correlation", "truth_threshold_shift",
        }
        _check_keys(ssec, allowed, "synthetic")
        shift = None
        if ssec.get("truth_threshold_shift"):
            parts = [p.strip() for p in ssec["truth_threshold_shift"].split(",")]
            if len(parts) != 2:
                raise ConfigError("truth_threshold_shift must be 'name, delta'")
            shift = (parts[0], _coerce(parts[1], float))
        synthetic = SyntheticConfig(
            sampling_fraction=_coerce(ssec.get("sampling_fraction", "0.25"), float),
            n_periods=_coerce(ssec.get("n_periods", "20"), int),
            drill_fraction=_coerce(ssec.get("drill_fraction", "0.03"), float),
            latent_correlation=_coerce(ssec.get("latent_correlation", "0.6"), float),
            truth_threshold_shift=shift,
        )

    truth_grades = {}
    tsec = _section(parser, "truth_grades", required=False)
    if tsec is not None:
        # configparser lower-cases option names
        _check_keys(tsec, {d.lower() for d in domains}, "truth_grades")
        for dom in tsec:
            halves = tsec[dom].split("|")
            if len(halves) != 2:
                raise ConfigError(f"truth_grades {dom}: expected 'means | sds'")
            means = _parse_floats(halves[0], len(variables))
            sds = _parse_floats(halves[1], len(variables))
            if any(m <= 0 for m in means) or any(s <= 0 for s in sds):
                raise ConfigError(f"truth_grades {dom}: means and sds must be > 0")
            # configparser lower-cases keys; recover the declared label
            label = {d.lower(): d for d in domains}[dom]
            truth_grades[label] = (means, sds)

    return ProjectConfig(
        grid=grid,
        domains=domains,
        proportions=proportions,
        pipeline=pipeline,
        n_real=n_real,
        variables=variables,
        variograms=variograms,
        synthetic=synthetic,
        truth_grades=truth_grades,
    )
