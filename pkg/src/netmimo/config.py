"""Experiment configuration: one YAML file with five fixed sections.

Sections and keys are validated strictly; unknown keys are rejected with
their section path so that typos surface immediately. See the README for
the full schema with units and defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .channel import PathlossModel
from .errors import ConfigurationError
from .geometry import (bin_representatives_1d, bin_representatives_2d,
                       build_layout)
from .optimizer import SchemeFamily, SystemParams

_SECTIONS = ("layout", "pathloss", "system", "family", "run")


@dataclass
class RunParams:
    seed: int = 0
    trials: int = 0
    system_size: int = 1
    threads: int = 1
    batch: int = 128
    out: str = "results"
    schemes: list = field(default_factory=list)  # dicts with F, C, J, Q, S
    m_values: list = field(default_factory=list)
    n_values: list = field(default_factory=lambda: [1, 2, 4, 8])
    utility: str = "pf"
    alpha: float | None = None
    mc_rel_tolerance: float = 0.05
    lemma_realizations: int = 100


@dataclass
class LayoutParams:
    dimension: int = 1
    num_bs: int = 24
    hex_radius: float | None = None
    user_grid_density: int | None = None
    bins: object = 10  # count or explicit list of representatives
    radial: int = 4
    angular: int = 4


@dataclass
class ExperimentConfig:
    layout_params: LayoutParams
    pathloss: PathlossModel
    system: SystemParams
    family: SchemeFamily
    run: RunParams

    def build_layout(self):
        return build_layout(self.layout_params.dimension,
                            self.layout_params.num_bs,
                            hex_radius=self.layout_params.hex_radius,
                            user_grid_density=self.layout_params.user_grid_density)

    def bin_representatives(self, layout):
        bins = self.layout_params.bins
        if isinstance(bins, int):
            if layout.dimension == 1:
                return bin_representatives_1d(layout, bins)
            lp = self.layout_params
            if lp.radial * lp.angular != bins:
                raise ConfigurationError(
                    f"bins={bins} does not match radial*angular="
                    f"{lp.radial * lp.angular}")
            return bin_representatives_2d(layout, radial=lp.radial,
                                          angular=lp.angular)
        return [np.atleast_1d(np.asarray(b, dtype=float)) for b in bins]


def _pick(section, data, key, default, required=False, cast=None):
    if key in data:
        value = data.pop(key)
    elif required:
        raise ConfigurationError(f"{section}: missing required key '{key}'")
    else:
        return default
    if cast is not None and value is not None:
        try:
            value = cast(value)
        except (TypeError, ValueError):
            raise ConfigurationError(
                f"{section}.{key}: cannot interpret {value!r}") from None
    return value


def _finish_section(name, data):
    if data:
        raise ConfigurationError(f"{name}: unknown keys {sorted(data)}")


def load_config(path):
    """Parse and validate an experiment file; YAML syntax errors keep their
    line/column marks."""
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: expected a mapping with sections "
                                 f"{_SECTIONS}")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"{path}: unknown sections {sorted(unknown)}")

    lay = dict(raw.get("layout") or {})
    lp = LayoutParams(
        dimension=_pick("layout", lay, "dimension", 1, cast=int),
        num_bs=_pick("layout", lay, "num_bs", 24, cast=int),
        hex_radius=_pick("layout", lay, "hex_radius", None, cast=float),
        user_grid_density=_pick("layout", lay, "user_grid_density", None, cast=int),
        bins=_pick("layout", lay, "bins", 10),
        radial=_pick("layout", lay, "radial", 4, cast=int),
        angular=_pick("layout", lay, "angular", 4, cast=int),
    )
    _finish_section("layout", lay)
    if not isinstance(lp.bins, (int, list)):
        raise ConfigurationError("layout.bins: expected a count or a list")

    pls = dict(raw.get("pathloss") or {})
    pathloss = PathlossModel(
        reference_gain=_pick("pathloss", pls, "reference_gain", 1e6, cast=float),
        exponent=_pick("pathloss", pls, "exponent", None, required=True, cast=float),
        breakpoint=_pick("pathloss", pls, "breakpoint", None, required=True, cast=float),
    )
    _finish_section("pathloss", pls)

    sysd = dict(raw.get("system") or {})
    system = SystemParams(
        M=_pick("system", sysd, "antenna_factor", None, required=True, cast=float),
        L=_pick("system", sysd, "coherence_factor", None, required=True, cast=float),
        alpha_ul=_pick("system", sysd, "uplink_power", 10.0, cast=float),
        U=_pick("system", sysd, "users_per_location", None, cast=float),
        bandwidth_hz=_pick("system", sysd, "bandwidth_hz", 20e6, cast=float),
        sinr_cap=_pick("system", sysd, "sinr_cap", 1e6, cast=float),
    )
    _finish_section("system", sysd)

    famd = dict(raw.get("family") or {})
    zf = _pick("family", famd, "zf_orders", None)
    family = SchemeFamily(
        frequencies=tuple(_pick("family", famd, "frequencies", [1])),
        cluster_sizes=tuple(_pick("family", famd, "cluster_sizes", [1])),
        pilot_factors=tuple(_pick("family", famd, "pilot_factors", [1])),
        zf_orders=tuple(zf) if zf is not None else None,
        cluster_mode=_pick("family", famd, "cluster_mode", "switched", cast=str),
        s_grid=_pick("family", famd, "s_grid", 64, cast=int),
        s_tol=_pick("family", famd, "s_tol", 1e-4, cast=float),
    )
    _finish_section("family", famd)

    rund = dict(raw.get("run") or {})
    schemes = _pick("run", rund, "schemes", [])
    run = RunParams(
        seed=_pick("run", rund, "seed", 0, cast=int),
        trials=_pick("run", rund, "trials", 0, cast=int),
        system_size=_pick("run", rund, "system_size", 1, cast=int),
        threads=_pick("run", rund, "threads", 1, cast=int),
        batch=_pick("run", rund, "batch", 128, cast=int),
        out=_pick("run", rund, "out", "results", cast=str),
        schemes=list(schemes),
        m_values=list(_pick("run", rund, "m_values", [])),
        n_values=list(_pick("run", rund, "n_values", [1, 2, 4, 8])),
        utility=_pick("run", rund, "utility", "pf", cast=str),
        alpha=_pick("run", rund, "alpha", None, cast=float),
        mc_rel_tolerance=_pick("run", rund, "mc_rel_tolerance", 0.05, cast=float),
        lemma_realizations=_pick("run", rund, "lemma_realizations", 100, cast=int),
    )
    _finish_section("run", rund)
    for entry in run.schemes:
        missing = {"F", "C", "J", "Q", "S"} - set(entry)
        if missing:
            raise ConfigurationError(f"run.schemes: entry {entry} missing {missing}")
        extra = set(entry) - {"F", "C", "J", "Q", "S"}
        if extra:
            raise ConfigurationError(f"run.schemes: entry {entry} has unknown keys {extra}")

    return ExperimentConfig(layout_params=lp, pathloss=pathloss,
                            system=system, family=family, run=run)
