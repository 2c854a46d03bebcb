"""Network geometry, system configuration and channel generation.

Indexing convention (zero-based in code, one-based in prose):

- ``f[m, n]``: reader m -> tag n
- ``g[m, n]``: tag m -> tag n
- ``h[m, n]``: reader m -> reader n

Backward coefficients are never stored: tag n -> reader m is conj(f[m, n]).
"""

from __future__ import annotations

import hashlib
import json
import tomllib
from collections.abc import Mapping
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
from fastmcp.utilities.logging import get_logger
from numpy.random import Generator
from pydantic import (
    AliasChoices,
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    field_validator,
    model_validator,
)

from thss_backcom.errors import ConfigError, DomainError

logger = get_logger(__name__)

# Numerical-results setup: lambda = 2.5, d11 = d22 = 10 m, d_t = 20 m, d12 = d21 = 22 m
DEFAULT_DIRECT_DISTANCE = 10.0
DEFAULT_CROSS_DISTANCE = 22.0
DEFAULT_TAG_DISTANCE = 20.0
DEFAULT_READER_DISTANCE = 20.0

CONFIG_SECTIONS = ("system", "distances", "static_channels")

Matrix = tuple[tuple[float, ...], ...]


class ChannelModel(StrEnum):
    STATIC = "static"
    RAYLEIGH = "rayleigh"


class PowerMode(StrEnum):
    FCP = "FCP"  # fixed chip power: P constant in N
    FCE = "FCE"  # fixed chip energy: P*T/N constant in N


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One draw of every complex coefficient, optionally with leading batch axes."""

    f: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @property
    def K(self) -> int:
        return self.f.shape[-1]

    @property
    def backward(self) -> np.ndarray:
        """b[n, m] (tag n -> reader m) = conj(f[m, n])."""
        return np.conj(np.swapaxes(self.f, -1, -2))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChannelRealization):
            return NotImplemented
        return all(
            np.array_equal(mine, theirs)
            for mine, theirs in ((self.f, other.f), (self.g, other.g), (self.h, other.h))
        )

    __hash__ = None  # type: ignore[assignment]


def path_loss_variance(d, lam: float):
    """Large-scale channel power gain d^{-lambda}. Scalars or arrays."""
    dist = np.asarray(d, dtype=float)
    if np.any(dist <= 0.0):
        raise DomainError(f"distances must be positive, got {d}")
    gain = dist ** (-lam)
    return float(gain) if gain.ndim == 0 else gain


def default_distances(
    K: int,
    d11: float = DEFAULT_DIRECT_DISTANCE,
    d22: float | None = None,
    d12: float = DEFAULT_CROSS_DISTANCE,
    d21: float = DEFAULT_CROSS_DISTANCE,
    d_t: float = DEFAULT_TAG_DISTANCE,
    d_rr: float = DEFAULT_READER_DISTANCE,
) -> tuple[Matrix, Matrix, Matrix]:
    """Reader-tag, tag-tag and reader-reader matrices for K links.

    Links 3..K copy link 1's own distance and link 2's cross distance to tag 1;
    every remaining cross distance is d21.
    """
    reader_tag = [[d21] * K for _ in range(K)]
    for i in range(K):
        reader_tag[i][i] = d11
    reader_tag[1][1] = d11 if d22 is None else d22
    reader_tag[0][1] = d12
    tag_tag = [[0.0 if m == n else d_t for n in range(K)] for m in range(K)]
    reader_reader = [[0.0 if m == n else d_rr for n in range(K)] for m in range(K)]
    return (
        tuple(map(tuple, reader_tag)),
        tuple(map(tuple, tag_tag)),
        tuple(map(tuple, reader_reader)),
    )


def _complex_matrix(value: Any, name: str) -> np.ndarray:
    try:
        return np.array([[complex(entry) for entry in row] for row in value], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"static_coeffs.{name} entries must be complex numbers") from exc


def _static_from_mapping(value: Mapping[str, Any]) -> ChannelRealization:
    if "f" not in value:
        raise ValueError("static_coeffs needs at least the f matrix")
    f = _complex_matrix(value["f"], "f")
    g = _complex_matrix(value["g"], "g") if "g" in value else np.zeros_like(f)
    h = _complex_matrix(value["h"], "h") if "h" in value else np.zeros_like(f)
    for arr in (g, h):
        if arr.shape == f.shape and arr.ndim == 2:
            np.fill_diagonal(arr, 0.0)
    return ChannelRealization(f=f, g=g, h=h)


class SystemConfig(BaseModel):
    """Every scalar and geometric parameter of the K-link network. SI units."""

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    K: int = Field(default=2, ge=2)
    N: int = Field(default=1000, ge=4)
    T: float = Field(default=1e-3, gt=0.0)
    P: float = Field(default=0.05, gt=0.0)
    rho: float = Field(default=0.5, gt=0.0, lt=1.0)
    eta: float = Field(default=0.5, gt=0.0, le=1.0)
    sigma2_reader: float = Field(default=1e-13, ge=0.0)
    sigma2_tag: float = Field(default=1e-13, ge=0.0)
    path_loss_exponent: float = Field(
        default=2.5, gt=0.0, validation_alias=AliasChoices("lambda", "path_loss_exponent")
    )
    E0: float = Field(default=1e-11, ge=0.0)
    beta: float = Field(default=0.0, ge=0.0, lt=1.0)
    channel_model: ChannelModel = ChannelModel.RAYLEIGH
    power_mode: PowerMode = PowerMode.FCP
    E_chip: float | None = Field(default=None, gt=0.0)
    couple_tag_detection: bool = False
    d_reader_tag: Matrix | None = None
    d_tag_tag: Matrix | None = None
    d_reader_reader: Matrix | None = None
    static_coeffs: ChannelRealization | None = None

    @field_validator("static_coeffs", mode="before")
    @classmethod
    def _parse_static(cls, value: Any) -> Any:
        if isinstance(value, Mapping):
            return _static_from_mapping(value)
        return value

    @field_serializer("static_coeffs")
    def _dump_static(self, value: ChannelRealization | None) -> dict[str, list] | None:
        if value is None:
            return None
        return {
            name: [[repr(complex(entry)) for entry in row] for row in getattr(value, name)]
            for name in ("f", "g", "h")
        }

    @model_validator(mode="after")
    def _check_geometry(self) -> SystemConfig:
        if self.beta > 0.0 and self.N < 6:
            raise ValueError("asynchronous operation (beta > 0) needs N >= 6")
        for name, matrix in (
            ("d_reader_tag", self.d_reader_tag),
            ("d_tag_tag", self.d_tag_tag),
            ("d_reader_reader", self.d_reader_reader),
        ):
            if matrix is None:
                continue
            if len(matrix) != self.K or any(len(row) != self.K for row in matrix):
                raise ValueError(f"{name} must be a {self.K}x{self.K} matrix")
            for m, row in enumerate(matrix):
                for n, d in enumerate(row):
                    if (m != n or name == "d_reader_tag") and not d > 0.0:
                        raise ValueError(f"{name}[{m}][{n}] must be positive, got {d}")
        if self.static_coeffs is not None:
            for name in ("f", "g", "h"):
                if getattr(self.static_coeffs, name).shape != (self.K, self.K):
                    raise ValueError(f"static_coeffs.{name} must be a {self.K}x{self.K} matrix")
        return self

    # --- derived quantities ---

    @property
    def chip_energy(self) -> float:
        """Energy per on-chip; pinned to P*T/N unless given explicitly."""
        if self.E_chip is not None:
            return self.E_chip
        return self.P * self.T / self.N

    @property
    def transmit_power(self) -> float:
        """Reader power actually radiated during an on-chip."""
        if self.power_mode is PowerMode.FCE:
            return self.N * self.chip_energy / self.T
        return self.P

    @property
    def xi(self) -> float:
        """Normalised outage threshold N*E0 / (eta*P*T)."""
        return self.N * self.E0 / (self.eta * self.transmit_power * self.T)

    def _defaults(self) -> tuple[Matrix, Matrix, Matrix]:
        return default_distances(self.K)

    @property
    def reader_tag(self) -> np.ndarray:
        return np.array(self.d_reader_tag or self._defaults()[0], dtype=float)

    @property
    def tag_tag(self) -> np.ndarray:
        return np.array(self.d_tag_tag or self._defaults()[1], dtype=float)

    @property
    def reader_reader(self) -> np.ndarray:
        return np.array(self.d_reader_reader or self._defaults()[2], dtype=float)

    def gain(self, m: int, n: int) -> float:
        """E|f[m, n]|^2 for reader m -> tag n."""
        return path_loss_variance(self.reader_tag[m, n], self.path_loss_exponent)

    def tag_gain(self, m: int, n: int) -> float:
        """E|g[m, n]|^2 for tag m -> tag n."""
        return path_loss_variance(self.tag_tag[m, n], self.path_loss_exponent)


# --- construction and overrides ---


def _config_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    key = ".".join(str(part) for part in first.get("loc", ())) or "config"
    return ConfigError(key, f"{key}: {first.get('msg', 'invalid value')}")


def make_config(**fields: Any) -> SystemConfig:
    """Validate ``fields`` into a SystemConfig, reporting failures as ConfigError."""
    try:
        return SystemConfig.model_validate(_convert_units(fields))
    except ValidationError as exc:
        raise _config_error(exc) from exc


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


def _convert_units(fields: Mapping[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in fields.items():
        if key == "sigma2_dbm":
            out["sigma2_reader"] = out["sigma2_tag"] = dbm_to_watts(value)
        elif key.endswith("_dbm"):
            out[key.removesuffix("_dbm")] = dbm_to_watts(value)
        elif key == "lambda":
            out["path_loss_exponent"] = value
        else:
            out[key] = value
    if "E0_rate" in out:
        rate = out.pop("E0_rate")
        out["E0"] = float(rate) * float(out.get("T", SystemConfig.model_fields["T"].default))
    return out


def with_overrides(cfg: SystemConfig, **changes: Any) -> SystemConfig:
    """Revalidated copy of ``cfg`` with ``changes`` applied.

    Under FCE the chip energy is pinned before N or T move, so the radiated
    power scales with N; overriding P re-pins it instead.
    """
    changes = _convert_units(changes)
    data = cfg.model_dump()
    data.update(changes)
    if cfg.power_mode is PowerMode.FCE and "E_chip" not in changes:
        if "P" in changes:
            logger.warning("FCE configuration: overriding P re-pins the chip energy to P*T/N")
            data["E_chip"] = None
        elif cfg.E_chip is None:
            data["E_chip"] = cfg.chip_energy
    if "K" in changes and int(changes["K"]) != cfg.K:
        for name in ("d_reader_tag", "d_tag_tag", "d_reader_reader"):
            if name not in changes and data.get(name) is not None:
                logger.info("K changed to %s: %s reset to the default layout", changes["K"], name)
                data[name] = None
    return make_config(**data)


def with_sequence_length(cfg: SystemConfig, N: int) -> SystemConfig:
    return with_overrides(cfg, N=N)


def config_digest(cfg: SystemConfig) -> str:
    """Short stable identifier of a configuration."""
    payload = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# --- config files ---


def _distance_fields(section: Mapping[str, Any], K: int) -> dict[str, Any]:
    matrices = {"reader_tag", "tag_tag", "reader_reader"}
    shorthand = {"d11", "d22", "d12", "d21", "d_t", "d_rr"}
    unknown = set(section) - matrices - shorthand
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"distances.{key}", f"unknown distance key '{key}'")
    out: dict[str, Any] = {}
    if shorthand & set(section):
        try:
            rt, tt, rr = default_distances(K, **{k: float(section[k]) for k in shorthand & set(section)})
        except (TypeError, ValueError) as exc:
            raise ConfigError("distances", f"distances must be numbers: {exc}") from exc
        out.update(d_reader_tag=rt, d_tag_tag=tt, d_reader_reader=rr)
    for name in matrices & set(section):
        out[f"d_{name}"] = section[name]
    return out


def config_fields(raw: Mapping[str, Any]) -> dict[str, Any]:
    """Flatten a parsed config document into SystemConfig fields."""
    unknown = set(raw) - set(CONFIG_SECTIONS)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(key, f"unknown config section [{key}]")
    fields = dict(raw.get("system", {}))
    try:
        K = int(fields.get("K", 2))
    except (TypeError, ValueError) as exc:
        raise ConfigError("K", f"K must be an integer, got {fields.get('K')!r}") from exc
    fields.update(_distance_fields(raw.get("distances", {}), K))
    if "static_channels" in raw:
        fields["static_coeffs"] = raw["static_channels"]
    return fields


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> SystemConfig:
    """Read a TOML config file with [system], [distances], [static_channels] sections."""
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError("config", f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"config file {path} is not valid TOML: {exc}") from exc
    fields = _convert_units(config_fields(raw))
    fields.update(_convert_units(overrides or {}))
    cfg = make_config(**fields)
    logger.info("loaded config %s (digest %s)", path, config_digest(cfg))
    return cfg


# --- channel sampling ---


def _complex_gaussian(rng: Generator, variance: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _off_diagonal_gain(distances: np.ndarray, lam: float) -> np.ndarray:
    K = distances.shape[0]
    safe = np.where(np.eye(K, dtype=bool), 1.0, distances)
    return path_loss_variance(safe, lam) * (1.0 - np.eye(K))


def path_loss_coefficients(cfg: SystemConfig) -> ChannelRealization:
    """Deterministic channel whose coefficients are the real path-loss amplitudes."""
    lam = cfg.path_loss_exponent
    return ChannelRealization(
        f=np.sqrt(path_loss_variance(cfg.reader_tag, lam)).astype(complex),
        g=np.sqrt(_off_diagonal_gain(cfg.tag_tag, lam)).astype(complex),
        h=np.sqrt(_off_diagonal_gain(cfg.reader_reader, lam)).astype(complex),
    )


def sample_channels(
    cfg: SystemConfig, rng: Generator, size: int | None = None
) -> ChannelRealization:
    """Draw one block-fading realization, or ``size`` of them stacked on axis 0.

    Rayleigh coefficients are CN(0, d^{-lambda}); the static model returns the
    configured coefficients unchanged.
    """
    batch = () if size is None else (size,)
    if cfg.channel_model is ChannelModel.STATIC:
        if cfg.static_coeffs is None:
            raise ConfigError("static_coeffs", "static channel model needs static_coeffs")
        s = cfg.static_coeffs
        return ChannelRealization(
            f=np.broadcast_to(s.f, batch + s.f.shape),
            g=np.broadcast_to(s.g, batch + s.g.shape),
            h=np.broadcast_to(s.h, batch + s.h.shape),
        )
    shape = batch + (cfg.K, cfg.K)
    lam = cfg.path_loss_exponent
    f = _complex_gaussian(rng, path_loss_variance(cfg.reader_tag, lam), shape)
    g = _complex_gaussian(rng, _off_diagonal_gain(cfg.tag_tag, lam), shape)
    h = _complex_gaussian(rng, _off_diagonal_gain(cfg.reader_reader, lam), shape)
    return ChannelRealization(f=f, g=g, h=h)
