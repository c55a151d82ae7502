"""Experiment configuration: a flat ``key = value`` text format with dotted
keys, typed defaults, and validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .datasets import DEFAULT_AUG_SIGMA, DatasetId
from .decoder import BUNDLE_POLICIES, DecoderTrainConfig
from .encoder import ContrastiveConfig
from .errors import ConfigError
from .latent import LatentSamplingMode, MapperConfig
from .metrics import fingerprint

# per-dataset cluster counts, chosen so each cluster is plausibly unimodal
DEFAULT_K = {
    DatasetId.EIGHT_GAUSSIANS: 8,
    DatasetId.FOUR_CIRCLES: 4,
    DatasetId.CHECKERBOARD: 8,
    DatasetId.TWO_SPIRALS: 20,
    DatasetId.ABS: 2,
    DatasetId.SINEWAVED_CUBE: 10,
}

ALL_MODES = ",".join(m.value for m in LatentSamplingMode)


def _modes(text: str) -> str:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("at least one mode required")
    for p in parts:
        LatentSamplingMode(p)
    return ",".join(parts)


def _dataset(text: str) -> str:
    return DatasetId(text).value


def _policy(text: str) -> str:
    if text not in BUNDLE_POLICIES:
        raise ValueError(f"expected one of {BUNDLE_POLICIES}")
    return text


def _k(text: str) -> str:
    if text == "auto":
        return text
    value = int(text)
    if value < 1:
        raise ValueError("must be >= 1 or 'auto'")
    return str(value)


def _positive(kind):
    def conv(text):
        value = kind(text)
        if value <= 0:
            raise ValueError("must be > 0")
        return value
    return conv


def _nonneg(kind):
    def conv(text):
        value = kind(text)
        if value < 0:
            raise ValueError("must be >= 0")
        return value
    return conv


pos_int, pos_float = _positive(int), _positive(float)
nonneg_int, nonneg_float = _nonneg(int), _nonneg(float)

# key -> (converter, default). Order defines the canonical text form.
SCHEMA: dict[str, tuple] = {
    "dataset": (_dataset, "eight_gaussians"),
    "n_train": (pos_int, 8192),
    "n_test": (pos_int, 4096),
    "seed": (nonneg_int, 0),
    "encoder.latent_dim": (pos_int, 4),
    "encoder.hidden": (pos_int, 64),
    "encoder.temperature": (pos_float, 0.5),
    "encoder.batch_size": (pos_int, 256),
    "encoder.iterations": (nonneg_int, 1500),
    "encoder.sigma_aug": (nonneg_float, DEFAULT_AUG_SIGMA),
    "encoder.lr": (pos_float, 1e-3),
    "clustering.K": (_k, "auto"),
    "clustering.max_iters": (pos_int, 300),
    "mapper.omega_dim": (pos_int, 2),
    "mapper.hidden": (pos_int, 32),
    "mapper.lambda_eps": (nonneg_float, 1.0),
    "mapper.iterations": (nonneg_int, 3000),
    "mapper.batch_size": (pos_int, 256),
    "mapper.lr": (pos_float, 1e-3),
    "decoder.modes": (_modes, ALL_MODES),
    "decoder.lambda_x": (nonneg_float, 10.0),
    "decoder.gamma_rec": (nonneg_float, 0.1),
    "decoder.iterations": (nonneg_int, 2000),
    "decoder.batch_size": (pos_int, 256),
    "decoder.lr": (pos_float, 1e-3),
    "decoder.noise_dim": (pos_int, 4),
    "decoder.fixed_bundle_policy": (_policy, "zeros"),
    "decoder.bundle_seed": (nonneg_int, 0),
    "eval.n_generate": (pos_int, 4096),
    "plot.n_points": (pos_int, 2000),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def dataset(self) -> DatasetId:
        return DatasetId(self.values["dataset"])

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def K(self) -> int:
        k = self.values["clustering.K"]
        return DEFAULT_K[self.dataset] if k == "auto" else int(k)

    @property
    def modes(self) -> list[LatentSamplingMode]:
        return [LatentSamplingMode(m) for m in self.values["decoder.modes"].split(",")]

    def contrastive(self) -> ContrastiveConfig:
        v = self.values
        return ContrastiveConfig(
            temperature=v["encoder.temperature"],
            batch_size=v["encoder.batch_size"],
            iterations=v["encoder.iterations"],
            sigma_aug=v["encoder.sigma_aug"],
            lr=v["encoder.lr"],
        )

    def mapper(self) -> MapperConfig:
        v = self.values
        return MapperConfig(
            omega_dim=v["mapper.omega_dim"],
            hidden=(v["mapper.hidden"],) * 2,
            lambda_eps=v["mapper.lambda_eps"],
            iterations=v["mapper.iterations"],
            batch_size=v["mapper.batch_size"],
            lr=v["mapper.lr"],
        )

    def decoder(self, mode: LatentSamplingMode | str) -> DecoderTrainConfig:
        v = self.values
        return DecoderTrainConfig(
            mode=LatentSamplingMode(mode),
            lambda_x=v["decoder.lambda_x"],
            gamma_rec=v["decoder.gamma_rec"],
            iterations=v["decoder.iterations"],
            batch_size=v["decoder.batch_size"],
            lr=v["decoder.lr"],
            fixed_bundle_policy=v["decoder.fixed_bundle_policy"],
            bundle_seed=v["decoder.bundle_seed"],
            noise_dim=v["decoder.noise_dim"],
        )

    def to_text(self, keys=None) -> str:
        keys = SCHEMA if keys is None else keys
        return "".join(f"{k} = {self.values[k]}\n" for k in keys)

    def hash(self, prefixes: tuple[str, ...] | None = None) -> str:
        """Fingerprint of all keys (or only those under ``prefixes``)."""
        if prefixes is None:
            keys = list(SCHEMA)
        else:
            keys = [k for k in SCHEMA if k.split(".")[0] in prefixes or k in prefixes]
        return fingerprint(self.to_text(keys))

    def with_overrides(self, overrides: dict[str, str]) -> "ExperimentConfig":
        values = dict(self.values)
        values.update(_convert(overrides))
        return ExperimentConfig(values)


def _convert(raw: dict[str, str]) -> dict:
    out = {}
    for key, text in raw.items():
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown key")
        conv = SCHEMA[key][0]
        try:
            out[key] = conv(str(text).strip())
        except ValueError as exc:
            raise ConfigError(f"{key}: invalid value {text!r} ({exc})") from None
    return out


def parse_overrides(items: list[str]) -> dict[str, str]:
    """Turn ``["a.b=1", "c=x"]`` into a dict, rejecting malformed items."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"{item}: expected key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def parse_config(
    path: str | Path | None = None,
    overrides: list[str] | dict[str, str] | None = None,
) -> ExperimentConfig:
    """Defaults, then the file (if any), then ``key=value`` overrides."""
    values = {k: default for k, (_, default) in SCHEMA.items()}
    if path is not None:
        values.update(_convert(parse_config_text(Path(path).read_text(), str(path))))
    if overrides:
        if not isinstance(overrides, dict):
            overrides = parse_overrides(list(overrides))
        values.update(_convert(overrides))
    return ExperimentConfig(values)
