from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError


class ModelFamily(str, enum.Enum):
    LSTM = "LSTM"
    CNN_LSTM = "CNN_LSTM"
    TRANSFORMER = "TRANSFORMER"
    DLINEAR = "DLINEAR"
    ITRANSFORMER = "ITRANSFORMER"
    TIMESNET = "TIMESNET"
    MAMBA = "MAMBA"
    TIMEMIXER = "TIMEMIXER"
    TIMEXER = "TIMEXER"

    @property
    def uses_time_features(self) -> bool:
        """Calendar covariates are fed only to the recent time-series architectures."""
        return self not in BASELINES

    @property
    def display_name(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def parse(cls, value: "str | ModelFamily") -> "ModelFamily":
        if isinstance(value, ModelFamily):
            return value
        key = str(value).upper().replace("-", "_")
        for fam in cls:
            if key in (fam.value, fam.display_name.upper().replace("-", "_")):
                return fam
        raise ConfigError(f"unknown model family {value!r}")


BASELINES = frozenset({ModelFamily.LSTM, ModelFamily.CNN_LSTM, ModelFamily.TRANSFORMER})

_DISPLAY = {
    ModelFamily.LSTM: "LSTM",
    ModelFamily.CNN_LSTM: "CNN-LSTM",
    ModelFamily.TRANSFORMER: "Transformer",
    ModelFamily.DLINEAR: "DLinear",
    ModelFamily.ITRANSFORMER: "iTransformer",
    ModelFamily.TIMESNET: "TimesNet",
    ModelFamily.MAMBA: "Mamba",
    ModelFamily.TIMEMIXER: "TimeMixer",
    ModelFamily.TIMEXER: "TimeXer",
}

# architecture constants not covered by the tuning grid, per family
REFERENCE_DEFAULTS: dict[ModelFamily, dict] = {
    ModelFamily.LSTM: {},
    ModelFamily.CNN_LSTM: {"pool": 2},
    ModelFamily.TRANSFORMER: {"n_heads": 8, "ff_mult": 4},
    ModelFamily.DLINEAR: {"moving_avg": 25},
    ModelFamily.ITRANSFORMER: {"n_heads": 8, "ff_mult": 4},
    ModelFamily.TIMESNET: {"top_k": 5, "num_kernels": 6, "ff_mult": 1},
    ModelFamily.MAMBA: {"d_state": 16, "d_conv": 4, "expand": 2},
    ModelFamily.TIMEMIXER: {"down_sampling_layers": 3, "down_sampling_window": 2, "moving_avg": 25, "ff_mult": 2},
    ModelFamily.TIMEXER: {"n_heads": 8, "ff_mult": 4, "patch_len": 16},
}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of one forecaster.

    ``model_dim``/``n_layers`` are unused by DLinear; ``cnn_filters`` and
    ``cnn_kernel`` exist only for CNN-LSTM. ``extra`` overrides entries of
    :data:`REFERENCE_DEFAULTS`.
    """

    family: ModelFamily
    lookback: int = 336
    horizon: int = 48
    n_features: int = 1
    model_dim: int | None = None
    n_layers: int | None = None
    cnn_filters: int | None = None
    cnn_kernel: int | None = None
    dropout: float = 0.1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        fam = ModelFamily.parse(self.family)
        object.__setattr__(self, "family", fam)
        if self.lookback < 1 or self.horizon < 1 or self.n_features < 1:
            raise ConfigError("lookback, horizon and n_features must be positive")
        if fam is ModelFamily.CNN_LSTM:
            if self.cnn_filters is None or self.cnn_kernel is None:
                raise ConfigError("CNN_LSTM requires cnn_filters and cnn_kernel")
            if self.cnn_kernel < 1 or self.cnn_filters < 1:
                raise ConfigError("cnn_filters and cnn_kernel must be positive")
        elif self.cnn_filters is not None or self.cnn_kernel is not None:
            raise ConfigError(f"cnn_filters/cnn_kernel are only valid for CNN_LSTM, not {fam.value}")
        if fam is ModelFamily.DLINEAR:
            if self.model_dim is not None or self.n_layers is not None:
                raise ConfigError("DLINEAR has no model_dim or n_layers")
        else:
            if self.model_dim is None:
                object.__setattr__(self, "model_dim", 64)
            if self.n_layers is None:
                object.__setattr__(self, "n_layers", 1 if fam is ModelFamily.CNN_LSTM else 2)
            if self.model_dim < 1 or self.n_layers < 1:
                raise ConfigError("model_dim and n_layers must be positive")
        unknown = set(self.extra) - set(REFERENCE_DEFAULTS[fam])
        if unknown:
            raise ConfigError(f"unknown options for {fam.value}: {sorted(unknown)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    def option(self, name: str):
        return self.extra.get(name, REFERENCE_DEFAULTS[self.family][name])

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
