"""Full detector: temporal branch + frequency branch, cross-attention fusion,
BiLSTM classifier. Parameters live in one flat name -> Tensor dict; names
under ``encoder.`` form the reduced-learning-rate group.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc
from .classifier import bilstm_forward, init_classifier, pool_and_logits
from .errors import ConfigError
from .freq import POOLED_STEPS, BatchNormState, SincBank, pool_norm_project, pre_emphasis, sinc_filterbank
from .fusion import cross_attention, init_attention
from .losses import BonaFideCenter
from .temporal import breathfilm, init_encoder, sls_aggregate, toy_encoder

ENCODER_PREFIX = "encoder."


@dataclass
class ModelDims:
    n_layers: int = 4
    dim: int = 64
    n_filters: int = 16
    kernel_size: int = 65
    stride: int = 160
    heads: int = 4
    film_hidden: int = 64
    lstm_hidden: tuple = (64, 32)
    sample_rate: int = 16000
    min_band_hz: float = 50.0
    pre_emphasis: float = 0.97

    def __post_init__(self):
        self.lstm_hidden = tuple(int(h) for h in self.lstm_hidden)
        if self.n_layers < 1 or self.dim < 1 or self.n_filters < 1 or self.film_hidden < 1:
            raise ConfigError(f"model dimensions must be positive: {self}")
        if self.dim % self.heads:
            raise ConfigError(f"model width {self.dim} is not divisible by {self.heads} heads")
        if self.kernel_size % 2 != 1:
            raise ConfigError(f"sinc kernel length must be odd, got {self.kernel_size}")
        if not self.lstm_hidden:
            raise ConfigError("at least one BiLSTM layer is required")

    @classmethod
    def full_scale(cls):
        return cls(n_layers=4, dim=1024, n_filters=64, kernel_size=129, heads=8,
                   film_hidden=512, lstm_hidden=(512, 256))


@dataclass(frozen=True)
class Variant:
    name: str
    use_film: bool = True
    use_freq: bool = True
    use_feature: bool = True
    use_pscl: bool = True
    use_center: bool = True
    use_contrast: bool = True


VARIANTS = {
    v.name: v
    for v in (
        Variant("full"),
        Variant("no_film", use_film=False),
        Variant("no_freq", use_freq=False),
        Variant("no_feature_loss", use_feature=False),
        Variant("no_pscl", use_pscl=False),
        Variant("no_center", use_center=False),
        Variant("no_contrast", use_contrast=False),
    )
}


@dataclass
class ForwardOutput:
    logits: dc.Tensor
    embedding: dc.Tensor
    x_temp: dc.Tensor
    x_freq: dc.Tensor | None
    fused: dc.Tensor
    sls_weights: dc.Tensor
    gate: dc.Tensor | None
    attention: dc.Tensor | None


def _prefixed(prefix, arrays):
    return {f"{prefix}{k}": dc.Tensor(v, requires_grad=True, name=f"{prefix}{k}") for k, v in arrays.items()}


@dataclass
class Model:
    dims: ModelDims
    params: dict
    bn: BatchNormState
    center: BonaFideCenter
    variant: Variant = field(default_factory=lambda: VARIANTS["full"])

    @classmethod
    def init(cls, dims=None, seed=0, variant="full"):
        dims = dims or ModelDims()
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
        rng = np.random.default_rng(seed)
        D = dims.dim
        params = _prefixed("encoder.", init_encoder(rng, dims.n_layers, D))
        params.update(_prefixed("sls.", {"u": rng.standard_normal(D) / np.sqrt(D), "b": np.zeros(())}))
        params.update(_prefixed("film.", {
            "w1": rng.standard_normal((1, dims.film_hidden)),
            # wide enough that breath-frame gates start well away from 1.5
            "w2": rng.standard_normal((dims.film_hidden, D)) * 3.0 / np.sqrt(dims.film_hidden),
        }))
        bank = SincBank.mel_init(dims.n_filters, dims.kernel_size, dims.stride, dims.sample_rate,
                                 min_band_hz=dims.min_band_hz)
        F = dims.n_filters
        params.update(_prefixed("freq.", {
            "low_raw": bank.low_raw.data,
            "band_raw": bank.band_raw.data,
            "bn_gamma": np.ones(F),
            "bn_beta": np.zeros(F),
            "proj_w": rng.standard_normal((F, D)) / np.sqrt(F),
            "proj_b": np.zeros(D),
        }))
        params.update(_prefixed("attn.", init_attention(rng, D, dims.heads)))
        params.update(_prefixed("cls.", init_classifier(rng, D, dims.lstm_hidden)))
        return cls(dims, params, BatchNormState.fresh(F), BonaFideCenter(D), VARIANTS[variant])

    # parameter bookkeeping

    def sinc_bank(self):
        d = self.dims
        return SincBank(self.params["freq.low_raw"], self.params["freq.band_raw"],
                        d.kernel_size, d.stride, d.sample_rate, d.min_band_hz)

    def group(self, prefix):
        """Parameters under ``prefix`` keyed by their short (unprefixed) names."""
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    def encoder_names(self):
        return sorted(k for k in self.params if k.startswith(ENCODER_PREFIX))

    def head_names(self):
        return sorted(k for k in self.params if not k.startswith(ENCODER_PREFIX))

    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def state_arrays(self):
        """Every array needed to reproduce inference and resume the center."""
        out = {f"param/{k}": v.data for k, v in self.params.items()}
        out["buffer/bn_mean"] = self.bn.running_mean
        out["buffer/bn_var"] = self.bn.running_var
        out["buffer/center"] = self.center.c
        out["buffer/center_initialized"] = np.array(float(self.center.initialized))
        return out

    def load_state_arrays(self, arrays):
        for k, p in self.params.items():
            value = np.asarray(arrays[f"param/{k}"], dtype=np.float64)
            if value.shape != p.shape:
                raise ConfigError(f"checkpoint tensor {k} has shape {value.shape}, model expects {p.shape}")
            p.data = value.copy()
        self.bn.running_mean = np.array(arrays["buffer/bn_mean"], dtype=np.float64)
        self.bn.running_var = np.array(arrays["buffer/bn_var"], dtype=np.float64)
        self.center.c = np.array(arrays["buffer/center"], dtype=np.float64)
        self.center.initialized = bool(float(arrays["buffer/center_initialized"]))

    def dims_dict(self):
        d = asdict(self.dims)
        d["lstm_hidden"] = list(d["lstm_hidden"])
        return d

    # forward

    def forward(self, wave, mask, training=False):
        """``wave`` (N, S) samples, ``mask`` (N, T) breath bits -> ForwardOutput."""
        p = self.params
        wave = np.atleast_2d(np.asarray(wave, dtype=np.float64))
        layers = toy_encoder(wave, self.group(ENCODER_PREFIX), self.dims.n_layers)
        x_tilde, sls_w = sls_aggregate(layers, p["sls.u"], p["sls.b"])
        gate = None
        if self.variant.use_film:
            x_temp, gate = breathfilm(x_tilde, mask, p["film.w1"], p["film.w2"])
        else:
            x_temp = x_tilde
        x_freq = attn = None
        if self.variant.use_freq:
            emphasized = pre_emphasis(wave, self.dims.pre_emphasis)
            fmap = sinc_filterbank(emphasized, self.sinc_bank())
            x_freq = pool_norm_project(fmap, p["freq.bn_gamma"], p["freq.bn_beta"], self.bn,
                                       p["freq.proj_w"], p["freq.proj_b"], training)
            fused, attn = cross_attention(x_freq, x_temp, self.group("attn."), self.dims.heads)
        else:
            fused = dc.adaptive_avg_pool(x_temp, POOLED_STEPS)
        embedding = dc.mean(fused, axis=1)
        n_lstm = len(self.dims.lstm_hidden)
        cls_params = self.group("cls.")
        seq = bilstm_forward(fused, cls_params, n_lstm)
        logits = pool_and_logits(seq, cls_params["head_w"], cls_params["head_b"])
        return ForwardOutput(logits, embedding, x_temp, x_freq, fused, sls_w, gate, attn)


def detection_scores(logits):
    """Bona fide logit minus spoof logit, per row."""
    z = dc.as_tensor(logits).data
    return z[:, 1] - z[:, 0]
