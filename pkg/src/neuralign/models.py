"""Parameter containers and forward passes for autoencoders and mapping nets.

Every network is a plain multilayer perceptron: affine layers with a bounded
activation on hidden layers and identity on the output. Weights use Glorot
uniform init, biases start at zero, and construction is deterministic in the
seed so whole training runs are bit-reproducible.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError

_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


@dataclass
class Mlp:
    layer_dims: list[int]
    weights: list[Tensor]  # layer l: (layer_dims[l+1], layer_dims[l])
    biases: list[Tensor]  # layer l: (layer_dims[l+1],)
    activation: str

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]


def mlp_init(layer_dims: list[int], activation: str = "tanh", seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases, deterministic in (dims, seed)."""
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ConfigurationError(f"invalid layer dims {layer_dims}")
    if activation not in _ACTIVATIONS:
        raise ConfigurationError(f"unsupported activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        weights.append(Tensor(w, requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return Mlp(list(layer_dims), weights, biases, activation)


def mlp_forward(mlp: Mlp, x: Tensor) -> Tensor:
    """Batched forward pass: rows are samples, columns are features."""
    if x.data.ndim != 2 or x.shape[1] != mlp.in_dim:
        raise DimensionError(
            f"mlp_forward: input shape {x.shape} does not match input dim {mlp.in_dim}")
    act = _ACTIVATIONS[mlp.activation]
    h = x
    last = len(mlp.weights) - 1
    for l, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = ad.add(ad.matmul(h, ad.transpose(w)), b)
        if l != last:
            h = act(h)
    return h


def mlp_param_count(mlp: Mlp) -> int:
    return sum(w.size + b.size for w, b in zip(mlp.weights, mlp.biases))


@dataclass
class Autoencoder:
    encoder: Mlp
    decoder: Mlp
    modality: str  # video | fmri | emotion

    def __post_init__(self):
        if self.encoder.out_dim != self.decoder.in_dim:
            raise ConfigurationError(
                f"{self.modality} autoencoder: encoder output dim "
                f"{self.encoder.out_dim} != decoder input dim {self.decoder.in_dim}")
        if self.decoder.out_dim != self.encoder.in_dim:
            raise ConfigurationError(
                f"{self.modality} autoencoder: decoder output dim "
                f"{self.decoder.out_dim} != encoder input dim {self.encoder.in_dim}")

    @property
    def embedding_dim(self) -> int:
        return self.encoder.out_dim


@dataclass
class MappingNetwork:
    net: Mlp
    direction: str  # f_to_v | e_to_f


def autoencoder_forward(ae: Autoencoder, x: Tensor) -> tuple[Tensor, Tensor]:
    """Return (embedding, reconstruction) for a batch of rows."""
    embedding = mlp_forward(ae.encoder, x)
    reconstruction = mlp_forward(ae.decoder, embedding)
    return embedding, reconstruction


@dataclass
class ModelBundle:
    video_ae: Optional[Autoencoder] = None
    fmri_ae: Optional[Autoencoder] = None
    map_f_to_v: Optional[MappingNetwork] = None
    emotion_ae: Optional[Autoencoder] = None
    map_e_to_f: Optional[MappingNetwork] = None
    prototypes: object = None  # losses.Prototypes once stage 3 is prepared

    def components(self) -> dict[str, object]:
        present = {}
        for name in COMPONENT_ORDER:
            value = getattr(self, name)
            if value is not None:
                present[name] = value
        return present

    def validate_chain(self) -> None:
        """Check that embedding dimensions compose along the decode pathway."""
        if self.map_f_to_v is not None:
            if self.fmri_ae is not None and \
                    self.map_f_to_v.net.in_dim != self.fmri_ae.embedding_dim:
                raise ConfigurationError("map_f_to_v input dim != fmri embedding dim")
            if self.video_ae is not None and \
                    self.map_f_to_v.net.out_dim != self.video_ae.embedding_dim:
                raise ConfigurationError("map_f_to_v output dim != video embedding dim")
        if self.map_e_to_f is not None:
            if self.emotion_ae is not None and \
                    self.map_e_to_f.net.in_dim != self.emotion_ae.embedding_dim:
                raise ConfigurationError("map_e_to_f input dim != emotion embedding dim")
            if self.fmri_ae is not None and \
                    self.map_e_to_f.net.out_dim != self.fmri_ae.embedding_dim:
                raise ConfigurationError("map_e_to_f output dim != fmri embedding dim")


COMPONENT_ORDER = ("video_ae", "fmri_ae", "map_f_to_v", "emotion_ae", "map_e_to_f")


def _component_mlps(name: str, component) -> list[tuple[str, Mlp]]:
    if isinstance(component, Autoencoder):
        return [(f"{name}.encoder", component.encoder), (f"{name}.decoder", component.decoder)]
    return [(f"{name}.net", component.net)]


def named_parameters(bundle: ModelBundle,
                     subset: Optional[set[str]] = None) -> list[tuple[str, Tensor]]:
    """All parameters in fixed manifest order, optionally limited to a subset."""
    if subset is not None:
        unknown = set(subset) - set(COMPONENT_ORDER)
        if unknown:
            raise ConfigurationError(f"unknown component(s) {sorted(unknown)}")
    params = []
    for name, component in bundle.components().items():
        if subset is not None and name not in subset:
            continue
        for prefix, mlp in _component_mlps(name, component):
            for l, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
                params.append((f"{prefix}.w{l}", w))
                params.append((f"{prefix}.b{l}", b))
    return params


ParamSnapshot = dict[str, np.ndarray]


def snapshot_params(bundle: ModelBundle, subset: Optional[set[str]] = None) -> ParamSnapshot:
    """Deep copy of the selected parameters, keyed by manifest name."""
    if subset is not None:
        missing = {s for s in subset if getattr(bundle, s, None) is None
                   and s in COMPONENT_ORDER}
        if missing:
            raise ConfigurationError(f"component(s) not present in bundle: {sorted(missing)}")
    return {name: t.data.copy() for name, t in named_parameters(bundle, subset)}


def assert_unchanged(snapshot: ParamSnapshot, bundle: ModelBundle) -> bool:
    """True iff every snapshotted parameter is bit-identical in the bundle."""
    current = dict(named_parameters(bundle))
    for name, saved in snapshot.items():
        live = current.get(name)
        if live is None or live.data.tobytes() != saved.tobytes():
            return False
    return True


@dataclass
class ArchitectureConfig:
    """Layer sizing for all five networks. Input dims come from the dataset."""

    video_embedding_dim: int = 16
    fmri_embedding_dim: int = 16
    emotion_embedding_dim: int = 8
    video_hidden: list[int] = field(default_factory=lambda: [64])
    fmri_hidden: list[int] = field(default_factory=lambda: [64])
    emotion_hidden: list[int] = field(default_factory=lambda: [32])
    map_f_to_v_hidden: list[int] = field(default_factory=lambda: [32])
    map_e_to_f_hidden: list[int] = field(default_factory=lambda: [32])
    activation: str = "tanh"


# per-component ordinals keep init streams independent and reproducible
_INIT_ORDINAL = {
    "video_ae.encoder": 0, "video_ae.decoder": 1,
    "fmri_ae.encoder": 2, "fmri_ae.decoder": 3,
    "map_f_to_v": 4,
    "emotion_ae.encoder": 5, "emotion_ae.decoder": 6,
    "map_e_to_f": 7,
}


def _seed_for(component: str, seed: int) -> int:
    return int(np.random.SeedSequence((seed, _INIT_ORDINAL[component])).generate_state(1)[0])


def build_autoencoder(modality: str, input_dim: int, hidden: list[int],
                      embedding_dim: int, activation: str, seed: int) -> Autoencoder:
    enc_dims = [input_dim, *hidden, embedding_dim]
    dec_dims = [embedding_dim, *reversed(hidden), input_dim]
    prefix = f"{modality}_ae"
    encoder = mlp_init(enc_dims, activation, _seed_for(f"{prefix}.encoder", seed))
    decoder = mlp_init(dec_dims, activation, _seed_for(f"{prefix}.decoder", seed))
    return Autoencoder(encoder, decoder, modality)


def build_mapping(direction: str, in_dim: int, hidden: list[int], out_dim: int,
                  activation: str, seed: int) -> MappingNetwork:
    name = "map_f_to_v" if direction == "f_to_v" else "map_e_to_f"
    net = mlp_init([in_dim, *hidden, out_dim], activation, _seed_for(name, seed))
    return MappingNetwork(net, direction)


def set_requires_grad(bundle: ModelBundle, trainable: set[str]) -> None:
    """Mark the given components trainable and everything else frozen."""
    unknown = trainable - set(COMPONENT_ORDER)
    if unknown:
        raise ConfigurationError(f"unknown component(s) {sorted(unknown)}")
    for name, component in bundle.components().items():
        flag = name in trainable
        for _, mlp in _component_mlps(name, component):
            for t in (*mlp.weights, *mlp.biases):
                t.requires_grad = flag


def clone_bundle(bundle: ModelBundle) -> ModelBundle:
    return copy.deepcopy(bundle)
