"""
End-to-end fusion network.

    X_up = bicubic(X, r)
    S_pe = spectral_encoder(X)                      [h, w, D1]
    S_pa = spatial_encoder(concat(X_up, Y))         [H, W, D2]
    E    = fuse(S_pe, S_pa)                         [H, W, C]
    out  = decoder(E) + X_up                        [H, W, S]

`fuse` is the implicit feature fusion by default; the upsampler switch swaps it for
a fixed resampler or a sub-pixel convolution over the LR codes.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from inffusion.core import ops
from inffusion.core.grid import QueryTable, all_queries, normalized_grid
from inffusion.core.inf3 import build_f2, check_fusion_mlp, fuse_map, lr_codes
from inffusion.core.kernels import Layer, mlp_forward
from inffusion.core.optim import Parameter, uniform_init
from inffusion.core.resample import Kernel, bicubic_upsample, upsample_tensor
from inffusion.core.tensor import Tensor, TensorLike, as_tensor
from inffusion.errors import ArchitectureMismatchError, ShapeError, UnknownModeError
from inffusion.schemas.configs import FusionConfig, ModelConfig, Upsampler

logger = logging.getLogger(__name__)


@dataclass
class ModelParams:
    """Named parameters of one network plus the architecture that shaped them"""
    arch: ModelConfig
    tensors: Dict[str, Parameter] = field(default_factory=dict)
    trainable: bool = True

    def __getitem__(self, name: str) -> Tensor:
        tensor = self.tensors[name].tensor
        return tensor if self.trainable else tensor.detach()

    def frozen(self) -> "ModelParams":
        """View over the same buffers that builds no gradient graph"""
        return ModelParams(self.arch, self.tensors, trainable=False)

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self.tensors.values())

    def add(self, name: str, data: np.ndarray) -> None:
        self.tensors[name] = Parameter(name, Tensor(data))

    def layers(self, prefix: str) -> List[Layer]:
        out: List[Layer] = []
        k = 0
        while f"{prefix}.{k}.weight" in self.tensors:
            out.append((self[f"{prefix}.{k}.weight"], self[f"{prefix}.{k}.bias"]))
            k += 1
        return out

    def parameters(self) -> List[Parameter]:
        return list(self.tensors.values())

    def count(self) -> int:
        return int(sum(p.data.size for p in self.tensors.values()))

    def zero_(self) -> "ModelParams":
        for p in self.tensors.values():
            p.data[...] = 0.0
        return self


def _require_bands(arch: ModelConfig) -> Tuple[int, int]:
    if arch.bands is None or arch.msi_bands is None:
        raise ShapeError("architecture needs both band counts before parameters exist", axis="S")
    return arch.bands, arch.msi_bands


def _conv_stack(params: ModelParams, rng: np.random.Generator, prefix: str,
                c_in: int, c_out: int, depth: int, k: int) -> None:
    for i in range(depth):
        fan_in = (c_in if i == 0 else c_out) * k * k
        params.add(f"{prefix}.{i}.weight", uniform_init(rng, (c_out, c_in if i == 0 else c_out, k, k), fan_in))
        params.add(f"{prefix}.{i}.bias", uniform_init(rng, (c_out,), fan_in))


def init_params(arch: ModelConfig, seed: int = 0) -> ModelParams:
    """
    Fresh parameters drawn U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from one seeded
    generator, in a fixed name order so equal seeds give equal networks.
    """
    bands, msi_bands = _require_bands(arch)
    f = arch.fusion
    rng = np.random.default_rng(seed)
    params = ModelParams(arch)
    _conv_stack(params, rng, "spectral", bands, f.d1, arch.spectral_depth, arch.kernel_size)
    _conv_stack(params, rng, "spatial", bands + msi_bands, f.d2, arch.spatial_depth, arch.kernel_size)

    width = arch.mlp_in_width
    for i in range(f.mlp_depth):
        fan_in = width if i == 0 else f.c
        params.add(f"fusion.{i}.weight", uniform_init(rng, (f.c, fan_in), fan_in))
        params.add(f"fusion.{i}.bias", uniform_init(rng, (f.c,), fan_in))

    if arch.upsampler is Upsampler.PIXEL_SHUFFLE:
        codes = f.f1_width
        fan_in = codes * 9
        params.add("shuffle.0.weight", uniform_init(rng, (codes * f.r * f.r, codes, 3, 3), fan_in))
        params.add("shuffle.0.bias", uniform_init(rng, (codes * f.r * f.r,), fan_in))

    k = arch.decoder_kernel
    params.add("decoder.0.weight", uniform_init(rng, (f.c, f.c, k, k), f.c * k * k))
    params.add("decoder.0.bias", uniform_init(rng, (f.c,), f.c * k * k))
    params.add("decoder.1.weight", uniform_init(rng, (bands, f.c, k, k), f.c * k * k))
    params.add("decoder.1.bias", uniform_init(rng, (bands,), f.c * k * k))
    logger.debug(f"Initialized {len(params.tensors)} tensors, {params.count()} scalars (seed={seed})")
    return params


def _conv_hwc(x: Tensor, layers: List[Layer], activation: bool = True) -> Tensor:
    """'Same'-padded conv stack on an [H, W, C] map with relu between layers"""
    y = ops.hwc_to_nchw(x)
    for i, (weight, bias) in enumerate(layers):
        if i and activation:
            y = ops.relu(y)
        y = ops.conv2d(y, weight, bias, padding=weight.shape[-1] // 2)
    return ops.nchw_to_hwc(y)


def encode_spectral(x: TensorLike, params: ModelParams) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[-1] != params.arch.bands:
        raise ShapeError(
            f"LR-HSI {x.shape} does not carry S={params.arch.bands} bands",
            axis="S", expected=params.arch.bands, got=x.shape[-1] if x.ndim else None,
        )
    return _conv_hwc(x, params.layers("spectral"))


def encode_spatial(x_up: TensorLike, y: TensorLike, params: ModelParams) -> Tensor:
    x_up, y = as_tensor(x_up), as_tensor(y)
    if x_up.shape[:2] != y.shape[:2]:
        raise ShapeError(f"upsampled LR-HSI {x_up.shape} and HR-MSI {y.shape} differ in extent",
                         axis="H" if x_up.shape[0] != y.shape[0] else "W")
    expected = params.arch.bands + params.arch.msi_bands
    if x_up.shape[-1] + y.shape[-1] != expected:
        raise ShapeError(
            f"spatial encoder reads S+s={expected} channels, got {x_up.shape[-1]}+{y.shape[-1]}",
            axis="S+s", expected=expected, got=x_up.shape[-1] + y.shape[-1],
        )
    return _conv_hwc(ops.concat_channels([x_up, y]), params.layers("spatial"))


def decode(e: TensorLike, params: ModelParams) -> Tensor:
    e = as_tensor(e)
    c = params.arch.fusion.c
    if e.ndim != 3 or e.shape[-1] != c:
        raise ShapeError(f"decoder reads C={c} channels, got {e.shape}", axis="C", expected=c)
    return _conv_hwc(e, params.layers("decoder"), activation=params.arch.decoder_activation)


@lru_cache(maxsize=16)
def query_table(height: int, width: int, lr_height: int, lr_width: int) -> QueryTable:
    return all_queries(normalized_grid(height, width), lr_height, lr_width)


def _check_ratio(x: Tensor, y: Tensor, r: int) -> None:
    h, w = x.shape[:2]
    H, W = y.shape[:2]
    if (H, W) != (r * h, r * w):
        raise ShapeError(f"HR-MSI {H}x{W} is not r={r} times LR-HSI {h}x{w}",
                         axis="H" if H != r * h else "W", r=r)


def _resampled_features(s_pe: Tensor, s_pa: Tensor, mode: Upsampler,
                        cfg: FusionConfig, params: ModelParams) -> Tensor:
    """Lift the LR codes with a fixed or sub-pixel upsampler, then apply the fusion mlp"""
    codes = lr_codes(s_pe, s_pa, cfg)
    if mode is Upsampler.PIXEL_SHUFFLE:
        layers = params.layers("shuffle")
        if not layers:
            raise ArchitectureMismatchError("pixel_shuffle upsampler needs shuffle.* parameters",
                                            mode=mode.value)
        weight, bias = layers[0]
        y = ops.conv2d(ops.hwc_to_nchw(codes), weight, bias, padding=weight.shape[-1] // 2)
        lifted = ops.nchw_to_hwc(ops.pixel_shuffle(y, cfg.r))
    else:
        lifted = upsample_tensor(codes, cfg.r, Kernel(mode.value))
    feats = build_f2(lifted, s_pa, cfg)
    mlp = params.layers("fusion")
    check_fusion_mlp(mlp, feats.shape[-1], cfg.c)
    return mlp_forward(feats, mlp)


def upsample_ablation(
    x: TensorLike,
    y: TensorLike,
    mode: Union[Upsampler, str],
    params: ModelParams,
    cfg: Optional[FusionConfig] = None,
    block_size: Optional[int] = None,
) -> Tensor:
    """Full network with the feature upsampler chosen by `mode`; encoders and decoder stay"""
    try:
        mode = Upsampler(mode)
    except ValueError:
        raise UnknownModeError(f"unknown upsampler {mode!r}", mode=str(mode))
    cfg = cfg or params.arch.fusion
    x, y = as_tensor(x), as_tensor(y)
    if x.ndim != 3 or y.ndim != 3:
        raise ShapeError(f"inputs must be [rows, cols, bands], got {x.shape} and {y.shape}", axis="rank")
    _check_ratio(x, y, cfg.r)

    x_up = bicubic_upsample(x.data, cfg.r)
    s_pe = encode_spectral(x, params)
    s_pa = encode_spatial(x_up, y, params)
    if mode is Upsampler.INF3:
        queries = query_table(y.shape[0], y.shape[1], x.shape[0], x.shape[1])
        fused = fuse_map(s_pe, s_pa, queries, cfg, params.layers("fusion"), block_size=block_size)
    else:
        fused = _resampled_features(s_pe, s_pa, mode, cfg, params)
    return ops.add(decode(fused, params), x_up)


def forward(
    x: TensorLike,
    y: TensorLike,
    params: ModelParams,
    cfg: Optional[FusionConfig] = None,
    block_size: Optional[int] = None,
) -> Tensor:
    return upsample_ablation(x, y, params.arch.upsampler, params, cfg, block_size)


def predict(x: np.ndarray, y: np.ndarray, params: ModelParams,
            block_size: Optional[int] = None) -> np.ndarray:
    """Forward pass on plain arrays with no graph kept"""
    return forward(Tensor(x), Tensor(y), params.frozen(), block_size=block_size).data
