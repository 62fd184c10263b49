"""DeepONet surrogate of the predictor operator.

A branch MLP encodes the finite-dimensional query (state, input profile on a
fixed grid, delay estimate) into per-component coefficient vectors; a trunk
MLP maps an evaluation coordinate s in [0, 1] to a shared basis; their inner
product plus a bias gives the predicted state at s.  Inputs and outputs are
standardized with statistics stored alongside the weights, since the raw
features (concentrations up to ~40, delays of order 1) live on very
different scales.

Weight files are binary ("NOPF1"): magic, a length-prefixed JSON metadata
block (architecture, normalization, creation seed), then the flat float64
weight arrays in declared layer order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"NOPF1"
_ACTIVATIONS = ("tanh", "relu")


class WeightFileError(ValueError):
    """Raised when a weight file fails validation on load."""


@dataclass(frozen=True)
class SurrogateArchitecture:
    """Shape descriptor: layer widths, latent dimension, activation."""

    state_dim: int = 2
    input_grid_size: int = 41  # samples of the input profile consumed
    branch_layers: tuple[int, ...] = (128, 128, 128)
    trunk_layers: tuple[int, ...] = (128, 128)
    latent_dim: int = 48
    activation: str = "tanh"

    def __post_init__(self):
        if self.state_dim < 1 or self.input_grid_size < 2 or self.latent_dim < 1:
            raise ValueError("state_dim, input_grid_size, latent_dim out of range")
        if any(w < 1 for w in self.branch_layers) or any(w < 1 for w in self.trunk_layers):
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def branch_input_dim(self) -> int:
        return self.state_dim + self.input_grid_size + 1

    @property
    def branch_dims(self) -> tuple[int, ...]:
        return (self.branch_input_dim, *self.branch_layers,
                self.state_dim * self.latent_dim)

    @property
    def trunk_dims(self) -> tuple[int, ...]:
        return (1, *self.trunk_layers, self.latent_dim)

    def to_dict(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "input_grid_size": self.input_grid_size,
            "branch_layers": list(self.branch_layers),
            "trunk_layers": list(self.trunk_layers),
            "latent_dim": self.latent_dim,
            "activation": self.activation,
        }

    @staticmethod
    def from_dict(d: dict) -> "SurrogateArchitecture":
        return SurrogateArchitecture(
            state_dim=int(d["state_dim"]),
            input_grid_size=int(d["input_grid_size"]),
            branch_layers=tuple(int(w) for w in d["branch_layers"]),
            trunk_layers=tuple(int(w) for w in d["trunk_layers"]),
            latent_dim=int(d["latent_dim"]),
            activation=str(d["activation"]),
        )


@dataclass
class SurrogateParams:
    """Weights plus normalization statistics; immutable by convention."""

    architecture: SurrogateArchitecture
    branch_weights: list  # [(W, b), ...] with W (in, out)
    trunk_weights: list
    output_bias: np.ndarray
    input_mean: np.ndarray
    input_scale: np.ndarray
    output_mean: np.ndarray
    output_scale: np.ndarray
    creation_seed: int = 0

    def validate(self) -> "SurrogateParams":
        arch = self.architecture
        for name, weights, dims in (("branch", self.branch_weights, arch.branch_dims),
                                    ("trunk", self.trunk_weights, arch.trunk_dims)):
            if len(weights) != len(dims) - 1:
                raise WeightFileError(f"{name} network has {len(weights)} layers, "
                                      f"architecture declares {len(dims) - 1}")
            for i, (w, b) in enumerate(weights):
                if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                    raise WeightFileError(
                        f"{name} layer {i} has shape {w.shape}/{b.shape}, "
                        f"expected {(dims[i], dims[i + 1])}/{(dims[i + 1],)}")
                if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                    raise WeightFileError(f"{name} layer {i} has non-finite entries")
        if self.output_bias.shape != (arch.state_dim,):
            raise WeightFileError("output_bias shape mismatch")
        f = arch.branch_input_dim
        if self.input_mean.shape != (f,) or self.input_scale.shape != (f,):
            raise WeightFileError(
                f"input normalization length {self.input_mean.shape[0]} does not "
                f"match state_dim + input_grid_size + 1 = {f}")
        if self.output_mean.shape != (arch.state_dim,) or self.output_scale.shape != (arch.state_dim,):
            raise WeightFileError("output normalization shape mismatch")
        if np.any(self.input_scale <= 0) or np.any(self.output_scale <= 0):
            raise WeightFileError("normalization scales must be strictly positive")
        return self


def _act(name):
    if name == "tanh":
        return np.tanh
    return lambda x: np.maximum(x, 0.0)


def init_params(architecture: SurrogateArchitecture, seed: int = 0) -> SurrogateParams:
    """Glorot-uniform weights, zero biases, identity normalization."""
    rng = np.random.default_rng(seed)

    def make(dims):
        out = []
        for i in range(len(dims) - 1):
            bound = np.sqrt(6.0 / (dims[i] + dims[i + 1]))
            w = rng.uniform(-bound, bound, size=(dims[i], dims[i + 1]))
            out.append((w, np.zeros(dims[i + 1])))
        return out

    n = architecture.state_dim
    f = architecture.branch_input_dim
    return SurrogateParams(
        architecture=architecture,
        branch_weights=make(architecture.branch_dims),
        trunk_weights=make(architecture.trunk_dims),
        output_bias=np.zeros(n),
        input_mean=np.zeros(f),
        input_scale=np.ones(f),
        output_mean=np.zeros(n),
        output_scale=np.ones(n),
        creation_seed=seed,
    ).validate()


def branch_features(state, input_profile, d_hat) -> np.ndarray:
    """Concatenate one query into the branch input layout."""
    return np.concatenate([np.asarray(state, dtype=float).ravel(),
                           np.asarray(input_profile, dtype=float).ravel(),
                           [float(d_hat)]])


def _branch_forward(params: SurrogateParams, feats: np.ndarray) -> np.ndarray:
    act = _act(params.architecture.activation)
    h = (feats - params.input_mean) / params.input_scale
    weights = params.branch_weights
    for w, b in weights[:-1]:
        h = act(h @ w + b)
    w, b = weights[-1]
    return h @ w + b


def trunk_basis(params: SurrogateParams, s_points: np.ndarray) -> np.ndarray:
    """Trunk features t_k(s) for a set of evaluation coordinates.

    The basis depends only on the grid, so callers evaluating many queries
    on a fixed grid should compute it once and pass it to :func:`forward`.
    """
    s = np.asarray(s_points, dtype=float).reshape(-1, 1)
    if np.any(s < -1e-9) or np.any(s > 1.0 + 1e-9):
        raise ValueError("evaluation coordinates must lie in [0, 1]")
    act = _act(params.architecture.activation)
    h = s
    for w, b in params.trunk_weights:
        h = act(h @ w + b)
    return h


def forward(params: SurrogateParams, state, input_profile, d_hat: float,
            s_points, basis: np.ndarray | None = None) -> np.ndarray:
    """Predicted state profile at each s in ``s_points``; shape (S, n).

    Output component i at s is sum_k branch[i, k] * trunk_k(s) plus a bias,
    computed in normalized space and mapped back through the stored output
    statistics.
    """
    arch = params.architecture
    profile = np.asarray(input_profile, dtype=float)
    if profile.size != arch.input_grid_size:
        raise ValueError(f"input profile has {profile.size} samples, "
                         f"surrogate consumes {arch.input_grid_size}")
    state = np.asarray(state, dtype=float)
    if state.size != arch.state_dim:
        raise ValueError(f"state has {state.size} components, expected {arch.state_dim}")
    if basis is None:
        basis = trunk_basis(params, s_points)
    coeff = _branch_forward(params, branch_features(state, profile, d_hat))
    coeff = coeff.reshape(arch.state_dim, arch.latent_dim)
    out_norm = basis @ coeff.T + params.output_bias
    out = params.output_mean + params.output_scale * out_norm
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("surrogate produced a non-finite output")
    return out


def forward_batch(params: SurrogateParams, states, profiles, d_hats,
                  s_points, basis: np.ndarray | None = None) -> np.ndarray:
    """Vectorized :func:`forward` over a batch; shape (B, S, n)."""
    arch = params.architecture
    states = np.asarray(states, dtype=float)
    profiles = np.asarray(profiles, dtype=float)
    d_hats = np.asarray(d_hats, dtype=float).reshape(-1, 1)
    feats = np.concatenate([states, profiles, d_hats], axis=1)
    if feats.shape[1] != arch.branch_input_dim:
        raise ValueError("batch feature width does not match the architecture")
    if basis is None:
        basis = trunk_basis(params, s_points)
    coeff = _branch_forward(params, feats).reshape(-1, arch.state_dim, arch.latent_dim)
    out_norm = np.einsum("bnp,sp->bsn", coeff, basis) + params.output_bias
    return params.output_mean + params.output_scale * out_norm


def resample_profile(profile: np.ndarray, target_size: int) -> np.ndarray:
    """Linearly interpolate a uniform [0, 1] grid function onto another size."""
    if target_size < 2:
        raise ValueError("target_size must be >= 2")
    values = np.asarray(profile, dtype=float)
    if values.size == target_size:
        return values.copy()
    src = np.linspace(0.0, 1.0, values.size)
    dst = np.linspace(0.0, 1.0, target_size)
    return np.interp(dst, src, values)


def _flat_arrays(params: SurrogateParams):
    for w, b in params.branch_weights:
        yield w
        yield b
    for w, b in params.trunk_weights:
        yield w
        yield b
    yield params.output_bias


def save_params(params: SurrogateParams, path) -> None:
    """Write the NOPF1 binary weight file (round-trips bit-exactly)."""
    params.validate()
    meta = {
        "format": 1,
        "architecture": params.architecture.to_dict(),
        "normalization": {
            "input_mean": params.input_mean.tolist(),
            "input_scale": params.input_scale.tolist(),
            "output_mean": params.output_mean.tolist(),
            "output_scale": params.output_scale.tolist(),
        },
        "creation_seed": int(params.creation_seed),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in _flat_arrays(params):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> SurrogateParams:
    """Read and validate a NOPF1 weight file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise WeightFileError(f"{path}: not a NOPF1 weight file (bad magic)")
    (meta_len,) = struct.unpack("<I", data[len(MAGIC):len(MAGIC) + 4])
    meta_end = len(MAGIC) + 4 + meta_len
    if len(data) < meta_end:
        raise WeightFileError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(data[len(MAGIC) + 4:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFileError(f"{path}: corrupt metadata block: {exc}") from exc
    if meta.get("format") != 1:
        raise WeightFileError(f"{path}: unsupported format version {meta.get('format')!r}")
    try:
        arch = SurrogateArchitecture.from_dict(meta["architecture"])
        norm = meta["normalization"]
    except (KeyError, ValueError, TypeError) as exc:
        raise WeightFileError(f"{path}: invalid metadata: {exc}") from exc
    if len(norm.get("input_mean", ())) != arch.branch_input_dim:
        raise WeightFileError(
            f"{path}: input normalization length {len(norm.get('input_mean', ()))} "
            f"does not match state_dim + input_grid_size + 1 = {arch.branch_input_dim}")

    dims_b = arch.branch_dims
    dims_t = arch.trunk_dims
    shapes = []
    for dims in (dims_b, dims_t):
        for i in range(len(dims) - 1):
            shapes.append((dims[i], dims[i + 1]))
            shapes.append((dims[i + 1],))
    shapes.append((arch.state_dim,))
    total = sum(int(np.prod(s)) for s in shapes)
    payload = data[meta_end:]
    if len(payload) < 8 * total:
        raise WeightFileError(f"{path}: truncated weight data "
                              f"({len(payload)} bytes, expected {8 * total})")
    if len(payload) > 8 * total:
        raise WeightFileError(f"{path}: {len(payload) - 8 * total} trailing bytes")
    flat = np.frombuffer(payload, dtype="<f8")
    arrays = []
    offset = 0
    for s in shapes:
        count = int(np.prod(s))
        arrays.append(flat[offset:offset + count].reshape(s).copy())
        offset += count

    n_branch = len(dims_b) - 1
    branch = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(n_branch)]
    base = 2 * n_branch
    n_trunk = len(dims_t) - 1
    trunk = [(arrays[base + 2 * i], arrays[base + 2 * i + 1]) for i in range(n_trunk)]
    params = SurrogateParams(
        architecture=arch,
        branch_weights=branch,
        trunk_weights=trunk,
        output_bias=arrays[-1],
        input_mean=np.asarray(norm["input_mean"], dtype=float),
        input_scale=np.asarray(norm["input_scale"], dtype=float),
        output_mean=np.asarray(norm["output_mean"], dtype=float),
        output_scale=np.asarray(norm["output_scale"], dtype=float),
        creation_seed=int(meta.get("creation_seed", 0)),
    )
    return params.validate()
