"""The stochastic regression network y = f(x, z) and its training machinery.

Architecture: x and z are fed through separate two-layer branches, the
branch outputs are concatenated and passed through one more hidden layer and
a linear output layer. Every hidden layer is affine -> ReLU -> batch
normalization with 16 units by default; the output layer is purely affine.

forward/backward are exact: the backward pass differentiates through the
batch statistics used in train mode, so gradients match finite differences
of the train-mode forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BN_EPS = 1e-8
BN_MOMENTUM = 0.9
CHECKPOINT_VERSION = 1


@dataclass
class NoiseSpec:
    """Noise input specification: dim independent standard-normal components."""

    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("noise dimension must be >= 1")

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((count, self.dim))


class _Affine:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        # He-style init matches the ReLU hidden layers
        self.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        self.b = np.zeros(fan_out)


class _BatchNorm:
    def __init__(self, width: int):
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)


class _HiddenBlock:
    """affine -> ReLU -> batch norm"""

    def __init__(self, fan_in: int, width: int, rng: np.random.Generator):
        self.affine = _Affine(fan_in, width, rng)
        self.norm = _BatchNorm(width)


class GeneratorParams:
    """All weights, biases and normalization state of the generator."""

    def __init__(
        self,
        n: int,
        m: int,
        noise_dim: int = 1,
        hidden: int = 16,
        rng: np.random.Generator | None = None,
    ):
        if min(n, m, noise_dim, hidden) < 1:
            raise ValueError("all dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng()
        self.n = n
        self.m = m
        self.noise_dim = noise_dim
        self.hidden = hidden
        self.blocks_x = [_HiddenBlock(n, hidden, rng), _HiddenBlock(hidden, hidden, rng)]
        self.blocks_z = [
            _HiddenBlock(noise_dim, hidden, rng),
            _HiddenBlock(hidden, hidden, rng),
        ]
        self.trunk = _HiddenBlock(2 * hidden, hidden, rng)
        self.head = _Affine(hidden, m, rng)

    def _blocks(self):
        named = [("x0", self.blocks_x[0]), ("x1", self.blocks_x[1])]
        named += [("z0", self.blocks_z[0]), ("z1", self.blocks_z[1])]
        named += [("t0", self.trunk)]
        return named

    def named_arrays(self):
        """Trainable arrays in a fixed order, as (name, array) pairs."""
        for tag, block in self._blocks():
            yield f"{tag}.w", block.affine.w
            yield f"{tag}.b", block.affine.b
            yield f"{tag}.gamma", block.norm.gamma
            yield f"{tag}.beta", block.norm.beta
        yield "head.w", self.head.w
        yield "head.b", self.head.b

    def running_stats(self):
        for tag, block in self._blocks():
            yield f"{tag}.running_mean", block.norm.running_mean
            yield f"{tag}.running_var", block.norm.running_var

    def get_array(self, name: str) -> np.ndarray:
        for key, arr in list(self.named_arrays()) + list(self.running_stats()):
            if key == name:
                return arr
        raise KeyError(name)

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.named_arrays())

    def copy(self) -> "GeneratorParams":
        out = GeneratorParams.__new__(GeneratorParams)
        out.n, out.m = self.n, self.m
        out.noise_dim, out.hidden = self.noise_dim, self.hidden

        def copy_block(b):
            nb = _HiddenBlock.__new__(_HiddenBlock)
            nb.affine = _Affine.__new__(_Affine)
            nb.affine.w = b.affine.w.copy()
            nb.affine.b = b.affine.b.copy()
            nb.norm = _BatchNorm.__new__(_BatchNorm)
            nb.norm.gamma = b.norm.gamma.copy()
            nb.norm.beta = b.norm.beta.copy()
            nb.norm.running_mean = b.norm.running_mean.copy()
            nb.norm.running_var = b.norm.running_var.copy()
            return nb

        out.blocks_x = [copy_block(b) for b in self.blocks_x]
        out.blocks_z = [copy_block(b) for b in self.blocks_z]
        out.trunk = copy_block(self.trunk)
        out.head = _Affine.__new__(_Affine)
        out.head.w = self.head.w.copy()
        out.head.b = self.head.b.copy()
        return out


def _block_forward(block, inp, mode, update_running):
    h = inp @ block.affine.w + block.affine.b
    a = np.maximum(h, 0.0)
    if mode == "train":
        mean = a.mean(axis=0)
        var = a.var(axis=0)
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (a - mean) * inv
        out = block.norm.gamma * xhat + block.norm.beta
        if update_running:
            block.norm.running_mean = (
                BN_MOMENTUM * block.norm.running_mean + (1.0 - BN_MOMENTUM) * mean
            )
            block.norm.running_var = (
                BN_MOMENTUM * block.norm.running_var + (1.0 - BN_MOMENTUM) * var
            )
        cache = (inp, h, xhat, inv)
    else:
        inv = 1.0 / np.sqrt(block.norm.running_var + BN_EPS)
        out = block.norm.gamma * (a - block.norm.running_mean) * inv + block.norm.beta
        cache = None
    return out, cache


def forward(
    params: GeneratorParams,
    x_batch: np.ndarray,
    z_batch: np.ndarray,
    mode: str = "train",
    update_running: bool = True,
):
    """Run the generator on a batch; returns (y_batch, cache).

    Train mode normalizes with batch statistics (and by default updates the
    running statistics); eval mode uses running statistics only, so each row
    is independent of the rest of the batch. The cache feeds backward() and
    is only produced in train mode.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    z_batch = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if x_batch.shape[1] != params.n:
        raise ValueError(f"x dimension {x_batch.shape[1]} != {params.n}")
    if z_batch.shape[1] != params.noise_dim:
        raise ValueError(f"z dimension {z_batch.shape[1]} != {params.noise_dim}")
    if x_batch.shape[0] != z_batch.shape[0]:
        raise ValueError("x and z row counts differ")
    rows = x_batch.shape[0]
    if rows < 1:
        raise ValueError("batch must contain at least one row")
    if mode == "train" and rows < 2:
        raise ValueError("train mode needs at least 2 rows for batch statistics")

    caches_x, caches_z = [], []
    hx = x_batch
    for block in params.blocks_x:
        hx, c = _block_forward(block, hx, mode, update_running)
        caches_x.append(c)
    hz = z_batch
    for block in params.blocks_z:
        hz, c = _block_forward(block, hz, mode, update_running)
        caches_z.append(c)
    u = np.concatenate([hx, hz], axis=1)
    t, cache_t = _block_forward(params.trunk, u, mode, update_running)
    y = t @ params.head.w + params.head.b

    cache = None
    if mode == "train":
        cache = {
            "rows": rows,
            "caches_x": caches_x,
            "caches_z": caches_z,
            "cache_t": cache_t,
            "t": t,
            "hidden": params.hidden,
            "shapes": (params.n, params.m, params.noise_dim),
        }
    return y, cache


def _block_backward(block, cache, dout, grads, tag):
    inp, h, xhat, inv = cache
    rows = dout.shape[0]
    grads[f"{tag}.gamma"] = (dout * xhat).sum(axis=0)
    grads[f"{tag}.beta"] = dout.sum(axis=0)
    dxhat = dout * block.norm.gamma
    # normalization backward through the batch mean and variance
    da = (inv / rows) * (
        rows * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
    )
    dh = da * (h > 0.0)
    grads[f"{tag}.w"] = inp.T @ dh
    grads[f"{tag}.b"] = dh.sum(axis=0)
    return dh @ block.affine.w.T


def backward(params: GeneratorParams, cache: dict, dl_dy: np.ndarray) -> dict:
    """Gradients of sum_batch <dl_dy, y> in every trainable array.

    Requires the cache of a matching train-mode forward.
    """
    if cache is None:
        raise ValueError("backward needs the cache of a train-mode forward")
    dl_dy = np.atleast_2d(np.asarray(dl_dy, dtype=np.float64))
    if cache.get("shapes") != (params.n, params.m, params.noise_dim):
        raise ValueError("cache does not match these parameters")
    if dl_dy.shape != (cache["rows"], params.m):
        raise ValueError(f"dl_dy must have shape ({cache['rows']}, {params.m})")

    grads: dict[str, np.ndarray] = {}
    t = cache["t"]
    grads["head.w"] = t.T @ dl_dy
    grads["head.b"] = dl_dy.sum(axis=0)
    dt = dl_dy @ params.head.w.T
    du = _block_backward(params.trunk, cache["cache_t"], dt, grads, "t0")
    h = params.hidden
    dx, dz = du[:, :h], du[:, h:]
    for idx in (1, 0):
        dx = _block_backward(params.blocks_x[idx], cache["caches_x"][idx], dx, grads, f"x{idx}")
        dz = _block_backward(params.blocks_z[idx], cache["caches_z"][idx], dz, grads, f"z{idx}")
    return grads


class AdamState:
    """Adam moment accumulators shaped like the trainable arrays."""

    def __init__(
        self,
        params: GeneratorParams,
        learning_rate: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}


def adam_step(state: AdamState, params: GeneratorParams, grads: dict):
    """One bias-corrected Adam update, in place; returns (state, params)."""
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise ValueError(f"non-finite gradients for {bad}")
    missing = [name for name, _ in params.named_arrays() if name not in grads]
    if missing:
        raise ValueError(f"gradients missing for {missing}")
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t
    for name, arr in params.named_arrays():
        g = grads[name]
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        mhat = state.m[name] / b1t
        vhat = state.v[name] / b2t
        arr -= state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
    return state, params


def sample(
    params: GeneratorParams,
    x: np.ndarray,
    count: int,
    rng: np.random.Generator,
    noise: NoiseSpec | None = None,
) -> np.ndarray:
    """count independent eval-mode draws of y at a single input x."""
    if count < 1:
        raise ValueError("count must be >= 1")
    noise = noise if noise is not None else NoiseSpec(params.noise_dim)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    x_batch = np.tile(x, (count, 1))
    z_batch = noise.draw(count, rng)
    y, _ = forward(params, x_batch, z_batch, mode="eval")
    return y


def save_checkpoint(params: GeneratorParams, path, extra: dict | None = None) -> None:
    """Write parameters plus an architecture header to an .npz file."""
    payload = {
        "format_version": np.array(CHECKPOINT_VERSION, dtype=np.int64),
        "n": np.array(params.n, dtype=np.int64),
        "m": np.array(params.m, dtype=np.int64),
        "noise_dim": np.array(params.noise_dim, dtype=np.int64),
        "hidden": np.array(params.hidden, dtype=np.int64),
    }
    for name, arr in params.named_arrays():
        payload["param." + name] = arr
    for name, arr in params.running_stats():
        payload["stat." + name] = arr
    for key, value in (extra or {}).items():
        payload["extra." + key] = np.asarray(value)
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[GeneratorParams, dict]:
    """Read a checkpoint written by save_checkpoint; returns (params, extra)."""
    with np.load(path) as blob:
        version = int(blob["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        params = GeneratorParams(
            n=int(blob["n"]),
            m=int(blob["m"]),
            noise_dim=int(blob["noise_dim"]),
            hidden=int(blob["hidden"]),
            rng=np.random.default_rng(0),
        )
        for name, arr in params.named_arrays():
            arr[...] = blob["param." + name]
        for name, arr in params.running_stats():
            arr[...] = blob["stat." + name]
        extra = {}
        for key in blob.files:
            if key.startswith("extra."):
                value = blob[key]
                extra[key[len("extra.") :]] = value.item() if value.ndim == 0 else value
    return params, extra
