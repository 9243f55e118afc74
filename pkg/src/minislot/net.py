"""Minimal feed-forward Q-network in plain numpy.

Grid observation channels pass through a small stack of valid-padding
convolutions, get flattened and concatenated with the auxiliary feature
vector, then through dense layers to one Q-value per action.  Forward,
backward, the Adam update and a finite-difference gradient check are all
implemented here so training is self-contained and bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: int = 3
    stride: int = 2


@dataclass(frozen=True)
class NetConfig:
    """Architecture bound to one observation geometry."""

    grid_channels: int
    grid_height: int
    grid_width: int
    aux_dim: int
    n_actions: int
    conv: tuple[ConvSpec, ...] = (ConvSpec(8), ConvSpec(16))
    dense: tuple[int, ...] = (64,)


def default_net_config(
    grid_height: int, grid_width: int, aux_dim: int, n_actions: int
) -> NetConfig:
    """Default architecture, dropping conv layers the grid is too small for."""
    conv: list[ConvSpec] = []
    h, w = grid_height, grid_width
    for spec in (ConvSpec(8), ConvSpec(16)):
        if h < spec.kernel or w < spec.kernel:
            break
        conv.append(spec)
        h = (h - spec.kernel) // spec.stride + 1
        w = (w - spec.kernel) // spec.stride + 1
    return NetConfig(
        grid_channels=3,
        grid_height=grid_height,
        grid_width=grid_width,
        aux_dim=aux_dim,
        n_actions=n_actions,
        conv=tuple(conv),
    )


def _conv_out(size: int, kernel: int, stride: int) -> int:
    out = (size - kernel) // stride + 1
    if out < 1:
        raise ValueError(
            f"conv kernel {kernel} does not fit input extent {size}"
        )
    return out


class QNetwork:
    """Parameter container plus pure forward/backward functions.

    Parameters live in a plain dict of float64 arrays keyed by layer name,
    which keeps the optimiser, checkpointing and the gradient check simple.
    """

    def __init__(self, config: NetConfig):
        self.config = config
        self.layer_dims: list[tuple] = []  # (h, w) after each conv
        h, w = config.grid_height, config.grid_width
        for spec in config.conv:
            h = _conv_out(h, spec.kernel, spec.stride)
            w = _conv_out(w, spec.kernel, spec.stride)
            self.layer_dims.append((h, w))
        channels = config.conv[-1].filters if config.conv else config.grid_channels
        self.flat_dim = channels * h * w
        self.dense_in = self.flat_dim + config.aux_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        in_ch = self.config.grid_channels
        for i, spec in enumerate(self.config.conv):
            shapes[f"conv{i}/W"] = (in_ch * spec.kernel * spec.kernel, spec.filters)
            shapes[f"conv{i}/b"] = (spec.filters,)
            in_ch = spec.filters
        width = self.dense_in
        for i, units in enumerate(self.config.dense):
            shapes[f"dense{i}/W"] = (width, units)
            shapes[f"dense{i}/b"] = (units,)
            width = units
        shapes["out/W"] = (width, self.config.n_actions)
        shapes["out/b"] = (self.config.n_actions,)
        return shapes

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Fan-in scaled uniform init, deterministic in the generator state."""
        params = {}
        for name, shape in self.param_shapes().items():
            if name.endswith("/b"):
                params[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                params[name] = rng.uniform(-bound, bound, size=shape)
        return params

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    # ---------- forward ----------

    def _conv_forward(self, x, w, b, spec):
        # x: (B, C, H, W) -> patches (B, Ho*Wo, C*k*k) -> matmul
        k, s = spec.kernel, spec.stride
        windows = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, :: s]
        b_, c, ho, wo = windows.shape[:4]
        patches = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b_, ho * wo, c * k * k)
        z = patches @ w + b
        return z.reshape(b_, ho, wo, spec.filters).transpose(0, 3, 1, 2), patches

    def forward(
        self,
        params: dict[str, np.ndarray],
        grid: np.ndarray,
        aux: np.ndarray,
        keep_cache: bool = False,
    ):
        """Q-values (B, n_actions); optionally also the backward cache."""
        x = np.ascontiguousarray(grid, dtype=np.float64)
        aux = np.asarray(aux, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
            aux = aux[None]
        cache: dict = {"pre": [], "patches": [], "inputs": []}
        for i, spec in enumerate(self.config.conv):
            z, patches = self._conv_forward(
                x, params[f"conv{i}/W"], params[f"conv{i}/b"], spec
            )
            if keep_cache:
                cache["patches"].append(patches)
                cache["pre"].append(z)
            x = np.maximum(z, 0.0)
            if keep_cache:
                cache["inputs"].append(x)
        flat = x.reshape(x.shape[0], -1)
        h = np.concatenate([flat, aux], axis=1)
        if keep_cache:
            cache["concat"] = h
        for i in range(len(self.config.dense)):
            z = h @ params[f"dense{i}/W"] + params[f"dense{i}/b"]
            if keep_cache:
                cache["pre"].append(z)
            h = np.maximum(z, 0.0)
            if keep_cache:
                cache["inputs"].append(h)
        q = h @ params["out/W"] + params["out/b"]
        if keep_cache:
            cache["q"] = q
            return q, cache
        return q

    # ---------- backward ----------

    def backward(
        self,
        params: dict[str, np.ndarray],
        cache: dict,
        dq: np.ndarray,
    ) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given d(loss)/d(q-values)."""
        grads: dict[str, np.ndarray] = {}
        n_conv = len(self.config.conv)
        n_dense = len(self.config.dense)

        h_last = cache["inputs"][-1] if n_dense else cache["concat"]
        grads["out/W"] = h_last.T @ dq
        grads["out/b"] = dq.sum(axis=0)
        dh = dq @ params["out/W"].T

        for i in range(n_dense - 1, -1, -1):
            pre = cache["pre"][n_conv + i]
            dz = dh * (pre > 0.0)
            h_in = cache["inputs"][n_conv + i - 1] if i > 0 else cache["concat"]
            grads[f"dense{i}/W"] = h_in.T @ dz
            grads[f"dense{i}/b"] = dz.sum(axis=0)
            dh = dz @ params[f"dense{i}/W"].T

        dflat = dh[:, : self.flat_dim]
        if not self.config.conv:
            return grads
        batch = dq.shape[0]
        ch = self.config.conv[-1].filters
        h_out, w_out = self.layer_dims[-1]
        dx = dflat.reshape(batch, ch, h_out, w_out)
        for i in range(n_conv - 1, -1, -1):
            spec = self.config.conv[i]
            pre = cache["pre"][i]  # (B, F, Ho, Wo), same layout as dx
            dz = dx * (pre > 0.0)
            dz_flat = dz.transpose(0, 2, 3, 1).reshape(-1, spec.filters)
            patches = cache["patches"][i].reshape(-1, cache["patches"][i].shape[-1])
            grads[f"conv{i}/W"] = patches.T @ dz_flat
            grads[f"conv{i}/b"] = dz_flat.sum(axis=0)
            if i > 0:
                dpatches = dz_flat @ params[f"conv{i}/W"].T
                dx = self._col2im(dpatches, i)
        return grads

    def _col2im(self, dpatches: np.ndarray, layer: int) -> np.ndarray:
        """Scatter patch gradients back to the input map of conv ``layer``."""
        spec = self.config.conv[layer]
        in_ch = self.config.conv[layer - 1].filters
        h_in, w_in = self.layer_dims[layer - 1]
        h_out, w_out = self.layer_dims[layer]
        batch = dpatches.shape[0] // (h_out * w_out)
        k, s = spec.kernel, spec.stride
        dcols = dpatches.reshape(batch, h_out, w_out, in_ch, k, k)
        dx = np.zeros((batch, in_ch, h_in, w_in))
        for di in range(k):
            for dj in range(k):
                dx[:, :, di : di + h_out * s : s, dj : dj + w_out * s : s] += (
                    dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
                )
        return dx

    # ---------- loss on selected actions ----------

    def loss_and_grads(
        self,
        params: dict[str, np.ndarray],
        grid: np.ndarray,
        aux: np.ndarray,
        actions: np.ndarray,
        targets: np.ndarray,
    ):
        """Mean squared TD error on the chosen actions' Q-values."""
        q, cache = self.forward(params, grid, aux, keep_cache=True)
        batch = q.shape[0]
        picked = q[np.arange(batch), actions]
        err = picked - targets
        loss = float(np.mean(err**2))
        dq = np.zeros_like(q)
        dq[np.arange(batch), actions] = 2.0 * err / batch
        return loss, self.backward(params, cache, dq)


# ---------- optimiser ----------


@dataclass
class Adam:
    """Adam with the standard bias correction."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g**2
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            params[name] -= (
                self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
            )


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients down to a global L2 norm of ``max_norm``."""
    total = float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# ---------- gradient check ----------


def _relu_signs(net: QNetwork, params, grid, aux) -> np.ndarray:
    _, cache = net.forward(params, grid, aux, keep_cache=True)
    return np.concatenate([(z > 0).ravel() for z in cache["pre"]]) if cache["pre"] else np.zeros(0, bool)


def gradient_check(
    net: QNetwork,
    params: dict[str, np.ndarray],
    grid: np.ndarray,
    aux: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    rng: np.random.Generator,
    n_samples: int = 200,
    step: float = 1e-5,
) -> tuple[float, int]:
    """Compare analytic gradients with central finite differences.

    Randomly sampled parameter coordinates are perturbed by +-step; samples
    whose perturbation flips the sign of any rectifier pre-activation are
    skipped (the loss is not differentiable across those kinks), as are
    coordinates where both gradient estimates vanish.  Sampling continues
    until ``n_samples`` coordinates have actually been compared or the
    parameter pool is exhausted.  Returns the max relative error over the
    checked coordinates and how many were checked.
    """
    _, analytic = net.loss_and_grads(params, grid, aux, actions, targets)

    names = sorted(params)
    sizes = np.array([params[n].size for n in names])
    total = int(sizes.sum())
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    picks = rng.permutation(total)

    worst = 0.0
    checked = 0
    for flat_index in picks:
        if checked >= n_samples:
            break
        layer = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        name = names[layer]
        local = int(flat_index - offsets[layer])
        index = np.unravel_index(local, params[name].shape)

        original = params[name][index]
        params[name][index] = original + step
        q_plus = net.forward(params, grid, aux)
        signs_plus = _relu_signs(net, params, grid, aux)
        params[name][index] = original - step
        q_minus = net.forward(params, grid, aux)
        signs_minus = _relu_signs(net, params, grid, aux)
        params[name][index] = original

        if signs_plus.size and (signs_plus != signs_minus).any():
            continue  # kink crossed: finite difference is meaningless here
        batch = q_plus.shape[0]
        rows = np.arange(batch)
        loss_plus = float(np.mean((q_plus[rows, actions] - targets) ** 2))
        loss_minus = float(np.mean((q_minus[rows, actions] - targets) ** 2))
        numeric = (loss_plus - loss_minus) / (2 * step)
        exact = analytic[name][index]
        denom = max(abs(numeric), abs(exact))
        if denom < 1e-10:
            continue
        worst = max(worst, abs(numeric - exact) / denom)
        checked += 1
    return worst, checked
