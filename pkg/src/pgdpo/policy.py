"""Feed-forward policy networks with constraint-enforcing output heads.

Heads:
  linear   - raw n-vector of risky weights; cash weight implied as 1 - sum
  simplex  - softmax over n+1 weights (cash first); nonnegative, sums to 1
  positive - softplus scalar consumption rate
  bounded  - scaled sigmoid consumption rate in [c_min, c_max]

Inputs are standardized as (t / T, X) before the first layer; T is stored
in checkpoints so saved policies are self-contained.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import LEAKY_SLOPE, Tape, Var, _stable_sigmoid
from .errors import CheckpointMismatch
from .rng import stream

CHECKPOINT_VERSION = 1
HEADS = ("linear", "simplex", "positive", "bounded")
_HEAD_BIAS_DAMP = 0.01  # keeps initial head outputs near their midpoint


def head_output_dim(head: str, n: int) -> int:
    if head == "linear":
        return n
    if head == "simplex":
        return n + 1
    if head in ("positive", "bounded"):
        return 1
    raise ValueError(f"unknown head {head!r}")


@dataclass
class PolicyNet:
    """Two-hidden-layer policy with a flat parameter vector."""

    n: int
    head: str
    T: float
    hidden: tuple[int, int] = (200, 200)
    c_min: float = 0.0
    c_max: float = 1.0
    params: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        self.out_dim = head_output_dim(self.head, self.n)
        dims = [2, self.hidden[0], self.hidden[1], self.out_dim]
        self._shapes = []
        for a, b in zip(dims[:-1], dims[1:]):
            self._shapes.append((a, b))  # weight
            self._shapes.append((b,))  # bias
        self.param_count = sum(int(np.prod(s)) for s in self._shapes)
        if self.params is None:
            self.params = np.zeros(self.param_count)

    # -- parameters ---------------------------------------------------------

    def init_params(self, seed: int, tag: int = 0) -> np.ndarray:
        """He-scaled hidden weights, zero biases, damped head layer.

        The consumption head bias is offset so the initial output sits
        near 0.5 (positive head) or mid-range (bounded head).
        """
        rng = stream(seed, "policy_init", tag)
        chunks = []
        n_layers = len(self._shapes) // 2
        for i in range(n_layers):
            w_shape = self._shapes[2 * i]
            scale = math.sqrt(2.0 / w_shape[0])
            if i == n_layers - 1:
                scale *= _HEAD_BIAS_DAMP
            chunks.append(rng.standard_normal(w_shape).ravel() * scale)
            bias = np.zeros(self._shapes[2 * i + 1])
            if i == n_layers - 1 and self.head == "positive":
                bias[:] = math.log(math.expm1(0.5))  # softplus(b) = 0.5
            chunks.append(bias)
        self.params = np.concatenate(chunks)
        return self.params

    def unpack(self, flat: np.ndarray | None = None) -> list[np.ndarray]:
        flat = self.params if flat is None else flat
        out, off = [], 0
        for s in self._shapes:
            size = int(np.prod(s))
            out.append(flat[off : off + size].reshape(s))
            off += size
        return out

    @staticmethod
    def pack(layers) -> np.ndarray:
        return np.concatenate([np.asarray(p).ravel() for p in layers])

    # -- forward ------------------------------------------------------------

    def forward(self, t, x) -> np.ndarray:
        """Plain numpy forward; t scalar or (M,), x (M,). No tape."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), x.shape)
        w1, b1, w2, b2, w3, b3 = self.unpack()
        a = np.stack([t / self.T, x], axis=1)
        h = a @ w1 + b1
        h = np.where(h >= 0.0, h, LEAKY_SLOPE * h)
        h = h @ w2 + b2
        h = np.where(h >= 0.0, h, LEAKY_SLOPE * h)
        z = h @ w3 + b3
        return self._apply_head_numpy(z)

    def _apply_head_numpy(self, z: np.ndarray) -> np.ndarray:
        if self.head == "linear":
            return z
        if self.head == "simplex":
            e = np.exp(z - z.max(axis=1, keepdims=True))
            return e / e.sum(axis=1, keepdims=True)
        if self.head == "positive":
            return np.logaddexp(0.0, z[:, 0])
        return self.c_min + (self.c_max - self.c_min) * _stable_sigmoid(z[:, 0])

    def bind(self, tape: Tape) -> "BoundPolicy":
        """Register the parameters as tape inputs for a taped forward."""
        return BoundPolicy(self, tape)


class BoundPolicy:
    """Policy attached to a tape; parameters are tape inputs."""

    def __init__(self, net: PolicyNet, tape: Tape):
        self.net = net
        self.tape = tape
        self.param_vars = [tape.input(p) for p in net.unpack()]

    @property
    def head(self) -> str:
        return self.net.head

    def forward(self, t, x: Var) -> Var:
        """Taped forward; t is a constant scalar or (M,), x a tape Var."""
        net, tp = self.net, self.tape
        t = np.broadcast_to(
            np.asarray(t, dtype=np.float64), np.shape(x.value)
        )
        w1, b1, w2, b2, w3, b3 = self.param_vars
        a = tp.stack_cols([t / net.T, x])
        h = tp.leaky_relu(tp.add_bias(tp.matmul(a, w1), b1))
        h = tp.leaky_relu(tp.add_bias(tp.matmul(h, w2), b2))
        z = tp.add_bias(tp.matmul(h, w3), b3)
        if net.head == "linear":
            return z
        if net.head == "simplex":
            return tp.softmax_rows(z)
        if net.head == "positive":
            return tp.softplus(tp.col(z, 0))
        s = tp.sigmoid(tp.col(z, 0))
        return net.c_min + (net.c_max - net.c_min) * s

    def param_adjoints(self, adjoints) -> np.ndarray:
        """Flat gradient vector assembled from this policy's tape inputs."""
        chunks = []
        for v in self.param_vars:
            g = adjoints[v.index]
            if g is None:
                g = np.zeros_like(v.value)
            chunks.append(np.asarray(g).ravel())
        return np.concatenate(chunks)


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(net: PolicyNet, path, seed: int = 0, extra: dict | None = None):
    """Header JSON line + raw little-endian float64 parameter vector."""
    header = {
        "version": CHECKPOINT_VERSION,
        "n": net.n,
        "head": net.head,
        "hidden": list(net.hidden),
        "seed": seed,
        "T": net.T,
        "c_min": net.c_min,
        "c_max": net.c_max,
    }
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(net.params.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[PolicyNet, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatch(
                f"unsupported checkpoint version {header.get('version')}"
            )
        raw = fh.read()
    net = PolicyNet(
        n=header["n"],
        head=header["head"],
        T=header["T"],
        hidden=tuple(header["hidden"]),
        c_min=header["c_min"],
        c_max=header["c_max"],
    )
    params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if params.size != net.param_count:
        raise CheckpointMismatch(
            f"parameter count {params.size} != expected {net.param_count}"
        )
    net.params = params
    return net, header
