"""Dense layers, activations, losses, manual backpropagation and SGD.

Everything is explicit: forward passes record every pre-activation and
activation, and `backward` walks them in reverse. The variational
bottleneck samples z = a + sqrt(e^b) * eps with eps ~ N(0,1), so gradients
flow through a and b (reparameterization), plus the direct penalty terms
dKL/da = a/n and dKL/db = (e^b - 1)/(2n).
"""

import math
import random
from dataclasses import dataclass

from .backend import kernels
from .tensor import Matrix, ShapeMismatchError

ACTIVATIONS = ("none", "relu", "sigmoid", "heaviside")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_EXP_MAX = 709.782712893384


class HeavisideInTrainingError(RuntimeError):
    """Heaviside has no useful gradient; it is inference-only."""


class NonFiniteGradientError(RuntimeError):
    """A gradient became NaN/Inf; message names the offending parameter."""


def _safe_exp(x):
    if x > _EXP_MAX:
        return math.inf
    return math.exp(x)


# -- deterministic randomness ----------------------------------------------


def _splitmix64(state):
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class RngStream:
    """Seeded Mersenne-Twister stream; same seed gives the same sequence.

    `stream` derives decorrelated substreams from one seed (weight init and
    training noise must not share draws).
    """

    algorithm = "mt19937"

    def __init__(self, seed, stream=0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream)
        state = self.seed
        for _ in range(self.stream + 1):
            state, mixed = _splitmix64(state)
        self._rng = random.Random(mixed)

    def derive(self, stream):
        return RngStream(self.seed, stream)

    def random(self):
        return self._rng.random()

    def uniform(self, lo, hi):
        return self._rng.uniform(lo, hi)

    def normal(self):
        return self._rng.gauss(0.0, 1.0)

    def randint(self, lo, hi):
        """Uniform integer in [lo, hi], both inclusive."""
        return self._rng.randint(lo, hi)

    def shuffle(self, seq):
        self._rng.shuffle(seq)


# -- weight initialization ---------------------------------------------------


@dataclass(frozen=True)
class UniformSymmetric:
    limit: float


@dataclass(frozen=True)
class NormalInit:
    std: float


def glorot_limit(fan_in, fan_out):
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_weights(rows, cols, scheme, rng):
    """Draw an i.i.d. weight matrix from a sign-symmetric scheme."""
    m = Matrix(rows, cols)
    data = m.data
    if isinstance(scheme, UniformSymmetric):
        if scheme.limit <= 0:
            raise ValueError("uniform limit must be positive")
        lo, hi = -scheme.limit, scheme.limit
        for i in range(rows * cols):
            data[i] = rng.uniform(lo, hi)
    elif isinstance(scheme, NormalInit):
        if scheme.std <= 0:
            raise ValueError("normal std must be positive")
        for i in range(rows * cols):
            data[i] = rng.normal() * scheme.std
    else:
        raise TypeError(f"unknown init scheme: {scheme!r}")
    return m


def zero_bias(cols):
    """Biases always start at exactly zero."""
    return Matrix(1, cols)


# -- scalar activations -------------------------------------------------------


def relu(x):
    return x if x > 0.0 else 0.0


def sigmoid(x):
    """e^x / (e^x + 1), overflow-safe, clamped to the open interval (0, 1)."""
    out = Matrix(1, 1, [x])
    res = Matrix(1, 1)
    kernels.sigmoid_vec(out.data, res.data, 1)
    return res.data[0]


def heaviside(x):
    """0 for x < 0, and 1 for x >= 0 (H(0) = 1)."""
    return 1.0 if x >= 0.0 else 0.0


def apply_activation(name, pre):
    if name == "none":
        return pre
    out = Matrix(pre.rows, pre.cols)
    n = len(pre.data)
    if name == "relu":
        kernels.relu_vec(pre.data, out.data, n)
    elif name == "sigmoid":
        kernels.sigmoid_vec(pre.data, out.data, n)
    elif name == "heaviside":
        kernels.heaviside_vec(pre.data, out.data, n)
    else:
        raise ValueError(f"unknown activation {name!r}")
    return out


def _activation_grad(name, pre, act):
    out = Matrix(pre.rows, pre.cols)
    n = len(pre.data)
    if name == "relu":
        kernels.relu_grad_vec(pre.data, out.data, n)
    elif name == "sigmoid":
        kernels.sigmoid_grad_vec(act.data, out.data, n)
    else:
        raise HeavisideInTrainingError(f"activation {name!r} has no gradient")
    return out


# -- layers -------------------------------------------------------------------


class DenseLayer:
    __slots__ = ("weights", "biases", "activation")

    def __init__(self, weights, biases, activation="none"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if biases.rows != 1 or biases.cols != weights.cols:
            raise ShapeMismatchError(
                f"bias shape {biases.shape} does not fit weights {weights.shape}"
            )
        self.weights = weights
        self.biases = biases
        self.activation = activation

    @property
    def in_dim(self):
        return self.weights.rows

    @property
    def out_dim(self):
        return self.weights.cols

    def linear(self, x):
        return x.matmul(self.weights).add_row(self.biases)


class VariationalHead:
    """Two parallel linear layers producing the bottleneck mean and log-variance."""

    __slots__ = ("mean_layer", "logvar_layer")

    def __init__(self, mean_layer, logvar_layer):
        for layer in (mean_layer, logvar_layer):
            if layer.activation != "none":
                raise ValueError("head layers must be linear")
        if (mean_layer.in_dim, mean_layer.out_dim) != (logvar_layer.in_dim, logvar_layer.out_dim):
            raise ShapeMismatchError(
                f"head layer shapes differ: {mean_layer.weights.shape} vs {logvar_layer.weights.shape}"
            )
        self.mean_layer = mean_layer
        self.logvar_layer = logvar_layer

    @property
    def in_dim(self):
        return self.mean_layer.in_dim

    @property
    def out_dim(self):
        return self.mean_layer.out_dim


# -- forward ------------------------------------------------------------------


class ForwardTrace:
    """Everything the backward pass needs: inputs, pre-activations, activations,
    and (for a variational head) a, b, sigma, eps and the sampled z."""

    __slots__ = (
        "x", "layers", "head", "head_after", "pre", "act",
        "a", "b", "sigma", "eps", "z", "sampled",
    )

    def __init__(self, x, layers, head, head_after):
        self.x = x
        self.layers = layers
        self.head = head
        self.head_after = head_after
        self.pre = []
        self.act = []
        self.a = None
        self.b = None
        self.sigma = None
        self.eps = None
        self.z = None
        self.sampled = False

    @property
    def output(self):
        return self.act[-1]

    def layer_input(self, i):
        if self.head is not None and i == self.head_after:
            return self.z
        if i == 0:
            return self.x
        return self.act[i - 1]


def forward(layers, x, rng=None, head=None, head_after=1, noise=None):
    """Run the stack on x (rows are samples), recording a full trace.

    With a variational head, the head sits after `head_after` layers: it maps
    that activation to (a, b) and the remaining layers consume the sampled
    z = a + sqrt(e^b) * eps. Noise comes from `rng` (one eps per entry), or
    from `noise` directly when the caller needs pinned values; with neither,
    z = a (deterministic mean bottleneck, inference only).
    """
    if not layers:
        raise ValueError("forward needs at least one layer")
    if rng is not None and head is None:
        raise ValueError("rng given but no variational head to sample for")
    if rng is not None or noise is not None:
        for layer in layers:
            if layer.activation == "heaviside":
                raise HeavisideInTrainingError("heaviside layer in a sampling forward pass")
    if head is not None and not 0 <= head_after < len(layers):
        raise ValueError(f"head_after {head_after} out of range for {len(layers)} layers")

    trace = ForwardTrace(x, list(layers), head, head_after if head is not None else None)
    cur = x
    for i, layer in enumerate(layers):
        if head is not None and i == head_after:
            cur = _apply_head(trace, cur, rng, noise)
        pre = layer.linear(cur)
        act = apply_activation(layer.activation, pre)
        trace.pre.append(pre)
        trace.act.append(act)
        cur = act
    return trace


def _apply_head(trace, h, rng, noise):
    head = trace.head
    a = head.mean_layer.linear(h)
    b = head.logvar_layer.linear(h)
    sigma = b.map(lambda v: math.sqrt(_safe_exp(v)))
    if rng is None and noise is None:
        z = a
        eps = None
        sampled = False
    else:
        if noise is None:
            eps = Matrix(a.rows, a.cols, [rng.normal() for _ in range(a.rows * a.cols)])
        else:
            if noise.shape != a.shape:
                raise ShapeMismatchError(f"noise shape {noise.shape} != bottleneck shape {a.shape}")
            eps = noise
        z = a.add(sigma.hadamard(eps))
        sampled = True
    trace.a, trace.b, trace.sigma, trace.eps, trace.z, trace.sampled = a, b, sigma, eps, z, sampled
    return z


# -- losses -------------------------------------------------------------------


def mse_loss(output, target):
    """Mean squared difference over all entries (samples x pixels)."""
    if output.shape != target.shape:
        raise ShapeMismatchError(f"mse_loss: shapes {output.shape} and {target.shape} differ")
    return kernels.sq_diff_sum(output.data, target.data, len(output.data)) / (
        output.rows * output.cols
    )


def kl_term(a_values, b_values):
    """-(1/2n) * sum(1 + b - a^2 - e^b), n = number of rows (samples)."""
    if a_values.shape != b_values.shape:
        raise ShapeMismatchError(
            f"kl_term: shapes {a_values.shape} and {b_values.shape} differ"
        )
    total = 0.0
    for a, b in zip(a_values.data, b_values.data):
        total += 1.0 + b - a * a - _safe_exp(b)
    return -total / (2.0 * a_values.rows)


def variational_loss(output, target, a_values, b_values):
    return mse_loss(output, target) + kl_term(a_values, b_values)


# -- backward -----------------------------------------------------------------


class Gradients:
    """Per-layer (weight, bias) gradient pairs, plus head gradients when present."""

    __slots__ = ("layers", "head")

    def __init__(self, layers, head=None):
        self.layers = layers
        self.head = head


def backward(trace, target, kl_weight=1.0):
    """Gradients of the loss w.r.t. every parameter in the trace.

    The loss is mse for a plain stack and mse + kl_weight * kl for a
    variational trace (kl_weight 1 is the plain mse + kl loss).
    """
    for layer in trace.layers:
        if layer.activation == "heaviside":
            raise HeavisideInTrainingError("cannot backpropagate through heaviside")
    if trace.head is not None and not trace.sampled:
        raise ValueError("backward needs a sampled trace (forward with rng or noise)")

    output = trace.output
    if output.shape != target.shape:
        raise ShapeMismatchError(f"backward: output {output.shape} vs target {target.shape}")
    n_rows = output.rows
    delta = output.sub(target).scale(2.0 / (n_rows * output.cols))

    layer_grads = [None] * len(trace.layers)
    head_grads = None
    for i in range(len(trace.layers) - 1, -1, -1):
        layer = trace.layers[i]
        if layer.activation == "none":
            delta_pre = delta
        else:
            delta_pre = delta.hadamard(_activation_grad(layer.activation, trace.pre[i], trace.act[i]))
        inp = trace.layer_input(i)
        layer_grads[i] = (inp.matmul_tn(delta_pre), delta_pre.col_sum())
        at_head = trace.head is not None and i == trace.head_after
        if i == 0 and not at_head:
            break  # no parameters upstream of the first layer
        delta = delta_pre.matmul_nt(layer.weights)
        if at_head:
            delta, head_grads = _head_backward(trace, delta, n_rows, kl_weight)
            if trace.head_after == 0:
                break
    return Gradients(layer_grads, head_grads)


def _head_backward(trace, d_z, n_rows, kl_weight):
    head, a, b, sigma, eps = trace.head, trace.a, trace.b, trace.sigma, trace.eps
    # dz/da = 1; dz/db = eps * sqrt(e^b) / 2; plus the direct KL gradients
    # a/n and (e^b - 1)/(2n), scaled by the penalty weight.
    d_a = d_z.add(a.scale(kl_weight / n_rows))
    kl_b = b.map(lambda v: kl_weight * (_safe_exp(v) - 1.0) / (2.0 * n_rows))
    d_b = d_z.hadamard(eps).hadamard(sigma).scale(0.5).add(kl_b)

    h = trace.x if trace.head_after == 0 else trace.act[trace.head_after - 1]
    grads = (
        h.matmul_tn(d_a), d_a.col_sum(),
        h.matmul_tn(d_b), d_b.col_sum(),
    )
    delta_h = d_a.matmul_nt(head.mean_layer.weights).add(
        d_b.matmul_nt(head.logvar_layer.weights)
    )
    return delta_h, grads


# -- optimizer ----------------------------------------------------------------


def sgd_step(params, grads, learning_rate, momentum, velocities=None, names=None):
    """One classic-momentum step: v <- momentum*v + g; p <- p - lr*v.

    Returns (new_params, new_velocities). Raises NonFiniteGradientError if any
    gradient entry is NaN/Inf, naming the parameter.
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must be in [0, 1)")
    if velocities is None:
        velocities = [Matrix(p.rows, p.cols) for p in params]
    new_params = []
    new_velocities = []
    for i, (p, g, v) in enumerate(zip(params, grads, velocities)):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"sgd_step: param {p.shape} vs grad {g.shape}")
        np_ = Matrix(p.rows, p.cols)
        nv = Matrix(p.rows, p.cols)
        bad = kernels.sgd_update(
            p.data, v.data, g.data, float(learning_rate), float(momentum),
            np_.data, nv.data, len(p.data),
        )
        if bad:
            name = names[i] if names else f"parameter {i}"
            raise NonFiniteGradientError(f"{bad} non-finite gradient entries in {name}")
        new_params.append(np_)
        new_velocities.append(nv)
    return new_params, new_velocities
