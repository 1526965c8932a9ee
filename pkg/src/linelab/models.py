"""Autoencoder assembly, training, reconstruction and serialization.

Two architectures: the classical stack in -> 2(relu) -> 1 -> 2(relu) ->
out(sigmoid), and its variational variant where the 1-unit bottleneck is
replaced by a sampled head. Training is plain SGD with momentum, full batch
by default for tiny sets, and is bit-reproducible per (seed, config, data).
"""

import math
import time
from dataclasses import dataclass, replace

from . import nn
from .nn import (
    DenseLayer,
    RngStream,
    UniformSymmetric,
    VariationalHead,
    glorot_limit,
    init_weights,
    zero_bias,
)
from .tensor import Matrix

# Substreams of one user seed, so weight draws, training noise and scoring
# noise never share a generator.
INIT_STREAM = 0
TRAIN_STREAM = 1
SAMPLE_STREAM = 2


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, message):
        super().__init__(message)
        self.epoch = epoch


class ModelFormatError(ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MlpModel:
    __slots__ = ("encoder_layers", "variational_head", "decoder_layers", "input_height", "input_width")

    def __init__(self, encoder_layers, variational_head, decoder_layers, input_height, input_width):
        self.encoder_layers = list(encoder_layers)
        self.variational_head = variational_head
        self.decoder_layers = list(decoder_layers)
        self.input_height = input_height
        self.input_width = input_width

    @property
    def is_variational(self):
        return self.variational_head is not None

    @property
    def input_dim(self):
        return self.input_height * self.input_width

    @property
    def bottleneck_dim(self):
        if self.is_variational:
            return self.variational_head.out_dim
        return self.encoder_layers[-1].out_dim

    def layer_list(self):
        return self.encoder_layers + self.decoder_layers

    def forward_trace(self, images, rng=None, noise=None):
        return nn.forward(
            self.layer_list(),
            images,
            rng=rng,
            head=self.variational_head,
            head_after=len(self.encoder_layers),
            noise=noise,
        )

    def encode(self, images):
        """Deterministic code for each sample: bottleneck value for a classical
        model, (a, b) for a variational one."""
        cur = images
        for layer in self.encoder_layers:
            cur = nn.apply_activation(layer.activation, layer.linear(cur))
        if not self.is_variational:
            return cur
        head = self.variational_head
        return head.mean_layer.linear(cur), head.logvar_layer.linear(cur)

    def parameters(self):
        return [m for _, m in self._named_parameters()]

    def parameter_names(self):
        return [name for name, _ in self._named_parameters()]

    def _named_parameters(self):
        out = []
        for i, layer in enumerate(self.encoder_layers):
            out.append((f"encoder[{i}].weights", layer.weights))
            out.append((f"encoder[{i}].biases", layer.biases))
        if self.is_variational:
            head = self.variational_head
            out.append(("head.mean.weights", head.mean_layer.weights))
            out.append(("head.mean.biases", head.mean_layer.biases))
            out.append(("head.logvar.weights", head.logvar_layer.weights))
            out.append(("head.logvar.biases", head.logvar_layer.biases))
        for i, layer in enumerate(self.decoder_layers):
            out.append((f"decoder[{i}].weights", layer.weights))
            out.append((f"decoder[{i}].biases", layer.biases))
        return out

    def set_parameters(self, params):
        it = iter(params)
        for layer in self.encoder_layers:
            layer.weights = next(it)
            layer.biases = next(it)
        if self.is_variational:
            head = self.variational_head
            head.mean_layer.weights = next(it)
            head.mean_layer.biases = next(it)
            head.logvar_layer.weights = next(it)
            head.logvar_layer.biases = next(it)
        for layer in self.decoder_layers:
            layer.weights = next(it)
            layer.biases = next(it)

    def flatten_gradients(self, grads):
        """Order nn.backward output to match parameters()."""
        n_enc = len(self.encoder_layers)
        out = []
        for g_w, g_b in grads.layers[:n_enc]:
            out.extend((g_w, g_b))
        if self.is_variational:
            out.extend(grads.head)
        for g_w, g_b in grads.layers[n_enc:]:
            out.extend((g_w, g_b))
        return out


# -- builders -------------------------------------------------------------------


def _dense(in_dim, out_dim, activation, scheme, rng):
    return DenseLayer(init_weights(in_dim, out_dim, scheme, rng), zero_bias(out_dim), activation)


def _default_scheme(fan_in, fan_out):
    return UniformSymmetric(glorot_limit(fan_in, fan_out))


def build_ca(height, width, hidden=2, bottleneck=1, seed=0, scheme=None):
    """Classical autoencoder: in -> hidden(relu) -> bottleneck -> hidden(relu) -> in(sigmoid)."""
    if height < 1 or width < 1:
        raise ValueError("image dimensions must be positive")
    rng = RngStream(seed, INIT_STREAM)
    d = height * width
    encoder = [
        _dense(d, hidden, "relu", scheme or _default_scheme(d, hidden), rng),
        _dense(hidden, bottleneck, "none", scheme or _default_scheme(hidden, bottleneck), rng),
    ]
    decoder = [
        _dense(bottleneck, hidden, "relu", scheme or _default_scheme(bottleneck, hidden), rng),
        _dense(hidden, d, "sigmoid", scheme or _default_scheme(hidden, d), rng),
    ]
    return MlpModel(encoder, None, decoder, height, width)


def build_va(height, width, hidden=2, bottleneck=1, seed=0, scheme=None):
    """Variational variant: the bottleneck layer becomes a sampled (a, b) head."""
    if height < 1 or width < 1:
        raise ValueError("image dimensions must be positive")
    rng = RngStream(seed, INIT_STREAM)
    d = height * width
    encoder = [_dense(d, hidden, "relu", scheme or _default_scheme(d, hidden), rng)]
    head = VariationalHead(
        _dense(hidden, bottleneck, "none", scheme or _default_scheme(hidden, bottleneck), rng),
        _dense(hidden, bottleneck, "none", scheme or _default_scheme(hidden, bottleneck), rng),
    )
    decoder = [
        _dense(bottleneck, hidden, "relu", scheme or _default_scheme(bottleneck, hidden), rng),
        _dense(hidden, d, "sigmoid", scheme or _default_scheme(hidden, d), rng),
    ]
    return MlpModel(encoder, head, decoder, height, width)


def construct_reference_optimal_ca():
    """Hand-built 4 -> 2 -> 1 -> 2 -> 4 solution of the quad problem.

    The encoder maps 0011, 1010, 1100, 0101 to bottlenecks -10, -1, 1, 10.
    The decoder realizes, under a Heaviside readout, the four interval rules:
    output 1 on (-1.5, 1.5), output 2 on [0, inf), output 3 their complements,
    output 4 outside [-1.5, 1.5]. Output 3 carries a -1e-6 bias so that it
    stays the exact complement of output 2 at bottleneck 0, where H(0) = 1.
    """
    encoder = [
        DenseLayer(
            Matrix.from_rows([[-9.0, -9.0], [0.0, 10.0], [10.0, 0.0], [0.0, 0.0]]),
            zero_bias(2),
            "relu",
        ),
        DenseLayer(Matrix.from_rows([[-1.0], [1.0]]), zero_bias(1), "none"),
    ]
    decoder = [
        DenseLayer(Matrix.from_rows([[10.0, -10.0]]), zero_bias(2), "relu"),
        DenseLayer(
            Matrix.from_rows([[-1.0, 1.0, -1.0, 1.0], [-1.0, -1.0, 1.0, 1.0]]),
            Matrix.row_vector([15.0, 0.0, -1e-6, -15.0]),
            "sigmoid",
        ),
    ]
    return MlpModel(encoder, None, decoder, 2, 2)


# -- training ---------------------------------------------------------------------


# At full weight the penalty -(1/2n)*sum(1 + b - a^2 - e^b) prices any code
# separation above the whole reconstruction gain on these tiny images, and
# every variational run collapses to the gray solution (a -> 0, e^b -> 1).
# The original experiments only behave as reported with the penalty scaled
# far down (the convention of the Keras examples they derive from), so the
# reproduction configs train with this coefficient. kl_weight=1 restores the
# unscaled loss.
KL_REPRO_WEIGHT = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 0.5
    momentum: float = 0.9
    batch_size: int = 0  # 0 means full batch
    seed: int = 0
    loss: str = "mse"  # "mse" or "variational"
    kl_weight: float = 1.0
    log_every: int = 100

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.loss not in ("mse", "variational"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be >= 0")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    def with_seed(self, seed):
        return replace(self, seed=seed)


def quad_config(**overrides):
    """Full-batch reproduction defaults for the four-image set."""
    defaults = dict(
        epochs=5000, learning_rate=0.5, momentum=0.9, batch_size=0,
        kl_weight=KL_REPRO_WEIGHT, log_every=500,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


def line_config(**overrides):
    """Mini-batch reproduction defaults for the 1000-image line set."""
    defaults = dict(
        epochs=200, learning_rate=2.0, momentum=0.9, batch_size=32,
        kl_weight=KL_REPRO_WEIGHT, log_every=10,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


@dataclass
class TrainReport:
    entries: list  # (epoch, loss, mse, kl) at every logged epoch
    final_loss: float
    final_mse: float
    final_kl: float
    wall_time: float
    seed: int
    config: TrainConfig

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss,mse,kl\n")
            for epoch, loss, mse, kl in self.entries:
                fh.write(f"{epoch},{loss:.17g},{mse:.17g},{kl:.17g}\n")


def train(model, data, cfg):
    """Fit the model to reconstruct `data` in place; returns a TrainReport.

    Deterministic for fixed (seed, config, dataset). Aborts with
    TrainingDivergedError when the loss stops being finite.
    """
    images = data.images
    if images.cols != model.input_dim:
        raise ValueError(
            f"dataset pixels {images.cols} do not match model input {model.input_dim}"
        )
    if (cfg.loss == "variational") != model.is_variational:
        raise ValueError("loss 'variational' requires a variational model and vice versa")
    n = images.rows
    batch = cfg.batch_size if cfg.batch_size else n
    if not 1 <= batch <= n:
        raise ValueError(f"batch_size {batch} out of range for {n} samples")

    rng = RngStream(cfg.seed, TRAIN_STREAM)
    layers = model.layer_list()
    head = model.variational_head
    head_after = len(model.encoder_layers)
    names = model.parameter_names()
    params = model.parameters()
    velocities = None
    order = list(range(n))
    full_batch = batch == n

    entries = []
    last = (math.nan, math.nan, math.nan)
    started = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        if not full_batch:
            rng.shuffle(order)
        loss_sum = mse_sum = kl_sum = 0.0
        rows_seen = 0
        for lo in range(0, n, batch):
            chunk = order[lo : lo + batch]
            xb = images if full_batch else images.take_rows(chunk)
            trace = nn.forward(
                layers, xb, rng=rng if model.is_variational else None,
                head=head, head_after=head_after,
            )
            mse = nn.mse_loss(trace.output, xb)
            kl = cfg.kl_weight * nn.kl_term(trace.a, trace.b) if model.is_variational else 0.0
            loss = mse + kl
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    epoch, f"non-finite loss {loss!r} at epoch {epoch}"
                )
            grads = model.flatten_gradients(nn.backward(trace, xb, kl_weight=cfg.kl_weight))
            params, velocities = nn.sgd_step(
                params, grads, cfg.learning_rate, cfg.momentum, velocities, names
            )
            model.set_parameters(params)
            loss_sum += loss * xb.rows
            mse_sum += mse * xb.rows
            kl_sum += kl * xb.rows
            rows_seen += xb.rows
        last = (loss_sum / rows_seen, mse_sum / rows_seen, kl_sum / rows_seen)
        if epoch == 1 or epoch == cfg.epochs or epoch % cfg.log_every == 0:
            entries.append((epoch, last[0], last[1], last[2]))
    wall = time.perf_counter() - started
    return TrainReport(entries, last[0], last[1], last[2], wall, cfg.seed, cfg)


def reconstruct(model, images, mode="sigmoid", seed=None):
    """Run inputs through the model; `heaviside` swaps only the final activation.

    A variational model decodes the mean bottleneck unless a seed is given,
    in which case z is sampled (deterministically per seed).
    """
    if mode not in ("sigmoid", "heaviside"):
        raise ValueError(f"unknown mode {mode!r}")
    if images.cols != model.input_dim:
        raise ValueError(f"input pixels {images.cols} do not match model {model.input_dim}")
    head = model.variational_head
    head_after = len(model.encoder_layers)
    rng = RngStream(seed, SAMPLE_STREAM) if (seed is not None and head is not None) else None
    layers = model.layer_list()
    if mode == "sigmoid":
        return nn.forward(layers, images, rng=rng, head=head, head_after=head_after).output
    trunk, final = layers[:-1], layers[-1]
    trace = nn.forward(trunk, images, rng=rng, head=head, head_after=head_after)
    return nn.apply_activation("heaviside", final.linear(trace.output))


# -- serialization ----------------------------------------------------------------

_MAGIC = "linelab-model v1"


def save_model(model, path):
    """Plain-text format: `layer <in> <out> <activation>` headers followed by
    whitespace-separated weight rows and a bias line, 17 significant digits."""
    def write_layer(fh, layer):
        fh.write(f"layer {layer.in_dim} {layer.out_dim} {layer.activation}\n")
        w = layer.weights
        for i in range(w.rows):
            fh.write(" ".join(f"{v:.17g}" for v in w.data[i * w.cols : (i + 1) * w.cols]))
            fh.write("\n")
        fh.write("bias " + " ".join(f"{v:.17g}" for v in layer.biases.data) + "\n")

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        fh.write(f"input {model.input_height} {model.input_width}\n")
        fh.write(f"variational {1 if model.is_variational else 0}\n")
        fh.write(f"encoder {len(model.encoder_layers)}\n")
        for layer in model.encoder_layers:
            write_layer(fh, layer)
        if model.is_variational:
            fh.write("head\n")
            write_layer(fh, model.variational_head.mean_layer)
            write_layer(fh, model.variational_head.logvar_layer)
        fh.write(f"decoder {len(model.decoder_layers)}\n")
        for layer in model.decoder_layers:
            write_layer(fh, layer)
        fh.write("end\n")


class _Reader:
    def __init__(self, path):
        with open(path, "r", encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def next(self, expect=None):
        if self.pos >= len(self.lines):
            raise ModelFormatError(self.pos + 1, "unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        if expect is not None and not line.startswith(expect):
            raise ModelFormatError(self.pos, f"expected {expect!r}, got {line!r}")
        return line


def load_model(path):
    r = _Reader(path)
    if r.next() != _MAGIC:
        raise ModelFormatError(1, f"not a model file (missing {_MAGIC!r} header)")

    def parse_fields(line, keyword, count):
        parts = line.split()
        if parts[0] != keyword or len(parts) != count + 1:
            raise ModelFormatError(r.pos, f"malformed {keyword!r} line: {line!r}")
        try:
            return [int(p) if p.lstrip("-").isdigit() else p for p in parts[1:]]
        except ValueError:
            raise ModelFormatError(r.pos, f"bad value in {line!r}") from None

    def read_layer():
        in_dim, out_dim, activation = parse_fields(r.next(expect="layer"), "layer", 3)
        if activation not in nn.ACTIVATIONS:
            raise ModelFormatError(r.pos, f"unknown activation {activation!r}")
        rows = []
        for _ in range(in_dim):
            line = r.next()
            try:
                row = [float(tok) for tok in line.split()]
            except ValueError:
                raise ModelFormatError(r.pos, f"bad weight row: {line!r}") from None
            if len(row) != out_dim:
                raise ModelFormatError(r.pos, f"expected {out_dim} weights, got {len(row)}")
            rows.append(row)
        bias_line = r.next(expect="bias")
        try:
            bias = [float(tok) for tok in bias_line.split()[1:]]
        except ValueError:
            raise ModelFormatError(r.pos, f"bad bias line: {bias_line!r}") from None
        if len(bias) != out_dim:
            raise ModelFormatError(r.pos, f"expected {out_dim} biases, got {len(bias)}")
        return DenseLayer(Matrix.from_rows(rows), Matrix.row_vector(bias), activation)

    height, width = parse_fields(r.next(expect="input"), "input", 2)
    (is_var,) = parse_fields(r.next(expect="variational"), "variational", 1)
    (n_enc,) = parse_fields(r.next(expect="encoder"), "encoder", 1)
    encoder = [read_layer() for _ in range(n_enc)]
    head = None
    if is_var:
        r.next(expect="head")
        head = VariationalHead(read_layer(), read_layer())
    (n_dec,) = parse_fields(r.next(expect="decoder"), "decoder", 1)
    decoder = [read_layer() for _ in range(n_dec)]
    r.next(expect="end")
    return MlpModel(encoder, head, decoder, height, width)
