"""Dissection tooling: decoder threshold extraction, bottleneck statistics,
the convergence-outcome taxonomy over seeds, and Monte-Carlo estimates of
the dead-unit probabilities at initialization.
"""

import math
from dataclasses import dataclass, replace

from . import models as _models
from . import nn
from .datasets import gen_quad_dataset
from .nn import RngStream, UniformSymmetric, glorot_limit, init_weights
from .tensor import Matrix

OPTIMAL = "Optimal"
PAIR_COLLAPSE = "PairCollapse"
DOUBLE_PAIR_COLLAPSE = "DoublePairCollapse"
ALL_GRAY = "AllGray"
OTHER = "Other"
OUTCOME_LABELS = (OPTIMAL, PAIR_COLLAPSE, DOUBLE_PAIR_COLLAPSE, ALL_GRAY, OTHER)


# -- decoder sweeps --------------------------------------------------------------


def decode_bottleneck(model, values, mode="sigmoid"):
    """Decode a sequence of scalar bottleneck values; rows are frames."""
    if model.bottleneck_dim != 1:
        raise ValueError(f"decoder sweep needs a scalar bottleneck, got {model.bottleneck_dim}")
    if mode not in ("sigmoid", "heaviside"):
        raise ValueError(f"unknown mode {mode!r}")
    cur = Matrix(len(values), 1, [float(v) for v in values])
    layers = model.decoder_layers
    for layer in layers[:-1]:
        cur = nn.apply_activation(layer.activation, layer.linear(cur))
    final = layers[-1]
    activation = "heaviside" if mode == "heaviside" else final.activation
    return nn.apply_activation(activation, final.linear(cur))


@dataclass
class NeuronThresholds:
    neuron: int
    thresholds: list  # strictly increasing change points
    values: list  # output value on each interval; len(thresholds) + 1


@dataclass
class ThresholdTable:
    neurons: list  # NeuronThresholds per output neuron
    bn_range: tuple
    resolution: int

    def all_thresholds(self):
        out = set()
        for nt in self.neurons:
            out.update(nt.thresholds)
        return sorted(out)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("neuron,threshold,value_before,value_after\n")
            for nt in self.neurons:
                for k, t in enumerate(nt.thresholds):
                    fh.write(f"{nt.neuron},{t:.17g},{nt.values[k]:g},{nt.values[k + 1]:g}\n")


def extract_thresholds(model, bn_range=(-20.0, 20.0), resolution=4001):
    """Sweep the bottleneck through the decoder with a Heaviside readout and
    record, per output neuron, where the binary output flips.

    A recorded threshold is the midpoint of the sweep step where the change
    happened, so it is exact to within one step.
    """
    lo, hi = bn_range
    if not lo < hi or resolution < 2:
        raise ValueError("need bn_range lo < hi and resolution >= 2")
    step = (hi - lo) / (resolution - 1)
    values = [lo + k * step for k in range(resolution)]
    frames = decode_bottleneck(model, values, mode="heaviside")
    neurons = []
    for j in range(frames.cols):
        thresholds = []
        pattern = [frames.get(0, j)]
        prev = pattern[0]
        for k in range(1, frames.rows):
            cur = frames.get(k, j)
            if cur != prev:
                thresholds.append((values[k - 1] + values[k]) / 2.0)
                pattern.append(cur)
                prev = cur
        neurons.append(NeuronThresholds(j, thresholds, pattern))
    return ThresholdTable(neurons, (lo, hi), resolution)


@dataclass
class BlurSweep:
    values: list  # bottleneck value per frame
    frames: Matrix  # one decoded image per row
    threshold: float
    mode: str


def blur_sweep(model, threshold, window, steps, mode="sigmoid"):
    """Decode bottleneck values crossing a threshold; one image row per step."""
    lo, hi = window
    if not lo < hi or steps < 2:
        raise ValueError("need window lo < hi and steps >= 2")
    step = (hi - lo) / (steps - 1)
    values = [lo + k * step for k in range(steps)]
    return BlurSweep(values, decode_bottleneck(model, values, mode=mode), threshold, mode)


# -- bottleneck statistics --------------------------------------------------------


@dataclass
class BottleneckStats:
    means: list  # per-sample bottleneck mean a
    stds: list  # per-sample sqrt(e^b)
    mean: float
    variance: float
    fraction_in_range: float
    value_range: tuple
    bin_edges: list
    bin_counts: list

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("sample,mean,std\n")
            for i, (a, s) in enumerate(zip(self.means, self.stds)):
                fh.write(f"{i},{a:.17g},{s:.17g}\n")


def bottleneck_stats(model, data, value_range=(-3.0, 3.0), bins=25, hist_range=(-5.0, 5.0)):
    """Per-sample (a, sqrt(e^b)) for a variational model, with aggregates."""
    if not model.is_variational:
        raise ValueError("bottleneck_stats needs a variational model")
    a, b = model.encode(data.images)
    means = list(a.data)
    stds = [math.sqrt(nn._safe_exp(v)) for v in b.data]
    n = len(means)
    mean = sum(means) / n
    variance = sum((v - mean) ** 2 for v in means) / n
    lo, hi = value_range
    fraction = sum(1 for v in means if lo <= v <= hi) / n

    h_lo, h_hi = hist_range
    width = (h_hi - h_lo) / bins
    edges = [h_lo + k * width for k in range(bins + 1)]
    counts = [0] * bins
    for v in means:
        k = int((v - h_lo) / width)
        counts[min(max(k, 0), bins - 1)] += 1
    return BottleneckStats(means, stds, mean, variance, fraction, value_range, edges, counts)


# -- convergence-outcome taxonomy ---------------------------------------------------


def _rows_close(m, i, other, j, tol):
    c = m.cols
    for k in range(c):
        if abs(m.data[i * c + k] - other.data[j * c + k]) > tol:
            return False
    return True


def classify_outcome(model, quad, gray_tol=0.15, match_tol=0.05):
    """Label how a quad-trained model converged.

    Optimal: every reconstruction matches its input per-pixel within match_tol.
    AllGray: every output pixel is within gray_tol of 0.5.
    PairCollapse: exactly one pair of inputs reconstructs to the same image
    (their shared "average") while the other two are correct.
    DoublePairCollapse: two disjoint collapsed pairs. Anything else: Other.
    """
    rec = _models.reconstruct(model, quad.images, mode="sigmoid")
    n = quad.images.rows
    correct = [_rows_close(rec, i, quad.images, i, match_tol) for i in range(n)]
    if all(correct):
        return OPTIMAL
    if all(abs(v - 0.5) <= gray_tol for v in rec.data):
        return ALL_GRAY
    pairs = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if _rows_close(rec, i, rec, j, match_tol)
    ]
    if len(pairs) == 1:
        i, j = pairs[0]
        if all(correct[k] for k in range(n) if k not in (i, j)):
            return PAIR_COLLAPSE
    if len(pairs) == 2 and not set(pairs[0]) & set(pairs[1]):
        return DOUBLE_PAIR_COLLAPSE
    return OTHER


@dataclass
class OutcomeReport:
    labels: list  # (seed, label) per run, in seed order
    counts: dict  # label -> count, every taxonomy label present
    frequencies: dict  # label -> count / n
    seeds_by_label: dict  # label -> sorted seed list
    diverged_seeds: list

    @property
    def n_runs(self):
        return len(self.labels)

    def to_csv(self, path):
        """Five labeled frequency rows."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("label,count,frequency\n")
            for label in OUTCOME_LABELS:
                fh.write(f"{label},{self.counts[label]},{self.frequencies[label]:.17g}\n")

    def seeds_to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("seed,label\n")
            for seed, label in self.labels:
                fh.write(f"{seed},{label}\n")


def seed_sweep(n_seeds, cfg, arch="ca", data=None, start_seed=0, gray_tol=0.15,
               match_tol=0.05, hidden=2, bottleneck=1):
    """Train a fresh model per seed and classify every outcome."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    if arch not in ("ca", "va"):
        raise ValueError(f"unknown arch {arch!r}")
    if data is None:
        data = gen_quad_dataset()
    labels = []
    diverged = []
    for k in range(n_seeds):
        seed = start_seed + k
        if arch == "ca":
            model = _models.build_ca(data.height, data.width, hidden=hidden,
                                     bottleneck=bottleneck, seed=seed)
            run_cfg = replace(cfg, seed=seed, loss="mse")
        else:
            model = _models.build_va(data.height, data.width, hidden=hidden,
                                     bottleneck=bottleneck, seed=seed)
            run_cfg = replace(cfg, seed=seed, loss="variational")
        try:
            _models.train(model, data, run_cfg)
        except _models.TrainingDivergedError:
            diverged.append(seed)
            labels.append((seed, OTHER))
            continue
        labels.append((seed, classify_outcome(model, data, gray_tol, match_tol)))
    counts = {label: 0 for label in OUTCOME_LABELS}
    seeds_by_label = {label: [] for label in OUTCOME_LABELS}
    for seed, label in labels:
        counts[label] += 1
        seeds_by_label[label].append(seed)
    frequencies = {label: counts[label] / n_seeds for label in OUTCOME_LABELS}
    return OutcomeReport(labels, counts, frequencies, seeds_by_label, diverged)


# -- initialization probabilities ----------------------------------------------------


def init_probability_oracle(trials, rng, schemes=None):
    """Monte-Carlo estimates over fresh quad-CA initializations (biases zero).

    p1: a fixed quad input ("0011") has negative pre-activation in both
        first-layer neurons.
    p2: at least two of the four inputs each do.
    p3: both bottleneck weights negative and both first decoder weights
        positive, or vice versa.

    Only the weight signs matter, so any sign-symmetric scheme gives the
    same answer.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if schemes is None:
        schemes = (
            UniformSymmetric(glorot_limit(4, 2)),
            UniformSymmetric(glorot_limit(2, 1)),
            UniformSymmetric(glorot_limit(1, 2)),
        )
    s1, s2, s3 = schemes
    # Pixels lit per quad input, row-major: 0011, 1010, 1100, 0101.
    input_pixels = ((2, 3), (0, 2), (0, 1), (1, 3))
    hits1 = hits2 = hits3 = 0
    for _ in range(trials):
        w1 = init_weights(4, 2, s1, rng).data  # entry (pixel, neuron) at pixel*2 + neuron
        w2 = init_weights(2, 1, s2, rng).data
        w3 = init_weights(1, 2, s3, rng).data
        dead = 0
        first_dead = False
        for idx, (pa, pb) in enumerate(input_pixels):
            both = True
            for neuron in (0, 1):
                if w1[pa * 2 + neuron] + w1[pb * 2 + neuron] >= 0.0:
                    both = False
                    break
            if both:
                dead += 1
                if idx == 0:
                    first_dead = True
        if first_dead:
            hits1 += 1
        if dead >= 2:
            hits2 += 1
        if (w2[0] < 0.0 and w2[1] < 0.0 and w3[0] > 0.0 and w3[1] > 0.0) or (
            w2[0] > 0.0 and w2[1] > 0.0 and w3[0] < 0.0 and w3[1] < 0.0
        ):
            hits3 += 1
    return hits1 / trials, hits2 / trials, hits3 / trials
