"""Declarative network specs, hand-wired layers and the whole-network gradient oracle."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoding as enc
from . import tensor as T
from .orconv import ARFBank, extend_backward, extend_to_omnidirectional, orconv_backward, orconv_cols, orconv_forward

LAYER_KINDS = ("conv", "extend", "orconv", "maxpool", "relu", "dropout", "gpool", "fc",
               "oralign", "orpooling", "softmax")
ENCODINGS = ("none", "oralign", "orpooling")


class SpecError(ValueError):
    """A network spec that cannot be wired; ``layer`` is the offending index."""

    def __init__(self, layer: int, message: str):
        super().__init__(f"layer {layer}: {message}")
        self.layer = layer


@dataclass
class LayerSpec:
    kind: str
    out: int = 0          # conv/orconv feature count, fc width
    kernel: int = 3
    padding: int = 1
    rate: float = 0.0     # dropout
    n: int = 0            # orientation count for extend/orconv

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("conv", "orconv"):
            d.update(out=self.out, kernel=self.kernel, padding=self.padding)
        if self.kind in ("orconv", "extend"):
            d["n"] = self.n
        if self.kind == "fc":
            d["out"] = self.out
        if self.kind == "dropout":
            d["rate"] = self.rate
        return d


@dataclass
class NetworkSpec:
    name: str
    layers: list[LayerSpec]
    input_shape: tuple[int, int, int] = (1, 28, 28)
    orientations: int = 1
    encoding: str = "none"

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape), "orientations": self.orientations,
                "encoding": self.encoding, "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(d["name"], [LayerSpec(**l) for l in d["layers"]], tuple(d["input_shape"]),
                   d["orientations"], d["encoding"])

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

BASELINE_CHANNELS = (32, 64, 128, 256)
HIDDEN = 384
ARF_REDUCTION = 8


def _skeleton(conv_kind: str, channels, n: int, head: str, hidden: int, dropout: float,
              classes: int) -> list[LayerSpec]:
    layers = []
    if conv_kind == "orconv":
        layers.append(LayerSpec("extend", n=n))
    for i, c in enumerate(channels):
        layers.append(LayerSpec(conv_kind, out=c, kernel=3, padding=1, n=n if conv_kind == "orconv" else 0))
        layers.append(LayerSpec("relu"))
        if i < 2:
            layers.append(LayerSpec("maxpool"))
    layers.append(LayerSpec("gpool"))
    if head != "none":
        layers.append(LayerSpec(head))
    layers += [LayerSpec("fc", out=hidden), LayerSpec("relu"), LayerSpec("dropout", rate=dropout),
               LayerSpec("fc", out=classes), LayerSpec("softmax")]
    return layers


def baseline_spec(channels=BASELINE_CHANNELS, hidden: int = HIDDEN, dropout: float = 0.5,
                  classes: int = 10, input_shape=(1, 28, 28)) -> NetworkSpec:
    """Four 3x3 conv layers, two 2x2 pools, global pooling and a two-layer head."""
    return NetworkSpec("baseline", _skeleton("conv", channels, 1, "none", hidden, dropout, classes),
                       tuple(input_shape), 1, "none")


def orn_spec(n: int = 8, encoding: str = "oralign", baseline_channels=BASELINE_CHANNELS,
             reduction: int = ARF_REDUCTION, hidden: int = HIDDEN, dropout: float = 0.5, classes: int = 10,
             input_shape=(1, 28, 28)) -> NetworkSpec:
    """The baseline skeleton with each conv upgraded to ORConv using ``1/reduction`` as many ARFs."""
    if encoding not in ENCODINGS:
        raise ValueError(f"unknown encoding {encoding!r}; choose from {ENCODINGS}")
    if any(c % reduction for c in baseline_channels):
        raise ValueError(f"baseline channels {baseline_channels} not divisible by {reduction}")
    arfs = [c // reduction for c in baseline_channels]
    return NetworkSpec(f"orn{n}-{encoding}", _skeleton("orconv", arfs, n, encoding, hidden, dropout, classes),
                       tuple(input_shape), n, encoding)


def preset(variant: str, encoding: str = "oralign", dropout: float = 0.5) -> NetworkSpec:
    if variant == "baseline":
        return baseline_spec(dropout=dropout)
    if variant in ("orn4", "orn8"):
        return orn_spec(int(variant[3:]), encoding, dropout=dropout)
    raise ValueError(f"unknown network variant {variant!r}; choose baseline, orn4 or orn8")


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Layer:
    params: dict
    grads: dict
    track_margin = False  # kink distances are only needed by the gradient oracle

    def __init__(self):
        self.params, self.grads = {}, {}
        self.margin = np.inf

    def forward(self, x, training: bool):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError


class Conv(Layer):
    def __init__(self, c_in, c_out, k, padding, rng, dtype):
        super().__init__()
        bound = np.sqrt(6.0 / (c_in * k * k))
        self.params["weight"] = rng.uniform(-bound, bound, (c_out, c_in, k, k)).astype(dtype)
        self.params["bias"] = np.zeros(c_out, dtype=dtype)
        self.padding, self.k = padding, k

    def forward(self, x, training):
        self.x = x
        self.cols = T.im2col(x, self.k, self.padding)
        y = T.conv2d(x, self.params["weight"], self.padding, cols=self.cols)
        return y + self.params["bias"][None, :, None, None]

    def backward(self, g):
        gx, gw = T.conv2d_backward(self.x, self.params["weight"], g, self.padding, cols=self.cols)
        self.grads["weight"], self.grads["bias"] = gw, g.sum(axis=(0, 2, 3))
        self.x = self.cols = None
        return gx


class ORConv(Layer):
    def __init__(self, c_in, c_out, k, n, padding, rng, dtype):
        super().__init__()
        bank = ARFBank.init(c_out, c_in, k, n, rng, dtype=dtype)
        self.params["weight"], self.params["bias"] = bank.weights, bank.bias
        self.padding, self.k, self.n = padding, k, n
        self.plan = bank.plan

    def bank(self) -> ARFBank:
        b = ARFBank.__new__(ARFBank)
        b.weights, b.bias, b.plan = self.params["weight"], self.params["bias"], self.plan
        return b

    def forward(self, x, training):
        self.x = x
        self.cols = orconv_cols(x, self.k, self.padding)
        bank = self.bank()
        self.virtual = bank.virtual_kernels()
        return orconv_forward(bank, x, self.padding, virtual=self.virtual, cols=self.cols)

    def backward(self, g):
        grad = orconv_backward(self.bank(), self.x, g, self.padding, virtual=self.virtual, cols=self.cols)
        self.grads["weight"], self.grads["bias"] = grad.weights, grad.bias
        self.x = self.cols = self.virtual = None
        return grad.input


class Extend(Layer):
    def __init__(self, n):
        super().__init__()
        self.n = n

    def forward(self, x, training):
        return extend_to_omnidirectional(x, self.n)

    def backward(self, g):
        return extend_backward(g)


def _as4d(x):
    # oriented maps pool and rectify per (feature, orientation) channel
    if x.ndim == 5:
        b, c, n, h, w = x.shape
        return x.reshape(b, c * n, h, w), x.shape
    return x, x.shape


class MaxPool(Layer):
    def forward(self, x, training):
        x4, self.shape = _as4d(x)
        y, self.idx = T.maxpool2(x4)
        if self.track_margin:
            self.margin = T.maxpool2_margin(x4)
        return y.reshape(self.shape[:-2] + y.shape[-2:])

    def backward(self, g):
        g4, _ = _as4d(g)
        return T.maxpool2_backward(g4, self.idx).reshape(self.shape)


class ReLU(Layer):
    def forward(self, x, training):
        self.x = x
        if self.track_margin:
            self.margin = float(np.abs(x).min()) if x.size else np.inf
        return T.relu(x)

    def backward(self, g):
        return T.relu_backward(g, self.x)


class Dropout(Layer):
    def __init__(self, rate):
        super().__init__()
        self.rate = rate
        self.rng = None

    def forward(self, x, training):
        y, self.mask = T.dropout(x, self.rate, training, self.rng)
        return y

    def backward(self, g):
        return T.dropout_backward(g, self.mask)


class GlobalPool(Layer):
    def forward(self, x, training):
        self.spatial = x.shape[-2:]
        return T.global_avg_pool(x)

    def backward(self, g):
        return T.global_avg_pool_backward(g, self.spatial)


class ORAlign(Layer):
    def forward(self, x, training):
        if self.track_margin:
            self.margin = enc.argmax_margin(x)
        y, self.d = enc.oralign(x)
        return y

    def backward(self, g):
        return enc.oralign_backward(g, self.d)


class ORPooling(Layer):
    def forward(self, x, training):
        self.n = x.shape[-1]
        if self.track_margin:
            self.margin = enc.argmax_margin(x)
        y, self.idx = enc.orpooling(x)
        return y

    def backward(self, g):
        return enc.orpooling_backward(g, self.idx, self.n)


class FC(Layer):
    def __init__(self, d_in, d_out, rng, dtype):
        super().__init__()
        bound = np.sqrt(6.0 / d_in)
        self.params["weight"] = rng.uniform(-bound, bound, (d_out, d_in)).astype(dtype)
        self.params["bias"] = np.zeros(d_out, dtype=dtype)

    def forward(self, x, training):
        self.in_shape = x.shape
        self.x = x.reshape(x.shape[0], -1)
        return T.linear(self.x, self.params["weight"], self.params["bias"])

    def backward(self, g):
        gx, gw, gb = T.linear_backward(self.x, self.params["weight"], g)
        self.grads["weight"], self.grads["bias"] = gw, gb
        return gx.reshape(self.in_shape)


class Softmax(Layer):
    """Marks the output; the loss applies softmax cross-entropy to its input."""

    def forward(self, x, training):
        return x

    def backward(self, g):
        return g


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------

@dataclass
class _Flow:
    """Shape bookkeeping while wiring: plain (C,H,W), oriented (C,N,H,W) or vector (D,) / (C,N)."""

    kind: str
    c: int
    h: int = 0
    w: int = 0
    n: int = 1


def _wire(spec: NetworkSpec):
    """Validate ``spec`` and yield ``(index, layer_spec, flow_in, flow_out)``."""
    layers = spec.layers
    if not layers or layers[-1].kind != "softmax":
        raise SpecError(max(len(layers) - 1, 0), "the last layer must be the softmax output")
    if sum(l.kind == "softmax" for l in layers) != 1:
        raise SpecError(len(layers) - 1, "exactly one softmax output layer is allowed")
    if spec.encoding not in ENCODINGS:
        raise SpecError(0, f"unknown encoding {spec.encoding!r}")
    heads = [i for i, l in enumerate(layers) if l.kind in ("oralign", "orpooling")]
    if len(heads) > 1:
        raise SpecError(heads[1], "at most one invariant-encoding layer")
    orconvs = [i for i, l in enumerate(layers) if l.kind == "orconv"]
    if heads:
        if not orconvs or heads[0] < orconvs[-1]:
            raise SpecError(heads[0], "invariant encoding must follow the last orconv layer")
        if layers[heads[0]].kind != spec.encoding:
            raise SpecError(heads[0], f"layer kind {layers[heads[0]].kind} disagrees with encoding {spec.encoding}")
    elif spec.encoding != "none":
        raise SpecError(len(layers) - 1, f"encoding {spec.encoding} declared but no such layer present")

    c, h, w = spec.input_shape
    flow = _Flow("plain", c, h, w)
    wired = []
    for i, l in enumerate(layers):
        if l.kind not in LAYER_KINDS:
            raise SpecError(i, f"unknown layer kind {l.kind!r}")
        f_in = flow
        if l.kind == "conv":
            if flow.kind != "plain":
                raise SpecError(i, f"conv needs a plain feature map, got {flow.kind}")
            if l.kernel % 2 == 0 or l.out < 1:
                raise SpecError(i, "conv needs an odd kernel and at least one output channel")
            flow = _Flow("plain", l.out, flow.h + 2 * l.padding - l.kernel + 1, flow.w + 2 * l.padding - l.kernel + 1)
        elif l.kind == "extend":
            if flow.kind != "plain" or l.n < 1:
                raise SpecError(i, "extend lifts a plain map and needs n >= 1")
            flow = _Flow("oriented", flow.c, flow.h, flow.w, l.n)
        elif l.kind == "orconv":
            if flow.kind != "oriented":
                raise SpecError(i, "orconv needs an oriented feature map (insert an extend layer)")
            if l.n != flow.n:
                raise SpecError(i, f"orconv has N={l.n} but its input carries N={flow.n}")
            if l.kernel % 2 == 0 or l.out < 1:
                raise SpecError(i, "orconv needs an odd kernel and at least one output feature")
            flow = _Flow("oriented", l.out, flow.h + 2 * l.padding - l.kernel + 1,
                         flow.w + 2 * l.padding - l.kernel + 1, flow.n)
        elif l.kind == "maxpool":
            if flow.kind not in ("plain", "oriented") or flow.h % 2 or flow.w % 2:
                raise SpecError(i, f"maxpool needs even spatial extents, got {flow.h}x{flow.w}")
            flow = _Flow(flow.kind, flow.c, flow.h // 2, flow.w // 2, flow.n)
        elif l.kind == "gpool":
            if flow.kind == "plain":
                flow = _Flow("vector", flow.c)
            elif flow.kind == "oriented":
                flow = _Flow("descriptor", flow.c, n=flow.n)
            else:
                raise SpecError(i, "gpool needs a spatial feature map")
        elif l.kind in ("oralign", "orpooling"):
            if flow.kind != "descriptor":
                raise SpecError(i, f"{l.kind} needs a 1x1xN descriptor (add gpool first)")
            flow = _Flow("descriptor", flow.c, n=flow.n) if l.kind == "oralign" else _Flow("vector", flow.c)
        elif l.kind == "fc":
            if l.out < 1:
                raise SpecError(i, "fc needs at least one output")
            flow = _Flow("vector", l.out)
        elif l.kind == "dropout":
            if not 0 <= l.rate < 1:
                raise SpecError(i, f"dropout rate {l.rate} outside [0, 1)")
        elif l.kind == "softmax":
            if flow.kind != "vector":
                raise SpecError(i, "softmax output needs a vector input (add an fc layer)")
        if flow.kind in ("plain", "oriented") and (flow.h < 1 or flow.w < 1):
            raise SpecError(i, "spatial extent collapsed below 1")
        wired.append((i, l, f_in, flow))
    return wired


def _fc_in(f: _Flow) -> int:
    if f.kind in ("plain", "oriented"):
        return f.c * f.n * f.h * f.w
    return f.c * f.n


def expected_param_count(spec: NetworkSpec) -> int:
    """Closed-form count of materialised parameters."""
    total = 0
    for _, l, f_in, _ in _wire(spec):
        if l.kind == "conv":
            total += l.out * f_in.c * l.kernel ** 2 + l.out
        elif l.kind == "orconv":
            total += l.out * f_in.c * l.kernel ** 2 * l.n + l.out
        elif l.kind == "fc":
            total += l.out * _fc_in(f_in) + l.out
    return total


def virtual_param_count(spec: NetworkSpec) -> int:
    """Parameters of the plain filter banks the ORConv layers emulate."""
    total = 0
    for _, l, f_in, _ in _wire(spec):
        if l.kind == "orconv":
            total += l.n * l.out * f_in.c * l.kernel ** 2 * l.n + l.out
        elif l.kind == "conv":
            total += l.out * f_in.c * l.kernel ** 2 + l.out
        elif l.kind == "fc":
            total += l.out * _fc_in(f_in) + l.out
    return total


class Network:
    def __init__(self, spec: NetworkSpec, layers: list[Layer], dtype):
        self.spec, self.layers, self.dtype = spec, layers, np.dtype(dtype)

    @property
    def param_count(self) -> int:
        return sum(p.size for _, p in self.named_params())

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                if p is not None:
                    yield f"{i}.{name}", p

    def named_grads(self):
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                if p is not None:
                    yield f"{i}.{name}", layer.grads[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_params())
        if set(own) != set(state):
            raise KeyError(f"parameter names differ: {sorted(set(own) ^ set(state))}")
        for k, p in own.items():
            if p.shape != state[k].shape:
                raise T.ShapeError(f"{k}: expected shape {p.shape}, got {state[k].shape}")
            p[...] = state[k]

    def set_dropout_rng(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    def forward(self, x: np.ndarray, training: bool = False, upto: int | None = None) -> np.ndarray:
        x = x.astype(self.dtype, copy=False)
        if x.ndim == 3:
            x = x[:, None]
        for layer in self.layers[:upto]:
            x = layer.forward(x, training)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def loss(self, x, labels, training=False):
        logits = self.forward(x, training)
        return T.softmax_cross_entropy(logits, labels)

    def loss_and_grads(self, x, labels, training=False):
        loss, g = self.loss(x, labels, training)
        self.backward(g.astype(self.dtype, copy=False))
        return loss

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        out = []
        for s in range(0, len(x), batch_size):
            out.append(self.forward(x[s:s + batch_size]).argmax(axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def min_margin(self) -> float:
        return min((layer.margin for layer in self.layers), default=np.inf)

    def layer_index(self, kind: str, occurrence: int = -1) -> int:
        idx = [i for i, l in enumerate(self.spec.layers) if l.kind == kind]
        if not idx:
            raise KeyError(f"no {kind} layer in {self.spec.name}")
        return idx[occurrence]


def build_network(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> Network:
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    for _, l, f_in, _ in _wire(spec):
        if l.kind == "conv":
            layers.append(Conv(f_in.c, l.out, l.kernel, l.padding, rng, dtype))
        elif l.kind == "orconv":
            layers.append(ORConv(f_in.c, l.out, l.kernel, l.n, l.padding, rng, dtype))
        elif l.kind == "extend":
            layers.append(Extend(l.n))
        elif l.kind == "maxpool":
            layers.append(MaxPool())
        elif l.kind == "relu":
            layers.append(ReLU())
        elif l.kind == "dropout":
            layers.append(Dropout(l.rate))
        elif l.kind == "gpool":
            layers.append(GlobalPool())
        elif l.kind == "oralign":
            layers.append(ORAlign())
        elif l.kind == "orpooling":
            layers.append(ORPooling())
        elif l.kind == "fc":
            layers.append(FC(_fc_in(f_in), l.out, rng, dtype))
        elif l.kind == "softmax":
            layers.append(Softmax())
    net = Network(spec, layers, dtype)
    assert net.param_count == expected_param_count(spec)
    return net


# ---------------------------------------------------------------------------
# gradient oracle
# ---------------------------------------------------------------------------

@dataclass
class GradcheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    failures: dict[str, list] = field(default_factory=dict)
    margin: float = np.inf
    seed: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures and all(e < self.tolerance for e in self.errors.values())

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def format(self) -> str:
        lines = [f"{name:>14s}  max rel err {err:.3e}  {'ok' if err < self.tolerance else 'FAIL'}"
                 for name, err in self.errors.items()]
        for name, coords in self.failures.items():
            lines.append(f"{name}: failing coordinates {coords[:10]}")
        lines.append(f"{'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g}, kink margin {self.margin:.2e})")
        return "\n".join(lines)


def gradcheck_network(spec: NetworkSpec, tolerance: float = 1e-5, seed: int = 0, batch: int = 2,
                      h: float = 1e-6, min_margin: float = 1e-4, max_tries: int = 50) -> GradcheckReport:
    """Compare analytic gradients of every parameter and of the input with central differences.

    Runs in float64 with dropout disabled.  Inputs are redrawn until every
    ReLU pre-activation, pooling window and argmax sits at least
    ``min_margin`` away from a kink, so no difference straddles one.
    """
    c, hh, ww = spec.input_shape
    classes = next(l.out for l in reversed(spec.layers) if l.kind == "fc")
    for attempt in range(max_tries):
        s = seed + attempt
        net = build_network(spec, seed=s, dtype=np.float64)
        for layer in net.layers:
            layer.track_margin = True
        rng = np.random.default_rng(10_000 + s)
        for _, p in net.named_params():
            if p.ndim == 1:
                p[...] = rng.normal(0, 0.1, p.shape)  # nonzero biases exercise their gradients
        x = rng.normal(size=(batch, c, hh, ww))
        y = rng.integers(0, classes, size=batch)
        net.loss(x, y)
        if net.min_margin() >= min_margin:
            break
    else:
        raise RuntimeError(f"no kink-free draw found in {max_tries} attempts")

    report = GradcheckReport(tolerance, margin=net.min_margin(), seed=s)
    net.loss_and_grads(x, y)
    analytic = {k: g.copy() for k, g in net.named_grads()}
    loss_fn = lambda: net.loss(x, y)[0]  # noqa: E731
    for name, p in net.named_params():
        num = T.numerical_gradient(loss_fn, p, h)
        report.errors[name] = T.relative_error(analytic[name], num)
        bad = np.abs(analytic[name] - num) > tolerance * max(np.abs(num).max(), np.abs(analytic[name]).max(), 1e-30)
        if bad.any():
            report.failures[name] = [tuple(int(v) for v in ix) for ix in np.argwhere(bad)]
    gx = net.backward(T.softmax_cross_entropy(net.forward(x), y)[1])
    num = T.numerical_gradient(loss_fn, x, h)
    report.errors["input"] = T.relative_error(gx, num)
    return report


def tiny_specs() -> dict[str, NetworkSpec]:
    """Small networks that exercise every differentiable layer kind."""
    shape = (1, 8, 8)

    def orn(w, n, head, extra_pool=False):
        # a 1x1 ARF on a replicated image keeps all orientation channels equal, so
        # 1x1 cases get a 3x3 first layer to create orientation structure
        w0 = w if w > 1 else 3
        layers = [LayerSpec("extend", n=n), LayerSpec("orconv", out=2, kernel=w0, padding=w0 // 2, n=n),
                  LayerSpec("relu")]
        if extra_pool:
            layers.append(LayerSpec("maxpool"))
        layers += [LayerSpec("orconv", out=2, kernel=w, padding=w // 2, n=n), LayerSpec("gpool")]
        if head != "none":
            layers.append(LayerSpec(head))
        layers += [LayerSpec("fc", out=3), LayerSpec("softmax")]
        return NetworkSpec(f"tiny-orconv{w}x{n}-{head}", layers, shape, n, head)

    conv = NetworkSpec("tiny-conv", [
        LayerSpec("conv", out=3, kernel=3, padding=1), LayerSpec("relu"), LayerSpec("maxpool"),
        LayerSpec("conv", out=2, kernel=3, padding=0), LayerSpec("gpool"),
        LayerSpec("fc", out=4), LayerSpec("relu"), LayerSpec("dropout", rate=0.5),
        LayerSpec("fc", out=3), LayerSpec("softmax")], shape)
    return {
        "conv": conv,
        "orconv(1,4)+none": orn(1, 4, "none"),
        "orconv(1,8)+orpooling": orn(1, 8, "orpooling"),
        "orconv(3,8)+oralign": orn(3, 8, "oralign", extra_pool=True),
        "orconv(3,8)+orpooling": orn(3, 8, "orpooling"),
        "orconv(5,8)+oralign": orn(5, 8, "oralign"),
    }
