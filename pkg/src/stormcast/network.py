"""From-scratch recurrent network engine on plain numpy.

Implements the full stack used for intensity regression: LSTM cells with
per-gate parameters, unidirectional and bidirectional sequence passes, layer
stacking with inter-layer dropout, a dense regression head, mean-squared-error
loss, exact backpropagation through time (no truncation inside a window), and
bitwise-reproducible checkpoint serialization. No autodiff framework is
involved; every backward pass is hand-derived.

Activation conventions: the three gates are logistic; the candidate cell
state and the cell output squashing are tanh (the standard LSTM wiring).
All arithmetic is 64-bit.

Shapes are batch-first: a window batch is (B, T, features); single windows
(T, features) are accepted everywhere and returned in kind.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import FormatError, ShapeError

GATE_NAMES = ("f", "i", "o", "c")

CHECKPOINT_FORMAT = "stormcast-checkpoint"
CHECKPOINT_VERSION = 1


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def dropout_mask(shape, p_drop: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-scaling dropout mask: 0 with probability p_drop, else 1/(1-p_drop)."""
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"p_drop must be in [0, 1), got {p_drop}")
    keep = rng.random(shape) >= p_drop
    return keep.astype(np.float64) / (1.0 - p_drop)


@dataclass
class LstmCellParams:
    """Per-gate weights of one LSTM cell: w (hidden x input), u (hidden x hidden), b (hidden)."""

    w_f: np.ndarray
    u_f: np.ndarray
    b_f: np.ndarray
    w_i: np.ndarray
    u_i: np.ndarray
    b_i: np.ndarray
    w_o: np.ndarray
    u_o: np.ndarray
    b_o: np.ndarray
    w_c: np.ndarray
    u_c: np.ndarray
    b_c: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w_f.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_f.shape[0]

    def blocks(self) -> Iterator[tuple[str, np.ndarray]]:
        for gate in GATE_NAMES:
            for kind in ("w", "u", "b"):
                name = f"{kind}_{gate}"
                yield name, getattr(self, name)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmCellParams":
        return cls(
            **{
                f"{kind}_{gate}": np.zeros(
                    {
                        "w": (hidden_size, input_size),
                        "u": (hidden_size, hidden_size),
                        "b": (hidden_size,),
                    }[kind],
                    dtype=np.float64,
                )
                for gate in GATE_NAMES
                for kind in ("w", "u", "b")
            }
        )


@dataclass
class LstmState:
    """Hidden and cell state at one timestamp, batched: both (B, hidden)."""

    h: np.ndarray
    c: np.ndarray


@dataclass
class CellCache:
    x_t: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_cell_forward(
    params: LstmCellParams, x_t: np.ndarray, prev: LstmState
) -> tuple[LstmState, CellCache]:
    """One LSTM step.

    f, i, o are logistic gates; g is the tanh candidate. The new cell state is
    f * c_prev + i * g and the output is o * tanh(c).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 2 or x_t.shape[1] != params.input_size:
        raise ShapeError(f"x_t must be (B, {params.input_size}), got {x_t.shape}")
    if prev.h.shape != (x_t.shape[0], params.hidden_size):
        raise ShapeError(f"prev.h must be (B, {params.hidden_size}), got {prev.h.shape}")
    f = sigmoid(x_t @ params.w_f.T + prev.h @ params.u_f.T + params.b_f)
    i = sigmoid(x_t @ params.w_i.T + prev.h @ params.u_i.T + params.b_i)
    o = sigmoid(x_t @ params.w_o.T + prev.h @ params.u_o.T + params.b_o)
    g = tanh(x_t @ params.w_c.T + prev.h @ params.u_c.T + params.b_c)
    c = f * prev.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = CellCache(x_t=x_t, h_prev=prev.h, c_prev=prev.c, f=f, i=i, o=o, g=g, c=c, tanh_c=tanh_c)
    return LstmState(h=h, c=c), cache


def lstm_cell_backward(
    params: LstmCellParams, cache: CellCache, dh: np.ndarray, dc_in: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of one step. Returns (param grads, dx_t, dh_prev, dc_prev)."""
    do = dh * cache.tanh_c
    dc = dc_in + dh * cache.o * (1.0 - cache.tanh_c**2)
    df = dc * cache.c_prev
    di = dc * cache.g
    dg = dc * cache.i
    dc_prev = dc * cache.f
    dpre = {
        "f": df * cache.f * (1.0 - cache.f),
        "i": di * cache.i * (1.0 - cache.i),
        "o": do * cache.o * (1.0 - cache.o),
        "c": dg * (1.0 - cache.g**2),
    }
    grads: dict[str, np.ndarray] = {}
    for gate in GATE_NAMES:
        d = dpre[gate]
        grads[f"w_{gate}"] = d.T @ cache.x_t
        grads[f"u_{gate}"] = d.T @ cache.h_prev
        grads[f"b_{gate}"] = d.sum(axis=0)
    dx = sum(dpre[g] @ getattr(params, f"w_{g}") for g in GATE_NAMES)
    dh_prev = sum(dpre[g] @ getattr(params, f"u_{g}") for g in GATE_NAMES)
    return grads, dx, dh_prev, dc_prev


def lstm_sequence_forward(
    params: LstmCellParams, inputs: np.ndarray, init: LstmState | None = None
) -> tuple[np.ndarray, list[CellCache]]:
    """Left-to-right pass over (B, T, input) from ``init`` (zeros by default)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise ShapeError(f"inputs must be (B, T, d), got {inputs.shape}")
    batch, steps, _ = inputs.shape
    if steps < 1:
        raise ShapeError("sequence must have at least one step")
    state = init or LstmState(
        h=np.zeros((batch, params.hidden_size)), c=np.zeros((batch, params.hidden_size))
    )
    hidden = np.empty((batch, steps, params.hidden_size), dtype=np.float64)
    caches: list[CellCache] = []
    for t in range(steps):
        state, cache = lstm_cell_forward(params, inputs[:, t, :], state)
        hidden[:, t, :] = state.h
        caches.append(cache)
    return hidden, caches


def lstm_sequence_backward(
    params: LstmCellParams, caches: Sequence[CellCache], dhidden: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """BPTT over a cached pass. ``dhidden`` is (B, T, hidden); returns (grads, dinputs)."""
    batch, steps, _ = dhidden.shape
    grads = {name: np.zeros_like(block) for name, block in params.blocks()}
    dinputs = np.empty((batch, steps, params.input_size), dtype=np.float64)
    dh_rec = np.zeros((batch, params.hidden_size))
    dc_rec = np.zeros((batch, params.hidden_size))
    for t in reversed(range(steps)):
        step_grads, dx, dh_rec, dc_rec = lstm_cell_backward(
            params, caches[t], dhidden[:, t, :] + dh_rec, dc_rec
        )
        for name, g in step_grads.items():
            grads[name] += g
        dinputs[:, t, :] = dx
    return grads, dinputs


@dataclass
class BiCache:
    fwd_caches: list[CellCache]
    bwd_caches: list[CellCache]


def bilstm_forward(
    fwd: LstmCellParams, bwd: LstmCellParams, inputs: np.ndarray
) -> tuple[np.ndarray, BiCache]:
    """Bidirectional pass: forward on inputs, backward on time-reversed inputs.

    The backward half is literally a forward-only pass on the reversed
    sequence, re-reversed, so the two agree bitwise by construction. Output is
    the per-step concatenation (B, T, 2*hidden).
    """
    if fwd.input_size != bwd.input_size or fwd.hidden_size != bwd.hidden_size:
        raise ShapeError("forward and backward cells must have matching sizes")
    inputs = np.ascontiguousarray(np.asarray(inputs, dtype=np.float64))
    fwd_h, fwd_caches = lstm_sequence_forward(fwd, inputs)
    rev = np.ascontiguousarray(inputs[:, ::-1, :])
    bwd_h_rev, bwd_caches = lstm_sequence_forward(bwd, rev)
    out = np.concatenate([fwd_h, bwd_h_rev[:, ::-1, :]], axis=2)
    return out, BiCache(fwd_caches=fwd_caches, bwd_caches=bwd_caches)


def bilstm_backward(
    fwd: LstmCellParams, bwd: LstmCellParams, cache: BiCache, dout: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients for both directions; keys are prefixed ``fw.``/``bw.``."""
    hidden = fwd.hidden_size
    dfwd = np.ascontiguousarray(dout[:, :, :hidden])
    dbwd_rev = np.ascontiguousarray(dout[:, ::-1, hidden:])
    fwd_grads, dx_f = lstm_sequence_backward(fwd, cache.fwd_caches, dfwd)
    bwd_grads, dx_b_rev = lstm_sequence_backward(bwd, cache.bwd_caches, dbwd_rev)
    grads = {f"fw.{k}": v for k, v in fwd_grads.items()}
    grads.update({f"bw.{k}": v for k, v in bwd_grads.items()})
    dinputs = dx_f + dx_b_rev[:, ::-1, :]
    return grads, dinputs


@dataclass
class BiLstmLayerParams:
    fw: LstmCellParams
    bw: LstmCellParams


@dataclass
class NetworkParams:
    """All weights of the stacked bidirectional network plus the dense head."""

    layers: list[BiLstmLayerParams]
    dense_w: np.ndarray  # (t2, 2*hidden)
    dense_b: np.ndarray  # (t2,)
    dropout: float
    t1: int

    @property
    def input_size(self) -> int:
        return self.layers[0].fw.input_size

    @property
    def hidden_size(self) -> int:
        return self.layers[0].fw.hidden_size

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def t2(self) -> int:
        return self.dense_b.shape[0]

    def blocks(self) -> Iterator[tuple[str, np.ndarray]]:
        """Every parameter block in the documented (checkpoint) order."""
        for li, layer in enumerate(self.layers):
            for direction, cell in (("fw", layer.fw), ("bw", layer.bw)):
                for name, block in cell.blocks():
                    yield f"layer{li}.{direction}.{name}", block
        yield "dense.w", self.dense_w
        yield "dense.b", self.dense_b

    def block_dict(self) -> dict[str, np.ndarray]:
        return dict(self.blocks())

    def copy(self) -> "NetworkParams":
        layers = [
            BiLstmLayerParams(
                fw=LstmCellParams(**{n: b.copy() for n, b in layer.fw.blocks()}),
                bw=LstmCellParams(**{n: b.copy() for n, b in layer.bw.blocks()}),
            )
            for layer in self.layers
        ]
        return NetworkParams(
            layers=layers,
            dense_w=self.dense_w.copy(),
            dense_b=self.dense_b.copy(),
            dropout=self.dropout,
            t1=self.t1,
        )


def init_params(
    hidden_size: int,
    layer_count: int,
    t1: int,
    t2: int,
    dropout: float,
    seed: int,
    input_size: int = 7,
) -> NetworkParams:
    """Glorot-uniform weights, zero biases except forget-gate biases at 1.0.

    Weights are drawn in block order from a generator seeded with ``seed``,
    so identical arguments always produce identical parameters.
    """
    if not 0.0 <= dropout < 1.0:
        raise ValueError(f"dropout must be in [0, 1), got {dropout}")
    rng = np.random.default_rng(seed)

    def glorot(shape: tuple[int, int]) -> np.ndarray:
        fan_out, fan_in = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    def make_cell(in_size: int) -> LstmCellParams:
        kwargs = {}
        for gate in GATE_NAMES:
            kwargs[f"w_{gate}"] = glorot((hidden_size, in_size))
            kwargs[f"u_{gate}"] = glorot((hidden_size, hidden_size))
            kwargs[f"b_{gate}"] = (
                np.ones(hidden_size) if gate == "f" else np.zeros(hidden_size)
            )
        return LstmCellParams(**kwargs)

    layers = []
    for li in range(layer_count):
        in_size = input_size if li == 0 else 2 * hidden_size
        layers.append(BiLstmLayerParams(fw=make_cell(in_size), bw=make_cell(in_size)))
    dense_w = glorot((t2, 2 * hidden_size))
    dense_b = np.zeros(t2)
    return NetworkParams(layers=layers, dense_w=dense_w, dense_b=dense_b, dropout=dropout, t1=t1)


@dataclass
class StackCache:
    layer_caches: list[BiCache]
    masks: list[np.ndarray | None]
    layer_outputs_shape: list[tuple[int, ...]]
    h_last: np.ndarray
    single: bool


def stacked_forward(
    net: NetworkParams,
    window: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
    masks: Sequence[np.ndarray | None] | None = None,
) -> tuple[np.ndarray, StackCache]:
    """Full forward pass: stacked BiLSTM layers, inter-layer dropout, dense head.

    ``window`` is one (T, features) window or a batch (B, T, features); the
    prediction comes back with matching rank ((t2,) or (B, t2)). Dropout is
    applied between layers in train mode only; ``masks`` replays fixed masks
    (used by gradient checking).
    """
    x = np.asarray(window, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[2] != net.input_size:
        raise ShapeError(f"window must be (B, T, {net.input_size}), got {x.shape}")
    if train and masks is None and net.dropout > 0.0 and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")

    seq = np.ascontiguousarray(x)
    layer_caches: list[BiCache] = []
    used_masks: list[np.ndarray | None] = []
    shapes: list[tuple[int, ...]] = []
    for li, layer in enumerate(net.layers):
        out, cache = bilstm_forward(layer.fw, layer.bw, seq)
        mask: np.ndarray | None = None
        if li < len(net.layers) - 1:
            if masks is not None:
                mask = masks[li]
            elif train and net.dropout > 0.0:
                mask = dropout_mask(out.shape, net.dropout, rng)
        if mask is not None:
            out = out * mask
        layer_caches.append(cache)
        used_masks.append(mask)
        shapes.append(out.shape)
        seq = out

    h_last = seq[:, -1, :]
    pred = h_last @ net.dense_w.T + net.dense_b
    cache = StackCache(
        layer_caches=layer_caches,
        masks=used_masks,
        layer_outputs_shape=shapes,
        h_last=h_last,
        single=single,
    )
    return (pred[0] if single else pred), cache


def backward(net: NetworkParams, cache: StackCache, dpred: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every parameter block.

    ``dpred`` is the loss gradient w.r.t. the prediction, shaped like the
    prediction that produced ``cache``. Full BPTT, no truncation.
    """
    d = np.asarray(dpred, dtype=np.float64)
    if cache.single:
        d = d[None, :]
    if d.shape != (cache.h_last.shape[0], net.t2):
        raise ShapeError(f"dpred must be (B, {net.t2}), got {d.shape}")
    grads: dict[str, np.ndarray] = {
        "dense.w": d.T @ cache.h_last,
        "dense.b": d.sum(axis=0),
    }
    dseq = np.zeros(cache.layer_outputs_shape[-1], dtype=np.float64)
    dseq[:, -1, :] = d @ net.dense_w
    for li in reversed(range(len(net.layers))):
        mask = cache.masks[li]
        if mask is not None:
            dseq = dseq * mask
        layer = net.layers[li]
        layer_grads, dseq = bilstm_backward(layer.fw, layer.bw, cache.layer_caches[li], dseq)
        for name, g in layer_grads.items():
            grads[f"layer{li}.{name}"] = g
    return grads


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries and its gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} differ")
    if pred.size == 0:
        raise ShapeError("mse_loss needs at least one value")
    diff = pred - target
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size


@dataclass
class SimpleRnnParams:
    """Baseline vanilla RNN cell (tanh), with an optional readout layer."""

    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray
    w_y: np.ndarray | None = None
    b_y: np.ndarray | None = None


def simple_rnn_cell_forward(
    params: SimpleRnnParams, x_t: np.ndarray, h_prev: np.ndarray
) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 2 or x_t.shape[1] != params.w_h.shape[1]:
        raise ShapeError(f"x_t must be (B, {params.w_h.shape[1]}), got {x_t.shape}")
    if h_prev.shape != (x_t.shape[0], params.w_h.shape[0]):
        raise ShapeError(f"h_prev must be (B, {params.w_h.shape[0]}), got {h_prev.shape}")
    return tanh(x_t @ params.w_h.T + h_prev @ params.u_h.T + params.b_h)


def simple_rnn_readout(params: SimpleRnnParams, h: np.ndarray) -> np.ndarray:
    if params.w_y is None or params.b_y is None:
        raise ShapeError("readout weights are not set")
    return tanh(h @ params.w_y.T + params.b_y)


def save_checkpoint(
    path,
    net: NetworkParams,
    seed: int | None = None,
    scaler_file: str | None = None,
) -> None:
    """Write a checkpoint: one JSON header line, then float64 LE parameter blocks.

    The block order is NetworkParams.blocks(); write-then-read reproduces every
    parameter bitwise.
    """
    blocks = list(net.blocks())
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_size": net.input_size,
        "hidden_size": net.hidden_size,
        "layer_count": net.layer_count,
        "t1": net.t1,
        "t2": net.t2,
        "dropout": net.dropout,
        "seed": seed,
        "scaler_file": scaler_file,
        "blocks": [[name, list(block.shape)] for name, block in blocks],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    """Inverse of save_checkpoint; returns (params, header)."""
    blob = Path(path).read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise FormatError("checkpoint has no header line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint header is not valid JSON: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise FormatError("not a recognized checkpoint file")

    net = NetworkParams(
        layers=[
            BiLstmLayerParams(
                fw=LstmCellParams.zeros(
                    header["input_size"] if li == 0 else 2 * header["hidden_size"],
                    header["hidden_size"],
                ),
                bw=LstmCellParams.zeros(
                    header["input_size"] if li == 0 else 2 * header["hidden_size"],
                    header["hidden_size"],
                ),
            )
            for li in range(header["layer_count"])
        ],
        dense_w=np.zeros((header["t2"], 2 * header["hidden_size"])),
        dense_b=np.zeros(header["t2"]),
        dropout=float(header["dropout"]),
        t1=int(header["t1"]),
    )
    offset = newline + 1
    expected = [(name, tuple(shape)) for name, shape in header["blocks"]]
    actual = [(name, block.shape) for name, block in net.blocks()]
    if expected != actual:
        raise FormatError("checkpoint block layout does not match its header")
    for name, block in net.blocks():
        count = block.size
        try:
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        except ValueError:
            raise FormatError(f"checkpoint is truncated in block {name!r}") from None
        block[...] = data.reshape(block.shape)
        offset += count * 8
    if offset != len(blob):
        raise FormatError("checkpoint has trailing or missing parameter bytes")
    return net, header
