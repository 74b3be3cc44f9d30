"""Rotation-stack anonymizers, the selection baseline, model persistence.

A stack is L layers of Householder reflections, layer l holding q_l
directions (q_l <= d). Layer l acts as the product of its reflections with
row 0 applied first; the whole stack applies the LAST layer first and layer
0 last. Because every factor is a reflection, the induced map is exactly
orthogonal for any parameter values, trained or not.

Two variants:

* ``roh``: reflection directions are free parameters.
* ``loh``: each direction is produced from the input being anonymized by a
  tiny per-reflection generator: a 1-D convolution (kernel width 3, zero
  padding 1) over the input treated as a length-d single-channel sequence,
  d output channels, mean-pooled over positions. Every direction in the
  stack is generated from the ORIGINAL input vector, not from the running
  value, so all directions can be computed up front.

Anonymizer forms:

* simplified:        y = W (x - mu) + mu
* general-whitened:  y = L^{-1} W L (x - mu) + mu, with L the whitening
  factor of the pool covariance (so a Gaussian pool maps to itself in
  distribution).

The selection baseline replaces a speaker by the average of a random subset
of the farthest pool centroids; it is the reference point the rotation
approach is measured against.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    FormatError,
    InvalidShape,
    InvalidSpec,
    PoolTooSmall,
    ZeroVector,
)
from .linalg import REFLECTION_NORM_FLOOR, as_vector
from .pool import EmbeddingPool, pool_stats

_MAGIC = b"OHNN"
_VERSION = 1
_VARIANT_CODE = {"roh": 0, "loh": 1}
_FORM_CODE = {"simplified": 0, "general": 1}


@dataclass
class RohLayer:
    """Free reflection directions, one per row."""

    vectors: np.ndarray  # (q, d)


@dataclass
class LohLayer:
    """Per-reflection direction generators (conv kernel taps + bias)."""

    kernel: np.ndarray  # (q, d, 3)
    bias: np.ndarray  # (q, d)


@dataclass
class HouseholderStack:
    dim: int
    variant: str  # "roh" | "loh"
    layers: list

    def __post_init__(self):
        if self.variant not in _VARIANT_CODE:
            raise InvalidSpec(f"unknown variant {self.variant!r}")
        for lay in self.layers:
            rows = lay.vectors.shape[0] if self.variant == "roh" else lay.kernel.shape[0]
            if rows > self.dim:
                raise InvalidShape(
                    f"layer has {rows} reflections, more than dim {self.dim}"
                )

    def layer_sizes(self) -> list[int]:
        if self.variant == "roh":
            return [lay.vectors.shape[0] for lay in self.layers]
        return [lay.kernel.shape[0] for lay in self.layers]

    def param_arrays(self) -> list[np.ndarray]:
        """Trainable tensors in a fixed documented order (layer 0 first)."""
        if self.variant == "roh":
            return [lay.vectors for lay in self.layers]
        out: list[np.ndarray] = []
        for lay in self.layers:
            out.append(lay.kernel)
            out.append(lay.bias)
        return out

    def copy(self) -> "HouseholderStack":
        if self.variant == "roh":
            layers = [RohLayer(l.vectors.copy()) for l in self.layers]
        else:
            layers = [LohLayer(l.kernel.copy(), l.bias.copy()) for l in self.layers]
        return HouseholderStack(self.dim, self.variant, layers)


def init_stack(
    variant: str, dim: int, num_layers: int, reflections_per_layer, seed: int
) -> HouseholderStack:
    """Seeded initialization; equal arguments give bit-identical stacks.

    ``reflections_per_layer`` is an int applied to every layer or a
    per-layer list; every entry must satisfy 1 <= q <= dim. ``roh`` draws
    unit-sphere-uniform directions; ``loh`` draws Gaussian generator
    weights (kernel taps scaled by 1/3 so the bias dominates at init).
    """
    if variant not in _VARIANT_CODE:
        raise InvalidSpec(f"unknown variant {variant!r}")
    if dim < 1 or num_layers < 1:
        raise InvalidShape("dim and num_layers must be positive")
    if isinstance(reflections_per_layer, int):
        sizes = [reflections_per_layer] * num_layers
    else:
        sizes = [int(q) for q in reflections_per_layer]
        if len(sizes) != num_layers:
            raise InvalidShape(
                f"got {len(sizes)} layer sizes for {num_layers} layers"
            )
    for q in sizes:
        if not (1 <= q <= dim):
            raise InvalidShape(f"reflections per layer must be in [1, {dim}], got {q}")
    rng = np.random.default_rng(seed)
    layers = []
    for q in sizes:
        if variant == "roh":
            vecs = rng.standard_normal((q, dim))
            vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
            layers.append(RohLayer(vecs))
        else:
            kernel = rng.standard_normal((q, dim, 3)) / 3.0
            bias = rng.standard_normal((q, dim))
            layers.append(LohLayer(kernel, bias))
    return HouseholderStack(dim, variant, layers)


def _conv_features(x: np.ndarray) -> np.ndarray:
    """Mean-pooled tap sums of the width-3, zero-padded convolution.

    For input x of length d, position t of tap k sees x[t + k - 1] (zero
    outside), so pooling over t collapses to three scalars:
    (S - x[d-1]) / d, S / d, (S - x[0]) / d with S = sum(x). Returns (3,)
    for a vector or (n, 3) for a row batch.
    """
    if x.ndim == 1:
        s = float(x.sum())
        d = x.shape[0]
        return np.array([s - x[-1], s, s - x[0]]) / d
    s = x.sum(axis=1)
    d = x.shape[1]
    return np.stack([s - x[:, -1], s, s - x[:, 0]], axis=1) / d


def _hash_direction(x: np.ndarray) -> np.ndarray:
    """Deterministic unit-ish fallback direction derived from the input bytes.

    Used when a generated direction underflows the norm floor; e_0 plus a
    hashed half-unit vector is never zero.
    """
    digest = hashlib.sha256(np.ascontiguousarray(x).tobytes()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    u = rng.standard_normal(x.shape[-1])
    u /= np.linalg.norm(u)
    e0 = np.zeros(x.shape[-1])
    e0[0] = 1.0
    return e0 + 0.5 * u


def _loh_rows(layer: LohLayer, phi: np.ndarray) -> np.ndarray:
    """Directions for one layer: (q, d) for phi (3,) or (n, q, d) for (n, 3)."""
    if phi.ndim == 1:
        return np.einsum("qdk,k->qd", layer.kernel, phi) + layer.bias
    return np.einsum("qdk,nk->nqd", layer.kernel, phi) + layer.bias[None]


@dataclass
class StackTrace:
    """Forward state needed by the manual backward pass.

    ``inputs[r]`` is the batch entering reflection r of the application
    order; ``directions[r]`` is (d,) when shared across the batch or (n, d)
    when generated per sample; ``order[r]`` maps r back to (layer index,
    row index); ``fallback[r]`` flags rows where the generated direction
    underflowed and a constant replacement was used (no parameter gradient
    flows through those).
    """

    inputs: list[np.ndarray]
    directions: list[np.ndarray]
    order: list[tuple[int, int]]
    per_sample: bool
    phi: np.ndarray | None
    fallback: list[np.ndarray | None]


def _application_order(stack: HouseholderStack) -> list[tuple[int, int]]:
    """(layer, row) pairs in application order: last layer first, row 0 first."""
    order = []
    for li in reversed(range(len(stack.layers))):
        for row in range(stack.layer_sizes()[li]):
            order.append((li, row))
    return order


def stack_directions(
    stack: HouseholderStack, conditioner: np.ndarray | None
) -> tuple[list[np.ndarray], list, bool]:
    """All reflection directions in application order, with fallback masks.

    For ``roh`` the conditioner is ignored. For ``loh`` a 1-D conditioner
    yields directions shared across any batch (the induced map for that
    input); a 2-D conditioner yields per-sample directions, row for row.
    """
    order = _application_order(stack)
    if stack.variant == "roh":
        dirs, fall = [], []
        for li, row in order:
            v = stack.layers[li].vectors[row]
            if float(v @ v) < REFLECTION_NORM_FLOOR**2:
                raise ZeroVector(
                    f"free direction (layer {li}, row {row}) is numerically zero"
                )
            dirs.append(v)
            fall.append(None)
        return dirs, fall, False
    if conditioner is None:
        raise InvalidSpec("loh stacks need a conditioning input")
    cond = np.asarray(conditioner, dtype=np.float64)
    per_sample = cond.ndim == 2
    phi = _conv_features(cond)
    per_layer = {
        li: _loh_rows(stack.layers[li], phi) for li in range(len(stack.layers))
    }
    dirs, fall = [], []
    for li, row in order:
        if per_sample:
            v = per_layer[li][:, row, :].copy()  # (n, d)
            norms2 = np.einsum("nd,nd->n", v, v)
            mask = norms2 < REFLECTION_NORM_FLOOR**2
            if np.any(mask):
                for i in np.nonzero(mask)[0]:
                    v[i] = _hash_direction(cond[i])
            dirs.append(v)
            fall.append(mask if np.any(mask) else None)
        else:
            v = per_layer[li][row].copy()
            if float(v @ v) < REFLECTION_NORM_FLOOR**2:
                v = _hash_direction(cond)
                fall.append(np.array(True))
            else:
                fall.append(None)
            dirs.append(v)
    return dirs, fall, per_sample


def stack_forward(
    stack: HouseholderStack,
    x: np.ndarray,
    conditioner: np.ndarray | None = None,
    reverse: bool = False,
    want_trace: bool = False,
):
    """Apply the stack (or, with ``reverse``, its inverse) to row batch ``x``.

    Args:
        x: (n, d) rows to transform.
        conditioner: input(s) the ``loh`` generators read; defaults to ``x``
            itself. Pass the original vectors when transforming something
            derived from them (centered or whitened values).
        reverse: apply the same reflections in exactly reversed order,
            which inverts the forward map.
        want_trace: also return the forward trace for backpropagation
            (forward order only).

    Returns:
        The transformed rows, or (rows, StackTrace) when ``want_trace``.
    """
    xb = np.asarray(x, dtype=np.float64)
    if xb.ndim != 2 or xb.shape[1] != stack.dim:
        raise DimensionMismatch(f"expected (n, {stack.dim}) rows, got {xb.shape}")
    cond = xb if conditioner is None else np.asarray(conditioner, dtype=np.float64)
    dirs, fall, per_sample = stack_directions(stack, cond)
    order = _application_order(stack)
    seq = range(len(dirs) - 1, -1, -1) if reverse else range(len(dirs))
    if want_trace and reverse:
        raise InvalidSpec("traces are only recorded for the forward order")
    z = xb.copy()
    inputs: list[np.ndarray] = []
    for r in seq:
        if want_trace:
            inputs.append(z.copy())
        v = dirs[r]
        if per_sample:
            beta = np.einsum("nd,nd->n", v, v)
            alpha = np.einsum("nd,nd->n", z, v)
            z = z - (2.0 * alpha / beta)[:, None] * v
        else:
            beta = float(v @ v)
            t = z @ v
            z = z - np.outer(t, v) * (2.0 / beta)
    if want_trace:
        trace = StackTrace(inputs, dirs, order, per_sample,
                           _conv_features(cond) if stack.variant == "loh" else None,
                           fall)
        return z, trace
    return z


def apply_stack(
    stack: HouseholderStack,
    x,
    conditioner=None,
    reverse: bool = False,
) -> np.ndarray:
    """Rank-preserving wrapper over :func:`stack_forward` for (d,) or (n, d)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        out = stack_forward(stack, arr[None, :],
                            None if conditioner is None else conditioner,
                            reverse=reverse)
        return out[0]
    return stack_forward(stack, arr, conditioner, reverse=reverse)


def stack_backward(
    stack: HouseholderStack, trace: StackTrace, grad_out: np.ndarray
) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. the stack parameters.

    ``grad_out`` is the loss gradient at the stack output, (n, d). Returns
    arrays matching :meth:`HouseholderStack.param_arrays` shape for shape.
    Inputs are treated as constants: for ``loh`` no gradient flows into the
    conditioning vectors, only into kernels and biases.
    """
    if stack.variant == "roh":
        grads = [np.zeros_like(l.vectors) for l in stack.layers]
    else:
        gk = [np.zeros_like(l.kernel) for l in stack.layers]
        gb = [np.zeros_like(l.bias) for l in stack.layers]
    g = np.asarray(grad_out, dtype=np.float64).copy()
    for r in range(len(trace.order) - 1, -1, -1):
        li, row = trace.order[r]
        z = trace.inputs[r]
        v = trace.directions[r]
        if trace.per_sample:
            beta = np.einsum("nd,nd->n", v, v)
            alpha = np.einsum("nd,nd->n", z, v)
            gv = np.einsum("nd,nd->n", g, v)
            dv = (
                -(2.0 * gv / beta)[:, None] * z
                + (4.0 * alpha * gv / beta**2)[:, None] * v
                - (2.0 * alpha / beta)[:, None] * g
            )
            if trace.fallback[r] is not None:
                dv[trace.fallback[r]] = 0.0
            gk[li][row] += np.einsum("nd,nk->dk", dv, trace.phi)
            gb[li][row] += dv.sum(axis=0)
            g = g - (2.0 * gv / beta)[:, None] * v
        else:
            beta = float(v @ v)
            t_in = z @ v
            t_g = g @ v
            dv = (
                -(2.0 / beta) * (z.T @ t_g + g.T @ t_in)
                + (4.0 / beta**2) * float(t_in @ t_g) * v
            )
            if stack.variant == "roh":
                grads[li][row] += dv
            else:
                if trace.fallback[r] is None:
                    gk[li][row] += np.outer(dv, trace.phi)
                    gb[li][row] += dv
            g = g - (2.0 / beta) * np.outer(t_g, v)
    if stack.variant == "roh":
        return grads
    out: list[np.ndarray] = []
    for k, b in zip(gk, gb):
        out.append(k)
        out.append(b)
    return out


@dataclass
class AnonymizerModel:
    """A trained (or freshly initialized) anonymizer.

    ``whitening`` holds (L, L_inv) and is required for the general form;
    the pair must satisfy L @ L_inv = I within 1e-10. ``head`` optionally
    carries classifier weights so training can resume from a checkpoint;
    anonymization never reads it.
    """

    stack: HouseholderStack
    mu: np.ndarray
    form: str = "simplified"
    whitening: tuple[np.ndarray, np.ndarray] | None = None
    seed: int = 0
    head: np.ndarray | None = None

    def __post_init__(self):
        self.mu = as_vector(self.mu, dim=self.stack.dim)
        if self.form not in _FORM_CODE:
            raise InvalidSpec(f"unknown form {self.form!r}")
        if self.form == "general":
            if self.whitening is None:
                raise InvalidSpec("general form requires the whitening pair")
            lw, li = self.whitening
            # C-contiguous copies: keeps arithmetic bit-identical after
            # serialization round-trips (BLAS results depend on layout)
            lw = np.ascontiguousarray(lw, dtype=np.float64)
            li = np.ascontiguousarray(li, dtype=np.float64)
            d = self.stack.dim
            if lw.shape != (d, d) or li.shape != (d, d):
                raise DimensionMismatch("whitening pair must be (d, d) matrices")
            resid = np.max(np.abs(lw @ li - np.eye(d)))
            if resid > 1e-10:
                raise InvalidSpec(
                    f"whitening pair is inconsistent: |L L_inv - I| = {resid:.3e}"
                )
            self.whitening = (lw, li)
        if self.head is not None:
            head = np.asarray(self.head, dtype=np.float64)
            if head.ndim != 2 or head.shape[0] != self.stack.dim:
                raise DimensionMismatch(
                    f"head must be (dim, classes), got {head.shape}"
                )
            self.head = head

    def without_head(self) -> "AnonymizerModel":
        return replace(self, stack=self.stack.copy(), head=None)


def model_forward(
    model: AnonymizerModel, x: np.ndarray, want_trace: bool = False
):
    """Anonymize a row batch, optionally keeping the backprop trace.

    simplified:       y = W (x - mu) + mu
    general-whitened: y = L_inv W L (x - mu) + mu

    ``loh`` directions are always generated from the raw input rows.
    """
    xb = np.asarray(x, dtype=np.float64)
    if xb.ndim != 2 or xb.shape[1] != model.stack.dim:
        raise DimensionMismatch(
            f"expected (n, {model.stack.dim}) rows, got {xb.shape}"
        )
    z = xb - model.mu
    if model.form == "general":
        lw, li = model.whitening
        z = z @ lw.T
    if want_trace:
        rot, trace = stack_forward(model.stack, z, conditioner=xb, want_trace=True)
    else:
        rot = stack_forward(model.stack, z, conditioner=xb)
    if model.form == "general":
        rot = rot @ li.T
    out = rot + model.mu
    return (out, trace) if want_trace else out


def model_backward(
    model: AnonymizerModel, trace, grad_out: np.ndarray
) -> list[np.ndarray]:
    """Parameter gradients given the loss gradient at the anonymized output."""
    g = np.asarray(grad_out, dtype=np.float64)
    if model.form == "general":
        _, li = model.whitening
        g = g @ li  # (g_y L_inv^T)^T rows: chain through y = r L_inv^T + mu
    return stack_backward(model.stack, trace, g)


def anonymize(model: AnonymizerModel, x) -> np.ndarray:
    """Anonymize one vector (d,) or a batch (n, d); rank is preserved."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return model_forward(model, arr[None, :])[0]
    return model_forward(model, arr)


@dataclass(frozen=True)
class SelectionConfig:
    """Selection baseline: average a random subset of the farthest centroids."""

    n_far: int = 200
    n_pick: int = 100
    seed: int = 0

    def validate(self) -> None:
        if self.n_pick < 1 or self.n_far < 1:
            raise InvalidSpec("n_far and n_pick must be positive")
        if self.n_pick > self.n_far:
            raise InvalidSpec(f"n_pick {self.n_pick} exceeds n_far {self.n_far}")


def select_from_centroids(
    centroids: dict[str, np.ndarray], source_centroid, cfg: SelectionConfig
) -> np.ndarray:
    """Pseudo-vector for one source speaker from candidate centroids.

    Ranks candidates by cosine distance from the source (farthest first,
    ties by ascending speaker id), keeps the top ``n_far``, draws ``n_pick``
    of those uniformly without replacement with ``cfg.seed`` and returns
    their average (accumulated in sorted rank order, so a draw of all
    candidates is seed-independent).
    """
    cfg.validate()
    src = as_vector(source_centroid)
    norm = float(np.linalg.norm(src))
    if norm == 0.0:
        raise ZeroVector("source centroid has zero norm")
    if len(centroids) < cfg.n_far:
        raise PoolTooSmall(
            f"pool has {len(centroids)} speakers, selection needs {cfg.n_far}"
        )
    ranked = []
    for sid in sorted(centroids):
        c = as_vector(centroids[sid], dim=src.shape[0])
        cn = float(np.linalg.norm(c))
        if cn == 0.0:
            raise ZeroVector(f"candidate centroid {sid!r} has zero norm")
        dist = 1.0 - float(src @ c) / (norm * cn)
        ranked.append((-dist, sid, c))
    ranked.sort(key=lambda t: (t[0], t[1]))
    far = ranked[: cfg.n_far]
    rng = np.random.default_rng(cfg.seed)
    picked = np.sort(rng.choice(cfg.n_far, size=cfg.n_pick, replace=False))
    chosen = np.stack([far[i][2] for i in picked])
    return chosen.mean(axis=0)


def select_anonymize(
    pool: EmbeddingPool, source_centroid, cfg: SelectionConfig
) -> np.ndarray:
    """Selection baseline against a pool's per-speaker centroids."""
    stats = pool_stats(pool)
    return select_from_centroids(stats.centroids, source_centroid, cfg)


def _write_array(out: io.BytesIO, arr: np.ndarray) -> None:
    out.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def model_to_bytes(model: AnonymizerModel) -> bytes:
    """Serialize to the binary container (magic ``OHNN``); see README."""
    out = io.BytesIO()
    out.write(_MAGIC)
    stack = model.stack
    sizes = stack.layer_sizes()
    out.write(
        struct.pack(
            "<HBBII",
            _VERSION,
            _VARIANT_CODE[stack.variant],
            _FORM_CODE[model.form],
            stack.dim,
            len(sizes),
        )
    )
    out.write(struct.pack(f"<{len(sizes)}I", *sizes))
    out.write(struct.pack("<q", int(model.seed)))
    _write_array(out, model.mu)
    if model.whitening is None:
        out.write(struct.pack("<B", 0))
    else:
        out.write(struct.pack("<B", 1))
        _write_array(out, model.whitening[0])
        _write_array(out, model.whitening[1])
    for lay in stack.layers:
        if stack.variant == "roh":
            _write_array(out, lay.vectors)
        else:
            _write_array(out, lay.kernel)
            _write_array(out, lay.bias)
    if model.head is None:
        out.write(struct.pack("<B", 0))
    else:
        out.write(struct.pack("<B", 1))
        out.write(struct.pack("<I", model.head.shape[1]))
        _write_array(out, model.head)
    return out.getvalue()


def _read_array(rd, shape, what: str) -> np.ndarray:
    n = int(np.prod(shape))
    raw = rd.take(8 * n, what)
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def model_from_bytes(data: bytes) -> AnonymizerModel:
    from .pool import _Reader  # same cursor-with-offset helper

    rd = _Reader(data)
    if rd.take(4, "magic") != _MAGIC:
        raise FormatError(0, "bad magic, not a model container")
    version, var_code, form_code, dim, num_layers = struct.unpack(
        "<HBBII", rd.take(12, "header")
    )
    if version != _VERSION:
        raise FormatError(4, f"unsupported version {version}")
    variants = {v: k for k, v in _VARIANT_CODE.items()}
    forms = {v: k for k, v in _FORM_CODE.items()}
    if var_code not in variants:
        raise FormatError(6, f"unknown variant code {var_code}")
    if form_code not in forms:
        raise FormatError(7, f"unknown form code {form_code}")
    if dim == 0 or num_layers == 0:
        raise FormatError(8, "dim and layer count must be positive")
    sizes = struct.unpack(f"<{num_layers}I", rd.take(4 * num_layers, "layer sizes"))
    for q in sizes:
        if not (1 <= q <= dim):
            raise FormatError(16, f"layer size {q} outside [1, {dim}]")
    (seed,) = struct.unpack("<q", rd.take(8, "seed"))
    mu = _read_array(rd, (dim,), "mean vector")
    (wh_flag,) = struct.unpack("<B", rd.take(1, "whitening flag"))
    whitening = None
    if wh_flag == 1:
        lw = _read_array(rd, (dim, dim), "whitening matrix")
        li = _read_array(rd, (dim, dim), "inverse whitening matrix")
        whitening = (lw, li)
    elif wh_flag != 0:
        raise FormatError(rd.pos - 1, f"bad whitening flag {wh_flag}")
    layers = []
    for q in sizes:
        if variants[var_code] == "roh":
            layers.append(RohLayer(_read_array(rd, (q, dim), "layer directions")))
        else:
            kernel = _read_array(rd, (q, dim, 3), "layer kernels")
            bias = _read_array(rd, (q, dim), "layer biases")
            layers.append(LohLayer(kernel, bias))
    (head_flag,) = struct.unpack("<B", rd.take(1, "head flag"))
    head = None
    if head_flag == 1:
        (classes,) = struct.unpack("<I", rd.take(4, "head width"))
        head = _read_array(rd, (dim, classes), "head weights")
    elif head_flag != 0:
        raise FormatError(rd.pos - 1, f"bad head flag {head_flag}")
    if rd.pos != len(data):
        raise FormatError(rd.pos, "trailing bytes after the model")
    stack = HouseholderStack(int(dim), variants[var_code], layers)
    return AnonymizerModel(
        stack,
        mu,
        form=forms[form_code],
        whitening=whitening,
        seed=int(seed),
        head=head,
    )


def save_model(model: AnonymizerModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> AnonymizerModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def model_to_json(model: AnonymizerModel) -> dict:
    """Inspection-friendly JSON form (floats via repr round-trip exactly)."""
    stack = model.stack
    doc = {
        "container": "rotation-anonymizer",
        "version": _VERSION,
        "variant": stack.variant,
        "form": model.form,
        "dim": stack.dim,
        "layer_sizes": stack.layer_sizes(),
        "seed": int(model.seed),
        "mu": model.mu.tolist(),
    }
    if model.whitening is not None:
        doc["whitening"] = model.whitening[0].tolist()
        doc["whitening_inverse"] = model.whitening[1].tolist()
    layers = []
    for lay in stack.layers:
        if stack.variant == "roh":
            layers.append({"directions": lay.vectors.tolist()})
        else:
            layers.append(
                {"kernel": lay.kernel.tolist(), "bias": lay.bias.tolist()}
            )
    doc["layers"] = layers
    if model.head is not None:
        doc["head"] = model.head.tolist()
    return doc


def save_model_json(model: AnonymizerModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh, indent=2, sort_keys=True)
        fh.write("\n")
