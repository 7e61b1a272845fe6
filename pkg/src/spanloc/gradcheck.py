"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .tensor import Tape, Tensor

# Coordinates whose gradient magnitude falls below this floor are compared on
# an absolute scale instead, so roundoff in the difference quotient cannot
# masquerade as a relative error.
_SCALE_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_index: tuple[int, ...]
    analytic_at_worst: float
    numeric_at_worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare d f(x) / d x against central differences, coordinate by coordinate.

    ``f`` must be deterministic (run dropout in eval mode). The probe
    evaluations run without an active tape, so they do not record anything.
    """
    if h <= 0:
        raise ConfigError(f"finite-difference step must be positive, got {h}")
    # The probe loop perturbs x.data in place through a flat view, which
    # requires contiguous storage (0-d arrays already are).
    if not x.data.flags["C_CONTIGUOUS"]:
        x.data = x.data.copy()
    x.requires_grad = True
    x.grad = None
    with Tape() as tape:
        y = f(x)
    tape.backward(y)
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(x).item()
        flat[i] = orig - h
        f_minus = f(x).item()
        flat[i] = orig
        num_flat[i] = (f_plus - f_minus) / (2.0 * h)

    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _SCALE_FLOOR)
    rel = np.abs(analytic - numeric) / scale
    worst_flat = int(np.argmax(rel)) if rel.size else 0
    worst = np.unravel_index(worst_flat, x.data.shape) if x.data.ndim else ()
    return GradCheckReport(
        max_rel_err=float(rel.reshape(-1)[worst_flat]) if rel.size else 0.0,
        worst_index=tuple(int(i) for i in worst),
        analytic_at_worst=float(analytic.reshape(-1)[worst_flat]) if rel.size else 0.0,
        numeric_at_worst=float(numeric.reshape(-1)[worst_flat]) if rel.size else 0.0,
        tol=tol,
    )


def _weighted_sum(t, weights: np.ndarray):
    from .tensor import reduce_sum, tensor

    return reduce_sum(t * tensor(weights))


def check_tensor_ops(seed: int = 0) -> list[tuple[str, float]]:
    """Finite-difference every differentiable core op on several shapes."""
    from . import tensor as tc

    rng = np.random.default_rng(seed)
    shapes = [(2, 3), (4, 4), (5, 2)]
    results: list[tuple[str, float]] = []

    def run(name: str, make_case, cases) -> None:
        worst = 0.0
        for case in cases:
            f, x = make_case(case)
            worst = max(worst, finite_diff_check(f, x).max_rel_err)
        results.append((name, worst))

    def elementwise_case(op, offset=0.0):
        def make(shape):
            x = tc.tensor(rng.standard_normal(shape) + offset, requires_grad=True)
            w = rng.standard_normal(shape)
            return (lambda t: _weighted_sum(op(t), w)), x

        return make

    run("sigmoid", elementwise_case(tc.sigmoid), shapes)
    run("tanh", elementwise_case(tc.tanh), shapes)
    run("exp", elementwise_case(tc.exp), shapes)
    run("softmax", elementwise_case(lambda t: tc.softmax(t, axis=1)), shapes)
    run("log", elementwise_case(tc.log, offset=4.0), shapes)

    # Keep relu/clip samples away from their kinks, where central differences
    # straddle the non-differentiable point.
    def kink_safe_case(op, kinks):
        def make(shape):
            v = rng.standard_normal(shape)
            for kink in kinks:
                near = np.abs(v - kink) < 0.05
                v[near] = kink + 0.1
            x = tc.tensor(v, requires_grad=True)
            w = rng.standard_normal(shape)
            return (lambda t: _weighted_sum(op(t), w)), x

        return make

    run("relu", kink_safe_case(tc.relu, [0.0]), shapes)
    run("clip", kink_safe_case(lambda t: tc.clip(t, -0.5, 0.5), [-0.5, 0.5]), shapes)

    def binary_case(op):
        def make(shape):
            x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
            other = tc.tensor(rng.standard_normal(shape), requires_grad=True)
            w = rng.standard_normal(shape)
            return (lambda t: _weighted_sum(op(t, other), w)), x

        return make

    run("add", binary_case(tc.add), shapes)
    run("sub", binary_case(tc.sub), shapes)
    run("mul", binary_case(tc.mul), shapes)

    def broadcast_case(shape):
        x = tc.tensor(rng.standard_normal(shape[1]), requires_grad=True)
        base = tc.tensor(rng.standard_normal(shape))
        w = rng.standard_normal(shape)
        return (lambda t: _weighted_sum(base + t, w)), x

    run("add_row_broadcast", broadcast_case, shapes)

    def matmul_case(shape):
        m, k = shape
        x = tc.tensor(rng.standard_normal((m, k)), requires_grad=True)
        other = tc.tensor(rng.standard_normal((k, m + 1)), requires_grad=True)
        w = rng.standard_normal((m, m + 1))
        return (lambda t: _weighted_sum(tc.matmul(t, other), w)), x

    run("matmul", matmul_case, shapes)

    for kind, reducer in (("sum", tc.reduce_sum), ("mean", tc.reduce_mean), ("max", tc.reduce_max)):

        def reduce_case(shape, reducer=reducer):
            x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
            w = rng.standard_normal((shape[0], 1))
            return (lambda t: _weighted_sum(reducer(t, axis=1, keepdims=True), w)), x

        run(f"reduce_{kind}", reduce_case, shapes)

    def concat_case(shape):
        x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
        other = tc.tensor(rng.standard_normal(shape), requires_grad=True)
        w = rng.standard_normal((2 * shape[0], shape[1]))
        return (lambda t: _weighted_sum(tc.concat([t, other], axis=0), w)), x

    run("concat", concat_case, shapes)

    def slice_case(shape):
        x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
        w = rng.standard_normal((shape[0] - 1, shape[1]))
        return (lambda t: _weighted_sum(tc.slice_axis(t, 0, 1, shape[0]), w)), x

    run("slice", slice_case, shapes)

    def reshape_case(shape):
        x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
        w = rng.standard_normal(shape[0] * shape[1])
        return (lambda t: _weighted_sum(tc.reshape(t, (shape[0] * shape[1],)), w)), x

    run("reshape", reshape_case, shapes)

    def transpose_case(shape):
        x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
        w = rng.standard_normal((shape[1], shape[0]))
        return (lambda t: _weighted_sum(tc.transpose(t), w)), x

    run("transpose", transpose_case, shapes)

    def take_case(shape):
        x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
        idx = [0, shape[0] - 1, 0]
        w = rng.standard_normal((3, shape[1]))
        return (lambda t: _weighted_sum(tc.take_rows(t, idx), w)), x

    run("take_rows", take_case, shapes)

    def layer_norm_case(shape):
        x = tc.tensor(rng.standard_normal(shape), requires_grad=True)
        gain = tc.tensor(rng.standard_normal(shape[1]), requires_grad=True)
        bias = tc.tensor(rng.standard_normal(shape[1]), requires_grad=True)
        w = rng.standard_normal(shape)
        return (lambda t: _weighted_sum(tc.layer_norm(t, gain, bias), w)), x

    run("layer_norm", layer_norm_case, shapes)

    def gru_case(shape):
        steps, d_in = shape
        hid = 3
        x = tc.tensor(rng.standard_normal((steps, d_in)), requires_grad=True)
        args = (
            tc.tensor(rng.standard_normal(hid), requires_grad=True),
            tc.tensor(0.4 * rng.standard_normal((d_in + hid, 2 * hid)), requires_grad=True),
            tc.tensor(rng.standard_normal(2 * hid), requires_grad=True),
            tc.tensor(0.4 * rng.standard_normal((d_in + hid, hid)), requires_grad=True),
            tc.tensor(rng.standard_normal(hid), requires_grad=True),
        )
        w = rng.standard_normal((steps, hid))
        return (lambda t: _weighted_sum(tc.gru_scan(t, *args, reverse=steps % 2 == 0), w)), x

    run("gru_scan", gru_case, shapes)

    def lstm_case(shape):
        steps, d_in = shape
        hid = 3
        x = tc.tensor(rng.standard_normal((steps, d_in)), requires_grad=True)
        args = (
            tc.tensor(rng.standard_normal(hid), requires_grad=True),
            tc.tensor(rng.standard_normal(hid), requires_grad=True),
            tc.tensor(0.4 * rng.standard_normal((d_in + hid, 4 * hid)), requires_grad=True),
            tc.tensor(rng.standard_normal(4 * hid), requires_grad=True),
        )
        w = rng.standard_normal((steps, 2 * hid))
        return (lambda t: _weighted_sum(tc.lstm_scan(t, *args, reverse=steps % 2 == 1), w)), x

    run("lstm_scan", lstm_case, shapes)
    return results


def _toy_model(seed: int = 0):
    from .model import GroundingModel, ModelConfig

    config = ModelConfig(
        d_model=8,
        hidden=4,
        d_video_in=6,
        vocab_size=8,
        max_t=8,
        max_n=4,
        d_boundary=8,
        d_context=8,
        local_scales=(1, 3),
        global_scales=(1, 2),
        dropout=0.0,
    )
    return GroundingModel(config, seed=seed)


def check_fusion(seed: int = 0) -> list[tuple[str, float]]:
    """Gradients through the word-video fusion, inputs and parameters."""
    from .attention import WordVideoFusion
    from .params import ParameterStore
    from . import tensor as tc

    rng = np.random.default_rng(seed)
    store = ParameterStore()
    fusion = WordVideoFusion(4, store, rng)
    video = tc.tensor(rng.standard_normal((5, 4)), requires_grad=True)
    query = tc.tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = rng.standard_normal((5, 8))

    results = []
    for name, leaf in [("fusion_video", video), ("fusion_query", query)] + [
        (f"fusion_param:{n}", store[n]) for n in store.names()
    ]:
        store.zero_grads()
        video.grad = query.grad = None
        report = finite_diff_check(lambda _: _weighted_sum(fusion(video, query), w), leaf)
        results.append((name, report.max_rel_err))
    return results


def check_scorer(seed: int = 0) -> list[tuple[str, float]]:
    """Gradients through the span scorer from the fused sequence down."""
    from .localizer import ContextConfig, SpanScorer
    from .params import ParameterStore
    from . import tensor as tc

    rng = np.random.default_rng(seed)
    store = ParameterStore()
    scorer = SpanScorer(
        d_model=4,
        hidden=3,
        d_boundary=4,
        context=ContextConfig(local_scales=(1, 3), global_scales=(1, 2), d_context=4),
        dropout_rate=0.0,
        sigmoid_per_head=False,
        use_contexts=True,
        store=store,
        rng=rng,
    )
    fused = tc.tensor(rng.standard_normal((4, 8)), requires_grad=True)
    w = rng.standard_normal((4, 4))

    results = []
    for name, leaf in [("scorer_input", fused)] + [
        (f"scorer_param:{n}", store[n]) for n in store.names()
    ]:
        store.zero_grads()
        fused.grad = None
        report = finite_diff_check(
            lambda _: _weighted_sum(scorer.score_map(fused), w), leaf
        )
        results.append((name, report.max_rel_err))
    return results


def check_pipeline(seed: int = 0) -> list[tuple[str, float]]:
    """Gradients of the full loss on one toy example, every parameter."""
    from .supervision import bce_loss, build_supervision

    rng = np.random.default_rng(seed)
    model = _toy_model(seed)
    features = rng.standard_normal((4, 6))
    tokens = [1, 5, 2]
    targets = build_supervision((1, 2), 4)

    def loss_fn(_):
        return bce_loss(model.score(features, tokens), targets)

    results = []
    for name in model.store.names():
        model.store.zero_grads()
        report = finite_diff_check(loss_fn, model.store[name])
        results.append((f"pipeline:{name}", report.max_rel_err))
    return results


def run_battery(seed: int = 0) -> dict[str, list[tuple[str, float]]]:
    """All gradient checks, grouped the way the command line reports them."""
    return {
        "tensor-ops": check_tensor_ops(seed),
        "fusion": check_fusion(seed),
        "scorer": check_scorer(seed),
        "pipeline": check_pipeline(seed),
    }
