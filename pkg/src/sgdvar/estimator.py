"""Streaming engine for averaged stochastic gradient descent.

One observation in, updated state out: the current iterate, its running
average, and a one-pass estimate of the asymptotic covariance of the
average, all in O(d^2) time and memory per step. Also provides the
split-and-average merge for parallel substreams and a versioned binary
snapshot format for checkpoint/resume.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import schedule
from .schedule import StepParams

SNAPSHOT_MAGIC = b"SVAR"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sBIQ5d")


class NumericError(ArithmeticError):
    """A non-finite value reached the estimator."""


@dataclass
class EstimatorState:
    """Full per-stream online state.

    n counts iterates, starting at 1 for the initial point; a state at
    index n has consumed n - 1 observations. residual_acc holds the
    exponentially reweighted sum of (iterate - average) residuals in its
    stabilized scaled form, so no field ever grows beyond the scale of
    the iterates themselves.
    """

    n: int
    iterate: np.ndarray
    average: np.ndarray
    residual_acc: np.ndarray
    covariance: np.ndarray
    params: StepParams


def init(m_init, params: StepParams) -> EstimatorState:
    """Create a state at n=1 from the initial point.

    The average equals the single iterate, so the residual accumulator and
    the covariance estimate both start at zero.
    """
    schedule.validate(params)
    point = np.array(m_init, dtype=float).reshape(-1)
    if not np.isfinite(point).all():
        raise NumericError("initial point contains non-finite values")
    d = point.shape[0]
    return EstimatorState(
        n=1,
        iterate=point.copy(),
        average=point.copy(),
        residual_acc=np.zeros(d),
        covariance=np.zeros((d, d)),
        params=params,
    )


def step(state: EstimatorState, gradient) -> EstimatorState:
    """Advance the state in place by one observation and return it.

    gradient is the stochastic gradient evaluated at the current iterate.
    The covariance update shrinks the previous estimate by (n/(n+1))^(1-delta)
    and adds the outer product of the reweighted residual accumulator with
    gain (1-delta) / (n+1)^(1+s); this is exactly the batch reweighting of
    all past residuals folded into a rank-1 recursion.
    """
    grad = np.asarray(gradient, dtype=float)
    if grad.shape != state.iterate.shape:
        raise ValueError(
            f"gradient shape {grad.shape} does not match state dimension {state.iterate.shape}"
        )
    if not np.isfinite(grad).all():
        raise NumericError("gradient contains non-finite values")

    n = state.n
    params = state.params
    state.iterate -= schedule.step_size(n, params) * grad
    state.average += (state.iterate - state.average) / (n + 1)

    state.residual_acc *= schedule.decay_ratio(n, params)
    state.residual_acc += state.iterate - state.average

    shrink = (n / (n + 1.0)) ** (1.0 - params.delta)
    gain = (1.0 - params.delta) * float(n + 1) ** -(1.0 + params.s)
    state.covariance *= shrink
    state.covariance += gain * np.outer(state.residual_acc, state.residual_acc)

    state.n = n + 1
    return state


def merge(states, weights=None) -> np.ndarray:
    """Average the covariance estimates of parallel substreams.

    weights must be positive and sum to 1; default is uniform. All states
    must share the same dimension and parameters.
    """
    states = list(states)
    if not states:
        raise ValueError("merge requires at least one state")
    d = states[0].iterate.shape[0]
    params = states[0].params
    for st in states[1:]:
        if st.iterate.shape[0] != d:
            raise ValueError("merge requires states of identical dimension")
        if st.params != params:
            raise ValueError("merge requires states with identical params")
    if weights is None:
        weights = np.full(len(states), 1.0 / len(states))
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(states),):
            raise ValueError("one weight per state required")
        if not (weights > 0).all():
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
    merged = np.zeros((d, d))
    for w, st in zip(weights, states):
        merged += w * st.covariance
    return merged


def snapshot(state: EstimatorState) -> bytes:
    """Serialize the state losslessly to bytes.

    Layout: magic, version byte, dimension (u32), n (u64), the five
    schedule parameters, then iterate, average, residual accumulator and
    covariance as raw IEEE-754 doubles, all little-endian.
    """
    p = state.params
    d = state.iterate.shape[0]
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, d, state.n,
        p.c_gamma, p.alpha, p.s, p.delta, p.mu,
    )
    body = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for arr in (state.iterate, state.average, state.residual_acc, state.covariance)
    )
    return header + body


def restore(data: bytes) -> EstimatorState:
    """Rebuild a state from snapshot bytes; exact inverse of snapshot."""
    if len(data) < _HEADER.size:
        raise ValueError("snapshot truncated: header incomplete")
    magic, version, d, n, c_gamma, alpha, s, delta, mu = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not a snapshot: bad magic bytes")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    expected = _HEADER.size + 8 * (3 * d + d * d)
    if len(data) != expected:
        raise ValueError(f"snapshot has {len(data)} bytes, expected {expected}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    return EstimatorState(
        n=n,
        iterate=flat[:d].copy(),
        average=flat[d:2 * d].copy(),
        residual_acc=flat[2 * d:3 * d].copy(),
        covariance=flat[3 * d:].reshape(d, d).copy(),
        params=StepParams(c_gamma, alpha, s, delta, mu),
    )
