"""Discrete-tick integer neuron with signed leak.

One tick of a neuron, in order:

1. leak - the potential carried into the tick moves by ``sign(V) * l``
   (inert at zero); a leak toward zero stops at zero instead of crossing it
2. integrate - ``V += n_exc * w_e - n_inh * w_i``
3. fire - if ``V >= threshold`` the neuron spikes and ``V = v_reset``
4. floor - ``V = max(V, floor)``

All arithmetic is exact integer on 64-bit signed state.
"""

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Set, Tuple

import numpy as np

from .exceptions import NeuronConfigError

# Refractory leak magnitude and weight from the single-spike condition
# w_e + l >= threshold with the smallest achievable w_e / l ratio.
REFRACTORY_WEIGHT = 255
REFRACTORY_LEAK = -254


@dataclass(frozen=True)
class NeuronConfig:
    w_e: int
    w_i: int
    threshold: int
    leak: int
    v_reset: int
    floor: int
    kind: str = "custom"

    def __post_init__(self):
        if self.threshold <= 0:
            raise NeuronConfigError(f"threshold must be positive, got {self.threshold}")
        if self.floor > 0:
            raise NeuronConfigError(f"floor must be <= 0, got {self.floor}")
        if self.w_e < 0 or self.w_i < 0:
            raise NeuronConfigError("weights are magnitudes and must be >= 0")


@dataclass(frozen=True)
class NeuronState:
    V: int = 0


class TickInput(NamedTuple):
    n_exc: int = 0
    n_inh: int = 0


def quantize_reset(tau_r: float, leak: int = REFRACTORY_LEAK) -> int:
    """Pick V_r = -(2^n - 1) whose recovery time |V_r| / |l| is closest to tau_r."""
    if tau_r <= 0:
        raise NeuronConfigError(f"tau_r must be positive, got {tau_r}")
    magnitude = abs(leak)
    best_n = 1
    best_err = math.inf
    n = 1
    while True:
        period = ((1 << n) - 1) / magnitude
        err = abs(tau_r - period)
        if err < best_err:
            best_n, best_err = n, err
        if period > tau_r:
            break
        n += 1
    return -((1 << best_n) - 1)


def refractory_config(tau_r: float) -> NeuronConfig:
    """Input-copying neuron that blocks a second spike for about tau_r ticks."""
    v_reset = quantize_reset(tau_r, REFRACTORY_LEAK)
    config = NeuronConfig(
        w_e=REFRACTORY_WEIGHT,
        w_i=0,
        threshold=1,
        leak=REFRACTORY_LEAK,
        v_reset=v_reset,
        floor=v_reset,
        kind="refractory",
    )
    if config.w_e + config.leak < config.threshold:
        raise NeuronConfigError("refractory neuron would not fire from rest")
    return config


def delay_config(tau_d: int) -> NeuronConfig:
    """Neuron that re-emits an input tau_d - 1 ticks later by leaking up to threshold."""
    if tau_d < 2:
        raise NeuronConfigError(f"tau_d must be at least 2, got {tau_d}")
    return NeuronConfig(
        w_e=1, w_i=0, threshold=tau_d, leak=1, v_reset=0, floor=0, kind="delay"
    )


def ds_config() -> NeuronConfig:
    """Self-exciting direction-selective neuron (reset above threshold)."""
    return NeuronConfig(
        w_e=150, w_i=50, threshold=125, leak=-1, v_reset=127, floor=-50, kind="ds"
    )


def identity_config() -> NeuronConfig:
    """Relay neuron: one output spike per input spike, no memory."""
    return NeuronConfig(
        w_e=1, w_i=0, threshold=1, leak=0, v_reset=0, floor=0, kind="identity"
    )


def _leak(V: int, leak: int) -> int:
    if V == 0:
        return 0
    moved = V + (1 if V > 0 else -1) * leak
    if (V > 0 and moved < 0) or (V < 0 and moved > 0):
        return 0
    return moved


def step(
    state: NeuronState, config: NeuronConfig, input: TickInput = TickInput()
) -> Tuple[NeuronState, bool]:
    """Advance one neuron by one tick."""
    V = _leak(state.V, config.leak)
    V += input.n_exc * config.w_e - input.n_inh * config.w_i
    spiked = V >= config.threshold
    if spiked:
        V = config.v_reset
    V = max(V, config.floor)
    return NeuronState(V), spiked


@dataclass(frozen=True)
class NeuronParams:
    """Per-neuron parameter columns for array stepping."""

    w_e: np.ndarray
    w_i: np.ndarray
    threshold: np.ndarray
    leak: np.ndarray
    v_reset: np.ndarray
    floor: np.ndarray

    @classmethod
    def from_configs(
        cls, configs: Sequence[NeuronConfig], kinds: np.ndarray
    ) -> "NeuronParams":
        """Gather parameters for neurons whose config index is given by ``kinds``."""
        table = np.array(
            [
                (c.w_e, c.w_i, c.threshold, c.leak, c.v_reset, c.floor)
                for c in configs
            ],
            dtype=np.int64,
        ).reshape(-1, 6)
        cols = table[np.asarray(kinds, dtype=np.intp)]
        return cls(*(np.ascontiguousarray(cols[:, i]) for i in range(6)))

    def __len__(self) -> int:
        return len(self.threshold)

    def slice(self, start: int, stop: int) -> "NeuronParams":
        return NeuronParams(
            self.w_e[start:stop],
            self.w_i[start:stop],
            self.threshold[start:stop],
            self.leak[start:stop],
            self.v_reset[start:stop],
            self.floor[start:stop],
        )


def step_array(
    V: np.ndarray, params: NeuronParams, n_exc: np.ndarray, n_inh: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized ``step``; bit-identical to stepping each neuron on its own."""
    sign = np.sign(V)
    moved = V + sign * params.leak
    crossed = (sign != 0) & (np.sign(moved) != sign)
    V = np.where(crossed, 0, moved)
    V = V + n_exc * params.w_e - n_inh * params.w_i
    spiked = V >= params.threshold
    V = np.where(spiked, params.v_reset, V)
    V = np.maximum(V, params.floor)
    return V, spiked


def refractory_period_achieved(config: NeuronConfig, s: int) -> int:
    """Ticks until a refractory neuron recovers to rest after s intervening inputs.

    ``s`` counts the inputs received after a spike, up to and including the
    one that produces the next spike; the inter-spike interval is never
    shorter than the returned value.
    """
    numerator = abs(config.v_reset) - config.w_e * s
    if numerator <= 0:
        return 0
    return math.ceil(numerator / abs(config.leak))


def delay_response(config: NeuronConfig, input_ticks: Iterable[int]) -> Set[int]:
    """Output ticks of a delay neuron driven by one input spike per listed tick."""
    ticks = sorted(set(input_ticks))
    if not ticks:
        return set()
    inputs = set(ticks)
    horizon = ticks[-1] + math.ceil(config.threshold / max(1, abs(config.leak))) + 2
    state = NeuronState()
    out: Set[int] = set()
    for tick in range(ticks[0], horizon + 1):
        state, spiked = step(state, config, TickInput(int(tick in inputs), 0))
        if spiked:
            out.add(tick)
    return out


def anti_preferred_window(config: NeuronConfig) -> int:
    """Largest lag for which an inhibition followed by an excitation stays silent.

    From rest the neuron receives one inhibitory spike at tick 0 and one
    excitatory spike ``lag`` ticks later; the result is the largest ``lag``
    such that no lag in ``1..lag`` makes the neuron fire.
    """
    limit = abs(config.floor) // max(1, abs(config.leak)) + 2
    window = 0
    for lag in range(1, limit + 1):
        state, _ = step(NeuronState(), config, TickInput(0, 1))
        for _ in range(lag - 1):
            state, _ = step(state, config)
        _, spiked = step(state, config, TickInput(1, 0))
        if spiked:
            break
        window = lag
    return window
