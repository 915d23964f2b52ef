import numpy as np
import pytest

from spikeflow.exceptions import NeuronConfigError
from spikeflow.neuron import (
    NeuronConfig,
    NeuronParams,
    NeuronState,
    TickInput,
    anti_preferred_window,
    delay_config,
    delay_response,
    ds_config,
    identity_config,
    quantize_reset,
    refractory_config,
    refractory_period_achieved,
    step,
    step_array,
)


def run(config, inputs, ticks):
    """Step one neuron from rest; ``inputs`` maps tick -> TickInput."""
    state = NeuronState()
    spikes = []
    for t in range(ticks):
        state, spiked = step(state, config, inputs.get(t, TickInput()))
        if spiked:
            spikes.append(t)
    return spikes, state


class TestNeuronConfig:
    """Parameter invariants."""

    def test_threshold_must_be_positive(self):
        """Test a zero threshold is rejected."""
        with pytest.raises(NeuronConfigError):
            NeuronConfig(w_e=1, w_i=0, threshold=0, leak=0, v_reset=0, floor=0)

    def test_floor_must_not_be_positive(self):
        """Test a positive floor is rejected."""
        with pytest.raises(NeuronConfigError):
            NeuronConfig(w_e=1, w_i=0, threshold=1, leak=0, v_reset=0, floor=1)

    def test_delay_needs_two_ticks(self):
        """Test tau_d below 2 is rejected."""
        with pytest.raises(NeuronConfigError):
            delay_config(1)

    def test_reset_quantized_to_power_of_two(self):
        """Test V_r = -(2^n - 1) closest to tau_r * 254."""
        assert quantize_reset(60) == -16383
        assert quantize_reset(32) == -8191
        assert refractory_config(60).v_reset == -16383

    def test_reset_rejects_non_positive_tau(self):
        """Test tau_r must be positive."""
        with pytest.raises(NeuronConfigError):
            quantize_reset(0)


class TestRefractory:
    """Input-copying neuron with refractory period."""

    def test_fires_on_first_input(self, refractory):
        """Test one input from rest produces a spike and the reset potential."""
        state, spiked = step(NeuronState(), refractory, TickInput(1, 0))
        assert spiked
        assert state.V == refractory.v_reset

    def test_period_from_reset(self):
        """Test 8191 / 254 rounds up to 33 ticks with no input."""
        config = NeuronConfig(
            w_e=255, w_i=0, threshold=1, leak=-254, v_reset=-8191, floor=-8191
        )
        assert refractory_period_achieved(config, 0) == 33
        state = NeuronState(-8191)
        ticks = 0
        while state.V != 0:
            state, _ = step(state, config)
            ticks += 1
        assert ticks == 33

    def test_period_shortened_by_inputs(self):
        """Test each intervening input shortens the period by about one tick."""
        config = NeuronConfig(
            w_e=255, w_i=0, threshold=1, leak=-254, v_reset=-8191, floor=-8191
        )
        assert refractory_period_achieved(config, 1) == 32
        assert refractory_period_achieved(config, 1000) == 0

    def test_inter_spike_interval_property(self, refractory):
        """Test random input trains never beat the refractory bound."""
        rng = np.random.default_rng(3)
        for _ in range(200):
            train = rng.random(400) < rng.uniform(0.05, 0.9)
            state = NeuronState()
            last_spike = None
            inputs_since = 0
            for t, has_input in enumerate(train):
                state, spiked = step(state, refractory, TickInput(int(has_input), 0))
                if has_input:
                    inputs_since += 1
                if spiked:
                    if last_spike is not None:
                        bound = refractory_period_achieved(refractory, inputs_since)
                        assert t - last_spike >= bound
                    last_spike = t
                    inputs_since = 0


class TestDelay:
    """Delay neuron."""

    def test_lone_input(self):
        """Test a lone input re-emerges tau_d - 1 ticks later."""
        assert delay_response(delay_config(30), [100]) == {129}

    def test_merged_inputs(self):
        """Test a second input while charging yields one spike a tick earlier."""
        assert delay_response(delay_config(30), [100, 110]) == {128}

    def test_no_input(self):
        """Test the neuron stays at rest without input."""
        spikes, state = run(delay_config(30), {}, 200)
        assert spikes == []
        assert state.V == 0

    @pytest.mark.parametrize("tau_d", range(2, 101))
    def test_exact_delay(self, tau_d):
        """Test isolated inputs for every tau_d in 2..100."""
        assert delay_response(delay_config(tau_d), [5]) == {5 + tau_d - 1}


class TestDirectionSelective:
    """DS neuron."""

    def test_inhibition_floors(self, ds):
        """Test one inhibitory spike from rest lands on the floor."""
        state, spiked = step(NeuronState(), ds, TickInput(0, 1))
        assert not spiked
        assert state.V == -50

    def test_excitation_after_inhibition(self, ds):
        """Test the next-tick excitation after inhibition stays below threshold."""
        state, _ = step(NeuronState(), ds, TickInput(0, 1))
        state, spiked = step(state, ds, TickInput(1, 0))
        assert not spiked
        assert state.V == 101

    def test_self_exciting_burst(self, ds):
        """Test a single excitation makes the neuron fire every tick."""
        spikes, state = run(ds, {0: TickInput(1, 0)}, 20)
        assert spikes == list(range(20))
        assert state.V == 127

    def test_burst_stopped_by_inhibition(self, ds):
        """Test inhibition during the burst ends it: 126 - 50 = 76."""
        state, _ = step(NeuronState(), ds, TickInput(1, 0))
        state, spiked = step(state, ds, TickInput(0, 1))
        assert not spiked
        assert state.V == 76

    def test_anti_preferred_window(self, ds):
        """Test an excitation up to 24 ticks after inhibition stays silent."""
        assert anti_preferred_window(ds) == 24
        for lag, expect in ((24, False), (25, True)):
            state, _ = step(NeuronState(), ds, TickInput(0, 1))
            for _ in range(lag - 1):
                state, _ = step(state, ds)
            _, spiked = step(state, ds, TickInput(1, 0))
            assert spiked is expect


class TestStepArray:
    """Vectorized update."""

    def test_matches_scalar_step(self):
        """Test random states and inputs give bit-identical results."""
        configs = (refractory_config(60), delay_config(50), ds_config(), identity_config())
        rng = np.random.default_rng(11)
        kinds = rng.integers(0, len(configs), 500)
        params = NeuronParams.from_configs(configs, kinds)
        V = rng.integers(-20000, 300, 500)
        n_exc = rng.integers(0, 3, 500)
        n_inh = rng.integers(0, 3, 500)

        V_next, spiked = step_array(V, params, n_exc, n_inh)
        for k in range(500):
            state, s = step(
                NeuronState(int(V[k])),
                configs[kinds[k]],
                TickInput(int(n_exc[k]), int(n_inh[k])),
            )
            assert state.V == V_next[k]
            assert s == spiked[k]

    def test_slice(self):
        """Test slicing keeps per-neuron parameters aligned."""
        configs = (delay_config(50), ds_config())
        params = NeuronParams.from_configs(configs, np.array([0, 1, 1, 0]))
        part = params.slice(1, 3)
        assert len(part) == 2
        assert part.threshold.tolist() == [125, 125]
