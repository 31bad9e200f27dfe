import math

import numpy as np
import pytest

from ergodic_mlmc.coupling import (LevelSchedule, coupled_sample, coupled_samples,
                                   level0_sample)
from ergodic_mlmc.exceptions import NonFiniteState, ScheduleTooShort
from ergodic_mlmc.model import (abs_observable, builtin_cubic_langevin, builtin_ou,
                                identity_observable)
from ergodic_mlmc.stepping import cubic_policy, uniform_policy
from ergodic_mlmc.streams import RngStream

SCHED = LevelSchedule.build(8)


def reference_coupled(model, policy, schedule, level, stream):
    """Scalar transcription of the coupled event loop, one draw per iteration."""
    M = schedule.refinement_factor
    hf_of = lambda x: policy.scaled(M ** -level).h_delta(np.array([[x]]))[0]
    hc_of = lambda x: policy.scaled(M ** -(level - 1)).h_delta(np.array([[x]]))[0]
    f = lambda x: model.drift(np.array([[x]]))[0, 0]
    g = model.diffusion_matrix[0, 0]
    t = tf = -schedule.horizon(level)
    tc = -schedule.horizon(level - 1)
    hf = hc = 0.0
    dWf = dWc = 0.0
    xf = xc = float(model.initial_state[0])
    nf = nc = 0
    draw = 0
    while t < 0:
        t_old = t
        t = min(tc, tf)
        dW = math.sqrt(t - t_old) * stream.normals(1, start=draw)[0]
        draw += 1
        dWc += dW
        if t == -schedule.horizon(level - 1):
            dWc = 0.0
        dWf += dW
        if t == tc:
            xc = xc + f(xc) * hc + g * dWc
            nc += hc > 0
            hc = min(hc_of(xc), -tc)
            tc += hc
            dWc = 0.0
        if t == tf:
            xf = xf + f(xf) * hf + g * dWf
            nf += hf > 0
            hf = min(hf_of(xf), -tf)
            tf += hf
            dWf = 0.0
    return xf, xc, nf, nc


@pytest.mark.parametrize("level", [1, 2, 4])
def test_kernel_matches_scalar_reference(level):
    model = builtin_cubic_langevin()
    pol = cubic_policy()
    batch = coupled_samples(model, pol, SCHED, level, identity_observable(), 20, seed=3)
    for i in range(20):
        xf, xc, nf, nc = reference_coupled(model, pol, SCHED, level,
                                           RngStream(3, level, i, "coupled"))
        assert batch.fine[i] == pytest.approx(xf, abs=1e-12)
        assert batch.coarse[i] == pytest.approx(xc, abs=1e-12)
        assert (batch.fine_steps[i], batch.coarse_steps[i]) == (nf, nc)


def test_still_model_coupling_exact(still_model):
    m = still_model.with_initial_state([0.7])
    for level in (1, 3):
        s = coupled_sample(m, uniform_policy(0.5), SCHED, level, abs_observable(),
                           RngStream(1, level, 0, "coupled"))
        assert s.fine_value == s.coarse_value == 0.7
    s0 = level0_sample(still_model, uniform_policy(0.5), SCHED, abs_observable(), RngStream(1))
    assert (s0.fine_value, s0.coarse_value, s0.coarse_steps) == (0.0, 0.0, 0)


def test_brownian_difference_variance(brownian_model):
    level = 3
    b = coupled_samples(brownian_model, uniform_policy(1.0), SCHED, level, identity_observable(),
                        100_000, seed=8)
    gap = SCHED.horizon(level) - SCHED.horizon(level - 1)
    assert abs(b.correction.var() / gap - 1) < 0.03


def test_overlap_identity_pathwise(brownian_model):
    for level in (1, 2, 5):
        b = coupled_samples(brownian_model, uniform_policy(1.0), SCHED, level,
                            identity_observable(), 500, seed=2, instrument=True)
        pre = b.diagnostics["pre_overlap_noise"][:, 0]
        assert np.allclose(b.correction, pre, atol=1e-12, rtol=0)


def test_clock_exactness_and_coarse_reset():
    b = coupled_samples(builtin_cubic_langevin(), cubic_policy(), SCHED, 4, abs_observable(),
                        2000, seed=5, instrument=True)
    d = b.diagnostics
    assert (d["final_t_fine"] == 0.0).all()
    assert (d["final_t_coarse"] == 0.0).all()
    assert (d["coarse_pending_after_reset"] == 0.0).all()


def test_level0_marginal():
    """Level 0 is one EM step of length T_0 = ln 2 < h(0), so X = N(0, T_0) exactly."""
    from ergodic_mlmc.stepping import simulate_paths

    model = builtin_cubic_langevin()
    pol = cubic_policy()
    n = 100_000
    b = coupled_samples(model, pol, SCHED, 0, abs_observable(), n, seed=12)
    assert (b.fine_steps == 1).all()
    exact = math.sqrt(2 * SCHED.horizon(0) / math.pi)
    assert abs(b.fine.mean() - exact) < 4 * b.fine.std() / math.sqrt(n)
    # the small-step reference sits well below: level 0 carries an O(1) bias
    ref = np.abs(simulate_paths(model, pol.scaled(2.0**-10), SCHED.horizon(0), n,
                                seed=13).terminal[:, 0])
    se = math.sqrt(b.fine.var() / n + ref.var() / n)
    assert b.fine.mean() - ref.mean() > 10 * se


def test_ou_level0_symmetry():
    b = coupled_samples(builtin_ou(), uniform_policy(1.0), SCHED, 0, identity_observable(),
                        100_000, seed=4)
    assert abs(b.fine.mean()) < 4 * b.fine.std() / math.sqrt(len(b))


def test_telescoping_marginals_short():
    model = builtin_cubic_langevin()
    pol = cubic_policy()
    n = 20_000
    for level in (1, 2):
        hi = coupled_samples(model, pol, SCHED, level, abs_observable(), n, seed=1)
        lo = coupled_samples(model, pol, SCHED, level - 1, abs_observable(), n, seed=1)
        se = math.sqrt(hi.coarse.var() / n + lo.fine.var() / n)
        assert abs(hi.coarse.mean() - lo.fine.mean()) <= 4 * se


def test_single_sample_equals_batch_row():
    model = builtin_cubic_langevin()
    b = coupled_samples(model, cubic_policy(), SCHED, 3, abs_observable(), 30, seed=6,
                        start_index=100)
    s = coupled_sample(model, cubic_policy(), SCHED, 3, abs_observable(),
                       RngStream(6, 3, 112, "coupled"))
    assert s == b.sample(12)
    assert s.correction == b.correction[12]


def test_workers_do_not_change_results():
    model = builtin_cubic_langevin()
    a = coupled_samples(model, cubic_policy(), SCHED, 2, abs_observable(), 40_000, seed=1)
    b = coupled_samples(model, cubic_policy(), SCHED, 2, abs_observable(), 40_000, seed=1,
                        workers=4)
    assert np.array_equal(a.fine, b.fine) and np.array_equal(a.coarse, b.coarse)
    assert np.array_equal(a.cost, b.cost)


def test_errors():
    model = builtin_cubic_langevin()
    with pytest.raises(ScheduleTooShort):
        coupled_samples(model, cubic_policy(), SCHED, 9, abs_observable(), 5, seed=0)
    with pytest.raises(ValueError):
        coupled_sample(model, cubic_policy(), SCHED, 0, abs_observable(), RngStream(0))
    with pytest.raises(NonFiniteState) as info:
        coupled_samples(model.with_initial_state([5.0]), uniform_policy(1.0), SCHED, 3,
                        abs_observable(), 10, seed=0)
    assert info.value.level == 3
    with pytest.raises(ValueError):
        LevelSchedule((1.0, 1.0))


def test_schedule_build_matches_formula():
    s = LevelSchedule.build(4, 2, 1.0, "general")
    assert s.horizons == tuple((k + 1) * math.log(2) / 2 for k in range(5))
    assert len(s) == 5
