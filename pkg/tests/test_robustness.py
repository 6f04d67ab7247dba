import random

import pytest

from cpsb.engine import Policy, SchedState, simulate, state_at
from cpsb.errors import DeadlineExceeded, NegativeComputingTime, NoExpiryInRange
from cpsb.robustness import eta_at, perturb, robustness_measure
from cpsb.schedulability import dynamic_schedulability_test
from cpsb.tasks import TaskSet, UniformEpsilon, seconds
from taskgen import random_periodic
from tick_oracle import tick_simulate

SEC4 = [(4000, 15400), (4000, 20800), (4000, 30300)]


def test_zero_perturbation_is_identity():
    ts = TaskSet.periodic(SEC4)
    act = perturb(ts, {1: {}, 2: [0, 0, 0]})
    assert [act[n].chars(k) for n in (1, 2, 3) for k in (1, 2, 3)] == \
        [ts[n].chars(k) for n in (1, 2, 3) for k in (1, 2, 3)]


def test_perturb_bounds():
    ts = TaskSet.periodic(SEC4)
    assert perturb(ts, {1: {5: -4000}})[1].chars(5) == (0, 15400)
    with pytest.raises(NegativeComputingTime):
        perturb(ts, {1: {5: -4001}})
    with pytest.raises(DeadlineExceeded):
        perturb(ts, {3: {1: 26301}})


def test_uniform_perturbation_range():
    ts = perturb(TaskSet.periodic(SEC4), {1: UniformEpsilon(-1500, 4000, 3)})
    Cs = [ts[1].chars(k)[0] for k in range(1, 2001)]
    assert min(Cs) >= 2500 and max(Cs) <= 8000
    assert all(ts[1].chars(k)[1] == 15400 for k in range(1, 50))


def test_eta_sign_convention():
    nom = SchedState((1, 1, 1), (seconds(1.5), seconds(0.5), seconds(2)))
    act = SchedState((1, 1, 1), (seconds(1.5), seconds(0.5), seconds(1.5)))
    assert eta_at(nom, act) == (0, 0, seconds(0.5))
    assert eta_at(nom, nom) == (0, 0, 0)


def test_eta_matches_oracle_spares():
    rng = random.Random(2)
    pairs = random_periodic(rng, 3)
    ts = TaskSet.periodic(pairs)
    H = 20 * max(T for _, T in pairs)
    eps = {n: UniformEpsilon(-pairs[n - 1][0], 0, 40 + n) for n in (1, 2, 3) if n <= len(pairs)}
    act = perturb(ts, eps)
    nom_sim, act_sim = simulate(ts, 0, H), simulate(act, 0, H)
    assert [w.t_f for w in nom_sim.windows] == [w.t_f for w in act_sim.windows]
    inst = [[act[n].chars(k) for k in range(1, H // T + 3)] for n, (_, T) in enumerate(pairs, 1)]
    o = tick_simulate(inst, 0, H, query_times=[w.t_end for w in act_sim.windows])
    for wn, wa in zip(nom_sim.windows, act_sim.windows):
        # spare of the actual run = C - remaining work, for non-expired instances
        for n in range(len(pairs)):
            if wa.end.q[n] > 0 and wa.end.s[n] < wa.C[n]:
                assert wa.C[n] - o.remaining[wa.t_end][n] == wa.end.s[n]
        assert eta_at(wn.end, wa.end) == tuple(a - b for a, b in zip(wn.end.s, wa.end.s))


def test_three_task_window_values():
    ts = TaskSet.periodic(SEC4)
    t_a, t_b = seconds(10), seconds(13)
    rms = robustness_measure(ts, t_a, t_b, Policy.FIXED, state_at(ts, t_a, Policy.FIXED, 0))
    edf = robustness_measure(ts, t_a, t_b, Policy.EDF, state_at(ts, t_a, Policy.EDF, 0))
    assert (rms.B_R, edf.B_R) == (8800, 11400)
    assert all(m.margin is None or m.margin >= rms.B_R for m in rms.windows)


def test_single_task_full_utilization():
    rep = robustness_measure(TaskSet.periodic([(50, 50)]), 0, 500)
    assert rep.B_R == 0


def test_no_expiry():
    with pytest.raises(NoExpiryInRange):
        robustness_measure(TaskSet.periodic([(5, 100)]), 0, 50)


def _binding_check(ts, t_b, policy):
    rep = robustness_measure(ts, 0, t_b, policy)
    b = rep.binding
    ok = dynamic_schedulability_test(perturb(ts, {b.task: {b.instance: rep.B_R - 1}}), 0, t_b, policy)
    try:
        bad = dynamic_schedulability_test(perturb(ts, {b.task: {b.instance: rep.B_R + 1}}), 0, t_b, policy)
        broken = (b.task, b.t_end) in bad.misses()
    except DeadlineExceeded:
        broken = True  # the instance would need more than its period
    return ok.schedulable, broken


@pytest.mark.parametrize("policy", list(Policy))
def test_safety_and_tightness(policy):
    rng = random.Random(31)
    done = 0
    while done < 15:
        pairs = random_periodic(rng)
        ts = TaskSet.periodic(pairs)
        t_b = 6 * max(T for _, T in pairs)
        if not dynamic_schedulability_test(ts, 0, t_b, policy).schedulable:
            continue
        assert _binding_check(ts, t_b, policy) == (True, True)
        done += 1


def test_policy_comparison_witness():
    # EDF tolerates more on the section-4 set: the RMS tightness witness
    # breaks RMS but not EDF
    ts = TaskSet.periodic(SEC4)
    t_a, t_b = seconds(10), seconds(13)
    init = {p: state_at(ts, t_a, p, 0) for p in Policy}
    rms = robustness_measure(ts, t_a, t_b, Policy.FIXED, init[Policy.FIXED])
    b = rms.binding
    act = perturb(ts, {b.task: {b.instance: rms.B_R + 1}})
    assert not dynamic_schedulability_test(act, t_a, t_b, Policy.FIXED, init[Policy.FIXED]).schedulable
    assert dynamic_schedulability_test(act, t_a, t_b, Policy.EDF, init[Policy.EDF]).schedulable
