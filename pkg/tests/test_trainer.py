import math

import numpy as np
import pytest

from dnn_nsr import datasets, fcnn, numeric, trainer
from dnn_nsr.errors import NumericalFailure
from dnn_nsr.prox import soft_threshold
from conftest import small_net, small_problem
from oracles import l1_prox_objective, nuclear_prox_objective, resum_objective


def sched(**kw):
    base = dict(max_epochs=50, hidden=(4, 2, 4), gamma=2.0, epoch_e=10)
    base.update(kw)
    return trainer.TrainSchedule(**base)


def test_schedule_validation():
    for bad in (dict(gamma=1.0), dict(mu_min=2.0, mu_max=1.0), dict(delta_max=1.0),
                dict(box_m=0.0), dict(omega=-0.1)):
        with pytest.raises(ValueError):
            trainer.TrainSchedule(**bad)


def test_anneal_mu_endpoints():
    s = sched(max_epochs=10, mu_max=1e6, mu_min=1.0)
    assert trainer.anneal_mu(0, s) == 1e6
    assert trainer.anneal_mu(10, s) == pytest.approx(1.0)
    assert trainer.anneal_mu(5, s) == pytest.approx((1e6 + 1.0) / 2)
    vals = [trainer.anneal_mu(k, s) for k in range(11)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        trainer.anneal_mu(11, s)


def test_compute_omega():
    assert trainer.compute_omega(3, 0.25, 1.0, 1.0, 3.0) == pytest.approx(0.125)
    assert trainer.compute_omega(2, 0.0, 1.0, 1.0, 3.0) == 0.0
    assert trainer.compute_omega(1, 1.0, 9.0, 1.0, 1e12) == pytest.approx(0.5)
    assert trainer.compute_omega(2, 0.5, 4.0, 1.0, 3.0) == pytest.approx(0.25 * math.sqrt(2.0))


def test_extrapolate():
    assert trainer.extrapolate(np.array([2.0]), np.array([1.0]), 1.0)[0] == 3.0
    t = np.array([1.0, -2.0])
    assert np.array_equal(trainer.extrapolate(t, t, 0.7), t)
    assert np.array_equal(trainer.extrapolate(t, t * 5, 0.0), t)


def test_adapt_delta():
    s = sched(epoch_e=10)
    assert trainer.adapt_delta(1.0, 2.0, 11, s, 0.9) == (0.99, trainer.PROCEED)
    d, action = trainer.adapt_delta(2.0, 1.0, 11, s, 0.011)
    assert d == 0.01 and action == trainer.RETRY
    assert trainer.adapt_delta(5.0, 1.0, 10, s, 0.3) == (0.3, trainer.NO_ACTION)


def _aux_setup(seed=0):
    x, obs = small_problem(6, 7, 2, 0.4, seed)
    p = small_net((6, 4, 3, 4, 6), seed)
    s = sched(hidden=(4, 3, 4)).with_mu(0.5, p.n_layers)
    return obs, p, s


def test_update_h_and_v():
    obs, p, s = _aux_setup()
    tr = fcnn.forward(p, obs.data)
    h = trainer.update_h(tr, s)
    for z, hh in zip(tr.hidden_outputs, h):
        assert np.array_equal(hh, soft_threshold(z, 0.1 * 0.5))
    zero = trainer.update_h(tr, trainer.TrainSchedule(alpha=0.0, mu_h=s.mu_h, mu_v=s.mu_v))
    assert all(np.array_equal(a, b) for a, b in zip(zero, tr.hidden_outputs))
    v = trainer.update_v(p, s)
    for w, vv in zip(p.weights, v):
        assert np.sum(np.linalg.svd(vv, compute_uv=False)) < np.sum(np.linalg.svd(w, compute_uv=False))
    v0 = trainer.update_v(p, trainer.TrainSchedule(beta=0.0, mu_h=s.mu_h, mu_v=s.mu_v))
    assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(v0, p.weights))


def test_subproblem_optimality():
    obs, p, s = _aux_setup(1)
    tr = fcnn.forward(p, obs.data)
    rng = numeric.make_rng(2)
    t = 0.1 * 0.5
    for z, h in zip(tr.hidden_outputs, trainer.update_h(tr, s)):
        f0 = l1_prox_objective(h, z, t)
        for _ in range(100):
            assert l1_prox_objective(h + 1e-3 * rng.standard_normal(h.shape), z, t) > f0
    for w, v in zip(p.weights, trainer.update_v(p, s)):
        f0 = nuclear_prox_objective(v, w, t)
        for _ in range(100):
            assert nuclear_prox_objective(v + 1e-3 * rng.standard_normal(v.shape), w, t) > f0


def test_objective_q_matches_resummation():
    obs, p, s = _aux_setup(3)
    rng = numeric.make_rng(3)
    tr = fcnn.forward(p, obs.data)
    aux = trainer.AuxState([z + 0.1 * rng.standard_normal(z.shape) for z in tr.hidden_outputs],
                           [w + 0.1 * rng.standard_normal(w.shape) for w in p.weights])
    s = trainer.TrainSchedule(alpha=[0.1, 0.3, 0.2], beta=0.2, lam=0.01,
                              mu_h=[0.5, 2.0, 1.0], mu_v=[1.0, 0.3, 0.7, 2.0])
    q = trainer.objective_q(p, aux, obs.data, obs.mask, s)
    acts = [p.activation_of(j) for j in range(p.n_layers)]
    ref = resum_objective(p.weights, p.biases, acts, obs.data, obs.mask, 0.01, aux.h, aux.v,
                          s.mu_h, s.mu_v, [0.1, 0.3, 0.2], [0.2] * 4)
    assert q.total == pytest.approx(ref, rel=1e-12)
    assert q.box_term == 0.0


def test_objective_q_trivial_and_box():
    obs, p, s = _aux_setup(4)
    tr = fcnn.forward(p, obs.data)
    aux = trainer.AuxState.anchored(p, tr)
    s0 = trainer.TrainSchedule(alpha=0.0, beta=0.0, lam=0.0).with_mu(1.0, p.n_layers)
    assert trainer.objective_q(p, aux, obs.data, np.zeros_like(obs.mask), s0).total == 0.0
    tight = trainer.TrainSchedule(box_m=1e-3).with_mu(1.0, p.n_layers)
    assert trainer.objective_q(p, aux, obs.data, obs.mask, tight).box_term == math.inf


def test_check_termination():
    obs, p, s = _aux_setup(5)
    tr = fcnn.forward(p, obs.data)
    exact = trainer.check_termination(tr, trainer.AuxState.anchored(p, tr), p,
                                      trainer.TrainSchedule(zeta_h=1e-12, zeta_v=1e-12))
    assert exact.c1_satisfied and exact.c2_satisfied and exact.c1 == exact.c2 == 0.0
    aux = trainer.AuxState([z + 0.5 for z in tr.hidden_outputs], [w - 0.25 for w in p.weights])
    res = trainer.check_termination(tr, aux, p, trainer.TrainSchedule(zeta_h=0.0, zeta_v=0.0))
    assert not res.c1_satisfied and not res.c2_satisfied
    assert res.c1 == pytest.approx(sum(0.25 * z.size for z in tr.hidden_outputs))
    assert res.c2 == pytest.approx(sum(0.0625 * w.size for w in p.weights))


def _quadratic_setup():
    # one linear layer, identity input, no bias effect: g(theta) = ||W - X||^2 style
    p = fcnn.NetworkParams((3, 3), [np.zeros((3, 3))], [np.zeros(3)], "linear", "linear")
    x = np.eye(3)
    s = trainer.TrainSchedule(gamma=2.0, lam=0.0, alpha=0.0, beta=0.0).with_mu(1e12, 1)
    aux = trainer.AuxState([], [np.zeros((3, 3))])
    return p, x, s, aux


def test_lipschitz_on_quadratic_within_factor_two():
    p, x, s, aux = _quadratic_setup()
    # g = sum_q ||W e_q + b - e_q||^2 has Hessian norm 2 * (1 + 1 * n) in the bias direction
    hess = np.linalg.eigvalsh(_numeric_hessian(p, x, s, aux)).max()
    lip = trainer.estimate_lipschitz_theta(p, p.theta() + 0.3, x, np.ones_like(x), aux, s, l0=1e-3)
    assert hess / 2 <= lip <= 2 * hess
    assert lip == trainer.estimate_lipschitz_theta(p, p.theta() + 0.3, x, np.ones_like(x), aux, s,
                                                   l0=1e-3)


def _numeric_hessian(p, x, s, aux):
    pen = s.penalties(aux)
    th = p.theta()
    n, eps = th.size, 1e-5
    hess = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        gp = fcnn.grad_theta(p.with_theta(th + e), x, np.ones_like(x), pen, s.lam)
        gm = fcnn.grad_theta(p.with_theta(th - e), x, np.ones_like(x), pen, s.lam)
        hess[i] = (gp - gm) / (2 * eps)
    return 0.5 * (hess + hess.T)


def test_update_theta_fixed_point_and_clipping():
    p, x, s, aux = _quadratic_setup()
    star = p.with_theta(p.theta())
    star.weights[0][:] = np.eye(3)
    th = star.theta()
    step = trainer.update_theta(star, aux, x, np.ones_like(x), s, th, th)
    assert np.allclose(step.theta, th, atol=1e-12)
    # target far outside a tight box: the step saturates on the bound
    tight = trainer.TrainSchedule(gamma=2.0, lam=0.0, alpha=0.0, beta=0.0, box_m=0.1).with_mu(1e12, 1)
    th0 = p.theta()
    step = trainer.update_theta(p, aux, 100 * x, np.ones_like(x), tight, th0, th0)
    assert np.max(np.abs(step.theta)) == 0.1
    assert np.array_equal(np.abs(step.theta[[0, 4, 8]]), [0.1] * 3)


def test_update_theta_matches_reference_step():
    obs, p, s = _aux_setup(6)
    tr = fcnn.forward(p, obs.data)
    aux = trainer.AuxState(trainer.update_h(tr, s), trainer.update_v(p, s))
    rng = numeric.make_rng(6)
    th1 = p.theta()
    th2 = th1 + 0.01 * rng.standard_normal(th1.size)
    step = trainer.update_theta(p, aux, obs.data, obs.mask, s, th1, th2, 0.3, 0.5)
    hat = th1 + 0.3 * (th1 - th2)
    pen = s.penalties(aux)
    grad = fcnn.grad_theta(p.with_theta(hat), obs.data, obs.mask, pen, s.lam)
    want = np.clip(hat - grad / (s.gamma * step.lipschitz), -s.box_m, s.box_m)
    assert np.allclose(step.theta, want, rtol=0, atol=1e-14)
    assert step.lipschitz == 0.5 * 2 ** step.backtracks
    assert step.mu_theta == 1.0 / (s.gamma * step.lipschitz)


def test_backtracking_cap_raises():
    obs, p, s = _aux_setup(7)
    tr = fcnn.forward(p, obs.data)
    aux = trainer.AuxState.anchored(p, tr)
    capped = trainer.TrainSchedule(max_backtracks=0, gamma=1.0 + 1e-9).with_mu(1.0, p.n_layers)
    with pytest.raises(NumericalFailure):
        trainer.update_theta(p, aux, obs.data, obs.mask, capped, p.theta(), p.theta(), 0.0, 1e-12)


def test_train_zero_epochs_returns_init():
    x, obs = small_problem()
    s = sched(max_epochs=0)
    res = trainer.train(obs, s)
    init = fcnn.init_params(fcnn.default_dims(x.shape[0], s.hidden), numeric.make_rng(s.seed))
    assert res.records == [] and res.params == init


def test_train_reduces_loss_on_full_matrix():
    x = datasets.gen_synthetic(8, 10, 2, 5)
    obs = datasets.ObservedMatrix.from_full(x, np.ones_like(x))
    s = sched(max_epochs=300, hidden=(6, 3, 6), mu_max=1e3)
    res = trainer.train(obs, s)
    init = fcnn.init_params(fcnn.default_dims(8, s.hidden), numeric.make_rng(s.seed))
    before = fcnn.smooth_objective(init, x, obs.mask).masked_loss
    after = fcnn.smooth_objective(res.params, x, obs.mask).masked_loss
    assert after * 10 <= before


def test_train_is_deterministic_and_records_fields():
    _, obs = small_problem()
    a = trainer.train(obs, sched())
    b = trainer.train(obs, sched())
    assert a.records == b.records and a.params == b.params
    r = a.records[0]
    assert r.epoch == 1 and r.omega == pytest.approx(trainer.compute_omega(1, 0.99, 1, 1, 2.0))
    assert all(math.isfinite(rec.q_value) for rec in a.records)


def test_fixed_omega_is_used():
    _, obs = small_problem()
    res = trainer.train(obs, sched(omega=0.2, max_epochs=20))
    assert all(r.omega in (0.2, 0.0) for r in res.records)
    assert any(r.omega == 0.2 for r in res.records)


def test_summability_proxy():
    _, obs = small_problem(10, 12, 2, 0.3, 8)
    res = trainer.train(obs, sched(max_epochs=500, hidden=(6, 3, 6), epoch_e=200))
    steps = np.array([r.step_sq for r in res.records])
    assert np.isfinite(steps.sum())
    assert steps[-len(steps) // 10:].sum() < 0.05 * steps.sum()


def test_complete_selects_entries():
    x, obs = small_problem()
    p = small_net((x.shape[0], 3, x.shape[0]), 2)
    xhat = fcnn.forward(p, obs.data).output
    out = trainer.complete(p, obs)
    assert np.array_equal(out[obs.mask == 1], obs.data[obs.mask == 1])
    assert np.array_equal(out[obs.mask == 0], xhat[obs.mask == 0])
    full = datasets.ObservedMatrix.from_full(x, np.ones_like(x))
    assert np.array_equal(trainer.complete(p, full), x)
    empty = datasets.ObservedMatrix(np.zeros_like(x), np.zeros_like(x))
    assert np.array_equal(trainer.complete(p, empty), fcnn.forward(p, empty.data).output)
