"""Random scenario generators shared by the unit and acceptance tests."""

import numpy as np

from fedincentive.model import LmoProfile, SystemParams
from fedincentive.stackelberg import optimal_tau, price_feasible

# criterion number -> printed pass/fail line, filled by the acceptance tests
ACCEPTANCE_LINES: dict[int, str] = {}


def random_feasible_scenario(rng: np.random.Generator, max_tries: int = 100):
    """M in [2,10], lam*alpha in [5,50], beta in [0.1,2], every price feasible.

    Prices are a common level times a narrow multiplicative spread; the
    spread 1/(2M) keeps max/mean below M/(M-1), so nobody is eliminated.
    """
    for _ in range(max_tries):
        m = int(rng.integers(2, 11))
        la = float(rng.uniform(5, 50))
        beta = float(rng.uniform(0.1, 2))
        params = SystemParams(lam=1.0, alpha=la, beta=beta)
        hi = 0.9 * la * beta * (m - 1) / m
        level = float(rng.uniform(0.1, max(hi, 0.11)))
        s = 1.0 / (2 * m)
        prices = level * rng.uniform(1 - s, 1 + s, size=m)
        prices = np.maximum(prices, 0.1)
        tau = optimal_tau(prices, params)
        if tau > 0 and all(price_feasible(p, tau, params) for p in prices):
            profiles = [LmoProfile(i + 1, float(p), float(rng.uniform(0, 1))) for i, p in enumerate(prices)]
            return profiles, params
    raise RuntimeError("no feasible scenario found")


def random_scenarios(n: int, seed: int):
    rng = np.random.default_rng(seed)
    return [random_feasible_scenario(rng) for _ in range(n)]


def episode_invariant_errors(cfg, start, transitions) -> dict:
    """Largest violation of each environment invariant over one episode."""
    from fedincentive.model import fatigue_array

    err = {"conservation": 0.0, "share_sum": 0.0, "capacity": 0.0, "ratio_monotone": 0.0}
    state = start
    paid = 0.0
    for tr in transitions:
        paid += tr.pool
        nxt = tr.next_state
        err["conservation"] = max(err["conservation"], abs(nxt.remaining + paid - cfg.budget))
        part = tr.actions == 1
        base = cfg.params.theta * (1 - state.remaining / state.budget)
        shares = np.where(part, tr.rewards - base + state.fatigue, 0.0)
        err["share_sum"] = max(err["share_sum"], abs(shares.sum() - tr.pool))
        err["capacity"] = max(err["capacity"], float(np.max(nxt.cumulative_data - cfg.capacity, initial=0.0)),
                              float(np.max(-tr.contributions, initial=0.0)))
        err["ratio_monotone"] = max(err["ratio_monotone"], nxt.remaining_ratio - state.remaining_ratio)
        np.testing.assert_allclose(nxt.fatigue, fatigue_array(nxt.cumulative_data, cfg.params))
        state = nxt
    return err


# (workers, steps, budget, payout rate, contribution mean); default worker parameters, std 0
ORACLE_INSTANCES = [(1, 4, 1.0, 0.5, 0.25), (2, 3, 4.0, 0.5, 0.25), (2, 4, 0.5, 0.3, 0.4),
                    (3, 4, 0.5, 0.3, 0.4), (3, 4, 1.0, 0.3, 0.4)]


def oracle_env(w, t, budget, kappa, mean):
    from fedincentive.env import EnvConfig

    return EnvConfig(worker_count=w, budget=budget, payout_rate=kappa, contribution_mean=mean,
                     contribution_std=0.0, capacity=1.0, max_steps=t)


def play_sequence(cfg, seq) -> np.ndarray:
    """Per-agent undiscounted return of an open-loop joint action sequence."""
    from fedincentive.env import WorkerEnv

    env = WorkerEnv(cfg)
    state = env.reset(0)
    total = np.zeros(cfg.worker_count)
    t = 0
    while not state.done:
        tr = env.step(seq[t])
        total += tr.rewards
        state = tr.next_state
        t += 1
    return total


def is_open_loop_equilibrium(cfg, seq) -> bool:
    """No worker gains by changing only its own action sequence."""
    import itertools

    w, horizon = cfg.worker_count, cfg.max_steps
    seq = list(seq) + [(1,) * w] * (horizon - len(seq))
    base = play_sequence(cfg, seq)
    for i in range(w):
        for own in itertools.product((0, 1), repeat=horizon):
            dev = [tuple(own[t] if j == i else seq[t][j] for j in range(w)) for t in range(horizon)]
            if play_sequence(cfg, dev)[i] > base[i] + 1e-12:
                return False
    return True


def frozen_gradient_batch(k: int):
    """Actor plus a batch whose old log-probs come from a nearby policy."""
    from fedincentive.marl import AgentMlp, Batch, _log_probs

    rng = np.random.default_rng(1000 + k)
    n_agents, d, n = int(rng.integers(1, 5)), None, int(rng.integers(20, 60))
    d = n_agents + 1
    shared = bool(k % 3 == 2) and n_agents > 1
    actor = AgentMlp.init(n_agents, d, 8, rng, shared=shared, out_scale=0.5)
    old = actor.copy()
    old.set_flat(old.flat() + rng.normal(0, 0.3, size=old.flat().size))
    obs = rng.uniform(0, 1, size=(n, d))
    actions = rng.integers(0, 2, size=(n, n_agents))
    logp_old = _log_probs(old.forward(obs)[0], actions)
    batch = Batch(obs, actions, logp_old, rng.normal(size=(n, n_agents)), rng.normal(size=(n, n_agents)))
    return actor, batch


def gradient_relative_error(actor, batch, clip_ratio=0.2, entropy_coef=0.0, h=1e-6) -> float:
    from fedincentive.marl import PARAM_NAMES, surrogate_gradient, surrogate_objective

    g = surrogate_gradient(actor, batch, clip_ratio, entropy_coef)
    analytic = np.concatenate([g[k].ravel() for k in PARAM_NAMES])
    theta = actor.flat()
    probe = actor.copy()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        probe.set_flat(up)
        f_up = surrogate_objective(probe, batch, clip_ratio, entropy_coef)
        probe.set_flat(down)
        f_down = surrogate_objective(probe, batch, clip_ratio, entropy_coef)
        numeric[i] = (f_up - f_down) / (2 * h)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))
