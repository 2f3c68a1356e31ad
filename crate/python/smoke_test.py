"""Smoke test for the varbayes_py extension module."""

import math
import random

import varbayes_py as vb


def sleep_like(n_subjects=60, seed=3):
    rng = random.Random(seed)
    subjects, values, outcome, mediator = [], [], [], []
    for j in range(n_subjects):
        mu = 9.0 + 0.7 * rng.gauss(0, 1)
        sigma = rng.gammavariate(11.0, 1 / 8.0)
        for _ in range(rng.randint(3, 14)):
            subjects.append(j)
            values.append(rng.gauss(mu, sigma))
        m = -4.0 + 2.0 * sigma + rng.gauss(0, 1)
        mediator.append(m)
        outcome.append(1.0 + 1.5 * m + rng.gauss(0, 1))
    return subjects, values, outcome, mediator


def main():
    assert abs(vb.psrf([[1, 2, 3], [1, 2, 3]]) - math.sqrt(2 / 3)) < 1e-12
    assert vb.ess([[1.0, -1.0] * 50, [1.0, -1.0] * 50]) == 200.0
    assert vb.summarize([1, 2, 3, 4]).median == 2.5
    assert abs(vb.isd([1, 2, 3]) - 1.0) < 1e-12
    assert abs(vb.rmssd([1, 3, None, 4, 8]) - math.sqrt(10)) < 1e-12
    fit = vb.ols([[1, 0], [1, 1], [1, 2], [1, 3]], [1, 3, 5, 7])
    assert all(abs(a - b) < 1e-10 for a, b in zip(fit["coefs"], [1, 2]))
    assert len(vb.paper_grid()) == 16

    subjects, values, outcome, mediator = sleep_like()
    model = vb.Model(subjects, values, outcome, mediator=mediator, use_latent_mean=True)
    theta = model.initial_state(seed=1)
    assert len(theta) == model.dim == len(model.param_names())
    assert math.isfinite(model.log_posterior(theta))
    assert len(model.gradient(theta)) == model.dim

    draws = model.sample(chains=2, warmup=300, iter=1000, seed=7)
    report = draws.diagnostics()
    print(f"design={model.design} converged={report.converged} max_rhat={report.max_rhat:.4f}")
    assert draws.n_chains == 2 and draws.n_iterations == 500
    print(draws.summary("Malpha[1]"))
    print(draws.indirect_effect("Malpha[1]", "YMed"))

    metrics = vb.simulate(["a0.5_low_N80_k5"], replications=5, estimator="isdm", seed=2)
    assert metrics[0]["replications"] == 5
    print("smoke test passed")


if __name__ == "__main__":
    main()
