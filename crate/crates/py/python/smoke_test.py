"""Smoke test for the qstar_py extension.

Build and install first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml`,
then run `python crates/py/python/smoke_test.py`.
"""

import json
import os
import sys
import tempfile

import qstar_py as q


def main():
    catalog = q.Catalog()
    assert len(catalog) == 5, catalog.names()
    assert abs(catalog.execution_time("washington", 5, 10, 1000) - 10 * 1000 / catalog.nodes()[0]["d1cps"]) < 1e-9

    feats = q.extract_features('OPENQASM 2.0;\ninclude "qelib1.inc";\nqreg q[3];\nh q[0];\ncx q[0],q[1];\ncx q[1],q[2];\n')
    assert (feats["qubit_count"], feats["depth1_layers"], feats["gate_count"]) == (3, 3, 3), feats

    ds = q.Dataset.generate(7, {"n_subsets": 20, "tasks_per_subset": 25})
    assert (ds.n_subsets, ds.n_tasks) == (20, 500)
    assert len(ds.subset(0)) == 25

    env = q.Env(ds)
    obs, info = env.reset(seed=3)
    assert len(obs) == env.obs_dim == 13 and env.n_actions == 5, (len(obs), env.obs_dim)
    assert info["round"] == 3
    assert q.greedy_action(obs) == env.greedy_action()

    total, done, violations = 0.0, False, 0
    while not done:
        obs, reward, terminated, truncated, info = env.step(env.greedy_action())
        total += reward
        violations += not info["success"]
        done = terminated or truncated
    assert terminated and violations == 0, (terminated, violations)
    assert len(env.trace()) == 25

    try:
        env.step(0)
    except ValueError:
        pass
    else:
        raise AssertionError("stepping a finished episode must fail")

    policy, curve = q.train(env, 20, seed=1)
    assert len(curve) == 20
    greedy = q.evaluate(env, "greedy", 10, seed=2)
    random = q.evaluate(env, "random", 10, seed=2)
    trained = q.evaluate(env, policy, 10, seed=2)
    assert greedy["violations"]["mean"] == 0.0
    assert trained["reward_sum"]["mean"] > random["reward_sum"]["mean"]

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "policy.json")
        policy.save(path)
        again = q.evaluate(env, q.Policy.load(path), 10, seed=2)
    assert again == trained

    print(json.dumps({"greedy": greedy["reward_sum"]["mean"], "random": random["reward_sum"]["mean"],
                      "trained": trained["reward_sum"]["mean"]}))
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
