"""Smoke test for the `dicgan` extension module.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/dicgan-*.whl

then run `python python/smoke_test.py`.
"""

import math

import dicgan


def main():
    ds = dicgan.two_circles(n=400, seed=3)
    assert len(ds) == 400
    assert sum(ds.labels) == 200
    inner = [x for x, l in zip(ds.samples, ds.labels) if l]
    assert all(abs(math.hypot(*x) - 1.0) < 0.3 for x in inner)
    assert dicgan.validity_rate(ds.samples) > 99.0
    assert dicgan.pdd(ds.samples, 1.0, 2.0) == 50.0

    net = dicgan.Mlp([2, 3, 1], ["leaky_relu", "identity"], seed=1)
    out = net.forward([[0.5, -0.25]])
    grads = net.backward([[0.5, -0.25]], [[1.0]])
    assert len(out) == 1 and len(grads["input"][0]) == 2
    net.clip_weights(0.01)
    assert net.max_abs_parameter() <= 0.01

    buf = dicgan.ReplacementBuffer([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    buf.replace_oldest([[9.0, 9.0]])
    assert buf.samples_by_age() == [[1.0, 1.0], [2.0, 2.0], [9.0, 9.0]]

    assert dicgan.margin_ranking_loss(0.2, 0.0, 1.0) == 0.8
    assert dicgan.ep_dicgan(2, 3, 25) == 150
    assert dicgan.ep_fbgan([(3, 4), (0, 7)]) == 12
    t = dicgan.welch_one_sided([1.0, 1.1, 0.9, 1.2], [0.0, 0.1, -0.1, 0.05])
    assert t["p_value"] < 0.01

    config = "pretrain_iters = 50\nmax_corrections = 2\nn_i = 5\n"
    model, record = dicgan.train("dicgan", ds, config)
    assert len(record["rows"]) == 2
    samples = model.generate(10, seed=0)
    assert samples == model.generate(10, seed=0)
    assert len(model.critic_scores(samples)) == 10
    print("dicgan smoke test passed:", record["method"], len(record["rows"]), "corrections")


if __name__ == "__main__":
    main()
