#![allow(dead_code)]

use std::collections::VecDeque;

use dicgan_core::corrections::ReplacementBuffer;
use dicgan_core::neural::{Activation, Mlp};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Loss `sum(out * w)` for a fixed weighting `w`, so `dL/dout = w`.
fn loss(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (&net.predict(x.view()).unwrap() * w).sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_net(rng: &mut ChaCha8Rng) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=4)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=6));
    }
    let pool = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Identity,
        Activation::LeakyRelu(0.2),
        Activation::Relu,
    ];
    let acts: Vec<Activation> = (0..depth).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    let mut net = Mlp::new(&sizes, &acts, rng.random()).unwrap();
    for layer in net.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    net
}

/// Piecewise-linear activations have kinks; a central difference straddling
/// one is meaningless, so such probes are skipped.
fn near_kink(net: &Mlp, x: &Array2<f64>, h: f64) -> bool {
    let trace = net.forward(x.view()).unwrap();
    net.layers().iter().zip(&trace.pre).any(|(layer, z)| {
        matches!(layer.activation, Activation::Relu | Activation::LeakyRelu(_))
            && z.iter().any(|v| v.abs() < 1e3 * h)
    })
}

/// Compares backward against central differences (step 1e-6) on `count`
/// random nets; returns the worst relative error seen.
pub fn check_random_nets(count: usize, seed: u64, tol: f64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < count {
        attempts += 1;
        if attempts > 20 * count {
            return Err("too many nets skipped".into());
        }
        let net = random_net(&mut rng);
        let b = rng.random_range(1..=5);
        let x = Array2::from_shape_simple_fn((b, net.input_dim()), || rng.random_range(-2.0..2.0));
        let w = Array2::from_shape_simple_fn((b, net.output_dim()), || rng.random_range(-1.0..1.0));
        if near_kink(&net, &x, h) {
            continue;
        }
        let trace = net.forward(x.view()).unwrap();
        let grads = net.backward(&trace, w.view()).unwrap();
        let mut check = |an: f64, fd: f64, what: String| -> Result<(), String> {
            let e = rel_err(an, fd);
            worst = worst.max(e);
            if e < tol {
                Ok(())
            } else {
                Err(format!("net {checked} {what}: analytic {an} vs numeric {fd}"))
            }
        };

        for k in 0..net.layers().len() {
            let (rows, cols) = net.layers()[k].weights.dim();
            for i in 0..rows {
                for j in 0..cols {
                    let mut plus = net.clone();
                    plus.layers_mut()[k].weights[[i, j]] += h;
                    let mut minus = net.clone();
                    minus.layers_mut()[k].weights[[i, j]] -= h;
                    let fd = (loss(&plus, &x, &w) - loss(&minus, &x, &w)) / (2.0 * h);
                    check(grads.layers[k].weights[[i, j]], fd, format!("layer {k} w[{i},{j}]"))?;
                }
                let mut plus = net.clone();
                plus.layers_mut()[k].bias[i] += h;
                let mut minus = net.clone();
                minus.layers_mut()[k].bias[i] -= h;
                let fd = (loss(&plus, &x, &w) - loss(&minus, &x, &w)) / (2.0 * h);
                check(grads.layers[k].bias[i], fd, format!("layer {k} b[{i}]"))?;
            }
        }
        for r in 0..b {
            for c in 0..net.input_dim() {
                let mut xp = x.clone();
                xp[[r, c]] += h;
                let mut xm = x.clone();
                xm[[r, c]] -= h;
                let fd = (loss(&net, &xp, &w) - loss(&net, &xm, &w)) / (2.0 * h);
                check(grads.input[[r, c]], fd, format!("input[{r},{c}]"))?;
            }
        }
        checked += 1;
    }
    Ok(worst)
}

/// Drives a buffer and a reference deque with `ops` random replacements and
/// checks size, age order and contents after each.
pub fn buffer_matches_deque(ops: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = 16;
    let init = Array2::from_shape_fn((cap, 1), |(i, _)| i as f64);
    let mut buf = ReplacementBuffer::new(init, None).map_err(|e| e.to_string())?;
    let mut reference: VecDeque<f64> = (0..cap).map(|i| i as f64).collect();
    let mut next = cap as f64;
    for op in 0..ops {
        let k = rng.random_range(0..=cap + 2);
        let fresh = Array2::from_shape_fn((k, 1), |(i, _)| next + i as f64);
        let res = buf.replace_oldest(fresh.view());
        if k > cap {
            if res.is_ok() {
                return Err(format!("op {op}: oversize replacement accepted"));
            }
            continue;
        }
        res.map_err(|e| format!("op {op}: {e}"))?;
        for i in 0..k {
            reference.pop_front();
            reference.push_back(next + i as f64);
        }
        next += k as f64;
        if buf.len() != cap {
            return Err(format!("op {op}: size {} != {cap}", buf.len()));
        }
        let seqs: Vec<u64> = buf.age_order().map(|s| buf.sequence_numbers()[s]).collect();
        if seqs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("op {op}: age order not strict"));
        }
        let by_age: Vec<f64> = buf.samples_by_age().column(0).to_vec();
        if by_age != reference.iter().copied().collect::<Vec<_>>() {
            return Err(format!("op {op}: contents diverge from the reference"));
        }
    }
    Ok(())
}
