//! Straight-loop reference implementations and primitive gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relex::bag_encoder::{attend_and_pool, attend_and_pool_backward, AttentionConfig, Pooling, WeightScheme};
use relex::dataset::PairId;
use relex::diff::ops::{self, Mode};
use relex::diff::{grad_check, ParameterSet, Tensor};
use relex::evaluation::PredictionRecord;

pub fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Bag encoding computed one output dimension at a time.
pub fn pool_oracle(s: &[Vec<f64>], u: &[f64], cfg: AttentionConfig) -> Vec<f64> {
    let n = s.len();
    let weights: Vec<f64> = match cfg.weight {
        WeightScheme::Uniform => vec![1.0; n],
        WeightScheme::Softmax => {
            let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = u.iter().map(|x| (x - m).exp()).sum();
            u.iter().map(|x| (x - m).exp() / z).collect()
        }
        WeightScheme::Sigmoid => u.iter().map(|&x| logistic(x)).collect(),
    };
    let dim = s[0].len();
    let mut g = vec![0.0; dim];
    for k in 0..dim {
        match cfg.pooling {
            Pooling::Average => {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += weights[j] * s[j][k];
                }
                g[k] = if cfg.weight == WeightScheme::Softmax { acc } else { acc / n as f64 };
            }
            Pooling::Max => {
                let mut best = f64::NEG_INFINITY;
                for j in 0..n {
                    best = best.max(weights[j] * s[j][k]);
                }
                g[k] = best;
            }
        }
    }
    g
}

/// Area under the precision/recall step curve up to `cutoff`, found by
/// thresholding at every record's confidence. Confidences must be distinct.
pub fn brute_force_auc(records: &[PredictionRecord], cutoff: f64) -> f64 {
    let positives = records.iter().filter(|r| r.gold).count() as f64;
    let mut area = 0.0;
    for r in records.iter().filter(|r| r.gold) {
        let predicted = records.iter().filter(|o| o.confidence >= r.confidence).count() as f64;
        let tp = records.iter().filter(|o| o.gold && o.confidence >= r.confidence).count() as f64;
        let recall = (tp / positives).min(cutoff);
        let previous = ((tp - 1.0) / positives).min(cutoff);
        area += tp / predicted * (recall - previous);
    }
    area
}

pub fn random_records(rng: &mut ChaCha8Rng, n: usize, positive_rate: f64) -> Vec<PredictionRecord> {
    let mut records: Vec<PredictionRecord> = (0..n)
        .map(|i| PredictionRecord {
            pair: PairId::new(format!("e{}", i / 4), format!("f{}", i / 4)),
            relation: i % 4,
            confidence: rng.random::<f64>(),
            gold: rng.random::<f64>() < positive_rate,
        })
        .collect();
    if !records.iter().any(|r| r.gold) {
        records[0].gold = true;
    }
    records
}

pub fn random_bag(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let s = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let u = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    (s, u)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn params(items: Vec<(&str, Tensor)>) -> ParameterSet {
    let mut p = ParameterSet::new();
    for (name, t) in items {
        p.push(name, t).unwrap();
    }
    p
}

fn vec_of(p: &ParameterSet, name: &str) -> Vec<f64> {
    p.by_name(name).unwrap().data().to_vec()
}

/// Checks `grad` against central differences of `loss` at `p`.
fn check(
    p: &ParameterSet,
    loss: impl Fn(&ParameterSet) -> f64,
    grad: impl Fn(&ParameterSet) -> ParameterSet,
) -> f64 {
    grad_check(p, &grad(p), PRIMITIVE_H, loss).max_rel_error
}

pub const PRIMITIVE_H: f64 = 1e-5;

/// Worst relative error of each differentiable primitive against finite differences.
pub fn primitive_gradient_errors(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // affine, projected onto a fixed direction c
    let (k, m) = (4, 5);
    let c = uniform(&mut rng, k, -1.0, 1.0);
    let p = params(vec![
        ("x", Tensor::vector(uniform(&mut rng, m, -1.0, 1.0))),
        ("w", Tensor::matrix(k, m, uniform(&mut rng, k * m, -1.0, 1.0)).unwrap()),
        ("b", Tensor::vector(uniform(&mut rng, k, -1.0, 1.0))),
    ]);
    let loss = |p: &ParameterSet| {
        let y = ops::affine(&vec_of(p, "x"), p.by_name("w").unwrap(), p.by_name("b").unwrap()).unwrap();
        ops::dot(&y, &c)
    };
    let grad = |p: &ParameterSet| {
        let mut g = p.zeros_like();
        let x = vec_of(p, "x");
        let w = vec_of(p, "w");
        let (mut dw, mut db) = (vec![0.0; k * m], vec![0.0; k]);
        let dx = ops::affine_backward(&x, &w, &c, &mut dw, &mut db);
        g.tensors_mut()[0].data_mut().copy_from_slice(&dx);
        g.tensors_mut()[1].data_mut().copy_from_slice(&dw);
        g.tensors_mut()[2].data_mut().copy_from_slice(&db);
        g
    };
    out.push(("affine".to_string(), check(&p, loss, grad)));

    // relu away from its kink
    let x: Vec<f64> = uniform(&mut rng, 8, 0.1, 1.0)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v } else { -v })
        .collect();
    let c = uniform(&mut rng, 8, -1.0, 1.0);
    let p = params(vec![("x", Tensor::vector(x))]);
    let loss = |p: &ParameterSet| ops::dot(&ops::relu(&vec_of(p, "x")), &c);
    let grad = |p: &ParameterSet| params(vec![("x", Tensor::vector(ops::relu_backward(&vec_of(p, "x"), &c)))]);
    out.push(("relu".to_string(), check(&p, loss, grad)));

    // sigmoid
    let c = uniform(&mut rng, 6, -1.0, 1.0);
    let p = params(vec![("x", Tensor::vector(uniform(&mut rng, 6, -4.0, 4.0)))]);
    let loss = |p: &ParameterSet| vec_of(p, "x").iter().zip(&c).map(|(x, c)| c * ops::sigmoid(*x)).sum();
    let grad = |p: &ParameterSet| {
        let d = vec_of(p, "x")
            .iter()
            .zip(&c)
            .map(|(x, c)| ops::sigmoid_backward(ops::sigmoid(*x), *c))
            .collect();
        params(vec![("x", Tensor::vector(d))])
    };
    out.push(("sigmoid".to_string(), check(&p, loss, grad)));

    // softmax
    let c = uniform(&mut rng, 5, -1.0, 1.0);
    let p = params(vec![("x", Tensor::vector(uniform(&mut rng, 5, -3.0, 3.0)))]);
    let loss = |p: &ParameterSet| ops::dot(&ops::softmax(&vec_of(p, "x")).unwrap(), &c);
    let grad = |p: &ParameterSet| {
        let a = ops::softmax(&vec_of(p, "x")).unwrap();
        params(vec![("x", Tensor::vector(ops::softmax_backward(&a, &c)))])
    };
    out.push(("softmax".to_string(), check(&p, loss, grad)));

    // convolution + max over windows, for several widths including one longer than the input
    for (width, len) in [(2, 6), (3, 6), (5, 3)] {
        let (dim, filters) = (3, 4);
        let c = uniform(&mut rng, filters, -1.0, 1.0);
        let p = params(vec![
            ("seq", Tensor::vector(uniform(&mut rng, len * dim, -1.0, 1.0))),
            (
                "kernel",
                Tensor::matrix(filters, width * dim, uniform(&mut rng, filters * width * dim, -1.0, 1.0)).unwrap(),
            ),
            ("bias", Tensor::vector(uniform(&mut rng, filters, -0.5, 0.5))),
        ]);
        let run = |p: &ParameterSet| {
            ops::conv_encode(
                p.by_name("seq").unwrap().data(),
                dim,
                len,
                width,
                p.by_name("kernel").unwrap(),
                p.by_name("bias").unwrap(),
            )
            .unwrap()
        };
        let loss = |p: &ParameterSet| ops::dot(&run(p).values, &c);
        let grad = |p: &ParameterSet| {
            let conv = run(p);
            let mut g = p.zeros_like();
            let (mut dk, mut db, mut ds) = (
                vec![0.0; filters * width * dim],
                vec![0.0; filters],
                vec![0.0; len * dim],
            );
            ops::conv_backward(
                p.by_name("seq").unwrap().data(),
                dim,
                width,
                p.by_name("kernel").unwrap(),
                &conv.argmax,
                &c,
                &mut dk,
                &mut db,
                Some(&mut ds),
            );
            g.tensors_mut()[0].data_mut().copy_from_slice(&ds);
            g.tensors_mut()[1].data_mut().copy_from_slice(&dk);
            g.tensors_mut()[2].data_mut().copy_from_slice(&db);
            g
        };
        out.push((format!("conv(width={width}, len={len})"), check(&p, loss, grad)));
    }

    // dropout with a fixed mask
    let c = uniform(&mut rng, 10, -1.0, 1.0);
    let mask_seed = rng.random::<u64>();
    let p = params(vec![("x", Tensor::vector(uniform(&mut rng, 10, -1.0, 1.0)))]);
    let apply = |p: &ParameterSet| {
        let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
        ops::dropout(&vec_of(p, "x"), 0.3, Mode::Train, &mut r).unwrap()
    };
    let loss = |p: &ParameterSet| ops::dot(&apply(p).0, &c);
    let grad = |p: &ParameterSet| {
        let mask = apply(p).1.unwrap();
        params(vec![("x", Tensor::vector(mask.iter().zip(&c).map(|(m, c)| m * c).collect()))])
    };
    out.push(("dropout".to_string(), check(&p, loss, grad)));

    // binary cross-entropy
    for target in [0.0, 1.0] {
        let p = params(vec![("p", Tensor::vector(uniform(&mut rng, 4, 0.05, 0.95)))]);
        let loss = |p: &ParameterSet| vec_of(p, "p").iter().map(|&q| ops::bce(q, target)).sum();
        let grad = |p: &ParameterSet| {
            params(vec![("p", Tensor::vector(vec_of(p, "p").iter().map(|&q| ops::bce_grad(q, target)).collect()))])
        };
        out.push((format!("bce(target={target})"), check(&p, loss, grad)));
    }

    // attention + pooling, every variant
    for cfg in AttentionConfig::all() {
        let (n, dim) = (4, 5);
        let (s, u) = random_bag(&mut rng, n, dim);
        let c = uniform(&mut rng, dim, -1.0, 1.0);
        let p = params(vec![
            ("s", Tensor::matrix(n, dim, s.concat()).unwrap()),
            ("u", Tensor::vector(u)),
        ]);
        let split = |p: &ParameterSet| {
            let t = p.by_name("s").unwrap();
            let s: Vec<Vec<f64>> = (0..n).map(|j| t.row(j).to_vec()).collect();
            (s, vec_of(p, "u"))
        };
        let loss = |p: &ParameterSet| {
            let (s, u) = split(p);
            ops::dot(&attend_and_pool(&s, &u, cfg).unwrap().g, &c)
        };
        let grad = |p: &ParameterSet| {
            let (s, u) = split(p);
            let pooled = attend_and_pool(&s, &u, cfg).unwrap();
            let (ds, du) = attend_and_pool_backward(&s, &u, &pooled, &c, cfg);
            params(vec![
                ("s", Tensor::matrix(n, dim, ds.concat()).unwrap()),
                ("u", Tensor::vector(du)),
            ])
        };
        out.push((format!("attend_and_pool{cfg}"), check(&p, loss, grad)));
    }
    out
}
