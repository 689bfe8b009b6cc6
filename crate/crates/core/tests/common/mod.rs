//! Independent reference computations used as test oracles.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfxfer::nnkernel::{cross_entropy, LayerSpec, ModelSpec, Network, Shape3};

/// Row-major dense matrix helpers, deliberately naive.
pub fn gram(f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = f[0].len();
    let mut g = vec![vec![0.0; d]; d];
    for row in f {
        for a in 0..d {
            for b in 0..d {
                g[a][b] += row[a] * row[b];
            }
        }
    }
    g
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

pub fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// Bayesian linear regression log-evidence evaluated directly from the
/// posterior, with no eigendecomposition.
pub fn evidence(f: &[Vec<f64>], y: &[f64], alpha: f64, beta: f64) -> f64 {
    let n = f.len() as f64;
    let d = f[0].len();
    let mut a = gram(f);
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v *= beta;
        }
        row[i] += alpha;
    }
    let l = cholesky(&a);
    let mut fty = vec![0.0; d];
    for (row, &yi) in f.iter().zip(y) {
        for k in 0..d {
            fty[k] += row[k] * yi;
        }
    }
    let m: Vec<f64> = cholesky_solve(&l, &fty).iter().map(|v| v * beta).collect();
    let res2: f64 = f
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let p: f64 = row.iter().zip(&m).map(|(a, b)| a * b).sum();
            (p - yi).powi(2)
        })
        .sum();
    let m2: f64 = m.iter().map(|v| v * v).sum();
    let logdet: f64 = 2.0 * (0..d).map(|i| l[i][i].ln()).sum::<f64>();
    0.5 * n * beta.ln() + 0.5 * d as f64 * alpha.ln()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * beta * res2
        - 0.5 * alpha * m2
        - 0.5 * logdet
}

/// Maximum evidence over (alpha, beta) in `[1e-4, 1e4]^2`: a 60 x 60
/// log-spaced grid, then repeated 60 x 60 grids around the incumbent.
pub fn grid_max_evidence(f: &[Vec<f64>], y: &[f64]) -> (f64, f64, f64) {
    let (mut lo_a, mut hi_a) = (-4.0f64, 4.0f64);
    let (mut lo_b, mut hi_b) = (-4.0f64, 4.0f64);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for _round in 0..8 {
        let sa = (hi_a - lo_a) / 59.0;
        let sb = (hi_b - lo_b) / 59.0;
        for i in 0..60 {
            for j in 0..60 {
                let la = lo_a + i as f64 * sa;
                let lb = lo_b + j as f64 * sb;
                let e = evidence(f, y, 10f64.powf(la), 10f64.powf(lb));
                if e > best.0 {
                    best = (e, la, lb);
                }
            }
        }
        lo_a = (best.1 - sa).max(-4.0);
        hi_a = (best.1 + sa).min(4.0);
        lo_b = (best.2 - sb).max(-4.0);
        hi_b = (best.2 + sb).min(4.0);
    }
    (best.0, 10f64.powf(best.1), 10f64.powf(best.2))
}

/// Per-class-mean LogME from the grid oracle.
pub fn grid_logme(f: &[Vec<f64>], labels: &[usize], classes: usize) -> f64 {
    let n = f.len() as f64;
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..classes {
        let y: Vec<f64> = labels.iter().map(|&l| (l == c) as u8 as f64).collect();
        if y.iter().all(|&v| v == 0.0) {
            continue;
        }
        total += grid_max_evidence(f, &y).0 / n;
        used += 1;
    }
    total / used as f64
}

/// LEEP written as nested sums straight from its definition.
pub fn leep_brute(theta: &[Vec<f64>], labels: &[usize], ct: usize) -> f64 {
    let n = theta.len() as f64;
    let cs = theta[0].len();
    let joint = |y: usize, z: usize| -> f64 {
        theta
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == y)
            .map(|(t, _)| t[z])
            .sum::<f64>()
            / n
    };
    let mut total = 0.0;
    for (t, &y) in theta.iter().zip(labels) {
        let mut eep = 0.0;
        for z in 0..cs {
            let pz: f64 = (0..ct).map(|yy| joint(yy, z)).sum();
            let cond = if pz < 1e-12 {
                labels.iter().filter(|&&l| l == y).count() as f64 / n
            } else {
                joint(y, z) / pz
            };
            eep += cond * t[z];
        }
        total += eep.ln();
    }
    total / n
}

/// Weighted Kendall tau by enumeration of all unordered pairs, each weighted
/// by the sum of its members' hyperbolic rank weights, averaged over the
/// x-ranking and the y-ranking.
pub fn weighted_tau_brute(x: &[f64], y: &[f64]) -> f64 {
    let half = |a: &[f64], b: &[f64]| -> f64 {
        let n = a.len();
        // Rank 0 is the largest `a`, ties broken by larger `b`, then index.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            a[j].partial_cmp(&a[i])
                .unwrap()
                .then(b[j].partial_cmp(&b[i]).unwrap())
                .then(i.cmp(&j))
        });
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let w = |i: usize| 1.0 / (1.0 + rank[i] as f64);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let pair = w(i) + w(j);
                let prod = (a[i] - a[j]) * (b[i] - b[j]);
                if prod > 0.0 {
                    num += pair;
                } else if prod < 0.0 {
                    num -= pair;
                }
                den += pair;
            }
        }
        num / den
    };
    0.5 * (half(x, y) + half(y, x))
}

pub fn micro_spec() -> ModelSpec {
    ModelSpec {
        input: Shape3::new(2, 10, 1),
        layers: vec![
            LayerSpec::Conv2d {
                out_channels: 3,
                kernel: [1, 3],
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                out_channels: 2,
                kernel: [2, 3],
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Flatten,
            LayerSpec::Linear { out_features: 5 },
            LayerSpec::Linear { out_features: 3 },
        ],
    }
}

pub fn batch(b: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((b, n), || rng.gen_range(-1.0..1.0))
}

/// Loss with a fixed dropout stream, so the mask is identical on every call.
fn loss(net: &Network<f64>, x: &Array2<f64>, y: &[usize]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (out, _) = net.forward_train(x.view(), &mut rng).unwrap();
    cross_entropy(out.view(), y).unwrap().0
}

/// Compares every analytic gradient entry with a central difference; returns
/// the number of entries checked and the worst relative error.
pub fn check_against_central_differences(net: &mut Network<f64>, x: &Array2<f64>, y: &[usize]) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (out, cache) = net.forward_train(x.view(), &mut rng).unwrap();
    let (_, dlogits) = cross_entropy(out.view(), y).unwrap();
    let grads = net.backward(&cache, dlogits.view()).unwrap();
    let h = 1e-6;
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (i, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        let (rows, cols) = g.weight.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = net.params(i).unwrap().weight[[r, c]];
                net.params_mut(i).unwrap().weight[[r, c]] = orig + h;
                let up = loss(net, x, y);
                net.params_mut(i).unwrap().weight[[r, c]] = orig - h;
                let down = loss(net, x, y);
                net.params_mut(i).unwrap().weight[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = g.weight[[r, c]];
                worst = worst.max(rel_err(numeric, analytic));
                checked += 1;
            }
        }
        for k in 0..g.bias.len() {
            let orig = net.params(i).unwrap().bias[k];
            net.params_mut(i).unwrap().bias[k] = orig + h;
            let up = loss(net, x, y);
            net.params_mut(i).unwrap().bias[k] = orig - h;
            let down = loss(net, x, y);
            net.params_mut(i).unwrap().bias[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g.bias[k];
            worst = worst.max(rel_err(numeric, analytic));
            checked += 1;
        }
    }
    (checked, worst)
}

/// Relative difference with a floor of 1e-3 on the scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Rows drawn from a softmax of uniform logits.
pub fn random_theta(rng: &mut ChaCha8Rng, n: usize, cs: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..cs).map(|_| rng.gen_range(-3.0f64..3.0).exp()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Features uniform in [-1, 1]; labels from a noisy random linear scorer.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let f: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let w: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels = f
        .iter()
        .map(|row| {
            let s: Vec<f64> = w
                .iter()
                .map(|wc| row.iter().zip(wc).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.5..0.5))
                .collect();
            (0..classes)
                .max_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap())
                .unwrap()
        })
        .collect();
    (f, labels)
}
