//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use crown_core::{Activation, Layer, Network, Norm};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense network with weights `U(−1, 1)/√fan_in · gain` and biases `U(−0.5, 0.5)`.
pub fn random_net(rng: &mut ChaCha8Rng, act: Activation, widths: &[usize], gain: f64) -> Network<f64> {
    let layers = widths
        .windows(2)
        .map(|w| {
            let scale = gain / (w[0] as f64).sqrt();
            let weight = Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-1.0..1.0) * scale);
            let bias = Array1::from_shape_fn(w[1], |_| rng.random_range(-0.5..0.5));
            Layer::new(weight, bias).unwrap()
        })
        .collect();
    Network::new(act, layers).unwrap()
}

/// Random network whose hidden biases are shifted so every neuron's
/// pre-activation is centred on the given points; small balls around the
/// points then contain many unstable neurons.
pub fn centred_net(rng: &mut ChaCha8Rng, act: Activation, widths: &[usize], points: &[Vec<f64>]) -> Network<f64> {
    let base = random_net(rng, act, widths, 1.5);
    let mut layers: Vec<Layer<f64>> = Vec::new();
    let mut inputs: Vec<Array1<f64>> = points.iter().map(|p| Array1::from(p.clone())).collect();
    let m = base.depth();
    for (k, layer) in base.layers().iter().enumerate() {
        let mut bias = layer.bias.clone();
        if k + 1 < m {
            let pre: Vec<Array1<f64>> = inputs.iter().map(|z| layer.weight.dot(z)).collect();
            for i in 0..bias.len() {
                let mean = pre.iter().map(|y| y[i]).sum::<f64>() / pre.len() as f64;
                bias[i] = -mean + rng.random_range(-0.05..0.05);
            }
        }
        let shifted = Layer::new(layer.weight.clone(), bias).unwrap();
        inputs = inputs.iter().map(|z| shifted.affine(z.view()).mapv(|v| act.value(v))).collect();
        layers.push(shifted);
    }
    Network::new(act, layers).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Dual norm computed with plain loops.
pub fn dual_norm(row: &[f64], p: Norm) -> f64 {
    match p {
        Norm::Linf => row.iter().map(|v| v.abs()).sum(),
        Norm::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Norm::L1 => row.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// Straightforward Fast-Lin recursion written with nested `Vec`s.
///
/// Unlike the library, a single coefficient matrix `A` is carried (upper
/// and lower slopes coincide), and unstable neurons contribute their
/// intercept as `−l` times the slope. Returns `(lower, upper)` for every
/// layer's pre-activations, the last entry being the output bounds.
pub fn fastlin_reference(net: &Network<f64>, x0: &[f64], eps: f64, p: Norm) -> Vec<(Vec<f64>, Vec<f64>)> {
    let weights: Vec<Vec<Vec<f64>>> = net
        .layers()
        .iter()
        .map(|l| l.weight.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect();
    let biases: Vec<Vec<f64>> = net.layers().iter().map(|l| l.bias.to_vec()).collect();
    let mut bounds: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for k in 0..weights.len() {
        let rows = weights[k].len();
        let mut a: Vec<Vec<f64>> = weights[k].clone();
        let mut const_u: Vec<f64> = biases[k].clone();
        let mut const_l: Vec<f64> = biases[k].clone();
        for j in (0..k).rev() {
            let (lo, hi) = &bounds[j];
            let n = lo.len();
            let slope: Vec<f64> = (0..n)
                .map(|i| {
                    if lo[i] >= 0.0 {
                        1.0
                    } else if hi[i] <= 0.0 {
                        0.0
                    } else {
                        hi[i] / (hi[i] - lo[i])
                    }
                })
                .collect();
            for r in 0..rows {
                for i in 0..n {
                    if lo[i] < 0.0 && hi[i] > 0.0 {
                        let intercept = -slope[i] * lo[i];
                        if a[r][i] > 0.0 {
                            const_u[r] += a[r][i] * intercept;
                        } else {
                            const_l[r] += a[r][i] * intercept;
                        }
                    }
                }
            }
            let cols = weights[j][0].len();
            let mut next = vec![vec![0.0; cols]; rows];
            for r in 0..rows {
                for i in 0..n {
                    let s = a[r][i] * slope[i];
                    if s == 0.0 {
                        continue;
                    }
                    const_u[r] += s * biases[j][i];
                    const_l[r] += s * biases[j][i];
                    for c in 0..cols {
                        next[r][c] += s * weights[j][i][c];
                    }
                }
            }
            a = next;
        }
        let mut lo = vec![0.0; rows];
        let mut hi = vec![0.0; rows];
        for r in 0..rows {
            let centre: f64 = a[r].iter().zip(x0).map(|(w, x)| w * x).sum();
            let spread = eps * dual_norm(&a[r], p);
            lo[r] = centre - spread + const_l[r];
            hi[r] = centre + spread + const_u[r];
        }
        bounds.push((lo, hi));
    }
    bounds
}

/// Relative difference scaled by the magnitude of the operands.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
