//! Independent verification machinery: a sampling-plus-gradient
//! falsifier, interval bound propagation, and exhaustive grid enumeration
//! for networks with at most three inputs.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{CrownError, Result};
use crate::model::Network;
use crate::norm::{BallSpec, Norm};
use crate::scalar::Scalar;

/// Attack restarts are taken from this many best samples.
pub const ATTACK_RESTARTS: usize = 5;
/// Largest lattice `grid_exact_bounds` will enumerate.
pub const GRID_MAX_POINTS: usize = 1_000_000;
/// Largest input dimension `grid_exact_bounds` accepts.
pub const GRID_MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FalsifierReport<T> {
    /// Smallest `f_c − f_t` observed inside the ball.
    pub min_margin_found: T,
    /// Point attaining `min_margin_found`.
    pub witness: Option<Array1<T>>,
    pub samples_used: usize,
    pub attack_iters: usize,
    pub seed: u64,
}

impl<T: Scalar> FalsifierReport<T> {
    pub fn found_counterexample(&self) -> bool {
        self.min_margin_found <= T::zero()
    }
}

/// Draws a point uniformly from `ball`.
pub fn sample_ball<T: Scalar>(ball: &BallSpec<T>, rng: &mut ChaCha8Rng) -> Array1<T> {
    let n = ball.dim();
    let eps = ball.radius.to_f64_lossy();
    let offset: Vec<f64> = match ball.norm {
        Norm::Linf => (0..n).map(|_| rng.random_range(-1.0..=1.0) * eps).collect(),
        Norm::L2 => {
            let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let len = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = eps * rng.random::<f64>().powf(1.0 / n as f64);
            g.iter().map(|v| if len > 0.0 { v / len * r } else { 0.0 }).collect()
        }
        Norm::L1 => {
            // Exponential spacings give a uniform point of the simplex
            // {s ≥ 0, Σ s ≤ 1}; random signs fill the cross-polytope.
            let e: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = e.iter().sum();
            e[..n]
                .iter()
                .map(|v| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * v / total * eps
                })
                .collect()
        }
    };
    let x = Array1::from_iter(ball.center.iter().zip(offset).map(|(&c, o)| c + T::lit(o)));
    ball.pull_inside(x.view())
}

/// Value and input-gradient of the single output of `net`.
fn value_and_gradient<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<(T, Array1<T>)> {
    let pre = net.pre_activations(x)?;
    let layers = net.layers();
    let m = layers.len();
    let mut grad = layers[m - 1].weight.row(0).to_owned();
    for k in (0..m - 1).rev() {
        let act = net.activation();
        ndarray::Zip::from(&mut grad)
            .and(&pre[k])
            .for_each(|g, &y| *g *= act.derivative(y));
        grad = layers[k].weight.t().dot(&grad);
    }
    Ok((pre[m - 1][0], grad))
}

/// One projected steepest-descent step of length `step` in `norm`.
fn descent_step<T: Scalar>(ball: &BallSpec<T>, x: &Array1<T>, grad: &Array1<T>, step: T) -> Array1<T> {
    let direction = match ball.norm {
        Norm::Linf => grad.mapv(|g| g.signum() * if g == T::zero() { T::zero() } else { T::one() }),
        Norm::L2 => {
            let len = Norm::L2.of(grad.view());
            if len > T::zero() {
                grad.mapv(|g| g / len)
            } else {
                Array1::zeros(grad.len())
            }
        }
        Norm::L1 => {
            let mut d = Array1::zeros(grad.len());
            if let Some((i, g)) = grad
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            {
                if *g != T::zero() {
                    d[i] = g.signum();
                }
            }
            d
        }
    };
    ball.project((x - &direction.mapv(|d| d * step)).view())
}

/// Searches `ball` for a point where `f_c − f_t ≤ 0`.
///
/// Evaluates the margin at `x0` and `n_samples` uniform samples, then runs
/// `attack_iters` projected-gradient steps of size ε/10 from the best few.
pub fn falsify<T: Scalar>(
    net: &Network<T>,
    c: usize,
    t: usize,
    ball: &BallSpec<T>,
    n_samples: usize,
    attack_iters: usize,
    seed: u64,
) -> Result<FalsifierReport<T>> {
    if ball.dim() != net.input_dim() {
        return Err(CrownError::Dimension {
            expected: net.input_dim(),
            got: ball.dim(),
        });
    }
    let margin = net.margin_network(c, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ball.dim();
    let mut samples = Array2::zeros((n_samples + 1, n));
    samples.row_mut(0).assign(&ball.center);
    for mut row in samples.rows_mut().into_iter().skip(1) {
        row.assign(&sample_ball(ball, &mut rng));
    }
    let outputs = net.forward_batch(samples.view())?;
    let values = &outputs.column(c) - &outputs.column(t);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));

    let mut best = values[order[0]];
    let mut witness = samples.row(order[0]).to_owned();
    let step = ball.radius / T::lit(10.0);
    if step > T::zero() {
        for &start in order.iter().take(ATTACK_RESTARTS) {
            let mut x = samples.row(start).to_owned();
            for _ in 0..attack_iters {
                let (_, grad) = value_and_gradient(&margin, x.as_slice().unwrap())?;
                x = descent_step(ball, &x, &grad, step);
                let v = margin_at(net, c, t, x.view())?;
                if v < best {
                    best = v;
                    witness = x.clone();
                }
            }
        }
    }
    Ok(FalsifierReport {
        min_margin_found: best,
        witness: Some(witness),
        samples_used: n_samples + 1,
        attack_iters,
        seed,
    })
}

/// Interval bound propagation: sound but loose output bounds.
pub fn interval_bounds<T: Scalar>(net: &Network<T>, ball: &BallSpec<T>) -> Result<(Array1<T>, Array1<T>)> {
    if ball.dim() != net.input_dim() {
        return Err(CrownError::Dimension {
            expected: net.input_dim(),
            got: ball.dim(),
        });
    }
    let layers = net.layers();
    let first = &layers[0];
    let center = first.affine(ball.center.view());
    let spread = Array1::from_iter(
        first
            .weight
            .rows()
            .into_iter()
            .map(|row| ball.radius * ball.norm.dual_of(row)),
    );
    let mut lower = &center - &spread;
    let mut upper = &center + &spread;
    let act = net.activation();
    for layer in &layers[1..] {
        let lo = lower.mapv(|v| act.value(v));
        let hi = upper.mapv(|v| act.value(v));
        let mid = (&lo + &hi).mapv(|v| v * T::lit(0.5));
        let rad = (&hi - &lo).mapv(|v| v * T::lit(0.5));
        let c = layer.affine(mid.view());
        let r = layer.weight.mapv(|w| w.abs()).dot(&rad);
        lower = &c - &r;
        upper = &c + &r;
    }
    Ok((lower, upper))
}

/// Lattice over the ball's bounding box with spacing `resolution`; points
/// outside the ball are scaled radially onto its boundary.
pub fn ball_grid<T: Scalar>(ball: &BallSpec<T>, resolution: T) -> Result<Array2<T>> {
    let n = ball.dim();
    if n == 0 || n > GRID_MAX_DIM {
        return Err(CrownError::InvalidArgument(format!(
            "grid enumeration supports 1 to {GRID_MAX_DIM} inputs, got {n}"
        )));
    }
    if resolution.is_nan() || resolution <= T::zero() {
        return Err(CrownError::InvalidArgument("grid resolution must be positive".into()));
    }
    let eps = ball.radius;
    let per_axis = ((eps + eps) / resolution).ceil().to_usize().unwrap_or(usize::MAX).saturating_add(1);
    let total = per_axis.checked_pow(n as u32).unwrap_or(usize::MAX);
    if total > GRID_MAX_POINTS {
        return Err(CrownError::InvalidArgument(format!(
            "grid would need {total} points (limit {GRID_MAX_POINTS})"
        )));
    }
    let ticks: Vec<T> = if per_axis == 1 {
        vec![T::zero()]
    } else {
        (0..per_axis)
            .map(|i| -eps + (eps + eps) * T::from_usize(i).unwrap() / T::from_usize(per_axis - 1).unwrap())
            .collect()
    };
    let mut grid = Array2::zeros((total, n));
    let mut offset = Array1::zeros(n);
    for (idx, mut row) in grid.rows_mut().into_iter().enumerate() {
        let mut rest = idx;
        for d in 0..n {
            offset[d] = ticks[rest % per_axis];
            rest /= per_axis;
        }
        let len = ball.norm.of(offset.view());
        if len > eps && len > T::zero() {
            offset.mapv_inplace(|v| v * (eps / len));
        }
        row.assign(&(&ball.center + &offset));
    }
    Ok(grid)
}

/// Empirical output range over a dense lattice of the ball — an inner
/// approximation of the true range.
pub fn grid_exact_bounds<T: Scalar>(
    net: &Network<T>,
    ball: &BallSpec<T>,
    resolution: T,
) -> Result<(Array1<T>, Array1<T>)> {
    if ball.dim() != net.input_dim() {
        return Err(CrownError::Dimension {
            expected: net.input_dim(),
            got: ball.dim(),
        });
    }
    let grid = ball_grid(ball, resolution)?;
    let values = net.forward_batch(grid.view())?;
    let lower = values.fold_axis(Axis(0), T::infinity(), |&m, &v| m.min(v));
    let upper = values.fold_axis(Axis(0), T::neg_infinity(), |&m, &v| m.max(v));
    Ok((lower, upper))
}

/// Convenience: the margin `f_c − f_t` at `x`.
pub fn margin_at<T: Scalar>(net: &Network<T>, c: usize, t: usize, x: ArrayView1<T>) -> Result<T> {
    let f = net.forward(x.as_slice().ok_or_else(|| CrownError::Shape("non-contiguous input".into()))?)?;
    Ok(f[c] - f[t])
}
