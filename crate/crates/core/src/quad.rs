//! Quadratic relaxation of the last hidden layer of a ReLU network.
//!
//! Unstable neurons of layer `m−1` get a parabolic lower bound; together
//! with the linear upper chord this turns each output bound into a convex
//! quadratic program over the input ball (`m = 2`) or over the box of
//! layer `m−2` post-activations (`m > 2`). The program is solved by
//! projected gradient descent with Armijo backtracking, and the reported
//! bound is closed with the Frank–Wolfe gap so it never overshoots the
//! true optimum.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{CrownError, Result};
use crate::model::{Activation, Network};
use crate::norm::{BallSpec, Norm};
use crate::propagation::{layer_sweep, LayerBounds};
use crate::relaxation::{relax_neuron_quadratic, LayerRelaxation, ReluLowerStrategy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Feasible set of a quadratic program.
#[derive(Debug, Clone, PartialEq)]
pub enum QpDomain<T> {
    Ball(BallSpec<T>),
    Box { lower: Array1<T>, upper: Array1<T> },
}

impl<T: Scalar> QpDomain<T> {
    pub fn dim(&self) -> usize {
        match self {
            QpDomain::Ball(b) => b.dim(),
            QpDomain::Box { lower, .. } => lower.len(),
        }
    }

    pub fn center(&self) -> Array1<T> {
        match self {
            QpDomain::Ball(b) => b.center.clone(),
            QpDomain::Box { lower, upper } => (lower + upper).mapv(|v| v * T::lit(0.5)),
        }
    }

    pub fn project(&self, z: ArrayView1<T>) -> Array1<T> {
        match self {
            QpDomain::Ball(b) => b.project(z),
            QpDomain::Box { lower, upper } => {
                let mut out = z.to_owned();
                ndarray::Zip::from(&mut out)
                    .and(lower)
                    .and(upper)
                    .for_each(|v, &lo, &hi| *v = v.max(lo).min(hi));
                out
            }
        }
    }

    /// `argmin_{v ∈ D} g·v`.
    fn linear_minimizer(&self, g: ArrayView1<T>) -> Array1<T> {
        match self {
            QpDomain::Ball(b) => {
                let dir = b.norm.dual_maximizer(g);
                &b.center - &dir.mapv(|v| v * b.radius)
            }
            QpDomain::Box { lower, upper } => {
                let mut out = lower.clone();
                ndarray::Zip::from(&mut out)
                    .and(upper)
                    .and(g)
                    .for_each(|v, &hi, &gi| {
                        if gi < T::zero() {
                            *v = hi;
                        }
                    });
                out
            }
        }
    }
}

/// `φ(z) = zᵀ Q z + linear·z + constant` with `Q = Wᵀ diag(curvature) W`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm<T> {
    pub q: Array2<T>,
    /// Diagonal of the neuron-space quadratic term; its sign pattern fixes
    /// the convexity of the program.
    pub curvature: Array1<T>,
    pub linear: Array1<T>,
    pub constant: T,
    pub sense: Sense,
    pub domain: QpDomain<T>,
}

impl<T: Scalar> QuadraticForm<T> {
    pub fn eval(&self, z: ArrayView1<T>) -> T {
        z.dot(&self.q.dot(&z)) + self.linear.dot(&z) + self.constant
    }

    pub fn gradient(&self, z: ArrayView1<T>) -> Array1<T> {
        self.q.dot(&z).mapv(|v| v + v) + &self.linear
    }

    /// Maximization needs `Q ⪯ 0`, minimization `Q ⪰ 0`; both follow from
    /// the curvature signs.
    pub fn is_convex_program(&self) -> bool {
        match self.sense {
            Sense::Maximize => self.curvature.iter().all(|&c| c <= T::zero()),
            Sense::Minimize => self.curvature.iter().all(|&c| c >= T::zero()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig<T> {
    pub max_iters: usize,
    pub init_step: T,
    pub shrink: T,
    pub armijo_c: T,
    pub stop_rel: T,
}

impl<T: Scalar> Default for PgdConfig<T> {
    fn default() -> Self {
        PgdConfig {
            max_iters: 200,
            init_step: T::one(),
            shrink: T::lit(0.5),
            armijo_c: T::lit(1e-4),
            stop_rel: T::lit(1e-9),
        }
    }
}

impl<T: Scalar> PgdConfig<T> {
    fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.init_step > T::zero()
            && self.shrink > T::zero()
            && self.shrink < T::one()
            && self.armijo_c > T::zero()
            && self.stop_rel > T::zero();
        if ok {
            Ok(())
        } else {
            Err(CrownError::InvalidArgument(format!("invalid PGD configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome<T> {
    /// Objective at the returned point.
    pub value: T,
    /// Guaranteed bound on the optimum: a lower bound when minimizing, an
    /// upper bound when maximizing.
    pub bound: T,
    pub argpoint: Array1<T>,
    pub iterations: usize,
    /// Objective after every accepted step, in the original sense.
    pub history: Vec<T>,
}

/// Assembles the quadratic bound of output `row` of `net`.
///
/// `relax_last` relaxes hidden layer `m−1`; `bounds` supplies the layer
/// `m−2` box when `m > 2`.
pub fn build_quadratic<T: Scalar>(
    net: &Network<T>,
    row: usize,
    bounds: &LayerBounds<T>,
    relax_last: &LayerRelaxation<T>,
    ball: &BallSpec<T>,
    sense: Sense,
) -> Result<QuadraticForm<T>> {
    if net.activation() != Activation::Relu {
        return Err(CrownError::MethodActivation {
            method: "crown-quad".into(),
            activation: net.activation().name().into(),
        });
    }
    let m = net.depth();
    if m < 2 {
        return Err(CrownError::InvalidArgument(
            "quadratic bounds need at least one hidden layer".into(),
        ));
    }
    if row >= net.output_dim() {
        return Err(CrownError::InvalidArgument(format!("output row {row} out of range")));
    }
    let hidden = &net.layers()[m - 2];
    let out = &net.layers()[m - 1];
    if relax_last.len() != hidden.outputs() {
        return Err(CrownError::Shape(format!(
            "relaxation has {} neurons, layer {} has {}",
            relax_last.len(),
            m - 1,
            hidden.outputs()
        )));
    }
    let weights = out.weight.row(row);
    let n = hidden.outputs();
    let mut curvature = Array1::zeros(n);
    let mut slope = Array1::zeros(n);
    let mut constant = out.bias[row];
    for i in 0..n {
        let w = weights[i];
        let r = relax_last.neuron(i);
        let take_upper = (w >= T::zero()) == (sense == Sense::Maximize);
        let (eta, alpha, delta) = if take_upper {
            (r.eta_u, r.alpha_u, r.delta_u)
        } else {
            (r.eta_l, r.alpha_l, r.delta_l)
        };
        curvature[i] = w * eta;
        slope[i] = w * alpha;
        constant += w * delta;
    }

    let scaled = &hidden.weight * &curvature.view().insert_axis(Axis(1));
    let q = hidden.weight.t().dot(&scaled);
    let q = (&q + &q.t()).mapv(|v| v * T::lit(0.5));
    let neuron_linear = (&hidden.bias * &curvature).mapv(|v| v + v) + &slope;
    let linear = hidden.weight.t().dot(&neuron_linear);
    constant += hidden.bias.iter().zip(curvature.iter()).map(|(&b, &c)| c * b * b).sum::<T>()
        + slope.dot(&hidden.bias);

    let domain = if m == 2 {
        QpDomain::Ball(ball.clone())
    } else {
        if bounds.layers() < m - 2 {
            return Err(CrownError::Shape(format!(
                "need bounds for hidden layer {}, have {}",
                m - 2,
                bounds.layers()
            )));
        }
        let (lower, upper) = bounds.post_activation(m - 2, Activation::Relu);
        QpDomain::Box { lower, upper }
    };
    let qf = QuadraticForm {
        q,
        curvature,
        linear,
        constant,
        sense,
        domain,
    };
    if !qf.is_convex_program() {
        return Err(CrownError::InvalidArgument(
            "relaxation curvatures do not give a convex program".into(),
        ));
    }
    Ok(qf)
}

/// Projected gradient descent with Armijo backtracking on the convex
/// program `qf`.
pub fn pgd_optimize<T: Scalar>(qf: &QuadraticForm<T>, cfg: &PgdConfig<T>) -> Result<PgdOutcome<T>> {
    cfg.validate()?;
    if let QpDomain::Ball(b) = &qf.domain {
        if b.norm == Norm::L1 {
            return Err(CrownError::Unsupported("quadratic programs over ℓ1 balls".into()));
        }
    }
    if !qf.is_convex_program() {
        return Err(CrownError::InvalidArgument("indefinite quadratic program".into()));
    }
    let d = qf.domain.dim();
    if qf.q.nrows() != d || qf.q.ncols() != d || qf.linear.len() != d {
        return Err(CrownError::Dimension {
            expected: d,
            got: qf.linear.len(),
        });
    }
    let scale = qf.q.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
    for i in 0..d {
        for j in 0..i {
            if (qf.q[[i, j]] - qf.q[[j, i]]).abs() > T::lit(1e-12) * scale {
                return Err(CrownError::InvalidArgument("quadratic term is not symmetric".into()));
            }
        }
    }

    // Minimize ψ = sign·φ, which is convex.
    let sign = match qf.sense {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };
    let psi = |z: ArrayView1<T>| sign * qf.eval(z);
    let grad = |z: ArrayView1<T>| qf.gradient(z).mapv(|v| sign * v);

    let mut z = qf.domain.project(qf.domain.center().view());
    let mut value = psi(z.view());
    let mut best_lower = T::neg_infinity();
    let mut step = cfg.init_step;
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let g = grad(z.view());
        let vertex = qf.domain.linear_minimizer(g.view());
        let gap = g.dot(&(&z - &vertex)).max(T::zero());
        best_lower = best_lower.max(value - gap);
        if gap <= cfg.stop_rel * value.abs().max(T::one()) || iterations >= cfg.max_iters {
            break;
        }
        iterations += 1;

        let mut accepted = None;
        let mut t = step;
        while t > T::min_positive_value() {
            let trial = qf.domain.project((&z - &g.mapv(|v| v * t)).view());
            let decrease = g.dot(&(&trial - &z));
            let trial_value = psi(trial.view());
            if trial_value <= value + cfg.armijo_c * decrease {
                accepted = Some((trial, trial_value, t));
                break;
            }
            t *= cfg.shrink;
        }
        match accepted {
            Some((trial, trial_value, t)) => {
                let moved = trial != z;
                z = trial;
                value = trial_value;
                history.push(sign * value);
                step = t / cfg.shrink;
                if !moved {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(PgdOutcome {
        value: sign * value,
        bound: sign * best_lower,
        argpoint: z,
        iterations,
        history,
    })
}

/// Hidden-layer sweep plus the quadratic relaxation of layer `m−1`.
pub fn quadratic_relaxation<T: Scalar>(
    net: &Network<T>,
    ball: &BallSpec<T>,
) -> Result<(LayerBounds<T>, LayerRelaxation<T>)> {
    if net.activation() != Activation::Relu {
        return Err(CrownError::MethodActivation {
            method: "crown-quad".into(),
            activation: net.activation().name().into(),
        });
    }
    if net.depth() < 2 {
        return Err(CrownError::InvalidArgument(
            "quadratic bounds need at least one hidden layer".into(),
        ));
    }
    let sweep = layer_sweep(net, ball, ReluLowerStrategy::Adaptive)?;
    let k = net.depth() - 1;
    let neurons = sweep.bounds.lower[k - 1]
        .iter()
        .zip(sweep.bounds.upper[k - 1].iter())
        .map(|(&l, &u)| relax_neuron_quadratic(l, u))
        .collect::<Result<Vec<_>>>()?;
    Ok((sweep.bounds, LayerRelaxation::from_neurons(&neurons)))
}

fn check_ball<T: Scalar>(net: &Network<T>, ball: &BallSpec<T>) -> Result<()> {
    if net.depth() == 2 && ball.norm == Norm::L1 {
        return Err(CrownError::Unsupported(
            "crown-quad on two-layer networks needs an ℓ2 or ℓ∞ ball".into(),
        ));
    }
    Ok(())
}

/// Output bounds `(γ_L, γ_U)` from the quadratic relaxation.
pub fn crown_quad_bounds<T: Scalar>(
    net: &Network<T>,
    ball: &BallSpec<T>,
    cfg: &PgdConfig<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    check_ball(net, ball)?;
    let (bounds, relax) = quadratic_relaxation(net, ball)?;
    let n = net.output_dim();
    let mut lower = Array1::zeros(n);
    let mut upper = Array1::zeros(n);
    for j in 0..n {
        let qf = build_quadratic(net, j, &bounds, &relax, ball, Sense::Minimize)?;
        lower[j] = pgd_optimize(&qf, cfg)?.bound;
        let qf = build_quadratic(net, j, &bounds, &relax, ball, Sense::Maximize)?;
        upper[j] = pgd_optimize(&qf, cfg)?.bound;
    }
    Ok((lower, upper))
}

/// Certified lower bound of `f_c − f_t` over the ball.
pub fn crown_quad_margin<T: Scalar>(
    net: &Network<T>,
    c: usize,
    t: usize,
    ball: &BallSpec<T>,
    cfg: &PgdConfig<T>,
) -> Result<T> {
    check_ball(net, ball)?;
    let margin = net.margin_network(c, t)?;
    let (bounds, relax) = quadratic_relaxation(&margin, ball)?;
    let qf = build_quadratic(&margin, 0, &bounds, &relax, ball, Sense::Minimize)?;
    Ok(pgd_optimize(&qf, cfg)?.bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;
    use crate::propagation::{backward_plane, global_bounds, OutputSelector};
    use crate::relaxation::NeuronRelaxation;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_relu(rng: &mut ChaCha8Rng, widths: &[usize]) -> Network<f64> {
        let layers = widths
            .windows(2)
            .map(|w| {
                let weight = Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-1.0..1.0));
                let bias = Array1::from_shape_fn(w[1], |_| rng.random_range(-0.5..0.5));
                Layer::new(weight, bias).unwrap()
            })
            .collect();
        Network::new(Activation::Relu, layers).unwrap()
    }

    fn box_form(q: Array2<f64>, linear: Array1<f64>, lower: Array1<f64>, upper: Array1<f64>, sense: Sense) -> QuadraticForm<f64> {
        let curvature = match sense {
            Sense::Minimize => Array1::ones(q.nrows()),
            Sense::Maximize => -Array1::ones(q.nrows()),
        };
        QuadraticForm { q, curvature, linear, constant: 0.0, sense, domain: QpDomain::Box { lower, upper } }
    }

    #[test]
    fn one_dimensional_clamped_vertex() {
        // maximize −y² + 2y on [−1, 0.5]
        let qf = box_form(array![[-1.0]], array![2.0], array![-1.0], array![0.5], Sense::Maximize);
        let out = pgd_optimize(&qf, &PgdConfig::default()).unwrap();
        assert!((out.value - 0.75).abs() < 1e-12);
        assert!((out.bound - 0.75).abs() < 1e-9 && out.bound >= 0.75);
        assert!((out.argpoint[0] - 0.5).abs() < 1e-12);
    }

    /// Cyclic exact coordinate minimization over the box.
    fn coordinate_descent(q: &Array2<f64>, lin: &Array1<f64>, lo: &Array1<f64>, hi: &Array1<f64>) -> f64 {
        let mut z = (lo + hi) / 2.0;
        for _ in 0..20_000 {
            for i in 0..z.len() {
                // ∂/∂z_i: 2 Σ_j Q_ij z_j + lin_i = 0
                let off: f64 = (0..z.len()).filter(|&j| j != i).map(|j| q[[i, j]] * z[j]).sum();
                let zi = if q[[i, i]] > 0.0 { -(2.0 * off + lin[i]) / (2.0 * q[[i, i]]) } else if 2.0 * off + lin[i] > 0.0 { lo[i] } else { hi[i] };
                z[i] = zi.clamp(lo[i], hi[i]);
            }
        }
        z.dot(&q.dot(&z)) + lin.dot(&z)
    }

    #[test]
    fn random_box_instance_matches_coordinate_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = Array2::from_shape_fn((10, 10), |_| rng.random_range(-1.0..1.0));
        let q = a.t().dot(&a) / 10.0;
        let q = (&q + &q.t()) / 2.0;
        let lin = Array1::from_shape_fn(10, |_| rng.random_range(-2.0..2.0));
        let lo = Array1::from_shape_fn(10, |_| rng.random_range(-1.0..0.0));
        let hi = Array1::from_shape_fn(10, |_| rng.random_range(0.0..1.0));
        let oracle = coordinate_descent(&q, &lin, &lo, &hi);
        let qf = box_form(q, lin, lo, hi, Sense::Minimize);
        let cfg = PgdConfig { max_iters: 5000, ..PgdConfig::default() };
        let out = pgd_optimize(&qf, &cfg).unwrap();
        assert!((out.value - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "{} vs {oracle}", out.value);
        assert!(out.bound <= oracle + 1e-12);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn zero_curvature_reduces_to_closed_form() {
        let lin: Array1<f64> = array![1.0, -2.0, 0.5];
        for norm in [Norm::L2, Norm::Linf] {
            let ball = BallSpec::new(&[0.1, 0.2, 0.3], 0.4, norm).unwrap();
            let qf = QuadraticForm {
                q: Array2::zeros((3, 3)),
                curvature: Array1::zeros(3),
                linear: lin.clone(),
                constant: 0.7,
                sense: Sense::Maximize,
                domain: QpDomain::Ball(ball.clone()),
            };
            let out = pgd_optimize(&qf, &PgdConfig::default()).unwrap();
            let closed: f64 = 0.4 * norm.dual_of(lin.view()) + lin.dot(&ball.center) + 0.7;
            assert!((out.bound - closed).abs() < 1e-12, "{norm}");
            assert!((out.value - closed).abs() < 1e-9, "{norm}");
        }
    }

    #[test]
    fn rejects_l1_and_indefinite() {
        let ball = BallSpec::new(&[0.0], 1.0, Norm::L1).unwrap();
        let mut qf = QuadraticForm {
            q: array![[1.0]],
            curvature: array![1.0],
            linear: array![0.0],
            constant: 0.0,
            sense: Sense::Minimize,
            domain: QpDomain::Ball(ball),
        };
        assert!(matches!(pgd_optimize(&qf, &PgdConfig::default()), Err(CrownError::Unsupported(_))));
        qf.domain = QpDomain::Box { lower: array![-1.0], upper: array![1.0] };
        qf.sense = Sense::Maximize;
        assert!(pgd_optimize(&qf, &PgdConfig::default()).is_err());
    }

    #[test]
    fn all_positive_net_has_zero_quadratic_term() {
        let net = Network::from_rows(
            Activation::Relu,
            vec![
                (vec![vec![1.0f64, 0.5], vec![-0.5, 1.0]], vec![4.0, 4.0]),
                (vec![vec![1.0, -2.0]], vec![0.0]),
            ],
        )
        .unwrap();
        let ball = BallSpec::new(&[0.0, 0.0], 0.5, Norm::Linf).unwrap();
        let (bounds, relax) = quadratic_relaxation(&net, &ball).unwrap();
        let qf = build_quadratic(&net, 0, &bounds, &relax, &ball, Sense::Minimize).unwrap();
        assert!(qf.q.iter().all(|&v| v == 0.0));
        let (gl, gu) = crown_quad_bounds(&net, &ball, &PgdConfig::default()).unwrap();
        let exact_w = array![2.0, -1.5];
        let exact_c = 4.0 - 8.0;
        assert!((gl[0] - (exact_c - 0.5 * 3.5)).abs() < 1e-12);
        assert!((gu[0] - (exact_c + 0.5 * 3.5)).abs() < 1e-12);
        assert_eq!(qf.linear, exact_w);
    }

    #[test]
    fn negative_weight_mixed_neuron_is_concave_for_maximize() {
        let net = Network::from_rows(
            Activation::Relu,
            vec![(vec![vec![1.0f64, 1.0]], vec![0.0]), (vec![vec![-2.0]], vec![0.0])],
        )
        .unwrap();
        let ball = BallSpec::new(&[0.0, 0.0], 1.0, Norm::Linf).unwrap();
        let (bounds, relax) = quadratic_relaxation(&net, &ball).unwrap();
        let qf = build_quadratic(&net, 0, &bounds, &relax, &ball, Sense::Maximize).unwrap();
        assert!(qf.curvature[0] < 0.0);
        assert!((qf.curvature[0] - (-2.0 / 4.0)).abs() < 1e-15);
        assert!(qf.q.iter().all(|&v| v <= 0.0));
        // Non-ReLU networks are rejected.
        let tanh = Network::new(Activation::Tanh, net.layers().to_vec()).unwrap();
        assert!(build_quadratic(&tanh, 0, &bounds, &relax, &ball, Sense::Maximize).is_err());
    }

    #[test]
    fn assembled_form_matches_direct_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let net = random_relu(&mut rng, &[4, 20, 3]);
        let ball = BallSpec::new(&[0.2, -0.1, 0.4, 0.0], 0.5, Norm::L2).unwrap();
        let (bounds, relax) = quadratic_relaxation(&net, &ball).unwrap();
        let layers = net.layers();
        for sense in [Sense::Minimize, Sense::Maximize] {
            for j in 0..3 {
                let qf = build_quadratic(&net, j, &bounds, &relax, &ball, sense).unwrap();
                for _ in 0..100 {
                    let x = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
                    let y = layers[0].affine(x.view());
                    let direct: f64 = (0..20)
                        .map(|i| {
                            let w = layers[1].weight[[j, i]];
                            let r: NeuronRelaxation<f64> = relax.neuron(i);
                            let upper = (w >= 0.0) == (sense == Sense::Maximize);
                            w * if upper { r.upper(y[i]) } else { r.lower(y[i]) }
                        })
                        .sum::<f64>()
                        + layers[1].bias[j];
                    assert!((qf.eval(x.view()) - direct).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zeroed_curvature_equals_linear_crown() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let net = random_relu(&mut rng, &[5, 20, 4]);
        let ball = BallSpec::new(&[0.1, 0.2, 0.3, 0.4, 0.5], 0.2, Norm::Linf).unwrap();
        let sweep = layer_sweep(&net, &ball, ReluLowerStrategy::Adaptive).unwrap();
        let planes = backward_plane(net.layers(), &sweep.relaxations, &OutputSelector::Identity).unwrap();
        let (gl, gu) = global_bounds(&planes, &ball).unwrap();
        let relax = sweep.relaxations[0].without_curvature();
        for j in 0..4 {
            let lo = build_quadratic(&net, j, &sweep.bounds, &relax, &ball, Sense::Minimize).unwrap();
            let hi = build_quadratic(&net, j, &sweep.bounds, &relax, &ball, Sense::Maximize).unwrap();
            let lo = pgd_optimize(&lo, &PgdConfig::default()).unwrap().bound;
            let hi = pgd_optimize(&hi, &PgdConfig::default()).unwrap().bound;
            assert!((lo - gl[j]).abs() < 1e-10 && (hi - gu[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn quad_bounds_are_sound_and_exact_at_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let net = random_relu(&mut rng, &[3, 20, 20, 2]);
        let x0 = [0.3, -0.6, 0.1];
        let point = BallSpec::new(&x0, 0.0, Norm::L2).unwrap();
        let f = net.forward(&x0).unwrap();
        let (gl, gu) = crown_quad_bounds(&net, &point, &PgdConfig::default()).unwrap();
        for j in 0..2 {
            assert!((gl[j] - f[j]).abs() < 1e-12 && (gu[j] - f[j]).abs() < 1e-12);
        }
        let ball = BallSpec::new(&x0, 0.3, Norm::Linf).unwrap();
        let (gl, gu) = crown_quad_bounds(&net, &ball, &PgdConfig::default()).unwrap();
        for _ in 0..5000 {
            let x = Array1::from_shape_fn(3, |i| x0[i] + rng.random_range(-0.3..0.3));
            let f = net.forward(x.as_slice().unwrap()).unwrap();
            for j in 0..2 {
                assert!(gl[j] - 1e-8 <= f[j] && f[j] <= gu[j] + 1e-8);
            }
        }
    }
}
