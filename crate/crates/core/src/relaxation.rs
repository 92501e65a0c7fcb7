//! Per-neuron linear and quadratic relaxations of the activation function
//! on a pre-activation interval `[l, u]`.
//!
//! Every relaxation is a pair `h_L(y) = η_L y² + α_L y + δ_L` and
//! `h_U(y) = η_U y² + α_U y + δ_U` with `h_L ≤ σ ≤ h_U` on `[l, u]`.
//! Intercepts are stored as the products `δ = α·β` so that near-zero slopes
//! never get divided by.

use ndarray::{Array1, ArrayView1};

use crate::error::{CrownError, Result};
use crate::model::Activation;
use crate::scalar::Scalar;

/// Default residual tolerance of the tangent-point bisection.
pub const TANGENT_TOL: f64 = 1e-9;
/// Iteration cap of the tangent-point bisection.
pub const TANGENT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronRelaxation<T> {
    pub alpha_u: T,
    pub delta_u: T,
    pub alpha_l: T,
    pub delta_l: T,
    pub eta_u: T,
    pub eta_l: T,
}

impl<T: Scalar> NeuronRelaxation<T> {
    pub fn linear(alpha_u: T, delta_u: T, alpha_l: T, delta_l: T) -> Self {
        NeuronRelaxation {
            alpha_u,
            delta_u,
            alpha_l,
            delta_l,
            eta_u: T::zero(),
            eta_l: T::zero(),
        }
    }

    /// Both bounds equal to the constant `c`.
    pub fn constant(c: T) -> Self {
        Self::linear(T::zero(), c, T::zero(), c)
    }

    pub fn upper(&self, y: T) -> T {
        self.eta_u * y * y + self.alpha_u * y + self.delta_u
    }

    pub fn lower(&self, y: T) -> T {
        self.eta_l * y * y + self.alpha_l * y + self.delta_l
    }

    pub fn is_linear(&self) -> bool {
        self.eta_u == T::zero() && self.eta_l == T::zero()
    }
}

/// Relaxations of one layer, stored column-wise for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRelaxation<T> {
    pub alpha_u: Array1<T>,
    pub delta_u: Array1<T>,
    pub alpha_l: Array1<T>,
    pub delta_l: Array1<T>,
    pub eta_u: Array1<T>,
    pub eta_l: Array1<T>,
}

impl<T: Scalar> LayerRelaxation<T> {
    pub fn from_neurons(neurons: &[NeuronRelaxation<T>]) -> Self {
        let col = |f: fn(&NeuronRelaxation<T>) -> T| neurons.iter().map(f).collect::<Array1<T>>();
        LayerRelaxation {
            alpha_u: col(|r| r.alpha_u),
            delta_u: col(|r| r.delta_u),
            alpha_l: col(|r| r.alpha_l),
            delta_l: col(|r| r.delta_l),
            eta_u: col(|r| r.eta_u),
            eta_l: col(|r| r.eta_l),
        }
    }

    pub fn len(&self) -> usize {
        self.alpha_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_u.is_empty()
    }

    pub fn neuron(&self, i: usize) -> NeuronRelaxation<T> {
        NeuronRelaxation {
            alpha_u: self.alpha_u[i],
            delta_u: self.delta_u[i],
            alpha_l: self.alpha_l[i],
            delta_l: self.delta_l[i],
            eta_u: self.eta_u[i],
            eta_l: self.eta_l[i],
        }
    }

    pub fn neurons(&self) -> Vec<NeuronRelaxation<T>> {
        (0..self.len()).map(|i| self.neuron(i)).collect()
    }

    pub fn is_linear(&self) -> bool {
        self.eta_u.iter().chain(self.eta_l.iter()).all(|&e| e == T::zero())
    }

    /// Same slopes and intercepts with every curvature set to zero.
    pub fn without_curvature(&self) -> Self {
        LayerRelaxation {
            eta_u: Array1::zeros(self.len()),
            eta_l: Array1::zeros(self.len()),
            ..self.clone()
        }
    }
}

/// Sign class of a pre-activation interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// `0 ≤ l ≤ u`
    Pos,
    /// `l ≤ u ≤ 0`
    Neg,
    /// `l < 0 < u`
    Mixed,
}

/// Lower-bound slope choice for unstable ReLU neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReluLowerStrategy {
    /// Same slope as the upper bound, `u / (u − l)`.
    FastLin,
    /// Slope 1 when `u ≥ |l|`, else 0: whichever leaves the smaller area.
    #[default]
    Adaptive,
}

/// Which side of zero the tangent point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentSide {
    NonNeg,
    NonPos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TangentSearch<T> {
    Found { point: T, residual: T, iterations: usize },
    /// No tangency inside the bracket; callers fall back to the chord.
    Escaped,
}

/// `(σ(y), σ'(y))`.
pub fn activation_eval<T: Scalar>(act: Activation, y: T) -> (T, T) {
    (act.value(y), act.derivative(y))
}

fn check_interval<T: Scalar>(l: T, u: T) -> Result<()> {
    if !l.is_finite() || !u.is_finite() {
        return Err(CrownError::InvalidArgument(format!(
            "non-finite interval [{l}, {u}]"
        )));
    }
    if l > u {
        return Err(CrownError::InvalidArgument(format!(
            "interval lower end {l} exceeds upper end {u}"
        )));
    }
    Ok(())
}

pub fn segment<T: Scalar>(l: T, u: T) -> Result<Segment> {
    check_interval(l, u)?;
    Ok(if l >= T::zero() {
        Segment::Pos
    } else if u <= T::zero() {
        Segment::Neg
    } else {
        Segment::Mixed
    })
}

pub fn relu_relaxation<T: Scalar>(
    l: T,
    u: T,
    strategy: ReluLowerStrategy,
) -> Result<NeuronRelaxation<T>> {
    Ok(match segment(l, u)? {
        Segment::Pos => NeuronRelaxation::linear(T::one(), T::zero(), T::one(), T::zero()),
        Segment::Neg => NeuronRelaxation::linear(T::zero(), T::zero(), T::zero(), T::zero()),
        Segment::Mixed => {
            let slope = u / (u - l);
            let lower = match strategy {
                ReluLowerStrategy::FastLin => slope,
                ReluLowerStrategy::Adaptive => {
                    if u >= -l {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
            };
            NeuronRelaxation::linear(slope, -l * slope, lower, T::zero())
        }
    })
}

/// Linear upper chord with the parabola `y (y − l) / (u − l)` as lower
/// bound, which touches ReLU at `l`, `0` and `u`.
pub fn relu_quadratic_lower<T: Scalar>(l: T, u: T) -> Result<NeuronRelaxation<T>> {
    if segment(l, u)? != Segment::Mixed {
        return Err(CrownError::InvalidArgument(format!(
            "quadratic lower bound needs an interval straddling zero, got [{l}, {u}]"
        )));
    }
    let width = u - l;
    let slope = u / width;
    Ok(NeuronRelaxation {
        alpha_u: slope,
        delta_u: -l * slope,
        alpha_l: -l / width,
        delta_l: T::zero(),
        eta_u: T::zero(),
        eta_l: T::one() / width,
    })
}

/// `g(d) = (σ(d) − σ(y0)) / (d − y0) − σ'(d)`; zero at a tangent point
/// whose tangent line passes through the anchor.
pub fn tangent_residual<T: Scalar>(act: Activation, anchor: T, d: T) -> T {
    let (s_d, ds_d) = activation_eval(act, d);
    (s_d - act.value(anchor)) / (d - anchor) - ds_d
}

/// Bisection for the tangent point through `(anchor, σ(anchor))`.
///
/// The bracket is `[0, outer]` for [`TangentSide::NonNeg`] (anchor is the
/// left end `l < 0`) and `[outer, 0]` for [`TangentSide::NonPos`] (anchor is
/// the right end `u > 0`). The returned point always sits on the zero side of
/// the root, where `g ≤ 0`, so its tangent slope is never smaller than the
/// exact one and the resulting line stays sound.
pub fn tangent_point_search<T: Scalar>(
    act: Activation,
    anchor: T,
    side: TangentSide,
    outer: T,
    tol: T,
) -> Result<TangentSearch<T>> {
    if !act.is_s_shaped() {
        return Err(CrownError::Unsupported(format!(
            "tangent search needs an s-shaped activation, got {act}"
        )));
    }
    if tol.is_nan() || tol <= T::zero() {
        return Err(CrownError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !anchor.is_finite() || !outer.is_finite() {
        return Err(CrownError::InvalidArgument("non-finite search bracket".into()));
    }
    let bracket_ok = match side {
        TangentSide::NonNeg => outer >= T::zero(),
        TangentSide::NonPos => outer <= T::zero(),
    };
    if !bracket_ok {
        return Err(CrownError::InvalidArgument(format!(
            "bracket end {outer} is on the wrong side of zero"
        )));
    }
    if outer == T::zero() {
        return Ok(TangentSearch::Escaped);
    }
    let anchor_ok = match side {
        TangentSide::NonNeg => anchor < T::zero(),
        TangentSide::NonPos => anchor > T::zero(),
    };
    if !anchor_ok {
        return Err(CrownError::InvalidArgument(format!(
            "anchor {anchor} must lie strictly on the opposite side of the bracket"
        )));
    }

    if tangent_residual(act, anchor, outer) <= T::zero() {
        return Ok(TangentSearch::Escaped);
    }
    let mut inner = T::zero();
    let mut outer = outer;
    let mut g_inner = tangent_residual(act, anchor, inner);
    if g_inner > T::zero() {
        // Only rounding can put the root this close to zero; σ'(0) is the
        // steepest slope, so the line through the anchor is still an upper
        // (resp. lower) bound.
        return Ok(TangentSearch::Found {
            point: inner,
            residual: g_inner,
            iterations: 0,
        });
    }
    let two = T::one() + T::one();
    let mut iterations = 0;
    while iterations < TANGENT_MAX_ITERS && g_inner.abs() > tol {
        let mid = (inner + outer) / two;
        if mid == inner || mid == outer {
            break;
        }
        iterations += 1;
        let g_mid = tangent_residual(act, anchor, mid);
        if g_mid <= T::zero() {
            inner = mid;
            g_inner = g_mid;
        } else {
            outer = mid;
        }
    }
    Ok(TangentSearch::Found {
        point: inner,
        residual: g_inner,
        iterations,
    })
}

fn chord<T: Scalar>(act: Activation, l: T, u: T) -> T {
    (act.value(u) - act.value(l)) / (u - l)
}

pub fn sshaped_relaxation<T: Scalar>(act: Activation, l: T, u: T) -> Result<NeuronRelaxation<T>> {
    if !act.is_s_shaped() {
        return Err(CrownError::Unsupported(format!(
            "s-shaped relaxation requested for {act}"
        )));
    }
    check_interval(l, u)?;
    if l == u {
        return Ok(NeuronRelaxation::constant(act.value(l)));
    }
    let (s_l, s_u) = (act.value(l), act.value(u));
    let tangent_at = |d: T| {
        let (s, ds) = activation_eval(act, d);
        (ds, s - ds * d)
    };
    let two = T::one() + T::one();
    let tol = T::lit(TANGENT_TOL);
    Ok(match segment(l, u)? {
        Segment::Pos => {
            let (a_u, d_u) = tangent_at((l + u) / two);
            let a_l = chord(act, l, u);
            NeuronRelaxation::linear(a_u, d_u, a_l, s_l - a_l * l)
        }
        Segment::Neg => {
            let (a_l, d_l) = tangent_at((l + u) / two);
            let a_u = chord(act, l, u);
            NeuronRelaxation::linear(a_u, s_l - a_u * l, a_l, d_l)
        }
        Segment::Mixed => {
            let a_u = match tangent_point_search(act, l, TangentSide::NonNeg, u, tol)? {
                TangentSearch::Found { point, .. } => act.derivative(point),
                TangentSearch::Escaped => chord(act, l, u),
            };
            let a_l = match tangent_point_search(act, u, TangentSide::NonPos, l, tol)? {
                TangentSearch::Found { point, .. } => act.derivative(point),
                TangentSearch::Escaped => chord(act, l, u),
            };
            NeuronRelaxation::linear(a_u, s_l - a_u * l, a_l, s_u - a_l * u)
        }
    })
}

/// Linear relaxation of one neuron for any supported activation.
pub fn relax_neuron<T: Scalar>(
    act: Activation,
    l: T,
    u: T,
    strategy: ReluLowerStrategy,
) -> Result<NeuronRelaxation<T>> {
    check_interval(l, u)?;
    if l == u {
        return Ok(NeuronRelaxation::constant(act.value(l)));
    }
    match act {
        Activation::Relu => relu_relaxation(l, u, strategy),
        _ => sshaped_relaxation(act, l, u),
    }
}

/// ReLU relaxation with the quadratic lower bound on unstable neurons and
/// the exact linear forms elsewhere.
pub fn relax_neuron_quadratic<T: Scalar>(l: T, u: T) -> Result<NeuronRelaxation<T>> {
    check_interval(l, u)?;
    if l == u {
        return Ok(NeuronRelaxation::constant(l.max(T::zero())));
    }
    match segment(l, u)? {
        Segment::Mixed => relu_quadratic_lower(l, u),
        _ => relu_relaxation(l, u, ReluLowerStrategy::Adaptive),
    }
}

pub fn relax_layer<T: Scalar>(
    act: Activation,
    lower: ArrayView1<T>,
    upper: ArrayView1<T>,
    strategy: ReluLowerStrategy,
) -> Result<LayerRelaxation<T>> {
    if lower.len() != upper.len() {
        return Err(CrownError::Dimension {
            expected: lower.len(),
            got: upper.len(),
        });
    }
    let neurons = lower
        .iter()
        .zip(upper.iter())
        .map(|(&l, &u)| relax_neuron(act, l, u, strategy))
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerRelaxation::from_neurons(&neurons))
}
