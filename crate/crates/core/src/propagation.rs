//! Backward accumulation of bounding planes and the layer-by-layer sweep
//! that produces pre-activation bounds.
//!
//! For every output row `j` the pass builds two input-space linear
//! functions `f^L_j(x) ≤ f_j(x) ≤ f^U_j(x)` valid on the perturbation ball,
//! then closes them over the ball with the dual norm.

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{CrownError, Result};
use crate::model::{Layer, Network};
use crate::norm::BallSpec;
use crate::relaxation::{relax_layer, LayerRelaxation, ReluLowerStrategy};
use crate::scalar::Scalar;

/// Input-space planes bounding each selected output.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingPlanes<T> {
    /// Upper-plane coefficients, one row per output (`n_out × n_0`).
    pub upper_coeffs: Array2<T>,
    /// Lower-plane coefficients (`n_out × n_0`).
    pub lower_coeffs: Array2<T>,
    pub upper_bias: Array1<T>,
    pub lower_bias: Array1<T>,
}

impl<T: Scalar> BoundingPlanes<T> {
    pub fn outputs(&self) -> usize {
        self.upper_bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.upper_coeffs.ncols()
    }

    pub fn upper_at(&self, x: ArrayView1<T>) -> Array1<T> {
        self.upper_coeffs.dot(&x) + &self.upper_bias
    }

    pub fn lower_at(&self, x: ArrayView1<T>) -> Array1<T> {
        self.lower_coeffs.dot(&x) + &self.lower_bias
    }
}

/// Pre-activation intervals for hidden layers `1..m-1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerBounds<T> {
    pub lower: Vec<Array1<T>>,
    pub upper: Vec<Array1<T>>,
}

impl<T: Scalar> LayerBounds<T> {
    pub fn layers(&self) -> usize {
        self.lower.len()
    }

    /// Post-activation box of hidden layer `k` (1-based) for monotone `σ`.
    pub fn post_activation(&self, k: usize, act: crate::model::Activation) -> (Array1<T>, Array1<T>) {
        (
            self.lower[k - 1].mapv(|v| act.value(v)),
            self.upper[k - 1].mapv(|v| act.value(v)),
        )
    }
}

/// Which linear combinations of the last layer's outputs to bound.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputSelector<T> {
    /// Every output of the last layer.
    Identity,
    /// Rows of a `n_sel × n_out` matrix, e.g. `e_j` or `e_c − e_t`.
    Rows(Array2<T>),
}

/// Result of the sweep over hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep<T> {
    pub bounds: LayerBounds<T>,
    pub relaxations: Vec<LayerRelaxation<T>>,
}

/// Replaces `coeffs` (holding `Λ^(k+1) W^(k+1)`) by `Λ^(k)` and returns the
/// intercept contribution `Σ_i (Λ^(k+1) W^(k+1))_{j,i} δ_i` of every row.
///
/// A non-negative coefficient takes the upper relaxation in the upper
/// family and the lower relaxation in the lower family.
fn apply_relaxation<T: Scalar>(
    coeffs: &mut Array2<T>,
    relax: &LayerRelaxation<T>,
    upper_family: bool,
) -> Array1<T> {
    let (hi_slope, hi_delta, lo_slope, lo_delta) = if upper_family {
        (&relax.alpha_u, &relax.delta_u, &relax.alpha_l, &relax.delta_l)
    } else {
        (&relax.alpha_l, &relax.delta_l, &relax.alpha_u, &relax.delta_u)
    };
    let mut intercept = Array1::zeros(coeffs.nrows());
    Zip::from(coeffs.rows_mut())
        .and(&mut intercept)
        .for_each(|mut row, acc| {
            let mut sum = T::zero();
            Zip::from(&mut row)
                .and(hi_slope)
                .and(hi_delta)
                .and(lo_slope)
                .and(lo_delta)
                .for_each(|g, &hs, &hd, &ls, &ld| {
                    let v = *g;
                    if v >= T::zero() {
                        sum += v * hd;
                        *g = v * hs;
                    } else {
                        sum += v * ld;
                        *g = v * ls;
                    }
                });
            *acc = sum;
        });
    intercept
}

fn backward_family<T: Scalar>(
    layers: &[Layer<T>],
    relax: &[LayerRelaxation<T>],
    selector: &OutputSelector<T>,
    upper_family: bool,
) -> (Array2<T>, Array1<T>) {
    let last = layers.len() - 1;
    // coeffs holds Λ^(k+1) W^(k+1) at the top of each step.
    let (mut coeffs, mut bias) = match selector {
        OutputSelector::Identity => (layers[last].weight.clone(), layers[last].bias.clone()),
        OutputSelector::Rows(c) => (c.dot(&layers[last].weight), c.dot(&layers[last].bias)),
    };
    for k in (0..last).rev() {
        // Hidden layer k+1 (1-based): relaxation relax[k], affine layers[k].
        let intercept = apply_relaxation(&mut coeffs, &relax[k], upper_family);
        bias = bias + intercept + coeffs.dot(&layers[k].bias);
        if coeffs.iter().all(|&v| v == T::zero()) {
            let n0 = layers[0].inputs();
            return (Array2::zeros((coeffs.nrows(), n0)), bias);
        }
        coeffs = coeffs.dot(&layers[k].weight);
    }
    (coeffs, bias)
}

/// Builds the bounding planes of the network formed by `layers`, using
/// `relax[k]` for hidden layer `k + 1`. All relaxations must be linear.
pub fn backward_plane<T: Scalar>(
    layers: &[Layer<T>],
    relax: &[LayerRelaxation<T>],
    selector: &OutputSelector<T>,
) -> Result<BoundingPlanes<T>> {
    if layers.is_empty() {
        return Err(CrownError::Shape("no layers to propagate through".into()));
    }
    if relax.len() + 1 != layers.len() {
        return Err(CrownError::Shape(format!(
            "{} layers need {} relaxation layers, got {}",
            layers.len(),
            layers.len() - 1,
            relax.len()
        )));
    }
    for (k, r) in relax.iter().enumerate() {
        if r.len() != layers[k].outputs() {
            return Err(CrownError::Shape(format!(
                "relaxation for hidden layer {} has {} neurons, layer has {}",
                k + 1,
                r.len(),
                layers[k].outputs()
            )));
        }
        if !r.is_linear() {
            return Err(CrownError::InvalidArgument(
                "backward planes need linear relaxations".into(),
            ));
        }
    }
    if let OutputSelector::Rows(c) = selector {
        let n_out = layers[layers.len() - 1].outputs();
        if c.ncols() != n_out {
            return Err(CrownError::Dimension {
                expected: n_out,
                got: c.ncols(),
            });
        }
    }
    let (upper_coeffs, upper_bias) = backward_family(layers, relax, selector, true);
    let (lower_coeffs, lower_bias) = backward_family(layers, relax, selector, false);
    Ok(BoundingPlanes {
        upper_coeffs,
        lower_coeffs,
        upper_bias,
        lower_bias,
    })
}

/// Closed-form extrema of the planes over the ball:
/// `γ_U = ε‖Λ_j‖_q + Λ_j x0 + b^U_j` and `γ_L = −ε‖Ω_j‖_q + Ω_j x0 + b^L_j`.
pub fn global_bounds<T: Scalar>(
    planes: &BoundingPlanes<T>,
    ball: &BallSpec<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    if planes.input_dim() != ball.dim() {
        return Err(CrownError::Dimension {
            expected: planes.input_dim(),
            got: ball.dim(),
        });
    }
    let eps = ball.radius;
    let q = ball.norm.dual();
    let upper_spread = planes.upper_coeffs.rows().into_iter().map(|r| eps * q.of(r));
    let lower_spread = planes.lower_coeffs.rows().into_iter().map(|r| eps * q.of(r));
    let gamma_u = planes.upper_at(ball.center.view()) + &upper_spread.collect::<Array1<T>>();
    let gamma_l = planes.lower_at(ball.center.view()) - &lower_spread.collect::<Array1<T>>();
    Ok((gamma_l, gamma_u))
}

/// Computes pre-activation bounds of hidden layers `1..m-1` in order,
/// relaxing each layer before moving on to the next.
pub fn layer_sweep<T: Scalar>(
    net: &Network<T>,
    ball: &BallSpec<T>,
    strategy: ReluLowerStrategy,
) -> Result<Sweep<T>> {
    layer_sweep_with(net, ball, |act, l, u| relax_layer(act, l, u, strategy))
}

/// [`layer_sweep`] with a caller-supplied relaxation rule.
pub fn layer_sweep_with<T, F>(net: &Network<T>, ball: &BallSpec<T>, mut relax: F) -> Result<Sweep<T>>
where
    T: Scalar,
    F: FnMut(crate::model::Activation, ArrayView1<T>, ArrayView1<T>) -> Result<LayerRelaxation<T>>,
{
    if ball.dim() != net.input_dim() {
        return Err(CrownError::Dimension {
            expected: net.input_dim(),
            got: ball.dim(),
        });
    }
    let layers = net.layers();
    let hidden = layers.len() - 1;
    let mut sweep = Sweep {
        bounds: LayerBounds::default(),
        relaxations: Vec::with_capacity(hidden),
    };
    for k in 1..=hidden {
        let planes = backward_plane(&layers[..k], &sweep.relaxations, &OutputSelector::Identity)?;
        let (mut lo, mut hi) = global_bounds(&planes, ball)?;
        // Both families bound the same quantity; only rounding can cross them.
        Zip::from(&mut lo).and(&mut hi).for_each(|l, u| {
            if *l > *u {
                std::mem::swap(l, u);
            }
        });
        let r = relax(net.activation(), lo.view(), hi.view())?;
        sweep.bounds.lower.push(lo);
        sweep.bounds.upper.push(hi);
        sweep.relaxations.push(r);
    }
    Ok(sweep)
}

/// Global output bounds `(γ_L, γ_U)` of `net` over `ball`.
pub fn output_bounds<T: Scalar>(
    net: &Network<T>,
    ball: &BallSpec<T>,
    strategy: ReluLowerStrategy,
) -> Result<(Array1<T>, Array1<T>)> {
    let sweep = layer_sweep(net, ball, strategy)?;
    let planes = backward_plane(net.layers(), &sweep.relaxations, &OutputSelector::Identity)?;
    global_bounds(&planes, ball)
}
