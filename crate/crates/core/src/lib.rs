//! Certified lower bounds on adversarial distortion for feed-forward
//! networks with ReLU, tanh, sigmoid or arctan activations.
//!
//! Every hidden neuron is sandwiched between two linear (or, for the last
//! ReLU layer, quadratic) functions of its pre-activation. Those bounds are
//! propagated backward to give affine bounds of every output in the input,
//! which are then closed over an ℓp ball with the dual norm. A binary
//! search over the ball radius turns the margin bound into a certified
//! robustness radius.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type for common use.

pub mod certify;
pub mod error;
pub mod model;
pub mod norm;
pub mod oracles;
pub mod propagation;
pub mod quad;
pub mod relaxation;
pub mod scalar;

pub use certify::{
    certify_margin, radius_targeted, radius_untargeted, select_target, CertificationResult, Certifier, Method, Probe,
    SearchConfig, TargetMode, UntargetedResult,
};
pub use error::{CrownError, Result};
pub use model::{
    load_network, load_points, points_from_json, points_to_json, Activation, LabeledPoint, Layer, LayerFile, Network,
    NetworkFile, PointEntry, PointsFile, NETWORK_FORMAT,
};
pub use norm::{BallSpec, Norm};
pub use oracles::{falsify, grid_exact_bounds, interval_bounds, FalsifierReport};
pub use propagation::{
    backward_plane, global_bounds, layer_sweep, output_bounds, BoundingPlanes, LayerBounds, OutputSelector, Sweep,
};
pub use quad::{crown_quad_bounds, crown_quad_margin, pgd_optimize, PgdConfig, PgdOutcome, QuadraticForm, Sense};
pub use relaxation::{relax_layer, relax_neuron, LayerRelaxation, NeuronRelaxation, ReluLowerStrategy, Segment};
pub use scalar::Scalar;

pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
pub type BallSpec64 = BallSpec<f64>;
pub type BallSpec32 = BallSpec<f32>;
pub type Certifier64 = Certifier<f64>;
pub type Certifier32 = Certifier<f32>;
pub type CertificationResult64 = CertificationResult<f64>;
pub type CertificationResult32 = CertificationResult<f32>;
