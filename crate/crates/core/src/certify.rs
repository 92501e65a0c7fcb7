//! Fixed-ε margin verification and binary search for certified radii.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CrownError, Result};
use crate::model::{argmax, Activation, Network};
use crate::norm::{BallSpec, Norm};
use crate::propagation::{backward_plane, global_bounds, layer_sweep, OutputSelector};
use crate::quad::{crown_quad_margin, PgdConfig};
use crate::relaxation::ReluLowerStrategy;
use crate::scalar::Scalar;

/// Bounding method used to certify a margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// ReLU only; lower slope equal to the upper slope.
    #[serde(rename = "fastlin")]
    FastLin,
    /// ReLU only; lower slope chosen per neuron from {0, 1}.
    CrownAda,
    /// Any supported activation; equals `CrownAda` on ReLU networks.
    CrownGeneral,
    /// ReLU only; quadratic lower bound on the last hidden layer.
    CrownQuad,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FastLin, Method::CrownAda, Method::CrownGeneral, Method::CrownQuad];

    pub fn name(self) -> &'static str {
        match self {
            Method::FastLin => "fastlin",
            Method::CrownAda => "crown-ada",
            Method::CrownGeneral => "crown-general",
            Method::CrownQuad => "crown-quad",
        }
    }

    pub fn supports(self, act: Activation) -> bool {
        self == Method::CrownGeneral || act == Activation::Relu
    }

    pub fn check(self, act: Activation) -> Result<()> {
        if self.supports(act) {
            Ok(())
        } else {
            Err(CrownError::MethodActivation {
                method: self.name().into(),
                activation: act.name().into(),
            })
        }
    }

    pub fn relu_strategy(self) -> ReluLowerStrategy {
        match self {
            Method::FastLin => ReluLowerStrategy::FastLin,
            _ => ReluLowerStrategy::Adaptive,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CrownError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| CrownError::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Binary-search controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig<T> {
    pub eps_init: T,
    pub rel_tol: T,
    pub max_doublings: usize,
    pub max_bisections: usize,
}

impl<T: Scalar> Default for SearchConfig<T> {
    fn default() -> Self {
        SearchConfig {
            eps_init: T::lit(0.05),
            rel_tol: T::lit(1e-3),
            max_doublings: 20,
            max_bisections: 40,
        }
    }
}

impl<T: Scalar> SearchConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_init > T::zero()
            && self.eps_init.is_finite()
            && self.rel_tol > T::zero()
            && self.rel_tol < T::one()
            && self.max_doublings > 0
            && self.max_bisections > 0;
        if ok {
            Ok(())
        } else {
            Err(CrownError::InvalidArgument(format!("invalid search configuration {self:?}")))
        }
    }
}

/// One probe of the binary search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe<T> {
    pub eps: T,
    pub margin: T,
}

impl<T: Scalar> Probe<T> {
    pub fn certified(&self) -> bool {
        self.margin > T::zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationResult<T> {
    pub target: usize,
    pub method: Method,
    pub norm: Norm,
    /// Largest ε whose margin bound was observed positive (0 if none).
    pub radius: T,
    /// Number of margin evaluations.
    pub iterations: usize,
    pub trace: Vec<Probe<T>>,
    /// The margin stayed positive through every doubling.
    pub capped: bool,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UntargetedResult<T> {
    pub radius: T,
    /// Class attaining the minimum radius.
    pub target: usize,
    pub per_target: Vec<CertificationResult<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    RunnerUp,
    Random(u64),
    Least,
}

/// All knobs that influence a certification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certifier<T> {
    pub method: Method,
    pub search: SearchConfig<T>,
    pub pgd: PgdConfig<T>,
}

impl<T: Scalar> Certifier<T> {
    pub fn new(method: Method) -> Self {
        Certifier {
            method,
            search: SearchConfig::default(),
            pgd: PgdConfig::default(),
        }
    }

    pub fn with_search(mut self, search: SearchConfig<T>) -> Self {
        self.search = search;
        self
    }

    /// Certified lower bound of `f_c − f_t` over `ball`.
    pub fn margin(&self, net: &Network<T>, c: usize, t: usize, ball: &BallSpec<T>) -> Result<T> {
        self.method.check(net.activation())?;
        if ball.dim() != net.input_dim() {
            return Err(CrownError::Dimension {
                expected: net.input_dim(),
                got: ball.dim(),
            });
        }
        if self.method == Method::CrownQuad {
            return crown_quad_margin(net, c, t, ball, &self.pgd);
        }
        let margin = net.margin_network(c, t)?;
        let sweep = layer_sweep(&margin, ball, self.method.relu_strategy())?;
        let planes = backward_plane(margin.layers(), &sweep.relaxations, &OutputSelector::Identity)?;
        let (lower, _) = global_bounds(&planes, ball)?;
        Ok(lower[0])
    }

    /// Largest certified radius against target `t`.
    pub fn radius_targeted(
        &self,
        net: &Network<T>,
        x0: &[T],
        c: usize,
        t: usize,
        norm: Norm,
    ) -> Result<CertificationResult<T>> {
        self.search.validate()?;
        self.method.check(net.activation())?;
        let start = Instant::now();
        let ball = BallSpec::new(x0, T::zero(), norm)?;
        let mut trace = Vec::new();
        let probe = |eps: T, trace: &mut Vec<Probe<T>>| -> Result<bool> {
            let margin = self.margin(net, c, t, &ball.with_radius(eps)?)?;
            if margin.is_nan() {
                return Err(CrownError::Value(format!("margin bound is NaN at ε = {eps}")));
            }
            let p = Probe { eps, margin };
            trace.push(p);
            Ok(p.certified())
        };

        let cfg = &self.search;
        let two = T::lit(2.0);
        let mut lo = T::zero();
        let mut hi: Option<T> = None;
        let mut capped = false;
        if probe(cfg.eps_init, &mut trace)? {
            lo = cfg.eps_init;
            let mut eps = cfg.eps_init;
            for _ in 0..cfg.max_doublings {
                eps *= two;
                if probe(eps, &mut trace)? {
                    lo = eps;
                } else {
                    hi = Some(eps);
                    break;
                }
            }
            capped = hi.is_none();
        } else {
            hi = Some(cfg.eps_init);
            let mut eps = cfg.eps_init;
            for _ in 0..cfg.max_doublings {
                eps /= two;
                if probe(eps, &mut trace)? {
                    lo = eps;
                    break;
                }
                hi = Some(eps);
            }
        }
        if lo > T::zero() {
            if let Some(mut h) = hi {
                for _ in 0..cfg.max_bisections {
                    if (h - lo) / h <= cfg.rel_tol {
                        break;
                    }
                    let mid = (lo + h) * T::lit(0.5);
                    if probe(mid, &mut trace)? {
                        lo = mid;
                    } else {
                        h = mid;
                    }
                }
            }
        }
        check_monotone(&trace)?;
        Ok(CertificationResult {
            target: t,
            method: self.method,
            norm,
            radius: lo,
            iterations: trace.len(),
            trace,
            capped,
            elapsed: start.elapsed(),
        })
    }

    /// Minimum certified radius over every class other than `c`.
    pub fn radius_untargeted(&self, net: &Network<T>, x0: &[T], c: usize, norm: Norm) -> Result<UntargetedResult<T>> {
        let n = net.output_dim();
        if n < 2 {
            return Err(CrownError::InvalidArgument("network has a single output class".into()));
        }
        let per_target = (0..n)
            .filter(|&t| t != c)
            .map(|t| self.radius_targeted(net, x0, c, t, norm))
            .collect::<Result<Vec<_>>>()?;
        let best = per_target
            .iter()
            .min_by(|a, b| a.radius.partial_cmp(&b.radius).unwrap_or(std::cmp::Ordering::Equal))
            .expect("at least one target");
        Ok(UntargetedResult {
            radius: best.radius,
            target: best.target,
            per_target: per_target.clone(),
        })
    }
}

/// Every certified probe must sit below every failed probe.
fn check_monotone<T: Scalar>(trace: &[Probe<T>]) -> Result<()> {
    let max_ok = trace.iter().filter(|p| p.certified()).map(|p| p.eps).fold(None, |m: Option<T>, e| {
        Some(m.map_or(e, |m| m.max(e)))
    });
    let min_fail = trace.iter().filter(|p| !p.certified()).map(|p| p.eps).fold(None, |m: Option<T>, e| {
        Some(m.map_or(e, |m| m.min(e)))
    });
    match (max_ok, min_fail) {
        (Some(ok), Some(fail)) if ok >= fail => Err(CrownError::NonMonotone(format!(
            "margin bound is positive at ε = {ok} but non-positive at smaller ε = {fail}"
        ))),
        _ => Ok(()),
    }
}

/// Certified lower bound of `f_c − f_t` over `ball` with default settings.
pub fn certify_margin<T: Scalar>(net: &Network<T>, c: usize, t: usize, ball: &BallSpec<T>, method: Method) -> Result<T> {
    Certifier::new(method).margin(net, c, t, ball)
}

pub fn radius_targeted<T: Scalar>(
    net: &Network<T>,
    x0: &[T],
    c: usize,
    t: usize,
    norm: Norm,
    method: Method,
    cfg: SearchConfig<T>,
) -> Result<CertificationResult<T>> {
    Certifier::new(method).with_search(cfg).radius_targeted(net, x0, c, t, norm)
}

pub fn radius_untargeted<T: Scalar>(
    net: &Network<T>,
    x0: &[T],
    c: usize,
    norm: Norm,
    method: Method,
    cfg: SearchConfig<T>,
) -> Result<UntargetedResult<T>> {
    Certifier::new(method).with_search(cfg).radius_untargeted(net, x0, c, norm)
}

/// Picks a target class relative to the predicted class at `x0`.
pub fn select_target<T: Scalar>(net: &Network<T>, x0: &[T], mode: TargetMode) -> Result<usize> {
    let n = net.output_dim();
    if n < 2 {
        return Err(CrownError::InvalidArgument("network has a single output class".into()));
    }
    let logits = net.forward(x0)?;
    let c = argmax(logits.view());
    let others: Vec<usize> = (0..n).filter(|&t| t != c).collect();
    let pick = match mode {
        TargetMode::RunnerUp => *others
            .iter()
            .max_by(|&&a, &&b| logits[a].partial_cmp(&logits[b]).unwrap().then(b.cmp(&a)))
            .unwrap(),
        TargetMode::Least => *others
            .iter()
            .min_by(|&&a, &&b| logits[a].partial_cmp(&logits[b]).unwrap().then(a.cmp(&b)))
            .unwrap(),
        TargetMode::Random(seed) => others[ChaCha8Rng::seed_from_u64(seed).random_range(0..others.len())],
    };
    Ok(pick)
}
