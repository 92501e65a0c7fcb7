//! ℓp norms, their duals, and the perturbation ball.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CrownError, Result};
use crate::scalar::Scalar;

/// Perturbation norm `p ∈ {1, 2, ∞}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];

    /// The exponent `q` with `1/p + 1/q = 1`.
    pub fn dual(self) -> Norm {
        match self {
            Norm::L1 => Norm::Linf,
            Norm::L2 => Norm::L2,
            Norm::Linf => Norm::L1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Norm::L1 => "1",
            Norm::L2 => "2",
            Norm::Linf => "inf",
        }
    }

    pub fn of<T: Scalar>(self, v: ArrayView1<T>) -> T {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|&x| x * x).sum::<T>().sqrt(),
            Norm::Linf => v.iter().fold(T::zero(), |m, x| m.max(x.abs())),
        }
    }

    /// `‖v‖_q` for the dual exponent, i.e. `sup { v·y : ‖y‖_p ≤ 1 }`.
    pub fn dual_of<T: Scalar>(self, v: ArrayView1<T>) -> T {
        self.dual().of(v)
    }

    /// A unit-`p`-norm direction `y` attaining `v·y = ‖v‖_q` (Hölder equality).
    pub fn dual_maximizer<T: Scalar>(self, v: ArrayView1<T>) -> Array1<T> {
        let n = v.len();
        match self {
            Norm::Linf => v.mapv(|x| if x >= T::zero() { T::one() } else { -T::one() }),
            Norm::L2 => {
                let len = Norm::L2.of(v);
                if len > T::zero() {
                    v.mapv(|x| x / len)
                } else {
                    let mut e = Array1::zeros(n);
                    if n > 0 {
                        e[0] = T::one();
                    }
                    e
                }
            }
            Norm::L1 => {
                let mut e = Array1::zeros(n);
                if n > 0 {
                    let mut best = 0;
                    for i in 0..n {
                        if v[i].abs() > v[best].abs() {
                            best = i;
                        }
                    }
                    e[best] = if v[best] >= T::zero() { T::one() } else { -T::one() };
                }
                e
            }
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Norm {
    type Err = CrownError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "i" => Ok(Norm::Linf),
            other => Err(CrownError::InvalidArgument(format!("unknown norm `{other}`"))),
        }
    }
}

/// The input region `B_p(x0, ε) = { x : ‖x − x0‖_p ≤ ε }`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec<T> {
    pub center: Array1<T>,
    pub radius: T,
    pub norm: Norm,
}

impl<T: Scalar> BallSpec<T> {
    pub fn new(center: &[T], radius: T, norm: Norm) -> Result<Self> {
        if radius < T::zero() || !radius.is_finite() {
            return Err(CrownError::InvalidArgument(format!(
                "ball radius must be finite and non-negative, got {radius}"
            )));
        }
        Ok(BallSpec {
            center: Array1::from(center.to_vec()),
            radius,
            norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn with_radius(&self, radius: T) -> Result<Self> {
        BallSpec::new(self.center.as_slice().expect("contiguous"), radius, self.norm)
    }

    pub fn contains(&self, x: ArrayView1<T>, slack: T) -> bool {
        let d = &x - &self.center;
        self.norm.of(d.view()) <= self.radius + slack
    }

    /// Euclidean-exact projection for ℓ∞ and ℓ2; ℓ1 uses the sort-based
    /// simplex projection.
    pub fn project(&self, x: ArrayView1<T>) -> Array1<T> {
        let mut d = &x - &self.center;
        let r = self.radius;
        match self.norm {
            Norm::Linf => d.mapv_inplace(|v| v.max(-r).min(r)),
            Norm::L2 => {
                let len = Norm::L2.of(d.view());
                if len > r {
                    let s = if len > T::zero() { r / len } else { T::zero() };
                    d.mapv_inplace(|v| v * s);
                }
            }
            Norm::L1 => d = project_l1(d.view(), r),
        }
        d + &self.center
    }

    /// Scales `x − x0` onto the sphere when it lies outside the ball.
    pub fn pull_inside(&self, x: ArrayView1<T>) -> Array1<T> {
        let d = &x - &self.center;
        let len = self.norm.of(d.view());
        if len > self.radius && len > T::zero() {
            let s = self.radius / len;
            d.mapv(|v| v * s) + &self.center
        } else {
            x.to_owned()
        }
    }
}

fn project_l1<T: Scalar>(v: ArrayView1<T>, r: T) -> Array1<T> {
    if Norm::L1.of(v) <= r {
        return v.to_owned();
    }
    if r <= T::zero() {
        return Array1::zeros(v.len());
    }
    let mut mags: Vec<T> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (i, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - r) / T::from_usize(i + 1).expect("index fits");
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.mapv(|x| {
        let m = (x.abs() - theta).max(T::zero());
        if x >= T::zero() {
            m
        } else {
            -m
        }
    })
}
