//! Dense feed-forward networks: representation, file I/O, evaluation and
//! margin-network construction.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{CrownError, Result};
use crate::scalar::Scalar;

/// Identifier written into every weight file.
pub const NETWORK_FORMAT: &str = "crown-net-v1";

/// Hidden-layer activation shared by every hidden layer of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Arctan,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Arctan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Arctan => "arctan",
        }
    }

    /// True for the smooth activations that are convex for y < 0 and
    /// concave for y > 0.
    pub fn is_s_shaped(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    #[inline]
    pub fn value<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => y.max(T::zero()),
            Activation::Tanh => y.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-y).exp()),
            Activation::Arctan => y.atan(),
        }
    }

    /// First derivative; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = y.tanh();
                T::one() - t * t
            }
            Activation::Sigmoid => {
                let s = T::one() / (T::one() + (-y).exp());
                s * (T::one() - s)
            }
            Activation::Arctan => T::one() / (T::one() + y * y),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = CrownError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "arctan" => Ok(Activation::Arctan),
            other => Err(CrownError::UnknownActivation(other.to_string())),
        }
    }
}

/// One affine layer. `weight[[i, j]]` multiplies neuron `j` of the previous
/// layer into neuron `i` of this one.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weight: Array2<T>, bias: Array1<T>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(CrownError::Shape(format!(
                "weight has {} rows but bias has length {}",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.nrows() == 0 || weight.ncols() == 0 {
            return Err(CrownError::Shape("layer with an empty dimension".into()));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(CrownError::Value("non-finite layer parameter".into()));
        }
        Ok(Layer { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// `W z + b`.
    pub fn affine(&self, z: ArrayView1<T>) -> Array1<T> {
        self.weight.dot(&z) + &self.bias
    }
}

/// An m-layer network `f(x) = W_m σ(... σ(W_1 x + b_1) ...) + b_m`.
///
/// The activation applies after layers `1..m-1`; the last layer is affine.
/// Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    activation: Activation,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(activation: Activation, layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CrownError::Shape("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(CrownError::Shape(format!(
                    "layer {} expects {} inputs but layer {} has {} outputs",
                    k + 2,
                    pair[1].inputs(),
                    k + 1,
                    pair[0].outputs()
                )));
            }
        }
        Ok(Network { activation, layers })
    }

    /// Builds a network from row-major nested vectors, validating shapes.
    pub fn from_rows(activation: Activation, layers: Vec<(Vec<Vec<T>>, Vec<T>)>) -> Result<Self> {
        let layers = layers
            .into_iter()
            .enumerate()
            .map(|(k, (rows, bias))| {
                let weight = rows_to_matrix(&rows)
                    .map_err(|e| CrownError::Shape(format!("layer {}: {e}", k + 1)))?;
                Layer::new(weight, Array1::from(bias))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(activation, layers)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Widths `(n_0, n_1, ..., n_m)`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(CrownError::Dimension {
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Array1<T>> {
        self.check_input(x.len())?;
        let mut z = Array1::from(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            z = layer.affine(z.view());
            if k < last {
                z.mapv_inplace(|v| self.activation.value(v));
            }
        }
        Ok(z)
    }

    /// Evaluates every row of `xs` (one input per row).
    pub fn forward_batch(&self, xs: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(xs.ncols())?;
        let mut z = xs.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            z = z.dot(&layer.weight.t());
            z += &layer.bias.view().insert_axis(Axis(0));
            if k < last {
                z.mapv_inplace(|v| self.activation.value(v));
            }
        }
        Ok(z)
    }

    /// Pre-activation vectors `y^(1), ..., y^(m)`; the last entry is `f(x)`.
    pub fn pre_activations(&self, x: &[T]) -> Result<Vec<Array1<T>>> {
        self.check_input(x.len())?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut z = Array1::from(x.to_vec());
        for layer in &self.layers {
            let y = layer.affine(z.view());
            z = y.mapv(|v| self.activation.value(v));
            out.push(y);
        }
        Ok(out)
    }

    /// Network whose single output is `f_c(x) - f_t(x)`.
    pub fn margin_network(&self, c: usize, t: usize) -> Result<Network<T>> {
        let n_out = self.output_dim();
        if c >= n_out || t >= n_out {
            return Err(CrownError::InvalidArgument(format!(
                "class index out of range (c={c}, t={t}, outputs={n_out})"
            )));
        }
        if c == t {
            return Err(CrownError::InvalidArgument(
                "margin network needs distinct classes".into(),
            ));
        }
        let last = &self.layers[self.layers.len() - 1];
        let row = &last.weight.row(c) - &last.weight.row(t);
        let weight = row.insert_axis(Axis(0));
        let bias = Array1::from(vec![last.bias[c] - last.bias[t]]);
        let mut layers = self.layers[..self.layers.len() - 1].to_vec();
        layers.push(Layer { weight, bias });
        Ok(Network {
            activation: self.activation,
            layers,
        })
    }

    /// Index of the largest output at `x`; ties resolve to the lowest index.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(self.forward(x)?.view()))
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            format: NETWORK_FORMAT.to_string(),
            activation: self.activation.name().to_string(),
            output_activation: None,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weight: l
                        .weight
                        .rows()
                        .into_iter()
                        .map(|r| r.iter().map(|v| v.to_f64_lossy()).collect())
                        .collect(),
                    bias: l.bias.iter().map(|v| v.to_f64_lossy()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: NetworkFile) -> Result<Self> {
        if file.format != NETWORK_FORMAT {
            return Err(CrownError::Parse(format!(
                "unsupported format `{}` (expected `{NETWORK_FORMAT}`)",
                file.format
            )));
        }
        if let Some(out) = file.output_activation.as_deref() {
            if !matches!(out, "linear" | "none") {
                return Err(CrownError::Shape(format!(
                    "output layer must be affine, found activation `{out}`"
                )));
            }
        }
        let activation: Activation = file.activation.parse()?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (k, l) in file.layers.into_iter().enumerate() {
            if l.weight.iter().flatten().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(CrownError::Value(format!("layer {} has non-finite entries", k + 1)));
            }
            let rows: Vec<Vec<T>> = l
                .weight
                .iter()
                .map(|r| r.iter().map(|&v| T::lit(v)).collect())
                .collect();
            let weight = rows_to_matrix(&rows)
                .map_err(|e| CrownError::Shape(format!("layer {}: {e}", k + 1)))?;
            let bias = l.bias.iter().map(|&v| T::lit(v)).collect();
            layers.push(Layer::new(weight, bias).map_err(|e| match e {
                CrownError::Shape(msg) => CrownError::Shape(format!("layer {}: {msg}", k + 1)),
                other => other,
            })?);
        }
        Network::new(activation, layers)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| CrownError::Parse(e.to_string()))?;
        Network::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = read_text(path.as_ref())?;
        Network::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| CrownError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Loads and validates a `crown-net-v1` weight file.
pub fn load_network<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    Network::load(path)
}

pub(crate) fn argmax<T: Scalar>(v: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn rows_to_matrix<T: Scalar>(rows: &[Vec<T>]) -> std::result::Result<Array2<T>, String> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
        return Err(format!(
            "weight row {i} has length {} but row 0 has length {n_cols}",
            r.len()
        ));
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((n_rows, n_cols), flat).map_err(|e| e.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CrownError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// On-disk weight-file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_activation: Option<String>,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// A data point to certify.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint<T> {
    pub id: String,
    pub x: Vec<T>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointsFile {
    pub points: Vec<PointEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointEntry {
    pub id: String,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

pub fn points_from_json<T: Scalar>(text: &str) -> Result<Vec<LabeledPoint<T>>> {
    let file: PointsFile =
        serde_json::from_str(text).map_err(|e| CrownError::Parse(e.to_string()))?;
    file.points
        .into_iter()
        .map(|p| {
            if p.x.iter().any(|v| !v.is_finite()) {
                return Err(CrownError::Value(format!("point `{}` has non-finite entries", p.id)));
            }
            Ok(LabeledPoint {
                id: p.id,
                x: p.x.into_iter().map(T::lit).collect(),
                label: p.label,
            })
        })
        .collect()
}

pub fn load_points<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<LabeledPoint<T>>> {
    points_from_json(&read_text(path.as_ref())?)
}

pub fn points_to_json<T: Scalar>(points: &[LabeledPoint<T>]) -> String {
    let file = PointsFile {
        points: points
            .iter()
            .map(|p| PointEntry {
                id: p.id.clone(),
                x: p.x.iter().map(|v| v.to_f64_lossy()).collect(),
                label: p.label,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("points serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn relu_232() -> &'static str {
        r#"{ "format": "crown-net-v1", "activation": "relu",
             "layers": [
               { "weight": [[1.0, -1.0], [0.5, 2.0], [-1.5, 0.25]], "bias": [0.1, 0.0, -0.2] },
               { "weight": [[1.0, 0.0, -1.0], [0.0, 1.0, 1.0]], "bias": [0.0, 0.5] }
             ] }"#
    }

    #[test]
    fn loads_two_layer_relu() {
        let net = Network::<f64>::from_json(relu_232()).unwrap();
        assert_eq!(net.depth(), 2);
        assert_eq!(net.widths(), vec![2, 3, 2]);
        assert_eq!(net.activation(), Activation::Relu);
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = r#"{ "format": "crown-net-v1", "activation": "relu",
            "layers": [ { "weight": [[1.0, 2.0], [1.0]], "bias": [0.0, 0.0] } ] }"#;
        assert!(matches!(Network::<f64>::from_json(text), Err(CrownError::Shape(_))));
    }

    #[test]
    fn rejects_chain_mismatch() {
        let text = r#"{ "format": "crown-net-v1", "activation": "relu",
            "layers": [ { "weight": [[1.0, 2.0]], "bias": [0.0] },
                        { "weight": [[1.0, 2.0]], "bias": [0.0] } ] }"#;
        assert!(matches!(Network::<f64>::from_json(text), Err(CrownError::Shape(_))));
    }

    #[test]
    fn maps_activation_names() {
        let text = relu_232().replace("relu", "tanh");
        assert_eq!(Network::<f64>::from_json(&text).unwrap().activation(), Activation::Tanh);
        let text = relu_232().replace("relu", "softplus");
        assert!(matches!(
            Network::<f64>::from_json(&text),
            Err(CrownError::UnknownActivation(_))
        ));
    }

    #[test]
    fn rejects_non_finite_and_bad_format() {
        let text = relu_232().replace("0.25", "1e999");
        assert!(matches!(Network::<f64>::from_json(&text), Err(CrownError::Parse(_) | CrownError::Value(_))));
        let text = relu_232().replace("crown-net-v1", "other");
        assert!(matches!(Network::<f64>::from_json(&text), Err(CrownError::Parse(_))));
        assert!(matches!(Network::<f64>::from_json("{ nope"), Err(CrownError::Parse(_))));
    }

    #[test]
    fn rejects_trailing_activation() {
        let text = relu_232().replace(
            r#""activation": "relu","#,
            r#""activation": "relu", "output_activation": "relu","#,
        );
        assert!(matches!(Network::<f64>::from_json(&text), Err(CrownError::Shape(_))));
    }

    #[test]
    fn forward_identity_and_hand_relu() {
        let id = Network::from_rows(
            Activation::Relu,
            vec![(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0])],
        )
        .unwrap();
        assert_eq!(id.forward(&[0.3, -0.7]).unwrap(), array![0.3, -0.7]);

        let net = Network::from_rows(
            Activation::Relu,
            vec![
                (vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0]),
                (vec![vec![1.0, 1.0]], vec![0.0]),
            ],
        )
        .unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap(), array![2.0]);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(CrownError::Dimension { .. })));
    }

    #[test]
    fn margin_network_subtracts_rows() {
        let net = Network::from_rows(
            Activation::Relu,
            vec![
                (vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]),
                (vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, -0.5]),
            ],
        )
        .unwrap();
        let g = net.margin_network(0, 1).unwrap();
        let last = &g.layers()[1];
        assert_eq!(last.weight, array![[1.0, -1.0]]);
        assert_eq!(last.bias, array![1.0]);
        assert!(net.margin_network(1, 1).is_err());
        assert!(net.margin_network(0, 2).is_err());
    }

    #[test]
    fn save_load_is_bit_exact() {
        let net = Network::<f64>::from_json(relu_232()).unwrap();
        let mut layers = net.layers().to_vec();
        layers[0].weight[[0, 0]] = 0.1 + 0.2;
        layers[1].bias[1] = std::f64::consts::PI / 7.0;
        let net = Network::new(Activation::Sigmoid, layers).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        let back: Network<f64> = load_network(&path).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn points_parse_with_optional_label() {
        let text = r#"{ "points": [ { "id": "a", "x": [0.5, 1.0], "label": 1 },
                                    { "id": "b", "x": [0.0, 0.0] } ] }"#;
        let pts = points_from_json::<f64>(text).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].label, Some(1));
        assert_eq!(pts[1].label, None);
        let again = points_from_json::<f64>(&points_to_json(&pts)).unwrap();
        assert_eq!(again, pts);
    }

    #[test]
    fn f32_network_evaluates() {
        let net = Network::<f32>::from_json(relu_232()).unwrap();
        let y = net.forward(&[0.5, -0.25]).unwrap();
        let y64 = Network::<f64>::from_json(relu_232()).unwrap().forward(&[0.5, -0.25]).unwrap();
        for (a, b) in y.iter().zip(y64.iter()) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }
}
