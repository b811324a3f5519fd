//! BNN representation, exact propagation, per-neuron constants, and the
//! input domain description.
//!
//! Conventions used across the crate:
//! - layers are numbered 1..=L+1 as in the model definition; `layers[0]`
//!   is layer 1 and `layers[L]` is the output layer,
//! - input vectors are stored as integer numerators over the quantization
//!   denominator `q` (the `y` variables), so every layer-1 comparison is
//!   integer against integer,
//! - the activation maps `a >= 0` to 1 and `a < 0` to 0,
//! - class and neuron indices are 0-based.

use crate::rat::{rat, rat_int, Int, Rat};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major ternary weights, `weights[i][j]` connecting neuron `i` of
    /// this layer to neuron `j` of the previous one.
    pub weights: Vec<Vec<i8>>,
    pub biases: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BnnModel {
    pub format_version: u32,
    /// Quantization denominator: inputs are multiples of 1/q in [0, 1].
    pub q: u32,
    /// Layers 1..=L+1; the last entry is the output layer.
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Norm::L1 => write!(f, "l1"),
            Norm::L2 => write!(f, "l2"),
            Norm::Linf => write!(f, "linf"),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "1" => Ok(Norm::L1),
            "l2" | "2" => Ok(Norm::L2),
            "linf" | "inf" => Ok(Norm::Linf),
            other => Err(format!("unknown norm `{other}` (expected l1, l2, linf)")),
        }
    }
}

/// Anchor input, perturbation radius, norm, and expected class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputSpec {
    /// q-scaled anchor: `anchor[j]` is an integer in 0..=q representing
    /// the rational coordinate anchor[j]/q.
    pub anchor: Vec<i64>,
    pub epsilon: Rat,
    pub norm: Norm,
    /// 0-based index of the expected class.
    pub true_class: usize,
}

/// Per-neuron propagation constants. `r2q` stores R exactly: q*R for
/// layer 1 (an odd integer) and R itself for layers >= 2 (odd as well).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronConstants {
    pub lb: i64,
    pub ub: i64,
    pub r2q: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model must have at least one hidden layer and an output layer")]
    TooFewLayers,
    #[error("layer {layer}: weight entry {value} is not in {{-1, 0, 1}}")]
    NonTernaryWeight { layer: usize, value: i8 },
    #[error("layer {layer}: expected {expected} columns, row {row} has {got}")]
    DimensionMismatch {
        layer: usize,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: {weights} weight rows but {biases} biases")]
    BiasMismatch {
        layer: usize,
        weights: usize,
        biases: usize,
    },
    #[error("layer {layer} is empty")]
    EmptyLayer { layer: usize },
    #[error("quantization denominator q must be positive")]
    BadQ,
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    BadFormatVersion(u32),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("input coordinate {index} = {value} is not in 0..={q}")]
    InputOutOfRange { index: usize, value: i64, q: u32 },
    #[error("input length {got}, model expects {expected}")]
    InputLength { got: usize, expected: usize },
    #[error("epsilon must be non-negative")]
    NegativeEpsilon,
    #[error("true_class {got} out of range for {classes} classes")]
    BadTrueClass { got: usize, classes: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Result of an exact forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Propagation {
    /// Binary hidden activations x^1 .. x^L.
    pub hidden: Vec<Vec<u8>>,
    /// Output-layer values f(x^0); integers since the output layer sees a
    /// binary vector.
    pub output: Vec<i64>,
    /// Argmax of `output`, lowest index on ties.
    pub predicted: usize,
}

impl BnnModel {
    pub fn new(q: u32, layers: Vec<Layer>) -> Result<Self, ModelError> {
        let model = BnnModel {
            format_version: FORMAT_VERSION,
            q,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    /// Number of hidden layers L.
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    /// Neuron counts n^0 .. n^{L+1}.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.layers[0].weights[0].len());
        for layer in &self.layers {
            dims.push(layer.weights.len());
        }
        dims
    }

    pub fn num_inputs(&self) -> usize {
        self.layers[0].weights[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().weights.len()
    }

    /// Width of layer `layer` (0 = input layer).
    pub fn width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.num_inputs()
        } else {
            self.layers[layer - 1].weights.len()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ModelError::BadFormatVersion(self.format_version));
        }
        if self.q == 0 {
            return Err(ModelError::BadQ);
        }
        if self.layers.len() < 2 {
            return Err(ModelError::TooFewLayers);
        }
        let mut prev_width = None;
        for (idx, layer) in self.layers.iter().enumerate() {
            let layer_no = idx + 1;
            if layer.weights.is_empty() || layer.weights[0].is_empty() {
                return Err(ModelError::EmptyLayer { layer: layer_no });
            }
            if layer.weights.len() != layer.biases.len() {
                return Err(ModelError::BiasMismatch {
                    layer: layer_no,
                    weights: layer.weights.len(),
                    biases: layer.biases.len(),
                });
            }
            let expected = prev_width.unwrap_or(layer.weights[0].len());
            for (row, weights) in layer.weights.iter().enumerate() {
                if weights.len() != expected {
                    return Err(ModelError::DimensionMismatch {
                        layer: layer_no,
                        row,
                        expected,
                        got: weights.len(),
                    });
                }
                for &w in weights {
                    if !(-1..=1).contains(&w) {
                        return Err(ModelError::NonTernaryWeight {
                            layer: layer_no,
                            value: w,
                        });
                    }
                }
            }
            prev_width = Some(layer.weights.len());
        }
        Ok(())
    }

    /// LB, UB, and R constants for neuron `neuron` of hidden layer
    /// `layer` (1-based, 1..=L).
    pub fn layer_constants(&self, layer: usize, neuron: usize) -> Result<NeuronConstants, ModelError> {
        if layer == 0 || layer > self.num_hidden() {
            return Err(ModelError::IndexOutOfRange(format!("layer {layer}")));
        }
        let l = &self.layers[layer - 1];
        let row = l
            .weights
            .get(neuron)
            .ok_or_else(|| ModelError::IndexOutOfRange(format!("neuron {neuron} in layer {layer}")))?;
        let bias = l.biases[neuron];
        let mut lb = 0i64;
        let mut ub = 0i64;
        let mut wsum = 0i64;
        for &w in row {
            let w = w as i64;
            lb += w - w.abs();
            ub += w + w.abs();
            wsum += w;
        }
        let r2q = if layer == 1 {
            // q*R = 2*ceil(q*(sum W - b)/2) - 1
            let num = self.q as i64 * (wsum - bias);
            2 * (num.div_euclid(2) + if num.rem_euclid(2) != 0 { 1 } else { 0 }) - 1
        } else {
            // R = 2*ceil((sum W - b)/2) - 1
            let num = wsum - bias;
            2 * (num.div_euclid(2) + if num.rem_euclid(2) != 0 { 1 } else { 0 }) - 1
        };
        Ok(NeuronConstants { lb, ub, r2q })
    }

    /// q-scaled layer-1 pre-activations: q * a^1(y/q) = W(2y - q*1) + q*b,
    /// all integer.
    pub fn affine_first_scaled(&self, y: &[i64]) -> Result<Vec<i64>, ModelError> {
        let layer = &self.layers[0];
        if y.len() != self.num_inputs() {
            return Err(ModelError::InputLength {
                got: y.len(),
                expected: self.num_inputs(),
            });
        }
        let q = self.q as i64;
        Ok(layer
            .weights
            .iter()
            .zip(&layer.biases)
            .map(|(row, &b)| {
                row.iter()
                    .zip(y)
                    .map(|(&w, &yj)| w as i64 * (2 * yj - q))
                    .sum::<i64>()
                    + q * b
            })
            .collect())
    }

    /// Pre-activations a^layer(x) for layer >= 2 on a binary input vector.
    pub fn affine_hidden(&self, layer: usize, x: &[u8]) -> Result<Vec<i64>, ModelError> {
        if layer < 2 || layer > self.layers.len() {
            return Err(ModelError::IndexOutOfRange(format!("layer {layer}")));
        }
        let l = &self.layers[layer - 1];
        if x.len() != l.weights[0].len() {
            return Err(ModelError::InputLength {
                got: x.len(),
                expected: l.weights[0].len(),
            });
        }
        Ok(l.weights
            .iter()
            .zip(&l.biases)
            .map(|(row, &b)| {
                row.iter()
                    .zip(x)
                    .map(|(&w, &xj)| w as i64 * (2 * xj as i64 - 1))
                    .sum::<i64>()
                    + b
            })
            .collect())
    }

    /// a^layer as exact rationals; layer 1 takes the q-scaled input.
    pub fn affine(&self, layer: usize, y_or_x: &[i64]) -> Result<Vec<Rat>, ModelError> {
        if layer == 1 {
            let scaled = self.affine_first_scaled(y_or_x)?;
            Ok(scaled
                .into_iter()
                .map(|v| rat(v as Int, self.q as Int))
                .collect())
        } else {
            let x: Vec<u8> = y_or_x.iter().map(|&v| v as u8).collect();
            Ok(self
                .affine_hidden(layer, &x)?
                .into_iter()
                .map(|v| rat_int(v as Int))
                .collect())
        }
    }

    fn check_input(&self, y: &[i64]) -> Result<(), ModelError> {
        if y.len() != self.num_inputs() {
            return Err(ModelError::InputLength {
                got: y.len(),
                expected: self.num_inputs(),
            });
        }
        for (index, &value) in y.iter().enumerate() {
            if value < 0 || value > self.q as i64 {
                return Err(ModelError::InputOutOfRange {
                    index,
                    value,
                    q: self.q,
                });
            }
        }
        Ok(())
    }

    /// Exact forward pass from a q-scaled input.
    pub fn propagate(&self, y: &[i64]) -> Result<Propagation, ModelError> {
        self.check_input(y)?;
        let mut hidden: Vec<Vec<u8>> = Vec::with_capacity(self.num_hidden());
        let first = self.affine_first_scaled(y)?;
        hidden.push(first.iter().map(|&a| (a >= 0) as u8).collect());
        for layer in 2..=self.num_hidden() {
            let a = self.affine_hidden(layer, hidden.last().unwrap())?;
            hidden.push(a.iter().map(|&a| (a >= 0) as u8).collect());
        }
        let output = self.affine_hidden(self.layers.len(), hidden.last().unwrap())?;
        let predicted = argmax(&output);
        Ok(Propagation {
            hidden,
            output,
            predicted,
        })
    }

    /// Closed-form max over t and binary x^L of a_t^{L+1}(x^L) - a_t̄^{L+1}(x^L).
    pub fn margin_upper_bound(&self, true_class: usize) -> Result<i64, ModelError> {
        let out = self.layers.last().unwrap();
        if true_class >= out.weights.len() {
            return Err(ModelError::BadTrueClass {
                got: true_class,
                classes: out.weights.len(),
            });
        }
        let base = &out.weights[true_class];
        let base_bias = out.biases[true_class];
        let best = out
            .weights
            .iter()
            .zip(&out.biases)
            .map(|(row, &b)| {
                row.iter()
                    .zip(base)
                    .map(|(&wt, &wb)| (wt as i64 - wb as i64).abs())
                    .sum::<i64>()
                    + b
                    - base_bias
            })
            .max()
            .unwrap();
        Ok(best)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path)?;
        let model: BnnModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

impl InputSpec {
    pub fn validate(&self, model: &BnnModel) -> Result<(), ModelError> {
        model.check_input(&self.anchor)?;
        if self.epsilon < Rat::from_integer(0) {
            return Err(ModelError::NegativeEpsilon);
        }
        if self.true_class >= model.num_classes() {
            return Err(ModelError::BadTrueClass {
                got: self.true_class,
                classes: model.num_classes(),
            });
        }
        Ok(())
    }

    pub fn anchor_rat(&self, q: u32, j: usize) -> Rat {
        rat(self.anchor[j] as Int, q as Int)
    }
}

/// Stored form of an input file: the anchor and expected class; norm and
/// epsilon arrive separately (CLI flags), so one file serves many runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputFile {
    pub format_version: u32,
    /// q-scaled integer coordinates.
    pub y: Vec<i64>,
    pub true_class: usize,
}

impl InputFile {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path)?;
        let file: InputFile = if path.extension().is_some_and(|e| e == "csv") {
            Self::from_csv(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        if file.format_version != FORMAT_VERSION {
            return Err(ModelError::BadFormatVersion(file.format_version));
        }
        Ok(file)
    }

    /// CSV form: one row `format_version,true_class,y0,y1,...`.
    pub fn from_csv(text: &str) -> Result<Self, ModelError> {
        let line = text.lines().next().unwrap_or_default();
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| -> Result<i64, ModelError> {
            s.parse()
                .map_err(|_| ModelError::IndexOutOfRange(format!("bad csv field `{s}`")))
        };
        if fields.len() < 3 {
            return Err(ModelError::IndexOutOfRange(
                "csv input needs format_version,true_class,y...".into(),
            ));
        }
        Ok(InputFile {
            format_version: parse(fields[0])? as u32,
            true_class: parse(fields[1])? as usize,
            y: fields[2..].iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
        })
    }

    pub fn to_spec(&self, epsilon: Rat, norm: Norm) -> InputSpec {
        InputSpec {
            anchor: self.y.clone(),
            epsilon,
            norm,
            true_class: self.true_class,
        }
    }
}

pub fn argmax(values: &[i64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    fn layer(weights: Vec<Vec<i8>>, biases: Vec<i64>) -> Layer {
        Layer { weights, biases }
    }

    /// Single hidden neuron net: W1 = (1, -1), b1 = 0, two output classes.
    fn tiny_net() -> BnnModel {
        BnnModel::new(
            2,
            vec![
                layer(vec![vec![1, -1]], vec![0]),
                layer(vec![vec![1], vec![-1]], vec![0, 0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn constants_hidden_layer() {
        // l=2 row (1,-1,0), b=2 -> LB=-2, UB=2, R=-3
        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1], vec![1], vec![1]], vec![0, 0, 0]),
                layer(vec![vec![1, -1, 0]], vec![2]),
                layer(vec![vec![1]], vec![0]),
            ],
        )
        .unwrap();
        let c = model.layer_constants(2, 0).unwrap();
        assert_eq!((c.lb, c.ub, c.r2q), (-2, 2, -3));
        assert_eq!(c.r2q.rem_euclid(2), 1);
    }

    #[test]
    fn constants_zero_row() {
        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1], vec![1]], vec![0, 0]),
                layer(vec![vec![0, 0]], vec![0]),
                layer(vec![vec![1]], vec![0]),
            ],
        )
        .unwrap();
        let c = model.layer_constants(2, 0).unwrap();
        assert_eq!((c.lb, c.ub, c.r2q), (0, 0, -1));
    }

    #[test]
    fn constants_first_layer() {
        // l=1, q=2, row (1,1), b=0 -> LB=0, UB=4, qR=3 (R=1.5)
        let model = BnnModel::new(
            2,
            vec![
                layer(vec![vec![1, 1]], vec![0]),
                layer(vec![vec![1]], vec![0]),
            ],
        )
        .unwrap();
        let c = model.layer_constants(1, 0).unwrap();
        assert_eq!((c.lb, c.ub, c.r2q), (0, 4, 3));
    }

    #[test]
    fn affine_examples() {
        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1], vec![1], vec![1]], vec![0, 0, 0]),
                layer(vec![vec![1, -1, 0], vec![0, 0, 0], vec![1, 1, 0]], vec![2, -1, 0]),
                layer(vec![vec![1, 1, 1]], vec![0]),
            ],
        )
        .unwrap();
        let a = model.affine_hidden(2, &[1, 0, 0]).unwrap();
        assert_eq!(a[0], 4);
        assert_eq!(a[1], -1);
        let a = model.affine_hidden(2, &[0, 1, 0]).unwrap();
        assert_eq!(a[2], 0);
    }

    #[test]
    fn propagate_boundary_and_ties() {
        let model = tiny_net();
        // x0 = (1, 0) -> scaled y = (2, 0): a = 2 - (-2) ... W(2y-q) = (2*2-2) - (0-2) = 4
        let p = model.propagate(&[2, 0]).unwrap();
        assert_eq!(p.hidden[0], vec![1]);

        // a(x) = 0 maps to 1
        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1, 1]], vec![0]),
                layer(vec![vec![1]], vec![0]),
            ],
        )
        .unwrap();
        let p = model.propagate(&[0, 1]).unwrap();
        assert_eq!(p.hidden[0], vec![1]);

        // all-zero output layer: tie broken to class 0
        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1]], vec![0]),
                layer(vec![vec![0], vec![0]], vec![0, 0]),
            ],
        )
        .unwrap();
        let p = model.propagate(&[1]).unwrap();
        assert_eq!(p.output, vec![0, 0]);
        assert_eq!(p.predicted, 0);
    }

    #[test]
    fn margin_upper_bound_examples() {
        let model = tiny_net();
        // W^{L+1} rows (1),(-1): max over x in {0,1} and t of margins.
        // Closed form: |(-1)-1| + 0 = 2.
        assert_eq!(model.margin_upper_bound(0).unwrap(), 2);

        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1], vec![1]], vec![0, 0]),
                layer(vec![vec![1, -1], vec![-1, 1]], vec![0, 0]),
            ],
        )
        .unwrap();
        assert_eq!(model.margin_upper_bound(0).unwrap(), 4);

        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1], vec![1]], vec![0, 0]),
                layer(vec![vec![1, 0], vec![1, 1]], vec![0, 3]),
            ],
        )
        .unwrap();
        assert_eq!(model.margin_upper_bound(0).unwrap(), 4);

        // identical rows and biases -> 0
        let model = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1], vec![1]], vec![0, 0]),
                layer(vec![vec![1, -1], vec![1, -1]], vec![2, 2]),
            ],
        )
        .unwrap();
        assert_eq!(model.margin_upper_bound(0).unwrap(), 0);
    }

    #[test]
    fn margin_upper_bound_matches_enumeration() {
        // brute force over x^L and t for a few output layers
        let cases = vec![
            (vec![vec![1, -1, 0], vec![0, 1, 1], vec![-1, -1, -1]], vec![0, 2, -1]),
            (vec![vec![1, 1], vec![1, 1]], vec![3, 3]),
        ];
        for (weights, biases) in cases {
            let n_prev = weights[0].len();
            let hidden = layer(
                (0..n_prev).map(|_| vec![1; 1]).collect::<Vec<_>>(),
                vec![0; n_prev],
            );
            // hidden layer shape: n_prev neurons each fed by 1 input
            let model = BnnModel::new(
                1,
                vec![
                    Layer {
                        weights: (0..n_prev).map(|_| vec![1]).collect(),
                        biases: vec![0; n_prev],
                    },
                    layer(weights.clone(), biases.clone()),
                ],
            )
            .unwrap();
            let _ = hidden;
            for tbar in 0..weights.len() {
                let mut best = i64::MIN;
                for mask in 0..(1u32 << n_prev) {
                    let x: Vec<u8> = (0..n_prev).map(|j| ((mask >> j) & 1) as u8).collect();
                    let a = model.affine_hidden(2, &x).unwrap();
                    for t in 0..weights.len() {
                        best = best.max(a[t] - a[tbar]);
                    }
                }
                assert_eq!(model.margin_upper_bound(tbar).unwrap(), best);
            }
        }
    }

    #[test]
    fn exactness_scaled_integers() {
        let model = tiny_net();
        let a = model.affine(1, &[1, 2]).unwrap();
        // a = (2*1-2) - (2*2-2) over q=2 -> (0 - 2)/2 = -1
        assert_eq!(a[0], rat(-2, 2));
        assert!((a[0] * rat(2, 1)).is_integer());
    }

    #[test]
    fn validation_errors() {
        assert!(BnnModel::new(0, vec![]).is_err());
        let bad = BnnModel::new(
            1,
            vec![
                layer(vec![vec![2]], vec![0]),
                layer(vec![vec![1]], vec![0]),
            ],
        );
        assert!(matches!(bad, Err(ModelError::NonTernaryWeight { .. })));
        let model = tiny_net();
        assert!(model.propagate(&[1]).is_err());
        assert!(model.propagate(&[5, 0]).is_err());
    }

    #[test]
    fn csv_input_roundtrip() {
        let f = InputFile::from_csv("1, 2, 0, 1, 2\n").unwrap();
        assert_eq!(f.true_class, 2);
        assert_eq!(f.y, vec![0, 1, 2]);
    }
}
