//! Dense feed-forward softmax classifier with hand-written backpropagation.
//!
//! Parameters live in one flat buffer. Layer `l` maps `dims[l]` inputs to
//! `dims[l + 1]` outputs and stores its `dims[l] x dims[l + 1]` weight matrix
//! row-major (one row per input) followed by its `dims[l + 1]` biases.
//! Hidden layers use ReLU; the last layer feeds a softmax.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ProbVector;
use crate::smoothing::cross_entropy_slice;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }
}

fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid("dims", "need at least an input and an output size"));
    }
    if dims.contains(&0) {
        return Err(Error::invalid("dims", format!("layer sizes must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Weights drawn from `N(0, 1) / sqrt(fan_in)`, biases zero.
pub fn init_model(dims: &[usize], seed: u64) -> Result<ModelParams> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelParams::zeros(dims)?;
    let shapes: Vec<LayerShape> = model.layers().collect();
    for layer in shapes {
        let scale = 1.0 / (layer.inputs as f64).sqrt();
        for w in &mut model.params[layer.weights()] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * scale;
        }
    }
    Ok(model)
}

impl ModelParams {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(ModelParams { dims: dims.to_vec(), params: vec![0.0; parameter_count(dims)] })
    }

    /// Wraps an existing flat buffer in the documented layout.
    pub fn from_flat(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = parameter_count(dims);
        if params.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: params.len() });
        }
        Ok(ModelParams { dims: dims.to_vec(), params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().expect("dims has at least two entries")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix of layer `l` (row per input) and its biases.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let shape = self.layers().nth(l).expect("layer index in range");
        (&self.params[shape.weights()], &self.params[shape.biases()])
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn layers(&self) -> impl Iterator<Item = LayerShape> + '_ {
        let mut offset = 0;
        self.dims.windows(2).map(move |w| {
            let shape = LayerShape { inputs: w[0], outputs: w[1], offset };
            offset += w[0] * w[1] + w[1];
            shape
        })
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::LengthMismatch { expected: self.input_dim(), actual: features.len() });
        }
        Ok(())
    }

    /// Pre-activations of every layer for one input.
    fn pre_activations(&self, features: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.num_layers());
        for (l, layer) in self.layers().enumerate() {
            let z = {
                let input: &[f64] = if l == 0 { features } else { &out[l - 1] };
                let w = &self.params[layer.weights()];
                let mut z = self.params[layer.biases()].to_vec();
                for (i, &a) in input.iter().enumerate() {
                    let a = if l == 0 { a } else { a.max(0.0) };
                    if a == 0.0 {
                        continue;
                    }
                    let row = &w[i * layer.outputs..(i + 1) * layer.outputs];
                    for (zj, wij) in z.iter_mut().zip(row) {
                        *zj += a * wij;
                    }
                }
                z
            };
            out.push(z);
        }
        out
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features)?;
        Ok(self.pre_activations(features).pop().expect("at least one layer"))
    }

    pub fn forward(&self, features: &[f64]) -> Result<ProbVector> {
        Ok(softmax(&self.logits(features)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Header line with the layer sizes, then per layer a line of weights
    /// (row-major) and a line of biases, as space-separated decimals.
    pub fn to_text(&self) -> String {
        let header = ModelHeader {
            dims: self.dims.clone(),
            hidden_activation: "relu".into(),
            output: "softmax".into(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for layer in self.layers() {
            for range in [layer.weights(), layer.biases()] {
                let mut first = true;
                for v in &self.params[range] {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    write!(out, "{v:?}").expect("write to string");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub(crate) fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header_line) = lines.next().ok_or_else(|| Error::EmptyFile { path: path.into() })?;
        let header: ModelHeader = serde_json::from_str(header_line).map_err(|e| Error::parse(path, 1, e))?;
        check_dims(&header.dims).map_err(|e| Error::parse(path, 1, e))?;
        let mut model = ModelParams::zeros(&header.dims)?;
        let shapes: Vec<LayerShape> = model.layers().collect();
        for shape in shapes {
            for range in [shape.weights(), shape.biases()] {
                let expected = range.len();
                let (idx, line) = lines.next().ok_or_else(|| {
                    Error::parse(path, text.lines().count() + 1, "unexpected end of parameter file")
                })?;
                let values = line
                    .split_whitespace()
                    .map(str::parse::<f64>)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Error::parse(path, idx + 1, e))?;
                if values.len() != expected {
                    return Err(Error::parse(
                        path,
                        idx + 1,
                        format!("expected {expected} values, found {}", values.len()),
                    ));
                }
                model.params[range].copy_from_slice(&values);
            }
        }
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    dims: Vec<usize>,
    hidden_activation: String,
    output: String,
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> ProbVector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ProbVector::from_raw(exps.into_iter().map(|e| e / total).collect())
}

pub fn forward(model: &ModelParams, features: &[f64]) -> Result<ProbVector> {
    model.forward(features)
}

/// One batch entry: input, soft target and whether the curriculum admits it.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub features: &'a [f64],
    pub target: &'a [f64],
    pub included: bool,
}

/// Flat gradient buffer in the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

/// Momentum buffer in the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity(pub Vec<f64>);

impl Velocity {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Velocity(vec![0.0; model.num_params()])
    }
}

/// Sum of included per-sample losses, number included, and the gradient of
/// the mean included loss.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub loss_sum: f64,
    pub included: usize,
    pub gradients: Gradients,
}

impl BatchOutcome {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.included as f64
    }
}

/// Gradient of the mean cross-entropy over the included samples.
pub fn gradient(model: &ModelParams, batch: &[BatchItem<'_>]) -> Result<Gradients> {
    loss_and_gradient(model, batch).map(|o| o.gradients)
}

/// Forward and backward pass over a batch, accumulating in batch order.
pub fn loss_and_gradient(model: &ModelParams, batch: &[BatchItem<'_>]) -> Result<BatchOutcome> {
    let classes = model.num_classes();
    let mut grads = vec![0.0; model.num_params()];
    let mut loss_sum = 0.0;
    let mut included = 0usize;
    let shapes: Vec<LayerShape> = model.layers().collect();

    for item in batch {
        model.check_input(item.features)?;
        if item.target.len() != classes {
            return Err(Error::LengthMismatch { expected: classes, actual: item.target.len() });
        }
        if !item.included {
            continue;
        }
        included += 1;
        let pre = model.pre_activations(item.features);
        let probs = softmax(pre.last().expect("at least one layer"));
        loss_sum += cross_entropy_slice(item.target, probs.as_slice())?;

        // d(-sum t log softmax(z))/dz = softmax(z) * sum(t) - t
        let mass: f64 = item.target.iter().sum();
        let mut delta: Vec<f64> = probs.iter().zip(item.target).map(|(p, t)| p * mass - t).collect();

        for l in (0..shapes.len()).rev() {
            let shape = shapes[l];
            let input: Vec<f64> = if l == 0 {
                item.features.to_vec()
            } else {
                pre[l - 1].iter().map(|z| z.max(0.0)).collect()
            };
            let w_range = shape.weights();
            for (i, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &mut grads[w_range.start + i * shape.outputs..w_range.start + (i + 1) * shape.outputs];
                for (g, d) in row.iter_mut().zip(&delta) {
                    *g += a * d;
                }
            }
            for (g, d) in grads[shape.biases()].iter_mut().zip(&delta) {
                *g += d;
            }
            if l > 0 {
                let w = &model.params[w_range];
                delta = (0..shape.inputs)
                    .map(|i| {
                        if pre[l - 1][i] <= 0.0 {
                            return 0.0;
                        }
                        let row = &w[i * shape.outputs..(i + 1) * shape.outputs];
                        row.iter().zip(&delta).map(|(wij, dj)| wij * dj).sum()
                    })
                    .collect();
            }
        }
    }

    if included == 0 {
        return Err(Error::AllExcluded);
    }
    let scale = 1.0 / included as f64;
    grads.iter_mut().for_each(|g| *g *= scale);
    Ok(BatchOutcome { loss_sum, included, gradients: Gradients(grads) })
}

/// Classic momentum: `v <- momentum * v + g`, `w <- w - lr * v`.
pub fn sgd_step(
    model: &mut ModelParams,
    grads: &Gradients,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let n = model.num_params();
    for len in [grads.0.len(), velocity.0.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, actual: len });
        }
    }
    for ((w, v), g) in model.params.iter_mut().zip(velocity.0.iter_mut()).zip(&grads.0) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_model(&[2, 8, 3], 4).unwrap();
        assert_eq!(a, init_model(&[2, 8, 3], 4).unwrap());
        assert_ne!(a, init_model(&[2, 8, 3], 5).unwrap());
        assert_eq!(a.num_params(), 2 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(a.num_layers(), 2);
        let (w, b) = a.layer(0);
        assert_eq!((w.len(), b.len()), (16, 8));
        assert!(b.iter().all(|&x| x == 0.0));

        let lin = init_model(&[2, 3], 0).unwrap();
        let (w, b) = lin.layer(0);
        assert_eq!((w.len(), b.len()), (6, 3));

        assert!(init_model(&[2, 0, 3], 0).is_err());
        assert!(init_model(&[2], 0).is_err());
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ModelParams::zeros(&[3, 4]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 0.5]).unwrap().as_slice(), &[0.25; 4]);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[1.0, 2.0, -0.5]);
        let b = softmax(&[101.0, 102.0, 99.5]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
        let big = softmax(&[1000.0, -1000.0, 0.0]);
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn output_layer_gradient_is_residual() {
        let m = init_model(&[2, 3], 1).unwrap();
        let x = [0.3, -1.2];
        let t = [0.0, 1.0, 0.0];
        let p = m.forward(&x).unwrap();
        let g = gradient(&m, &[BatchItem { features: &x, target: &t, included: true }]).unwrap();
        let (gw, gb) = g.0.split_at(6);
        for j in 0..3 {
            let d = p[j] - t[j];
            assert!((gb[j] - d).abs() < 1e-15);
            assert!((gw[j] - x[0] * d).abs() < 1e-15);
            assert!((gw[3 + j] - x[1] * d).abs() < 1e-15);
        }
    }

    #[test]
    fn excluded_samples_do_not_count() {
        let m = init_model(&[2, 4, 3], 2).unwrap();
        let t = [0.1, 0.8, 0.1];
        let a = [BatchItem { features: &[0.5, 0.5], target: &t, included: true }];
        let b = [
            BatchItem { features: &[0.5, 0.5], target: &t, included: true },
            BatchItem { features: &[9.0, -3.0], target: &t, included: false },
        ];
        assert_eq!(gradient(&m, &a).unwrap(), gradient(&m, &b).unwrap());
        let none = [BatchItem { features: &[0.5, 0.5], target: &t, included: false }];
        assert!(matches!(gradient(&m, &none), Err(Error::AllExcluded)));
    }

    #[test]
    fn momentum_unrolls() {
        let mut m = ModelParams::from_flat(&[1, 1], vec![1.0, 0.0]).unwrap();
        let g = Gradients(vec![0.5, -1.0]);
        let mut v = Velocity::zeros_like(&m);
        sgd_step(&mut m, &g, &mut v, 0.1, 0.0).unwrap();
        assert_eq!(m.params(), &[1.0 - 0.1 * 0.5, 0.1]);

        let mut m = ModelParams::from_flat(&[1, 1], vec![0.0, 0.0]).unwrap();
        let mut v = Velocity::zeros_like(&m);
        sgd_step(&mut m, &g, &mut v, 0.1, 0.9).unwrap();
        let before = m.params().to_vec();
        sgd_step(&mut m, &g, &mut v, 0.1, 0.9).unwrap();
        for ((after, before), g) in m.params().iter().zip(&before).zip(&g.0) {
            assert!((before - after - 0.1 * 1.9 * g).abs() < 1e-15);
        }

        let zero = Gradients(vec![0.0, 0.0]);
        let mut still = Velocity::zeros_like(&m);
        let frozen = m.clone();
        for _ in 0..5 {
            sgd_step(&mut m, &zero, &mut still, 0.1, 0.9).unwrap();
        }
        assert_eq!(m, frozen);
        assert_eq!(still.0, vec![0.0, 0.0]);

        let speed = v.0[0].abs();
        sgd_step(&mut m, &zero, &mut v, 0.1, 0.9).unwrap();
        assert!((v.0[0].abs() - 0.9 * speed).abs() < 1e-15);

        assert!(sgd_step(&mut m, &Gradients(vec![0.0]), &mut v, 0.1, 0.9).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = init_model(&[3, 5, 2], 8).unwrap();
        let back = ModelParams::parse(&m.to_text(), Path::new("m.txt")).unwrap();
        assert_eq!(back, m);
        assert!(ModelParams::parse("{\"dims\":[2,2],\"hidden_activation\":\"relu\",\"output\":\"softmax\"}\n1 2 3\n", Path::new("m.txt")).is_err());
    }
}
