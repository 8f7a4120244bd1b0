//! Differentiable predictors.
//!
//! Every model exposes three quantities: the loss on a datum, its gradient
//! with respect to the parameters, and its gradient with respect to the
//! *input features*. The last one drives both the inner maximization of the
//! robust objective and every test-time attack.
//!
//! [`ModelSpec`] covers the three built-in kinds:
//!
//! * `linear-regression`: `ℓ = (wᵀx + b − y)²`
//! * `logistic`: softmax cross-entropy over `classes` affine scores
//! * `mlp`: dense layers with a hidden activation, softmax cross-entropy head
//!
//! The regularizer is deliberately absent from the loss; it only enters
//! through the proximal step.
//!
//! # Parameter layout
//!
//! Parameters are a flat vector, layer by layer. Each layer stores its weight
//! matrix row-major (`out x in`, one row per output unit) followed by its
//! bias vector. Logistic regression and linear regression are single-layer
//! networks in this layout.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::tensor::{self, DenseVector, SeededRng};

/// Supervision attached to a datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Value(f64),
}

/// A labelled example `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub x: DenseVector,
    pub y: Target,
}

impl Datum {
    pub fn new(x: DenseVector, y: Target) -> Self {
        Datum { x, y }
    }

    pub fn class(x: Vec<f64>, label: usize) -> Result<Self> {
        Ok(Datum::new(DenseVector::new(x)?, Target::Class(label)))
    }

    pub fn label(&self) -> Option<usize> {
        match self.y {
            Target::Class(c) => Some(c),
            Target::Value(_) => None,
        }
    }
}

/// Flat model weights in the canonical layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams(DenseVector);

impl ModelParams {
    pub fn new(flat: DenseVector) -> Self {
        ModelParams(flat)
    }

    pub fn from_vec(flat: Vec<f64>) -> Result<Self> {
        Ok(ModelParams(DenseVector::new(flat)?))
    }

    pub fn zeros(model: &impl Model) -> Self {
        ModelParams(DenseVector::zeros(model.num_params()).expect("models have parameters"))
    }

    pub fn flat(&self) -> &DenseVector {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0.into_vec()
    }
}

/// The interface the robust objective, the optimizers and the attacks need.
///
/// The `*_raw` methods skip validation: slices must already have the lengths
/// reported by [`Model::num_params`] and [`Model::input_dim`], and targets
/// must pass [`Model::check_target`]. The free functions in this module
/// ([`loss`], [`grad_params`], [`grad_input`], ...) do the checking.
pub trait Model {
    fn num_params(&self) -> usize;

    fn input_dim(&self) -> usize;

    /// Number of classes, or `None` for regression losses.
    fn classes(&self) -> Option<usize>;

    fn check_target(&self, y: &Target) -> Result<()>;

    fn loss_raw(&self, theta: &[f64], x: &[f64], y: &Target) -> f64;

    /// Adds `scale * ∇θ ℓ` into `acc` and returns the loss.
    fn accumulate_param_grad_raw(
        &self,
        theta: &[f64],
        x: &[f64],
        y: &Target,
        scale: f64,
        acc: &mut [f64],
    ) -> f64;

    /// Writes `∇x ℓ` into `out` and returns the loss.
    fn input_grad_raw(&self, theta: &[f64], x: &[f64], y: &Target, out: &mut [f64]) -> f64;

    fn predict_raw(&self, theta: &[f64], x: &[f64]) -> Target;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    #[default]
    Softplus,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus => softplus(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Architecture of a built-in model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Class count; ignored (taken as 1) for linear regression.
    pub classes: usize,
    /// Hidden widths, MLP only.
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn linear_regression(input_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LinearRegression,
            input_dim,
            classes: 1,
            hidden_dims: Vec::new(),
            activation: Activation::Softplus,
        }
    }

    pub fn logistic(input_dim: usize, classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Logistic,
            input_dim,
            classes,
            hidden_dims: Vec::new(),
            activation: Activation::Softplus,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: Vec<usize>, classes: usize, activation: Activation) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim,
            classes,
            hidden_dims,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("model input_dim must be positive"));
        }
        match self.kind {
            ModelKind::LinearRegression => {}
            ModelKind::Logistic | ModelKind::Mlp if self.classes < 2 => {
                return Err(Error::config("classifiers need at least 2 classes"));
            }
            _ => {}
        }
        match self.kind {
            ModelKind::Mlp if self.hidden_dims.is_empty() => {
                Err(Error::config("mlp needs at least one hidden layer"))
            }
            ModelKind::Mlp if self.hidden_dims.contains(&0) => {
                Err(Error::config("hidden widths must be positive"))
            }
            ModelKind::LinearRegression | ModelKind::Logistic if !self.hidden_dims.is_empty() => {
                Err(Error::config("hidden_dims is only meaningful for mlp"))
            }
            _ => Ok(()),
        }
    }

    fn output_dim(&self) -> usize {
        match self.kind {
            ModelKind::LinearRegression => 1,
            _ => self.classes,
        }
    }

    fn hidden(&self) -> &[usize] {
        match self.kind {
            ModelKind::Mlp => &self.hidden_dims,
            _ => &[],
        }
    }

    fn num_layers(&self) -> usize {
        self.hidden().len() + 1
    }

    /// `(fan_in, fan_out)` of layer `l`.
    fn layer_dims(&self, l: usize) -> (usize, usize) {
        let hidden = self.hidden();
        let fan_in = if l == 0 { self.input_dim } else { hidden[l - 1] };
        let fan_out = if l == hidden.len() { self.output_dim() } else { hidden[l] };
        (fan_in, fan_out)
    }

    /// Stable textual identity, hashed into checkpoints.
    pub fn fingerprint(&self) -> String {
        let kind = match self.kind {
            ModelKind::LinearRegression => "linear-regression",
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        };
        let act = match self.activation {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
        };
        let hidden: Vec<String> = self.hidden().iter().map(|h| h.to_string()).collect();
        let act = if self.kind == ModelKind::Mlp { act } else { "-" };
        format!(
            "{kind};in={};out={};hidden=[{}];act={act}",
            self.input_dim,
            self.output_dim(),
            hidden.join(",")
        )
    }

    /// Forward pass keeping pre-activations and activations of every layer.
    fn forward(&self, theta: &[f64], x: &[f64]) -> Trace {
        let layers = self.num_layers();
        let mut pre = Vec::with_capacity(layers);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = self.layer_dims(l);
            let w = &theta[offset..offset + fan_in * fan_out];
            let b = &theta[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input: &[f64] = if l == 0 { x } else { &post[l - 1] };
            let mut z = vec![0.0; fan_out];
            tensor::gemv(fan_out, fan_in, w, input, &mut z);
            z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += bi);
            let a = if l + 1 < layers {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(a);
        }
        Trace { pre, post }
    }

    /// Loss and `∂ℓ/∂(output scores)`.
    fn head(&self, out: &[f64], y: &Target) -> (f64, Vec<f64>) {
        match (self.kind, y) {
            (ModelKind::LinearRegression, Target::Value(t)) => {
                let r = out[0] - t;
                (r * r, vec![2.0 * r])
            }
            (_, Target::Class(c)) => {
                let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = out.iter().map(|o| (o - max).exp()).sum();
                let lse = max + sum.ln();
                let delta = out
                    .iter()
                    .enumerate()
                    .map(|(k, o)| (o - lse).exp() - if k == *c { 1.0 } else { 0.0 })
                    .collect();
                // lse >= out[c] analytically; clamp rounding noise
                ((lse - out[*c]).max(0.0), delta)
            }
            _ => unreachable!("target kind checked by check_target"),
        }
    }

    /// Shared backward pass. Accumulates parameter gradients when `acc` is
    /// given and writes the input gradient when `input_out` is given.
    fn backward(
        &self,
        theta: &[f64],
        x: &[f64],
        y: &Target,
        mut acc: Option<(&mut [f64], f64)>,
        input_out: Option<&mut [f64]>,
    ) -> f64 {
        let trace = self.forward(theta, x);
        let layers = self.num_layers();
        let (loss, mut delta) = self.head(&trace.post[layers - 1], y);

        // layer offsets
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            let (fi, fo) = self.layer_dims(l);
            offset += fi * fo + fo;
        }

        let mut input_out = input_out;
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = self.layer_dims(l);
            let w_off = offsets[l];
            let b_off = w_off + fan_in * fan_out;
            let input: &[f64] = if l == 0 { x } else { &trace.post[l - 1] };
            if let Some((g, scale)) = acc.as_mut() {
                let scale = *scale;
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let sd = scale * d;
                    let row = &mut g[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (gi, &ai) in row.iter_mut().zip(input) {
                        *gi += sd * ai;
                    }
                    g[b_off + o] += sd;
                }
            }
            let need_below = l > 0 || input_out.is_some();
            if !need_below {
                break;
            }
            let w = &theta[w_off..b_off];
            let mut below = vec![0.0; fan_in];
            tensor::gemv_t(fan_out, fan_in, w, &delta, &mut below);
            if l > 0 {
                let z = &trace.pre[l - 1];
                let a = &trace.post[l - 1];
                for i in 0..fan_in {
                    below[i] *= self.activation.derivative(z[i], a[i]);
                }
                delta = below;
            } else if let Some(out) = input_out.as_mut() {
                out.copy_from_slice(&below);
            }
        }
        loss
    }
}

struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Model for ModelSpec {
    fn num_params(&self) -> usize {
        (0..self.num_layers())
            .map(|l| {
                let (fi, fo) = self.layer_dims(l);
                fi * fo + fo
            })
            .sum()
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn classes(&self) -> Option<usize> {
        match self.kind {
            ModelKind::LinearRegression => None,
            _ => Some(self.classes),
        }
    }

    fn check_target(&self, y: &Target) -> Result<()> {
        match (self.kind, y) {
            (ModelKind::LinearRegression, Target::Value(v)) if v.is_finite() => Ok(()),
            (ModelKind::LinearRegression, _) => {
                Err(Error::config("linear regression needs a finite real target"))
            }
            (_, Target::Class(c)) if *c < self.classes => Ok(()),
            (_, Target::Class(c)) => Err(Error::Label {
                label: *c,
                classes: self.classes,
            }),
            (_, Target::Value(_)) => Err(Error::config("classifier needs a class label")),
        }
    }

    fn loss_raw(&self, theta: &[f64], x: &[f64], y: &Target) -> f64 {
        let trace = self.forward(theta, x);
        self.head(&trace.post[self.num_layers() - 1], y).0
    }

    fn accumulate_param_grad_raw(
        &self,
        theta: &[f64],
        x: &[f64],
        y: &Target,
        scale: f64,
        acc: &mut [f64],
    ) -> f64 {
        self.backward(theta, x, y, Some((acc, scale)), None)
    }

    fn input_grad_raw(&self, theta: &[f64], x: &[f64], y: &Target, out: &mut [f64]) -> f64 {
        self.backward(theta, x, y, None, Some(out))
    }

    fn predict_raw(&self, theta: &[f64], x: &[f64]) -> Target {
        let trace = self.forward(theta, x);
        let out = &trace.post[self.num_layers() - 1];
        match self.kind {
            ModelKind::LinearRegression => Target::Value(out[0]),
            _ => Target::Class(argmax(out)),
        }
    }
}

/// Index of the largest score, ties to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// `ℓ(θ; x) = θᵀx`: a loss linear in the input.
///
/// Not a predictor anyone would train. Its inner maximization against a
/// squared transport cost has the closed form `ζ* = x + θ/(2γ)`, which makes
/// it the reference instance for checking oracles and stability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearScore {
    pub dim: usize,
}

impl Model for LinearScore {
    fn num_params(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn classes(&self) -> Option<usize> {
        None
    }

    fn check_target(&self, _y: &Target) -> Result<()> {
        Ok(())
    }

    fn loss_raw(&self, theta: &[f64], x: &[f64], _y: &Target) -> f64 {
        tensor::dot(theta, x)
    }

    fn accumulate_param_grad_raw(
        &self,
        theta: &[f64],
        x: &[f64],
        _y: &Target,
        scale: f64,
        acc: &mut [f64],
    ) -> f64 {
        acc.iter_mut().zip(x).for_each(|(a, xi)| *a += scale * xi);
        tensor::dot(theta, x)
    }

    fn input_grad_raw(&self, theta: &[f64], x: &[f64], _y: &Target, out: &mut [f64]) -> f64 {
        out.copy_from_slice(theta);
        tensor::dot(theta, x)
    }

    fn predict_raw(&self, theta: &[f64], x: &[f64]) -> Target {
        Target::Value(tensor::dot(theta, x))
    }
}

pub(crate) fn check_params<M: Model + ?Sized>(model: &M, params: &ModelParams) -> Result<()> {
    check_len(model.num_params(), params.len())
}

pub(crate) fn check_datum<M: Model + ?Sized>(model: &M, z: &Datum) -> Result<()> {
    check_len(model.input_dim(), z.x.len())?;
    model.check_target(&z.y)
}

pub fn loss<M: Model + ?Sized>(model: &M, params: &ModelParams, z: &Datum) -> Result<f64> {
    check_params(model, params)?;
    check_datum(model, z)?;
    Ok(model.loss_raw(params.as_slice(), &z.x, &z.y))
}

/// Mean of `∇θ ℓ` over a non-empty batch.
pub fn grad_params<M: Model + ?Sized>(model: &M, params: &ModelParams, batch: &[Datum]) -> Result<DenseVector> {
    check_params(model, params)?;
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut acc = vec![0.0; model.num_params()];
    for z in batch {
        check_datum(model, z)?;
        model.accumulate_param_grad_raw(params.as_slice(), &z.x, &z.y, 1.0, &mut acc);
    }
    let inv = 1.0 / batch.len() as f64;
    acc.iter_mut().for_each(|g| *g *= inv);
    DenseVector::from_computed(acc, "grad_params")
}

/// `∇x ℓ(θ; (x, y))`.
pub fn grad_input<M: Model + ?Sized>(model: &M, params: &ModelParams, z: &Datum) -> Result<DenseVector> {
    check_params(model, params)?;
    check_datum(model, z)?;
    let mut out = vec![0.0; model.input_dim()];
    model.input_grad_raw(params.as_slice(), &z.x, &z.y, &mut out);
    DenseVector::from_computed(out, "grad_input")
}

pub fn predict<M: Model + ?Sized>(model: &M, params: &ModelParams, x: &DenseVector) -> Result<Target> {
    check_params(model, params)?;
    check_len(model.input_dim(), x.len())?;
    Ok(model.predict_raw(params.as_slice(), x))
}

/// Fraction of `data` whose predicted class differs from its label.
pub fn misclassification_rate<M: Model + ?Sized>(model: &M, params: &ModelParams, data: &[Datum]) -> Result<f64> {
    check_params(model, params)?;
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if model.classes().is_none() {
        return Err(Error::config("misclassification rate needs a classifier"));
    }
    let mut wrong = 0usize;
    for z in data {
        check_datum(model, z)?;
        if model.predict_raw(params.as_slice(), &z.x) != z.y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Seeded uniform initialization in `[-scale, scale]`.
pub fn init_params<M: Model + ?Sized>(model: &M, rng: &mut SeededRng, scale: f64) -> ModelParams {
    let flat = (0..model.num_params()).map(|_| rng.uniform_in(-scale, scale)).collect();
    ModelParams(DenseVector::new(flat).expect("finite init"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn datum(x: &[f64], c: usize) -> Datum {
        Datum::class(x.to_vec(), c).unwrap()
    }

    #[test]
    fn uniform_softmax_gives_ln2() {
        let spec = ModelSpec::logistic(3, 2);
        let p = ModelParams::zeros(&spec);
        let l = loss(&spec, &p, &datum(&[0.3, -0.2, 0.9], 1)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_closed_form() {
        let spec = ModelSpec::logistic(2, 2);
        // class-0 row w = (1, 0), class-1 row and biases zero
        let p = ModelParams::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let l = loss(&spec, &p, &datum(&[2.0, 0.0], 0)).unwrap();
        let sigmoid_form = (1.0 + (-2.0f64).exp()).ln();
        let softmax_form = -((2.0f64).exp() / ((2.0f64).exp() + 1.0)).ln();
        assert!((l - sigmoid_form).abs() < 1e-15);
        assert!((l - softmax_form).abs() < 1e-15);
        assert!((l - 0.126928).abs() < 1e-6);
    }

    #[test]
    fn regression_zero_case_and_input_gradient() {
        let spec = ModelSpec::linear_regression(2);
        let z = Datum::new(DenseVector::new(vec![0.4, 0.1]).unwrap(), Target::Value(0.0));
        assert_eq!(loss(&spec, &ModelParams::zeros(&spec), &z).unwrap(), 0.0);

        let p = ModelParams::from_vec(vec![1.0, 0.0, 0.0]).unwrap();
        let z = Datum::new(DenseVector::new(vec![1.0, 0.0]).unwrap(), Target::Value(0.0));
        assert_eq!(grad_input(&spec, &p, &z).unwrap().as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn symmetric_batch_has_zero_gradient() {
        let spec = ModelSpec::logistic(2, 2);
        let p = ModelParams::zeros(&spec);
        // same label at ±x: weight gradients (p − e_y)xᵀ cancel, biases do not
        let batch = [datum(&[0.5, -0.25], 0), datum(&[-0.5, 0.25], 0)];
        let g = grad_params(&spec, &p, &batch).unwrap();
        assert!(g[..4].iter().all(|v| v.abs() < 1e-15), "{g:?}");
        assert_eq!(&g[4..], &[-0.5, 0.5]);
        // opposite labels at ±x: biases cancel, weights give −½x and +½x rows
        let batch = [datum(&[0.5, -0.25], 0), datum(&[-0.5, 0.25], 1)];
        let g = grad_params(&spec, &p, &batch).unwrap();
        assert_eq!(g.as_slice(), &[-0.25, 0.125, 0.25, -0.125, 0.0, 0.0]);
    }

    #[test]
    fn single_datum_batch_matches_loss_gradient() {
        let spec = ModelSpec::mlp(3, vec![4], 3, Activation::Tanh);
        let mut rng = SeededRng::new(3);
        let p = init_params(&spec, &mut rng, 0.5);
        let z = datum(&[0.1, -0.7, 0.3], 2);
        let g = grad_params(&spec, &p, std::slice::from_ref(&z)).unwrap();
        let mut acc = vec![0.0; spec.num_params()];
        spec.accumulate_param_grad_raw(p.as_slice(), &z.x, &z.y, 1.0, &mut acc);
        assert_eq!(g.as_slice(), acc.as_slice());
    }

    #[test]
    fn zero_weights_have_zero_input_gradient() {
        let spec = ModelSpec::logistic(4, 3);
        let g = grad_input(&spec, &ModelParams::zeros(&spec), &datum(&[0.1, 0.2, 0.3, 0.4], 1)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_ties_go_low_and_empty_rate_errors() {
        let spec = ModelSpec::logistic(2, 2);
        let p = ModelParams::zeros(&spec);
        let x = DenseVector::new(vec![0.3, 0.3]).unwrap();
        assert_eq!(predict(&spec, &p, &x).unwrap(), Target::Class(0));
        assert!(matches!(misclassification_rate(&spec, &p, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn dimension_and_label_errors() {
        let spec = ModelSpec::logistic(2, 2);
        let p = ModelParams::zeros(&spec);
        assert!(matches!(loss(&spec, &p, &datum(&[1.0], 0)), Err(Error::Dimension { .. })));
        assert!(matches!(loss(&spec, &p, &datum(&[1.0, 0.0], 5)), Err(Error::Label { .. })));
        let short = ModelParams::from_vec(vec![0.0; 3]).unwrap();
        assert!(loss(&spec, &short, &datum(&[1.0, 0.0], 0)).is_err());
    }

    #[test]
    fn layout_sizes() {
        assert_eq!(ModelSpec::logistic(784, 10).num_params(), 7850);
        assert_eq!(
            ModelSpec::mlp(784, vec![64], 10, Activation::Softplus).num_params(),
            784 * 64 + 64 + 64 * 10 + 10
        );
        assert_eq!(ModelSpec::linear_regression(5).num_params(), 6);
        assert!(ModelSpec::mlp(3, vec![], 2, Activation::Relu).validate().is_err());
        assert!(ModelSpec::logistic(3, 1).validate().is_err());
    }

    #[test]
    fn separable_pair_is_learned() {
        // two points, plain gradient descent on the mean loss until convergence
        let spec = ModelSpec::logistic(2, 2);
        let data = [datum(&[-1.0, 0.2], 0), datum(&[1.0, -0.2], 1)];
        let mut theta = vec![0.0; spec.num_params()];
        for _ in 0..500 {
            let p = ModelParams::from_vec(theta.clone()).unwrap();
            let g = grad_params(&spec, &p, &data).unwrap();
            theta.iter_mut().zip(g.iter()).for_each(|(t, gi)| *t -= 0.5 * gi);
        }
        let p = ModelParams::from_vec(theta).unwrap();
        assert_eq!(misclassification_rate(&spec, &p, &data).unwrap(), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn predict_invariant_under_logit_shift(
            w in proptest::collection::vec(-2.0..2.0f64, 9),
            x in proptest::collection::vec(-1.0..1.0f64, 2),
            shift in -50.0..50.0f64,
        ) {
            let spec = ModelSpec::logistic(2, 3);
            let p = ModelParams::from_vec(w.clone()).unwrap();
            let mut shifted = w;
            // biases are the last three entries
            for b in &mut shifted[6..] { *b += shift; }
            let q = ModelParams::from_vec(shifted).unwrap();
            let x = DenseVector::new(x).unwrap();
            let a = predict(&spec, &p, &x).unwrap();
            let b = predict(&spec, &q, &x).unwrap();
            // shifting all logits can only flip near-ties through rounding
            let scores: Vec<f64> = (0..3).map(|k| p.as_slice()[2*k] * x[0] + p.as_slice()[2*k+1] * x[1] + p.as_slice()[6+k]).collect();
            let mut sorted = scores.clone();
            sorted.sort_by(|u, v| v.partial_cmp(u).unwrap());
            if sorted[0] - sorted[1] > 1e-9 {
                proptest::prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn losses_are_non_negative(
            seed in 0u64..1000,
            x in proptest::collection::vec(-1.0..1.0f64, 3),
            label in 0usize..3,
        ) {
            let spec = ModelSpec::mlp(3, vec![5], 3, Activation::Relu);
            let p = init_params(&spec, &mut SeededRng::new(seed), 3.0);
            let z = Datum::class(x.clone(), label).unwrap();
            proptest::prop_assert!(loss(&spec, &p, &z).unwrap() >= 0.0);
            let reg = ModelSpec::linear_regression(3);
            let q = init_params(&reg, &mut SeededRng::new(seed), 3.0);
            let zr = Datum::new(DenseVector::new(x).unwrap(), Target::Value(0.7));
            proptest::prop_assert!(loss(&reg, &q, &zr).unwrap() >= 0.0);
        }
    }
}
