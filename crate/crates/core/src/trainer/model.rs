use crate::error::{Error, Result};
use crate::losses::{cosine_logits, loss_backward, LossConfig, LossKind};
use crate::numerics::{l2_norm, Mat64, Rng};

/// Bias-free classifier head `W` (one row per answer), optionally preceded by
/// a `tanh` hidden layer `x = tanh(H z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub weights: Mat64,
    pub hidden: Option<Mat64>,
}

/// Loss and parameter gradients for one example.
#[derive(Debug, Clone)]
pub struct ExampleGrad {
    pub loss: f64,
    pub predicted: usize,
    pub grad_w: Mat64,
    pub grad_hidden: Option<Mat64>,
}

impl ClassifierModel {
    pub fn new(weights: Mat64, hidden: Option<Mat64>) -> Result<Self> {
        if let Some(h) = &hidden {
            if h.rows() != weights.cols() {
                return Err(Error::Shape(format!(
                    "hidden layer outputs {} features but head expects {}",
                    h.rows(),
                    weights.cols()
                )));
            }
        }
        Ok(ClassifierModel { weights, hidden })
    }

    /// Dimension of the raw input features.
    pub fn feature_dim(&self) -> usize {
        self.hidden
            .as_ref()
            .map_or(self.weights.cols(), Mat64::cols)
    }

    /// Dimension of `x`, the vector the head sees.
    pub fn embedding_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn class_count(&self) -> usize {
        self.weights.rows()
    }

    /// The feature vector adjacent to the head.
    pub fn embed(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "model expects {} input features, got {}",
                self.feature_dim(),
                z.len()
            )));
        }
        match &self.hidden {
            Some(h) => Ok(h.mul_vec(z)?.into_iter().map(f64::tanh).collect()),
            None => Ok(z.to_vec()),
        }
    }

    /// Class scores used for prediction: `cos θ` for normalized kinds, `Wx` for ce.
    pub fn scores(&self, z: &[f64], kind: LossKind) -> Result<Vec<f64>> {
        let x = self.embed(z)?;
        if kind.is_normalized() {
            cosine_logits(&self.weights, &x)
        } else {
            self.weights.mul_vec(&x)
        }
    }

    pub fn predict(&self, z: &[f64], kind: LossKind) -> Result<usize> {
        Ok(argmax(&self.scores(z, kind)?))
    }

    /// Full backward pass, chaining `∂L/∂x` through the hidden layer when present.
    pub fn backward(
        &self,
        config: &LossConfig,
        z: &[f64],
        targets: &[f64],
        margins: Option<&[f64]>,
    ) -> Result<ExampleGrad> {
        let x = self.embed(z)?;
        let out = loss_backward(config, &self.weights, &x, targets, margins)?;
        let predicted = match &out.cos_theta {
            Some(cos) => argmax(cos),
            None => argmax(&out.logits),
        };
        let grad_x = out.grad_x.expect("backward fills grad_x");
        let grad_hidden = match &self.hidden {
            Some(h) => {
                let mut g = Mat64::zeros(h.rows(), h.cols());
                for (r, (gx, xv)) in grad_x.iter().zip(&x).enumerate() {
                    let delta = gx * (1.0 - xv * xv);
                    for (gh, zv) in g.row_mut(r).iter_mut().zip(z) {
                        *gh = delta * zv;
                    }
                }
                Some(g)
            }
            None => None,
        };
        Ok(ExampleGrad {
            loss: out.loss,
            predicted,
            grad_w: out.grad_w.expect("backward fills grad_w"),
            grad_hidden,
        })
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Mat64 {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Mat64::zeros(rows, cols);
    for r in 0..rows {
        loop {
            for v in m.row_mut(r).iter_mut() {
                *v = rng.uniform(-limit, limit);
            }
            if l2_norm(m.row(r)) > 0.0 {
                break;
            }
        }
    }
    m
}

/// Glorot-uniform initialisation; every row is resampled until nonzero.
pub fn init_model(
    feature_dim: usize,
    class_count: usize,
    hidden_dim: Option<usize>,
    rng: &mut Rng,
) -> Result<ClassifierModel> {
    if feature_dim == 0 || class_count == 0 || hidden_dim == Some(0) {
        return Err(Error::Shape("model dimensions must be at least 1".into()));
    }
    let hidden = hidden_dim.map(|h| glorot(h, feature_dim, rng));
    let head_in = hidden_dim.unwrap_or(feature_dim);
    let weights = glorot(class_count, head_in, rng);
    ClassifierModel::new(weights, hidden)
}
