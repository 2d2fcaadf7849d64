use rand::Rng;

use super::ParamStore;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A differentiable map over column batches.
///
/// `forward` caches what `backward` needs; `backward` consumes that cache,
/// adds parameter gradients into the store and returns the input gradient.
pub trait Layer {
    fn name(&self) -> &str;

    fn forward(&mut self, params: &ParamStore, input: &Matrix) -> Result<Matrix>;

    fn backward(&mut self, params: &mut ParamStore, upstream: &Matrix) -> Result<Matrix>;
}

fn take_cache(cache: &mut Option<Matrix>, layer: &str) -> Result<Matrix> {
    cache.take().ok_or_else(|| Error::BackwardBeforeForward {
        layer: layer.to_string(),
    })
}

fn check_upstream(layer: &'static str, expected: (usize, usize), got: &Matrix) -> Result<()> {
    if got.shape() != expected {
        return Err(Error::DimensionMismatch {
            op: layer,
            left: expected,
            right: got.shape(),
        });
    }
    Ok(())
}

/// Affine map `W·x + b` on every column. A transposed linear applies `Wᵀ·x`
/// with no bias, reading the same weight storage as its untransposed twin.
#[derive(Debug, Clone)]
pub struct Linear {
    name: String,
    weight: String,
    bias: Option<String>,
    transposed: bool,
    cache: Option<Matrix>,
    out_rows: usize,
}

impl Linear {
    pub fn new(weight: impl Into<String>, bias: Option<String>) -> Self {
        let weight = weight.into();
        Linear {
            name: weight.clone(),
            weight,
            bias,
            transposed: false,
            cache: None,
            out_rows: 0,
        }
    }

    /// `Wᵀ·x` over an existing weight.
    pub fn transposed(weight: impl Into<String>) -> Self {
        let weight = weight.into();
        Linear {
            name: format!("{weight}^T"),
            weight,
            bias: None,
            transposed: true,
            cache: None,
            out_rows: 0,
        }
    }

    pub fn weight_name(&self) -> &str {
        &self.weight
    }

    pub fn bias_name(&self) -> Option<&str> {
        self.bias.as_deref()
    }
}

impl Layer for Linear {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, params: &ParamStore, input: &Matrix) -> Result<Matrix> {
        let w = params.value(&self.weight)?;
        let mut out = if self.transposed {
            w.t_matmul(input)?
        } else {
            w.matmul(input)?
        };
        if let Some(b) = &self.bias {
            out = out.add_column_broadcast(params.value(b)?)?;
        }
        self.out_rows = out.rows();
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, params: &mut ParamStore, upstream: &Matrix) -> Result<Matrix> {
        let input = take_cache(&mut self.cache, &self.name)?;
        check_upstream("linear_backward", (self.out_rows, input.cols()), upstream)?;
        let w = params.value(&self.weight)?;
        let (dw, dx) = if self.transposed {
            // y = Wᵀx: dW = x·gᵀ, dx = W·g
            (input.matmul_t(upstream)?, w.matmul(upstream)?)
        } else {
            // y = Wx + b: dW = g·xᵀ, dx = Wᵀ·g
            (upstream.matmul_t(&input)?, w.t_matmul(upstream)?)
        };
        params.accumulate_grad(&self.weight, &dw)?;
        if let Some(b) = &self.bias {
            params.accumulate_grad(b, &upstream.row_sums())?;
        }
        Ok(dx)
    }
}

/// Registers an `out_dim x in_dim` weight (and optional `out_dim x 1` bias)
/// and returns the layer reading them. Weights are drawn from
/// `U(-1/sqrt(in_dim), 1/sqrt(in_dim))`, biases start at zero.
pub fn fully_connected<R: Rng>(
    params: &mut ParamStore,
    rng: &mut R,
    prefix: &str,
    in_dim: usize,
    out_dim: usize,
    with_bias: bool,
) -> Result<Linear> {
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "fully connected layer `{prefix}` needs positive dims, got {in_dim}->{out_dim}"
        )));
    }
    let bound = 1.0 / (in_dim as f64).sqrt();
    let w = Matrix::from_fn(out_dim, in_dim, |_, _| rng.gen_range(-bound..bound));
    let wname = format!("{prefix}.weight");
    params.insert(wname.clone(), w)?;
    let bias = if with_bias {
        let bname = format!("{prefix}.bias");
        params.insert(bname.clone(), Matrix::zeros(out_dim, 1))?;
        Some(bname)
    } else {
        None
    };
    Ok(Linear::new(wname, bias))
}

/// `max(x, slope·x)` elementwise.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    slope: f64,
    cache: Option<Matrix>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Result<Self> {
        if slope.is_nan() || slope < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "leaky relu slope must be >= 0, got {slope}"
            )));
        }
        Ok(LeakyRelu { slope, cache: None })
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn apply(&self, x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            self.slope * x
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            self.slope
        }
    }
}

impl Layer for LeakyRelu {
    fn name(&self) -> &str {
        "leaky_relu"
    }

    fn forward(&mut self, _params: &ParamStore, input: &Matrix) -> Result<Matrix> {
        let out = input.map("leaky_relu", |v| self.apply(v))?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, _params: &mut ParamStore, upstream: &Matrix) -> Result<Matrix> {
        let input = take_cache(&mut self.cache, "leaky_relu")?;
        check_upstream("leaky_relu_backward", input.shape(), upstream)?;
        let mask = input.map("leaky_relu_backward", |v| self.derivative(v))?;
        upstream.hadamard(&mask)
    }
}

/// Layers applied in order; backward runs them in reverse.
pub struct Sequential {
    name: String,
    layers: Vec<Box<dyn Layer + Send>>,
}

impl Sequential {
    pub fn new(name: impl Into<String>, layers: Vec<Box<dyn Layer + Send>>) -> Self {
        Sequential {
            name: name.into(),
            layers,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl Layer for Sequential {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, params: &ParamStore, input: &Matrix) -> Result<Matrix> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(params, &x)?;
        }
        Ok(x)
    }

    fn backward(&mut self, params: &mut ParamStore, upstream: &Matrix) -> Result<Matrix> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(params, &g)?;
        }
        Ok(g)
    }
}

/// Logistic function, clamped to the open interval (0, 1).
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |r, c| sigmoid_scalar(x.get(r, c)))
}

/// Gradient through the sigmoid given its forward output.
pub fn sigmoid_backward(output: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    let local = output.map("sigmoid_backward", |s| s * (1.0 - s))?;
    upstream.hadamard(&local)
}
