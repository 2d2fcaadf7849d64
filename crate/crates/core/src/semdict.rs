//! Semantic dictionary generation from class word embeddings.
//!
//! The encoder maps each class embedding (a column of `S`) to a dictionary
//! atom in feature space; the decoder runs the same two weight matrices
//! transposed, in reverse order, to reconstruct the embeddings.

use rand::Rng;

use crate::diffcore::{fully_connected, Layer, LeakyRelu, Linear, ParamStore, Sequential};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Negative slope of every LeakyReLU in the autoencoder.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Class word embeddings, one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSpace {
    embeddings: Matrix,
    class_names: Vec<String>,
}

impl SemanticSpace {
    pub fn new(embeddings: Matrix, class_names: Vec<String>) -> Result<Self> {
        if class_names.len() != embeddings.cols() {
            return Err(Error::ClassCountMismatch {
                expected: embeddings.cols(),
                found: class_names.len(),
            });
        }
        if class_names.len() < 2 {
            return Err(Error::InvalidArgument(
                "a semantic space needs at least two classes".into(),
            ));
        }
        for (i, name) in class_names.iter().enumerate() {
            if embeddings.col(i).iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroEmbedding { class: name.clone() });
            }
        }
        Ok(SemanticSpace {
            embeddings,
            class_names,
        })
    }

    /// `k x c` embedding matrix.
    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn class_count(&self) -> usize {
        self.embeddings.cols()
    }

    /// Reorders classes so that new class `i` is old class `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        SemanticSpace::new(
            self.embeddings.select_cols(perm),
            perm.iter().map(|&i| self.class_names[i].clone()).collect(),
        )
    }
}

/// A `d x c` undercomplete dictionary; column `i` is the atom of class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDictionary {
    atoms: Matrix,
}

impl SemanticDictionary {
    pub fn new(atoms: Matrix) -> Result<Self> {
        let (d, c) = atoms.shape();
        if c >= d {
            return Err(Error::NotUndercomplete { classes: c, dim: d });
        }
        if atoms.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "dictionary" });
        }
        Ok(SemanticDictionary { atoms })
    }

    /// Square dictionaries are only meaningful in tests of the solver.
    #[doc(hidden)]
    pub fn new_unchecked(atoms: Matrix) -> Self {
        SemanticDictionary { atoms }
    }

    pub fn atoms(&self) -> &Matrix {
        &self.atoms
    }

    pub fn feature_dim(&self) -> usize {
        self.atoms.rows()
    }

    pub fn class_count(&self) -> usize {
        self.atoms.cols()
    }

    pub fn into_matrix(self) -> Matrix {
        self.atoms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AutoencoderDims {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
}

impl Default for AutoencoderDims {
    fn default() -> Self {
        AutoencoderDims {
            embedding_dim: 300,
            hidden: 1024,
            feature_dim: 2048,
        }
    }
}

pub const FC1_WEIGHT: &str = "ae.fc1.weight";
pub const FC1_BIAS: &str = "ae.fc1.bias";
pub const FC2_WEIGHT: &str = "ae.fc2.weight";
pub const FC2_BIAS: &str = "ae.fc2.bias";

/// Encoder `S -> D` and decoder `D -> Ŝ` sharing two weight matrices.
///
/// encoder: `lrelu(W2 · lrelu(W1 · s + b1) + b2)`
/// decoder: `W1ᵀ · lrelu(W2ᵀ · a)`
pub struct TiedAutoencoder {
    dims: AutoencoderDims,
    encoder: Sequential,
    decoder: Sequential,
}

impl TiedAutoencoder {
    pub fn build<R: Rng>(params: &mut ParamStore, rng: &mut R, dims: AutoencoderDims) -> Result<Self> {
        let fc1 = fully_connected(params, rng, "ae.fc1", dims.embedding_dim, dims.hidden, true)?;
        let fc2 = fully_connected(params, rng, "ae.fc2", dims.hidden, dims.feature_dim, true)?;
        Ok(Self::from_existing(dims, fc1, fc2))
    }

    /// Wires layers over parameters already present in a store.
    pub fn attach(params: &ParamStore, dims: AutoencoderDims) -> Result<Self> {
        for (name, shape) in [
            (FC1_WEIGHT, (dims.hidden, dims.embedding_dim)),
            (FC1_BIAS, (dims.hidden, 1)),
            (FC2_WEIGHT, (dims.feature_dim, dims.hidden)),
            (FC2_BIAS, (dims.feature_dim, 1)),
        ] {
            let v = params.value(name)?;
            if v.shape() != shape {
                return Err(Error::DimensionMismatch {
                    op: "attach_autoencoder",
                    left: shape,
                    right: v.shape(),
                });
            }
        }
        Ok(Self::from_existing(
            dims,
            Linear::new(FC1_WEIGHT, Some(FC1_BIAS.into())),
            Linear::new(FC2_WEIGHT, Some(FC2_BIAS.into())),
        ))
    }

    /// Reads the dimensions off the stored weights.
    pub fn dims_from(params: &ParamStore) -> Result<AutoencoderDims> {
        let w1 = params.value(FC1_WEIGHT)?;
        let w2 = params.value(FC2_WEIGHT)?;
        Ok(AutoencoderDims {
            embedding_dim: w1.cols(),
            hidden: w1.rows(),
            feature_dim: w2.rows(),
        })
    }

    fn from_existing(dims: AutoencoderDims, fc1: Linear, fc2: Linear) -> Self {
        let lrelu = || Box::new(LeakyRelu::new(LEAKY_SLOPE).expect("positive slope"));
        let decoder = Sequential::new(
            "decoder",
            vec![
                Box::new(Linear::transposed(fc2.weight_name())),
                lrelu(),
                Box::new(Linear::transposed(fc1.weight_name())),
            ],
        );
        let encoder = Sequential::new(
            "encoder",
            vec![Box::new(fc1), lrelu(), Box::new(fc2), lrelu()],
        );
        TiedAutoencoder {
            dims,
            encoder,
            decoder,
        }
    }

    pub fn dims(&self) -> AutoencoderDims {
        self.dims
    }

    /// `D = encoder(S)`, rejecting dictionaries that are not undercomplete.
    pub fn generate_dictionary(
        &mut self,
        params: &ParamStore,
        space: &SemanticSpace,
    ) -> Result<SemanticDictionary> {
        if space.embedding_dim() != self.dims.embedding_dim {
            return Err(Error::DimensionMismatch {
                op: "generate_dictionary",
                left: (self.dims.embedding_dim, space.class_count()),
                right: space.embeddings().shape(),
            });
        }
        if space.class_count() >= self.dims.feature_dim {
            return Err(Error::NotUndercomplete {
                classes: space.class_count(),
                dim: self.dims.feature_dim,
            });
        }
        SemanticDictionary::new(self.encoder.forward(params, space.embeddings())?)
    }

    /// Accumulates encoder gradients given `dL/dD`.
    pub fn encoder_backward(&mut self, params: &mut ParamStore, grad_dict: &Matrix) -> Result<()> {
        self.encoder.backward(params, grad_dict)?;
        Ok(())
    }

    /// `Ŝ = decoder(D)`.
    pub fn reconstruct(&mut self, params: &ParamStore, dict: &SemanticDictionary) -> Result<Matrix> {
        self.decoder.forward(params, dict.atoms())
    }

    /// Accumulates decoder gradients given `dL/dŜ` and returns `dL/dD`.
    pub fn decoder_backward(&mut self, params: &mut ParamStore, grad_recon: &Matrix) -> Result<Matrix> {
        self.decoder.backward(params, grad_recon)
    }
}

/// Mean cosine similarity between embeddings and reconstructions.
#[derive(Debug, Clone)]
pub struct SimilarityLoss {
    pub value: f64,
    pub per_class: Vec<f64>,
    /// `dL_sim/dŜ`.
    pub grad: Matrix,
}

/// `L_sim = (1/c) Σ cos(s_i, ŝ_i)` with its gradient with respect to `Ŝ`.
pub fn similarity_loss(space: &SemanticSpace, reconstructed: &Matrix) -> Result<SimilarityLoss> {
    let s = space.embeddings();
    if s.shape() != reconstructed.shape() {
        return Err(Error::DimensionMismatch {
            op: "similarity_loss",
            left: s.shape(),
            right: reconstructed.shape(),
        });
    }
    let (k, c) = s.shape();
    let mut per_class = Vec::with_capacity(c);
    let mut grad = vec![0.0; k * c];
    for i in 0..c {
        let si = s.col(i);
        let ri = reconstructed.col(i);
        let s_norm = si.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r_norm = ri.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm == 0.0 {
            return Err(Error::ZeroReconstruction {
                class: space.class_names()[i].clone(),
            });
        }
        let dot: f64 = si.iter().zip(&ri).map(|(a, b)| a * b).sum();
        let cos = dot / (s_norm * r_norm);
        per_class.push(cos);
        // d cos / d r = s / (|s||r|) - cos · r / |r|²
        for j in 0..k {
            grad[j * c + i] =
                (si[j] / (s_norm * r_norm) - cos * ri[j] / (r_norm * r_norm)) / c as f64;
        }
    }
    let value = per_class.iter().sum::<f64>() / c as f64;
    Ok(SimilarityLoss {
        value,
        per_class,
        grad: Matrix::from_vec(k, c, grad)?,
    })
}
