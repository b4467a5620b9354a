//! The three-network model plus learnable centroids.
//!
//! Wiring: the feature extractor feeds the classifier directly, the
//! discriminator through the gradient reverse layer, and the cluster
//! assignment through the Student's-t kernel. Forward through the GRL is
//! the identity, so `discriminate_probs` is a plain composition; the
//! `-lambda` scaling happens where the trainer routes the domain-loss
//! gradient back into the feature extractor.

use rand::Rng;

use crate::error::{Error, Result};
use crate::losses::AssignmentMatrix;
use crate::matrix::Matrix;
use crate::nn::{forward, Activation, LayerStack, Tape};

/// Number of classes: bona-fide (0) and attack (1).
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct DcdaModel {
    pub feature_extractor: LayerStack,
    pub classifier: LayerStack,
    pub discriminator: LayerStack,
    /// `NUM_CLASSES x h`, rows ordered [bona-fide, attack].
    pub centroids: Matrix,
}

/// One training batch: feature rows plus optional class labels (true or
/// pseudo) and per-sample domain labels (0 source, 1 target).
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Matrix,
    pub class_labels: Option<Vec<usize>>,
    pub domain_labels: Vec<usize>,
}

impl DcdaModel {
    /// Builds the three stacks with Glorot-uniform weights.
    ///
    /// Shapes: F = `input_dim -> feature_hidden.. -> embed_dim` (hidden
    /// layers relu, embedding layer identity), C = `embed_dim -> 2`
    /// softmax, D = `embed_dim -> disc_hidden.. -> 2` softmax. Centroids
    /// start at zero; the initialization block overwrites them.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        feature_hidden: &[usize],
        embed_dim: usize,
        disc_hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || embed_dim == 0 {
            return Err(Error::InvalidConfig(
                "input_dim and embed_dim must be positive".into(),
            ));
        }
        let mut f_dims = vec![input_dim];
        f_dims.extend_from_slice(feature_hidden);
        f_dims.push(embed_dim);
        let mut f_acts = vec![Activation::Relu; feature_hidden.len()];
        f_acts.push(Activation::Identity);
        let feature_extractor = LayerStack::glorot(&f_dims, &f_acts, rng)?;

        let classifier = LayerStack::glorot(&[embed_dim, NUM_CLASSES], &[Activation::Softmax], rng)?;

        let mut d_dims = vec![embed_dim];
        d_dims.extend_from_slice(disc_hidden);
        d_dims.push(NUM_CLASSES);
        let mut d_acts = vec![Activation::Relu; disc_hidden.len()];
        d_acts.push(Activation::Softmax);
        let discriminator = LayerStack::glorot(&d_dims, &d_acts, rng)?;

        Ok(DcdaModel {
            feature_extractor,
            classifier,
            discriminator,
            centroids: Matrix::zeros(NUM_CLASSES, embed_dim),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.feature_extractor.out_dim();
        if self.classifier.in_dim() != h {
            return Err(Error::DimensionMismatch(format!(
                "classifier expects {} inputs, feature extractor emits {h}",
                self.classifier.in_dim()
            )));
        }
        if self.discriminator.in_dim() != h {
            return Err(Error::DimensionMismatch(format!(
                "discriminator expects {} inputs, feature extractor emits {h}",
                self.discriminator.in_dim()
            )));
        }
        if self.centroids.rows() != NUM_CLASSES || self.centroids.cols() != h {
            return Err(Error::DimensionMismatch(format!(
                "centroids are {}x{}, expected {NUM_CLASSES}x{h}",
                self.centroids.rows(),
                self.centroids.cols()
            )));
        }
        if !self.centroids.all_finite() {
            return Err(Error::InvalidConfig("centroids contain non-finite values".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.feature_extractor.in_dim()
    }

    #[inline]
    pub fn embed_dim(&self) -> usize {
        self.feature_extractor.out_dim()
    }

    /// `z = F(x)`.
    pub fn embed(&self, features: &Matrix) -> Result<Matrix> {
        Ok(forward(&self.feature_extractor, features)?.0)
    }

    /// Embedding plus the tape needed to backpropagate into F.
    pub fn embed_with_tape(&self, features: &Matrix) -> Result<(Matrix, Tape)> {
        forward(&self.feature_extractor, features)
    }

    /// `softmax(C(F(x)))`: column 0 bona-fide, column 1 attack.
    pub fn classify_probs(&self, features: &Matrix) -> Result<AssignmentMatrix> {
        let z = self.embed(features)?;
        let (probs, _) = forward(&self.classifier, &z)?;
        AssignmentMatrix::new(probs)
    }

    /// `D(z)` on embeddings. The GRL is the identity forward, so the value
    /// is independent of lambda; lambda only scales the gradient the
    /// trainer sends back into the feature extractor.
    pub fn discriminate_probs(&self, embeddings: &Matrix, _lambda: f64) -> Result<AssignmentMatrix> {
        let (probs, _) = forward(&self.discriminator, embeddings)?;
        AssignmentMatrix::new(probs)
    }
}
