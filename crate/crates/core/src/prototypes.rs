//! Category prototypes, cosine scoring, softmax classification and the
//! InfoNCE loss with its gradients.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::Taxonomy;
use crate::encoder::nn::softmax;
use crate::{Error, Result};

/// Norms below this are treated as zero.
const MIN_NORM: f64 = 1e-12;

/// One learnable `E`-vector per category, rows aligned with `codes`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub codes: Vec<String>,
    /// `C x E`
    pub prototypes: Array2<f64>,
    /// Logits are `s / temperature`; `1.0` uses raw cosine values.
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub similarities: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
    pub code: String,
}

impl PrototypeBank {
    /// Seeded unit-norm prototypes, one per taxonomy category.
    pub fn init<R: Rng>(taxonomy: &Taxonomy, dim: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("prototype dimension must be positive".into()));
        }
        let c = taxonomy.len();
        let mut prototypes = Array2::zeros((c, dim));
        for mut row in prototypes.outer_iter_mut() {
            loop {
                row.mapv_inplace(|_| StandardNormal.sample(rng));
                let n = norm(row.view());
                if n > 1e-6 {
                    row /= n;
                    break;
                }
            }
        }
        Self::new(taxonomy.categories.clone(), prototypes, 1.0)
    }

    pub fn new(codes: Vec<String>, prototypes: Array2<f64>, temperature: f64) -> Result<Self> {
        if codes.len() != prototypes.nrows() {
            return Err(Error::Argument(format!(
                "{} codes for {} prototypes",
                codes.len(),
                prototypes.nrows()
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        for (code, row) in codes.iter().zip(prototypes.outer_iter()) {
            if norm(row) < MIN_NORM {
                return Err(Error::DegenerateVector(format!("prototype {code} has zero norm")));
            }
        }
        Ok(PrototypeBank {
            codes,
            prototypes,
            temperature,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.ncols()
    }

    /// Cosine similarity of `h` to every prototype.
    pub fn similarities(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        if h.len() != self.dim() {
            return Err(Error::Argument(format!(
                "representation has dim {}, prototypes have {}",
                h.len(),
                self.dim()
            )));
        }
        let hn = norm(h);
        if hn < MIN_NORM {
            return Err(Error::DegenerateVector("video representation has zero norm".into()));
        }
        let mut s = Array1::zeros(self.n_classes());
        for (j, p) in self.prototypes.outer_iter().enumerate() {
            let pn = norm(p);
            if pn < MIN_NORM {
                return Err(Error::DegenerateVector(format!(
                    "prototype {} has zero norm",
                    self.codes[j]
                )));
            }
            s[j] = h.dot(&p) / (hn * pn);
        }
        Ok(s)
    }
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// `h . p / (|h| |p|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(h: ArrayView1<f64>, p: ArrayView1<f64>) -> Result<f64> {
    if h.len() != p.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch {} vs {}",
            h.len(),
            p.len()
        )));
    }
    let (hn, pn) = (norm(h), norm(p));
    if hn < MIN_NORM || pn < MIN_NORM {
        return Err(Error::DegenerateVector("cosine similarity of a zero vector".into()));
    }
    Ok((h.dot(&p) / (hn * pn)).clamp(-1.0, 1.0))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax over prototype similarities.
pub fn classify(h: ArrayView1<f64>, bank: &PrototypeBank) -> Result<ClassificationResult> {
    let s = bank.similarities(h)?;
    let probs = softmax((&s / bank.temperature).view());
    let probabilities = probs.to_vec();
    let predicted = argmax(&probabilities);
    Ok(ClassificationResult {
        similarities: s.to_vec(),
        probabilities,
        predicted,
        code: bank.codes[predicted].clone(),
    })
}

fn check_label(c: usize, bank: &PrototypeBank) -> Result<()> {
    if c >= bank.n_classes() {
        return Err(Error::Taxonomy(format!(
            "category index {c} outside taxonomy of {} classes",
            bank.n_classes()
        )));
    }
    Ok(())
}

/// Summed InfoNCE loss over a batch of `(h_video, category)` pairs.
pub fn infonce_loss(batch: &[(Array1<f64>, usize)], bank: &PrototypeBank) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("InfoNCE needs a non-empty batch".into()));
    }
    let mut total = 0.0;
    for (h, c) in batch {
        check_label(*c, bank)?;
        let z = bank.similarities(h.view())? / bank.temperature;
        total += logsumexp(&z) - z[*c];
    }
    Ok(total)
}

fn logsumexp(z: &Array1<f64>) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Loss of one item with `dL/dh`; `dL/dP` is accumulated into `dprototypes`.
pub fn infonce_item_backward(
    h: ArrayView1<f64>,
    c: usize,
    bank: &PrototypeBank,
    dprototypes: &mut Array2<f64>,
) -> Result<(f64, Array1<f64>)> {
    check_label(c, bank)?;
    let s = bank.similarities(h)?;
    let tau = bank.temperature;
    let z = &s / tau;
    let loss = logsumexp(&z) - z[c];
    let q = softmax(z.view());

    let hn = norm(h);
    let hhat = &h / hn;
    let mut dh = Array1::zeros(h.len());
    for (j, p) in bank.prototypes.outer_iter().enumerate() {
        let ds = (q[j] - if j == c { 1.0 } else { 0.0 }) / tau;
        let pn = norm(p);
        let phat = &p / pn;
        // d s_j / d h = (p^ - s_j h^) / |h|,  d s_j / d p_j = (h^ - s_j p^) / |p_j|
        dh.scaled_add(ds / hn, &(&phat - &(&hhat * s[j])));
        let mut row = dprototypes.row_mut(j);
        row.scaled_add(ds / pn, &(&hhat - &(&phat * s[j])));
    }
    Ok((loss, dh))
}

/// Gradients of the summed batch loss.
#[derive(Debug, Clone)]
pub struct InfoNceGradients {
    pub loss: f64,
    pub dh: Vec<Array1<f64>>,
    pub dprototypes: Array2<f64>,
}

pub fn infonce_gradients(batch: &[(Array1<f64>, usize)], bank: &PrototypeBank) -> Result<InfoNceGradients> {
    if batch.is_empty() {
        return Err(Error::Argument("InfoNCE needs a non-empty batch".into()));
    }
    let mut dprototypes = Array2::zeros(bank.prototypes.raw_dim());
    let mut dh = Vec::with_capacity(batch.len());
    let mut loss = 0.0;
    for (h, c) in batch {
        let (l, g) = infonce_item_backward(h.view(), *c, bank, &mut dprototypes)?;
        loss += l;
        dh.push(g);
    }
    Ok(InfoNceGradients { loss, dh, dprototypes })
}

/// Euclidean norm of every prototype.
pub fn prototype_norms(bank: &PrototypeBank) -> Array1<f64> {
    bank.prototypes.map_axis(Axis(1), |r| norm(r))
}
