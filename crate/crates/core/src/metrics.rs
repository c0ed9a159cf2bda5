//! Image similarity scores.

use crate::error::{Error, Result};

/// One scored time point of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityRecord {
    pub t: f64,
    pub s: f64,
    pub s_r: f64,
    pub efficiency: f64,
}

fn check_image(a: &[f64], label: &str) -> Result<f64> {
    if a.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("{label} image has negative or non-finite pixels")));
    }
    let norm2: f64 = a.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return Err(Error::invalid(format!("{label} image is all zero")));
    }
    Ok(norm2)
}

/// Cosine similarity `Σ A B / sqrt(Σ A² Σ B²)` of two intensity images.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "image sizes differ: {} vs {} pixels",
            a.len(),
            b.len()
        )));
    }
    let na = check_image(a, "first")?;
    let nb = check_image(b, "second")?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb).sqrt()).min(1.0))
}

/// `(S - S_bg) / (1 - S_bg)`.
pub fn relative_similarity(s: f64, s_bg: f64) -> Result<f64> {
    if !(s_bg < 1.0) {
        return Err(Error::invalid(format!(
            "background similarity {s_bg} leaves no dynamic range"
        )));
    }
    Ok((s - s_bg) / (1.0 - s_bg))
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackgroundModel {
    /// A featureless frame (any constant level gives the same score).
    Uniform,
    Supplied(Vec<f64>),
}

/// Similarity of the original image to the background model. A score of 1
/// is rejected because `S_r` would be undefined.
pub fn background_similarity(original: &[f64], model: &BackgroundModel) -> Result<f64> {
    let s = match model {
        BackgroundModel::Uniform => similarity(original, &vec![1.0; original.len()])?,
        BackgroundModel::Supplied(bg) => similarity(original, bg)?,
    };
    if s >= 1.0 - 1e-12 {
        return Err(Error::invalid(
            "original is indistinguishable from the background; S_r is undefined",
        ));
    }
    Ok(s)
}

/// Scores retrieved frames against a fixed original.
#[derive(Clone, Debug)]
pub struct Scorer {
    original: Vec<f64>,
    s_bg: f64,
}

impl Scorer {
    pub fn new(original: Vec<f64>, background: &BackgroundModel) -> Result<Self> {
        let s_bg = background_similarity(&original, background)?;
        Ok(Self { original, s_bg })
    }

    pub fn s_bg(&self) -> f64 {
        self.s_bg
    }

    pub fn original(&self) -> &[f64] {
        &self.original
    }

    pub fn score(&self, t: f64, image: &[f64], efficiency: f64) -> Result<SimilarityRecord> {
        let s = similarity(&self.original, image)?;
        Ok(SimilarityRecord {
            t,
            s,
            s_r: relative_similarity(s, self.s_bg)?,
            efficiency,
        })
    }
}
