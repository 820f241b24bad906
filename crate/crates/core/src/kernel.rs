//! Perception-aware diversity kernel.
//!
//! The composite similarity of two candidates for one user is
//!
//! ```text
//! D(i,j) = D_item(i,j) + β1·D_macro(i,j) + β2·D_micro(i,j)   (+ δ on the diagonal)
//! ```
//!
//! where each term is an elementary kernel `a²·exp(−s(x_i, x_j)/b²)`. For
//! `D_item` the inputs are item embeddings; for `D_macro` / `D_micro` they are
//! item embeddings modulated by the user's macro / micro interest vector, so
//! the same pair of items can look similar to one user and dissimilar to
//! another.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CandidateSet, ExperimentConfig};
use crate::interest::InterestProfile;
use crate::linalg::{dot, hadamard, normalized, squared_distance};
use crate::{Error, Result};

/// How `s(x_i, x_j)` is formed inside `exp(−s/b²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// `s = ‖x_i − x_j‖²`, the classical squared-exponential kernel (PSD).
    #[default]
    SquaredDistance,
    /// `s = ⟨x_i, x_j⟩`. Not PSD: every 2×2 minor of distinct points is negative.
    DotProduct,
}

/// How an item embedding is combined with an interest vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterestModulation {
    /// `e_i ⊙ h`, a vector of the same length.
    #[default]
    Elementwise,
    /// `⟨e_i, h⟩`, a single number.
    Scalar,
}

/// `a²·exp(−⟨x, y⟩/b²)`.
pub fn elementary_kernel(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    a * a * (-dot(x, y) / (b * b)).exp()
}

/// `a²·exp(−‖x − y‖²/b²)`.
pub fn se_kernel(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    a * a * (-squared_distance(x, y) / (b * b)).exp()
}

impl KernelForm {
    pub fn eval(self, x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
        match self {
            KernelForm::SquaredDistance => se_kernel(x, y, a, b),
            KernelForm::DotProduct => elementary_kernel(x, y, a, b),
        }
    }
}

impl InterestModulation {
    pub fn apply(self, embedding: &[f64], interest: &[f64]) -> Vec<f64> {
        match self {
            InterestModulation::Elementwise => hadamard(embedding, interest),
            InterestModulation::Scalar => vec![dot(embedding, interest)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyperparams {
    pub a_l: f64,
    pub b_l: f64,
    pub a_s: f64,
    pub b_s: f64,
    pub a_item: f64,
    pub b_item: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub jitter: f64,
    pub normalize: bool,
    pub form: KernelForm,
    pub modulation: InterestModulation,
}

impl Default for KernelHyperparams {
    fn default() -> Self {
        Self::from(&ExperimentConfig::default())
    }
}

impl From<&ExperimentConfig> for KernelHyperparams {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            a_l: c.a_l,
            b_l: c.b_l,
            a_s: c.a_s,
            b_s: c.b_s,
            a_item: c.a_item,
            b_item: c.b_item,
            beta1: c.beta1,
            beta2: c.beta2,
            jitter: c.jitter,
            normalize: c.normalize_embeddings,
            form: c.kernel_form,
            modulation: c.interest_modulation,
        }
    }
}

impl KernelHyperparams {
    /// Item-level kernel only, as used by the fixed-score DPP baseline.
    pub fn item_only(&self) -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.0,
            ..self.clone()
        }
    }

    fn prepare(&self, e: &[f64]) -> Vec<f64> {
        if self.normalize {
            normalized(e)
        } else {
            e.to_vec()
        }
    }

    pub fn item_kernel(&self, e_i: &[f64], e_j: &[f64]) -> f64 {
        self.form
            .eval(&self.prepare(e_i), &self.prepare(e_j), self.a_item, self.b_item)
    }

    pub fn macro_kernel(&self, e_i: &[f64], e_j: &[f64], profile: &InterestProfile) -> f64 {
        let xi = self.modulation.apply(&self.prepare(e_i), &profile.h_macro);
        let xj = self.modulation.apply(&self.prepare(e_j), &profile.h_macro);
        self.form.eval(&xi, &xj, self.a_l, self.b_l)
    }

    pub fn micro_kernel(&self, e_i: &[f64], e_j: &[f64], profile: &InterestProfile) -> f64 {
        let xi = self.modulation.apply(&self.prepare(e_i), &profile.h_micro);
        let xj = self.modulation.apply(&self.prepare(e_j), &profile.h_micro);
        self.form.eval(&xi, &xj, self.a_s, self.b_s)
    }
}

/// Symmetric `N×N` similarity matrix over a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape(format!("{n}x{n} kernel given {} entries", data.len())));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Square CSV, one row per line, full precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                write!(s, "{v:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Composite kernel for raw embeddings and interest vectors. `O(d·N²)`.
pub fn composite_from_parts(
    embeddings: &[&[f64]],
    h_macro: &[f64],
    h_micro: &[f64],
    hp: &KernelHyperparams,
) -> Result<KernelMatrix> {
    let n = embeddings.len();
    let d = embeddings.first().map_or(0, |e| e.len());
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::shape("candidate embeddings differ in length"));
    }
    let use_macro = hp.beta1 != 0.0;
    let use_micro = hp.beta2 != 0.0;
    if (use_macro && h_macro.len() != d) || (use_micro && h_micro.len() != d) {
        return Err(Error::shape(format!(
            "interest vectors ({}, {}) vs embedding dim {d}",
            h_macro.len(),
            h_micro.len()
        )));
    }
    let base: Vec<Vec<f64>> = embeddings.iter().map(|e| hp.prepare(e)).collect();
    let macro_x: Vec<Vec<f64>> = if use_macro {
        base.iter().map(|e| hp.modulation.apply(e, h_macro)).collect()
    } else {
        Vec::new()
    };
    let micro_x: Vec<Vec<f64>> = if use_micro {
        base.iter().map(|e| hp.modulation.apply(e, h_micro)).collect()
    } else {
        Vec::new()
    };

    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut v = hp.form.eval(&base[i], &base[j], hp.a_item, hp.b_item);
            if use_macro {
                v += hp.beta1 * hp.form.eval(&macro_x[i], &macro_x[j], hp.a_l, hp.b_l);
            }
            if use_micro {
                v += hp.beta2 * hp.form.eval(&micro_x[i], &micro_x[j], hp.a_s, hp.b_s);
            }
            if i == j {
                v += hp.jitter;
            }
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    KernelMatrix::from_vec(n, data)
}

pub fn composite_matrix(
    candidates: &CandidateSet,
    profile: &InterestProfile,
    hp: &KernelHyperparams,
) -> Result<KernelMatrix> {
    composite_from_parts(&candidates.embeddings(), &profile.h_macro, &profile.h_micro, hp)
}
