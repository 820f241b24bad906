//! Greedy MAP selection over a kernel with an accuracy term.
//!
//! [`bs_dpp_select`] grows a list `S` one item at a time, picking
//!
//! ```text
//! argmax_i  g(u,i|S) + α·log d_i²
//! ```
//!
//! where `d_i²` is the Schur complement `D_ii − D_iS D_S⁻¹ D_Si`, kept up to
//! date by an incremental Cholesky factorization in `O(N·|S|)` per step, and
//! `g` is re-queried from a [`Scorer`] after every pick.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{CandidateSet, RerankResult, StepRecord};
use crate::kernel::KernelMatrix;
use crate::linalg::{log_det, principal_submatrix};
use crate::{Error, Result};

/// Accuracy term of the greedy objective.
pub trait Scorer {
    /// Writes the score of every candidate index in `remaining` into `out`
    /// (same positions), given everything selected so far.
    fn scores(&mut self, remaining: &[usize], out: &mut [f64]) -> Result<()>;

    /// Called once `index` has been appended to the selection.
    fn select(&mut self, index: usize) -> Result<()>;

    /// True when scores never depend on the selection, so one query suffices.
    fn is_static(&self) -> bool {
        false
    }
}

/// Context-free scores, e.g. the upstream point-wise `base_score`.
#[derive(Debug, Clone)]
pub struct FixedScores(pub Vec<f64>);

impl Scorer for FixedScores {
    fn scores(&mut self, remaining: &[usize], out: &mut [f64]) -> Result<()> {
        for (o, &i) in out.iter_mut().zip(remaining) {
            *o = self.0[i];
        }
        Ok(())
    }

    fn select(&mut self, _index: usize) -> Result<()> {
        Ok(())
    }

    fn is_static(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub k: usize,
    /// Seed the first pick with `argmax log D_ii` alone instead of the joint objective.
    pub paper_literal_init: bool,
}

impl SelectionConfig {
    pub fn new(alpha: f64, k: usize) -> Self {
        Self {
            alpha,
            epsilon: 1e-9,
            k,
            paper_literal_init: false,
        }
    }
}

impl From<&crate::ExperimentConfig> for SelectionConfig {
    fn from(c: &crate::ExperimentConfig) -> Self {
        Self {
            alpha: c.alpha,
            epsilon: c.epsilon,
            k: c.k,
            paper_literal_init: c.paper_literal_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub index: usize,
    pub score: f64,
    /// `log d²` of the pick, or `None` if it was not positive.
    pub log_d2: Option<f64>,
    /// `score + α·log d²`, the increase of the objective.
    pub marginal: f64,
}

/// Output of a greedy run in candidate-index space.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub steps: Vec<Step>,
    pub objective: f64,
    pub truncated: bool,
}

impl Selection {
    pub fn order(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.index).collect()
    }

    pub fn into_result(self, candidates: &CandidateSet) -> RerankResult {
        let id = |i: usize| candidates.items[i].item_id.clone();
        RerankResult {
            user_id: candidates.user_id.clone(),
            items: self.steps.iter().map(|s| id(s.index)).collect(),
            steps: self
                .steps
                .iter()
                .map(|s| StepRecord {
                    item_id: id(s.index),
                    score: s.score,
                    log_d2: s.log_d2,
                    marginal: s.marginal,
                })
                .collect(),
            objective: self.objective,
            truncated: self.truncated,
        }
    }
}

/// State visible before each pick, for diagnostics and tests.
pub struct StepView<'a> {
    pub selected: &'a [usize],
    pub remaining: &'a [usize],
    /// Indexed by candidate, meaningful for `remaining`.
    pub d2: &'a [f64],
    /// Indexed by candidate, meaningful for `remaining`.
    pub scores: &'a [f64],
}

pub fn bs_dpp_select<S: Scorer + ?Sized>(
    kernel: &KernelMatrix,
    scorer: &mut S,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    bs_dpp_select_traced(kernel, scorer, cfg, |_| {})
}

pub fn bs_dpp_select_traced<S, F>(
    kernel: &KernelMatrix,
    scorer: &mut S,
    cfg: &SelectionConfig,
    mut on_step: F,
) -> Result<Selection>
where
    S: Scorer + ?Sized,
    F: FnMut(&StepView<'_>),
{
    let n = kernel.n();
    let k = cfg.k;
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds the {n} candidates")));
    }
    if cfg.epsilon.is_nan() || cfg.epsilon < 0.0 {
        return Err(Error::Validation(format!(
            "epsilon = {} must be non-negative",
            cfg.epsilon
        )));
    }
    let alpha = cfg.alpha;
    let eps = cfg.epsilon;
    let diversity = alpha > 0.0;

    // d2 and scores are indexed by candidate; a selected item gets d² = 0,
    // which the ε test already excludes, so scans run over all n contiguously
    let mut d2: Vec<f64> = (0..n).map(|i| kernel.get(i, i)).collect();
    let mut scores = vec![0.0; n];
    // column t holds entry t of every c_i, so c_i is strided by n
    let mut c = vec![0.0; n * k];
    let mut inner = vec![0.0; n];
    let mut live = vec![0.0; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(k);
    let mut steps = Vec::with_capacity(k);
    let mut objective = 0.0;
    let mut truncated = false;
    let static_scores = scorer.is_static();

    for t in 0..k {
        if t == 0 || !static_scores {
            let live = &mut live[..remaining.len()];
            scorer.scores(&remaining, live)?;
            for (&i, &g) in remaining.iter().zip(live.iter()) {
                scores[i] = g;
            }
        }
        on_step(&StepView {
            selected: &selected,
            remaining: &remaining,
            d2: &d2,
            scores: &scores,
        });

        let best = if t == 0 && cfg.paper_literal_init {
            // no d² above epsilon: without the diversity term fall back to the first candidate
            argmax_log(&vec![0.0; n], &d2, 1.0, eps).or((!diversity).then_some(0))
        } else if diversity {
            argmax_log(&scores, &d2, alpha, eps)
        } else {
            let mut best: Option<usize> = None;
            for &i in &remaining {
                if best.is_none_or(|b| scores[i] > scores[b]) {
                    best = Some(i);
                }
            }
            best
        };
        let Some(j) = best else {
            truncated = true;
            break;
        };

        let pos = remaining.binary_search(&j).expect("picked a remaining candidate");
        remaining.remove(pos);
        let dj2 = d2[j];
        d2[j] = 0.0;
        let g = scores[j];
        let log_d2 = (dj2 > 0.0).then(|| dj2.ln());
        let marginal = if diversity { g + alpha * dj2.ln() } else { g };
        objective += marginal;
        steps.push(Step {
            index: j,
            score: g,
            log_d2,
            marginal,
        });
        selected.push(j);
        scorer.select(j)?;

        if t + 1 == k {
            break;
        }
        if dj2 <= eps {
            // only reachable without the diversity term; the new column stays zero
            continue;
        }
        let inv_dj = 1.0 / dj2.sqrt();
        // ⟨c_j, c_i⟩ for every i at once, one column at a time; entries of
        // already selected items are computed but never read
        inner.fill(0.0);
        let (done, next) = c.split_at_mut(t * n);
        for col in done.chunks_exact(n) {
            let cj = col[j];
            for (acc, &ci) in inner.iter_mut().zip(col) {
                *acc += cj * ci;
            }
        }
        let col_t = &mut next[..n];
        for (((x, e_out), &d_ji), &acc) in d2.iter_mut().zip(col_t.iter_mut()).zip(kernel.row(j)).zip(&inner) {
            let e = (d_ji - acc) * inv_dj;
            *e_out = e;
            let v = *x - e * e;
            // clamps NaN and negative round-off to zero, and keeps selected items at zero
            *x = if v > 0.0 { v } else { 0.0 };
        }
    }

    Ok(Selection {
        steps,
        objective,
        truncated,
    })
}

/// Rounding allowance when pruning against a key of magnitude `b`.
fn slack(b: f64) -> f64 {
    1e-9 * (1.0 + b.abs())
}

/// Index maximizing `g + weight·ln d²` over candidates with `d² > eps`.
/// The lowest index wins ties.
fn argmax_log(g: &[f64], d2: &[f64], weight: f64, eps: f64) -> Option<usize> {
    const CHUNK: usize = 8;
    let (mut best_i, mut best) = (usize::MAX, f64::NEG_INFINITY);
    let mut cut = f64::NEG_INFINITY;
    for (c, (gc, xc)) in g.chunks(CHUNK).zip(d2.chunks(CHUNK)).enumerate() {
        // one bound for the whole chunk first; most chunks stop here
        let mut bound = f64::NEG_INFINITY;
        for (&gi, &x) in gc.iter().zip(xc) {
            let b = if x > eps {
                gi + weight * ln_upper(x)
            } else {
                f64::NEG_INFINITY
            };
            bound = if b > bound { b } else { bound };
        }
        if bound < cut {
            continue;
        }
        for (off, (&gi, &x)) in gc.iter().zip(xc).enumerate() {
            // the exact key is at most this bound, so it cannot win
            if x <= eps || gi + weight * ln_upper(x) < cut {
                continue;
            }
            let key = gi + weight * x.ln();
            // strict comparison keeps the lowest index on ties
            if key > best {
                (best_i, best) = (c * CHUNK + off, key);
                cut = best - slack(best);
            }
        }
    }
    (best_i != usize::MAX).then_some(best_i)
}

const MANTISSA: u64 = (1 << 52) - 1;
const TWO_52: u64 = 0x4330_0000_0000_0000;

/// Upper bound on `ln x` for positive normal `x`, read off the exponent and
/// mantissa bits: `log2(1 + m) ≤ m + 0.0861` on `[0, 1)`.
fn ln_upper(x: f64) -> f64 {
    let bits = x.to_bits();
    // biased exponent as a float: (2⁵² + e) − 2⁵²
    let exp = f64::from_bits(TWO_52 | (bits >> 52)) - f64::from_bits(TWO_52);
    // 1 + m as a float in [1, 2)
    let one_plus_m = f64::from_bits((bits & MANTISSA) | 1.0f64.to_bits());
    (exp - 1023.0 + one_plus_m - (1.0 - 0.0861)) * std::f64::consts::LN_2
}

/// Greedy DPP with the accuracy term frozen to `scores`.
pub fn fixed_score_dpp_select(kernel: &KernelMatrix, scores: &[f64], cfg: &SelectionConfig) -> Result<Selection> {
    if scores.len() != kernel.n() {
        return Err(Error::shape(format!(
            "{} scores for a {}-candidate kernel",
            scores.len(),
            kernel.n()
        )));
    }
    bs_dpp_select(kernel, &mut FixedScores(scores.to_vec()), cfg)
}

/// `Σ g + α·log det D_S`, skipping the determinant when `α = 0`.
pub fn subset_objective(kernel: &KernelMatrix, scores: &[f64], alpha: f64, subset: &[usize]) -> f64 {
    let g: f64 = subset.iter().map(|&i| scores[i]).sum();
    if alpha == 0.0 {
        return g;
    }
    let sub = principal_submatrix(kernel.as_slice(), kernel.n(), subset);
    g + alpha * log_det(&sub, subset.len())
}

pub const EXHAUSTIVE_MAX_N: usize = 16;

/// Best `k`-subset by enumeration; the first maximizer in lexicographic order wins.
pub fn exhaustive_map(kernel: &KernelMatrix, scores: &[f64], alpha: f64, k: usize) -> Result<(Vec<usize>, f64)> {
    let n = kernel.n();
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::Validation(format!(
            "exhaustive search limited to {EXHAUSTIVE_MAX_N} candidates, got {n}"
        )));
    }
    if k == 0 || k > n || scores.len() != n {
        return Err(Error::Validation(format!(
            "exhaustive search needs 1 <= k <= n and n scores (k={k}, n={n}, scores={})",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (idx.clone(), subset_objective(kernel, scores, alpha, &idx));
    while let Some(p) = (0..k).rev().find(|&p| idx[p] < n - k + p) {
        idx[p] += 1;
        for q in p + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
        let h = subset_objective(kernel, scores, alpha, &idx);
        if h > best.1 {
            best = (idx.clone(), h);
        }
    }
    Ok(best)
}

/// Maximal marginal relevance: `argmax λ·g(i) − (1−λ)·max_{j∈S} sim(i,j)`.
pub fn mmr_select<F>(scores: &[f64], sim: F, lambda: f64, k: usize) -> Result<Vec<usize>>
where
    F: Fn(usize, usize) -> f64,
{
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Validation(format!("lambda {lambda} outside [0,1]")));
    }
    let n = scores.len();
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds the {n} candidates")));
    }
    let mut max_sim = vec![f64::NEG_INFINITY; n];
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let penalty = if out.is_empty() { 0.0 } else { max_sim[i] };
            let v = lambda * scores[i] - (1.0 - lambda) * penalty;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        let (j, _) = best.expect("k <= n leaves a candidate");
        taken[j] = true;
        out.push(j);
        for i in (0..n).filter(|&i| !taken[i]) {
            max_sim[i] = max_sim[i].max(sim(i, j));
        }
    }
    Ok(out)
}

/// `step,chosen_id,g,log_d2,marginal`; an absent `log_d2` is written as `-inf`.
pub fn diagnostics_csv(result: &RerankResult) -> String {
    let mut s = String::from("step,chosen_id,g,log_d2,marginal\n");
    for (t, r) in result.steps.iter().enumerate() {
        let ld = r.log_d2.map_or("-inf".to_string(), |v| format!("{v:?}"));
        writeln!(s, "{t},{},{:?},{ld},{:?}", r.item_id, r.score, r.marginal).unwrap();
    }
    s
}

pub fn write_diagnostics(path: &Path, result: &RerankResult) -> Result<()> {
    std::fs::write(path, diagnostics_csv(result)).map_err(|e| Error::io(path, e))
}
