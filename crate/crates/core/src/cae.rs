//! Context-aware accuracy estimation.
//!
//! Two squeeze-and-excitation gates, one driven by the mean of the items
//! already selected (`h_prev`) and one by the mean of the whole candidate set
//! (`h_cand`), rescale the target item embedding and the user's macro and
//! micro interests. The seven resulting vectors
//!
//! ```text
//! [e, g_p⊙e, g_c⊙e, g_p⊙h_macro, g_p⊙h_micro, g_c⊙h_macro, g_c⊙h_micro]
//! ```
//!
//! feed a one-hidden-layer MLP with a two-logit softmax head. The logit of
//! the upstream score, when known, enters the head through a learned 1×2
//! weight, so the model refines the upstream score instead of replacing it.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{load_checkpoint, save_checkpoint, sgd_step, Tape, Tensor, Var};
use crate::data::{BehaviorEvent, EmbeddingTable, ItemRecord};
use crate::interest::{InterestInputs, InterestProfile, MieParams, MieShape};
use crate::linalg::{logit, mean_vector, sigmoid};
use crate::metrics::auc;
use crate::selection::Scorer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContextState {
    /// Mean embedding of the selected items; zero before the first pick.
    pub h_prev: Vec<f64>,
    /// Mean embedding of the whole candidate set.
    pub h_cand: Vec<f64>,
    pub count: usize,
}

impl ContextState {
    pub fn new(candidates: &[&[f64]]) -> Result<Self> {
        let h_cand = mean_vector(candidates.iter().copied())
            .ok_or_else(|| Error::Validation("context of an empty candidate set".into()))?;
        Ok(Self {
            h_prev: vec![0.0; h_cand.len()],
            h_cand,
            count: 0,
        })
    }

    /// Running-mean update with a newly selected embedding.
    pub fn update(&mut self, e: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (m, x) in self.h_prev.iter_mut().zip(e) {
            *m += (x - *m) / n;
        }
    }
}

pub fn update_context(ctx: &ContextState, newly_selected: &ItemRecord) -> ContextState {
    let mut next = ctx.clone();
    next.update(&newly_selected.embedding);
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaeParams {
    /// `d × d/r`
    pub w1_prev: Tensor,
    /// `d/r × d`
    pub w2_prev: Tensor,
    pub w1_cand: Tensor,
    pub w2_cand: Tensor,
    /// `7d × hidden`
    pub w_hidden: Tensor,
    pub b_hidden: Tensor,
    /// `hidden × 2`
    pub w_out: Tensor,
    pub b_out: Tensor,
    /// `1 × 2`, multiplies `logit(base_score)`.
    pub w_base: Tensor,
}

const CAE_NAMES: [&str; 9] = [
    "cae.w1_prev",
    "cae.w2_prev",
    "cae.w1_cand",
    "cae.w2_cand",
    "cae.w_hidden",
    "cae.b_hidden",
    "cae.w_out",
    "cae.b_out",
    "cae.w_base",
];

impl CaeParams {
    /// Random weights, zero biases, and `w_base = [0, 1]` so an untrained
    /// head starts close to the upstream score.
    pub fn new<R: Rng + ?Sized>(d: usize, reduction: usize, hidden: usize, rng: &mut R) -> Self {
        let r = (d / reduction.max(1)).max(1);
        let mut u = |rows, cols| Tensor::uniform(rows, cols, rows, rng).with_grad();
        Self {
            w1_prev: u(d, r),
            w2_prev: u(r, d),
            w1_cand: u(d, r),
            w2_cand: u(r, d),
            w_hidden: u(7 * d, hidden),
            b_hidden: Tensor::zeros(1, hidden).with_grad(),
            w_out: u(hidden, 2),
            b_out: Tensor::zeros(1, 2).with_grad(),
            w_base: Tensor::row(vec![0.0, 1.0]).with_grad(),
        }
    }

    pub fn zeros(d: usize, reduction: usize, hidden: usize) -> Self {
        let r = (d / reduction.max(1)).max(1);
        let z = |rows, cols| Tensor::zeros(rows, cols).with_grad();
        Self {
            w1_prev: z(d, r),
            w2_prev: z(r, d),
            w1_cand: z(d, r),
            w2_cand: z(r, d),
            w_hidden: z(7 * d, hidden),
            b_hidden: z(1, hidden),
            w_out: z(hidden, 2),
            b_out: z(1, 2),
            w_base: z(1, 2),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1_prev.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w1_prev,
            &self.w2_prev,
            &self.w1_cand,
            &self.w2_cand,
            &self.w_hidden,
            &self.b_hidden,
            &self.w_out,
            &self.b_out,
            &self.w_base,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w1_prev,
            &mut self.w2_prev,
            &mut self.w1_cand,
            &mut self.w2_cand,
            &mut self.w_hidden,
            &mut self.b_hidden,
            &mut self.w_out,
            &mut self.b_out,
            &mut self.w_base,
        ]
    }

    pub fn names() -> Vec<String> {
        CAE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    pub fn from_tensors(ts: Vec<Tensor>) -> Result<Self> {
        let [w1_prev, w2_prev, w1_cand, w2_cand, w_hidden, b_hidden, w_out, b_out, w_base]: [Tensor; 9] = ts
            .try_into()
            .map_err(|v: Vec<Tensor>| Error::shape(format!("expected 9 CAE tensors, got {}", v.len())))?;
        let p = Self {
            w1_prev,
            w2_prev,
            w1_cand,
            w2_cand,
            w_hidden,
            b_hidden,
            w_out,
            b_out,
            w_base,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let r = self.w1_prev.cols();
        let h = self.hidden();
        let want = [
            (d, r),
            (r, d),
            (d, r),
            (r, d),
            (7 * d, h),
            (1, h),
            (h, 2),
            (1, 2),
            (1, 2),
        ];
        for ((name, t), w) in CAE_NAMES.iter().zip(self.tensors()).zip(want) {
            if t.shape() != w {
                return Err(Error::shape(format!("{name} is {:?}, expected {w:?}", t.shape())));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundCae {
        let v: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t)).collect();
        BoundCae { vars: v }
    }

    fn check_dims(&self, vs: &[&[f64]]) -> Result<()> {
        let d = self.dim();
        if vs.iter().any(|v| v.len() != d) {
            return Err(Error::shape(format!("CAE inputs must have length {d}")));
        }
        Ok(())
    }

    /// Two logits `[no-click, click]` without a tape.
    pub fn logits(
        &self,
        target: &[f64],
        h_macro: &[f64],
        h_micro: &[f64],
        ctx: &ContextState,
        base: Option<f64>,
    ) -> Result<[f64; 2]> {
        self.check_dims(&[target, h_macro, h_micro, &ctx.h_prev, &ctx.h_cand])?;
        let gp = gate(&ctx.h_prev, &self.w1_prev, &self.w2_prev);
        let gc = gate(&ctx.h_cand, &self.w1_cand, &self.w2_cand);
        let blocks = [
            target.to_vec(),
            mul(&gp, target),
            mul(&gc, target),
            mul(&gp, h_macro),
            mul(&gp, h_micro),
            mul(&gc, h_macro),
            mul(&gc, h_micro),
        ];
        let x: Vec<f64> = blocks.concat();
        let mut hidden = self.b_hidden.data().to_vec();
        vec_mat_add(&x, &self.w_hidden, &mut hidden);
        Ok(self.head(&mut hidden, base))
    }

    /// ReLU, output layer and base-score residual.
    fn head(&self, hidden: &mut [f64], base: Option<f64>) -> [f64; 2] {
        for h in hidden.iter_mut() {
            *h = h.max(0.0);
        }
        let mut out = [self.b_out.data()[0], self.b_out.data()[1]];
        let w = self.w_out.data();
        for (k, h) in hidden.iter().enumerate() {
            out[0] += h * w[2 * k];
            out[1] += h * w[2 * k + 1];
        }
        if let Some(b) = base {
            let l = logit(b);
            out[0] += l * self.w_base.data()[0];
            out[1] += l * self.w_base.data()[1];
        }
        out
    }

    /// Click probability of `target` for `user` in context `ctx`.
    pub fn score(&self, user: &InterestProfile, target: &ItemRecord, ctx: &ContextState) -> Result<f64> {
        let [l0, l1] = self.logits(&target.embedding, &user.h_macro, &user.h_micro, ctx, target.base_score)?;
        Ok(sigmoid(l1 - l0))
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `out += x · W` for a row vector `x`.
fn vec_mat_add(x: &[f64], w: &Tensor, out: &mut [f64]) {
    let cols = w.cols();
    let data = w.data();
    for (r, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &data[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += xv * wv;
        }
    }
}

fn gate(context: &[f64], w1: &Tensor, w2: &Tensor) -> Vec<f64> {
    let mut z = vec![0.0; w1.cols()];
    vec_mat_add(context, w1, &mut z);
    for v in z.iter_mut() {
        *v = v.max(0.0);
    }
    let mut g = vec![0.0; w2.cols()];
    vec_mat_add(&z, w2, &mut g);
    g.iter().map(|&v| sigmoid(v)).collect()
}

/// `σ(relu(context·W1)·W2) ⊙ target`.
pub fn excite(context: &[f64], target: &[f64], w1: &Tensor, w2: &Tensor) -> Result<Vec<f64>> {
    if context.len() != w1.rows() || w1.cols() != w2.rows() || w2.cols() != target.len() {
        return Err(Error::shape(format!(
            "excitation: context {}, W1 {:?}, W2 {:?}, target {}",
            context.len(),
            w1.shape(),
            w2.shape(),
            target.len()
        )));
    }
    Ok(mul(&gate(context, w1, w2), target))
}

/// CAE parameters recorded on a tape, in [`CaeParams::tensors`] order.
#[derive(Debug, Clone)]
pub struct BoundCae {
    pub vars: Vec<Var>,
}

impl BoundCae {
    fn gate(&self, tape: &mut Tape, ctx: Var, w1: usize) -> Result<Var> {
        let z = tape.matmul(ctx, self.vars[w1])?;
        let z = tape.relu(z);
        let g = tape.matmul(z, self.vars[w1 + 1])?;
        Ok(tape.sigmoid(g))
    }

    /// `1×2` logits; all vector inputs are `1×d` rows.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        target: Var,
        h_macro: Var,
        h_micro: Var,
        h_prev: Var,
        h_cand: Var,
        base: Option<f64>,
    ) -> Result<Var> {
        let gp = self.gate(tape, h_prev, 0)?;
        let gc = self.gate(tape, h_cand, 2)?;
        let parts = [
            target,
            tape.mul(gp, target)?,
            tape.mul(gc, target)?,
            tape.mul(gp, h_macro)?,
            tape.mul(gp, h_micro)?,
            tape.mul(gc, h_macro)?,
            tape.mul(gc, h_micro)?,
        ];
        let x = tape.concat_cols(&parts)?;
        let h = tape.matmul(x, self.vars[4])?;
        let h = tape.add_row(h, self.vars[5])?;
        let h = tape.relu(h);
        let out = tape.matmul(h, self.vars[6])?;
        let mut out = tape.add_row(out, self.vars[7])?;
        if let Some(b) = base {
            let l = tape.constant(1, 1, vec![logit(b)])?;
            let r = tape.matmul(l, self.vars[8])?;
            out = tape.add(out, r)?;
        }
        Ok(out)
    }
}

/// [`Scorer`] that re-scores candidates with the CAE after every pick.
///
/// Everything that depends only on the candidate set is computed once; each
/// step then costs `O(N·d·hidden)`.
pub struct CaeScorer<'a> {
    params: &'a CaeParams,
    embeddings: Vec<Vec<f64>>,
    bases: Vec<Option<f64>>,
    h_macro: Vec<f64>,
    h_micro: Vec<f64>,
    ctx: ContextState,
    fixed_hidden: Vec<Vec<f64>>,
}

impl<'a> CaeScorer<'a> {
    pub fn new(params: &'a CaeParams, profile: &InterestProfile, items: &[ItemRecord]) -> Result<Self> {
        let embeddings: Vec<Vec<f64>> = items.iter().map(|i| i.embedding.clone()).collect();
        let refs: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
        params.check_dims(&refs)?;
        params.check_dims(&[&profile.h_macro, &profile.h_micro])?;
        let ctx = ContextState::new(&refs)?;
        let d = params.dim();
        let hid = params.hidden();
        let gc = gate(&ctx.h_cand, &params.w1_cand, &params.w2_cand);
        let block =
            |b: usize| Tensor::new(d, hid, params.w_hidden.data()[b * d * hid..(b + 1) * d * hid].to_vec()).unwrap();
        let (w_e, w_ce, w_cma, w_cmi) = (block(0), block(2), block(5), block(6));
        let mut shared = params.b_hidden.data().to_vec();
        vec_mat_add(&mul(&gc, &profile.h_macro), &w_cma, &mut shared);
        vec_mat_add(&mul(&gc, &profile.h_micro), &w_cmi, &mut shared);
        let fixed_hidden = embeddings
            .iter()
            .map(|e| {
                let mut h = shared.clone();
                vec_mat_add(e, &w_e, &mut h);
                vec_mat_add(&mul(&gc, e), &w_ce, &mut h);
                h
            })
            .collect();
        Ok(Self {
            params,
            bases: items.iter().map(|i| i.base_score).collect(),
            embeddings,
            h_macro: profile.h_macro.clone(),
            h_micro: profile.h_micro.clone(),
            ctx,
            fixed_hidden,
        })
    }

    pub fn context(&self) -> &ContextState {
        &self.ctx
    }
}

impl Scorer for CaeScorer<'_> {
    fn scores(&mut self, remaining: &[usize], out: &mut [f64]) -> Result<()> {
        let p = self.params;
        let d = p.dim();
        let hid = p.hidden();
        let gp = gate(&self.ctx.h_prev, &p.w1_prev, &p.w2_prev);
        let w = p.w_hidden.data();
        // diag(g_p)·W_block1, so that (g_p ⊙ e)·W = e·scaled
        let mut scaled = vec![0.0; d * hid];
        for r in 0..d {
            for c in 0..hid {
                scaled[r * hid + c] = gp[r] * w[(d + r) * hid + c];
            }
        }
        let scaled = Tensor::new(d, hid, scaled)?;
        let mut step = vec![0.0; hid];
        let block = |b: usize| Tensor::new(d, hid, w[b * d * hid..(b + 1) * d * hid].to_vec());
        vec_mat_add(&mul(&gp, &self.h_macro), &block(3)?, &mut step);
        vec_mat_add(&mul(&gp, &self.h_micro), &block(4)?, &mut step);

        let mut hidden = vec![0.0; hid];
        for (o, &i) in out.iter_mut().zip(remaining) {
            for ((h, f), s) in hidden.iter_mut().zip(&self.fixed_hidden[i]).zip(&step) {
                *h = f + s;
            }
            vec_mat_add(&self.embeddings[i], &scaled, &mut hidden);
            let [l0, l1] = p.head(&mut hidden, self.bases[i]);
            *o = sigmoid(l1 - l0);
        }
        Ok(())
    }

    fn select(&mut self, index: usize) -> Result<()> {
        self.ctx.update(&self.embeddings[index]);
        Ok(())
    }
}

/// Interest extraction and CAE weights, trained jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    pub mie: MieParams,
    pub cae: CaeParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub mie: MieShape,
    pub reduction: usize,
    pub hidden: usize,
}

impl ModelShape {
    pub fn new(dim: usize, buckets: usize) -> Self {
        Self {
            mie: MieShape::new(dim, buckets),
            reduction: 4,
            hidden: 16,
        }
    }
}

impl ScoringModel {
    pub fn new<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Self {
        let mie = MieParams::new(shape.mie, rng);
        let cae = CaeParams::new(shape.mie.dim, shape.reduction, shape.hidden, rng);
        Self { mie, cae }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.mie.tensors();
        v.extend(self.cae.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.mie.tensors_mut();
        v.extend(self.cae.tensors_mut());
        v
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = self.mie.names();
        v.extend(CaeParams::names());
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let named: Vec<(String, &Tensor)> = self.names().into_iter().zip(self.tensors()).collect();
        save_checkpoint(path, &named)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ts = load_checkpoint(path)?;
        let heads = ts.iter().filter(|(n, _)| n.starts_with("macro.wq")).count();
        let split = ts
            .iter()
            .position(|(n, _)| n.starts_with("cae."))
            .ok_or_else(|| Error::shape("checkpoint has no CAE tensors"))?;
        let mut tensors: Vec<Tensor> = ts
            .into_iter()
            .map(|(_, mut t)| {
                t.set_requires_grad(true);
                t
            })
            .collect();
        let cae = tensors.split_off(split);
        let model = Self {
            mie: MieParams::from_tensors(heads, tensors)?,
            cae: CaeParams::from_tensors(cae)?,
        };
        if model.mie.dim() != model.cae.dim() {
            return Err(Error::shape("interest and CAE dimensions differ"));
        }
        Ok(model)
    }

    /// Logits of one example with gradients recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, user: &InterestInputs, ex: &TrainingExample) -> Result<(Var, Vec<Var>)> {
        let bm = self.mie.bind(tape);
        let bc = self.cae.bind(tape);
        let (h_macro, h_micro) = bm.forward(tape, user)?;
        let target = tape.constant_row(&ex.target);
        let h_prev = tape.constant_row(&ex.h_prev);
        let h_cand = tape.constant_row(&ex.h_cand);
        let logits = bc.forward(tape, target, h_macro, h_micro, h_prev, h_cand, ex.base)?;
        let mut vars = bm.vars();
        vars.extend(bc.vars);
        Ok((logits, vars))
    }

    /// Cross-entropy of one example.
    pub fn example_loss(&self, user: &InterestInputs, ex: &TrainingExample) -> Result<f64> {
        let mut tape = Tape::new();
        let (logits, _) = self.forward(&mut tape, user, ex)?;
        let loss = tape.softmax_cross_entropy(logits, &[ex.label as usize])?;
        Ok(tape.value(loss)[0])
    }

    /// `(h_macro, h_micro)` for attention inputs.
    pub fn interests(&self, user: &InterestInputs) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let (a, b) = self.mie.bind(&mut tape).forward(&mut tape, user)?;
        Ok((tape.value(a).to_vec(), tape.value(b).to_vec()))
    }
}

/// One labeled impression with its reconstructed context.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// Index into the per-user attention inputs.
    pub user: usize,
    pub target: Vec<f64>,
    pub base: Option<f64>,
    pub h_prev: Vec<f64>,
    pub h_cand: Vec<f64>,
    pub label: u8,
}

/// Turns labeled impressions into examples. Per user, in timestamp order,
/// `h_prev` is the mean of the earlier impressions and `h_cand` the mean of
/// all of them.
pub fn build_examples(
    impressions: &[BehaviorEvent],
    table: &EmbeddingTable,
    users: &BTreeMap<String, usize>,
) -> Result<Vec<TrainingExample>> {
    let mut by_user: BTreeMap<&str, Vec<&BehaviorEvent>> = BTreeMap::new();
    for ev in impressions {
        if ev.label.is_none() {
            continue;
        }
        by_user.entry(&ev.user_id).or_default().push(ev);
    }
    let mut out = Vec::new();
    for (user_id, mut evs) in by_user {
        let &user = users
            .get(user_id)
            .ok_or_else(|| Error::Validation(format!("impressions for unknown user {user_id}")))?;
        evs.sort_by_key(|e| e.timestamp);
        let embs = evs
            .iter()
            .map(|e| {
                table
                    .embedding(&e.item_id)
                    .ok_or_else(|| Error::Validation(format!("impression item {} has no embedding", e.item_id)))
            })
            .collect::<Result<Vec<&[f64]>>>()?;
        let mut ctx = ContextState::new(&embs)?;
        for (ev, e) in evs.iter().zip(&embs) {
            out.push(TrainingExample {
                user,
                target: e.to_vec(),
                base: ev.score,
                h_prev: ctx.h_prev.clone(),
                h_cand: ctx.h_cand.clone(),
                label: ev.label.unwrap(),
            });
            ctx.update(e);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub auc: f64,
}

/// Mean cross-entropy and AUC of the current model over all examples.
pub fn evaluate(model: &ScoringModel, users: &[InterestInputs], examples: &[TrainingExample]) -> Result<(f64, f64)> {
    let mut interests = BTreeMap::new();
    let mut scores = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    let mut loss = 0.0;
    for ex in examples {
        let inputs = users
            .get(ex.user)
            .ok_or_else(|| Error::Validation(format!("example refers to missing user {}", ex.user)))?;
        let (ma, mi) = match interests.entry(ex.user) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(model.interests(inputs)?),
        };
        let ctx = ContextState {
            h_prev: ex.h_prev.clone(),
            h_cand: ex.h_cand.clone(),
            count: 0,
        };
        let [l0, l1] = model.cae.logits(&ex.target, ma, mi, &ctx, ex.base)?;
        let gap = l1 - l0;
        // -log softmax of the true class, computed stably
        let z = if ex.label > 0 { -gap } else { gap };
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p();
        scores.push(sigmoid(gap));
        labels.push(ex.label);
    }
    let n = examples.len().max(1) as f64;
    Ok((loss / n, auc(&scores, &labels)?))
}

/// Per-example SGD on the cross-entropy loss, in a seeded shuffled order.
/// Returns the loss and AUC over the full set after each epoch.
pub fn train_cae(
    model: &mut ScoringModel,
    users: &[InterestInputs],
    examples: &[TrainingExample],
    opts: &TrainOptions,
) -> Result<Vec<EpochStats>> {
    let pos = examples.iter().filter(|e| e.label > 0).count();
    if pos == 0 || pos == examples.len() {
        return Err(Error::Validation(
            "training needs both positive and negative labels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut curve = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let ex = &examples[i];
            let mut tape = Tape::new();
            let (logits, vars) = model.forward(&mut tape, &users[ex.user], ex)?;
            let loss = tape.softmax_cross_entropy(logits, &[ex.label as usize])?;
            let grads = tape.backward(loss)?;
            let mut params = model.tensors_mut();
            for (v, t) in vars.iter().zip(params.iter_mut()) {
                grads.accumulate(*v, t);
            }
            sgd_step(&mut params, opts.lr)?;
        }
        let (loss, auc) = evaluate(model, users, examples)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("training diverged at epoch {epoch}")));
        }
        curve.push(EpochStats { epoch, loss, auc });
    }
    Ok(curve)
}
