//! Multi-scale user interests.
//!
//! Macro interest: behavior items are grouped by item cluster, each group is
//! sum-pooled into an interest point, the top-M points go through multi-head
//! self-attention and the outputs are mean-pooled into `h_macro`.
//!
//! Micro interest: the most recent items, each concatenated with a learned
//! embedding of its log-scaled age, go through a second attention block to
//! give `h_micro`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{read_jsonl, write_jsonl, BehaviorEvent, EmbeddingTable};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct InterestPoint {
    pub cluster_id: usize,
    /// One entry per behavior event, so repeated interactions count twice.
    pub members: Vec<String>,
    pub pooled: Vec<f64>,
    pub last_ts: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecentItem {
    pub item_id: String,
    pub ts: i64,
    pub bucket: usize,
}

/// A user's interest vectors. Only the vectors go to the profile cache.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterestProfile {
    pub user_id: String,
    pub h_macro: Vec<f64>,
    pub h_micro: Vec<f64>,
    #[serde(skip)]
    pub points: Vec<InterestPoint>,
    #[serde(skip)]
    pub recent: Vec<RecentItem>,
}

/// Groups one user's behaviors by cluster and keeps the `m` largest groups,
/// breaking ties by the most recent interaction, then by cluster id.
pub fn group_interest_points<F>(
    behaviors: &[BehaviorEvent],
    cluster_of: F,
    table: &EmbeddingTable,
    m: usize,
) -> Result<Vec<InterestPoint>>
where
    F: Fn(&str) -> Option<usize>,
{
    let mut groups: BTreeMap<usize, InterestPoint> = BTreeMap::new();
    for ev in behaviors {
        let e = table
            .embedding(&ev.item_id)
            .ok_or_else(|| Error::Validation(format!("behavior item {} has no embedding", ev.item_id)))?;
        let c = cluster_of(&ev.item_id)
            .ok_or_else(|| Error::Validation(format!("behavior item {} has no cluster", ev.item_id)))?;
        let p = groups.entry(c).or_insert_with(|| InterestPoint {
            cluster_id: c,
            members: Vec::new(),
            pooled: vec![0.0; e.len()],
            last_ts: ev.timestamp,
        });
        p.members.push(ev.item_id.clone());
        for (s, x) in p.pooled.iter_mut().zip(e) {
            *s += x;
        }
        p.last_ts = p.last_ts.max(ev.timestamp);
    }
    let mut points: Vec<InterestPoint> = groups.into_values().collect();
    points.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then(b.last_ts.cmp(&a.last_ts))
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    points.truncate(m);
    Ok(points)
}

/// `⌊log₂(1 + Δt/3600)⌋`, capped at `buckets − 1`.
pub fn time_bucket(delta_seconds: i64, buckets: usize) -> Result<usize> {
    if delta_seconds < 0 {
        return Err(Error::Validation(format!(
            "event lies {} s in the future",
            -delta_seconds
        )));
    }
    let b = (1.0 + delta_seconds as f64 / 3600.0).log2().floor() as usize;
    Ok(b.min(buckets.saturating_sub(1)))
}

/// Per-head query/key/value projections and a shared output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Vec<Tensor>,
    pub wk: Vec<Tensor>,
    pub wv: Vec<Tensor>,
    pub wo: Tensor,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_out: usize, heads: usize, d_head: usize, rng: &mut R) -> Self {
        let proj = |rng: &mut R| Tensor::uniform(d_in, d_head, d_in, rng).with_grad();
        let mut wq = Vec::with_capacity(heads);
        let mut wk = Vec::with_capacity(heads);
        let mut wv = Vec::with_capacity(heads);
        for _ in 0..heads {
            wq.push(proj(rng));
            wk.push(proj(rng));
            wv.push(proj(rng));
        }
        let wo = Tensor::uniform(heads * d_head, d_out, heads * d_head, rng).with_grad();
        Self { wq, wk, wv, wo }
    }

    /// One head, every projection the identity.
    pub fn identity(d: usize) -> Self {
        let i = || Tensor::identity(d);
        Self {
            wq: vec![i()],
            wk: vec![i()],
            wv: vec![i()],
            wo: i(),
        }
    }

    pub fn heads(&self) -> usize {
        self.wq.len()
    }

    pub fn d_in(&self) -> usize {
        self.wq[0].rows()
    }

    pub fn d_head(&self) -> usize {
        self.wq[0].cols()
    }

    pub fn d_out(&self) -> usize {
        self.wo.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.heads();
        if h == 0 || self.wk.len() != h || self.wv.len() != h {
            return Err(Error::shape("attention needs the same number (>= 1) of Q, K, V heads"));
        }
        let shape = self.wq[0].shape();
        for w in self.wq.iter().chain(&self.wk).chain(&self.wv) {
            if w.shape() != shape {
                return Err(Error::shape(format!(
                    "head projection {:?} differs from {shape:?}",
                    w.shape()
                )));
            }
        }
        if self.wo.rows() != h * shape.1 {
            return Err(Error::shape(format!(
                "output projection has {} rows, heads concatenate to {}",
                self.wo.rows(),
                h * shape.1
            )));
        }
        if self.tensors().iter().any(|t| t.data().iter().any(|x| !x.is_finite())) {
            return Err(Error::Numerical("non-finite attention weight".into()));
        }
        Ok(())
    }

    /// Q, K, V of each head in order, then the output projection.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(3 * self.heads() + 1);
        for h in 0..self.heads() {
            out.extend([&self.wq[h], &self.wk[h], &self.wv[h]]);
        }
        out.push(&self.wo);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(3 * self.heads() + 1);
        for ((q, k), v) in self.wq.iter_mut().zip(&mut self.wk).zip(&mut self.wv) {
            out.extend([q, k, v]);
        }
        out.push(&mut self.wo);
        out
    }

    pub fn names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for h in 0..self.heads() {
            for m in ["wq", "wk", "wv"] {
                out.push(format!("{prefix}.{m}{h}"));
            }
        }
        out.push(format!("{prefix}.wo"));
        out
    }

    fn from_tensors(heads: usize, mut ts: Vec<Tensor>) -> Result<Self> {
        if ts.len() != 3 * heads + 1 {
            return Err(Error::shape("wrong tensor count for attention block"));
        }
        let wo = ts.pop().unwrap();
        let mut it = ts.into_iter();
        let (mut wq, mut wk, mut wv) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..heads {
            wq.push(it.next().unwrap());
            wk.push(it.next().unwrap());
            wv.push(it.next().unwrap());
        }
        let p = Self { wq, wk, wv, wo };
        p.validate()?;
        Ok(p)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundAttention {
        BoundAttention {
            vars: self.tensors().into_iter().map(|t| tape.leaf(t)).collect(),
            heads: self.heads(),
            scale: 1.0 / (self.d_head() as f64).sqrt(),
        }
    }
}

/// Attention parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundAttention {
    pub vars: Vec<Var>,
    heads: usize,
    scale: f64,
}

impl BoundAttention {
    /// Self-attention over the rows of `x`, mean-pooled to a `1×d_out` row.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let [wq, wk, wv] = [self.vars[3 * h], self.vars[3 * h + 1], self.vars[3 * h + 2]];
            let q = tape.matmul(x, wq)?;
            let k = tape.matmul(x, wk)?;
            let v = tape.matmul(x, wv)?;
            let kt = tape.transpose(k);
            let s = tape.matmul(q, kt)?;
            let s = tape.scale(s, self.scale);
            let a = tape.softmax_rows(s);
            heads.push(tape.matmul(a, v)?);
        }
        let cat = tape.concat_cols(&heads)?;
        let wo = *self.vars.last().unwrap();
        let out = tape.matmul(cat, wo)?;
        Ok(tape.mean_rows(out))
    }
}

fn stack(tape: &mut Tape, rows: &[&[f64]], width: usize) -> Result<Var> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::shape(format!("attention inputs must have length {width}")));
    }
    let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
    tape.constant(rows.len(), width, data)
}

/// Forward pass without gradients. Inputs must be non-empty.
pub fn multi_head_attention(inputs: &[&[f64]], params: &AttentionParams) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::Validation("attention over an empty input set".into()));
    }
    params.validate()?;
    let mut tape = Tape::new();
    let x = stack(&mut tape, inputs, params.d_in())?;
    let out = params.bind(&mut tape).forward(&mut tape, x)?;
    Ok(tape.value(out).to_vec())
}

/// Attention over pooled interest points; the zero vector when there are none.
pub fn macro_interest(points: &[InterestPoint], params: &AttentionParams) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Ok(vec![0.0; params.d_out()]);
    }
    let rows: Vec<&[f64]> = points.iter().map(|p| p.pooled.as_slice()).collect();
    multi_head_attention(&rows, params)
}

/// Attention parameters of both scales plus the age-bucket embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct MieParams {
    pub macro_attn: AttentionParams,
    pub micro_attn: AttentionParams,
    /// `buckets × time_dim`
    pub time_table: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MieShape {
    pub dim: usize,
    pub heads: usize,
    pub d_head: usize,
    pub time_dim: usize,
    pub buckets: usize,
}

impl MieShape {
    /// Two heads of width `dim/2`, 4-wide age embeddings.
    pub fn new(dim: usize, buckets: usize) -> Self {
        Self {
            dim,
            heads: 2,
            d_head: (dim / 2).max(1),
            time_dim: 4,
            buckets,
        }
    }
}

impl MieParams {
    pub fn new<R: Rng + ?Sized>(shape: MieShape, rng: &mut R) -> Self {
        let MieShape {
            dim,
            heads,
            d_head,
            time_dim,
            buckets,
        } = shape;
        let macro_attn = AttentionParams::new(dim, dim, heads, d_head, rng);
        let micro_attn = AttentionParams::new(dim + time_dim, dim, heads, d_head, rng);
        let time_table = Tensor::uniform(buckets, time_dim, time_dim, rng).with_grad();
        Self {
            macro_attn,
            micro_attn,
            time_table,
        }
    }

    pub fn dim(&self) -> usize {
        self.macro_attn.d_out()
    }

    pub fn buckets(&self) -> usize {
        self.time_table.rows()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.macro_attn.tensors();
        v.extend(self.micro_attn.tensors());
        v.push(&self.time_table);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.macro_attn.tensors_mut();
        v.extend(self.micro_attn.tensors_mut());
        v.push(&mut self.time_table);
        v
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = self.macro_attn.names("macro");
        v.extend(self.micro_attn.names("micro"));
        v.push("time_table".into());
        v
    }

    /// Rebuilds from tensors in [`Self::tensors`] order.
    pub fn from_tensors(heads: usize, mut ts: Vec<Tensor>) -> Result<Self> {
        let per = 3 * heads + 1;
        if ts.len() != 2 * per + 1 {
            return Err(Error::shape(format!(
                "expected {} interest tensors, got {}",
                2 * per + 1,
                ts.len()
            )));
        }
        let time_table = ts.pop().unwrap();
        let micro = ts.split_off(per);
        let p = Self {
            macro_attn: AttentionParams::from_tensors(heads, ts)?,
            micro_attn: AttentionParams::from_tensors(heads, micro)?,
            time_table,
        };
        if p.micro_attn.d_in() != p.dim() + p.time_table.cols() {
            return Err(Error::shape("micro attention width does not match dim + time_dim"));
        }
        Ok(p)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMie {
        BoundMie {
            macro_attn: self.macro_attn.bind(tape),
            micro_attn: self.micro_attn.bind(tape),
            time_table: tape.leaf(&self.time_table),
            dim: self.dim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundMie {
    pub macro_attn: BoundAttention,
    pub micro_attn: BoundAttention,
    pub time_table: Var,
    dim: usize,
}

impl BoundMie {
    /// All bound variables in [`MieParams::tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.macro_attn.vars.clone();
        v.extend(&self.micro_attn.vars);
        v.push(self.time_table);
        v
    }

    /// `(h_macro, h_micro)` as `1×d` rows.
    pub fn forward(&self, tape: &mut Tape, inputs: &InterestInputs) -> Result<(Var, Var)> {
        let h_macro = if inputs.points.is_empty() {
            tape.constant_row(&vec![0.0; self.dim])
        } else {
            let rows: Vec<&[f64]> = inputs.points.iter().map(Vec::as_slice).collect();
            let x = stack(tape, &rows, self.dim)?;
            self.macro_attn.forward(tape, x)?
        };
        let h_micro = if inputs.recent.is_empty() {
            tape.constant_row(&vec![0.0; self.dim])
        } else {
            let rows: Vec<&[f64]> = inputs.recent.iter().map(Vec::as_slice).collect();
            let e = stack(tape, &rows, self.dim)?;
            let t = tape.gather_rows(self.time_table, &inputs.buckets)?;
            let x = tape.concat_cols(&[e, t])?;
            self.micro_attn.forward(tape, x)?
        };
        Ok((h_macro, h_micro))
    }
}

/// Raw attention inputs for one user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterestInputs {
    pub points: Vec<Vec<f64>>,
    pub recent: Vec<Vec<f64>>,
    pub buckets: Vec<usize>,
}

/// `recent` is `(embedding, ts)`, newest first; `now` must not precede any ts.
pub fn micro_interest(recent: &[(&[f64], i64)], now: i64, params: &MieParams) -> Result<Vec<f64>> {
    let mut inputs = InterestInputs::default();
    for &(e, ts) in recent {
        inputs.recent.push(e.to_vec());
        inputs.buckets.push(time_bucket(now - ts, params.buckets())?);
    }
    let mut tape = Tape::new();
    let (_, micro) = params.bind(&mut tape).forward(&mut tape, &inputs)?;
    Ok(tape.value(micro).to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub top_m: usize,
    pub recent_window: usize,
    /// Reference time for item ages.
    pub now: i64,
}

/// Interest points, recent items and attention inputs for one user's history.
pub fn prepare_user<F>(
    history: &[BehaviorEvent],
    cluster_of: F,
    table: &EmbeddingTable,
    buckets: usize,
    opts: &ProfileOptions,
) -> Result<(Vec<InterestPoint>, Vec<RecentItem>, InterestInputs)>
where
    F: Fn(&str) -> Option<usize>,
{
    let points = group_interest_points(history, cluster_of, table, opts.top_m)?;
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[b].timestamp.cmp(&history[a].timestamp).then(b.cmp(&a)));
    order.truncate(opts.recent_window);
    let mut recent = Vec::with_capacity(order.len());
    let mut inputs = InterestInputs {
        points: points.iter().map(|p| p.pooled.clone()).collect(),
        ..Default::default()
    };
    for i in order {
        let ev = &history[i];
        let bucket = time_bucket(opts.now - ev.timestamp, buckets)?;
        // presence was checked while grouping
        inputs.recent.push(table.embedding(&ev.item_id).unwrap().to_vec());
        inputs.buckets.push(bucket);
        recent.push(RecentItem {
            item_id: ev.item_id.clone(),
            ts: ev.timestamp,
            bucket,
        });
    }
    Ok((points, recent, inputs))
}

pub fn compute_profile<F>(
    user_id: &str,
    history: &[BehaviorEvent],
    cluster_of: F,
    table: &EmbeddingTable,
    params: &MieParams,
    opts: &ProfileOptions,
) -> Result<InterestProfile>
where
    F: Fn(&str) -> Option<usize>,
{
    let (points, recent, inputs) = prepare_user(history, cluster_of, table, params.buckets(), opts)?;
    let mut tape = Tape::new();
    let (ma, mi) = params.bind(&mut tape).forward(&mut tape, &inputs)?;
    Ok(InterestProfile {
        user_id: user_id.to_string(),
        h_macro: tape.value(ma).to_vec(),
        h_micro: tape.value(mi).to_vec(),
        points,
        recent,
    })
}

pub fn write_profiles(path: &Path, profiles: &[InterestProfile]) -> Result<()> {
    write_jsonl(path, profiles)
}

pub fn read_profiles(path: &Path) -> Result<BTreeMap<String, InterestProfile>> {
    let mut out = BTreeMap::new();
    for (line, p) in read_jsonl::<InterestProfile>(path)? {
        if p.h_macro.len() != p.h_micro.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "h_macro and h_micro differ in length".into(),
            });
        }
        out.insert(p.user_id.clone(), p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ItemRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(items: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        items
            .iter()
            .map(|(id, e)| ItemRecord::new(*id, e.clone()))
            .collect::<Result<EmbeddingTable>>()
            .unwrap()
    }

    #[test]
    fn sum_pooling_per_cluster() {
        let t = table(&[("i1", vec![1.0, 0.0]), ("i2", vec![5.0, 5.0]), ("i3", vec![0.0, 1.0])]);
        let ev = vec![
            BehaviorEvent::new("u", "i1", 1),
            BehaviorEvent::new("u", "i2", 2),
            BehaviorEvent::new("u", "i3", 3),
        ];
        let cl = |id: &str| Some(if id == "i2" { 1 } else { 0 });
        let pts = group_interest_points(&ev, cl, &t, 5).unwrap();
        assert_eq!(pts[0].cluster_id, 0);
        assert_eq!(pts[0].pooled, vec![1.0, 1.0]);
        assert_eq!(pts[0].members, vec!["i1", "i3"]);
        assert_eq!(pts[1].pooled, vec![5.0, 5.0]);
    }

    #[test]
    fn top_m_drops_smallest_and_breaks_ties_by_recency() {
        let mut items = Vec::new();
        let mut ev = Vec::new();
        let mut ts = 0;
        // cluster c gets c+1 events, except cluster 5 which ties cluster 0 but is older
        for c in 0..6usize {
            let n = if c == 5 { 1 } else { c + 1 };
            for k in 0..n {
                let id = format!("c{c}k{k}");
                items.push((id.clone(), vec![c as f64, 1.0]));
                ts += 1;
                ev.push(BehaviorEvent::new("u", id, if c == 5 { 0 } else { ts }));
            }
        }
        let refs: Vec<(&str, Vec<f64>)> = items.iter().map(|(a, b)| (a.as_str(), b.clone())).collect();
        let t = table(&refs);
        let cl = |id: &str| id[1..2].parse().ok();
        let pts = group_interest_points(&ev, cl, &t, 5).unwrap();
        assert_eq!(pts.len(), 5);
        let ids: Vec<usize> = pts.iter().map(|p| p.cluster_id).collect();
        assert_eq!(ids, vec![4, 3, 2, 1, 0]);
        let total: usize = pts.iter().map(|p| p.members.len()).sum();
        assert_eq!(total, 1 + 2 + 3 + 4 + 5);
    }

    #[test]
    fn empty_history_is_cold_start() {
        let t = table(&[("i", vec![1.0, 2.0])]);
        let pts = group_interest_points(&[], |_| Some(0), &t, 5).unwrap();
        assert!(pts.is_empty());
        let p = AttentionParams::identity(2);
        assert_eq!(macro_interest(&pts, &p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_attention_fixtures() {
        let p = AttentionParams::identity(3);
        let x: &[f64] = &[0.3, -1.2, 2.0];
        assert_eq!(multi_head_attention(&[x], &p).unwrap(), x);
        let out = multi_head_attention(&[x, x], &p).unwrap();
        for (a, b) in out.iter().zip(x) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(multi_head_attention(&[&[1.0, 2.0]], &p).is_err());
        assert!(multi_head_attention(&[], &p).is_err());
    }

    #[test]
    fn buckets() {
        assert_eq!(time_bucket(0, 16).unwrap(), 0);
        assert_eq!(time_bucket(3599, 16).unwrap(), 0);
        assert_eq!(time_bucket(3600, 16).unwrap(), 1);
        assert_eq!(time_bucket(3 * 3600, 16).unwrap(), 2);
        assert_eq!(time_bucket(i64::MAX / 2, 16).unwrap(), 15);
        assert!(time_bucket(-1, 16).is_err());
    }

    #[test]
    fn zero_time_embeddings_reduce_to_padded_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = MieParams::new(MieShape::new(4, 8), &mut rng);
        p.time_table.data_mut().fill(0.0);
        let e1 = [0.1, 0.2, -0.3, 0.4];
        let e2 = [0.5, -0.1, 0.0, 0.2];
        let got = micro_interest(&[(&e1, 100), (&e2, 0)], 7200, &p).unwrap();
        let pad = |e: &[f64]| [e, &[0.0; 4]].concat();
        let want = multi_head_attention(&[&pad(&e1), &pad(&e2)], &p.micro_attn).unwrap();
        assert_eq!(got, want);
        assert!(micro_interest(&[(&e1, 9000)], 7200, &p).is_err());
    }

    #[test]
    fn parameter_roundtrip_through_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MieParams::new(MieShape::new(6, 4), &mut rng);
        let ts: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        assert_eq!(p.names().len(), ts.len());
        assert_eq!(MieParams::from_tensors(2, ts).unwrap(), p);
    }

    #[test]
    fn profile_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.jsonl");
        let p = InterestProfile {
            user_id: "u1".into(),
            h_macro: vec![0.5, -1.0],
            h_micro: vec![0.25, 2.0],
            ..Default::default()
        };
        write_profiles(&path, std::slice::from_ref(&p)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.trim(),
            r#"{"user_id":"u1","h_macro":[0.5,-1.0],"h_micro":[0.25,2.0]}"#
        );
        assert_eq!(read_profiles(&path).unwrap()["u1"], p);
    }
}
