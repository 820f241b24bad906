//! Batch stages. Each one reads its declared inputs and writes its
//! artifacts into an output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use divrank_core::cae::{build_examples, train_cae, EpochStats, ModelShape, ScoringModel, TrainOptions};
use divrank_core::data::{load_behaviors, load_candidates, load_items, load_labels, read_jsonl, write_jsonl};
use divrank_core::graph::{
    assign_new_items, cluster_centroids, louvain, modularity, read_item_clusters, write_user_clusters, ItemClusterLine,
};
use divrank_core::interest::{compute_profile, prepare_user, read_profiles, write_profiles, ProfileOptions};
use divrank_core::kernel::composite_matrix;
use divrank_core::metrics::{ilad, LabeledRanking};
use divrank_core::selection::{bs_dpp_select, diagnostics_csv, mmr_select, subset_objective};
use divrank_core::{
    BehaviorEvent, BipartiteGraph, CaeScorer, CandidateSet, Error, ExperimentConfig, FixedScores, InterestProfile,
    KernelHyperparams, KernelMatrix, RerankResult, Result, Scorer, SelectionConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::seeds::sub_seed;
use crate::synth::{generate, SyntheticSpec};

pub const ITEM_CLUSTERS: &str = "item_clusters.jsonl";
pub const USER_CLUSTERS: &str = "user_clusters.jsonl";
pub const PARAMS: &str = "params.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const PROFILES: &str = "profiles.jsonl";
pub const RERANK: &str = "rerank.jsonl";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const KERNELS: &str = "kernels";
pub const METRICS: &str = "metrics.csv";
pub const SWEEP: &str = "sweep.csv";
pub const SWEEP_TIMING: &str = "sweep_timing.csv";

const LOUVAIN_PASSES: usize = 100;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Fails with the path when an upstream artifact is absent.
fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing input file"),
        })
    }
}

fn split_events(events: Vec<BehaviorEvent>) -> (Vec<BehaviorEvent>, Vec<BehaviorEvent>) {
    events.into_iter().partition(BehaviorEvent::is_history)
}

pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    generate(spec)?.write(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub clusters: usize,
    pub modularity: f64,
}

/// Louvain on the history graph. Items that never occur in a history are
/// attached to the cluster with the nearest centroid.
pub fn cmd_cluster(items: &Path, behaviors: &Path, seed: u64, out: &Path) -> Result<ClusterSummary> {
    require(items)?;
    require(behaviors)?;
    let table = load_items(items)?;
    let (history, _) = split_events(load_behaviors(behaviors)?);
    let g = BipartiteGraph::from_events(&history)?;
    let c = louvain(&g, sub_seed(seed, "cluster"), LOUVAIN_PASSES);
    let q = modularity(&g, &c)?;

    let mut lines: BTreeMap<String, u32> = g
        .items()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), c.item_cluster(i) as u32))
        .collect();
    let unseen: Vec<&str> = table
        .iter()
        .map(|i| i.item_id.as_str())
        .filter(|id| !lines.contains_key(*id))
        .collect();
    if !unseen.is_empty() {
        let centroids = cluster_centroids(&g, &c, &table)?;
        let embs: Vec<&[f64]> = unseen.iter().map(|id| table.embedding(id).unwrap()).collect();
        for (id, cl) in unseen.iter().zip(assign_new_items(&embs, &centroids)?) {
            lines.insert(id.to_string(), cl as u32);
        }
    }
    ensure_dir(out)?;
    let lines: Vec<ItemClusterLine> = lines
        .into_iter()
        .map(|(item_id, cluster_id)| ItemClusterLine { item_id, cluster_id })
        .collect();
    write_jsonl(&out.join(ITEM_CLUSTERS), &lines)?;
    write_user_clusters(&out.join(USER_CLUSTERS), &g, &c)?;
    Ok(ClusterSummary {
        clusters: c.count(),
        modularity: q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { lr: 0.005, epochs: 40 }
    }
}

/// Joint interest-extraction and CAE training on the labeled impressions.
/// Writes the checkpoint, the learning curve and every user's profile.
pub fn cmd_train(
    items: &Path,
    behaviors: &Path,
    clusters: &Path,
    cfg: &ExperimentConfig,
    settings: &TrainSettings,
    seed: u64,
    out: &Path,
) -> Result<Vec<EpochStats>> {
    for p in [items, behaviors, clusters] {
        require(p)?;
    }
    let table = load_items(items)?;
    let dim = table
        .dim()
        .ok_or_else(|| Error::Validation(format!("{} holds no items", items.display())))?;
    let (history, impressions) = split_events(load_behaviors(behaviors)?);
    let cluster_of = read_item_clusters(clusters)?;
    let lookup = |id: &str| cluster_of.get(id).map(|&c| c as usize);

    let user_ids: BTreeSet<&str> = history.iter().chain(&impressions).map(|e| e.user_id.as_str()).collect();
    let users: BTreeMap<String, usize> = user_ids.iter().enumerate().map(|(i, u)| (u.to_string(), i)).collect();
    let mut by_user: BTreeMap<&str, Vec<BehaviorEvent>> = BTreeMap::new();
    for ev in &history {
        by_user.entry(&ev.user_id).or_default().push(ev.clone());
    }
    let opts = ProfileOptions {
        top_m: cfg.top_m,
        recent_window: cfg.recent_window,
        now: history.iter().map(|e| e.timestamp).max().unwrap_or(0),
    };
    let empty = Vec::new();
    let inputs = user_ids
        .iter()
        .map(|u| {
            let h = by_user.get(u).unwrap_or(&empty);
            prepare_user(h, lookup, &table, cfg.time_buckets, &opts).map(|r| r.2)
        })
        .collect::<Result<Vec<_>>>()?;
    let examples = build_examples(&impressions, &table, &users)?;

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "train-init"));
    let mut model = ScoringModel::new(ModelShape::new(dim, cfg.time_buckets), &mut rng);
    let train = TrainOptions {
        lr: settings.lr,
        epochs: settings.epochs,
        seed: sub_seed(seed, "train-order"),
    };
    let curve = train_cae(&mut model, &inputs, &examples, &train)?;

    ensure_dir(out)?;
    model.save(&out.join(PARAMS))?;
    let mut log = String::from("epoch,loss,auc\n");
    for e in &curve {
        writeln!(log, "{},{:?},{:?}", e.epoch, e.loss, e.auc).unwrap();
    }
    write_text(&out.join(TRAIN_LOG), &log)?;
    let profiles = user_ids
        .iter()
        .map(|u| compute_profile(u, by_user.get(u).unwrap_or(&empty), lookup, &table, &model.mie, &opts))
        .collect::<Result<Vec<_>>>()?;
    write_profiles(&out.join(PROFILES), &profiles)?;
    Ok(curve)
}

/// Profiles and scoring weights shared by `rerank` and `sweep`.
pub struct RerankContext {
    profiles: Option<BTreeMap<String, InterestProfile>>,
    model: Option<ScoringModel>,
}

impl RerankContext {
    pub fn load(profiles: Option<&Path>, params: Option<&Path>) -> Result<Self> {
        if params.is_some() && profiles.is_none() {
            return Err(Error::Validation("--params needs --profiles".into()));
        }
        let profiles = profiles
            .map(|p| require(p).and_then(|_| read_profiles(p)))
            .transpose()?;
        let model = params
            .map(|p| require(p).and_then(|_| ScoringModel::load(p)))
            .transpose()?;
        Ok(Self { profiles, model })
    }

    /// The user's profile and the kernel settings to use with it. Without
    /// profiles the kernel falls back to the item-level term.
    fn profile(&self, cs: &CandidateSet, hp: &KernelHyperparams) -> Result<(InterestProfile, KernelHyperparams)> {
        match &self.profiles {
            Some(map) => {
                let p = map
                    .get(&cs.user_id)
                    .ok_or_else(|| Error::Validation(format!("no profile for user '{}'", cs.user_id)))?;
                Ok((p.clone(), hp.clone()))
            }
            None => {
                let zero = InterestProfile {
                    user_id: cs.user_id.clone(),
                    h_macro: vec![0.0; cs.dim()],
                    h_micro: vec![0.0; cs.dim()],
                    ..Default::default()
                };
                Ok((zero, hp.item_only()))
            }
        }
    }

    fn select(
        &self,
        cs: &CandidateSet,
        kernel: &KernelMatrix,
        profile: &InterestProfile,
        cfg: &SelectionConfig,
    ) -> Result<RerankResult> {
        let mut scorer: Box<dyn Scorer + '_> = match &self.model {
            Some(m) => Box::new(CaeScorer::new(&m.cae, profile, &cs.items)?),
            None => Box::new(FixedScores(cs.base_scores())),
        };
        Ok(bs_dpp_select(kernel, scorer.as_mut(), cfg)?.into_result(cs))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RerankArgs {
    pub candidates: PathBuf,
    pub profiles: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub dump_kernel: bool,
}

/// `user_id`-prefixed diagnostics for every user, one header.
pub fn diagnostics_table(results: &[RerankResult]) -> String {
    let mut s = String::from("user_id,step,chosen_id,g,log_d2,marginal\n");
    for r in results {
        for line in diagnostics_csv(r).lines().skip(1) {
            writeln!(s, "{},{line}", r.user_id).unwrap();
        }
    }
    s
}

pub fn cmd_rerank(args: &RerankArgs, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RerankResult>> {
    require(&args.candidates)?;
    let sets = load_candidates(&args.candidates)?;
    let ctx = RerankContext::load(args.profiles.as_deref(), args.params.as_deref())?;
    let hp = KernelHyperparams::from(cfg);
    let sel = SelectionConfig::from(cfg);
    ensure_dir(out)?;
    if args.dump_kernel {
        ensure_dir(&out.join(KERNELS))?;
    }
    let mut results = Vec::with_capacity(sets.len());
    for cs in &sets {
        cs.validate()?;
        let (profile, hp) = ctx.profile(cs, &hp)?;
        let kernel = composite_matrix(cs, &profile, &hp)?;
        if args.dump_kernel {
            kernel.write_csv(&out.join(KERNELS).join(format!("{}.csv", cs.user_id)))?;
        }
        results.push(ctx.select(cs, &kernel, &profile, &sel)?);
    }
    write_jsonl(&out.join(RERANK), &results)?;
    write_text(&out.join(DIAGNOSTICS), &diagnostics_table(&results))?;
    Ok(results)
}

fn relevant_by_user(labels: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for l in load_labels(labels)? {
        let entry = out.entry(l.user_id).or_default();
        if l.label > 0 {
            entry.push(l.item_id);
        }
    }
    Ok(out)
}

/// `(nDCG, MAP)` when the user has a relevant item, and ILAD when defined.
type ListMetrics = (Option<(f64, f64)>, Option<f64>);

/// Per-list accuracy and diversity; `None` for users without any relevant item.
fn list_metrics(
    items: &[String],
    relevant: Option<&Vec<String>>,
    embedding: impl Fn(&str) -> Option<Vec<f64>>,
    k: usize,
) -> Result<ListMetrics> {
    let acc = relevant.filter(|r| !r.is_empty()).map(|r| {
        let ranking = LabeledRanking::from_relevant(items.to_vec(), r);
        (ranking.ndcg_at_k(k), ranking.map_at_k(k))
    });
    let top: Vec<Vec<f64>> = items
        .iter()
        .take(k)
        .map(|id| embedding(id).ok_or_else(|| Error::Validation(format!("item '{id}' has no embedding"))))
        .collect::<Result<_>>()?;
    let div = if top.len() >= 2 {
        let refs: Vec<&[f64]> = top.iter().map(Vec::as_slice).collect();
        Some(ilad(&refs)?)
    } else {
        None
    };
    Ok((acc, div))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: &'static str,
    pub k: usize,
    pub value: f64,
}

/// Mean nDCG@K and MAP@K over users with at least one relevant item, and
/// mean ILAD of the top-K lists.
pub fn cmd_eval(rerank: &Path, labels: &Path, items: &Path, k: usize, out: &Path) -> Result<Vec<MetricRow>> {
    for p in [rerank, labels, items] {
        require(p)?;
    }
    let results: Vec<RerankResult> = read_jsonl(rerank)?.into_iter().map(|(_, r)| r).collect();
    let relevant = relevant_by_user(labels)?;
    let table = load_items(items)?;
    let (mut ndcg, mut map, mut div) = (Vec::new(), Vec::new(), Vec::new());
    for r in &results {
        let (acc, d) = list_metrics(
            &r.items,
            relevant.get(&r.user_id),
            |id| table.embedding(id).map(<[f64]>::to_vec),
            k,
        )?;
        if let Some((n, m)) = acc {
            ndcg.push(n);
            map.push(m);
        }
        div.extend(d);
    }
    let rows = vec![
        MetricRow {
            metric: "ndcg",
            k,
            value: mean(&ndcg),
        },
        MetricRow {
            metric: "map",
            k,
            value: mean(&map),
        },
        MetricRow {
            metric: "ilad",
            k,
            value: mean(&div),
        },
    ];
    let mut csv = String::from("metric,k,value\n");
    for r in &rows {
        writeln!(csv, "{},{},{:?}", r.metric, r.k, r.value).unwrap();
    }
    ensure_dir(out)?;
    write_text(&out.join(METRICS), &csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    BsDpp,
    FixedDpp,
    Mmr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::BsDpp, Method::FixedDpp, Method::Mmr];

    pub fn name(self) -> &'static str {
        match self {
            Method::BsDpp => "bs-dpp",
            Method::FixedDpp => "fixed-dpp",
            Method::Mmr => "mmr",
        }
    }
}

/// MMR weight matched to a DPP trade-off: `α = 0` is pure relevance.
pub fn mmr_lambda(alpha: f64) -> f64 {
    1.0 / (1.0 + alpha)
}

/// Per-list values of one method at one α, and its total time.
#[derive(Default)]
struct Totals {
    ndcg: Vec<f64>,
    ilad: Vec<f64>,
    objective: Vec<f64>,
    seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub ndcg: f64,
    pub ilad: f64,
    /// `h(u,S)` with base scores and the composite kernel, for every method.
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub candidates: PathBuf,
    pub labels: PathBuf,
    pub profiles: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub alphas: Vec<f64>,
    pub runs: usize,
    pub timing: bool,
}

/// A seeded 80% subset of each list for run `r` when `runs > 1`.
fn run_candidates(sets: &[CandidateSet], runs: usize, r: usize, seed: u64, k: usize) -> Vec<CandidateSet> {
    if runs <= 1 {
        return sets.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("sweep-run-{r}")));
    sets.iter()
        .map(|cs| {
            let keep = (cs.len() * 4 / 5).max(k).min(cs.len());
            let mut idx: Vec<usize> = (0..cs.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(keep);
            idx.sort_unstable();
            CandidateSet {
                user_id: cs.user_id.clone(),
                items: idx.into_iter().map(|i| cs.items[i].clone()).collect(),
            }
        })
        .collect()
}

/// Mean nDCG@K, ILAD and objective for each method at each α.
pub fn cmd_sweep(args: &SweepArgs, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<SweepRow>> {
    if args.alphas.is_empty() {
        return Err(Error::Validation("alpha list is empty".into()));
    }
    if args.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::Validation("alphas must be non-negative".into()));
    }
    if args.runs == 0 {
        return Err(Error::Validation("runs must be at least 1".into()));
    }
    require(&args.candidates)?;
    require(&args.labels)?;
    let sets = load_candidates(&args.candidates)?;
    for cs in &sets {
        cs.validate()?;
    }
    let relevant = relevant_by_user(&args.labels)?;
    let ctx = RerankContext::load(args.profiles.as_deref(), args.params.as_deref())?;
    let hp = KernelHyperparams::from(cfg);
    let k = cfg.k;

    let mut alphas = args.alphas.clone();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut rows = Vec::new();
    for &alpha in &alphas {
        let sel = SelectionConfig {
            alpha,
            ..SelectionConfig::from(cfg)
        };
        let lambda = mmr_lambda(alpha);
        let mut acc: BTreeMap<Method, Totals> = BTreeMap::new();
        for r in 0..args.runs {
            for cs in run_candidates(&sets, args.runs, r, seed, k) {
                let (profile, hp) = ctx.profile(&cs, &hp)?;
                let composite = composite_matrix(&cs, &profile, &hp)?;
                let item = composite_matrix(&cs, &profile, &hp.item_only())?;
                let base = cs.base_scores();
                for m in Method::ALL {
                    let t = Instant::now();
                    let order: Vec<usize> = match m {
                        Method::BsDpp => {
                            let res = ctx.select(&cs, &composite, &profile, &sel)?;
                            let pos: BTreeMap<&str, usize> = cs
                                .items
                                .iter()
                                .enumerate()
                                .map(|(i, it)| (it.item_id.as_str(), i))
                                .collect();
                            res.items.iter().map(|id| pos[id.as_str()]).collect()
                        }
                        Method::FixedDpp => bs_dpp_select(&item, &mut FixedScores(base.clone()), &sel)?.order(),
                        Method::Mmr => mmr_select(&base, |i, j| item.get(i, j), lambda, k)?,
                    };
                    let secs = t.elapsed().as_secs_f64();
                    let ids: Vec<String> = order.iter().map(|&i| cs.items[i].item_id.clone()).collect();
                    let (a, d) = list_metrics(
                        &ids,
                        relevant.get(&cs.user_id),
                        |id| cs.items.iter().find(|i| i.item_id == id).map(|i| i.embedding.clone()),
                        k,
                    )?;
                    let e = acc.entry(m).or_default();
                    e.ndcg.extend(a.map(|x| x.0));
                    e.ilad.extend(d);
                    e.objective.push(subset_objective(&composite, &base, alpha, &order));
                    e.seconds += secs;
                }
            }
        }
        for (m, e) in acc {
            rows.push(SweepRow {
                method: m,
                alpha,
                lambda: (m == Method::Mmr).then_some(lambda),
                ndcg: mean(&e.ndcg),
                ilad: mean(&e.ilad),
                objective: mean(&e.objective),
                seconds: e.seconds,
            });
        }
    }

    ensure_dir(out)?;
    let mut csv = String::from("method,alpha,lambda,ndcg,ilad,objective\n");
    let mut timing = String::from("method,alpha,seconds\n");
    for r in &rows {
        let lambda = r.lambda.map_or(String::new(), |l| format!("{l:?}"));
        writeln!(
            csv,
            "{},{:?},{lambda},{:?},{:?},{:?}",
            r.method.name(),
            r.alpha,
            r.ndcg,
            r.ilad,
            r.objective
        )
        .unwrap();
        writeln!(timing, "{},{:?},{:?}", r.method.name(), r.alpha, r.seconds).unwrap();
    }
    write_text(&out.join(SWEEP), &csv)?;
    if args.timing {
        write_text(&out.join(SWEEP_TIMING), &timing)?;
    }
    Ok(rows)
}
