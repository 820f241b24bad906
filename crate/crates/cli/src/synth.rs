//! Seeded synthetic world: clustered items, users with a few favorite
//! clusters, and a logistic click model on `⟨preference, item⟩`.

use std::path::Path;

use divrank_core::data::{write_jsonl, RelevanceLabel};
use divrank_core::linalg::{dot, normalized, sigmoid};
use divrank_core::{BehaviorEvent, CandidateSet, Error, ItemRecord, Result};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seeds::sub_seed;

const T0: i64 = 1_700_000_000;
const DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub items_per_cluster: usize,
    pub dim: usize,
    /// Norm scale of the per-item offset from its cluster centroid.
    pub noise: f64,
    pub users: usize,
    pub behaviors_per_user: usize,
    pub impressions_per_user: usize,
    pub candidates_per_user: usize,
    /// Multiplies `⟨preference, item⟩` in the click logit.
    pub sharpness: f64,
    /// Standard deviation of the upstream score error, on the logit scale.
    pub score_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clusters: 8,
            items_per_cluster: 25,
            dim: 16,
            noise: 0.5,
            users: 50,
            behaviors_per_user: 30,
            impressions_per_user: 40,
            candidates_per_user: 100,
            sharpness: 6.0,
            score_noise: 1.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("clusters", self.clusters),
            ("items_per_cluster", self.items_per_cluster),
            ("dim", self.dim),
            ("users", self.users),
            ("behaviors_per_user", self.behaviors_per_user),
            ("impressions_per_user", self.impressions_per_user),
            ("candidates_per_user", self.candidates_per_user),
        ] {
            if v == 0 {
                errs.push(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [
            ("noise", self.noise),
            ("sharpness", self.sharpness),
            ("score_noise", self.score_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be non-negative"));
            }
        }
        if self.candidates_per_user > self.clusters * self.items_per_cluster {
            errs.push("candidates_per_user exceeds the number of items".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub items: Vec<ItemRecord>,
    /// History events (no label) followed by labeled impressions.
    pub behaviors: Vec<BehaviorEvent>,
    pub candidates: Vec<CandidateSet>,
    pub labels: Vec<RelevanceLabel>,
}

fn gaussian(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn bernoulli(p: f64, rng: &mut impl Rng) -> u8 {
    (rng.random::<f64>() < p) as u8
}

pub fn generate(spec: &SyntheticSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, "synth"));
    let d = spec.dim;
    let centroids: Vec<Vec<f64>> = (0..spec.clusters).map(|_| normalized(&gaussian(d, &mut rng))).collect();

    let scale = spec.noise / (d as f64).sqrt();
    let mut items = Vec::with_capacity(spec.clusters * spec.items_per_cluster);
    let mut item_cluster = Vec::new();
    for (c, centroid) in centroids.iter().enumerate() {
        for _ in 0..spec.items_per_cluster {
            let z = gaussian(d, &mut rng);
            let e = centroid.iter().zip(&z).map(|(m, x)| m + scale * x).collect();
            items.push(ItemRecord::new(format!("item{:04}", items.len()), e));
            item_cluster.push(c);
        }
    }
    let by_cluster: Vec<Vec<usize>> = (0..spec.clusters)
        .map(|c| (0..items.len()).filter(|&i| item_cluster[i] == c).collect())
        .collect();

    let mut behaviors = Vec::new();
    let mut candidates = Vec::new();
    let mut labels = Vec::new();
    let all: Vec<usize> = (0..items.len()).collect();
    for u in 0..spec.users {
        let user_id = format!("user{u:03}");
        let favorites: Vec<usize> = {
            let m = rng.random_range(1..=3.min(spec.clusters));
            let mut cs: Vec<usize> = (0..spec.clusters).collect();
            cs.shuffle(&mut rng);
            cs.truncate(m);
            cs
        };
        let weights: Vec<f64> = {
            let w: Vec<f64> = favorites.iter().map(|_| rng.random_range(0.5..1.5)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        };
        let mut pref = vec![0.0; d];
        for (&c, &w) in favorites.iter().zip(&weights) {
            for (p, x) in pref.iter_mut().zip(&centroids[c]) {
                *p += w * x;
            }
        }
        let bias = -0.35 * spec.sharpness;
        let logit = |i: usize| spec.sharpness * dot(&pref, &items[i].embedding) + bias;

        let mut times: Vec<i64> = (0..spec.behaviors_per_user)
            .map(|_| T0 + rng.random_range(0..30 * DAY))
            .collect();
        times.sort_unstable();
        for ts in times {
            let i = if rng.random::<f64>() < 0.8 {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = favorites[favorites.len() - 1];
                for (&c, &w) in favorites.iter().zip(&weights) {
                    acc += w;
                    if r < acc {
                        pick = c;
                        break;
                    }
                }
                *by_cluster[pick].choose(&mut rng).unwrap()
            } else {
                rng.random_range(0..items.len())
            };
            behaviors.push(BehaviorEvent::new(user_id.clone(), items[i].item_id.clone(), ts));
        }

        for j in 0..spec.impressions_per_user {
            let i = rng.random_range(0..items.len());
            let l = logit(i);
            let noisy = l + spec.score_noise * rng.sample::<f64, _>(StandardNormal);
            let mut ev = BehaviorEvent::new(user_id.clone(), items[i].item_id.clone(), T0 + 30 * DAY + 60 * j as i64)
                .with_label(bernoulli(sigmoid(l), &mut rng));
            ev.score = Some(sigmoid(noisy));
            behaviors.push(ev);
        }

        let mut pool = all.clone();
        pool.shuffle(&mut rng);
        pool.truncate(spec.candidates_per_user);
        let mut cand_items = Vec::with_capacity(pool.len());
        for i in pool {
            let l = logit(i);
            let noisy = l + spec.score_noise * rng.sample::<f64, _>(StandardNormal);
            cand_items.push(items[i].clone().with_score(sigmoid(noisy)));
            labels.push(RelevanceLabel {
                user_id: user_id.clone(),
                item_id: items[i].item_id.clone(),
                label: bernoulli(sigmoid(l), &mut rng),
            });
        }
        candidates.push(CandidateSet {
            user_id,
            items: cand_items,
        });
    }
    Ok(SynthData {
        items,
        behaviors,
        candidates,
        labels,
    })
}

pub const ITEMS_FILE: &str = "items.jsonl";
pub const BEHAVIORS_FILE: &str = "behaviors.jsonl";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";

impl SynthData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        write_jsonl(&dir.join(ITEMS_FILE), &self.items)?;
        write_jsonl(&dir.join(BEHAVIORS_FILE), &self.behaviors)?;
        write_jsonl(&dir.join(CANDIDATES_FILE), &self.candidates)?;
        write_jsonl(&dir.join(LABELS_FILE), &self.labels)
    }
}
