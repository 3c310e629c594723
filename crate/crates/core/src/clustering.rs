//! Unit-composition clustering of demonstrations and strategic-objective labels.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demos::ReplayLog;
use crate::world::{ActionCatalog, Race};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least {k} valid vectors for k={k}, got {n}")]
    TooFewReplays { n: usize, k: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("points have inconsistent dimensions")]
    DimensionMismatch,
    #[error("clustering criterion `{0}` is not implemented")]
    NotImplemented(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Supply-weighted share of each unit type in a player's final army, in catalog unit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionVector {
    pub race: Race,
    pub ratios: Vec<f64>,
}

/// Returns `None` when the player ended with no combat units.
pub fn composition_vector(units: &BTreeMap<String, u32>, catalog: &ActionCatalog) -> Option<CompositionVector> {
    let counts: Vec<f64> = catalog
        .unit_set
        .iter()
        .map(|u| {
            let w = catalog.producer_of(u).map_or(0, |s| s.supply_cost);
            f64::from(units.get(u).copied().unwrap_or(0)) * f64::from(w)
        })
        .collect();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(CompositionVector { race: catalog.race, ratios: counts.into_iter().map(|c| c / total).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusteringCriterion {
    UnitComposition,
    OpeningStrategy,
    AdvancementTempo,
}

impl ClusteringCriterion {
    /// Feature extraction for a criterion. Only unit composition is available.
    pub fn vectors(
        self,
        logs: &[ReplayLog],
        catalog: &ActionCatalog,
        winners_only: bool,
    ) -> Result<Vec<(PlayerRef, Vec<f64>)>, ClusterError> {
        match self {
            ClusteringCriterion::UnitComposition => Ok(composition_points(logs, catalog, winners_only)),
            ClusteringCriterion::OpeningStrategy => Err(ClusterError::NotImplemented("opening strategy")),
            ClusteringCriterion::AdvancementTempo => Err(ClusterError::NotImplemented("advancement tempo")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlayerRef {
    pub replay_id: String,
    pub player: usize,
}

fn composition_points(logs: &[ReplayLog], catalog: &ActionCatalog, winners_only: bool) -> Vec<(PlayerRef, Vec<f64>)> {
    let mut out = Vec::new();
    for log in logs {
        for p in 0..2 {
            let m = &log.meta;
            if m.races[p] != catalog.race || !m.demonstrators[p] || (winners_only && m.winner != Some(p)) {
                continue;
            }
            if let Some(v) = composition_vector(&m.final_units[p], catalog) {
                out.push((PlayerRef { replay_id: m.id.clone(), player: p }, v.ratios));
            }
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

/// Greedy k-means++ seeding: each new center is the best of `2 + ln k`
/// D²-weighted candidates.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let idx = if total <= 0.0 {
                rng.random_range(0..n)
            } else {
                let mut r = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, d) in d2.iter().enumerate() {
                    if r < *d {
                        pick = i;
                        break;
                    }
                    r -= d;
                }
                pick
            };
            let updated: Vec<f64> = points.iter().zip(&d2).map(|(p, d)| d.min(sq_dist(p, &points[idx]))).collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(bp, bi, _)| potential < *bp || (potential == *bp && idx < *bi)) {
                best = Some((potential, idx, updated));
            }
        }
        let (_, idx, updated) = best.expect("at least one trial");
        centroids.push(points[idx].clone());
        d2 = updated;
    }
    centroids
}

/// Lloyd's algorithm with greedy k-means++ seeding. Empty clusters keep their centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if points.len() < k {
        return Err(ClusterError::TooFewReplays { n: points.len(), k });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(ClusterError::DimensionMismatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            inertia += d;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed && iterations > 1 {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&labels) {
            counts[j] += 1;
            for (s, x) in sums[j].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    Ok(KMeansFit { centroids, labels, iterations, inertia_history: history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub member: PlayerRef,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub race: Race,
    pub k: usize,
    pub seed: u64,
    pub unit_set: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<Assignment>,
    pub iterations_used: usize,
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_of(&self, replay_id: &str, player: usize) -> Option<usize> {
        self.assignments
            .iter()
            .find(|a| a.member.replay_id == replay_id && a.member.player == player)
            .map(|a| a.cluster)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClusterError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClusterError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Clusters the demonstrators of `catalog`'s race by final unit composition.
pub fn cluster_replays(
    logs: &[ReplayLog],
    catalog: &ActionCatalog,
    k: usize,
    seed: u64,
    winners_only: bool,
    max_iter: usize,
) -> Result<ClusterModel, ClusterError> {
    let members = ClusteringCriterion::UnitComposition.vectors(logs, catalog, winners_only)?;
    let points: Vec<Vec<f64>> = members.iter().map(|(_, v)| v.clone()).collect();
    let fit = kmeans(&points, k, seed, max_iter)?;
    Ok(ClusterModel {
        race: catalog.race,
        k,
        seed,
        unit_set: catalog.unit_set.clone(),
        centroids: fit.centroids,
        assignments: members
            .into_iter()
            .zip(fit.labels)
            .map(|((member, _), cluster)| Assignment { member, cluster })
            .collect(),
        iterations_used: fit.iterations,
        inertia_history: fit.inertia_history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SoLabel {
    AirFocus,
    GroundSupportFocus,
    GroundAirHybrid,
}

impl SoLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SoLabel::AirFocus => "AirFocus",
            SoLabel::GroundSupportFocus => "GroundSupportFocus",
            SoLabel::GroundAirHybrid => "GroundAirHybrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicObjective {
    pub cluster: usize,
    pub label: SoLabel,
    pub air_share: f64,
    pub ground_share: f64,
    pub text: String,
}

fn objective_text(label: SoLabel, top_units: &[String]) -> String {
    let core = top_units.join(", ");
    match label {
        SoLabel::AirFocus => format!(
            "Build an air-dominant army around {core}, securing the tech structures that enable air units early."
        ),
        SoLabel::GroundSupportFocus => format!(
            "Build a ground army around {core}, supported by upgrades and steady production."
        ),
        SoLabel::GroundAirHybrid => format!(
            "Build a mixed air and ground army around {core}, balancing production between both."
        ),
    }
}

/// Labels each centroid by its air and ground unit shares.
pub fn assign_strategic_objectives(model: &ClusterModel, catalog: &ActionCatalog, threshold: f64) -> Vec<StrategicObjective> {
    model
        .centroids
        .iter()
        .enumerate()
        .map(|(cluster, c)| {
            let mut air = 0.0;
            let mut ground = 0.0;
            for (unit, share) in model.unit_set.iter().zip(c) {
                let is_air = catalog.producer_of(unit).is_some_and(|s| s.tags.air);
                if is_air {
                    air += share;
                } else {
                    ground += share;
                }
            }
            let label = if air >= threshold {
                SoLabel::AirFocus
            } else if ground >= threshold {
                SoLabel::GroundSupportFocus
            } else {
                SoLabel::GroundAirHybrid
            };
            let mut ranked: Vec<(&String, f64)> = model.unit_set.iter().zip(c.iter().copied()).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
            let top: Vec<String> = ranked.iter().take(3).filter(|(_, s)| *s > 0.0).map(|(u, _)| (*u).clone()).collect();
            StrategicObjective { cluster, label, air_share: air, ground_share: ground, text: objective_text(label, &top) }
        })
        .collect()
}
