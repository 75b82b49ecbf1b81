//! Cooperation order parameters, collapse thresholds, action-value statistics
//! and two-cluster diagnostics of hidden activations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Criterion used for shared-policy collapse thresholds.
pub const SHARED_CRITERION: f64 = 0.55;
/// Criterion used for grouped-policy collapse thresholds.
pub const GROUPED_CRITERION: f64 = 0.15;

/// Lloyd iterations allowed per restart unless stated otherwise.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Independent k-means++ restarts; the lowest-SSE fit is kept.
pub const KMEANS_RESTARTS: usize = 10;

/// Mean of the final `t_eval` entries of `trace`.
pub fn mean_cooperation(trace: &[f64], t_eval: usize) -> Result<f64> {
    if t_eval == 0 {
        return Err(Error::config("t_eval must be at least 1"));
    }
    if trace.len() < t_eval {
        return Err(Error::config(format!(
            "trace has {} entries, fewer than t_eval = {t_eval}",
            trace.len()
        )));
    }
    let tail = &trace[trace.len() - t_eval..];
    Ok(tail.iter().sum::<f64>() / t_eval as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Value(f64),
    /// Every tested value stays above the criterion.
    AboveRange,
    /// No tested value is above the criterion.
    BelowRange,
}

impl Threshold {
    pub fn marker(&self) -> &'static str {
        match self {
            Threshold::Value(_) => "Value",
            Threshold::AboveRange => "AboveRange",
            Threshold::BelowRange => "BelowRange",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdResult {
    pub b: f64,
    pub d_r_star: Threshold,
    pub criterion: f64,
}

/// Largest `d_r` whose cooperation exceeds `criterion` (or reaches it when
/// `strict` is false). `grid` holds `(d_r, cooperation)` with ascending `d_r`.
pub fn collapse_threshold(grid: &[(f64, f64)], criterion: f64, strict: bool) -> Result<Threshold> {
    if grid.is_empty() {
        return Err(Error::Empty("threshold grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::config(
            "threshold grid must be strictly ascending in d_r",
        ));
    }
    let passes = |c: f64| {
        if strict {
            c > criterion
        } else {
            c >= criterion
        }
    };
    if grid.iter().all(|&(_, c)| passes(c)) {
        return Ok(Threshold::AboveRange);
    }
    match grid.iter().rev().find(|&&(_, c)| passes(c)) {
        Some(&(d, _)) => Ok(Threshold::Value(d)),
        None => Ok(Threshold::BelowRange),
    }
}

/// `(q_mean, q_gap)`: mean `|Q|` over states and both actions, and mean
/// `|Q(s, C) - Q(s, D)|` over states.
pub fn q_stats(q_values: &[[f64; 2]]) -> Result<(f64, f64)> {
    if q_values.is_empty() {
        return Err(Error::Empty("q statistics need at least one state"));
    }
    let n = q_values.len() as f64;
    let mean = q_values
        .iter()
        .map(|q| q[0].abs() + q[1].abs())
        .sum::<f64>()
        / (2.0 * n);
    let gap = q_values.iter().map(|q| (q[0] - q[1]).abs()).sum::<f64>() / n;
    Ok((mean, gap))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterDiagnostic {
    pub assignments: Vec<usize>,
    pub centroids: [Vec<f64>; 2],
    pub sse: f64,
    /// SSE after each Lloyd iteration of the kept restart.
    pub sse_history: Vec<f64>,
    /// `None` when one cluster ended up empty.
    pub silhouette: Option<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or(Error::Empty("no points"))?;
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: p.len(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cluster input".into()));
    }
    Ok(dim)
}

fn sse_of(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>; 2]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>; 2]) -> usize {
    usize::from(sq_dist(p, &centroids[1]) < sq_dist(p, &centroids[0]))
}

fn update_centroids(points: &[Vec<f64>], labels: &[usize], dim: usize) -> [Vec<f64>; 2] {
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    for k in 0..2 {
        let c = counts[k].max(1) as f64;
        sums[k].iter_mut().for_each(|s| *s /= c);
    }
    sums
}

/// Moves the point farthest from its centroid into any empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &[Vec<f64>; 2]) -> bool {
    for k in 0..2 {
        if labels.iter().all(|&l| l != k) {
            let far = (0..points.len())
                .max_by(|&i, &j| {
                    sq_dist(&points[i], &centroids[labels[i]])
                        .total_cmp(&sq_dist(&points[j], &centroids[labels[j]]))
                })
                .expect("nonempty points");
            labels[far] = k;
            return true;
        }
    }
    false
}

fn kmeans_pp_init<R: Rng>(points: &[Vec<f64>], rng: &mut R) -> [Vec<f64>; 2] {
    let first = rng.gen_range(0..points.len());
    let d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    let total: f64 = d2.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut second = d2
        .iter()
        .rposition(|&d| d > 0.0)
        .expect("two distinct points");
    for (i, &d) in d2.iter().enumerate() {
        if d > 0.0 && u < d {
            second = i;
            break;
        }
        u -= d;
    }
    [points[first].clone(), points[second].clone()]
}

/// Labels, centroids and the SSE after each iteration.
type Fit = (Vec<usize>, [Vec<f64>; 2], Vec<f64>);

fn lloyd(points: &[Vec<f64>], dim: usize, init: [Vec<f64>; 2], max_iter: usize) -> Fit {
    let mut centroids = init;
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    repair_empty(points, &mut labels, &centroids);
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        centroids = update_centroids(points, &labels, dim);
        history.push(sse_of(points, &labels, &centroids));
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(points, &mut next, &centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    (labels, centroids, history)
}

/// Two-cluster k-means with seeded k-means++ starts and Lloyd iterations.
///
/// Runs [`KMEANS_RESTARTS`] restarts and keeps the lowest final SSE (earliest
/// on ties). Lloyd's method can stop in a local optimum, so a single restart
/// is not guaranteed to find the best partition.
pub fn kmeans2(points: &[Vec<f64>], seed: u64, max_iter: usize) -> Result<ClusterDiagnostic> {
    let dim = check_points(points)?;
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::config("k-means needs at least two distinct points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Fit> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init = kmeans_pp_init(points, &mut rng);
        let fit = lloyd(points, dim, init, max_iter);
        let better = match &best {
            None => true,
            Some(b) => fit.2.last() < b.2.last(),
        };
        if better {
            best = Some(fit);
        }
    }
    let (assignments, centroids, sse_history) = best.expect("at least one restart");
    let sse = sse_of(points, &assignments, &centroids);
    let silhouette = silhouette(points, &assignments).ok();
    Ok(ClusterDiagnostic {
        assignments,
        centroids,
        sse,
        sse_history,
        silhouette,
    })
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// contribute zero. Labels may be any integers; at least two must be present.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_points(points)?;
    if labels.len() != points.len() {
        return Err(Error::Dimension {
            expected: points.len(),
            actual: labels.len(),
        });
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::config("silhouette needs two nonempty clusters"));
    }
    let slot = |l: usize| ids.binary_search(&l).expect("known label");
    let mut sizes = vec![0usize; ids.len()];
    for &l in labels {
        sizes[slot(l)] += 1;
    }

    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; ids.len()];
    for i in 0..n {
        let own = slot(labels[i]);
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[slot(labels[j])] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..ids.len())
            .filter(|&k| k != own)
            .map(|k| sums[k] / sizes[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Mean, sample standard deviation and count of one metric in one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// NaN when fewer than two values are available.
    pub sd: f64,
    pub count: usize,
}

impl Stat {
    /// Values are sorted before summing so the result ignores input order.
    pub fn of(values: &[f64]) -> Stat {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        let count = v.len();
        if count == 0 {
            return Stat {
                mean: f64::NAN,
                sd: f64::NAN,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let sd = if count < 2 {
            f64::NAN
        } else {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
        };
        Stat { mean, sd, count }
    }
}

/// One row of a sweep table: the run's labels and its summary metrics.
///
/// Field order is the column order of `runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    #[serde(rename = "B")]
    pub b: f64,
    pub tau_init: f64,
    pub d_r: f64,
    pub d_g: f64,
    pub topology: String,
    pub architecture: String,
    pub augmentation: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
    pub coop_mean: f64,
    pub q_mean: f64,
    pub q_gap: f64,
    pub silhouette: f64,
    pub wall_time: f64,
    pub run_id: String,
    pub run_seed: u64,
    pub n_groups: usize,
    pub tau_final: f64,
    pub hidden_dim: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub loss: String,
    pub optimizer: String,
    pub eval_policy: String,
    pub status: String,
    pub error: String,
}

impl RunRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Every axis label except the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    #[serde(rename = "B")]
    pub b: f64,
    pub tau_init: f64,
    pub tau_final: f64,
    pub d_r: f64,
    pub d_g: f64,
    pub topology: String,
    pub architecture: String,
    pub n_groups: usize,
    pub augmentation: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub hidden_dim: usize,
    pub buffer_capacity: usize,
    pub gamma: f64,
    pub loss: String,
    pub optimizer: String,
    pub eval_policy: String,
}

impl CellKey {
    pub fn of(r: &RunRow) -> CellKey {
        CellKey {
            b: r.b,
            tau_init: r.tau_init,
            tau_final: r.tau_final,
            d_r: r.d_r,
            d_g: r.d_g,
            topology: r.topology.clone(),
            architecture: r.architecture.clone(),
            n_groups: r.n_groups,
            augmentation: r.augmentation.clone(),
            l: r.l,
            hidden_dim: r.hidden_dim,
            buffer_capacity: r.buffer_capacity,
            gamma: r.gamma,
            loss: r.loss.clone(),
            optimizer: r.optimizer.clone(),
            eval_policy: r.eval_policy.clone(),
        }
    }

    /// Total order used to sort cells: numbers compare numerically.
    fn sort_key(&self) -> impl Ord {
        let f = |x: f64| {
            // Map to an integer with the same total order.
            let b = x.to_bits() as i64;
            b ^ (((b >> 63) as u64) >> 1) as i64
        };
        (
            (
                self.topology.clone(),
                self.architecture.clone(),
                self.n_groups,
                self.augmentation.clone(),
                self.l,
            ),
            (
                self.hidden_dim,
                self.buffer_capacity,
                f(self.gamma),
                self.loss.clone(),
                self.optimizer.clone(),
            ),
            (
                self.eval_policy.clone(),
                f(self.tau_final),
                f(self.tau_init),
                f(self.b),
                f(self.d_r),
                f(self.d_g),
            ),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub key: CellKey,
    pub coop_mean: Stat,
    pub q_mean: Stat,
    pub q_gap: Stat,
    pub silhouette: Stat,
}

/// Groups successful rows by every axis except the seed. Cells come back in
/// a fixed order independent of the row order.
pub fn aggregate_seeds(rows: &[RunRow]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<_, (CellKey, Vec<&RunRow>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let key = CellKey::of(r);
        cells
            .entry(key.sort_key())
            .or_insert_with(|| (key, Vec::new()))
            .1
            .push(r);
    }
    cells
        .into_values()
        .map(|(key, rs)| {
            let stat =
                |f: fn(&RunRow) -> f64| Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            CellSummary {
                key,
                coop_mean: stat(|r| r.coop_mean),
                q_mean: stat(|r| r.q_mean),
                q_gap: stat(|r| r.q_gap),
                silhouette: stat(|r| r.silhouette),
            }
        })
        .collect()
}

/// A collapse threshold for one slice of the (B, d_r) plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdRow {
    pub key: CellKey,
    pub result: ThresholdResult,
    /// Tested d_r range, used to place out-of-range markers.
    pub d_r_min: f64,
    pub d_r_max: f64,
}

/// Collapse thresholds for every slice of the aggregated table that differs
/// only in payoff. Shared slices use [`SHARED_CRITERION`], grouped ones
/// [`GROUPED_CRITERION`].
pub fn thresholds(cells: &[CellSummary], strict: bool) -> Result<Vec<ThresholdRow>> {
    let mut slices: BTreeMap<_, (CellKey, Vec<(f64, f64)>)> = BTreeMap::new();
    for c in cells {
        let mut key = c.key.clone();
        key.d_r = f64::NAN;
        key.d_g = f64::NAN;
        slices
            .entry(key.sort_key())
            .or_insert_with(|| (key, Vec::new()))
            .1
            .push((c.key.d_r, c.coop_mean.mean));
    }
    let mut out = Vec::new();
    for (_, (key, mut grid)) in slices {
        grid.sort_by(|a, b| a.0.total_cmp(&b.0));
        grid.dedup_by(|a, b| a.0 == b.0);
        if grid.iter().any(|g| g.1.is_nan()) {
            continue;
        }
        let criterion = if key.architecture == "shared" {
            SHARED_CRITERION
        } else {
            GROUPED_CRITERION
        };
        let d_r_star = collapse_threshold(&grid, criterion, strict)?;
        out.push(ThresholdRow {
            result: ThresholdResult {
                b: key.b,
                d_r_star,
                criterion,
            },
            d_r_min: grid[0].0,
            d_r_max: grid[grid.len() - 1].0,
            key,
        });
    }
    Ok(out)
}
