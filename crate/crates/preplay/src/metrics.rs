//! Behavioral path metrics and statistics: visitation matrices, map and
//! direction overlap, the two path-reuse rules, one-sided Wilcoxon
//! signed-rank tests, and bootstrap summaries.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::Pos;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("position ({row}, {col}) is outside the {height}x{width} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("matrix dimensions differ: {a_h}x{a_w} vs {b_h}x{b_w}")]
    DimensionMismatch {
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },
    #[error("test path matrix is empty")]
    EmptyTestPath,
    #[error("need at least {needed} nonzero differences, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// Binary visitation mask over an H x W grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathMatrix {
    pub height: usize,
    pub width: usize,
    cells: Vec<bool>,
}

impl PathMatrix {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn union(&mut self, other: &PathMatrix) {
        assert_eq!((self.height, self.width), (other.height, other.width));
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
    }
}

/// Visitation mask of a position sequence; with `dilate`, each visited cell
/// also marks its 4-neighborhood (used for crafting-world training paths,
/// where many near-identical routes exist).
pub fn path_matrix(
    positions: &[Pos],
    height: usize,
    width: usize,
    dilate: bool,
) -> Result<PathMatrix, MetricError> {
    let mut cells = vec![false; height * width];
    for &p in positions {
        if p.row >= height || p.col >= width {
            return Err(MetricError::OutOfBounds {
                row: p.row,
                col: p.col,
                height,
                width,
            });
        }
        cells[p.row * width + p.col] = true;
        if dilate {
            if p.row > 0 {
                cells[(p.row - 1) * width + p.col] = true;
            }
            if p.row + 1 < height {
                cells[(p.row + 1) * width + p.col] = true;
            }
            if p.col > 0 {
                cells[p.row * width + p.col - 1] = true;
            }
            if p.col + 1 < width {
                cells[p.row * width + p.col + 1] = true;
            }
        }
    }
    Ok(PathMatrix {
        height,
        width,
        cells,
    })
}

/// Shared-cell fraction: |train AND test| / |test|, in [0, 1].
pub fn map_overlap(train: &PathMatrix, test: &PathMatrix) -> Result<f64, MetricError> {
    if (train.height, train.width) != (test.height, test.width) {
        return Err(MetricError::DimensionMismatch {
            a_h: train.height,
            a_w: train.width,
            b_h: test.height,
            b_w: test.width,
        });
    }
    let test_count = test.count();
    if test_count == 0 {
        return Err(MetricError::EmptyTestPath);
    }
    let shared = train
        .cells
        .iter()
        .zip(&test.cells)
        .filter(|(a, b)| **a && **b)
        .count();
    Ok(shared as f64 / test_count as f64)
}

/// Mean displacement over the final stretch of a path (up to the last 10
/// steps; all of them when the path is shorter).
fn final_direction(positions: &[Pos]) -> (f64, f64) {
    if positions.len() < 2 {
        return (0.0, 0.0);
    }
    let n_steps = (positions.len() - 1).min(10);
    let tail = &positions[positions.len() - 1 - n_steps..];
    let mut dr = 0.0;
    let mut dc = 0.0;
    for w in tail.windows(2) {
        dr += w[1].row as f64 - w[0].row as f64;
        dc += w[1].col as f64 - w[0].col as f64;
    }
    (dr / n_steps as f64, dc / n_steps as f64)
}

/// Cosine similarity of the mean final-approach directions of two paths;
/// defined as 0 when either mean displacement is the zero vector.
pub fn dir_overlap(train_positions: &[Pos], test_positions: &[Pos]) -> f64 {
    let (ar, ac) = final_direction(train_positions);
    let (br, bc) = final_direction(test_positions);
    let na = (ar * ar + ac * ac).sqrt();
    let nb = (br * br + bc * bc).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (ar * br + ac * bc) / (na * nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Gridworld,
    Craftworld,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReuseThresholds {
    pub alpha_map: f64,
    pub alpha_dir: f64,
}

impl Default for ReuseThresholds {
    fn default() -> Self {
        ReuseThresholds {
            alpha_map: 0.5,
            alpha_dir: 0.5,
        }
    }
}

/// Path-reuse classification. Grid worlds use the map-overlap threshold
/// alone; the crafting world accepts either joint map+direction agreement or
/// a very high map overlap.
pub fn path_reuse(o_map: f64, o_dir: f64, regime: Regime, thresholds: ReuseThresholds) -> bool {
    match regime {
        Regime::Gridworld => o_map > thresholds.alpha_map,
        Regime::Craftworld => {
            (o_map > thresholds.alpha_map && o_dir > thresholds.alpha_dir)
                || o_map > 2.0 * thresholds.alpha_map
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReuseVerdict {
    pub o_map: f64,
    pub o_dir: f64,
    pub reused: bool,
    pub regime: Regime,
}

impl ReuseVerdict {
    pub fn classify(o_map: f64, o_dir: f64, regime: Regime, thresholds: ReuseThresholds) -> Self {
        ReuseVerdict {
            o_map,
            o_dir,
            reused: path_reuse(o_map, o_dir, regime, thresholds),
            regime,
        }
    }
}

/// Standard normal CDF (Abramowitz-Stegun 26.2.17, |error| < 7.5e-8).
fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_cdf(-x);
    }
    let t = 1.0 / (1.0 + 0.2316419 * x);
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    1.0 - pdf * poly
}

/// Average ranks of |values|, with tied values sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// One-sided (greater) Wilcoxon signed-rank test of `samples` against the
/// null median `mu0`. Zero differences are excluded; ties share average
/// ranks. Exact enumeration of the signed-rank distribution for n <= 25,
/// normal approximation with tie correction above. Returns (p_value, Z).
pub fn wilcoxon_one_sided(samples: &[f64], mu0: f64) -> Result<(f64, f64), MetricError> {
    let diffs: Vec<f64> = samples
        .iter()
        .map(|x| x - mu0)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(MetricError::TooFewSamples { needed: 5, got: n });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    // Normal statistic (always reported), with tie correction on the variance.
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w_plus - mean) / var.sqrt();

    let p = if n <= 25 {
        // Exact enumeration over sign assignments of the observed ranks.
        // Doubling makes average ranks integral; subset-sum counts stay
        // exactly representable (<= 2^25 < 2^53).
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &doubled {
            reach += r;
            for s in (r..=reach).rev() {
                counts[s] += counts[s - r];
            }
        }
        let w2 = (2.0 * w_plus).round() as usize;
        let tail: f64 = counts[w2..].iter().sum();
        tail / 2f64.powi(n as i32)
    } else {
        1.0 - normal_cdf(z)
    };
    Ok((p, z))
}

/// Per-seed evaluation outcomes feeding a summary.
#[derive(Debug, Clone, Default)]
pub struct SeedOutcomes {
    pub successes: Vec<bool>,
    /// Reuse verdicts for successful episodes (None when no verdict applies).
    pub reused: Vec<Option<bool>>,
}

impl SeedOutcomes {
    pub fn success_rate(&self) -> f64 {
        if self.successes.is_empty() {
            return 0.0;
        }
        self.successes.iter().filter(|&&s| s).count() as f64 / self.successes.len() as f64
    }

    /// Fraction of classified episodes that reused a training path.
    pub fn reuse_rate(&self) -> Option<f64> {
        let verdicts: Vec<bool> = self.reused.iter().flatten().copied().collect();
        if verdicts.is_empty() {
            None
        } else {
            Some(verdicts.iter().filter(|&&r| r).count() as f64 / verdicts.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub n_seeds: usize,
    pub pooled_success_rate: f64,
    /// Pooled over successful, classified episodes across seeds.
    pub pooled_reuse_rate: Option<f64>,
    pub success_median: f64,
    pub success_ci: (f64, f64),
    pub reuse_median: Option<f64>,
    pub reuse_ci: Option<(f64, f64)>,
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Percentile bootstrap CI of the median (seeded, 10,000 resamples).
fn bootstrap_median_ci(values: &[f64], rng: &mut ChaCha8Rng) -> (f64, (f64, f64)) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let point = median(&sorted);
    let mut medians = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resample = vec![0.0; values.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = values[rng.gen_range(0..values.len())];
        }
        resample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(median(&resample));
    }
    medians.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = medians[((BOOTSTRAP_RESAMPLES - 1) as f64 * 0.025).floor() as usize];
    let hi = medians[((BOOTSTRAP_RESAMPLES - 1) as f64 * 0.975).ceil() as usize];
    (point, (lo, hi))
}

/// Medians and 95% bootstrap confidence intervals over per-seed rates, plus
/// pooled success and reuse rates.
pub fn summarize(per_seed: &[SeedOutcomes], rng_seed: u64) -> Summary {
    assert!(!per_seed.is_empty(), "summarize needs at least one seed");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let success_rates: Vec<f64> = per_seed.iter().map(SeedOutcomes::success_rate).collect();
    let (success_median, success_ci) = bootstrap_median_ci(&success_rates, &mut rng);

    let total_eps: usize = per_seed.iter().map(|s| s.successes.len()).sum();
    let total_succ: usize = per_seed
        .iter()
        .map(|s| s.successes.iter().filter(|&&b| b).count())
        .sum();
    let pooled_success_rate = if total_eps == 0 {
        0.0
    } else {
        total_succ as f64 / total_eps as f64
    };

    let reuse_rates: Vec<f64> = per_seed.iter().filter_map(SeedOutcomes::reuse_rate).collect();
    let (reuse_median, reuse_ci) = if reuse_rates.is_empty() {
        (None, None)
    } else {
        let (m, ci) = bootstrap_median_ci(&reuse_rates, &mut rng);
        (Some(m), Some(ci))
    };
    let verdicts: Vec<bool> = per_seed
        .iter()
        .flat_map(|s| s.reused.iter().flatten().copied())
        .collect();
    let pooled_reuse_rate = if verdicts.is_empty() {
        None
    } else {
        Some(verdicts.iter().filter(|&&r| r).count() as f64 / verdicts.len() as f64)
    };

    Summary {
        n_seeds: per_seed.len(),
        pooled_success_rate,
        pooled_reuse_rate,
        success_median,
        success_ci,
        reuse_median,
        reuse_ci,
    }
}
