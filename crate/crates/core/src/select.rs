//! Extra-match selection and the improvement loop.
//!
//! Candidate pairs are screened by view-cone overlap and current match
//! error (`e < intercept + λ·slope`), thinned to a near-Poisson-disk subset
//! in the (i, j) index plane by grid rounding with a shrinking spacing, and
//! applied in a configurable order. Each pair is first tried with the fast
//! local ICP; when its result fails the error gate the branch-and-bound
//! registration takes over. Accepted matches are folded into the chain as
//! interpolated corrections, with the map blur ratio tracked after every
//! application.

use crate::chain::{Chain, ChainError, PowerRule};
use crate::cloud::{
    match_error_with_grid, overlap_ratio, transform_cloud, transform_points, ConePose, Frame,
    NnGrid,
};
use crate::goicp::{go_icp, BnbConfig, BnbError};
use crate::icp::icp_match;
use crate::quality::{blur_ratio, build_map};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("unknown ordering strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatus {
    Candidate,
    Selected,
    Improved,
    Rejected,
}

impl PairStatus {
    pub fn name(&self) -> &'static str {
        match self {
            PairStatus::Candidate => "candidate",
            PairStatus::Selected => "selected",
            PairStatus::Improved => "improved",
            PairStatus::Rejected => "rejected",
        }
    }
}

/// A candidate or accepted extra match between frames `j < i`.
#[derive(Debug, Clone, Copy)]
pub struct MatchPair {
    pub i: usize,
    pub j: usize,
    pub lambda: f64,
    pub error: f64,
    pub status: PairStatus,
}

impl MatchPair {
    pub fn gap(&self) -> usize {
        self.i - self.j
    }
}

/// Candidate screening parameters. `error_intercept`/`error_slope` define
/// the acceptance inequality `e < intercept + λ·slope`; frames further
/// apart than `max_gap` are never paired. Screening is exhaustive up to
/// `exhaustive_limit` frames and a seeded uniform subsample above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub max_gap: usize,
    pub lambda_min: f64,
    pub m: usize,
    pub error_intercept: f64,
    pub error_slope: f64,
    pub exhaustive_limit: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_gap: 1000,
            lambda_min: 0.2,
            m: 100,
            error_intercept: 0.3,
            error_slope: 0.5,
            exhaustive_limit: 2000,
            seed: 13,
        }
    }
}

/// The acceptance inequality for a match: `e < intercept + λ·slope`.
pub fn pair_gate(error: f64, lambda: f64, cfg: &SelectionConfig) -> bool {
    error < cfg.error_intercept + lambda * cfg.error_slope
}

/// Screens all frame pairs `(i, j)` with `1 ≤ i−j ≤ max_gap` against the
/// overlap gate `λ > λ_min` and the error inequality, evaluating the match
/// error in current global coordinates with the non-overlapping fraction
/// trimmed away (`γ = 1 − λ`). Pairs are returned in `(j, i)` order.
pub fn candidate_pairs(chain: &Chain, frames: &[Frame], cfg: &SelectionConfig) -> Vec<MatchPair> {
    let n = frames.len().min(chain.len());
    let mut pair_list: Vec<(usize, usize)> = Vec::new();
    for j in 0..n {
        for i in j + 1..n.min(j + cfg.max_gap + 1) {
            pair_list.push((i, j));
        }
    }
    if n > cfg.exhaustive_limit {
        // Desk-scale budget knob: keep a seeded uniform subsample.
        let budget = cfg.exhaustive_limit * cfg.max_gap.min(cfg.exhaustive_limit);
        if pair_list.len() > budget {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut picked = Vec::with_capacity(budget);
            for _ in 0..budget {
                picked.push(pair_list[rng.random_range(0..pair_list.len())]);
            }
            picked.sort_unstable();
            picked.dedup();
            pair_list = picked;
        }
    }

    // Global clouds and their indexes are shared across pairs.
    let globals: Vec<Vec<nalgebra::Vector3<f64>>> = crate::parallel::map_range(n, |l| {
        transform_points(&frames[l].points, chain.total(l))
    });
    let grids: Vec<Option<NnGrid>> = crate::parallel::map_range(n, |l| NnGrid::build(&globals[l]).ok());

    let evaluated = crate::parallel::map_slice(&pair_list, |&(i, j)| {
        let lambda = overlap_ratio(
            &ConePose { pose: *chain.total(j), cone: frames[j].cone },
            &ConePose { pose: *chain.total(i), cone: frames[i].cone },
        );
        if lambda <= cfg.lambda_min {
            return None;
        }
        let grid = grids[j].as_ref()?;
        let gamma = (1.0 - lambda).clamp(0.0, 0.9);
        let (error, _) = match_error_with_grid(grid, &globals[i], gamma).ok()?;
        if pair_gate(error, lambda, cfg) {
            Some(MatchPair {
                i,
                j,
                lambda,
                error,
                status: PairStatus::Candidate,
            })
        } else {
            None
        }
    });
    evaluated.into_iter().flatten().collect()
}

/// The set-rounding operator `{A}_ε = {round(a/ε)·ε | a ∈ A}` on 2-D
/// points, returned sorted and deduplicated.
pub fn grid_round(points: &[(f64, f64)], eps: f64) -> Vec<(f64, f64)> {
    debug_assert!(eps > 0.0);
    let mut cells: Vec<(i64, i64)> = points
        .iter()
        .map(|&(x, y)| ((x / eps).round() as i64, (y / eps).round() as i64))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    cells
        .into_iter()
        .map(|(cx, cy)| (cx as f64 * eps, cy as f64 * eps))
        .collect()
}

/// Thins candidates to roughly `m` nearly Poisson-disk distributed pairs.
///
/// The spacing starts at `√(bounding-box area / m)` and shrinks by factors
/// of 0.8; the rounding whose occupied-cell count comes closest to `m` wins
/// (ties keep the coarser spacing). Each occupied grid point is then
/// replaced by its nearest real candidate (ties toward smaller `i`, then
/// smaller `j`), so the result is a subset of the input.
pub fn poisson_sample(candidates: &[MatchPair], m: usize) -> Result<Vec<MatchPair>, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::EmptyCandidateSet);
    }
    let m = m.max(1);
    let pts: Vec<(f64, f64)> = candidates
        .iter()
        .map(|p| (p.i as f64, p.j as f64))
        .collect();
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let area = (max_x - min_x) * (max_y - min_y);
    let eps0 = if area > 0.0 { (area / m as f64).sqrt() } else { 1.0 };
    let mut best: Option<(usize, f64)> = None;
    let mut consider = |eps: f64, best: &mut Option<(usize, f64)>| -> usize {
        let count = grid_round(&pts, eps).len();
        let dist = (count as i64 - m as i64).unsigned_abs() as usize;
        if best.map_or(true, |(bd, _)| dist < bd) {
            *best = Some((dist, eps));
        }
        count
    };
    // The initial guess may land on either side of the target; shrink by
    // 0.8 while too coarse, and widen when even the guess is too fine
    // (small m), keeping the count closest to m.
    let mut eps = eps0;
    while eps >= 0.45 {
        consider(eps, &mut best);
        eps *= 0.8;
    }
    let mut eps = eps0 / 0.8;
    for _ in 0..40 {
        if consider(eps, &mut best) <= 1 {
            break;
        }
        eps /= 0.8;
    }
    // Below 0.45 every integer pair is its own cell; keep it as fallback.
    let exact_dist = (candidates.len() as i64 - m as i64).unsigned_abs() as usize;
    if best.map_or(true, |(bd, _)| exact_dist < bd) {
        best = Some((exact_dist, 0.4));
    }
    let (_, eps) = best.unwrap();
    let rounded = grid_round(&pts, eps);

    let mut selected: Vec<usize> = rounded
        .iter()
        .map(|&(gx, gy)| {
            let mut best_idx = 0usize;
            let mut best_key = (f64::INFINITY, usize::MAX, usize::MAX);
            for (idx, p) in candidates.iter().enumerate() {
                let d = ((p.i as f64 - gx).powi(2) + (p.j as f64 - gy).powi(2)).sqrt();
                let key = (d, p.i, p.j);
                if key.0 < best_key.0
                    || (key.0 == best_key.0 && (key.1, key.2) < (best_key.1, best_key.2))
                {
                    best_key = key;
                    best_idx = idx;
                }
            }
            best_idx
        })
        .collect();
    selected.sort_unstable();
    selected.dedup();
    Ok(selected
        .into_iter()
        .map(|idx| MatchPair {
            status: PairStatus::Selected,
            ..candidates[idx]
        })
        .collect())
}

/// Application order of the selected pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderStrategy {
    /// Ascending gap `i − j`.
    SmallGapsFirst,
    /// Ascending distance of the gap from the median gap.
    MediumGapsFirst,
    /// Seeded shuffle.
    Random { seed: u64 },
}

impl OrderStrategy {
    pub fn parse(name: &str, seed: u64) -> Result<Self, SelectError> {
        match name {
            "small_gaps_first" => Ok(OrderStrategy::SmallGapsFirst),
            "medium_gaps_first" => Ok(OrderStrategy::MediumGapsFirst),
            "random" => Ok(OrderStrategy::Random { seed }),
            other => Err(SelectError::UnknownStrategy(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OrderStrategy::SmallGapsFirst => "small_gaps_first",
            OrderStrategy::MediumGapsFirst => "medium_gaps_first",
            OrderStrategy::Random { .. } => "random",
        }
    }
}

/// Orders pairs by the chosen strategy; deterministic given strategy and
/// seed, with ties broken toward the smaller gap and then the smaller `j`.
pub fn order_pairs(pairs: &[MatchPair], strategy: OrderStrategy) -> Vec<MatchPair> {
    let mut out = pairs.to_vec();
    match strategy {
        OrderStrategy::SmallGapsFirst => {
            out.sort_by(|a, b| a.gap().cmp(&b.gap()).then(a.j.cmp(&b.j)).then(a.i.cmp(&b.i)));
        }
        OrderStrategy::MediumGapsFirst => {
            let mut gaps: Vec<usize> = out.iter().map(|p| p.gap()).collect();
            gaps.sort_unstable();
            let median = if gaps.len() % 2 == 1 {
                gaps[gaps.len() / 2] as f64
            } else {
                (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2]) as f64 / 2.0
            };
            out.sort_by(|a, b| {
                let da = (a.gap() as f64 - median).abs();
                let db = (b.gap() as f64 - median).abs();
                da.total_cmp(&db)
                    .then(a.gap().cmp(&b.gap()))
                    .then(a.j.cmp(&b.j))
                    .then(a.i.cmp(&b.i))
            });
        }
        OrderStrategy::Random { seed } => {
            // Fisher-Yates with a pinned stream, self-contained for
            // reproducibility across dependency upgrades.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in (1..out.len()).rev() {
                let r = rng.random_range(0..=k);
                out.swap(k, r);
            }
        }
    }
    out
}

/// Method that produced a pair's final match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMethod {
    Local,
    GoIcp,
}

/// Per-pair outcome of the improvement loop.
#[derive(Debug, Clone, Copy)]
pub struct PairOutcome {
    pub i: usize,
    pub j: usize,
    pub method: MatchMethod,
    pub lambda: f64,
    pub error_before: f64,
    pub error_after: f64,
    pub applied: bool,
}

/// Aggregate statistics of an improvement run.
#[derive(Debug, Clone, Default)]
pub struct ImproveStats {
    pub outcomes: Vec<PairOutcome>,
    pub beta_trace: Vec<f64>,
    pub local_calls: usize,
    pub goicp_calls: usize,
    pub applied: usize,
    pub local_time: Duration,
    pub goicp_time: Duration,
    /// Corrections whose rotation came within 1e-3 rad of a half-turn,
    /// where the screw axis sign is ambiguous.
    pub near_half_turn: usize,
}

/// Improvement-loop parameters.
#[derive(Debug, Clone, Copy)]
pub struct ImproveConfig {
    pub rule: PowerRule,
    /// Overlap floor: pairs whose final overlap falls below this are never
    /// applied.
    pub lambda0: f64,
    /// Stop after this many consecutive pairs without a new best blur
    /// ratio.
    pub patience: usize,
    pub icp_max_iter: usize,
    pub icp_tol: f64,
    /// Blur-ratio scales for the trace.
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for ImproveConfig {
    fn default() -> Self {
        Self {
            rule: PowerRule::Index,
            lambda0: 0.4,
            patience: 10,
            icp_max_iter: crate::icp::DEFAULT_MAX_ITER,
            icp_tol: crate::icp::DEFAULT_TOL,
            eps1: 0.2,
            eps2: 10.0,
        }
    }
}

/// Runs the improvement loop over the ordered pairs.
///
/// Each pair is matched with the local ICP seeded at the current relative
/// transform; if the result violates the error gate, the branch-and-bound
/// registration is run around the same seed. A final match passing the gate
/// with overlap at least `lambda0` is applied to the chain as an
/// interpolated correction. The loop stops early when the blur ratio has
/// not improved for `patience` consecutive pairs. Individual pair failures
/// are recorded, not fatal.
pub fn improve(
    chain: &mut Chain,
    frames: &[Frame],
    ordered: &[MatchPair],
    sel_cfg: &SelectionConfig,
    bnb: &BnbConfig,
    cfg: &ImproveConfig,
) -> Result<ImproveStats, SelectError> {
    let mut stats = ImproveStats::default();
    let initial_beta = current_beta(chain, frames, cfg);
    stats.beta_trace.push(initial_beta);
    let mut best_beta = initial_beta;
    let mut since_best = 0usize;

    for pair in ordered {
        let (i, j) = (pair.i, pair.j);
        let lambda = overlap_ratio(
            &ConePose { pose: *chain.total(j), cone: frames[j].cone },
            &ConePose { pose: *chain.total(i), cone: frames[i].cone },
        );
        let gamma = (1.0 - lambda).clamp(0.0, 0.9);
        let seed_t = chain.relative_transform(i, j)?;

        let seeded_q = transform_cloud(&frames[i], &seed_t);
        let error_before = NnGrid::build(&frames[j].points)
            .ok()
            .and_then(|g| match_error_with_grid(&g, &seeded_q.points, gamma).ok())
            .map_or(f64::INFINITY, |(e, _)| e);

        let t0 = Instant::now();
        let local = icp_match(&frames[j], &frames[i], gamma, &seed_t, cfg.icp_max_iter, cfg.icp_tol);
        stats.local_calls += 1;
        stats.local_time += t0.elapsed();

        let (mut candidate, mut error, mut method) = match local {
            Ok(res) => (res.transform, res.error, MatchMethod::Local),
            Err(_) => (seed_t, f64::INFINITY, MatchMethod::Local),
        };

        if !pair_gate(error, lambda, sel_cfg) {
            let t1 = Instant::now();
            match go_icp(&frames[j], &seeded_q, bnb, gamma) {
                Ok(res) => {
                    stats.goicp_calls += 1;
                    stats.goicp_time += t1.elapsed();
                    candidate = res.transform.compose(&seed_t);
                    error = res.error;
                    method = MatchMethod::GoIcp;
                }
                Err(BnbError::SearchExhausted) => {
                    stats.goicp_calls += 1;
                    stats.goicp_time += t1.elapsed();
                }
                Err(e) => return Err(e.into()),
            }
        }

        let accept = pair_gate(error, lambda, sel_cfg) && lambda >= cfg.lambda0;
        if accept {
            let delta = chain
                .relative_transform(i, j)?
                .inverse()
                .compose(&candidate);
            if delta.near_half_turn() {
                stats.near_half_turn += 1;
            }
            chain.apply_correction(i, j, &candidate, cfg.rule)?;
            stats.applied += 1;
            let beta = current_beta(chain, frames, cfg);
            stats.beta_trace.push(beta);
            if beta < best_beta {
                best_beta = beta;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            since_best += 1;
        }
        stats.outcomes.push(PairOutcome {
            i,
            j,
            method,
            lambda,
            error_before,
            error_after: error,
            applied: accept,
        });
        if since_best >= cfg.patience {
            break;
        }
    }
    Ok(stats)
}

fn current_beta(chain: &Chain, frames: &[Frame], cfg: &ImproveConfig) -> f64 {
    build_map(frames, chain)
        .and_then(|m| blur_ratio(&m, cfg.eps1, cfg.eps2))
        .unwrap_or(f64::NAN)
}
