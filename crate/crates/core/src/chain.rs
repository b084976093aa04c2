//! The odometry chain: sequential globalization, relative-transform
//! recovery, correction propagation by fractional powers, the
//! power-coefficient rules and frame-weight diagnostics.
//!
//! The chain stores total transforms `t_l` mapping each frame's coordinates
//! into frame 0's; `t_0 = I`. An improved long-span match between frames
//! `j < i` is folded in as `Δt = t_ij⁻¹ t_ij'`, distributed over the span by
//! `t_l := t_l · Δt^(u_l)` with `u_j = 0` and `u_i = 1`, and propagated
//! rigidly to every frame after `i`. With all `u_l` in `[0, 1]` the
//! interpolated increments never exceed the full correction in rotation
//! angle or translation magnitude, so repeated corrections contract the map
//! rather than tearing it.

use crate::cloud::Frame;
use crate::icp::{icp_match, IcpError, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::quality::{Cluster, FusedMap};
use crate::se3::{InterpolationPrecompute, RigidTransform};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("stepwise match failed at frame index {index}: {source}")]
    MatchFailed {
        index: usize,
        #[source]
        source: IcpError,
    },
    #[error("chain needs at least 2 frames")]
    TooShort,
    #[error("frame index {0} out of range for chain of length {1}")]
    IndexOutOfRange(usize, usize),
    #[error("correction span is empty (i must exceed j)")]
    EmptySpan,
    #[error("correction transform contains non-finite entries")]
    NonFiniteTransform,
    #[error("first total transform must be the identity")]
    BadOrigin,
}

/// Rule for assigning the interpolation powers `u_l` over a corrected span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerRule {
    /// Relative continuous index: `u_l = (l − j)/(i − j)`.
    Index,
    /// Cumulative odometric path length, normalized over the span.
    PathLength,
    /// Cumulative stepwise match errors, normalized over the span.
    ErrorCumulative,
    /// Ratio of pose distances `d(τ_lj)/d(τ_ij)` with
    /// `d(τ) = √(a θ² + b ‖q‖²)`.
    Se3Metric { a: f64, b: f64 },
    /// Projection onto the one-parameter path `τ_ij^u`: the `u` minimizing
    /// `d(τ_ij^(-u) τ_lj)`, found by golden-section search.
    SkewProjection,
}

impl PowerRule {
    pub fn name(&self) -> &'static str {
        match self {
            PowerRule::Index => "index",
            PowerRule::PathLength => "path_length",
            PowerRule::ErrorCumulative => "error_cumulative",
            PowerRule::Se3Metric { .. } => "se3_metric",
            PowerRule::SkewProjection => "skew_projection",
        }
    }
}

impl std::str::FromStr for PowerRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "index" => Ok(PowerRule::Index),
            "path_length" => Ok(PowerRule::PathLength),
            "error_cumulative" => Ok(PowerRule::ErrorCumulative),
            "se3_metric" => Ok(PowerRule::Se3Metric { a: 1.0, b: 1.0 }),
            "skew_projection" => Ok(PowerRule::SkewProjection),
            other => Err(format!("unknown power rule `{other}`")),
        }
    }
}

/// One applied correction, for audit and serialization.
#[derive(Debug, Clone)]
pub struct CorrectionRecord {
    pub i: usize,
    pub j: usize,
    pub rule: PowerRule,
    pub delta: RigidTransform,
    pub u_values: Vec<f64>,
}

/// Ordered sequence of total transforms `t_l` (frame `l` to frame 0), with
/// the stepwise match errors of the initial run and a log of applied
/// corrections. Single writer; reads are freely shareable.
#[derive(Debug, Clone)]
pub struct Chain {
    totals: Vec<RigidTransform>,
    step_errors: Vec<f64>,
    log: Vec<CorrectionRecord>,
}

impl Chain {
    /// Wraps precomputed totals; the first must be the identity.
    pub fn from_totals(totals: Vec<RigidTransform>) -> Result<Self, ChainError> {
        if totals.len() < 2 {
            return Err(ChainError::TooShort);
        }
        let id = RigidTransform::identity();
        if (totals[0].to_homogeneous() - id.to_homogeneous()).norm() > 1e-9 {
            return Err(ChainError::BadOrigin);
        }
        let n = totals.len();
        Ok(Self {
            totals,
            step_errors: vec![0.0; n - 1],
            log: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn total(&self, l: usize) -> &RigidTransform {
        &self.totals[l]
    }

    pub fn totals(&self) -> &[RigidTransform] {
        &self.totals
    }

    pub fn step_errors(&self) -> &[f64] {
        &self.step_errors
    }

    pub fn log(&self) -> &[CorrectionRecord] {
        &self.log
    }

    /// Relative transform `t_ij = t_j⁻¹ t_i`, mapping frame `i` coordinates
    /// into frame `j` coordinates.
    pub fn relative_transform(&self, i: usize, j: usize) -> Result<RigidTransform, ChainError> {
        let n = self.totals.len();
        if i >= n {
            return Err(ChainError::IndexOutOfRange(i, n));
        }
        if j >= n {
            return Err(ChainError::IndexOutOfRange(j, n));
        }
        Ok(self.totals[j].inverse().compose(&self.totals[i]))
    }

    /// The vehicle path: translation components of the totals, in order.
    pub fn path(&self) -> Vec<nalgebra::Vector3<f64>> {
        self.totals.iter().map(|t| t.translation).collect()
    }

    /// Interpolation powers for a correction spanning `j < i`, one value per
    /// frame in `j..=i`. Every rule returns `u_j = 0` and `u_i = 1` exactly,
    /// clamped to `[0, 1]` and made nondecreasing (a running maximum), which
    /// the non-cumulative rules do not guarantee on looping paths.
    pub fn power_coefficients(
        &self,
        i: usize,
        j: usize,
        rule: PowerRule,
    ) -> Result<Vec<f64>, ChainError> {
        let n = self.totals.len();
        if i >= n {
            return Err(ChainError::IndexOutOfRange(i, n));
        }
        if j >= i {
            return Err(ChainError::EmptySpan);
        }
        let span = i - j;
        let index_rule = |l: usize| (l - j) as f64 / span as f64;
        let mut u: Vec<f64> = match rule {
            PowerRule::Index => (j..=i).map(index_rule).collect(),
            PowerRule::PathLength => {
                let steps: Vec<f64> = (j + 1..=i)
                    .map(|k| (self.totals[k].translation - self.totals[k - 1].translation).norm())
                    .collect();
                cumulative_or_index(&steps, j, i, index_rule)
            }
            PowerRule::ErrorCumulative => {
                let steps: Vec<f64> = (j + 1..=i).map(|k| self.step_errors[k - 1]).collect();
                cumulative_or_index(&steps, j, i, index_rule)
            }
            PowerRule::Se3Metric { a, b } => {
                let d_total = pose_metric(&self.relative_transform(i, j)?, a, b);
                if d_total <= 0.0 {
                    (j..=i).map(index_rule).collect()
                } else {
                    (j..=i)
                        .map(|l| {
                            let t_lj = self.totals[j].inverse().compose(&self.totals[l]);
                            pose_metric(&t_lj, a, b) / d_total
                        })
                        .collect()
                }
            }
            PowerRule::SkewProjection => {
                let t_ij = self.relative_transform(i, j)?;
                let pre = InterpolationPrecompute::new(&t_ij);
                (j..=i)
                    .map(|l| {
                        let t_lj = self.totals[j].inverse().compose(&self.totals[l]);
                        project_on_power_path(&pre, &t_lj)
                    })
                    .collect()
            }
        };
        u[0] = 0.0;
        u[span] = 1.0;
        let mut run_max = 0.0f64;
        for v in u.iter_mut() {
            *v = v.clamp(0.0, 1.0).max(run_max);
            run_max = *v;
        }
        Ok(u)
    }

    /// Applies an improved match `t_ij_new` between frames `j < i`.
    ///
    /// With `Δt = t_ij⁻¹ t_ij_new`, every frame in the span becomes
    /// `t_l := t_l · Δt^(u_l)`; frame `j` is untouched, frame `i` lands
    /// exactly on `t_j · t_ij_new`, and every frame after `i` is moved by
    /// the common left factor `t_i' t_i⁻¹`, preserving all relative
    /// transforms in the suffix.
    pub fn apply_correction(
        &mut self,
        i: usize,
        j: usize,
        t_ij_new: &RigidTransform,
        rule: PowerRule,
    ) -> Result<(), ChainError> {
        if !t_ij_new.is_finite() {
            return Err(ChainError::NonFiniteTransform);
        }
        let u = self.power_coefficients(i, j, rule)?;
        let t_ij = self.relative_transform(i, j)?;
        let delta = t_ij.inverse().compose(t_ij_new);
        if !delta.is_finite() {
            return Err(ChainError::NonFiniteTransform);
        }
        let pre = InterpolationPrecompute::new(&delta);
        let t_i_old = self.totals[i];
        for l in j..=i {
            self.totals[l] = self.totals[l].compose(&pre.pow(u[l - j]));
        }
        let prefix = self.totals[i].compose(&t_i_old.inverse());
        for k in i + 1..self.totals.len() {
            self.totals[k] = prefix.compose(&self.totals[k]);
        }
        self.log.push(CorrectionRecord {
            i,
            j,
            rule,
            delta,
            u_values: u,
        });
        Ok(())
    }
}

fn cumulative_or_index<F: Fn(usize) -> f64>(steps: &[f64], j: usize, i: usize, index_rule: F) -> Vec<f64> {
    let total: f64 = steps.iter().sum();
    if total <= 0.0 {
        return (j..=i).map(index_rule).collect();
    }
    let mut u = Vec::with_capacity(steps.len() + 1);
    let mut acc = 0.0;
    u.push(0.0);
    for s in steps {
        acc += s;
        u.push(acc / total);
    }
    u
}

/// Pose distance `d(τ) = √(a θ² + b ‖q‖²)`.
fn pose_metric(t: &RigidTransform, a: f64, b: f64) -> f64 {
    let theta = t.rotation_angle();
    (a * theta * theta + b * t.translation.norm_squared()).sqrt()
}

/// Golden-section minimization of `u ↦ d(τ_ij^(-u) τ_lj)` over `[0, 1]`.
fn project_on_power_path(pre: &InterpolationPrecompute, t_lj: &RigidTransform) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9;
    const TOL: f64 = 1e-4;
    let objective = |u: f64| {
        let along = pre.pow(u).inverse().compose(t_lj);
        pose_metric(&along, 1.0, 1.0)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut m1 = hi - PHI * (hi - lo);
    let mut m2 = lo + PHI * (hi - lo);
    let mut f1 = objective(m1);
    let mut f2 = objective(m2);
    while hi - lo > TOL {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - PHI * (hi - lo);
            f1 = objective(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + PHI * (hi - lo);
            f2 = objective(m2);
        }
    }
    (lo + hi) / 2.0
}

/// Runs the initial SLAM: sequential trimmed ICP between consecutive frames
/// seeded at the identity, with totals built iteratively. Purely local; the
/// accumulated drift is what the improvement stage corrects later.
pub fn run_initial_slam(frames: &[Frame], outlier_ratio: f64) -> Result<Chain, ChainError> {
    if frames.len() < 2 {
        return Err(ChainError::TooShort);
    }
    let mut totals = Vec::with_capacity(frames.len());
    let mut step_errors = Vec::with_capacity(frames.len() - 1);
    totals.push(RigidTransform::identity());
    for l in 0..frames.len() - 1 {
        let res = icp_match(
            &frames[l],
            &frames[l + 1],
            outlier_ratio,
            &RigidTransform::identity(),
            DEFAULT_MAX_ITER,
            DEFAULT_TOL,
        )
        .map_err(|source| ChainError::MatchFailed { index: l + 1, source })?;
        step_errors.push(res.error);
        let prev = totals[l];
        totals.push(prev.compose(&res.transform));
    }
    Ok(Chain {
        totals,
        step_errors,
        log: Vec::new(),
    })
}

/// Per-frame contributions to the squared map noise: `w_i` sums
/// `‖p − c‖²/N` over frame `i`'s points that belong to some cluster, where
/// `c` is the owning cluster's center and `N` the total number of clustered
/// points. `Σ w_i` equals the global mean squared cluster distance.
pub fn frame_weights(clusters: &[Cluster], map: &FusedMap, n_frames: usize) -> Vec<f64> {
    let mut weights = vec![0.0; n_frames];
    let total: usize = clusters.iter().map(|c| c.members.len()).sum();
    if total == 0 {
        return weights;
    }
    let inv_n = 1.0 / total as f64;
    for cluster in clusters {
        for &m in &cluster.members {
            let point = &map.points[m];
            let d2 = (point.position - cluster.center).norm_squared();
            if point.frame < n_frames {
                weights[point.frame] += d2 * inv_n;
            }
        }
    }
    weights
}

/// Indices of the `k` highest-weight frames, heaviest first; ties broken
/// toward the lower frame index.
pub fn remove_worst_frames(weights: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order.truncate(k.min(weights.len()));
    order
}
