//! Quality metrics for the fused map: the grid-occupancy blur ratio β,
//! fixed-radius landmark clustering with per-cluster RMSE, and a
//! box-counting dimension estimate.
//!
//! All grid metrics work on the horizontal projection with the set-rounding
//! operator `{P}_ε` (occupied-cell count), anchored at the map bounding-box
//! minimum so the numbers do not depend on where the map sits in the world.

use crate::chain::Chain;
use crate::cloud::Frame;
use crate::parallel::map_range;
use nalgebra::Vector3;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("map is empty")]
    EmptyMap,
    #[error("chain length {0} does not match frame count {1}")]
    LengthMismatch(usize, usize),
    #[error("no clusters to aggregate")]
    NoClusters,
    #[error("degenerate box-counting fit: {0}")]
    DegenerateFit(&'static str),
}

/// A point of the fused map with its originating frame index.
#[derive(Debug, Clone, Copy)]
pub struct MapPoint {
    pub position: Vector3<f64>,
    pub frame: usize,
}

/// All frame points in frame-0 coordinates, unstructured (no
/// correspondences), with the bounding box.
#[derive(Debug, Clone)]
pub struct FusedMap {
    pub points: Vec<MapPoint>,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl FusedMap {
    pub fn from_points(points: Vec<MapPoint>) -> Result<Self, QualityError> {
        if points.is_empty() {
            return Err(QualityError::EmptyMap);
        }
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in &points {
            min = min.inf(&p.position);
            max = max.sup(&p.position);
        }
        Ok(Self { points, min, max })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A landmark cluster: member indices into the map, 3D arithmetic-mean
/// center and root-mean-square spread about it.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub center: Vector3<f64>,
    pub rmse: f64,
}

/// Fuses all frames into frame-0 coordinates using the chain totals.
pub fn build_map(frames: &[Frame], chain: &Chain) -> Result<FusedMap, QualityError> {
    if frames.len() != chain.len() {
        return Err(QualityError::LengthMismatch(chain.len(), frames.len()));
    }
    let per_frame: Vec<Vec<MapPoint>> = map_range(frames.len(), |l| {
        let t = chain.total(l);
        frames[l]
            .points
            .iter()
            .map(|p| MapPoint {
                position: t.apply(p),
                frame: l,
            })
            .collect()
    });
    FusedMap::from_points(per_frame.into_iter().flatten().collect())
}

/// Occupied horizontal grid cells at spacing `eps`; values are point counts
/// per cell. Cells start at `origin` (the map bounding-box minimum), i.e.
/// the set-rounding operator with its grid anchored so that the first cell
/// begins exactly at the data minimum — occupancy counts then saturate
/// cleanly instead of half-filling the boundary cells.
pub fn occupied_cells(
    points: impl Iterator<Item = Vector3<f64>>,
    eps: f64,
    origin: (f64, f64),
) -> HashMap<(i64, i64), usize> {
    let mut cells = HashMap::new();
    for p in points {
        let key = (
            ((p.x - origin.0) / eps).floor() as i64,
            ((p.y - origin.1) / eps).floor() as i64,
        );
        *cells.entry(key).or_insert(0) += 1;
    }
    cells
}

/// Blur ratio `β = |{P}_ε1| ε1² / (|{P}_ε2| ε2²)`: occupied fine-grid area
/// over occupied coarse-grid area of the horizontal projection. Sharp maps
/// have small β; it shrinks as landmark clusters tighten.
pub fn blur_ratio(map: &FusedMap, eps1: f64, eps2: f64) -> Result<f64, QualityError> {
    assert!(0.0 < eps1 && eps1 < eps2, "scales must satisfy 0 < ε1 < ε2");
    if map.is_empty() {
        return Err(QualityError::EmptyMap);
    }
    let origin = (map.min.x, map.min.y);
    let fine = occupied_cells(map.points.iter().map(|p| p.position), eps1, origin).len() as f64;
    let coarse = occupied_cells(map.points.iter().map(|p| p.position), eps2, origin).len() as f64;
    Ok(fine * eps1 * eps1 / (coarse * eps2 * eps2))
}

/// Clusters the map into connected components of the graph linking points
/// within `2 r_alpha` on the horizontal projection; components smaller than
/// `min_points` are discarded. Centers and RMSE are computed in 3D.
pub fn cluster_map(map: &FusedMap, r_alpha: f64, min_points: usize) -> Vec<Cluster> {
    let linking = 2.0 * r_alpha;
    let n = map.points.len();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    // Bucket by linking distance; only the 3x3 neighborhood can contain
    // linked points.
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in map.points.iter().enumerate() {
        let key = (
            (p.position.x / linking).floor() as i64,
            (p.position.y / linking).floor() as i64,
        );
        buckets.entry(key).or_default().push(i);
    }
    for (i, p) in map.points.iter().enumerate() {
        let cx = (p.position.x / linking).floor() as i64;
        let cy = (p.position.y / linking).floor() as i64;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(candidates) = buckets.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &jdx in candidates {
                    if jdx <= i {
                        continue;
                    }
                    let q = &map.points[jdx];
                    let dxy = (
                        p.position.x - q.position.x,
                        p.position.y - q.position.y,
                    );
                    if (dxy.0 * dxy.0 + dxy.1 * dxy.1).sqrt() <= linking {
                        let (ra, rb) = (find(&mut parent, i), find(&mut parent, jdx));
                        if ra != rb {
                            parent[ra.max(rb)] = ra.min(rb);
                        }
                    }
                }
            }
        }
    }

    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut roots: Vec<usize> = groups.keys().copied().collect();
    roots.sort_unstable();
    let mut clusters = Vec::new();
    for root in roots {
        let members = groups.remove(&root).unwrap();
        if members.len() < min_points {
            continue;
        }
        let mut center = Vector3::zeros();
        for &m in &members {
            center += map.points[m].position;
        }
        center /= members.len() as f64;
        let mse: f64 = members
            .iter()
            .map(|&m| (map.points[m].position - center).norm_squared())
            .sum::<f64>()
            / members.len() as f64;
        clusters.push(Cluster {
            members,
            center,
            rmse: mse.sqrt(),
        });
    }
    clusters
}

/// The map noise `e_C`: mean over clusters of the per-cluster RMSE.
pub fn cluster_rmse(clusters: &[Cluster]) -> Result<f64, QualityError> {
    if clusters.is_empty() {
        return Err(QualityError::NoClusters);
    }
    Ok(clusters.iter().map(|c| c.rmse).sum::<f64>() / clusters.len() as f64)
}

/// Estimates the box-counting dimension: the least-squares slope of
/// `log(occupied cells)` against `log(1/ε)` over the given scales, which
/// must number at least three and span at least a decade. Returns the
/// dimension and the R² of the fit.
pub fn box_dimension(map: &FusedMap, scales: &[f64]) -> Result<(f64, f64), QualityError> {
    if map.is_empty() {
        return Err(QualityError::EmptyMap);
    }
    if scales.len() < 3 {
        return Err(QualityError::DegenerateFit("need at least 3 scales"));
    }
    let (lo, hi) = scales
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if lo <= 0.0 || hi / lo < 10.0 {
        return Err(QualityError::DegenerateFit("scales must span a decade"));
    }
    let origin = (map.min.x, map.min.y);
    let xs: Vec<f64> = scales.iter().map(|&s| (1.0 / s).ln()).collect();
    let ys: Vec<f64> = scales
        .iter()
        .map(|&s| {
            (occupied_cells(map.points.iter().map(|p| p.position), s, origin).len() as f64).ln()
        })
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(QualityError::DegenerateFit("zero variance in scales"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r_squared))
}
