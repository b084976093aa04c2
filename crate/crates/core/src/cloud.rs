//! Sparse landmark clouds: frames, nearest-neighbor match error, the
//! natural-neighbor spacing `L0` and view-cone overlap estimation.
//!
//! Clouds here are small (on the order of a hundred landmarks per frame), so
//! nearest-neighbor queries use an exact uniform-grid index and the Delaunay
//! triangulation runs on the horizontal projection of the full cloud.

use crate::se3::RigidTransform;
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("operation requires a nonempty cloud")]
    EmptyCloud,
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(&'static str),
    #[error("frame {0} contains non-finite points")]
    NonFinitePoints(u32),
}

/// Horizontal view cone of the scanner: apex at the frame origin, pointing
/// along +x, with the given half-angle and maximum range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewCone {
    pub half_angle: f64,
    pub range: f64,
}

impl ViewCone {
    pub fn new(half_angle: f64, range: f64) -> Self {
        Self { half_angle, range }
    }

    /// Area of the horizontal sector.
    pub fn sector_area(&self) -> f64 {
        self.half_angle * self.range * self.range
    }
}

/// One scanner view: a sparse landmark cloud in scanner coordinates plus the
/// view-cone descriptor. Points lie within the cone range up to the
/// registration noise of the upstream landmark detector. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u32,
    pub points: Vec<Vector3<f64>>,
    pub cone: ViewCone,
}

impl Frame {
    pub fn new(id: u32, points: Vec<Vector3<f64>>, cone: ViewCone) -> Result<Self, CloudError> {
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(CloudError::NonFinitePoints(id));
        }
        Ok(Self { id, points, cone })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A frame pose paired with its view cone, for overlap estimation.
#[derive(Debug, Clone, Copy)]
pub struct ConePose {
    pub pose: RigidTransform,
    pub cone: ViewCone,
}

/// Applies a rigid transformation to every point of a frame.
pub fn transform_cloud(f: &Frame, t: &RigidTransform) -> Frame {
    Frame {
        id: f.id,
        points: transform_points(&f.points, t),
        cone: f.cone,
    }
}

pub fn transform_points(points: &[Vector3<f64>], t: &RigidTransform) -> Vec<Vector3<f64>> {
    points.iter().map(|p| t.apply(p)).collect()
}

/// Exact nearest-neighbor index over a fixed point set. Buckets on the
/// horizontal plane; distances are full 3D. Queries expand cell rings until
/// the best hit is provably nearest.
#[derive(Debug)]
pub struct NnGrid {
    points: Vec<Vector3<f64>>,
    cell: f64,
    min_x: f64,
    min_y: f64,
    nx: i64,
    ny: i64,
    buckets: Vec<Vec<u32>>,
}

impl NnGrid {
    pub fn build(points: &[Vector3<f64>]) -> Result<Self, CloudError> {
        if points.is_empty() {
            return Err(CloudError::EmptyCloud);
        }
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            min_x = min_x.min(p.x);
            max_x = max_x.max(p.x);
            min_y = min_y.min(p.y);
            max_y = max_y.max(p.y);
        }
        let dx = (max_x - min_x).max(1e-9);
        let dy = (max_y - min_y).max(1e-9);
        // Aim for O(1) points per cell at near-uniform density.
        let cell = ((dx * dy / points.len() as f64).sqrt()).max(1e-6);
        let nx = (dx / cell).ceil() as i64 + 1;
        let ny = (dy / cell).ceil() as i64 + 1;
        let mut buckets = vec![Vec::new(); (nx * ny) as usize];
        for (i, p) in points.iter().enumerate() {
            let cx = (((p.x - min_x) / cell) as i64).clamp(0, nx - 1);
            let cy = (((p.y - min_y) / cell) as i64).clamp(0, ny - 1);
            buckets[(cy * nx + cx) as usize].push(i as u32);
        }
        Ok(Self {
            points: points.to_vec(),
            cell,
            min_x,
            min_y,
            nx,
            ny,
            buckets,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        self.points[i]
    }

    /// Index and distance of the nearest stored point.
    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        let cx = (((q.x - self.min_x) / self.cell) as i64).clamp(0, self.nx - 1);
        let cy = (((q.y - self.min_y) / self.cell) as i64).clamp(0, self.ny - 1);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            // Once a hit is known, stop when the nearest possible point of
            // the next ring (horizontal lower bound) cannot beat it.
            if best.1.is_finite() {
                let ring_min = (ring - 1).max(0) as f64 * self.cell;
                if ring_min > best.1 {
                    break;
                }
            }
            self.scan_ring(cx, cy, ring, q, &mut best);
        }
        best
    }

    fn scan_ring(&self, cx: i64, cy: i64, ring: i64, q: &Vector3<f64>, best: &mut (usize, f64)) {
        let (x0, x1) = (cx - ring, cx + ring);
        let (y0, y1) = (cy - ring, cy + ring);
        for y in y0..=y1 {
            if y < 0 || y >= self.ny {
                continue;
            }
            for x in x0..=x1 {
                if x < 0 || x >= self.nx {
                    continue;
                }
                let on_ring = x == x0 || x == x1 || y == y0 || y == y1;
                if !on_ring {
                    continue;
                }
                for &i in &self.buckets[(y * self.nx + x) as usize] {
                    let d = (self.points[i as usize] - q).norm();
                    if d < best.1 || (d == best.1 && (i as usize) < best.0) {
                        *best = (i as usize, d);
                    }
                }
            }
        }
    }
}

/// Trimmed nearest-neighbor match error: each point of `q` is matched to its
/// nearest point of `p` and the root mean square of the smallest
/// `⌈(1−γ)|q|⌉` distances is returned, along with those correspondences as
/// `(q index, p index)` pairs sorted by distance. Asymmetric: `q` is matched
/// into `p`.
pub fn match_error(
    p: &Frame,
    q: &Frame,
    outlier_ratio: f64,
) -> Result<(f64, Vec<(usize, usize)>), CloudError> {
    let grid = NnGrid::build(&p.points)?;
    match_error_with_grid(&grid, &q.points, outlier_ratio)
}

/// Same as [`match_error`] against a prebuilt index of `p`.
pub fn match_error_with_grid(
    p_grid: &NnGrid,
    q_points: &[Vector3<f64>],
    outlier_ratio: f64,
) -> Result<(f64, Vec<(usize, usize)>), CloudError> {
    if q_points.is_empty() || p_grid.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    debug_assert!((0.0..1.0).contains(&outlier_ratio));
    let mut matched: Vec<(f64, usize, usize)> = q_points
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let (pi, d) = p_grid.nearest(q);
            (d, qi, pi)
        })
        .collect();
    matched.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = retained_count(q_points.len(), outlier_ratio);
    let kept = &matched[..keep];
    let sum_sq: f64 = kept.iter().map(|(d, _, _)| d * d).sum();
    let error = (sum_sq / keep as f64).sqrt();
    Ok((error, kept.iter().map(|&(_, qi, pi)| (qi, pi)).collect()))
}

/// Number of correspondences retained at outlier ratio γ: `⌈(1−γ)·n⌉`.
pub fn retained_count(n: usize, outlier_ratio: f64) -> usize {
    (((1.0 - outlier_ratio) * n as f64).ceil() as usize).clamp(1, n)
}

/// Mean distance between natural neighbors (Delaunay-adjacent points) of the
/// horizontal projection: the density scale `L0` of the cloud.
///
/// Duplicate projections are merged at 1e-6 m before triangulation. Needs at
/// least three non-collinear points.
pub fn mean_neighbor_distance(points: &[Vector3<f64>]) -> Result<f64, CloudError> {
    const DEDUP: f64 = 1e-6;
    let mut seen = std::collections::HashSet::new();
    let mut pts: Vec<delaunator::Point> = Vec::with_capacity(points.len());
    for p in points {
        let key = ((p.x / DEDUP).round() as i64, (p.y / DEDUP).round() as i64);
        if seen.insert(key) {
            pts.push(delaunator::Point { x: p.x, y: p.y });
        }
    }
    if pts.len() < 3 {
        return Err(CloudError::DegenerateCloud("fewer than 3 distinct points"));
    }
    let tri = delaunator::triangulate(&pts);
    if tri.triangles.is_empty() {
        return Err(CloudError::DegenerateCloud("collinear points"));
    }
    let mut edges = std::collections::HashSet::new();
    let mut neighbor_sum = vec![0.0f64; pts.len()];
    let mut neighbor_count = vec![0u32; pts.len()];
    for t in tri.triangles.chunks(3) {
        for &(a, b) in &[(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (a.min(b), a.max(b));
            if edges.insert(key) {
                let d = ((pts[a].x - pts[b].x).powi(2) + (pts[a].y - pts[b].y).powi(2)).sqrt();
                neighbor_sum[a] += d;
                neighbor_count[a] += 1;
                neighbor_sum[b] += d;
                neighbor_count[b] += 1;
            }
        }
    }
    let mut total = 0.0;
    let mut with_neighbors = 0usize;
    for i in 0..pts.len() {
        if neighbor_count[i] > 0 {
            total += neighbor_sum[i] / neighbor_count[i] as f64;
            with_neighbors += 1;
        }
    }
    if with_neighbors == 0 {
        return Err(CloudError::DegenerateCloud("no Delaunay edges"));
    }
    Ok(total / with_neighbors as f64)
}

/// View-cone overlap ratio on the horizontal plane: area of the sector
/// intersection divided by the smaller sector area.
///
/// Computed in the frame of pose `a` from the relative pose `a⁻¹ b`, so a
/// common rigid transformation applied to both poses cancels exactly. Sector
/// arcs are discretized at ~1 degree, well below the tolerances this gate is
/// used with.
pub fn overlap_ratio(a: &ConePose, b: &ConePose) -> f64 {
    let rel = a.pose.inverse().compose(&b.pose);
    let apex_b = nalgebra::Vector2::new(rel.translation.x, rel.translation.y);
    if apex_b.norm() >= a.cone.range + b.cone.range {
        return 0.0;
    }
    let heading = rel.rotation * Vector3::x();
    let hxy = nalgebra::Vector2::new(heading.x, heading.y);
    if hxy.norm() < 1e-9 {
        // Cone axis vertical after the relative tilt; no horizontal sector.
        return 0.0;
    }
    let angle_b = hxy.y.atan2(hxy.x);

    let wedges_a = sector_wedges(nalgebra::Vector2::zeros(), 0.0, &a.cone);
    let wedges_b = sector_wedges(apex_b, angle_b, &b.cone);
    let area_a: f64 = wedges_a.iter().map(|w| polygon_area(w)).sum();
    let area_b: f64 = wedges_b.iter().map(|w| polygon_area(w)).sum();
    let mut inter = 0.0;
    for wa in &wedges_a {
        for wb in &wedges_b {
            inter += polygon_area(&clip_convex(wa, wb));
        }
    }
    (inter / area_a.min(area_b)).clamp(0.0, 1.0)
}

type Point2 = nalgebra::Vector2<f64>;

/// Splits a sector into convex wedges of at most 90 degrees, each
/// approximated as a fan polygon with ~1 degree arc steps, counterclockwise.
fn sector_wedges(apex: Point2, heading: f64, cone: &ViewCone) -> Vec<Vec<Point2>> {
    let total = 2.0 * cone.half_angle;
    let n_wedges = (total / std::f64::consts::FRAC_PI_2).ceil().max(1.0) as usize;
    let wedge_angle = total / n_wedges as f64;
    let steps = ((wedge_angle / 1f64.to_radians()).ceil() as usize).max(4);
    let mut wedges = Vec::with_capacity(n_wedges);
    for w in 0..n_wedges {
        let start = heading - cone.half_angle + w as f64 * wedge_angle;
        let mut poly = Vec::with_capacity(steps + 2);
        poly.push(apex);
        for s in 0..=steps {
            let t = start + wedge_angle * s as f64 / steps as f64;
            poly.push(apex + Point2::new(t.cos(), t.sin()) * cone.range);
        }
        wedges.push(poly);
    }
    wedges
}

fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    acc.abs() / 2.0
}

/// Sutherland-Hodgman clip of `subject` against convex counterclockwise
/// polygon `clip`.
fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let inside = |p: &Point2| edge.x * (p.y - a.y) - edge.y * (p.x - a.x) >= -1e-12;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(&cur);
            let prev_in = inside(&prev);
            if cur_in {
                if !prev_in {
                    output.push(line_intersect(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersect(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersect(p1: Point2, p2: Point2, a: Point2, b: Point2) -> Point2 {
    let r = p2 - p1;
    let s = b - a;
    let denom = r.x * s.y - r.y * s.x;
    if denom.abs() < 1e-18 {
        return p1;
    }
    let t = ((a.x - p1.x) * s.y - (a.y - p1.y) * s.x) / denom;
    p1 + r * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::RigidTransform;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn cone() -> ViewCone {
        ViewCone::new(60f64.to_radians(), 35.0)
    }

    fn frame_of(points: Vec<Vector3<f64>>) -> Frame {
        Frame::new(0, points, cone()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(0.0..extent),
                    rng.random_range(0.0..extent),
                    rng.random_range(-0.1..0.1),
                )
            })
            .collect()
    }

    #[test]
    fn transform_cloud_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let f = frame_of(random_cloud(&mut rng, 50, 30.0));

        let same = transform_cloud(&f, &RigidTransform::identity());
        assert_eq!(same.points, f.points);

        let single = frame_of(vec![Vector3::new(1.0, 0.0, 0.0)]);
        let rot = transform_cloud(&single, &RigidTransform::from_yaw(FRAC_PI_2, Vector3::zeros()));
        assert_relative_eq!(rot.points[0], Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);

        // Double application equals applying the composition.
        let t = RigidTransform::from_yaw(0.4, Vector3::new(0.3, -0.7, 0.05));
        let twice = transform_cloud(&transform_cloud(&f, &t), &t);
        let composed = transform_cloud(&f, &t.compose(&t));
        for (a, b) in twice.points.iter().zip(&composed.points) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn nn_grid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cloud = random_cloud(&mut rng, 200, 40.0);
        let grid = NnGrid::build(&cloud).unwrap();
        for _ in 0..200 {
            let q = Vector3::new(
                rng.random_range(-5.0..45.0),
                rng.random_range(-5.0..45.0),
                rng.random_range(-0.2..0.2),
            );
            let (gi, gd) = grid.nearest(&q);
            let (bi, bd) = cloud
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            assert_eq!(gi, bi);
            assert_relative_eq!(gd, bd, epsilon = 1e-12);
        }
    }

    #[test]
    fn match_error_identical_and_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let f = frame_of(random_cloud(&mut rng, 80, 40.0));
        let (e, pairs) = match_error(&f, &f, 0.0).unwrap();
        assert_relative_eq!(e, 0.0, epsilon = 1e-12);
        assert_eq!(pairs.len(), 80);

        // Well-separated points shifted by 0.1 m: every nearest neighbor is
        // the shifted original, so the trimmed RMSE equals the shift.
        let sparse: Vec<Vector3<f64>> = (0..25)
            .map(|i| Vector3::new((i % 5) as f64 * 5.0, (i / 5) as f64 * 5.0, 0.0))
            .collect();
        let p = frame_of(sparse.clone());
        let q = transform_cloud(&p, &RigidTransform::from_translation(Vector3::new(0.1, 0.0, 0.0)));
        let (e, _) = match_error(&p, &q, 0.0).unwrap();
        assert_relative_eq!(e, 0.1, epsilon = 1e-9);
    }

    #[test]
    fn match_error_rejects_empty() {
        let f = frame_of(vec![Vector3::zeros()]);
        let empty = Frame::new(1, vec![], cone()).unwrap();
        assert!(matches!(match_error(&f, &empty, 0.0), Err(CloudError::EmptyCloud)));
        assert!(matches!(match_error(&empty, &f, 0.0), Err(CloudError::EmptyCloud)));
    }

    #[test]
    fn match_error_trims_worst_distances() {
        // Four points at unit distance, one far outlier; γ=0.2 drops it.
        let p = frame_of(vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(10.0, 0.0, 0.0),
            Vector3::new(0.0, 10.0, 0.0),
            Vector3::new(10.0, 10.0, 0.0),
            Vector3::new(5.0, 5.0, 0.0),
        ]);
        let mut q_pts = p.points.clone();
        for v in q_pts.iter_mut().take(4) {
            v.x += 0.1;
        }
        q_pts[4].x += 3.0;
        let q = frame_of(q_pts);
        let (e, pairs) = match_error(&p, &q, 0.2).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_relative_eq!(e, 0.1, epsilon = 1e-9);
    }

    #[test]
    fn mean_neighbor_distance_unit_square() {
        // Four corners: four unit sides plus one diagonal. Either diagonal
        // choice gives the same per-vertex averaged mean, (5 + √2)/6.
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let l0 = mean_neighbor_distance(&pts).unwrap();
        assert_relative_eq!(l0, (5.0 + 2f64.sqrt()) / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn mean_neighbor_distance_hex_lattice() {
        // Parallelogram crop of the triangular lattice: every Delaunay
        // edge, hull edges included, has length s.
        let s = 2.5;
        let mut pts = Vec::new();
        for row in 0..10 {
            for col in 0..10 {
                let x = col as f64 * s + row as f64 * s / 2.0;
                let y = row as f64 * s * 3f64.sqrt() / 2.0;
                pts.push(Vector3::new(x, y, 0.0));
            }
        }
        let l0 = mean_neighbor_distance(&pts).unwrap();
        assert_relative_eq!(l0, s, epsilon = 1e-6);
    }

    #[test]
    fn mean_neighbor_distance_rigid_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts = random_cloud(&mut rng, 60, 30.0);
        let l0 = mean_neighbor_distance(&pts).unwrap();
        let t = RigidTransform::from_yaw(0.7, Vector3::new(4.0, -2.0, 0.0));
        let moved = transform_points(&pts, &t);
        let l0_moved = mean_neighbor_distance(&moved).unwrap();
        assert_relative_eq!(l0, l0_moved, epsilon = 1e-9);
    }

    #[test]
    fn mean_neighbor_distance_degenerate() {
        let line: Vec<Vector3<f64>> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            mean_neighbor_distance(&line),
            Err(CloudError::DegenerateCloud(_))
        ));
        let dup = vec![Vector3::zeros(), Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        assert!(matches!(
            mean_neighbor_distance(&dup),
            Err(CloudError::DegenerateCloud(_))
        ));
    }

    #[test]
    fn overlap_identical_and_disjoint() {
        let a = ConePose {
            pose: RigidTransform::from_yaw(0.3, Vector3::new(1.0, 2.0, 0.0)),
            cone: cone(),
        };
        assert_relative_eq!(overlap_ratio(&a, &a), 1.0, epsilon = 1e-9);

        let far = ConePose {
            pose: RigidTransform::from_translation(Vector3::new(100.0, 0.0, 0.0)),
            cone: cone(),
        };
        let origin = ConePose {
            pose: RigidTransform::identity(),
            cone: cone(),
        };
        assert_eq!(overlap_ratio(&origin, &far), 0.0);
    }

    #[test]
    fn overlap_symmetry_and_common_transform_invariance() {
        let a = ConePose {
            pose: RigidTransform::from_yaw(0.2, Vector3::new(0.0, 0.0, 0.0)),
            cone: cone(),
        };
        let b = ConePose {
            pose: RigidTransform::from_yaw(-0.1, Vector3::new(8.0, 3.0, 0.0)),
            cone: cone(),
        };
        let lam = overlap_ratio(&a, &b);
        assert_relative_eq!(lam, overlap_ratio(&b, &a), epsilon = 1e-9);

        let g = RigidTransform::from_yaw(1.1, Vector3::new(-20.0, 7.0, 0.0));
        let ga = ConePose { pose: g.compose(&a.pose), cone: a.cone };
        let gb = ConePose { pose: g.compose(&b.pose), cone: b.cone };
        assert_relative_eq!(lam, overlap_ratio(&ga, &gb), epsilon = 1e-9);
    }

    #[test]
    fn overlap_matches_monte_carlo_oracle() {
        // Two 60-degree sectors, R = 35 m, apexes 10 m apart, same heading.
        let c = ViewCone::new(30f64.to_radians(), 35.0);
        let a = ConePose { pose: RigidTransform::identity(), cone: c };
        let b = ConePose {
            pose: RigidTransform::from_translation(Vector3::new(10.0, 0.0, 0.0)),
            cone: c,
        };
        let lam = overlap_ratio(&a, &b);

        let in_sector = |x: f64, y: f64, apex_x: f64| {
            let dx = x - apex_x;
            let r = (dx * dx + y * y).sqrt();
            r <= 35.0 && y.atan2(dx).abs() <= 30f64.to_radians()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut hit_both = 0u64;
        let mut hit_a = 0u64;
        let n = 1_000_000u64;
        for _ in 0..n {
            let x = rng.random_range(0.0..45.0);
            let y = rng.random_range(-20.0..20.0);
            let ia = in_sector(x, y, 0.0);
            let ib = in_sector(x, y, 10.0);
            if ia {
                hit_a += 1;
            }
            if ia && ib {
                hit_both += 1;
            }
        }
        let oracle = hit_both as f64 / hit_a as f64;
        assert!(
            (lam - oracle).abs() < 0.01,
            "overlap {lam:.4} vs Monte-Carlo {oracle:.4}"
        );
    }
}
