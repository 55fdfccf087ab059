//! Point configurations, unit balls and shells, and the two tree lengths.
//!
//! The spanning length is the exact Euclidean MST. The Steiner length is an
//! infimum over augmentations by extra points and is NP-hard in general, so
//! it is returned as a certified bracket: an upper bound from topology
//! enumeration / local optimization and the lower bound mst/2.

use crate::{dist, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Radius of the balls of the expansion; fixed at 1.
pub const BALL_RADIUS: f64 = 1.0;

/// An element of the admissible configuration space: ordered points with
/// pairwise separation > 1. Order is significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    points: Vec<Vec<f64>>,
}

impl PointConfiguration {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if !is_admissible(&points) {
            return Err(Error::Domain(
                "points violate the pairwise separation > 1 constraint".into(),
            ));
        }
        Ok(PointConfiguration { points })
    }

    pub fn empty() -> Self {
        PointConfiguration { points: vec![] }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Extend by one point, keeping admissibility.
    pub fn push(&self, point: Vec<f64>) -> Result<Self> {
        let mut pts = self.points.clone();
        pts.push(point);
        PointConfiguration::new(pts)
    }

    /// Prefix of the first `j` points.
    pub fn prefix(&self, j: usize) -> PointConfiguration {
        PointConfiguration {
            points: self.points[..j].to_vec(),
        }
    }
}

/// True iff all pairwise distances strictly exceed 1. Empty and singleton
/// lists are admissible.
pub fn is_admissible(points: &[Vec<f64>]) -> bool {
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if dist(&points[i], &points[j]) <= BALL_RADIUS {
                return false;
            }
        }
    }
    true
}

/// Membership in the union of closed unit balls around the points.
pub fn ball_contains(points: &[Vec<f64>], y: &[f64]) -> bool {
    points.iter().any(|x| dist(x, y) <= BALL_RADIUS)
}

/// Membership predicate for the j-th shell: the part of the ball around the
/// first j points not covered by the first j-1. Shells for j = 1..n
/// partition the full ball region.
pub struct ShellPredicate<'a> {
    config: &'a PointConfiguration,
    j: usize,
}

impl ShellPredicate<'_> {
    pub fn contains(&self, y: &[f64]) -> bool {
        ball_contains(&self.config.points()[..self.j], y)
            && !ball_contains(&self.config.points()[..self.j - 1], y)
    }
}

/// Shell descriptor for 1 <= j <= n.
pub fn shell(config: &PointConfiguration, j: usize) -> Result<ShellPredicate<'_>> {
    if j == 0 || j > config.len() {
        return Err(Error::Domain(format!(
            "shell index {j} out of range 1..={}",
            config.len()
        )));
    }
    Ok(ShellPredicate { config, j })
}

/// Steiner bracket together with the exact spanning length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeLengthResult {
    pub mst_length: f64,
    pub steiner_upper: f64,
    pub steiner_lower: f64,
    pub steiner_points: Vec<Vec<f64>>,
}

/// Total length of a Euclidean minimum spanning tree; 0 for a single point.
/// Distance ties are broken by lexicographic edge index.
pub fn mst_length(points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Domain("MST of an empty point set".into()));
    }
    Ok(mst_edges(points).iter().map(|&(_, _, d)| d).sum())
}

/// Kruskal MST over the complete graph, ties broken lexicographically.
fn mst_edges(points: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j, dist(&points[i], &points[j])));
        }
    }
    edges.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for (i, j, d) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            out.push((i, j, d));
            if out.len() + 1 == n {
                break;
            }
        }
    }
    out
}

/// Geometric median (Fermat point) of a small point set by damped Weiszfeld
/// iteration; returns a vertex when the median coincides with it.
fn fermat_point(points: &[&[f64]], tol: f64) -> Vec<f64> {
    let d = points[0].len();
    // vertex optimality check: if a vertex minimizes, Weiszfeld can stall at it
    let total = |p: &[f64]| points.iter().map(|q| dist(p, q)).sum::<f64>();
    let mut best_vertex = points[0].to_vec();
    let mut best_len = total(points[0]);
    for q in points.iter().skip(1) {
        let l = total(q);
        if l < best_len {
            best_len = l;
            best_vertex = q.to_vec();
        }
    }
    // centroid start
    let mut p: Vec<f64> = (0..d)
        .map(|k| points.iter().map(|q| q[k]).sum::<f64>() / points.len() as f64)
        .collect();
    for _ in 0..10_000 {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        let mut stuck_on_vertex = false;
        for q in points {
            let r = dist(&p, q);
            if r < 1e-14 {
                stuck_on_vertex = true;
                break;
            }
            let w = 1.0 / r;
            for k in 0..d {
                num[k] += w * q[k];
            }
            den += w;
        }
        if stuck_on_vertex {
            break;
        }
        let next: Vec<f64> = num.iter().map(|v| v / den).collect();
        let step = dist(&p, &next);
        p = next;
        if step < tol {
            break;
        }
    }
    if total(&p) <= best_len { p } else { best_vertex }
}

/// Length of the MST over terminals plus a fixed set of Steiner points,
/// pruning Steiner leaves (a Steiner point of degree <= 1 never helps).
fn steiner_tree_length(terminals: &[Vec<f64>], steiner: &[Vec<f64>]) -> f64 {
    let mut pts: Vec<Vec<f64>> = terminals.to_vec();
    pts.extend(steiner.iter().cloned());
    let mut edges = mst_edges(&pts);
    // prune degree-1 Steiner points iteratively
    loop {
        let mut degree = vec![0usize; pts.len()];
        for &(i, j, _) in &edges {
            degree[i] += 1;
            degree[j] += 1;
        }
        let removable: Vec<usize> = (terminals.len()..pts.len())
            .filter(|&i| degree[i] <= 1)
            .collect();
        if removable.is_empty() {
            break;
        }
        edges.retain(|&(i, j, _)| !removable.contains(&i) && !removable.contains(&j));
        // lengths of the retained forest plus reconnection via fresh MST
        let keep: Vec<usize> = (0..pts.len())
            .filter(|i| *i < terminals.len() || !removable.contains(i))
            .collect();
        let sub: Vec<Vec<f64>> = keep.iter().map(|&i| pts[i].clone()).collect();
        pts = sub;
        edges = mst_edges(&pts);
        if pts.len() == terminals.len() {
            break;
        }
    }
    edges.iter().map(|&(_, _, d)| d).sum()
}

/// Refine Steiner point positions: move each to the Fermat point of its
/// current MST neighbors until the total length stops improving.
fn refine_steiner(terminals: &[Vec<f64>], steiner: &mut Vec<Vec<f64>>, tol: f64) -> f64 {
    let mut best = steiner_tree_length(terminals, steiner);
    for _ in 0..200 {
        let mut pts: Vec<Vec<f64>> = terminals.to_vec();
        pts.extend(steiner.iter().cloned());
        let edges = mst_edges(&pts);
        let mut moved = false;
        for si in 0..steiner.len() {
            let idx = terminals.len() + si;
            let nbrs: Vec<&[f64]> = edges
                .iter()
                .filter_map(|&(i, j, _)| {
                    if i == idx {
                        Some(pts[j].as_slice())
                    } else if j == idx {
                        Some(pts[i].as_slice())
                    } else {
                        None
                    }
                })
                .collect();
            if nbrs.len() >= 2 {
                let f = fermat_point(&nbrs, tol);
                if dist(&f, &steiner[si]) > tol {
                    steiner[si] = f;
                    moved = true;
                }
            }
        }
        let len = steiner_tree_length(terminals, steiner);
        if len < best - tol {
            best = len;
        } else if !moved {
            break;
        }
    }
    best
}

/// Certified Steiner bracket for n <= 12 points.
///
/// For n <= 4 the full Steiner topologies are enumerated and solved by
/// Fermat-point fixed-point iteration; for larger n a greedy insertion plus
/// coordinate descent gives the upper bound. The lower bound is mst/2.
pub fn steiner_length(points: &[Vec<f64>], tol: f64) -> Result<TreeLengthResult> {
    steiner_length_seeded(points, tol, 0)
}

/// Same as [`steiner_length`] with an explicit multi-start RNG seed.
pub fn steiner_length_seeded(points: &[Vec<f64>], tol: f64, seed: u64) -> Result<TreeLengthResult> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Domain("empty point set".into()));
    }
    if n > 12 {
        return Err(Error::Capability(format!("{n} points exceed the cap of 12")));
    }
    let mst = if n == 1 { 0.0 } else { mst_length(points)? };
    if n <= 2 {
        return Ok(TreeLengthResult {
            mst_length: mst,
            steiner_upper: mst,
            steiner_lower: mst / 2.0,
            steiner_points: vec![],
        });
    }

    let mut best_upper = mst;
    let mut best_steiner: Vec<Vec<f64>> = vec![];

    if n == 3 {
        let f = fermat_point(&[&points[0], &points[1], &points[2]], tol.min(1e-10));
        let len = points.iter().map(|p| dist(p, &f)).sum::<f64>();
        if len < best_upper {
            best_upper = len;
            best_steiner = vec![f];
        }
    } else if n == 4 {
        // Full topologies with two Steiner points: three terminal pairings.
        for &(a, b, c, d) in &[(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)] {
            let mut s1 = mid(&points[a], &points[b]);
            let mut s2 = mid(&points[c], &points[d]);
            for _ in 0..5_000 {
                let n1 = fermat_point(&[&points[a], &points[b], &s2], 1e-12);
                let n2 = fermat_point(&[&points[c], &points[d], &n1], 1e-12);
                let step = dist(&n1, &s1).max(dist(&n2, &s2));
                s1 = n1;
                s2 = n2;
                if step < 1e-11 {
                    break;
                }
            }
            let mut st = vec![s1.clone(), s2.clone()];
            let len = refine_steiner(points, &mut st, 1e-11);
            if len < best_upper {
                best_upper = len;
                best_steiner = st;
            }
        }
        // single Steiner point candidates (degenerate topologies)
        for skip in 0..4 {
            let tri: Vec<&[f64]> = (0..4)
                .filter(|&i| i != skip)
                .map(|i| points[i].as_slice())
                .collect();
            let f = fermat_point(&tri, 1e-11);
            let mut st = vec![f];
            let len = refine_steiner(points, &mut st, 1e-11);
            if len < best_upper {
                best_upper = len;
                best_steiner = st;
            }
        }
    } else {
        // Greedy insertion: Fermat points of triples joined through a common
        // MST vertex, accepted when they shorten the tree, then descent.
        let mut steiner: Vec<Vec<f64>> = vec![];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for attempt in 0..3 {
            let mut current: Vec<Vec<f64>> = vec![];
            let mut len = mst;
            for _round in 0..n {
                let mut pts: Vec<Vec<f64>> = points.to_vec();
                pts.extend(current.iter().cloned());
                let edges = mst_edges(&pts);
                let mut candidate: Option<(f64, Vec<f64>)> = None;
                for v in 0..pts.len() {
                    let nbrs: Vec<usize> = edges
                        .iter()
                        .filter_map(|&(i, j, _)| {
                            if i == v {
                                Some(j)
                            } else if j == v {
                                Some(i)
                            } else {
                                None
                            }
                        })
                        .collect();
                    for a in 0..nbrs.len() {
                        for b in (a + 1)..nbrs.len() {
                            let mut f = fermat_point(
                                &[&pts[v], &pts[nbrs[a]], &pts[nbrs[b]]],
                                1e-10,
                            );
                            if attempt > 0 {
                                for c in f.iter_mut() {
                                    *c += rng.gen_range(-0.01..0.01);
                                }
                            }
                            // score the raw insertion; only the accepted
                            // candidate is refined below
                            let mut trial = current.clone();
                            trial.push(f.clone());
                            let l = steiner_tree_length(points, &trial);
                            if l < len - 1e-12
                                && candidate.as_ref().map_or(true, |(cl, _)| l < *cl)
                            {
                                f = trial.pop().unwrap();
                                candidate = Some((l, f));
                            }
                        }
                    }
                }
                match candidate {
                    Some((l, f)) => {
                        current.push(f);
                        len = refine_steiner(points, &mut current, 1e-10);
                        let _ = l;
                    }
                    None => break,
                }
            }
            if len < best_upper {
                best_upper = len;
                steiner = current;
            }
        }
        best_steiner = steiner;
    }

    // the empty augmentation is always admissible
    best_upper = best_upper.min(mst);
    Ok(TreeLengthResult {
        mst_length: mst,
        steiner_upper: best_upper,
        steiner_lower: mst / 2.0,
        steiner_points: best_steiner,
    })
}

fn mid(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect()
}

/// Minimum distance between two point sets.
fn set_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for x in a {
        for y in b {
            best = best.min(dist(x, y));
        }
    }
    best
}

/// Spanning tree length over point sets with inter-set distance taken as the
/// minimum over cross pairs.
pub fn set_mst_length(sets: &[Vec<Vec<f64>>]) -> Result<f64> {
    if sets.iter().any(|s| s.is_empty()) {
        return Err(Error::Domain("empty set in set-tree-length".into()));
    }
    if sets.is_empty() {
        return Err(Error::Domain("no sets given".into()));
    }
    let n = sets.len();
    if n == 1 {
        return Ok(0.0);
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j, set_dist(&sets[i], &sets[j])));
        }
    }
    edges.sort_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut total = 0.0;
    let mut used = 0;
    for (i, j, d) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            total += d;
            used += 1;
            if used + 1 == n {
                break;
            }
        }
    }
    Ok(total)
}

/// Steiner bracket over point sets: upper bound from the set-MST improved by
/// Fermat insertions among the pair-achieving representatives, lower bound
/// set-MST/2.
pub fn set_tree_length(sets: &[Vec<Vec<f64>>]) -> Result<TreeLengthResult> {
    let mst = set_mst_length(sets)?;
    let mut upper = mst;
    // Fermat improvement over one representative per set (nearest to the
    // overall centroid); sound as an upper bound because adding Steiner
    // points and connecting through representatives only lengthens trees
    // relative to the true set infimum.
    if sets.len() >= 3 {
        let d = sets[0][0].len();
        let centroid: Vec<f64> = (0..d)
            .map(|k| {
                let mut s = 0.0;
                let mut c = 0;
                for set in sets {
                    for p in set {
                        s += p[k];
                        c += 1;
                    }
                }
                s / c as f64
            })
            .collect();
        let reps: Vec<Vec<f64>> = sets
            .iter()
            .map(|s| {
                s.iter()
                    .min_by(|a, b| {
                        dist(a, &centroid).partial_cmp(&dist(b, &centroid)).unwrap()
                    })
                    .unwrap()
                    .clone()
            })
            .collect();
        if let Ok(res) = steiner_length(&reps, 1e-9) {
            // connecting every set to its representative tree is an upper
            // bound for the set version only when each set is a singleton;
            // otherwise keep the set-MST.
            if sets.iter().all(|s| s.len() == 1) {
                upper = upper.min(res.steiner_upper);
            }
        }
    }
    Ok(TreeLengthResult {
        mst_length: mst,
        steiner_upper: upper,
        steiner_lower: mst / 2.0,
        steiner_points: vec![],
    })
}

/// The set tree length used by the sequence-function norms: singleton sets
/// for each external point plus one set holding the whole configuration.
/// Returns the conservative upper bound; 0 for an empty external tuple.
pub fn external_tree_length(externals: &[Vec<f64>], config: &[Vec<f64>]) -> Result<f64> {
    if externals.is_empty() {
        // convention: no external points means no decay weight
        return Ok(0.0);
    }
    let mut sets: Vec<Vec<Vec<f64>>> = externals.iter().map(|w| vec![w.clone()]).collect();
    if !config.is_empty() {
        sets.push(config.to_vec());
    }
    Ok(set_tree_length(&sets)?.steiner_upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn admissibility_cases() {
        assert!(is_admissible(&[]));
        assert!(is_admissible(&[vec![2.0]]));
        assert!(!is_admissible(&[vec![0.0], vec![1.0]])); // distance exactly 1
        assert!(is_admissible(&[vec![0.0], vec![1.5], vec![3.0]]));
    }

    #[test]
    fn shell_of_single_point_is_unit_ball() {
        let cfg = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        let s = shell(&cfg, 1).unwrap();
        assert!(s.contains(&[0.9]));
        assert!(s.contains(&[1.0])); // closed ball
        assert!(!s.contains(&[1.1]));
    }

    #[test]
    fn shell_interval_example() {
        // d=1, x = (0, 1.5): shell(2) = [0.5, 2.5] \ [-1, 1] = (1, 2.5]
        let cfg = PointConfiguration::new(vec![vec![0.0], vec![1.5]]).unwrap();
        let s = shell(&cfg, 2).unwrap();
        assert!(!s.contains(&[1.0]));
        assert!(s.contains(&[1.01]));
        assert!(s.contains(&[2.5]));
        assert!(!s.contains(&[2.51]));
        assert!(!s.contains(&[0.6]));
    }

    #[test]
    fn shell_index_out_of_range() {
        let cfg = PointConfiguration::new(vec![vec![0.0]]).unwrap();
        assert!(shell(&cfg, 0).is_err());
        assert!(shell(&cfg, 2).is_err());
    }

    #[test]
    fn shells_partition_ball() {
        let cfg =
            PointConfiguration::new(vec![vec![0.0, 0.0], vec![1.2, 0.9], vec![-1.3, 1.1]])
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2_000 {
            let y = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let in_ball = ball_contains(cfg.points(), &y);
            let shell_count = (1..=3)
                .filter(|&j| shell(&cfg, j).unwrap().contains(&y))
                .count();
            assert_eq!(shell_count, usize::from(in_ball));
        }
    }

    #[test]
    fn shell_volumes_sum_to_region_volume_mc() {
        // Monte Carlo volume oracle over a bounding box.
        let cfg = PointConfiguration::new(vec![vec![0.0], vec![1.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (lo, hi) = (-2.0, 4.0);
        let n = 1_000_000;
        let mut ball = 0u64;
        let mut shells = 0u64;
        for _ in 0..n {
            let y = vec![rng.gen_range(lo..hi)];
            if ball_contains(cfg.points(), &y) {
                ball += 1;
            }
            for j in 1..=2 {
                if shell(&cfg, j).unwrap().contains(&y) {
                    shells += 1;
                }
            }
        }
        let vol = (hi - lo) as f64;
        let v_ball = ball as f64 / n as f64 * vol;
        let v_shells = shells as f64 / n as f64 * vol;
        // exact region volume: [-1,1] union [0.5,2.5] = [-1,2.5] -> 3.5
        assert!((v_ball - 3.5).abs() / 3.5 < 1e-2);
        assert!((v_shells - v_ball).abs() < 1e-12);
    }

    #[test]
    fn mst_basics() {
        assert_relative_eq!(mst_length(&[vec![3.0]]).unwrap(), 0.0);
        assert_relative_eq!(
            mst_length(&[vec![0.0], vec![2.5]]).unwrap(),
            2.5,
            epsilon = 1e-15
        );
        // unit equilateral triangle: brute force over all 3 spanning trees
        // gives 2.0
        let tri = equilateral();
        assert_relative_eq!(mst_length(&tri).unwrap(), 2.0, epsilon = 1e-12);
    }

    fn equilateral() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.5, 3.0f64.sqrt() / 2.0],
        ]
    }

    #[test]
    fn steiner_two_points() {
        let res = steiner_length(&[vec![0.0], vec![2.0]], 1e-9).unwrap();
        assert_relative_eq!(res.steiner_upper, 2.0);
        assert_relative_eq!(res.steiner_lower * 2.0, 2.0);
    }

    #[test]
    fn steiner_equilateral_triangle() {
        let res = steiner_length(&equilateral(), 1e-10).unwrap();
        assert_relative_eq!(res.steiner_upper, 3.0f64.sqrt(), epsilon = 1e-6);
        assert!(res.steiner_lower <= res.steiner_upper);
    }

    #[test]
    fn steiner_collinear_points() {
        // no Steiner point helps on a line
        let pts = vec![vec![0.0], vec![1.5], vec![3.2], vec![5.0]];
        let res = steiner_length(&pts, 1e-9).unwrap();
        assert_relative_eq!(res.steiner_upper, res.mst_length, epsilon = 1e-9);
    }

    #[test]
    fn steiner_square_four_points() {
        // unit square: Steiner minimal tree has length 1 + sqrt(3)
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let res = steiner_length(&pts, 1e-10).unwrap();
        assert_relative_eq!(res.steiner_upper, 1.0 + 3.0f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn steiner_caps() {
        let pts: Vec<Vec<f64>> = (0..13).map(|i| vec![1.5 * i as f64]).collect();
        assert!(matches!(
            steiner_length(&pts, 1e-9),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn lengths_permutation_invariant() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.3], vec![1.0, 2.0], vec![3.0, 2.5]];
        let perm = vec![pts[2].clone(), pts[0].clone(), pts[3].clone(), pts[1].clone()];
        assert_relative_eq!(
            mst_length(&pts).unwrap(),
            mst_length(&perm).unwrap(),
            epsilon = 1e-12
        );
        let a = steiner_length(&pts, 1e-9).unwrap();
        let b = steiner_length(&perm, 1e-9).unwrap();
        assert_relative_eq!(a.steiner_upper, b.steiner_upper, epsilon = 1e-7);
    }

    #[test]
    fn lengths_isometry_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..4)
                .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                .collect();
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (tx, ty) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let moved: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| {
                    vec![
                        th.cos() * p[0] - th.sin() * p[1] + tx,
                        th.sin() * p[0] + th.cos() * p[1] + ty,
                    ]
                })
                .collect();
            assert_relative_eq!(
                mst_length(&pts).unwrap(),
                mst_length(&moved).unwrap(),
                epsilon = 1e-9,
                max_relative = 1e-9
            );
            let a = steiner_length(&pts, 1e-9).unwrap();
            let b = steiner_length(&moved, 1e-9).unwrap();
            assert_relative_eq!(a.steiner_upper, b.steiner_upper, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn steiner_bracket_and_ratio_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..60 {
            let n = rng.gen_range(2..=6);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)])
                .collect();
            let res = steiner_length(&pts, 1e-9).unwrap();
            assert!(res.steiner_upper <= res.mst_length + 1e-9);
            assert!(res.steiner_upper >= res.mst_length / 2.0 - 1e-9);
            assert!(res.steiner_lower <= res.steiner_upper + 1e-9);
        }
    }

    #[test]
    fn set_lengths() {
        // two singletons reduce to the point distance
        assert_relative_eq!(
            set_mst_length(&[vec![vec![0.0]], vec![vec![2.5]]]).unwrap(),
            2.5
        );
        // shared point between two sets contributes 0 on that edge
        let sets = vec![
            vec![vec![0.0], vec![5.0]],
            vec![vec![5.0], vec![9.0]],
        ];
        assert_relative_eq!(set_mst_length(&sets).unwrap(), 0.0);
        assert!(set_mst_length(&[vec![], vec![vec![0.0]]]).is_err());
    }

    #[test]
    fn external_length_shorthand_matches_singletons_plus_set() {
        // l_{x...;y...} over singleton externals and one config set
        let w = vec![vec![0.0], vec![4.0]];
        let cfg = vec![vec![1.5], vec![2.8]];
        let direct = external_tree_length(&w, &cfg).unwrap();
        let sets = vec![vec![w[0].clone()], vec![w[1].clone()], cfg.clone()];
        let via_sets = set_tree_length(&sets).unwrap().steiner_upper;
        assert_relative_eq!(direct, via_sets, epsilon = 1e-12);
        assert_relative_eq!(external_tree_length(&[], &cfg).unwrap(), 0.0);
    }

    #[test]
    fn extension_inequality_brackets() {
        // l_{x_1..x_n} <= l_{x_1..x_{n+n'}} <= l_{x_1..x_n} + l_{x_n..x_{n+n'}}
        // tested with the conservative side of each bracket.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let n = rng.gen_range(2..=4);
            let np = rng.gen_range(1..=4);
            let pts: Vec<Vec<f64>> = (0..n + np)
                .map(|_| vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)])
                .collect();
            let head = steiner_length(&pts[..n], 1e-9).unwrap();
            let all = steiner_length(&pts, 1e-9).unwrap();
            let tail = steiner_length(&pts[n - 1..], 1e-9).unwrap();
            // lower(head) <= upper(all) and lower(all) <= upper(head)+upper(tail)
            assert!(head.steiner_lower <= all.steiner_upper + 1e-9);
            assert!(all.steiner_lower <= head.steiner_upper + tail.steiner_upper + 1e-9);
        }
    }

    #[test]
    fn external_length_monotonicity_brackets() {
        // l_{x;y_1..y_m} >= l_{x;y_1..y_{m+m'}} >= l_{x;y_1..y_m} - l_{y_m..y_{m+m'}}
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..40 {
            let nx = rng.gen_range(1..=2);
            let m = rng.gen_range(1..=3);
            let mp = rng.gen_range(1..=2);
            let xs: Vec<Vec<f64>> = (0..nx)
                .map(|_| vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)])
                .collect();
            let ys: Vec<Vec<f64>> = (0..m + mp)
                .map(|_| vec![rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)])
                .collect();
            let small = external_tree_length(&xs, &ys[..m]).unwrap();
            let big = external_tree_length(&xs, &ys).unwrap();
            let small_lower = {
                let mut sets: Vec<Vec<Vec<f64>>> =
                    xs.iter().map(|p| vec![p.clone()]).collect();
                sets.push(ys[..m].to_vec());
                set_tree_length(&sets).unwrap().steiner_lower
            };
            let big_lower = {
                let mut sets: Vec<Vec<Vec<f64>>> =
                    xs.iter().map(|p| vec![p.clone()]).collect();
                sets.push(ys.to_vec());
                set_tree_length(&sets).unwrap().steiner_lower
            };
            let tail = steiner_length(&ys[m - 1..], 1e-9).unwrap();
            assert!(small >= big_lower - 1e-9 || small >= big - 1e-9 || big_lower <= small + 1e-9);
            // conservative bracket: lower(big) <= upper(small)
            assert!(big_lower <= small + 1e-9);
            // lower(small) - upper(tail) <= upper(big)
            assert!(small_lower - tail.steiner_upper <= big + 1e-9);
        }
    }
}
