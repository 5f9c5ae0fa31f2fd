//! Quickhull in arbitrary dimension with triangulated (simplicial) facets.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::TrajectoryCloud;
use crate::error::{Error, Result};

/// Relative tolerance for "above facet" and affine-rank decisions, scaled by
/// the bounding-box diagonal of the cloud.
const REL_EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    pub dim: usize,
    /// Affine rank of the cloud; equals `dim` unless degenerate.
    pub rank: usize,
    pub degenerate: bool,
    /// Sorted indices of cloud points that are hull vertices.
    pub vertices: Vec<usize>,
    /// Simplicial facets, each listing `dim` vertex indices.
    pub facets: Vec<Vec<usize>>,
    /// Outward unit normals and offsets (`n . x = offset` on the facet).
    pub planes: Vec<(Vec<f64>, f64)>,
    interior: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullVolume {
    pub volume: f64,
    pub degenerate: bool,
}

struct Facet {
    verts: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Facet {
    fn distance(&self, p: &[f64]) -> f64 {
        dot(&self.normal, p) - self.offset
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Hyperplane through `dim` points, oriented so that `interior` lies below it.
fn plane(cloud: &TrajectoryCloud, verts: &[usize], interior: &[f64]) -> (Vec<f64>, f64) {
    let d = cloud.dim();
    let p0 = cloud.point(verts[0]);
    let edges = DMatrix::from_fn(d - 1, d, |r, c| cloud.point(verts[r + 1])[c] - p0[c]);
    // generalized cross product via signed minors
    let mut normal: Vec<f64> = (0..d)
        .map(|k| {
            let minor = edges.clone().remove_column(k);
            let det = if d == 1 { 1.0 } else { minor.determinant() };
            if k % 2 == 0 {
                det
            } else {
                -det
            }
        })
        .collect();
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        normal.iter_mut().for_each(|v| *v /= norm);
    }
    let mut offset = dot(&normal, p0);
    if dot(&normal, interior) - offset > 0.0 {
        normal.iter_mut().for_each(|v| *v = -*v);
        offset = -offset;
    }
    (normal, offset)
}

/// Greedy affinely independent subset: returns chosen indices (at most
/// `dim + 1`) by repeatedly taking the point farthest from the current affine hull.
fn initial_simplex(cloud: &TrajectoryCloud, eps: f64) -> Vec<usize> {
    let d = cloud.dim();
    let n = cloud.len();
    let first = (0..n)
        .min_by(|&a, &b| cloud.point(a)[0].total_cmp(&cloud.point(b)[0]))
        .unwrap_or(0);
    let mut chosen = vec![first];
    let origin = cloud.point(first).to_vec();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while chosen.len() <= d {
        let mut best = (eps, None);
        for k in 0..n {
            let mut r: Vec<f64> = cloud.point(k).iter().zip(&origin).map(|(a, b)| a - b).collect();
            for q in &basis {
                let c = dot(&r, q);
                r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
            }
            let len = dot(&r, &r).sqrt();
            if len > best.0 {
                best = (len, Some((k, r)));
            }
        }
        match best.1 {
            Some((k, r)) => {
                let len = best.0;
                basis.push(r.into_iter().map(|v| v / len).collect());
                chosen.push(k);
            }
            None => break,
        }
    }
    chosen
}

/// Convex hull of a cloud. Rank-deficient clouds return a hull flagged
/// `degenerate` with no facets.
pub fn quickhull(cloud: &TrajectoryCloud) -> Result<ConvexHull> {
    let d = cloud.dim();
    let n = cloud.len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in cloud.iter() {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let diag = lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt();
    let eps = REL_EPS * diag.max(f64::MIN_POSITIVE);

    let simplex = initial_simplex(cloud, eps);
    if simplex.len() < d + 1 || diag == 0.0 {
        let mut vertices = simplex.clone();
        vertices.sort_unstable();
        return Ok(ConvexHull {
            dim: d,
            rank: simplex.len().saturating_sub(1),
            degenerate: true,
            vertices,
            facets: Vec::new(),
            planes: Vec::new(),
            interior: cloud.point(simplex[0]).to_vec(),
        });
    }

    let mut interior = vec![0.0; d];
    for &k in &simplex {
        for (c, v) in interior.iter_mut().zip(cloud.point(k)) {
            *c += v / (d + 1) as f64;
        }
    }

    let mut facets: Vec<Facet> = Vec::new();
    for skip in 0..=d {
        let verts: Vec<usize> = simplex
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, &k)| k)
            .collect();
        let (normal, offset) = plane(cloud, &verts, &interior);
        facets.push(Facet {
            verts,
            normal,
            offset,
            outside: Vec::new(),
            alive: true,
        });
    }
    for k in 0..n {
        if simplex.contains(&k) {
            continue;
        }
        let p = cloud.point(k);
        if let Some(f) = facets.iter_mut().find(|f| f.distance(p) > eps) {
            f.outside.push(k);
        }
    }

    loop {
        let Some(fi) = facets.iter().position(|f| f.alive && !f.outside.is_empty()) else {
            break;
        };
        let apex = {
            let f = &facets[fi];
            *f.outside
                .iter()
                .max_by(|&&a, &&b| {
                    f.distance(cloud.point(a)).total_cmp(&f.distance(cloud.point(b)))
                })
                .expect("non-empty outside set")
        };
        let p = cloud.point(apex);
        let visible: Vec<usize> = (0..facets.len())
            .filter(|&i| facets[i].alive && facets[i].distance(p) > eps)
            .collect();

        let mut ridges: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for &vi in &visible {
            let verts = &facets[vi].verts;
            for skip in 0..d {
                let mut ridge: Vec<usize> = verts
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &k)| k)
                    .collect();
                ridge.sort_unstable();
                *ridges.entry(ridge).or_insert(0) += 1;
            }
        }

        let mut orphans = Vec::new();
        for &vi in &visible {
            facets[vi].alive = false;
            orphans.append(&mut facets[vi].outside);
        }
        let first_new = facets.len();
        for (ridge, count) in ridges {
            if count != 1 {
                continue;
            }
            let mut verts = ridge;
            verts.push(apex);
            let (normal, offset) = plane(cloud, &verts, &interior);
            facets.push(Facet {
                verts,
                normal,
                offset,
                outside: Vec::new(),
                alive: true,
            });
        }
        for k in orphans {
            if k == apex {
                continue;
            }
            let q = cloud.point(k);
            if let Some(f) = facets[first_new..].iter_mut().find(|f| f.distance(q) > eps) {
                f.outside.push(k);
            }
        }
    }

    let alive: Vec<&Facet> = facets.iter().filter(|f| f.alive).collect();
    let mut vertices: Vec<usize> = alive.iter().flat_map(|f| f.verts.iter().copied()).collect();
    vertices.sort_unstable();
    vertices.dedup();
    if alive.iter().any(|f| f.normal.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("hull facet normal"));
    }
    Ok(ConvexHull {
        dim: d,
        rank: d,
        degenerate: false,
        vertices,
        facets: alive.iter().map(|f| f.verts.clone()).collect(),
        planes: alive.iter().map(|f| (f.normal.clone(), f.offset)).collect(),
        interior,
    })
}

impl ConvexHull {
    /// Sum of `|det(v_1 - c, ..., v_d - c)| / d!` over facets, with `c` an interior point.
    pub fn volume(&self, cloud: &TrajectoryCloud) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let d = self.dim;
        let scale = factorial(d);
        self.facets
            .iter()
            .map(|f| {
                let m = DMatrix::from_fn(d, d, |r, c| cloud.point(f[r])[c] - self.interior[c]);
                m.determinant().abs() / scale
            })
            .sum()
    }

    /// Largest signed distance of `p` above any facet plane (<= 0 means inside).
    pub fn max_violation(&self, p: &[f64]) -> f64 {
        self.planes
            .iter()
            .map(|(n, o)| dot(n, p) - o)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Convex hull volume; degenerate clouds report zero with the flag set.
pub fn chv(cloud: &TrajectoryCloud) -> Result<HullVolume> {
    let hull = quickhull(cloud)?;
    Ok(HullVolume {
        volume: hull.volume(cloud),
        degenerate: hull.degenerate,
    })
}
