//! 3D convex hull (quickhull with per-face outside sets).
//!
//! Orientation tests use exact `orient3d` predicates, so a point is on the
//! outer side of a face only when it is strictly so. Points lying on the hull
//! surface but not at a corner are not reported as hull vertices.

use std::collections::HashMap;

use robust::{orient3d, Coord3D};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HullError {
    #[error("need at least 4 points for a 3D hull, got {0}")]
    TooFewPoints(usize),
    #[error("all points coincide")]
    Coincident,
    #[error("all points are collinear")]
    Collinear,
    #[error("all points are coplanar")]
    Coplanar,
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct ConvexHull {
    /// Faces, counter-clockwise when seen from outside.
    pub faces: Vec<[usize; 3]>,
    pub is_vertex: Vec<bool>,
}

struct Face {
    v: [usize; 3],
    outside: Vec<usize>,
    alive: bool,
}

fn coord(p: &[f64; 3]) -> Coord3D<f64> {
    Coord3D { x: p[0], y: p[1], z: p[2] }
}

/// Positive when `p` is strictly outside (above) face `f`.
fn height(points: &[[f64; 3]], f: [usize; 3], p: usize) -> f64 {
    -orient3d(coord(&points[f[0]]), coord(&points[f[1]]), coord(&points[f[2]]), coord(&points[p]))
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm_sq(a: &[f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

fn initial_simplex(points: &[[f64; 3]]) -> Result<[usize; 4], HullError> {
    let n = points.len();
    let i0 = (0..n)
        .min_by(|&a, &b| points[a].partial_cmp(&points[b]).expect("finite"))
        .expect("non-empty");
    let i1 = (0..n)
        .max_by(|&a, &b| {
            norm_sq(&sub(&points[a], &points[i0])).total_cmp(&norm_sq(&sub(&points[b], &points[i0])))
        })
        .expect("non-empty");
    if points[i1] == points[i0] {
        return Err(HullError::Coincident);
    }
    let axis = sub(&points[i1], &points[i0]);
    let spread = |p: usize| norm_sq(&cross(&axis, &sub(&points[p], &points[i0])));
    let i2 = (0..n).max_by(|&a, &b| spread(a).total_cmp(&spread(b))).expect("non-empty");
    if spread(i2) == 0.0 {
        return Err(HullError::Collinear);
    }
    let tri = [i0, i1, i2];
    let off = |p: usize| height(points, tri, p).abs();
    let i3 = (0..n).max_by(|&a, &b| off(a).total_cmp(&off(b))).expect("non-empty");
    if off(i3) == 0.0 {
        return Err(HullError::Coplanar);
    }
    Ok([i0, i1, i2, i3])
}

pub fn convex_hull(points: &[[f64; 3]]) -> Result<ConvexHull, HullError> {
    let n = points.len();
    if n < 4 {
        return Err(HullError::TooFewPoints(n));
    }
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(HullError::NonFinite);
    }
    let simplex = initial_simplex(points)?;

    let mut faces: Vec<Face> = Vec::new();
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();

    fn add_face(faces: &mut Vec<Face>, edges: &mut HashMap<(usize, usize), usize>, v: [usize; 3]) -> usize {
        let id = faces.len();
        for e in 0..3 {
            edges.insert((v[e], v[(e + 1) % 3]), id);
        }
        faces.push(Face {
            v,
            outside: Vec::new(),
            alive: true,
        });
        id
    }

    for skip in 0..4 {
        let mut v = [0usize; 3];
        let mut j = 0;
        for (i, &s) in simplex.iter().enumerate() {
            if i != skip {
                v[j] = s;
                j += 1;
            }
        }
        // the omitted vertex must lie below the face
        if height(points, v, simplex[skip]) > 0.0 {
            v.swap(1, 2);
        }
        add_face(&mut faces, &mut edges, v);
    }

    for p in 0..n {
        if simplex.contains(&p) {
            continue;
        }
        if let Some(f) = (0..4).find(|&f| height(points, faces[f].v, p) > 0.0) {
            faces[f].outside.push(p);
        }
    }

    let mut pending: Vec<usize> = (0..4).filter(|&f| !faces[f].outside.is_empty()).collect();
    let mut visible_mark: Vec<bool> = vec![false; faces.len()];

    while let Some(start) = pending.pop() {
        if !faces[start].alive || faces[start].outside.is_empty() {
            continue;
        }
        let fv = faces[start].v;
        let apex = *faces[start]
            .outside
            .iter()
            .max_by(|&&a, &&b| height(points, fv, a).total_cmp(&height(points, fv, b)).then(b.cmp(&a)))
            .expect("non-empty outside set");

        // flood the faces visible from the apex
        visible_mark.resize(faces.len(), false);
        let mut visible = vec![start];
        visible_mark[start] = true;
        let mut cursor = 0;
        while cursor < visible.len() {
            let f = visible[cursor];
            cursor += 1;
            let v = faces[f].v;
            for e in 0..3 {
                let nb = edges[&(v[(e + 1) % 3], v[e])];
                if !visible_mark[nb] && height(points, faces[nb].v, apex) > 0.0 {
                    visible_mark[nb] = true;
                    visible.push(nb);
                }
            }
        }

        let mut horizon = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for e in 0..3 {
                let (a, b) = (v[e], v[(e + 1) % 3]);
                if !visible_mark[edges[&(b, a)]] {
                    horizon.push((a, b));
                }
            }
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            orphans.append(&mut faces[f].outside);
            faces[f].alive = false;
            let v = faces[f].v;
            for e in 0..3 {
                edges.remove(&(v[e], v[(e + 1) % 3]));
            }
        }
        for &f in &visible {
            visible_mark[f] = false;
        }

        let new_faces: Vec<usize> = horizon
            .into_iter()
            .map(|(a, b)| add_face(&mut faces, &mut edges, [a, b, apex]))
            .collect();
        for q in orphans {
            if q == apex {
                continue;
            }
            if let Some(&f) = new_faces.iter().find(|&&f| height(points, faces[f].v, q) > 0.0) {
                faces[f].outside.push(q);
            }
        }
        pending.extend(new_faces.iter().copied().filter(|&f| !faces[f].outside.is_empty()));
    }

    let mut is_vertex = vec![false; n];
    let faces: Vec<[usize; 3]> = faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect();
    for f in &faces {
        for &v in f {
            is_vertex[v] = true;
        }
    }
    Ok(ConvexHull { faces, is_vertex })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn check_hull(points: &[[f64; 3]], hull: &ConvexHull) {
        // every point inside or on every face
        for f in &hull.faces {
            for p in 0..points.len() {
                assert!(height(points, *f, p) <= 0.0, "point {p} outside face {f:?}");
            }
        }
        // closed 2-manifold: each directed edge has its twin
        let directed: HashSet<(usize, usize)> = hull
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |e| (f[e], f[(e + 1) % 3])))
            .collect();
        assert_eq!(directed.len(), 3 * hull.faces.len());
        for &(a, b) in &directed {
            assert!(directed.contains(&(b, a)));
        }
        let v = hull.is_vertex.iter().filter(|&&x| x).count() as i64;
        let e = directed.len() as i64 / 2;
        assert_eq!(v - e + hull.faces.len() as i64, 2);
    }

    #[test]
    fn cube_with_interior_points() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.2, 0.7, 0.1]);
        // on a face, not a corner
        pts.push([0.5, 0.5, 1.0]);
        let hull = convex_hull(&pts).unwrap();
        check_hull(&pts, &hull);
        assert_eq!(&hull.is_vertex[..8], &[true; 8]);
        assert_eq!(&hull.is_vertex[8..], &[false; 3]);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(convex_hull(&[[0.0; 3]; 3]).unwrap_err(), HullError::TooFewPoints(3));
        assert_eq!(convex_hull(&[[1.0, 2.0, 3.0]; 6]).unwrap_err(), HullError::Coincident);
        let line: Vec<_> = (0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        assert_eq!(convex_hull(&line).unwrap_err(), HullError::Collinear);
        let plane: Vec<_> = (0..9).map(|i| [(i % 3) as f64, (i / 3) as f64, 1.0]).collect();
        assert_eq!(convex_hull(&plane).unwrap_err(), HullError::Coplanar);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn random_clouds_are_enclosed(pts in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 4..200)) {
            if let Ok(hull) = convex_hull(&pts) {
                check_hull(&pts, &hull);
            }
        }
    }
}
