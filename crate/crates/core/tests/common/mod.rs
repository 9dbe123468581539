//! Test-side oracles, independent of the library code they check.

#![allow(dead_code)]

use nalgebra::{Point2, Point3, Rotation3, Unit, Vector3};
use partswap_core::raster::RasterImage;

/// Segment `from → to` hits triangle `(a, b, c)` strictly before `to`
/// (Möller–Trumbore, parameter in `(eps, 1 − eps)`).
pub fn segment_hits_triangle(from: &Point3<f64>, to: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> bool {
    let eps = 1e-9;
    let dir = to - from;
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let s = from - a;
    let u = inv * s.dot(&h);
    if !(-eps..=1.0 + eps).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < -eps || u + v > 1.0 + eps {
        return false;
    }
    let t = inv * e2.dot(&q);
    t > eps && t < 1.0 - 1e-7
}

/// A vertex is visible when the segment from the viewer to it crosses no
/// triangle that does not contain it.
pub fn ray_cast_visibility(points: &[Point3<f64>], triangles: &[[usize; 3]], viewer: &Point3<f64>) -> Vec<bool> {
    (0..points.len())
        .map(|i| {
            !triangles.iter().any(|t| {
                !t.contains(&i) && segment_hits_triangle(viewer, &points[i], &points[t[0]], &points[t[1]], &points[t[2]])
            })
        })
        .collect()
}

/// Triangulated surface of points on the unit sphere: the spherical Delaunay
/// triangulation from a stereographic projection through one of the points,
/// plus the fan joining that point to the planar hull boundary.
pub fn sphere_surface(points: &[Point3<f64>]) -> Vec<[usize; 3]> {
    let pole = (0..points.len())
        .min_by(|&a, &b| points[a].z.total_cmp(&points[b].z))
        .unwrap();
    // rotate the pole onto (0, 0, −1)
    let target = -Vector3::z();
    let from = points[pole].coords.normalize();
    let rot = Rotation3::rotation_between(&from, &target).unwrap_or_else(|| Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::x()), std::f64::consts::PI));
    let others: Vec<usize> = (0..points.len()).filter(|&i| i != pole).collect();
    let planar: Vec<delaunator::Point> = others
        .iter()
        .map(|&i| {
            let p = rot * points[i].coords;
            delaunator::Point {
                x: p.x / (1.0 + p.z),
                y: p.y / (1.0 + p.z),
            }
        })
        .collect();
    let tri = delaunator::triangulate(&planar);
    let mut faces: Vec<[usize; 3]> = tri
        .triangles
        .chunks(3)
        .map(|t| [others[t[0]], others[t[1]], others[t[2]]])
        .collect();
    let hull = &tri.hull;
    for k in 0..hull.len() {
        let a = others[hull[k]];
        let b = others[hull[(k + 1) % hull.len()]];
        faces.push([a, b, pole]);
    }
    faces
}

pub fn unit_sphere_samples(n: usize, seed: u64) -> Vec<Point3<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v = Vector3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            Point3::from(v.normalize())
        })
        .collect()
}

pub fn psnr(a: &RasterImage, b: &RasterImage) -> f64 {
    assert_eq!(a.data().len(), b.data().len());
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Whether pixel `(x, y)` lies inside or on triangle `t` (barycentric test).
pub fn point_in_triangle(t: &[Point2<f64>; 3], x: f64, y: f64) -> bool {
    let p = Point2::new(x, y);
    let d = (t[1] - t[0]).perp(&(t[2] - t[0]));
    let w0 = (t[2] - t[1]).perp(&(p - t[1])) / d;
    let w1 = (t[0] - t[2]).perp(&(p - t[2])) / d;
    let w2 = 1.0 - w0 - w1;
    w0 >= -1e-12 && w1 >= -1e-12 && w2 >= -1e-12
}
