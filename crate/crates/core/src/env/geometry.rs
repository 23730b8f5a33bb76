//! Object solids of revolution, robot part placement and ray intersection.
//!
//! Every object is a stack of frusta, spheres and flat caps around a vertical
//! axis through its centre. Heights and radii are meters.

use glam::{DVec2, DVec3};

use crate::language::Shape;

/// Intersections closer than this are ignored.
const RAY_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Piece {
    /// Side surface with radius varying linearly from `r0` at `z0` to `r1` at `z1`.
    Frustum { z0: f64, z1: f64, r0: f64, r1: f64 },
    Sphere { zc: f64, r: f64 },
    /// Horizontal disc at height `z`.
    Cap { z: f64, r: f64 },
}

impl Piece {
    fn radius_at(&self, z: f64) -> Option<f64> {
        match *self {
            Piece::Frustum { z0, z1, r0, r1 } if z >= z0 && z <= z1 => Some(r0 + (r1 - r0) * (z - z0) / (z1 - z0)),
            Piece::Sphere { zc, r } if (z - zc).abs() <= r => Some(libm::sqrt(r * r - (z - zc) * (z - zc))),
            _ => None,
        }
    }

    /// Heights at which the radius may peak inside a closed range.
    fn critical(&self) -> [f64; 2] {
        match *self {
            Piece::Frustum { z0, z1, .. } => [z0, z1],
            Piece::Sphere { zc, .. } => [zc, zc],
            Piece::Cap { z, .. } => [z, z],
        }
    }

    /// Nearest ray parameter hitting this piece, `p` relative to the axis foot.
    fn intersect(&self, p: DVec3, d: DVec3) -> Option<f64> {
        match *self {
            Piece::Frustum { z0, z1, r0, r1 } => {
                let k = (r1 - r0) / (z1 - z0);
                let a0 = r0 + k * (p.z - z0);
                let b0 = k * d.z;
                let qa = d.x * d.x + d.y * d.y - b0 * b0;
                let qb = 2.0 * (p.x * d.x + p.y * d.y - a0 * b0);
                let qc = p.x * p.x + p.y * p.y - a0 * a0;
                let accept = |t: f64| {
                    let z = p.z + t * d.z;
                    t > RAY_EPS && z >= z0 && z <= z1 && a0 + b0 * t >= 0.0
                };
                nearest_root(qa, qb, qc, accept)
            }
            Piece::Sphere { zc, r } => {
                let o = p - DVec3::new(0.0, 0.0, zc);
                let qa = d.length_squared();
                let qb = 2.0 * o.dot(d);
                let qc = o.length_squared() - r * r;
                nearest_root(qa, qb, qc, |t| t > RAY_EPS)
            }
            Piece::Cap { z, r } => {
                if d.z.abs() < 1e-15 {
                    return None;
                }
                let t = (z - p.z) / d.z;
                let hit = p + d * t;
                (t > RAY_EPS && hit.x * hit.x + hit.y * hit.y <= r * r).then_some(t)
            }
        }
    }
}

/// Smallest root of `a t² + b t + c` passing `accept`.
fn nearest_root(a: f64, b: f64, c: f64, accept: impl Fn(f64) -> bool) -> Option<f64> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return None;
        }
        let t = -c / b;
        return accept(t).then_some(t);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = libm::sqrt(disc);
    let (t0, t1) = ((-b - s) / (2.0 * a), (-b + s) / (2.0 * a));
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    if accept(lo) {
        Some(lo)
    } else if accept(hi) {
        Some(hi)
    } else {
        None
    }
}

/// Radial profile of an object shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Solid {
    pieces: &'static [Piece],
    height: f64,
}

static PILLAR: [Piece; 2] = [Piece::Frustum { z0: 0.0, z1: 4.0, r0: 1.0, r1: 1.0 }, Piece::Cap { z: 4.0, r: 1.0 }];
static POLE: [Piece; 2] = [Piece::Frustum { z0: 0.0, z1: 6.0, r0: 0.5, r1: 0.5 }, Piece::Cap { z: 6.0, r: 0.5 }];
static DUMBBELL: [Piece; 3] = [
    Piece::Sphere { zc: 1.0, r: 1.0 },
    Piece::Frustum { z0: 1.0, z1: 4.0, r0: 0.25, r1: 0.25 },
    Piece::Sphere { zc: 4.0, r: 1.0 },
];
static CONE: [Piece; 1] = [Piece::Frustum { z0: 0.0, z1: 4.0, r0: 1.0, r1: 0.0 }];
static HOURGLASS: [Piece; 3] = [
    Piece::Frustum { z0: 0.0, z1: 2.0, r0: 1.0, r1: 0.0 },
    Piece::Frustum { z0: 2.0, z1: 4.0, r0: 0.0, r1: 1.0 },
    Piece::Cap { z: 4.0, r: 1.0 },
];

impl Solid {
    pub fn of(shape: Shape) -> Solid {
        match shape {
            Shape::Pillar => Solid { pieces: &PILLAR, height: 4.0 },
            Shape::Pole => Solid { pieces: &POLE, height: 6.0 },
            Shape::Dumbbell => Solid { pieces: &DUMBBELL, height: 5.0 },
            Shape::Cone => Solid { pieces: &CONE, height: 4.0 },
            Shape::Hourglass => Solid { pieces: &HOURGLASS, height: 4.0 },
        }
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Horizontal radius at height `z`; `None` above or below the object.
    pub fn radius_at(&self, z: f64) -> Option<f64> {
        self.pieces.iter().filter_map(|p| p.radius_at(z)).reduce(f64::max)
    }

    /// Largest radius over `[z0, z1]`; `None` when the band misses the object.
    pub fn max_radius(&self, z0: f64, z1: f64) -> Option<f64> {
        let (lo, hi) = (z0.max(0.0), z1.min(self.height));
        if lo > hi {
            return None;
        }
        let mut best: Option<f64> = None;
        let mut probe = |z: f64| {
            if let Some(r) = self.radius_at(z) {
                best = Some(best.map_or(r, |b| b.max(r)));
            }
        };
        probe(lo);
        probe(hi);
        for p in self.pieces {
            for z in p.critical() {
                if z > lo && z < hi {
                    probe(z);
                }
            }
        }
        best
    }

    /// Footprint radius over the whole height.
    pub fn footprint(&self) -> f64 {
        self.max_radius(0.0, self.height).unwrap_or(0.0)
    }

    /// Nearest hit distance of the ray `origin + t dir` against the object at `base`.
    pub fn intersect(&self, base: DVec2, origin: DVec3, dir: DVec3) -> Option<f64> {
        let p = origin - base.extend(0.0);
        self.pieces.iter().filter_map(|piece| piece.intersect(p, dir)).reduce(f64::min)
    }
}

/// Ray against a capsule between `a` and `b`; `dir` must be unit length.
pub fn intersect_capsule(origin: DVec3, dir: DVec3, a: DVec3, b: DVec3, radius: f64) -> Option<f64> {
    let ba = b - a;
    let oa = origin - a;
    let baba = ba.dot(ba);
    let bard = ba.dot(dir);
    let baoa = ba.dot(oa);
    let rdoa = dir.dot(oa);
    let oaoa = oa.dot(oa);
    let qa = baba - bard * bard;
    let qb = baba * rdoa - baoa * bard;
    let qc = baba * oaoa - baoa * baoa - radius * radius * baba;
    let h = qb * qb - qa * qc;
    if h >= 0.0 && qa > 1e-14 {
        let t = (-qb - libm::sqrt(h)) / qa;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba {
            return (t > RAY_EPS).then_some(t);
        }
    }
    // end spheres
    let sphere = |c: DVec3| {
        let oc = origin - c;
        let b = dir.dot(oc);
        let c = oc.dot(oc) - radius * radius;
        let h = b * b - c;
        (h >= 0.0).then(|| -b - libm::sqrt(h)).filter(|&t| t > RAY_EPS)
    };
    match (sphere(a), sphere(b)) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

/// Ray against a box centred at `center`, rotated by `yaw` about the vertical.
pub fn intersect_box(origin: DVec3, dir: DVec3, center: DVec3, yaw: f64, half: f64) -> Option<f64> {
    let (s, c) = (libm::sin(yaw), libm::cos(yaw));
    let rel = origin - center;
    // world -> box frame (rotate by -yaw)
    let o = DVec3::new(c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z);
    let d = DVec3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (oi, di) in [(o.x, d.x), (o.y, d.y), (o.z, d.z)] {
        if di.abs() < 1e-15 {
            if oi.abs() > half {
                return None;
            }
            continue;
        }
        let (t1, t2) = ((-half - oi) / di, (half - oi) / di);
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    if t_near > t_far || t_far <= RAY_EPS {
        return None;
    }
    Some(if t_near > RAY_EPS { t_near } else { t_far })
}

/// Closest point to `p` on the segment `a`–`b`, as the segment parameter in `[0, 1]`.
pub fn closest_param(a: DVec2, b: DVec2, p: DVec2) -> f64 {
    let ab = b - a;
    let len2 = ab.length_squared();
    if len2 < 1e-18 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let cone = Solid::of(Shape::Cone);
        assert_eq!(cone.radius_at(0.0), Some(1.0));
        assert_eq!(cone.radius_at(2.0), Some(0.5));
        assert_eq!(cone.radius_at(4.5), None);
        let hg = Solid::of(Shape::Hourglass);
        assert_eq!(hg.radius_at(2.0), Some(0.0));
        assert_eq!(hg.max_radius(1.0, 3.0), Some(0.5));
        let db = Solid::of(Shape::Dumbbell);
        assert_eq!(db.max_radius(0.5, 1.5), Some(1.0));
        assert_eq!(db.max_radius(2.5, 2.6), Some(0.25));
        assert!((db.radius_at(2.0).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(Solid::of(Shape::Pole).footprint(), 0.5);
        assert_eq!(Solid::of(Shape::Pillar).max_radius(4.5, 5.0), None);
    }

    #[test]
    fn ray_hits_pillar_side_and_top() {
        let pillar = Solid::of(Shape::Pillar);
        let o = DVec3::new(-5.0, 0.0, 1.5);
        let t = pillar.intersect(DVec2::ZERO, o, DVec3::X).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        let down = pillar.intersect(DVec2::ZERO, DVec3::new(0.2, 0.0, 10.0), -DVec3::Z).unwrap();
        assert!((down - 6.0).abs() < 1e-12);
        assert!(pillar.intersect(DVec2::ZERO, DVec3::new(-5.0, 0.0, 4.5), DVec3::X).is_none());
    }

    #[test]
    fn ray_hits_cone_at_expected_height() {
        let cone = Solid::of(Shape::Cone);
        // at z = 2 the radius is 0.5
        let t = cone.intersect(DVec2::new(3.0, 0.0), DVec3::new(0.0, 0.0, 2.0), DVec3::X).unwrap();
        assert!((t - 2.5).abs() < 1e-12);
        // the mirrored nappe above the apex must not register
        assert!(cone.intersect(DVec2::ZERO, DVec3::new(-5.0, 0.0, 6.0), DVec3::X).is_none());
    }

    #[test]
    fn capsule_and_box() {
        let t = intersect_capsule(DVec3::new(0.0, -5.0, 0.0), DVec3::Y, DVec3::new(-1.0, 0.0, 0.0), DVec3::new(1.0, 0.0, 0.0), 0.5).unwrap();
        assert!((t - 4.5).abs() < 1e-12);
        let end = intersect_capsule(DVec3::new(-5.0, 0.0, 0.0), DVec3::X, DVec3::new(-1.0, 0.0, 0.0), DVec3::new(1.0, 0.0, 0.0), 0.5).unwrap();
        assert!((end - 3.5).abs() < 1e-12);
        let b = intersect_box(DVec3::new(-5.0, 0.0, 0.0), DVec3::X, DVec3::ZERO, 0.3, 0.5).unwrap();
        let c = libm::cos(0.3);
        assert!((b - (5.0 - 0.5 / c)).abs() < 1e-12);
    }
}
