//! Planar geometry: vectors, polylines with arc-length parameterization, and
//! actor footprints.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Vec2::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or zero for a zero-length input.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    /// Counter-clockwise perpendicular (the "left" side of a heading).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed offset, positive on the left of the travel direction.
    pub lateral: f64,
    pub distance: f64,
    pub foot: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline; consecutive duplicate points are dropped. Returns
    /// `None` when fewer than two distinct points remain.
    pub fn new(points: Vec<Vec2>) -> Option<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if !p.is_finite() {
                return None;
            }
            if pts.last().is_none_or(|q| q.distance(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in pts.windows(2) {
            acc += w[0].distance(w[1]);
            cumulative.push(acc);
        }
        Some(Polyline {
            points: pts,
            cumulative,
        })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("polyline has points")
    }

    fn segment_at(&self, s: f64) -> usize {
        // index i such that cumulative[i] <= s < cumulative[i + 1]
        let idx = self.cumulative.partition_point(|&c| c <= s);
        idx.saturating_sub(1).min(self.points.len() - 2)
    }

    /// Point at arc length `s`, clamped to the polyline ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((s - self.cumulative[i]) / seg).clamp(0.0, 1.0);
        a + (b - a) * t
    }

    /// Direction of travel at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        (self.points[i + 1] - self.points[i]).angle()
    }

    /// Largest absolute heading change per metre within `[s, s + window]`.
    pub fn max_curvature(&self, s: f64, window: f64) -> f64 {
        let end = (s + window).min(self.length());
        let mut best: f64 = 0.0;
        let mut a = s.max(0.0);
        let step = 2.0;
        while a + step <= end + 1e-9 {
            let dh = wrap_angle(self.heading_at(a + step) - self.heading_at(a)).abs();
            best = best.max(dh / step);
            a += 1.0;
        }
        best
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            lateral: 0.0,
            distance: f64::INFINITY,
            foot: self.points[0],
        };
        for i in 0..self.points.len() - 1 {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let foot = a + ab * t;
            let d = p.distance(foot);
            if d < best.distance {
                let side = ab.cross(p - a);
                best = Projection {
                    s: self.cumulative[i] + t * len2.sqrt(),
                    lateral: if side >= 0.0 { d } else { -d },
                    distance: d,
                    foot,
                };
            }
        }
        best
    }

    /// Proper crossings with another polyline.
    pub fn crossings(&self, other: &Polyline) -> Vec<Vec2> {
        let mut out = Vec::new();
        for a in self.points.windows(2) {
            for b in other.points.windows(2) {
                if let Some(p) = segment_intersection(a[0], a[1], b[0], b[1]) {
                    out.push(p);
                }
            }
        }
        out
    }
}

fn segment_intersection(p: Vec2, p2: Vec2, q: Vec2, q2: Vec2) -> Option<Vec2> {
    let r = p2 - p;
    let s = q2 - q;
    let denom = r.cross(s);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = (q - p).cross(s) / denom;
    let u = (q - p).cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(p + r * t)
    } else {
        None
    }
}

/// Collision footprint of an actor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint {
    /// Oriented rectangle given by half extents along and across the heading.
    Rect {
        center: Vec2,
        heading: f64,
        half_length: f64,
        half_width: f64,
    },
    Disc { center: Vec2, radius: f64 },
}

impl Footprint {
    pub fn center(&self) -> Vec2 {
        match *self {
            Footprint::Rect { center, .. } | Footprint::Disc { center, .. } => center,
        }
    }

    fn corners(&self) -> Option<[Vec2; 4]> {
        match *self {
            Footprint::Rect {
                center,
                heading,
                half_length,
                half_width,
            } => {
                let f = Vec2::from_angle(heading);
                let l = f.perp();
                Some([
                    center + f * half_length + l * half_width,
                    center - f * half_length + l * half_width,
                    center - f * half_length - l * half_width,
                    center + f * half_length - l * half_width,
                ])
            }
            Footprint::Disc { .. } => None,
        }
    }

    pub fn overlaps(&self, other: &Footprint) -> bool {
        self.distance(other) <= 0.0
    }

    /// Minimum Euclidean distance between the two shapes; zero when they
    /// touch or overlap.
    pub fn distance(&self, other: &Footprint) -> f64 {
        match (self, other) {
            (
                Footprint::Disc { center: a, radius: ra },
                Footprint::Disc { center: b, radius: rb },
            ) => (a.distance(*b) - ra - rb).max(0.0),
            (rect @ Footprint::Rect { .. }, Footprint::Disc { center, radius })
            | (Footprint::Disc { center, radius }, rect @ Footprint::Rect { .. }) => {
                (rect_point_distance(rect, *center) - radius).max(0.0)
            }
            (a, b) => {
                let ca = a.corners().expect("rect");
                let cb = b.corners().expect("rect");
                if polygons_overlap(&ca, &cb) {
                    return 0.0;
                }
                let mut best = f64::INFINITY;
                for &p in &ca {
                    best = best.min(polygon_point_distance(&cb, p));
                }
                for &p in &cb {
                    best = best.min(polygon_point_distance(&ca, p));
                }
                best
            }
        }
    }
}

fn rect_point_distance(rect: &Footprint, p: Vec2) -> f64 {
    let Footprint::Rect {
        center,
        heading,
        half_length,
        half_width,
    } = *rect
    else {
        unreachable!("rect expected")
    };
    let f = Vec2::from_angle(heading);
    let d = p - center;
    let lx = (d.dot(f).abs() - half_length).max(0.0);
    let ly = (d.dot(f.perp()).abs() - half_width).max(0.0);
    lx.hypot(ly)
}

fn polygon_point_distance(poly: &[Vec2; 4], p: Vec2) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let a = poly[i];
        let b = poly[(i + 1) % 4];
        let ab = b - a;
        let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
        best = best.min(p.distance(a + ab * t));
    }
    best
}

// Separating-axis test for two convex quadrilaterals.
fn polygons_overlap(a: &[Vec2; 4], b: &[Vec2; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let axis = (poly[(i + 1) % 4] - poly[i]).perp();
            let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in a {
                let v = axis.dot(*p);
                amin = amin.min(v);
                amax = amax.max(v);
            }
            let (mut bmin, mut bmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in b {
                let v = axis.dot(*p);
                bmin = bmin.min(v);
                bmax = bmax.max(v);
            }
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}
