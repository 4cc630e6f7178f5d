use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec2};

/// A compact planar set: a counterclockwise simple boundary polygon plus a
/// cloud of interior samples.
///
/// The samples are flowed individually by the dynamics and witness
/// point-wise claims; the boundary carries the shape for area and distance
/// computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSet")]
pub struct SetState {
    boundary: Vec<Vec2>,
    samples: Vec<Vec2>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSet {
    boundary: Vec<Vec2>,
    #[serde(default)]
    samples: Vec<Vec2>,
}

impl TryFrom<RawSet> for SetState {
    type Error = GeometryError;
    fn try_from(raw: RawSet) -> Result<Self, Self::Error> {
        SetState::new(raw.boundary, raw.samples)
    }
}

impl SetState {
    /// Validates the polygon and samples. A clockwise boundary is reversed.
    pub fn new(mut boundary: Vec<Vec2>, samples: Vec<Vec2>) -> Result<Self, GeometryError> {
        if boundary.len() < 3 {
            return Err(GeometryError::TooFewVertices(boundary.len()));
        }
        if boundary.iter().chain(&samples).any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if let Some((i, j)) = first_self_intersection(&boundary) {
            return Err(GeometryError::SelfIntersecting(i, j));
        }
        if signed_area(&boundary) < 0.0 {
            boundary.reverse();
        }
        let set = SetState {
            boundary,
            samples: Vec::new(),
        };
        for (index, s) in samples.iter().enumerate() {
            if !set.contains(*s) {
                return Err(GeometryError::SampleOutside {
                    index,
                    x: s.x,
                    y: s.y,
                });
            }
        }
        Ok(SetState { samples, ..set })
    }

    /// Assembles a state without validation. Used for flowed sets, whose
    /// validity is checked separately at output times.
    pub fn from_parts_unchecked(boundary: Vec<Vec2>, samples: Vec<Vec2>) -> Self {
        SetState { boundary, samples }
    }

    /// Regular polygon inscribed in the circle, with grid samples.
    pub fn disk(center: Vec2, radius: f64, n_vertices: usize, spacing: f64) -> Self {
        Self::disk_with_offset(center, radius, n_vertices, spacing, Vec2::ZERO)
    }

    pub fn disk_with_offset(
        center: Vec2,
        radius: f64,
        n_vertices: usize,
        spacing: f64,
        offset: Vec2,
    ) -> Self {
        let boundary = (0..n_vertices)
            .map(|k| center + Vec2::from_angle(2.0 * PI * k as f64 / n_vertices as f64) * radius)
            .collect();
        Self::with_grid_samples(boundary, spacing, offset)
    }

    pub fn ellipse(
        center: Vec2,
        a: f64,
        b: f64,
        angle: f64,
        n_vertices: usize,
        spacing: f64,
        offset: Vec2,
    ) -> Self {
        let boundary = (0..n_vertices)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n_vertices as f64;
                center + Vec2::new(a * th.cos(), b * th.sin()).rotate(angle)
            })
            .collect();
        Self::with_grid_samples(boundary, spacing, offset)
    }

    /// Annular sector between radii `r_in < r_out` over the angular range
    /// `[a0, a1]` (less than a full turn, so the set stays simply connected).
    pub fn annular_sector(
        center: Vec2,
        r_in: f64,
        r_out: f64,
        a0: f64,
        a1: f64,
        n_arc: usize,
        spacing: f64,
    ) -> Self {
        let mut boundary = Vec::with_capacity(2 * n_arc);
        for k in 0..n_arc {
            let th = a0 + (a1 - a0) * k as f64 / (n_arc - 1) as f64;
            boundary.push(center + Vec2::from_angle(th) * r_out);
        }
        for k in 0..n_arc {
            let th = a1 - (a1 - a0) * k as f64 / (n_arc - 1) as f64;
            boundary.push(center + Vec2::from_angle(th) * r_in);
        }
        Self::with_grid_samples(boundary, spacing, Vec2::ZERO)
    }

    /// Polygon with edges subdivided so no edge exceeds `max_edge`.
    pub fn polygon(
        vertices: &[Vec2],
        max_edge: f64,
        spacing: f64,
        offset: Vec2,
    ) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        let mut boundary = Vec::new();
        for (i, &a) in vertices.iter().enumerate() {
            let b = vertices[(i + 1) % vertices.len()];
            let pieces = ((a.dist(b) / max_edge).ceil() as usize).max(1);
            for k in 0..pieces {
                boundary.push(a.lerp(b, k as f64 / pieces as f64));
            }
        }
        let probe = SetState::new(boundary, Vec::new())?;
        Ok(Self::with_grid_samples(probe.boundary, spacing, offset))
    }

    /// Fills the polygon with samples on a square grid of the given spacing,
    /// shifted by `offset`. Points closer than `spacing * 1e-6` to the
    /// boundary are dropped.
    pub fn with_grid_samples(mut boundary: Vec<Vec2>, spacing: f64, offset: Vec2) -> Self {
        if signed_area(&boundary) < 0.0 {
            boundary.reverse();
        }
        let mut set = SetState {
            boundary,
            samples: Vec::new(),
        };
        if spacing > 0.0 {
            let (lo, hi) = set.bbox();
            let i0 = ((lo.x - offset.x) / spacing).floor() as i64;
            let i1 = ((hi.x - offset.x) / spacing).ceil() as i64;
            let j0 = ((lo.y - offset.y) / spacing).floor() as i64;
            let j1 = ((hi.y - offset.y) / spacing).ceil() as i64;
            let mut samples = Vec::new();
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let p = offset + Vec2::new(i as f64 * spacing, j as f64 * spacing);
                    if set.contains(p) && set.distance_to_boundary(p) > 1e-6 * spacing {
                        samples.push(p);
                    }
                }
            }
            set.samples = samples;
        }
        set
    }

    pub fn boundary(&self) -> &[Vec2] {
        &self.boundary
    }

    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn into_parts(self) -> (Vec<Vec2>, Vec<Vec2>) {
        (self.boundary, self.samples)
    }

    /// Boundary vertices followed by samples.
    pub fn all_points(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.boundary.iter().chain(&self.samples).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty() && self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.boundary.len() < 3 {
            return Err(GeometryError::TooFewVertices(self.boundary.len()));
        }
        if let Some((i, j)) = first_self_intersection(&self.boundary) {
            return Err(GeometryError::SelfIntersecting(i, j));
        }
        for (index, s) in self.samples.iter().enumerate() {
            if !self.contains(*s) {
                return Err(GeometryError::SampleOutside {
                    index,
                    x: s.x,
                    y: s.y,
                });
            }
        }
        Ok(())
    }

    pub fn is_simple(&self) -> bool {
        first_self_intersection(&self.boundary).is_none()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.boundary)
    }

    pub fn perimeter(&self) -> f64 {
        edges(&self.boundary).map(|(a, b)| a.dist(b)).sum()
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        bbox(self.all_points())
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.dist(hi)
    }

    pub fn centroid(&self) -> Vec2 {
        let a = signed_area(&self.boundary);
        if a.abs() < 1e-300 {
            let n = self.boundary.len() as f64;
            return self.boundary.iter().copied().sum::<Vec2>() / n;
        }
        let mut c = Vec2::ZERO;
        for (p, q) in edges(&self.boundary) {
            let w = p.cross(q);
            c += (p + q) * w;
        }
        c / (6.0 * a)
    }

    /// Even-odd crossing test against the boundary polygon.
    pub fn contains(&self, p: Vec2) -> bool {
        polygon_contains(&self.boundary, p)
    }

    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        edges(&self.boundary)
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Zero inside the polygon, otherwise the distance to its boundary.
    pub fn distance_to_region(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.distance_to_boundary(p)
        }
    }

    /// Negative inside, positive outside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let d = self.distance_to_boundary(p);
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Ratio of the longest to the shortest boundary edge.
    pub fn spacing_ratio(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (a, b) in edges(&self.boundary) {
            let l = a.dist(b);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }

    /// Re-parameterizes the boundary by arclength with the same vertex count,
    /// starting from the current first vertex.
    pub fn resample_boundary(&mut self) {
        let n = self.boundary.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for (a, b) in edges(&self.boundary) {
            cum.push(cum.last().unwrap() + a.dist(b));
        }
        let total = cum[n];
        if total <= 0.0 {
            return;
        }
        let old = self.boundary.clone();
        let mut seg = 0;
        for k in 0..n {
            let s = total * k as f64 / n as f64;
            while seg + 1 < n && cum[seg + 1] < s {
                seg += 1;
            }
            let len = cum[seg + 1] - cum[seg];
            let u = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
            self.boundary[k] = old[seg].lerp(old[(seg + 1) % n], u);
        }
    }

    /// Detects a boundary whose vertices all lie on one circle (relative
    /// tolerance 1e-9); returns its center and radius.
    pub fn as_disk(&self) -> Option<(Vec2, f64)> {
        let n = self.boundary.len() as f64;
        let c = self.boundary.iter().copied().sum::<Vec2>() / n;
        let r = self.boundary.iter().map(|p| p.dist(c)).sum::<f64>() / n;
        let ok = self.boundary.len() >= 8
            && r > 0.0
            && self
                .boundary
                .iter()
                .all(|p| (p.dist(c) - r).abs() <= 1e-9 * r);
        ok.then_some((c, r))
    }

    /// The set translated by `shift`.
    pub fn translated(&self, shift: Vec2) -> SetState {
        SetState {
            boundary: self.boundary.iter().map(|p| *p + shift).collect(),
            samples: self.samples.iter().map(|p| *p + shift).collect(),
        }
    }

    /// Outer offset by `r`: boundary pushed along averaged vertex normals,
    /// samples kept and complemented by rings of radius `r` around every
    /// boundary vertex. Exact for disks; a sampled surrogate otherwise.
    pub fn dilated(&self, r: f64) -> SetState {
        let n = self.boundary.len();
        let mut boundary = Vec::with_capacity(n);
        for i in 0..n {
            let prev = self.boundary[(i + n - 1) % n];
            let cur = self.boundary[i];
            let next = self.boundary[(i + 1) % n];
            let n1 = (cur - prev).perp().normalized().unwrap_or(Vec2::ZERO);
            let n2 = (next - cur).perp().normalized().unwrap_or(Vec2::ZERO);
            // ccw boundary: perp points inward
            let dir = -(n1 + n2).normalized().unwrap_or(n1);
            let cosh = dir.dot(-n1).max(0.5);
            boundary.push(cur + dir * (r / cosh));
        }
        let mut samples = self.samples.clone();
        samples.extend(self.boundary.iter().copied());
        for &p in &self.boundary {
            for k in 0..8 {
                let q = p + Vec2::from_angle(2.0 * PI * k as f64 / 8.0) * (0.5 * r);
                samples.push(q);
            }
        }
        SetState { boundary, samples }
    }
}

pub(crate) fn edges(poly: &[Vec2]) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
    let n = poly.len();
    (0..n).map(move |i| (poly[i], poly[(i + 1) % n]))
}

pub(crate) fn signed_area(poly: &[Vec2]) -> f64 {
    0.5 * edges(poly).map(|(a, b)| a.cross(b)).sum::<f64>()
}

pub(crate) fn bbox(points: impl Iterator<Item = Vec2>) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (lo, hi)
}

pub(crate) fn polygon_contains(poly: &[Vec2], p: Vec2) -> bool {
    let mut inside = false;
    for (a, b) in edges(poly) {
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_sq();
    let u = if l2 > 0.0 {
        ((p - a).dot(ab) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(a + ab * u)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Vec2, b: Vec2, c: Vec2, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Brute-force check over non-adjacent edge pairs, pruned by bounding boxes
/// after sorting edges by their lower x extent.
fn first_self_intersection(poly: &[Vec2]) -> Option<(usize, usize)> {
    let n = poly.len();
    let mut order: Vec<usize> = (0..n).collect();
    let lo = |i: usize| poly[i].x.min(poly[(i + 1) % n].x);
    let hi = |i: usize| poly[i].x.max(poly[(i + 1) % n].x);
    order.sort_by(|&a, &b| lo(a).total_cmp(&lo(b)));
    for (k, &i) in order.iter().enumerate() {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        for &j in &order[k + 1..] {
            if lo(j) > hi(i) {
                break;
            }
            let adjacent = j == (i + 1) % n || i == (j + 1) % n;
            if adjacent {
                continue;
            }
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    // repeated vertices make adjacent edges overlap
    for i in 0..n {
        if poly[i] == poly[(i + 1) % n] {
            return Some((i, (i + 1) % n));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> SetState {
        SetState::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            vec![Vec2::new(0.5, 0.5)],
        )
        .unwrap()
    }

    #[test]
    fn square_area_and_containment() {
        let s = square();
        assert!((s.signed_area() - 1.0).abs() < 1e-15);
        assert!(s.contains(Vec2::new(0.2, 0.9)));
        assert!(!s.contains(Vec2::new(1.2, 0.9)));
        assert!((s.distance_to_region(Vec2::new(2.0, 0.5)) - 1.0).abs() < 1e-15);
        assert!((s.signed_distance(Vec2::new(0.5, 0.25)) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let s = SetState::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(1.0, 0.0),
            ],
            vec![],
        )
        .unwrap();
        assert!(s.signed_area() > 0.0);
    }

    #[test]
    fn rejects_bowtie_and_outside_samples() {
        let bow = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(matches!(
            SetState::new(bow, vec![]),
            Err(GeometryError::SelfIntersecting(..))
        ));
        let sq = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(matches!(
            SetState::new(sq, vec![Vec2::new(3.0, 0.0)]),
            Err(GeometryError::SampleOutside { index: 0, .. })
        ));
    }

    #[test]
    fn disk_detection_and_samples() {
        let d = SetState::disk(Vec2::new(0.3, -0.2), 0.5, 128, 0.05);
        let (c, r) = d.as_disk().unwrap();
        assert!(c.dist(Vec2::new(0.3, -0.2)) < 1e-12 && (r - 0.5).abs() < 1e-12);
        assert!(d.samples().len() > 250);
        assert!(d.validate().is_ok());
        assert!(square().as_disk().is_none());
    }

    #[test]
    fn resampling_equalizes_spacing() {
        let mut pts: Vec<Vec2> = (0..64)
            .map(|k| {
                let th = 2.0 * PI * (k as f64 / 64.0).powi(2);
                Vec2::from_angle(th)
            })
            .collect();
        pts.dedup();
        let mut s = SetState::from_parts_unchecked(pts, vec![]);
        assert!(s.spacing_ratio() > 3.0);
        s.resample_boundary();
        assert!(s.spacing_ratio() < 1.5, "ratio {}", s.spacing_ratio());
        assert!(s.is_simple());
    }

    #[test]
    fn annular_sector_is_simple() {
        let a = SetState::annular_sector(Vec2::ZERO, 0.5, 1.0, 0.2, 2.0 * PI - 0.2, 96, 0.05);
        assert!(a.validate().is_ok());
        assert!(!a.contains(Vec2::ZERO));
        let exact = 0.5 * (1.0 - 0.25) * (2.0 * PI - 0.4);
        assert!((a.signed_area() - exact).abs() < 2e-3 * exact);
    }
}
