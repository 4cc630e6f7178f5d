use rayon::prelude::*;

use super::set::bbox;
use super::{GeometryError, SetState, Vec2};

/// Uniform bucket grid for exact nearest-neighbour distance queries.
#[derive(Debug, Clone)]
pub struct PointGrid {
    points: Vec<Vec2>,
    lo: Vec2,
    hi: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<u32>,
    index: Vec<u32>,
}

impl PointGrid {
    pub fn new(points: &[Vec2]) -> Self {
        assert!(!points.is_empty(), "PointGrid needs at least one point");
        let (lo, hi) = bbox(points.iter().copied());
        let ext = (hi - lo).norm().max(1e-12);
        let cell = (ext / (points.len() as f64).sqrt()).max(1e-12);
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut grid = PointGrid {
            points: points.to_vec(),
            lo,
            hi,
            cell,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            index: vec![0; points.len()],
        };
        let cells: Vec<usize> = points.iter().map(|p| grid.cell_of(*p)).collect();
        for &c in &cells {
            grid.start[c + 1] += 1;
        }
        for c in 0..nx * ny {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.index[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    fn cell_coords(&self, p: Vec2) -> (usize, usize) {
        let i = ((p.x - self.lo.x) / self.cell).floor().max(0.0) as usize;
        let j = ((p.y - self.lo.y) / self.cell).floor().max(0.0) as usize;
        (i.min(self.nx - 1), j.min(self.ny - 1))
    }

    fn cell_of(&self, p: Vec2) -> usize {
        let (i, j) = self.cell_coords(p);
        j * self.nx + i
    }

    /// Distance from `p` to the nearest stored point.
    pub fn nearest_distance(&self, p: Vec2) -> f64 {
        // distances to the clamped point bound distances from p from below
        let clamped = Vec2::new(
            p.x.clamp(self.lo.x, self.hi.x),
            p.y.clamp(self.lo.y, self.hi.y),
        );
        let (ci, cj) = self.cell_coords(clamped);
        let mut best = f64::INFINITY;
        let kmax = self.nx.max(self.ny);
        for k in 0..=kmax {
            if k >= 1 && (k - 1) as f64 * self.cell > best {
                break;
            }
            let (ci, cj, k) = (ci as i64, cj as i64, k as i64);
            for j in (cj - k)..=(cj + k) {
                if j < 0 || j >= self.ny as i64 {
                    continue;
                }
                let ring_row = j == cj - k || j == cj + k;
                let step = if ring_row || k == 0 { 1 } else { 2 * k };
                let mut i = ci - k;
                while i <= ci + k {
                    if i >= 0 && i < self.nx as i64 {
                        let c = j as usize * self.nx + i as usize;
                        for &idx in &self.index[self.start[c] as usize..self.start[c + 1] as usize]
                        {
                            best = best.min(p.dist(self.points[idx as usize]));
                        }
                    }
                    i += step.max(1);
                }
            }
        }
        best
    }
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff_points(a: &[Vec2], b: &[Vec2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let directed = |from: &[Vec2], to: &[Vec2]| {
        let grid = PointGrid::new(to);
        from.par_iter()
            .map(|p| grid.nearest_distance(*p))
            .reduce(|| 0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Hausdorff distance between the point representations (boundary vertices
/// plus samples) of two sets.
pub fn hausdorff_distance(a: &SetState, b: &SetState) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::Empty);
    }
    let pa: Vec<Vec2> = a.all_points().collect();
    let pb: Vec<Vec2> = b.all_points().collect();
    Ok(hausdorff_points(&pa, &pb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(a: &[Vec2], b: &[Vec2]) -> f64 {
        let d = |x: &[Vec2], y: &[Vec2]| {
            x.iter()
                .map(|p| y.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        d(a, b).max(d(b, a))
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let na = rng.gen_range(1..300);
            let nb = rng.gen_range(1..300);
            let spread = if trial % 2 == 0 { 1.0 } else { 50.0 };
            let a: Vec<Vec2> = (0..na)
                .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let b: Vec<Vec2> = (0..nb)
                .map(|_| Vec2::new(rng.gen_range(-spread..spread), rng.gen_range(-0.1..0.1)))
                .collect();
            assert_eq!(hausdorff_points(&a, &b), brute(&a, &b));
        }
    }

    #[test]
    fn concentric_disks() {
        let a = SetState::disk(Vec2::ZERO, 1.0, 256, 0.0);
        let b = SetState::disk(Vec2::ZERO, 0.5, 256, 0.0);
        let d = hausdorff_distance(&a, &b).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cloud() {
        let a = vec![Vec2::new(1.0, 1.0); 5];
        let b = vec![Vec2::new(1.0, 2.0)];
        assert_eq!(hausdorff_points(&a, &b), 1.0);
    }
}
