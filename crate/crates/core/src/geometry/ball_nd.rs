/// A closed Euclidean ball in any dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BallNd {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallNd {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        BallNd { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        dist(x, &self.center) - self.radius
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) <= 0.0
    }

    /// Nearest point of the ball.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let r = dist(x, &self.center);
        if r <= self.radius {
            return x.to_vec();
        }
        let s = self.radius / r;
        self.center
            .iter()
            .zip(x)
            .map(|(c, xi)| c + (xi - c) * s)
            .collect()
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
