use super::LogDensity;

/// A phase-space point with cached log density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub gradient: Vec<f64>,
}

impl Point {
    pub fn new<M: LogDensity + ?Sized>(model: &M, position: Vec<f64>) -> Self {
        let mut gradient = vec![0.0; position.len()];
        let log_density = model.log_density_gradient(&position, &mut gradient);
        let momentum = vec![0.0; position.len()];
        Point {
            position,
            momentum,
            log_density,
            gradient,
        }
    }

    pub fn kinetic(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self
            .momentum
            .iter()
            .zip(inv_mass)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    /// Potential (negative log density) plus kinetic energy; NaN maps to +inf.
    pub fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        let h = -self.log_density + self.kinetic(inv_mass);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// Velocity `M^{-1} p`.
    pub fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.momentum.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }

    /// One leapfrog step of signed size `step` in place.
    pub fn evolve<M: LogDensity + ?Sized>(&mut self, model: &M, step: f64, inv_mass: &[f64]) {
        for (p, g) in self.momentum.iter_mut().zip(&self.gradient) {
            *p += 0.5 * step * g;
        }
        for ((q, p), m) in self.position.iter_mut().zip(&self.momentum).zip(inv_mass) {
            *q += step * m * p;
        }
        self.log_density = model.log_density_gradient(&self.position, &mut self.gradient);
        for (p, g) in self.momentum.iter_mut().zip(&self.gradient) {
            *p += 0.5 * step * g;
        }
    }
}

/// Single leapfrog step with unit mass against the potential `-log_density`.
///
/// `log_density_gradient` returns the log density and writes its gradient.
pub fn leapfrog<F>(
    position: &[f64],
    momentum: &[f64],
    step: f64,
    mut log_density_gradient: F,
) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut grad = vec![0.0; position.len()];
    log_density_gradient(position, &mut grad);
    let mut p: Vec<f64> = momentum
        .iter()
        .zip(&grad)
        .map(|(p, g)| p + 0.5 * step * g)
        .collect();
    let q: Vec<f64> = position.iter().zip(&p).map(|(q, p)| q + step * p).collect();
    log_density_gradient(&q, &mut grad);
    for (pi, g) in p.iter_mut().zip(&grad) {
        *pi += 0.5 * step * g;
    }
    (q, p)
}
