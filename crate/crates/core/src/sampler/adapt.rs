use super::SamplerError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualAveragingOptions {
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl Default for DualAveragingOptions {
    fn default() -> Self {
        DualAveragingOptions {
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }
}

/// Nesterov dual averaging of `log(step)` toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    options: DualAveragingOptions,
    target: f64,
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
}

impl DualAveraging {
    pub fn new(options: DualAveragingOptions, target: f64, initial_step: f64) -> Self {
        DualAveraging {
            options,
            target,
            mu: (10.0 * initial_step).ln(),
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
        }
    }

    /// Resets the averages and re-centres the shrinkage point at `10 * step`.
    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.s_bar = 0.0;
        self.x_bar = 0.0;
        self.counter = 0.0;
    }

    /// Feeds one acceptance statistic; returns the next step size to use.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let o = &self.options;
        self.counter += 1.0;
        let accept_stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + o.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / o.gamma;
        let x_eta = self.counter.powf(-o.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// The averaged step size used after warmup.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator of per-coordinate variances.
#[derive(Debug, Clone)]
pub struct VarianceEstimator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        VarianceEstimator {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sample variances shrunk toward `1e-3` with weight `5 / (n + 5)`.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = if self.count > 1 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}

/// Expanding-window warmup: a fast initial buffer for the step size, slow
/// windows that double in length for the mass matrix, and a terminal fast
/// buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarmupSchedule {
    pub warmup: usize,
    pub init_buffer: usize,
    pub term_buffer: usize,
    pub base_window: usize,
    /// Warmup iterations (0-based) after which the metric is updated.
    pub window_ends: Vec<usize>,
}

impl WarmupSchedule {
    pub const INIT_BUFFER: usize = 75;
    pub const TERM_BUFFER: usize = 50;
    pub const BASE_WINDOW: usize = 25;

    /// The standard 75 / 25-doubling / 50 schedule.
    pub fn standard(warmup: usize) -> Result<Self, SamplerError> {
        let needed = Self::INIT_BUFFER + Self::TERM_BUFFER + Self::BASE_WINDOW;
        if warmup < needed {
            return Err(SamplerError::WarmupTooShort { warmup, needed });
        }
        Ok(Self::build(
            warmup,
            Self::INIT_BUFFER,
            Self::TERM_BUFFER,
            Self::BASE_WINDOW,
        ))
    }

    /// Standard schedule when it fits; otherwise 15% / 75% / 10% of the
    /// warmup, and step-size-only adaptation below 20 iterations.
    pub fn for_warmup(warmup: usize) -> Self {
        if let Ok(s) = Self::standard(warmup) {
            return s;
        }
        if warmup < 20 {
            return WarmupSchedule {
                warmup,
                init_buffer: warmup,
                term_buffer: 0,
                base_window: 0,
                window_ends: Vec::new(),
            };
        }
        let init = (0.15 * warmup as f64) as usize;
        let term = (0.1 * warmup as f64) as usize;
        Self::build(warmup, init, term, warmup - init - term)
    }

    fn build(warmup: usize, init_buffer: usize, term_buffer: usize, base_window: usize) -> Self {
        let last = warmup - term_buffer - 1;
        let mut window_ends = Vec::new();
        let mut size = base_window;
        let mut next = init_buffer + size - 1;
        loop {
            window_ends.push(next);
            if next == last {
                break;
            }
            size *= 2;
            let mut end = next + size;
            if end + 2 * size > last {
                end = last;
            }
            next = end.min(last);
        }
        WarmupSchedule {
            warmup,
            init_buffer,
            term_buffer,
            base_window,
            window_ends,
        }
    }

    /// Whether warmup iteration `i` contributes to a variance window.
    pub fn in_slow_window(&self, i: usize) -> bool {
        !self.window_ends.is_empty() && i >= self.init_buffer && i < self.warmup - self.term_buffer
    }

    pub fn is_window_end(&self, i: usize) -> bool {
        self.window_ends.contains(&i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schedule_for_thousand() {
        let s = WarmupSchedule::standard(1000).unwrap();
        // 75..99, 100..149, 150..249, 250..449, 450..949
        assert_eq!(s.window_ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn standard_schedule_for_five_hundred() {
        let s = WarmupSchedule::standard(500).unwrap();
        assert_eq!(s.window_ends, vec![99, 149, 249, 449]);
        assert!(s.in_slow_window(75));
        assert!(!s.in_slow_window(74));
        assert!(!s.in_slow_window(450));
    }

    #[test]
    fn minimal_schedule_is_a_single_window() {
        let s = WarmupSchedule::standard(150).unwrap();
        assert_eq!(s.window_ends, vec![99]);
    }

    #[test]
    fn short_warmup_is_rejected_by_standard_schedule() {
        assert_eq!(
            WarmupSchedule::standard(149),
            Err(SamplerError::WarmupTooShort {
                warmup: 149,
                needed: 150
            })
        );
        let fallback = WarmupSchedule::for_warmup(100);
        assert_eq!(fallback.init_buffer, 15);
        assert_eq!(fallback.term_buffer, 10);
        assert_eq!(fallback.window_ends, vec![89]);
        assert!(WarmupSchedule::for_warmup(10).window_ends.is_empty());
    }

    #[test]
    fn dual_averaging_moves_step_toward_target() {
        let mut da = DualAveraging::new(DualAveragingOptions::default(), 0.8, 1.0);
        // persistent over-acceptance should grow the step
        let mut step = 1.0;
        for _ in 0..50 {
            step = da.update(1.0);
        }
        assert!(step > 1.0);
        let mut da = DualAveraging::new(DualAveragingOptions::default(), 0.8, 1.0);
        for _ in 0..50 {
            step = da.update(0.1);
        }
        assert!(step < 1.0 && da.final_step() < 1.0);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [[1.0, 10.0], [2.0, 14.0], [4.0, 9.0], [7.0, 11.0]];
        let mut est = VarianceEstimator::new(2);
        for x in &xs {
            est.add(x);
        }
        let var0 = {
            let m = 3.5;
            xs.iter().map(|x| (x[0] - m).powi(2)).sum::<f64>() / 3.0
        };
        let n = 4.0;
        let expected = (n / (n + 5.0)) * var0 + 1e-3 * (5.0 / (n + 5.0));
        assert!((est.regularized_variance()[0] - expected).abs() < 1e-12);
    }
}
