use rand::Rng;
use rand_distr::StandardNormal;

use super::{LogDensity, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsOptions {
    pub max_tree_depth: usize,
    /// Energy error beyond which a trajectory is declared divergent.
    pub max_delta_h: f64,
}

impl Default for NutsOptions {
    fn default() -> Self {
        NutsOptions {
            max_tree_depth: 10,
            max_delta_h: 1000.0,
        }
    }
}

/// Statistics of one NUTS transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Mean Metropolis acceptance probability over all leapfrog steps.
    pub accept_stat: f64,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
}

struct TreeBuilder<'a, M: ?Sized, R: ?Sized> {
    model: &'a M,
    step: f64,
    inv_mass: &'a [f64],
    h0: f64,
    max_delta_h: f64,
    rng: &'a mut R,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Generalized no-U-turn check on a span with summed momentum `rho`.
fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

impl<M: LogDensity + ?Sized, R: Rng + ?Sized> TreeBuilder<'_, M, R> {
    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        sign: f64,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            z.evolve(self.model, sign * self.step, self.inv_mass);
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_mass);
            if h - self.h0 > self.max_delta_h {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            self.sum_metro_prob += if self.h0 - h > 0.0 {
                1.0
            } else {
                (self.h0 - h).exp()
            };
            z_propose.clone_from(z);
            *p_sharp_beg = z.velocity(self.inv_mass);
            p_sharp_end.clone_from(p_sharp_beg);
            add_into(rho, &z.momentum);
            p_beg.clone_from(&z.momentum);
            p_end.clone_from(p_beg);
            return !self.divergent;
        }

        let dim = z.position.len();
        let mut log_sum_weight_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        if !self.build(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            sign,
            &mut log_sum_weight_init,
        ) {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        if !self.build(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            sign,
            &mut log_sum_weight_final,
        ) {
            return false;
        }

        // uniform multinomial choice within the subtree
        let log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, log_sum_weight_subtree);
        if log_sum_weight_final > log_sum_weight_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (log_sum_weight_final - log_sum_weight_subtree).exp();
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = sum(&rho_init, &rho_final);
        add_into(rho, &rho_subtree);

        let mut persist = no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_extended = sum(&rho_init, &p_final_beg);
        persist &= no_u_turn(p_sharp_beg, &p_sharp_final_beg, &rho_extended);
        let rho_extended = sum(&rho_final, &p_init_end);
        persist &= no_u_turn(&p_sharp_init_end, p_sharp_end, &rho_extended);
        persist
    }
}

/// One NUTS transition from `current` (whose momentum is ignored).
///
/// Trajectories double in a random direction until the no-U-turn criterion
/// fails, a divergence occurs or `max_tree_depth` is reached. The next state
/// is drawn multinomially: uniformly within each new subtree, then biased
/// toward the newest subtree at the top level.
pub fn nuts_transition<M, R>(
    model: &M,
    current: &Point,
    step: f64,
    inv_mass: &[f64],
    options: &NutsOptions,
    rng: &mut R,
) -> (Point, Transition)
where
    M: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let dim = current.position.len();
    let mut z = current.clone();
    for (p, m) in z.momentum.iter_mut().zip(inv_mass) {
        let n: f64 = rng.sample(StandardNormal);
        *p = n / m.sqrt();
    }
    let h0 = z.hamiltonian(inv_mass);

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let p_sharp = z.velocity(inv_mass);
    let mut p_fwd_fwd = z.momentum.clone();
    let mut p_sharp_fwd_fwd = p_sharp.clone();
    let mut p_fwd_bck = z.momentum.clone();
    let mut p_sharp_fwd_bck = p_sharp.clone();
    let mut p_bck_fwd = z.momentum.clone();
    let mut p_sharp_bck_fwd = p_sharp.clone();
    let mut p_bck_bck = z.momentum.clone();
    let mut p_sharp_bck_bck = p_sharp;
    let mut rho = z.momentum.clone();

    let mut log_sum_weight = 0.0;
    let mut depth = 0;
    let mut builder = TreeBuilder {
        model,
        step,
        inv_mass,
        h0,
        max_delta_h: options.max_delta_h,
        rng,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };

    while depth < options.max_tree_depth {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut log_sum_weight_subtree = f64::NEG_INFINITY;
        let valid = if builder.rng.random::<f64>() > 0.5 {
            rho_bck.clone_from(&rho);
            p_bck_fwd.clone_from(&p_fwd_bck);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
            builder.build(
                depth,
                &mut z_fwd,
                &mut z_propose,
                &mut p_sharp_fwd_bck,
                &mut p_sharp_fwd_fwd,
                &mut rho_fwd,
                &mut p_fwd_bck,
                &mut p_fwd_fwd,
                1.0,
                &mut log_sum_weight_subtree,
            )
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bck.clone_from(&p_bck_fwd);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
            builder.build(
                depth,
                &mut z_bck,
                &mut z_propose,
                &mut p_sharp_bck_fwd,
                &mut p_sharp_bck_bck,
                &mut rho_bck,
                &mut p_bck_fwd,
                &mut p_bck_bck,
                -1.0,
                &mut log_sum_weight_subtree,
            )
        };
        if !valid {
            break;
        }
        depth += 1;

        if log_sum_weight_subtree > log_sum_weight {
            z_sample.clone_from(&z_propose);
        } else {
            let accept = (log_sum_weight_subtree - log_sum_weight).exp();
            if builder.rng.random::<f64>() < accept {
                z_sample.clone_from(&z_propose);
            }
        }
        log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

        rho = sum(&rho_bck, &rho_fwd);
        let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        let rho_extended = sum(&rho_bck, &p_fwd_bck);
        persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_extended);
        let rho_extended = sum(&rho_fwd, &p_bck_fwd);
        persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_extended);
        if !persist {
            break;
        }
    }

    let n_leapfrog = builder.n_leapfrog.max(1);
    let stats = Transition {
        accept_stat: builder.sum_metro_prob / n_leapfrog as f64,
        depth,
        n_leapfrog: builder.n_leapfrog,
        divergent: builder.divergent,
        energy: z_sample.hamiltonian(inv_mass),
    };
    (z_sample, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct StdNormal(usize);
    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density_gradient(&self, q: &[f64], g: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for (x, d) in q.iter().zip(g.iter_mut()) {
                *d = -x;
                lp -= 0.5 * x * x;
            }
            lp
        }
    }

    #[test]
    fn huge_step_always_diverges_and_stays_put() {
        let model = StdNormal(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = Point::new(&model, vec![0.5, -0.25]);
        let mut point = start.clone();
        for _ in 0..50 {
            let (next, t) =
                nuts_transition(&model, &point, 1e6, &[1.0, 1.0], &NutsOptions::default(), &mut rng);
            assert!(t.divergent);
            assert_eq!(t.depth, 0);
            point = next;
        }
        assert_eq!(point.position, start.position);
    }

    #[test]
    fn depth_is_capped() {
        let model = StdNormal(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start = Point::new(&model, vec![0.1, 0.2, 0.3]);
        let opts = NutsOptions {
            max_tree_depth: 3,
            ..NutsOptions::default()
        };
        for _ in 0..20 {
            let (_, t) = nuts_transition(&model, &start, 1e-4, &[1.0; 3], &opts, &mut rng);
            assert_eq!(t.depth, 3);
            assert_eq!(t.n_leapfrog, 7);
        }
    }

    #[test]
    fn accept_stat_is_a_probability() {
        let model = StdNormal(5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut point = Point::new(&model, vec![0.0; 5]);
        for _ in 0..200 {
            let (next, t) =
                nuts_transition(&model, &point, 0.9, &[1.0; 5], &NutsOptions::default(), &mut rng);
            assert!((0.0..=1.0).contains(&t.accept_stat));
            point = next;
        }
    }
}
