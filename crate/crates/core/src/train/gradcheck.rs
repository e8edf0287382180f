//! Central finite-difference check of analytic gradients.

use rand::Rng;

use crate::encoder::Params;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tolerance: f64,
    /// Coordinates sampled per tensor: half among non-zero analytic entries,
    /// half uniformly.
    pub coords_per_tensor: usize,
    /// Denominator floor for the relative error, so that coordinates whose
    /// true gradient is ~0 are compared in absolute terms.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tolerance: 1e-4,
            coords_per_tensor: 6,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordCheck>,
    pub passed: bool,
}

pub fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn grad_check<P, F, R>(params: &P, analytic: &P, mut loss_fn: F, opts: &GradCheckOptions, rng: &mut R) -> GradCheckReport
where
    P: Params + Clone,
    F: FnMut(&P) -> f64,
    R: Rng + ?Sized,
{
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (t, (_, g)) in analytic.tensors().iter().enumerate() {
        let n = g.data.len();
        if n == 0 {
            continue;
        }
        let nonzero: Vec<usize> = (0..n).filter(|&i| g.data[i] != 0.0).collect();
        let half = opts.coords_per_tensor / 2;
        for _ in 0..half.min(nonzero.len()) {
            picks.push((t, nonzero[rng.random_range(0..nonzero.len())]));
        }
        for _ in 0..opts.coords_per_tensor - half.min(nonzero.len()) {
            picks.push((t, rng.random_range(0..n)));
        }
    }

    let names: Vec<String> = analytic.tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|(_, g)| g.data.clone()).collect();
    let mut work = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        passed: true,
    };
    for (t, i) in picks {
        let orig = work.tensors()[t].1.data[i];
        work.tensors_mut()[t].1.data[i] = orig + opts.h;
        let fp = loss_fn(&work);
        work.tensors_mut()[t].1.data[i] = orig - opts.h;
        let fm = loss_fn(&work);
        work.tensors_mut()[t].1.data[i] = orig;
        let numeric = (fp - fm) / (2.0 * opts.h);
        let a = grads[t][i];
        let e = rel_error(a, numeric, opts.abs_floor);
        report.checked += 1;
        if !(e <= report.max_rel_error) || report.worst.is_none() {
            report.max_rel_error = if e.is_nan() { f64::INFINITY } else { e.max(report.max_rel_error) };
            report.worst = Some(CoordCheck {
                tensor: names[t].clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: e,
            });
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad(p: &Tensor) -> f64 {
        p.data.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x * x).sum::<f64>() + p.data[0] * p.data[1]
    }

    fn quad_grad(p: &Tensor) -> Tensor {
        let mut g = p.zeros_like();
        for (i, x) in p.data.iter().enumerate() {
            g.data[i] = 2.0 * (i as f64 + 1.0) * x;
        }
        g.data[0] += p.data[1];
        g.data[1] += p.data[0];
        g
    }

    #[test]
    fn quadratic_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Tensor::randn(1, 8, 1.0, &mut rng);
        let g = quad_grad(&p);
        let opts = GradCheckOptions {
            tolerance: 1e-8,
            coords_per_tensor: 8,
            ..Default::default()
        };
        let r = grad_check(&p, &g, quad, &opts, &mut rng);
        assert!(r.passed, "{r:?}");
        assert!(r.max_rel_error < 1e-8);
        assert_eq!(r.checked, 8);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Tensor::randn(1, 8, 1.0, &mut rng);
        let mut g = quad_grad(&p);
        g.data.iter_mut().for_each(|x| *x *= 1.01);
        let r = grad_check(&p, &g, quad, &GradCheckOptions::default(), &mut rng);
        assert!(!r.passed);
        assert!(r.max_rel_error > 1e-3);
    }

    #[test]
    fn rel_error_floor() {
        assert_eq!(rel_error(0.0, 0.0, 1e-6), 0.0);
        assert!((rel_error(1.0, 0.5, 1e-6) - 0.5).abs() < 1e-15);
        assert!((rel_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }
}
