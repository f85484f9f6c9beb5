//! Adaptive moment estimation, set up for gradient *ascent*.

/// Per-parameter adaptive steps from exponentially decayed first and second
/// gradient moments with bias correction. `step` moves parameters uphill.
#[derive(Debug, Clone)]
pub struct Adam {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, step_size: f64, beta1: f64, beta2: f64) -> Self {
        Adam { step_size, beta1, beta2, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One ascent step over a parameter vector split into two contiguous
    /// blocks (variational means and raw scales) that share the step count.
    pub fn step_pair(&mut self, a: &mut [f64], b: &mut [f64], ga: &[f64], gb: &[f64]) {
        assert_eq!(a.len() + b.len(), self.m.len(), "optimizer sized for a different model");
        assert_eq!(a.len(), ga.len());
        assert_eq!(b.len(), gb.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for (params, grads) in [(a, ga), (b, gb)] {
            for (p, &g) in params.iter_mut().zip(grads) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *p += self.step_size * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_roughly_the_step_size_uphill() {
        // With bias correction, m_hat = g and v_hat = g² on step one, so the
        // update is step_size · g/|g| (up to eps).
        let mut adam = Adam::new(2, 0.01, 0.9, 0.999);
        let mut a = vec![0.0, 0.0];
        adam.step_pair(&mut a, &mut [], &[2.0, -0.5], &[]);
        assert!((a[0] - 0.01).abs() < 1e-6);
        assert!((a[1] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn maximizes_a_concave_quadratic() {
        // f(x) = -(x - 3)², gradient -2(x - 3).
        let mut adam = Adam::new(1, 0.05, 0.9, 0.999);
        let mut x = vec![0.0];
        for _ in 0..2000 {
            let g = [-2.0 * (x[0] - 3.0)];
            adam.step_pair(&mut x, &mut [], &g, &[]);
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn split_blocks_update_like_one_vector() {
        let mut joint = Adam::new(4, 0.01, 0.9, 0.999);
        let mut split = Adam::new(4, 0.01, 0.9, 0.999);
        let mut pj = vec![0.1, 0.2, 0.3, 0.4];
        let mut pa = vec![0.1, 0.2];
        let mut pb = vec![0.3, 0.4];
        for step in 0..5 {
            let g: Vec<f64> = (0..4).map(|i| ((i + step) as f64).sin()).collect();
            joint.step_pair(&mut pj, &mut [], &g, &[]);
            split.step_pair(&mut pa, &mut pb, &g[..2], &g[2..]);
        }
        assert_eq!(&pj[..2], &pa[..]);
        assert_eq!(&pj[2..], &pb[..]);
    }
}
