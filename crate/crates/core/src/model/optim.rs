//! Adam with bias-corrected moments and a step learning-rate schedule.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    /// One moment buffer per tensor, sized by `sizes`.
    pub fn new(sizes: &[usize], cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>], lr: f64) {
        assert_eq!(params.len(), grads.len(), "tensor count mismatch");
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// `base · gamma^floor(epoch / step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLr {
    pub base: f64,
    pub step: usize,
    pub gamma: f64,
}

impl StepLr {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.base * self.gamma.powi((epoch / self.step.max(1)) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![1.5, -2.0, 0.25];
        let mut adam = Adam::new(&[3], AdamConfig::default());
        for _ in 0..10 {
            adam.step(&mut [p.as_mut_slice()], &[vec![0.0; 3]], 1e-3);
        }
        assert_eq!(p, vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias correction makes the first update exactly lr·sign(g) up to eps.
        let mut p = vec![0.0];
        let mut adam = Adam::new(&[1], AdamConfig::default());
        adam.step(&mut [p.as_mut_slice()], &[vec![-6.0]], 1e-3);
        assert!((p[0] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn step_schedule() {
        let s = StepLr {
            base: 1e-3,
            step: 5,
            gamma: 0.5,
        };
        assert_eq!(s.lr(0), 1e-3);
        assert_eq!(s.lr(4), 1e-3);
        assert_eq!(s.lr(5), 5e-4);
        assert_eq!(s.lr(10), 2.5e-4);
    }
}
