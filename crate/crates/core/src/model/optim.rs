use alloc::vec::Vec;

use crate::linalg::Matrix;

/// `lr0 · (1 + cos(π·step/total)) / 2`; `lr0` when `total` is zero.
pub fn cosine_learning_rate(lr0: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let t = (step.min(total)) as f64 / total as f64;
    lr0 * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
}

/// Adam with decoupled weight decay, one moment pair per tensor.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(shapes: &[(usize, usize)], weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `decay[i]` selects whether tensor `i` receives weight decay.
    pub fn update(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], decay: &[bool], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (i, p) in params.iter_mut().enumerate() {
            let wd = if decay[i] { self.weight_decay } else { 0.0 };
            let (m, v) = (self.m[i].as_mut_slice(), self.v[i].as_mut_slice());
            for (((x, g), mi), vi) in p.as_mut_slice().iter_mut().zip(grads[i].as_slice()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= lr * (mhat / (libm::sqrt(vhat) + self.eps) + wd * *x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_learning_rate(0.004, 0, 100), 0.004);
        assert!((cosine_learning_rate(0.004, 50, 100) - 0.002).abs() < 1e-15);
        assert!(cosine_learning_rate(0.004, 100, 100).abs() < 1e-18);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Matrix::from_vec(1, 2, alloc::vec![1.0, -1.0]).unwrap();
        let g = Matrix::from_vec(1, 2, alloc::vec![0.5, -3.0]).unwrap();
        let mut opt = AdamW::new(&[(1, 2)], 0.0);
        opt.update(&mut [&mut p], &[g], &[true], 0.1);
        assert!((p.as_slice()[0] - 0.9).abs() < 1e-6);
        assert!((p.as_slice()[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = Matrix::scalar(2.0);
        let mut opt = AdamW::new(&[(1, 1)], 0.5);
        opt.update(&mut [&mut p], &[Matrix::scalar(0.0)], &[true], 0.1);
        assert!((p.item() - 1.9).abs() < 1e-12);
    }
}
