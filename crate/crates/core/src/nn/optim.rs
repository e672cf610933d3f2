//! SGD and Adam over lists of parameter matrices.

use super::Mat;
use crate::error::{CoreError, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptKind,
    lr: f64,
    t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Optimizer {
    pub fn new(kind: OptKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// One update in place. Errors on shape mismatch or non-finite gradients
    /// (parameters are left untouched in that case).
    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(CoreError::shape("optimizer tensors", params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(CoreError::shape(
                    "gradient tensor",
                    format!("{:?}", p.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
            if !g.all_finite() {
                return Err(CoreError::NonFinite("gradient".into()));
            }
        }
        match self.kind {
            OptKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= self.lr * gv;
                    }
                }
            }
            OptKind::Adam => {
                if self.m.is_empty() {
                    self.m = params.iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let b1t = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let b2t = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..p.len() {
                        let gi = g.data()[i];
                        m.data_mut()[i] = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * gi;
                        v.data_mut()[i] = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * gi * gi;
                        let mhat = m.data()[i] / b1t;
                        let vhat = v.data()[i] / b2t;
                        p.data_mut()[i] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = (x - 3)^2; gradient 2(x - 3).
    fn quad_grad(x: f64) -> f64 {
        2.0 * (x - 3.0)
    }

    #[test]
    fn sgd_reaches_quadratic_minimum() {
        let mut opt = Optimizer::new(OptKind::Sgd, 0.1);
        let mut p = vec![Mat::from_vec(1, 1, vec![-4.0])];
        for _ in 0..200 {
            let g = vec![Mat::from_vec(1, 1, vec![quad_grad(p[0].get(0, 0))])];
            opt.step(&mut p, &g).unwrap();
        }
        assert!((p[0].get(0, 0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn adam_reaches_quadratic_minimum() {
        let mut opt = Optimizer::new(OptKind::Adam, 0.05);
        let mut p = vec![Mat::from_vec(1, 1, vec![-4.0])];
        for _ in 0..2000 {
            let g = vec![Mat::from_vec(1, 1, vec![quad_grad(p[0].get(0, 0))])];
            opt.step(&mut p, &g).unwrap();
        }
        assert!((p[0].get(0, 0) - 3.0).abs() < 1e-4);
    }

    #[test]
    fn non_finite_gradient_rejected_and_params_untouched() {
        let mut opt = Optimizer::new(OptKind::Adam, 0.05);
        let mut p = vec![Mat::from_vec(1, 1, vec![1.0])];
        let g = vec![Mat::from_vec(1, 1, vec![f64::NAN])];
        assert!(opt.step(&mut p, &g).is_err());
        assert_eq!(p[0].get(0, 0), 1.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut opt = Optimizer::new(OptKind::Sgd, 0.1);
        let mut p = vec![Mat::zeros(2, 2)];
        let g = vec![Mat::zeros(2, 3)];
        assert!(opt.step(&mut p, &g).is_err());
    }
}
