//! Gaussian-process regression with a squared-exponential kernel.
//!
//! Hyperparameters are fixed (no marginal-likelihood optimization): the
//! estimators that use this operate on the normalized unit cube where a fixed
//! length scale is appropriate. Factorization is Cholesky with an escalating
//! jitter ladder; a matrix that stays indefinite at the top of the ladder is
//! an error, not a silent fallback.

use crate::error::{CoreError, Result};

/// Jitter ladder tried in order when the Cholesky factorization fails.
const JITTERS: [f64; 5] = [0.0, 1e-10, 1e-9, 1e-8, 1e-6];

/// Posterior variances this slightly negative are rounding noise and clamp
/// to zero; anything lower is a conditioning bug and errors.
const VAR_CLAMP: f64 = -1e-12;

#[derive(Debug, Clone)]
pub struct GpState {
    ell: f64,
    sigma_f2: f64,
    sigma_n2: f64,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    /// Lower Cholesky factor of K + (sigma_n^2 + jitter) I, row-major.
    chol: Option<Vec<f64>>,
    alpha: Vec<f64>,
}

impl GpState {
    /// `ell` is the length scale, `sigma_f` the signal std, `sigma_n` the
    /// observation-noise std (may be zero).
    pub fn new(ell: f64, sigma_f: f64, sigma_n: f64) -> Result<Self> {
        if ell <= 0.0 || sigma_f <= 0.0 || sigma_n < 0.0 {
            return Err(CoreError::invalid(
                "gp hyperparameters",
                format!("ell {ell}, sigma_f {sigma_f}, sigma_n {sigma_n}"),
            ));
        }
        Ok(GpState {
            ell,
            sigma_f2: sigma_f * sigma_f,
            sigma_n2: sigma_n * sigma_n,
            xs: Vec::new(),
            ys: Vec::new(),
            chol: None,
            alpha: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.sigma_f2 * (-d2 / (2.0 * self.ell * self.ell)).exp()
    }

    /// Append one observation; invalidates the factorization until `fit`.
    pub fn add_observation(&mut self, x: &[f64], y: f64) -> Result<()> {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("gp observation".into()));
        }
        if let Some(first) = self.xs.first() {
            if x.len() != first.len() {
                return Err(CoreError::shape("gp input dim", first.len(), x.len()));
            }
        }
        self.xs.push(x.to_vec());
        self.ys.push(y);
        self.chol = None;
        Ok(())
    }

    /// Factorize the kernel matrix. Errors on an empty state or an
    /// irreparably ill-conditioned matrix.
    pub fn fit(&mut self) -> Result<()> {
        let n = self.xs.len();
        if n == 0 {
            return Err(CoreError::EmptyInput("gp observations".into()));
        }
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = self.kernel(&self.xs[i], &self.xs[j]);
                base[i * n + j] = k;
                base[j * n + i] = k;
            }
        }
        for &jitter in &JITTERS {
            let mut k = base.clone();
            for i in 0..n {
                k[i * n + i] += self.sigma_n2 + jitter;
            }
            if let Some(l) = cholesky(&k, n) {
                let alpha = chol_solve(&l, n, &self.ys);
                self.chol = Some(l);
                self.alpha = alpha;
                return Ok(());
            }
        }
        Err(CoreError::IllConditioned {
            max_jitter: *JITTERS.last().unwrap(),
        })
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        let l = self.chol.as_ref().ok_or_else(|| {
            CoreError::invalid("gp state", "posterior called before fit")
        })?;
        let n = self.xs.len();
        let kstar: Vec<f64> = self.xs.iter().map(|xi| self.kernel(xi, x)).collect();
        let mu: f64 = kstar.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        // var = k(x,x) - kstar^T K^-1 kstar via v = L^-1 kstar
        let v = forward_sub(l, n, &kstar);
        let mut var = self.kernel(x, x) - v.iter().map(|z| z * z).sum::<f64>();
        if var < 0.0 {
            if var >= VAR_CLAMP {
                var = 0.0;
            } else {
                return Err(CoreError::invalid(
                    "gp posterior variance",
                    format!("{var} below clamp threshold {VAR_CLAMP}"),
                ));
            }
        }
        Ok((mu, var))
    }
}

/// Dense lower-triangular Cholesky; None if not positive definite.
fn cholesky(k: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = k[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve L z = b.
fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * n + j] * z[j];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

/// Solve (L L^T) x = b.
fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let z = forward_sub(l, n, b);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for j in i + 1..n {
            s -= l[j * n + i] * x[j];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
