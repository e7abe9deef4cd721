//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used, so the check is independent of every
//! backward rule it validates.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    /// Relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
        }
    }
}

impl GradCheck {
    /// Numerical gradient of `f` at `x`.
    pub fn numeric(&self, x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
        let mut probe = x.clone();
        let mut out = Vec::with_capacity(x.numel());
        for i in 0..x.numel() {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + self.step;
            let up = f(&probe);
            probe.data_mut()[i] = orig - self.step;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            out.push((up - down) / (2.0 * self.step));
        }
        Tensor::new(x.shape().to_vec(), out).expect("same shape")
    }

    /// Largest relative error between an analytic and numeric gradient.
    pub fn max_rel_error(&self, analytic: &Tensor, numeric: &Tensor) -> f64 {
        analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(self.floor))
            .fold(0.0, f64::max)
    }
}
