use crate::error::{Error, Result};
use crate::net::{ParamStore, Tensor};

/// Adam with bias correction. After each update the parameters and both
/// moment estimates are rounded through `f32`, so a checkpoint stores the
/// exact optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

fn round_f32(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|x| *x = *x as f32 as f64);
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Restores a saved state; shapes must match the current moments.
    pub fn restore(&mut self, t: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<()> {
        let same = |a: &[Tensor], b: &[Tensor]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape());
        if !same(&m, &self.m) || !same(&v, &self.v) {
            return Err(Error::validation("optimizer state does not match the parameters"));
        }
        self.t = t;
        self.m = m;
        self.v = v;
        Ok(())
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) {
        assert_eq!(grads.len(), self.m.len(), "one gradient per parameter");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.value.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                pd[i] -= lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
            }
            round_f32(m);
            round_f32(v);
        }
        params.quantize_f32();
    }
}

/// `lr * decay^(completed_steps / interval)` with integer division.
pub fn learning_rate(lr: f64, decay: f64, interval: u64, completed_steps: u64) -> f64 {
    lr * decay.powi((completed_steps / interval.max(1)) as i32)
}
