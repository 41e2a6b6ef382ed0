use super::scalar::Scalar;

/// Adam with decoupled weight decay: every step first shrinks the
/// parameters by `lr·weight_decay`, then applies the bias-corrected Adam
/// update.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let c1 = T::from_f64(1.0 - self.beta1);
        let c2 = T::from_f64(1.0 - self.beta2);
        let bc1 = T::from_f64(1.0 - self.beta1.powi(self.t));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(self.t));
        let lr = T::from_f64(self.lr);
        let decay = T::from_f64(self.lr * self.weight_decay);
        let eps = T::from_f64(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
            *p = *p - decay * *p - lr * update;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays() {
        let mut opt = AdamW::<f64>::new(3, 1e-3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        opt.step(&mut p, &[0.0; 3]);
        for (a, b) in p.iter().zip(&before) {
            assert_eq!(*a, b - 1e-6 * b);
        }
        let mut opt = AdamW::<f32>::new(3, 1e-3, 0.0);
        let mut q = vec![1.0f32, -2.0, 0.5];
        opt.step(&mut q, &[0.0; 3]);
        assert_eq!(q, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = AdamW::<f64>::new(2, 0.01, 0.0);
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] + 0.01).abs() < 1e-9 && (p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = AdamW::<f64>::new(1, 0.05, 0.0);
        let mut p = vec![3.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
