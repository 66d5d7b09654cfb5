//! Adam with coupled L2 weight decay over flat parameter blocks.

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// Per-block L2 coefficient added to the gradient.
    decay: Vec<f64>,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: &[usize], lr: f64, decay: Vec<f64>) -> Self {
        assert_eq!(sizes.len(), decay.len());
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut [f64]>,
        grads: &[&[f64]],
    ) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (k, param) in params.into_iter().enumerate() {
            let grad = grads[k];
            let decay = self.decay[k];
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..param.len() {
                let g = grad[i] + decay * param[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
