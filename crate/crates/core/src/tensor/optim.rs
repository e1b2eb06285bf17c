use super::Tensor;

/// Adam with moment decays 0.9 / 0.999 and ε = 1e-8.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for k in 0..p.len() {
                m[k] = Self::B1 * m[k] + (1.0 - Self::B1) * g[k];
                v[k] = Self::B2 * v[k] + (1.0 - Self::B2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + 1e-8);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = vec![Tensor::from_rows(&[vec![1.0, -2.0]])];
        let g = vec![Tensor::from_rows(&[vec![0.3, -50.0]])];
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &g, 0.1);
        assert!((p[0].at(&[0, 0]) - 0.9).abs() < 1e-6);
        assert!((p[0].at(&[0, 1]) + 1.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = vec![Tensor::scalar(5.0)];
        let mut opt = Adam::new(&p);
        for _ in 0..2000 {
            let g = vec![p[0].map(|x| 2.0 * (x - 1.5))];
            opt.step(&mut p, &g, 0.05);
        }
        assert!((p[0].item() - 1.5).abs() < 1e-3);
    }
}
