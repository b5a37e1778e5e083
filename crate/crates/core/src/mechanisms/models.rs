use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::chunk_rng;

/// A differentiable classifier trained with softmax cross-entropy.
pub trait Model: Sync {
    fn num_params(&self) -> usize;

    fn init(&self, seed: u64) -> Vec<f64>;

    /// Gradient of the loss on one example, written into `grad`.
    fn gradient(&self, params: &[f64], x: &[f64], y: usize, grad: &mut [f64]);

    fn predict(&self, params: &[f64], x: &[f64]) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

impl ModelKind {
    pub fn build(self, dim: usize, classes: usize) -> Box<dyn Model> {
        match self {
            ModelKind::Logistic => Box::new(Logistic { dim, classes }),
            ModelKind::Mlp => Box::new(Mlp { dim, hidden: Mlp::WIDTH, classes }),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(format!("unknown model '{other}' (expected logistic or mlp)")),
        }
    }
}

/// In-place softmax; returns nothing, leaves probabilities in `z`.
fn softmax(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..z.len() {
        if z[i] > z[best] {
            best = i;
        }
    }
    best
}

/// Multinomial logistic regression. Parameters: weights (`classes × dim`,
/// row-major) followed by biases.
#[derive(Debug, Clone, Copy)]
pub struct Logistic {
    pub dim: usize,
    pub classes: usize,
}

impl Logistic {
    fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (w, b) = params.split_at(self.classes * self.dim);
        (0..self.classes)
            .map(|c| b[c] + w[c * self.dim..(c + 1) * self.dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

impl Model for Logistic {
    fn num_params(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn init(&self, _seed: u64) -> Vec<f64> {
        vec![0.0; self.num_params()]
    }

    fn gradient(&self, params: &[f64], x: &[f64], y: usize, grad: &mut [f64]) {
        let mut p = self.logits(params, x);
        softmax(&mut p);
        p[y] -= 1.0;
        let (gw, gb) = grad.split_at_mut(self.classes * self.dim);
        for c in 0..self.classes {
            for (g, xi) in gw[c * self.dim..(c + 1) * self.dim].iter_mut().zip(x) {
                *g = p[c] * xi;
            }
            gb[c] = p[c];
        }
    }

    fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        argmax(&self.logits(params, x))
    }
}

/// One hidden `tanh` layer followed by a softmax layer.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Mlp {
    pub const WIDTH: usize = 32;

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (w1, rest) = params.split_at(self.hidden * self.dim);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.classes * self.hidden);
        (w1, b1, w2, b2)
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w1, b1, w2, b2) = self.split(params);
        let a: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let z = b1[j] + w1[j * self.dim..(j + 1) * self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                z.tanh()
            })
            .collect();
        let logits = (0..self.classes)
            .map(|c| b2[c] + w2[c * self.hidden..(c + 1) * self.hidden].iter().zip(&a).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        (a, logits)
    }
}

impl Model for Mlp {
    fn num_params(&self) -> usize {
        self.hidden * (self.dim + 1) + self.classes * (self.hidden + 1)
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = chunk_rng(seed, 0);
        let mut p = vec![0.0; self.num_params()];
        let r1 = 1.0 / (self.dim as f64).sqrt();
        let r2 = 1.0 / (self.hidden as f64).sqrt();
        let n1 = self.hidden * self.dim;
        for v in &mut p[..n1] {
            *v = rng.random_range(-r1..r1);
        }
        let w2 = n1 + self.hidden;
        for v in &mut p[w2..w2 + self.classes * self.hidden] {
            *v = rng.random_range(-r2..r2);
        }
        p
    }

    fn gradient(&self, params: &[f64], x: &[f64], y: usize, grad: &mut [f64]) {
        let (a, mut p) = self.forward(params, x);
        softmax(&mut p);
        p[y] -= 1.0;
        let (_, _, w2, _) = self.split(params);
        let (h, d, c) = (self.hidden, self.dim, self.classes);
        let (gw1, rest) = grad.split_at_mut(h * d);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(c * h);
        for k in 0..c {
            for j in 0..h {
                gw2[k * h + j] = p[k] * a[j];
            }
            gb2[k] = p[k];
        }
        for j in 0..h {
            let back: f64 = (0..c).map(|k| w2[k * h + j] * p[k]).sum::<f64>() * (1.0 - a[j] * a[j]);
            for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                *g = back * xi;
            }
            gb1[j] = back;
        }
    }

    fn predict(&self, params: &[f64], x: &[f64]) -> usize {
        argmax(&self.forward(params, x).1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xent(mut z: Vec<f64>, y: usize) -> f64 {
        softmax(&mut z);
        -z[y].ln()
    }

    fn check_gradient(model: &dyn Model, logits: impl Fn(&[f64]) -> Vec<f64> + Copy, x: &[f64], y: usize) {
        let mut params = model.init(3);
        for (i, p) in params.iter_mut().enumerate() {
            *p += 0.05 * ((i * 37 % 11) as f64 - 5.0) / 5.0;
        }
        let mut g = vec![0.0; model.num_params()];
        model.gradient(&params, x, y, &mut g);
        let eps = 1e-6;
        for i in 0..params.len() {
            let mut up = params.clone();
            up[i] += eps;
            let mut dn = params.clone();
            dn[i] -= eps;
            let fd = (xent(logits(&up), y) - xent(logits(&dn), y)) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-6, "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let m = Logistic { dim: 3, classes: 3 };
        let x = [0.3, -1.2, 0.7];
        check_gradient(&m, |p| m.logits(p, &x), &x, 1);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let m = Mlp { dim: 3, hidden: 4, classes: 2 };
        let x = [0.3, -1.2, 0.7];
        check_gradient(&m, |p| m.forward(p, &x).1, &x, 0);
    }
}
