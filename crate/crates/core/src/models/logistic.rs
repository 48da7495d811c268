use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::linalg::cholesky_solve;
use super::{check_trainable, check_width};
use crate::dataset::{EncodedKind, TabularDataset};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// L2 penalty `(l2 / 2) * |beta|^2` added to the summed weighted
    /// log-loss; the intercept is not penalised.
    pub l2: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { l2: 1.0, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub l2_lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Training objective after each accepted Newton step (standardized space).
    pub loss_trace: Vec<f64>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weighted penalised log-loss and its gradient with respect to
/// `(coefficients, intercept)`, the intercept last.
pub fn weighted_objective(
    coefficients: &[f64],
    intercept: f64,
    x: &Array2<f64>,
    y: &[u8],
    w: &[f64],
    l2: f64,
) -> (f64, Vec<f64>) {
    let d = coefficients.len();
    let mut loss = 0.5 * l2 * coefficients.iter().map(|b| b * b).sum::<f64>();
    let mut grad = vec![0.0; d + 1];
    for (j, g) in grad.iter_mut().take(d).enumerate() {
        *g = l2 * coefficients[j];
    }
    for (i, row) in x.rows().into_iter().enumerate() {
        let z = intercept + row.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>();
        let yi = f64::from(y[i]);
        loss += w[i] * (softplus(z) - yi * z);
        let r = w[i] * (sigmoid(z) - yi);
        for (g, &v) in grad.iter_mut().zip(row.iter()) {
            *g += r * v;
        }
        grad[d] += r;
    }
    (loss, grad)
}

impl LogisticModel {
    /// Damped Newton with Armijo backtracking. Continuous columns are
    /// standardized with weighted training statistics; reported coefficients
    /// are in the original feature scale.
    pub fn fit(train: &TabularDataset, cfg: &LogisticConfig) -> Result<Self> {
        check_trainable(train)?;
        let d = train.n_features();
        let w = train.w();
        let y = train.y();
        let total_w: f64 = w.iter().sum();

        let mut shift = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for (j, col) in train.schema().iter().enumerate() {
            if col.kind != EncodedKind::Continuous {
                continue;
            }
            let column = train.x().column(j);
            let mean = column.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / total_w;
            let var = column.iter().zip(w).map(|(v, wi)| wi * (v - mean).powi(2)).sum::<f64>() / total_w;
            shift[j] = mean;
            if var > 1e-24 {
                scale[j] = var.sqrt();
            }
        }
        let mut xs = train.x().clone();
        for mut row in xs.rows_mut() {
            for j in 0..d {
                row[j] = (row[j] - shift[j]) / scale[j];
            }
        }

        let p = d + 1;
        let mut beta = vec![0.0; d];
        let mut b0 = 0.0;
        let (mut loss, mut grad) = weighted_objective(&beta, b0, &xs, y, w, cfg.l2);
        let mut trace = vec![loss];
        let mut converged = false;
        let mut iterations = 0;

        while iterations < cfg.max_iter {
            iterations += 1;
            let mut hess = vec![0.0; p * p];
            for (i, row) in xs.rows().into_iter().enumerate() {
                let z = b0 + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
                let pi = sigmoid(z);
                let h = w[i] * pi * (1.0 - pi);
                if h == 0.0 {
                    continue;
                }
                for a in 0..p {
                    let va = if a < d { row[a] } else { 1.0 };
                    if va == 0.0 {
                        continue;
                    }
                    for c in 0..=a {
                        let vc = if c < d { row[c] } else { 1.0 };
                        hess[a * p + c] += h * va * vc;
                    }
                }
            }
            for a in 0..p {
                for c in 0..a {
                    hess[c * p + a] = hess[a * p + c];
                }
            }
            for j in 0..d {
                hess[j * p + j] += cfg.l2;
            }
            let mut jitter = 1e-12 * (1.0 + total_w);
            let step = loop {
                if let Some(s) = cholesky_solve(&hess, &grad, p) {
                    break s;
                }
                for a in 0..p {
                    hess[a * p + a] += jitter;
                }
                jitter *= 10.0;
            };
            let slope: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
            if slope <= 1e-28 * (1.0 + loss.abs()) {
                converged = true;
                break;
            }

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand_beta: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
                let cand_b0 = b0 - t * step[d];
                let (cand_loss, cand_grad) = weighted_objective(&cand_beta, cand_b0, &xs, y, w, cfg.l2);
                if cand_loss.is_finite() && cand_loss <= loss - 1e-4 * t * slope {
                    accepted = Some((cand_beta, cand_b0, cand_loss, cand_grad));
                    break;
                }
                t *= 0.5;
            }
            let Some((nb, nb0, nl, ng)) = accepted else {
                // no decrease available at machine precision
                converged = true;
                break;
            };
            let moved = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
            beta = nb;
            b0 = nb0;
            loss = nl;
            grad = ng;
            trace.push(loss);
            if moved < 1e-12 {
                converged = true;
                break;
            }
        }

        let coefficients: Vec<f64> = beta.iter().zip(&scale).map(|(b, s)| b / s).collect();
        let intercept = b0 - coefficients.iter().zip(&shift).map(|(c, m)| c * m).sum::<f64>();
        Ok(Self {
            coefficients,
            intercept,
            l2_lambda: cfg.l2,
            converged,
            iterations,
            loss_trace: trace,
        })
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        check_width(self.coefficients.len(), x)?;
        Ok(x.rows()
            .into_iter()
            .map(|row| {
                sigmoid(self.intercept + row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support;
    use crate::models::Prediction;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_points_separable() {
        let ds = test_support::dataset(vec![vec![-1.0], vec![1.0]], vec![0, 1], vec![0, 1]);
        let m = LogisticModel::fit(&ds, &LogisticConfig { l2: 0.1, max_iter: 200 }).unwrap();
        assert!(m.coefficients[0] > 0.0);
        let p = Prediction::from_proba(m.predict_proba(ds.x()).unwrap(), 0.5);
        assert_eq!(p.labels, vec![0, 1]);
        assert!(m.converged);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogisticModel {
            coefficients: vec![0.0, 0.0],
            intercept: 0.0,
            l2_lambda: 1.0,
            converged: true,
            iterations: 0,
            loss_trace: vec![],
        };
        let p = Prediction::from_proba(m.predict_proba(&array![[1.0, 2.0], [-3.0, 0.5]]).unwrap(), 0.5);
        assert_eq!(p.proba, vec![0.5, 0.5]);
        assert_eq!(p.labels, vec![1, 1]);
        assert!(m.predict_proba(&array![[1.0]]).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let ds = test_support::dataset(vec![vec![-1.0], vec![1.0]], vec![1, 1], vec![0, 1]);
        assert!(LogisticModel::fit(&ds, &LogisticConfig::default()).is_err());
    }

    fn random_data(seed: u64, n: usize, d: usize) -> TabularDataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(r.iter().sum::<f64>() + rng.gen_range(-1.5..1.5) > 0.0))
            .collect();
        let s = (0..n).map(|i| (i % 2) as u8).collect();
        test_support::dataset(rows, y, s)
    }

    #[test]
    fn doubled_weights_with_doubled_penalty() {
        let ds = random_data(1, 60, 3);
        let w: Vec<f64> = (0..60).map(|i| 0.5 + (i % 4) as f64 * 0.25).collect();
        let a = LogisticModel::fit(&ds.with_weights(w.clone()).unwrap(), &LogisticConfig { l2: 0.7, max_iter: 200 }).unwrap();
        let doubled: Vec<f64> = w.iter().map(|v| v * 2.0).collect();
        let b = LogisticModel::fit(&ds.with_weights(doubled).unwrap(), &LogisticConfig { l2: 1.4, max_iter: 200 }).unwrap();
        for (x, y) in a.coefficients.iter().chain([&a.intercept]).zip(b.coefficients.iter().chain([&b.intercept])) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = random_data(2, 25, 3);
        let w: Vec<f64> = (0..25).map(|i| 0.3 + (i % 5) as f64 * 0.4).collect();
        let coef = vec![0.3, -0.7, 1.1];
        let b0 = -0.2;
        let (_, grad) = weighted_objective(&coef, b0, ds.x(), ds.y(), &w, 0.5);
        let h = 1e-6;
        for k in 0..4 {
            let eval = |delta: f64| {
                let mut c = coef.clone();
                let mut b = b0;
                if k < 3 {
                    c[k] += delta;
                } else {
                    b += delta;
                }
                weighted_objective(&c, b, ds.x(), ds.y(), &w, 0.5).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-8);
            assert!(rel <= 1e-5, "component {k}: analytic {} fd {fd}", grad[k]);
        }
    }

    #[test]
    fn loss_trace_non_increasing() {
        let m = LogisticModel::fit(&random_data(3, 80, 4), &LogisticConfig::default()).unwrap();
        assert!(m.loss_trace.windows(2).all(|p| p[1] <= p[0]));
    }
}
