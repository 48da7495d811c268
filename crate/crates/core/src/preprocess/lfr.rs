//! Learned fair representations: rows are mapped onto soft assignments over
//! `k` prototypes; the prototypes and their label scores are fitted to
//! trade reconstruction (`L_x`), prediction (`L_y`) and group parity of the
//! assignments (`L_z`).

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, EncodedKind, TabularDataset};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Scores are kept inside `[SCORE_EPS, 1 - SCORE_EPS]` so the log-loss stays finite.
const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LfrParams {
    pub k: usize,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub max_iter: usize,
    /// Stop after `patience` consecutive accepted steps that each improve
    /// the loss by less than `tol` (relative).
    pub tol: f64,
    pub patience: usize,
    /// Width of the smoothing applied to each `|.|` in `L_z`; 0 keeps it exact.
    pub lz_smoothing: f64,
    pub threshold: f64,
}

impl Default for LfrParams {
    fn default() -> Self {
        Self {
            k: 5,
            a_x: 0.01,
            a_y: 1.0,
            a_z: 50.0,
            max_iter: 5000,
            tol: 1e-9,
            patience: 25,
            lz_smoothing: 1e-4,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfrLosses {
    pub l_x: f64,
    pub l_y: f64,
    pub l_z: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfrModel {
    /// `k x d` prototypes in standardized feature space.
    pub prototypes: Array2<f64>,
    /// Label score of each prototype.
    pub scores: Vec<f64>,
    pub params: LfrParams,
    /// Standardization applied before assignment.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub loss_trace: Vec<f64>,
    pub final_loss: LfrLosses,
    pub iterations: usize,
}

/// Soft assignment of one row: `softmax_k(-|x - v_k|^2)`.
fn memberships(row: &[f64], prototypes: &Array2<f64>, out: &mut [f64]) {
    let mut max_logit = f64::NEG_INFINITY;
    for (k, v) in prototypes.rows().into_iter().enumerate() {
        let dist: f64 = row.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        out[k] = -dist;
        max_logit = max_logit.max(-dist);
    }
    let mut z = 0.0;
    for m in out.iter_mut() {
        *m = (*m - max_logit).exp();
        z += *m;
    }
    for m in out.iter_mut() {
        *m /= z;
    }
}

/// Training rows with multiplicities; identical `(x, y, s)` rows are merged,
/// which leaves every loss term unchanged.
struct Rows {
    x: Array2<f64>,
    y: Vec<u8>,
    s: Vec<u8>,
    mult: Vec<f64>,
}

impl Rows {
    fn compress(x: &Array2<f64>, y: &[u8], s: &[u8]) -> Self {
        let mut index: HashMap<(Vec<u64>, u8, u8), usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut mult: Vec<f64> = Vec::new();
        for i in 0..x.nrows() {
            let key = (x.row(i).iter().map(|v| v.to_bits()).collect(), y[i], s[i]);
            let slot = *index.entry(key).or_insert_with(|| {
                order.push(i);
                mult.push(0.0);
                order.len() - 1
            });
            mult[slot] += 1.0;
        }
        Self {
            x: x.select(Axis(0), &order).as_standard_layout().to_owned(),
            y: order.iter().map(|&i| y[i]).collect(),
            s: order.iter().map(|&i| s[i]).collect(),
            mult,
        }
    }
}

/// `|d|` smoothed as `sqrt(d^2 + mu^2) - mu`; exact `|d|` when `mu = 0`.
fn smooth_abs(d: f64, mu: f64) -> (f64, f64) {
    if mu == 0.0 {
        return (d.abs(), if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 });
    }
    let r = (d * d + mu * mu).sqrt();
    (d * d / (r + mu), d / r)
}

/// Objective and analytic gradient with respect to `(prototypes, scores)`.
///
/// `L_x` and `L_y` are per-row means, `L_z = sum_k |mean_{s=1} M_k - mean_{s=0} M_k|`
/// (with `|.|` smoothed by `lz_smoothing`). `x` must already be in the space
/// the prototypes live in.
pub fn lfr_objective(
    x: &Array2<f64>,
    y: &[u8],
    s: &[u8],
    prototypes: &Array2<f64>,
    scores: &[f64],
    params: &LfrParams,
) -> (LfrLosses, Array2<f64>, Vec<f64>) {
    let rows = Rows {
        x: x.as_standard_layout().to_owned(),
        y: y.to_vec(),
        s: s.to_vec(),
        mult: vec![1.0; y.len()],
    };
    evaluate(&rows, prototypes, scores, params, true)
}

fn evaluate(
    rows: &Rows,
    prototypes: &Array2<f64>,
    scores: &[f64],
    params: &LfrParams,
    with_grad: bool,
) -> (LfrLosses, Array2<f64>, Vec<f64>) {
    let Rows { x, y, s, mult } = rows;
    let (n, d) = x.dim();
    let k = prototypes.nrows();
    let mut count = [0.0f64; 2];
    for (&g, &c) in s.iter().zip(mult) {
        count[g as usize] += c;
    }
    let nf = (count[0] + count[1]).max(1.0);
    let n1 = count[1].max(1.0);
    let n0 = count[0].max(1.0);

    let mut m_all = vec![0.0; n * k];
    let mut resid = vec![0.0; if with_grad { n * d } else { 0 }];
    let mut dce = vec![0.0; if with_grad { n } else { 0 }];
    let mut group_mean = [vec![0.0; k], vec![0.0; k]];
    let (mut l_x, mut l_y) = (0.0, 0.0);
    let mut xhat = vec![0.0; d];

    for i in 0..n {
        let row = x.row(i);
        let row = row.as_slice().expect("standard layout");
        let c = mult[i];
        let m = &mut m_all[i * k..(i + 1) * k];
        memberships(row, prototypes, m);
        xhat.iter_mut().for_each(|v| *v = 0.0);
        let mut yhat = 0.0;
        for (kk, &mk) in m.iter().enumerate() {
            for (xh, &v) in xhat.iter_mut().zip(prototypes.row(kk).iter()) {
                *xh += mk * v;
            }
            yhat += mk * scores[kk];
            group_mean[s[i] as usize][kk] += c * mk;
        }
        for j in 0..d {
            let r = row[j] - xhat[j];
            l_x += c * r * r;
            if with_grad {
                resid[i * d + j] = r;
            }
        }
        let yi = f64::from(y[i]);
        l_y -= c * (yi * yhat.ln() + (1.0 - yi) * (1.0 - yhat).ln());
        if with_grad {
            dce[i] = -yi / yhat + (1.0 - yi) / (1.0 - yhat);
        }
    }
    l_x /= nf;
    l_y /= nf;
    let mut sign = vec![0.0; k];
    let mut l_z = 0.0;
    for kk in 0..k {
        let (a, da) = smooth_abs(group_mean[1][kk] / n1 - group_mean[0][kk] / n0, params.lz_smoothing);
        l_z += a;
        sign[kk] = da;
    }
    let losses = LfrLosses {
        l_x,
        l_y,
        l_z,
        total: params.a_x * l_x + params.a_y * l_y + params.a_z * l_z,
    };
    let mut grad_v = Array2::<f64>::zeros((k, d));
    let mut grad_u = vec![0.0; k];
    if !with_grad {
        return (losses, grad_v, grad_u);
    }

    let mut g = vec![0.0; k];
    for i in 0..n {
        let row = x.row(i);
        let row = row.as_slice().expect("standard layout");
        let c = mult[i];
        let m = &m_all[i * k..(i + 1) * k];
        let r = &resid[i * d..(i + 1) * d];
        let z_coef = if s[i] == 1 { c / n1 } else { -c / n0 };
        for kk in 0..k {
            let v = prototypes.row(kk);
            let rv: f64 = r.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            g[kk] = c * params.a_x / nf * (-2.0 * rv)
                + c * params.a_y / nf * dce[i] * scores[kk]
                + params.a_z * sign[kk] * z_coef;
            grad_u[kk] += c * params.a_y / nf * dce[i] * m[kk];
        }
        let mean_g: f64 = m.iter().zip(&g).map(|(a, b)| a * b).sum();
        for kk in 0..k {
            let dz = m[kk] * (g[kk] - mean_g);
            let direct = c * params.a_x / nf * (-2.0) * m[kk];
            let mut gv = grad_v.row_mut(kk);
            for j in 0..d {
                gv[j] += direct * r[j] + dz * 2.0 * (row[j] - v_at(prototypes, kk, j));
            }
        }
    }
    (losses, grad_v, grad_u)
}

#[inline]
fn v_at(p: &Array2<f64>, k: usize, j: usize) -> f64 {
    p[[k, j]]
}

fn pick_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.gen_range(0..weights.len());
    }
    let mut u = rng.gen_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn standardize(x: &Array2<f64>, mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        for j in 0..row.len() {
            row[j] = (row[j] - mean[j]) / scale[j];
        }
    }
    out.as_standard_layout().to_owned()
}

impl LfrModel {
    pub fn fit(train: &TabularDataset, params: &LfrParams, seed: u64) -> Result<Self> {
        let (n, d) = (train.n_rows(), train.n_features());
        if params.k == 0 {
            return Err(Error::InvalidParameter("LFR needs k >= 1".into()));
        }
        if params.k > n {
            return Err(Error::InvalidParameter(format!("LFR k = {} exceeds n = {n}", params.k)));
        }
        if [params.a_x, params.a_y, params.a_z].iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidParameter("LFR loss weights must be nonnegative".into()));
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let col = train.x().column(j);
            let mu = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            mean[j] = mu;
            if var > 1e-24 {
                scale[j] = var.sqrt();
            }
        }
        let x = standardize(train.x(), &mean, &scale);
        let rows = Rows::compress(&x, train.y(), train.s());

        // Spread-out seeding: each further prototype is a training row drawn
        // with probability proportional to its squared distance from the
        // nearest prototype chosen so far.
        let mut rng = rng_from(seed);
        let mut prototypes = Array2::<f64>::zeros((params.k, d));
        let mut nearest = vec![f64::INFINITY; rows.y.len()];
        for kk in 0..params.k {
            let pick = if kk == 0 {
                pick_weighted(&rows.mult, &mut rng)
            } else {
                let w: Vec<f64> = nearest.iter().zip(&rows.mult).map(|(d2, c)| d2 * c).collect();
                pick_weighted(&w, &mut rng)
            };
            for j in 0..d {
                prototypes[[kk, j]] = rows.x[[pick, j]] + rng.gen_range(-0.05..0.05);
            }
            for (i, best) in nearest.iter_mut().enumerate() {
                let d2: f64 = rows.x.row(i).iter().zip(prototypes.row(kk).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                *best = best.min(d2);
            }
        }
        // Scores start at the label rate of the rows each prototype attracts.
        let mut pos = vec![1.0; params.k];
        let mut tot = vec![2.0; params.k];
        let mut m = vec![0.0; params.k];
        for i in 0..rows.y.len() {
            memberships(rows.x.row(i).as_slice().expect("standard layout"), &prototypes, &mut m);
            for kk in 0..params.k {
                pos[kk] += rows.mult[i] * m[kk] * f64::from(rows.y[i]);
                tot[kk] += rows.mult[i] * m[kk];
            }
        }
        let mut scores: Vec<f64> = pos.iter().zip(&tot).map(|(p, t)| (p / t).clamp(0.05, 0.95)).collect();

        let (mut losses, mut gv, mut gu) = evaluate(&rows, &prototypes, &scores, params, true);
        if !losses.total.is_finite() {
            return Err(Error::Diverged { iteration: 0, step: 0.0 });
        }
        let mut trace = vec![losses.total];
        let mut step = 1.0;
        let mut iterations = 0;
        let mut stalled = 0;
        while iterations < params.max_iter {
            iterations += 1;
            if gv.iter().chain(&gu).any(|g| !g.is_finite()) {
                return Err(Error::Diverged { iteration: iterations, step });
            }
            let mut accepted = None;
            for _ in 0..50 {
                let cand_v = &prototypes - &(&gv * step);
                let cand_u: Vec<f64> = scores
                    .iter()
                    .zip(&gu)
                    .map(|(u, g)| (u - step * g).clamp(SCORE_EPS, 1.0 - SCORE_EPS))
                    .collect();
                let (cand, _, _) = evaluate(&rows, &cand_v, &cand_u, params, false);
                if cand.total.is_finite() && cand.total < losses.total {
                    accepted = Some((cand_v, cand_u, cand.total));
                    break;
                }
                step *= 0.5;
            }
            let Some((v, u, total)) = accepted else { break };
            let improvement = (losses.total - total) / losses.total.abs().max(1.0);
            prototypes = v;
            scores = u;
            let (l, g_v, g_u) = evaluate(&rows, &prototypes, &scores, params, true);
            if !l.total.is_finite() {
                return Err(Error::Diverged { iteration: iterations, step });
            }
            losses = l;
            gv = g_v;
            gu = g_u;
            trace.push(losses.total);
            step *= 1.5;
            stalled = if improvement < params.tol { stalled + 1 } else { 0 };
            if stalled >= params.patience {
                break;
            }
        }

        Ok(Self {
            prototypes,
            scores,
            params: params.clone(),
            mean,
            scale,
            loss_trace: trace,
            final_loss: losses,
            iterations,
        })
    }

    fn check_width(&self, ds: &TabularDataset) -> Result<()> {
        if ds.n_features() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: ds.n_features(),
            });
        }
        Ok(())
    }

    /// Reconstructed features (original scale) and prototype label scores.
    pub fn represent(&self, x: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
        let xs = standardize(x, &self.mean, &self.scale);
        let (n, d) = xs.dim();
        let k = self.prototypes.nrows();
        let mut out = Array2::<f64>::zeros((n, d));
        let mut yhat = Vec::with_capacity(n);
        let mut m = vec![0.0; k];
        for i in 0..n {
            let row = xs.row(i);
            memberships(row.as_slice().expect("standard layout"), &self.prototypes, &mut m);
            let mut score = 0.0;
            for (kk, &mk) in m.iter().enumerate() {
                score += mk * self.scores[kk];
                for j in 0..d {
                    out[[i, j]] += mk * self.prototypes[[kk, j]];
                }
            }
            for j in 0..d {
                out[[i, j]] = out[[i, j]] * self.scale[j] + self.mean[j];
            }
            yhat.push(score);
        }
        (out, yhat)
    }

    fn reconstructed_schema(schema: &[Column]) -> Vec<Column> {
        schema
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                kind: EncodedKind::Continuous,
            })
            .collect()
    }

    /// Replaces features by their reconstruction and labels by the
    /// thresholded prototype score. Weights and groups are kept.
    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        self.check_width(ds)?;
        let (x, scores) = self.represent(ds.x());
        let labels = scores.iter().map(|&p| u8::from(p >= self.params.threshold)).collect();
        TabularDataset::new(
            x,
            labels,
            ds.s().to_vec(),
            ds.w().to_vec(),
            Self::reconstructed_schema(ds.schema()),
        )
    }

    /// Reconstructs features only, keeping the true labels (test-time use).
    pub fn transform_features(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        self.check_width(ds)?;
        let (x, _) = self.represent(ds.x());
        ds.with_features(x, Self::reconstructed_schema(ds.schema()))
    }

    /// [`transform`](Self::transform) plus the check that both labels survive.
    pub fn transform_training(&self, train: &TabularDataset) -> Result<TabularDataset> {
        let out = self.transform(train)?;
        let ones = out.y().iter().filter(|&&v| v == 1).count();
        if !out.is_empty() && (ones == 0 || ones == out.n_rows()) {
            return Err(Error::DegenerateLabels {
                label: u8::from(ones > 0),
            });
        }
        Ok(out)
    }
}

pub fn lfr_fit(train: &TabularDataset, params: &LfrParams, seed: u64) -> Result<LfrModel> {
    LfrModel::fit(train, params, seed)
}

pub fn lfr_transform(model: &LfrModel, ds: &TabularDataset) -> Result<TabularDataset> {
    model.transform(ds)
}
