//! Optimized probabilistic pre-processing over a discrete `(x, y)` domain.
//!
//! For each group `s` and each observed source cell `(x, y)` a row of `T`
//! gives a distribution over target cells. The fitted `T` minimizes the
//! group-weighted total-variation distance between the empirical and the
//! transformed distribution, subject to parity of positive rates, a per-row
//! expected distortion cap and row-simplex feasibility.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{EncodedKind, TabularDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Constraint slack accepted when certifying a candidate `T`.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpParams {
    /// Bound on `|P(y^=1|s) / P(y^=1) - 1|` for both groups.
    pub epsilon: f64,
    /// Distortion of a label flip.
    pub label_flip: f64,
    /// Distortion weight of the Hamming distance over feature cells,
    /// normalized by the number of features.
    pub feature_hamming: f64,
    /// Cap on the expected distortion of every source row.
    pub cap: f64,
    pub max_cells: usize,
    pub iterations: usize,
    pub step: f64,
    /// Smoothing width of the total-variation terms during descent.
    pub smoothing: f64,
}

impl Default for OpParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            label_flip: 1.0,
            feature_hamming: 1.0,
            cap: 0.5,
            max_cells: 10_000,
            iterations: 600,
            step: 0.05,
            smoothing: 1e-4,
        }
    }
}

impl OpParams {
    fn validate(&self) -> Result<()> {
        let vals = [self.epsilon, self.label_flip, self.feature_hamming, self.cap, self.step, self.smoothing];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("OP parameters must be finite and nonnegative".into()));
        }
        if self.step == 0.0 || self.smoothing == 0.0 {
            return Err(Error::InvalidParameter("OP step and smoothing must be positive".into()));
        }
        Ok(())
    }
}

/// Distribution over target cells for one observed `(group, source cell)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpRow {
    pub group: u8,
    pub cell: usize,
    pub probs: Vec<f64>,
}

/// Certificate of a fitted transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpReport {
    pub objective: f64,
    pub identity_objective: f64,
    pub identity_feasible: bool,
    pub original_rate: [f64; 2],
    pub rate: [f64; 2],
    pub overall_rate: f64,
    /// `|P_s / P - 1|` per group.
    pub discrimination: [f64; 2],
    pub max_distortion: f64,
    pub max_row_error: f64,
    /// Which candidate was kept: `identity`, `descent` or `label_flip`.
    pub selected: String,
    /// Best feasible objective reached by projected gradient (after repair);
    /// absent when the identity was already feasible.
    pub descent_objective: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpModel {
    /// Dataset columns forming the cell key (the protected column is excluded).
    pub feature_columns: Vec<usize>,
    pub feature_names: Vec<String>,
    pub cardinalities: Vec<usize>,
    /// Number of cells: product of cardinalities times two labels.
    pub domain_size: usize,
    pub group_share: [f64; 2],
    pub rows: Vec<OpRow>,
    pub params: OpParams,
    pub report: OpReport,
}

impl OpModel {
    /// Feature categories and label of a cell.
    pub fn decode(&self, cell: usize) -> (Vec<usize>, u8) {
        decode(&self.cardinalities, cell)
    }

    pub fn row(&self, group: u8, cell: usize) -> Option<&OpRow> {
        self.rows
            .binary_search_by(|r| (r.group, r.cell).cmp(&(group, cell)))
            .ok()
            .map(|i| &self.rows[i])
    }
}

fn decode(cards: &[usize], mut cell: usize) -> (Vec<usize>, u8) {
    let y = (cell % 2) as u8;
    cell /= 2;
    let mut x = vec![0; cards.len()];
    for j in (0..cards.len()).rev() {
        x[j] = cell % cards[j];
        cell /= cards[j];
    }
    (x, y)
}

struct Layout {
    columns: Vec<usize>,
    cards: Vec<usize>,
    size: usize,
}

fn layout(ds: &TabularDataset, limit: usize) -> Result<Layout> {
    let mut columns = Vec::new();
    let mut cards = Vec::new();
    let mut size: usize = 2;
    for (j, col) in ds.schema().iter().enumerate() {
        if matches!(col.kind, EncodedKind::Protected) {
            continue;
        }
        let card = col.kind.cardinality().ok_or_else(|| {
            Error::InvalidDataset(format!("OP needs discretized features; column {} is continuous", col.name))
        })?;
        columns.push(j);
        cards.push(card);
        size = size.saturating_mul(card.max(1));
    }
    if size > limit {
        return Err(Error::DomainTooLarge { cells: size, limit });
    }
    Ok(Layout { columns, cards, size })
}

fn cell_of(ds: &TabularDataset, lay: &Layout, i: usize) -> Option<usize> {
    let row = ds.row(i);
    let mut cell = 0usize;
    for (&j, &card) in lay.columns.iter().zip(&lay.cards) {
        let v = row[j];
        if v < 0.0 || v.fract() != 0.0 || v as usize >= card {
            return None;
        }
        cell = cell * card + v as usize;
    }
    Some(cell * 2 + ds.y()[i] as usize)
}

/// Euclidean projection onto the probability simplex (Michelot's
/// algorithm: the threshold only grows, so each pass shrinks the support).
pub fn project_simplex(z: &[f64]) -> Vec<f64> {
    let mut tau = (z.iter().sum::<f64>() - 1.0) / z.len() as f64;
    let mut support = z.len();
    loop {
        let (mut sum, mut count) = (0.0, 0usize);
        for &v in z {
            if v > tau {
                sum += v;
                count += 1;
            }
        }
        if count >= support || count == 0 {
            break;
        }
        let next = (sum - 1.0) / count as f64;
        if next <= tau {
            break;
        }
        support = count;
        tau = next;
    }
    z.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Projection onto `{r in simplex : delta . r <= cap}`. The distortion of
/// the shifted projection is monotone and piecewise linear in the multiplier,
/// so an Illinois (regula falsi) search finds it in a handful of steps.
/// Requires some `delta_b <= cap`.
fn project_capped(z: &[f64], delta: &[f64], cap: f64) -> Vec<f64> {
    let dot = |r: &[f64]| r.iter().zip(delta).map(|(a, b)| a * b).sum::<f64>();
    let r = project_simplex(z);
    let f_lo = dot(&r) - cap;
    if f_lo <= 0.0 {
        return r;
    }
    let shifted = |nu: f64| project_simplex(&z.iter().zip(delta).map(|(a, d)| a - nu * d).collect::<Vec<_>>());
    let (mut lo, mut f_lo) = (0.0, f_lo);
    let mut hi = 1.0;
    let mut best = shifted(hi);
    let mut f_hi = dot(&best) - cap;
    while f_hi > 0.0 && hi < 1e12 {
        (lo, f_lo) = (hi, f_hi);
        hi *= 2.0;
        best = shifted(hi);
        f_hi = dot(&best) - cap;
    }
    let mut gap = f_hi;
    let mut side = 0i8;
    for _ in 0..100 {
        if gap >= -1e-13 || hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
        let r = shifted(mid);
        let f = dot(&r) - cap;
        if f > 0.0 {
            (lo, f_lo) = (mid, f);
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            (hi, f_hi, gap, best) = (mid, f, f, r);
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    best
}

struct Problem {
    cards: Vec<usize>,
    size: usize,
    /// Observed `(group, cell, mass within group)` sorted by `(group, cell)`.
    sources: Vec<(u8, usize, f64)>,
    p: [Vec<f64>; 2],
    pi: [f64; 2],
    base: [f64; 2],
    /// Distortion row of each source.
    delta: Vec<Vec<f64>>,
    params: OpParams,
}

struct Eval {
    objective: f64,
    rate: [f64; 2],
    overall: f64,
    /// `sign * (P_s - P) - eps * P` for `(s, sign)` in `[(0,+),(0,-),(1,+),(1,-)]`.
    g: [f64; 4],
}

impl Problem {
    fn distortion(&self, a: usize, b: usize) -> f64 {
        let (xa, ya) = decode(&self.cards, a);
        let (xb, yb) = decode(&self.cards, b);
        let mut d = if ya != yb { self.params.label_flip } else { 0.0 };
        if !xa.is_empty() {
            let ham = xa.iter().zip(&xb).filter(|(u, v)| u != v).count();
            d += self.params.feature_hamming * ham as f64 / xa.len() as f64;
        }
        d
    }

    fn transformed(&self, t: &[Vec<f64>]) -> [Vec<f64>; 2] {
        let mut q = [vec![0.0; self.size], vec![0.0; self.size]];
        for ((g, _, mass), row) in self.sources.iter().zip(t) {
            for (qb, tb) in q[*g as usize].iter_mut().zip(row) {
                *qb += mass * tb;
            }
        }
        q
    }

    fn constraints(&self, rate: [f64; 2]) -> (f64, [f64; 4]) {
        let overall = self.pi[0] * rate[0] + self.pi[1] * rate[1];
        let eps = self.params.epsilon;
        let mut g = [0.0; 4];
        for s in 0..2 {
            g[2 * s] = (rate[s] - overall) - eps * overall;
            g[2 * s + 1] = -(rate[s] - overall) - eps * overall;
        }
        (overall, g)
    }

    fn evaluate(&self, t: &[Vec<f64>]) -> Eval {
        let q = self.transformed(t);
        let mut objective = 0.0;
        let mut rate = [0.0; 2];
        for s in 0..2 {
            let tv: f64 = q[s].iter().zip(&self.p[s]).map(|(a, b)| (a - b).abs()).sum::<f64>() * 0.5;
            objective += self.pi[s] * tv;
            rate[s] = q[s].iter().skip(1).step_by(2).sum();
        }
        let (overall, g) = self.constraints(rate);
        Eval { objective, rate, overall, g }
    }

    fn feasible(&self, e: &Eval) -> bool {
        e.g.iter().all(|&v| v <= FEAS_TOL)
    }

    fn identity(&self) -> Vec<Vec<f64>> {
        self.sources
            .iter()
            .map(|&(_, a, _)| {
                let mut r = vec![0.0; self.size];
                r[a] = 1.0;
                r
            })
            .collect()
    }

    /// Cheapest label-only transformation meeting the parity constraints.
    /// Each row may flip at most `min(1, cap / delta_flip)` of its mass,
    /// which bounds the reachable positive rate of each group.
    fn label_flip_point(&self) -> Result<Vec<Vec<f64>>> {
        let flip_cost: Vec<f64> = self.sources.iter().map(|&(_, a, _)| self.distortion(a, a ^ 1)).collect();
        let frac: Vec<f64> = flip_cost
            .iter()
            .map(|&d| if d <= self.params.cap { 1.0 } else { self.params.cap / d })
            .collect();
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        for (&(g, a, mass), &f) in self.sources.iter().zip(&frac) {
            let s = g as usize;
            if a % 2 == 1 {
                lo[s] += mass * (1.0 - f);
                hi[s] += mass;
            } else {
                hi[s] += mass * f;
            }
        }
        let target = self.best_rates(lo, hi).ok_or_else(|| Error::Infeasible {
            binding: format!(
                "discrimination bound epsilon = {} unreachable: distortion cap c = {} limits positive rates to [{:.4}, {:.4}] (s=0) and [{:.4}, {:.4}] (s=1)",
                self.params.epsilon, self.params.cap, lo[0], hi[0], lo[1], hi[1]
            ),
        })?;
        let mut t = self.identity();
        for (((g, a, _), &f), row) in self.sources.iter().zip(&frac).zip(t.iter_mut()) {
            let s = *g as usize;
            let positive = a % 2 == 1;
            let alpha = if target[s] < self.base[s] && positive && self.base[s] > lo[s] {
                (self.base[s] - target[s]) / (self.base[s] - lo[s])
            } else if target[s] > self.base[s] && !positive && hi[s] > self.base[s] {
                (target[s] - self.base[s]) / (hi[s] - self.base[s])
            } else {
                0.0
            };
            let moved = (alpha.clamp(0.0, 1.0) * f).min(1.0);
            row[*a] = 1.0 - moved;
            row[a ^ 1] = moved;
        }
        Ok(t)
    }

    /// Minimizes `sum_s pi_s |r_s - base_s|` over the box `[lo, hi]` subject to
    /// the parity constraints, by enumerating vertices of the line arrangement.
    fn best_rates(&self, lo: [f64; 2], hi: [f64; 2]) -> Option<[f64; 2]> {
        let (pi, eps) = (self.pi, self.params.epsilon);
        // Lines a*r0 + b*r1 = c.
        let mut lines: Vec<(f64, f64, f64)> = vec![
            (1.0, 0.0, lo[0]),
            (1.0, 0.0, hi[0]),
            (0.0, 1.0, lo[1]),
            (0.0, 1.0, hi[1]),
            (1.0, 0.0, self.base[0]),
            (0.0, 1.0, self.base[1]),
            (1.0, -1.0, 0.0),
        ];
        for s in 0..2 {
            for sign in [1.0, -1.0] {
                // sign*(r_s - P) - eps*P = 0 with P = pi0 r0 + pi1 r1.
                let mut coef = [-(sign + eps) * pi[0], -(sign + eps) * pi[1]];
                coef[s] += sign;
                lines.push((coef[0], coef[1], 0.0));
            }
        }
        let mut best: Option<([f64; 2], f64)> = None;
        let mut consider = |r: [f64; 2]| {
            let inside = (0..2).all(|s| r[s] >= lo[s] - 1e-12 && r[s] <= hi[s] + 1e-12);
            if !inside {
                return;
            }
            let r = [r[0].clamp(lo[0], hi[0]), r[1].clamp(lo[1], hi[1])];
            let (_, g) = self.constraints(r);
            if g.iter().any(|&v| v > FEAS_TOL * 0.1) {
                return;
            }
            let cost = pi[0] * (r[0] - self.base[0]).abs() + pi[1] * (r[1] - self.base[1]).abs();
            if best.map_or(true, |(_, c)| cost < c - 1e-15) {
                best = Some((r, cost));
            }
        };
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a1, b1, c1) = lines[i];
                let (a2, b2, c2) = lines[j];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-14 {
                    continue;
                }
                consider([(c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det]);
            }
        }
        best.map(|(r, _)| r)
    }

    /// Projected gradient on the smoothed objective with an augmented
    /// Lagrangian for the parity constraints. Returns periodic checkpoints.
    fn descend(&self) -> Vec<Vec<Vec<f64>>> {
        let prm = &self.params;
        let mut t = self.identity();
        let mut lambda = [0.0; 4];
        let mut rho = 10.0;
        let mut last_violation = f64::INFINITY;
        let mut checkpoints = Vec::new();
        let block = 50;
        for it in 1..=prm.iterations {
            let e = self.evaluate(&t);
            let q = self.transformed(&t);
            // Derivative of the AL penalty with respect to each group's rate.
            let mut d_rate = [0.0; 2];
            for (j, &gj) in e.g.iter().enumerate() {
                let m = (gj + lambda[j] / rho).max(0.0) * rho;
                if m == 0.0 {
                    continue;
                }
                let (s, sign) = (j / 2, if j % 2 == 0 { 1.0 } else { -1.0 });
                for sp in 0..2 {
                    let ds = if sp == s { 1.0 } else { 0.0 };
                    d_rate[sp] += m * (sign * (ds - self.pi[sp]) - prm.epsilon * self.pi[sp]);
                }
            }
            let mut dir = [vec![0.0; self.size], vec![0.0; self.size]];
            for s in 0..2 {
                for b in 0..self.size {
                    let r = q[s][b] - self.p[s][b];
                    dir[s][b] = self.pi[s] * 0.5 * r / (r * r + prm.smoothing * prm.smoothing).sqrt()
                        + if b % 2 == 1 { d_rate[s] } else { 0.0 };
                }
            }
            let step = prm.step / (1.0 + it as f64 / 200.0).sqrt();
            for ((&(g, _, _), row), delta) in self.sources.iter().zip(t.iter_mut()).zip(&self.delta) {
                let z: Vec<f64> = row.iter().zip(&dir[g as usize]).map(|(a, d)| a - step * d).collect();
                *row = project_capped(&z, delta, prm.cap);
            }
            if it % block == 0 || it == prm.iterations {
                let e = self.evaluate(&t);
                let violation = e.g.iter().fold(0.0f64, |m, &v| m.max(v));
                for j in 0..4 {
                    lambda[j] = (lambda[j] + rho * e.g[j]).max(0.0);
                }
                if violation > 0.5 * last_violation {
                    rho = (rho * 2.0).min(1e6);
                }
                last_violation = violation;
                checkpoints.push(t.clone());
            }
        }
        checkpoints
    }

    /// Smallest convex step towards a feasible point that restores the
    /// parity constraints (they are linear in `T`).
    fn repair(&self, t: &[Vec<f64>], feasible: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let e0 = self.evaluate(t);
        let e1 = self.evaluate(feasible);
        let mut theta: f64 = 0.0;
        for j in 0..4 {
            if e0.g[j] > 0.0 {
                let denom = e0.g[j] - e1.g[j];
                theta = theta.max(if denom > 0.0 { e0.g[j] / denom } else { 1.0 });
            }
        }
        let theta = theta.min(1.0);
        if theta == 0.0 {
            return t.to_vec();
        }
        t.iter()
            .zip(feasible)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (1.0 - theta) * u + theta * v).collect())
            .collect()
    }
}

pub fn op_fit(train: &TabularDataset, params: &OpParams) -> Result<OpModel> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidDataset("OP needs a non-empty training set".into()));
    }
    let lay = layout(train, params.max_cells)?;
    let mut mass = [vec![0.0; lay.size], vec![0.0; lay.size]];
    for i in 0..train.n_rows() {
        let cell = cell_of(train, &lay, i).ok_or(Error::UnseenCell { row: i })?;
        mass[train.s()[i] as usize][cell] += train.w()[i];
    }
    let totals = [mass[0].iter().sum::<f64>(), mass[1].iter().sum::<f64>()];
    for s in 0..2 {
        if totals[s] <= 0.0 {
            return Err(Error::MissingGroup(s as u8));
        }
    }
    let pi = [totals[0] / (totals[0] + totals[1]), totals[1] / (totals[0] + totals[1])];
    let p = [
        mass[0].iter().map(|m| m / totals[0]).collect::<Vec<_>>(),
        mass[1].iter().map(|m| m / totals[1]).collect::<Vec<_>>(),
    ];
    let mut sources = Vec::new();
    for s in 0..2u8 {
        for (cell, &m) in p[s as usize].iter().enumerate() {
            if m > 0.0 {
                sources.push((s, cell, m));
            }
        }
    }
    let base = [
        p[0].iter().skip(1).step_by(2).sum::<f64>(),
        p[1].iter().skip(1).step_by(2).sum::<f64>(),
    ];
    let mut prob = Problem {
        cards: lay.cards.clone(),
        size: lay.size,
        sources,
        p,
        pi,
        base,
        delta: Vec::new(),
        params: params.clone(),
    };
    prob.delta = prob
        .sources
        .iter()
        .map(|&(_, a, _)| (0..prob.size).map(|b| prob.distortion(a, b)).collect())
        .collect();

    let identity = prob.identity();
    let id_eval = prob.evaluate(&identity);
    let identity_feasible = prob.feasible(&id_eval);

    let (t, selected, descent_objective, iterations) = if identity_feasible {
        (identity, "identity", None, 0)
    } else {
        let anchor = prob.label_flip_point()?;
        let mut descent: Option<(f64, Vec<Vec<f64>>)> = None;
        for cp in prob.descend() {
            let fixed = prob.repair(&cp, &anchor);
            let e = prob.evaluate(&fixed);
            if prob.feasible(&e) && descent.as_ref().is_none_or(|d| e.objective < d.0) {
                descent = Some((e.objective, fixed));
            }
        }
        let flip = prob.evaluate(&anchor).objective;
        let descent_objective = descent.as_ref().map(|d| d.0);
        match descent {
            Some((obj, t)) if obj < flip => (t, "descent", descent_objective, params.iterations),
            _ => (anchor, "label_flip", descent_objective, params.iterations),
        }
    };

    let e = prob.evaluate(&t);
    if !prob.feasible(&e) {
        return Err(Error::Infeasible {
            binding: "discrimination bound not met after repair".into(),
        });
    }
    let mut max_distortion = 0.0f64;
    let mut max_row_error = 0.0f64;
    for (row, delta) in t.iter().zip(&prob.delta) {
        let d: f64 = row.iter().zip(delta).map(|(a, b)| a * b).sum();
        max_distortion = max_distortion.max(d);
        max_row_error = max_row_error.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    let discrimination = if e.overall > 0.0 {
        [(e.rate[0] / e.overall - 1.0).abs(), (e.rate[1] / e.overall - 1.0).abs()]
    } else {
        [0.0, 0.0]
    };
    let report = OpReport {
        objective: e.objective,
        identity_objective: id_eval.objective,
        identity_feasible,
        original_rate: prob.base,
        rate: e.rate,
        overall_rate: e.overall,
        discrimination,
        max_distortion,
        max_row_error,
        selected: selected.to_string(),
        descent_objective,
        iterations,
    };
    let rows = prob
        .sources
        .iter()
        .zip(t)
        .map(|(&(group, cell, _), probs)| OpRow { group, cell, probs })
        .collect();
    Ok(OpModel {
        feature_columns: lay.columns.clone(),
        feature_names: lay.columns.iter().map(|&j| train.schema()[j].name.clone()).collect(),
        cardinalities: lay.cards,
        domain_size: lay.size,
        group_share: pi,
        rows,
        params: params.clone(),
        report,
    })
}

/// Samples each row's target cell from its `T` row using a stream seeded by
/// `(seed, row index)`. Cells never observed for a group are left unchanged.
pub fn op_transform(model: &OpModel, ds: &TabularDataset, seed: u64) -> Result<TabularDataset> {
    let lay = Layout {
        columns: model.feature_columns.clone(),
        cards: model.cardinalities.clone(),
        size: model.domain_size,
    };
    if lay.columns.iter().any(|&j| j >= ds.n_features()) {
        return Err(Error::DimensionMismatch {
            expected: lay.columns.iter().max().map_or(0, |m| m + 1),
            got: ds.n_features(),
        });
    }
    let mut x = ds.x().to_owned();
    let mut y = ds.y().to_vec();
    for i in 0..ds.n_rows() {
        let cell = cell_of(ds, &lay, i).ok_or(Error::UnseenCell { row: i })?;
        let Some(row) = model.row(ds.s()[i], cell) else { continue };
        let mut rng = rng_from(derive_seed(seed, &format!("op-row-{i}")));
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut target = cell;
        for (b, &pb) in row.probs.iter().enumerate() {
            if pb <= 0.0 {
                continue;
            }
            target = b;
            acc += pb;
            if u < acc {
                break;
            }
        }
        let (cats, label) = model.decode(target);
        for (&j, &c) in lay.columns.iter().zip(&cats) {
            x[[i, j]] = c as f64;
        }
        y[i] = label;
    }
    TabularDataset::new(x, y, ds.s().to_vec(), ds.w().to_vec(), ds.schema().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Column;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn categorical(rows: &[(usize, u8, u8)], card: usize) -> TabularDataset {
        let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| if j == 0 { rows[i].0 as f64 } else { f64::from(rows[i].2) });
        let schema = vec![
            Column {
                name: "a".into(),
                kind: EncodedKind::Categorical {
                    categories: (0..card).map(|c| c.to_string()).collect(),
                },
            },
            Column { name: "sex".into(), kind: EncodedKind::Protected },
        ];
        TabularDataset::unweighted(
            x,
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            schema,
        )
        .unwrap()
    }

    /// Rows `(feature, y, s)` repeated with the given counts.
    fn counts(spec: &[((usize, u8, u8), usize)], card: usize) -> TabularDataset {
        let rows: Vec<_> = spec.iter().flat_map(|&(r, c)| std::iter::repeat(r).take(c)).collect();
        categorical(&rows, card)
    }

    #[test]
    fn simplex_projection() {
        let r = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(r.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let r = project_capped(&[0.0, 1.0], &[0.0, 1.0], 0.25);
        assert!((r[1] - 0.25).abs() < 1e-9 && (r[0] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn fair_data_keeps_identity() {
        let ds = counts(&[((0, 1, 1), 3), ((0, 0, 1), 3), ((1, 1, 0), 2), ((1, 0, 0), 2)], 2);
        let model = op_fit(&ds, &OpParams::default()).unwrap();
        assert_eq!(model.report.objective, 0.0);
        assert_eq!(model.report.selected, "identity");
        assert_eq!(op_transform(&model, &ds, 3).unwrap(), ds);
    }

    #[test]
    fn two_cell_program_matches_grid_oracle() {
        // Single-category feature: the domain is {(0,0), (0,1)}.
        let ds = counts(&[((0, 1, 1), 7), ((0, 0, 1), 3), ((0, 1, 0), 2), ((0, 0, 0), 8)], 1);
        let params = OpParams {
            epsilon: 0.0,
            label_flip: 0.0,
            feature_hamming: 0.0,
            ..OpParams::default()
        };
        let model = op_fit(&ds, &params).unwrap();
        assert_eq!(model.domain_size, 2);
        let rates = model.report.rate;
        assert!((rates[0] - rates[1]).abs() < 1e-4, "{rates:?}");

        // Brute force: with equal rates r, the cost is pi1|r-0.7| + pi0|r-0.2|.
        let best = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|r| 0.5 * (r - 0.7f64).abs() + 0.5 * (r - 0.2f64).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((model.report.objective - best).abs() < 1e-4);
        assert!((model.report.descent_objective.unwrap() - best).abs() < 1e-3);
    }

    #[test]
    fn zero_budget_is_infeasible() {
        let ds = counts(&[((0, 1, 1), 8), ((0, 0, 1), 2), ((1, 1, 0), 2), ((1, 0, 0), 8)], 2);
        let params = OpParams { epsilon: 0.0, cap: 0.0, ..OpParams::default() };
        assert!(matches!(op_fit(&ds, &params), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn domain_limit_enforced() {
        let ds = counts(&[((0, 1, 1), 1), ((1, 0, 0), 1)], 60);
        let params = OpParams { max_cells: 100, ..OpParams::default() };
        assert!(matches!(op_fit(&ds, &params), Err(Error::DomainTooLarge { cells: 120, limit: 100 })));
    }

    #[test]
    fn point_mass_row_maps_deterministically() {
        let ds = counts(&[((0, 1, 1), 8), ((1, 0, 1), 2), ((1, 1, 0), 2), ((0, 0, 0), 8)], 2);
        let mut model = op_fit(&ds, &OpParams::default()).unwrap();
        let cell = 0 * 2 + 1;
        let idx = model.rows.iter().position(|r| r.group == 1 && r.cell == cell).unwrap();
        let mut probs = vec![0.0; model.domain_size];
        probs[2] = 1.0; // feature 1, label 0
        model.rows[idx].probs = probs;
        for seed in 0..5 {
            let out = op_transform(&model, &ds, seed).unwrap();
            assert_eq!(out.x()[[0, 0]], 1.0);
            assert_eq!(out.y()[0], 0);
        }
        assert_eq!(op_transform(&model, &ds, 9).unwrap(), op_transform(&model, &ds, 9).unwrap());
    }

    #[test]
    fn unseen_cell_rejected() {
        let ds = counts(&[((0, 1, 1), 5), ((1, 0, 0), 5), ((1, 1, 0), 1), ((0, 0, 1), 1)], 2);
        let model = op_fit(&ds, &OpParams::default()).unwrap();
        let mut x = ds.x().to_owned();
        x[[0, 0]] = 5.0;
        let bad = ds.with_features(x, ds.schema().to_vec()).unwrap();
        assert!(matches!(op_transform(&model, &bad, 0), Err(Error::UnseenCell { row: 0 })));
    }

    fn sorted_projection(z: &[f64]) -> Vec<f64> {
        let mut v = z.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        let (mut cum, mut tau) = (0.0, 0.0);
        for (i, &x) in v.iter().enumerate() {
            cum += x;
            let t = (cum - 1.0) / (i + 1) as f64;
            if x > t {
                tau = t;
            }
        }
        z.iter().map(|x| (x - tau).max(0.0)).collect()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    proptest! {
        #[test]
        fn simplex_matches_sorting_oracle(z in proptest::collection::vec(-3.0f64..3.0, 1..40)) {
            let r = project_simplex(&z);
            for (a, b) in r.iter().zip(sorted_projection(&z)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn capped_projection_is_feasible_and_closest(
            z in proptest::collection::vec(-1.0f64..2.0, 2..20),
            mix in proptest::collection::vec(0.0f64..1.0, 20),
            cap in 0.05f64..1.0,
        ) {
            let n = z.len();
            let delta: Vec<f64> = (0..n).map(|b| if b == 0 { 0.0 } else { (b % 4) as f64 * 0.5 }).collect();
            let r = project_capped(&z, &delta, cap);
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(r.iter().all(|&v| v >= 0.0));
            let d: f64 = r.iter().zip(&delta).map(|(a, b)| a * b).sum();
            prop_assert!(d <= cap + 1e-9);
            // Any feasible point: a simplex point pulled towards the zero-cost vertex.
            let raw: Vec<f64> = mix[..n].iter().map(|m| m + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let dp: f64 = p.iter().zip(&delta).map(|(a, b)| a * b).sum();
            if dp > cap {
                let t = cap / dp;
                for (b, v) in p.iter_mut().enumerate() {
                    *v = t * *v + if b == 0 { 1.0 - t } else { 0.0 };
                }
            }
            prop_assert!(dist(&r, &z) <= dist(&p, &z) + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fitted_table_is_certified(c in proptest::collection::vec(1usize..12, 8), eps in 0.0f64..0.3) {
            let ds = counts(&[
                ((0, 1, 1), c[0]), ((0, 0, 1), c[1]), ((1, 1, 1), c[2]), ((1, 0, 1), c[3]),
                ((0, 1, 0), c[4]), ((0, 0, 0), c[5]), ((1, 1, 0), c[6]), ((1, 0, 0), c[7]),
            ], 2);
            let params = OpParams { epsilon: eps, iterations: 100, ..OpParams::default() };
            let model = op_fit(&ds, &params).unwrap();
            for row in &model.rows {
                prop_assert!((row.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                prop_assert!(row.probs.iter().all(|&p| p >= 0.0));
            }
            let r = &model.report;
            prop_assert!(r.max_distortion <= params.cap + 1e-4);
            let p = r.overall_rate;
            for s in 0..2 {
                prop_assert!((r.rate[s] - p).abs() <= eps * p + 1e-4);
            }
            if r.identity_feasible {
                prop_assert!(r.objective <= r.identity_objective);
            }
        }
    }
}
