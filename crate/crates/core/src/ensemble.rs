//! Ensembles of pre-processed pipelines: majority vote, bagging (vote over
//! members trained on bootstrap resamples) and stacking.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, EncodedKind, TabularDataset};
use crate::error::{Error, Result};
use crate::models::{ClassifierSpec, LogisticConfig, LogisticModel, Prediction, DEFAULT_THRESHOLD};
use crate::pipeline::{FittedPipeline, FittedTransform};
use crate::preprocess::PreprocessorSpec;
use crate::rng::{derive_seed, rng_from};

pub const STACKING_FOLDS: usize = 5;

/// Penalty of the stacking meta model; small so the fitted weights follow
/// the member probabilities.
pub const META_L2: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Majority,
    Bagging,
    Stacking,
}

impl Combiner {
    pub fn name(&self) -> &'static str {
        match self {
            Combiner::Majority => "majority",
            Combiner::Bagging => "bagging",
            Combiner::Stacking => "stacking",
        }
    }
}

/// How bagging resamples each member's transformed training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// `n` draws with probability proportional to the row weights; drawn
    /// rows get unit weight.
    #[default]
    Weighted,
    /// Keep the original rows (degenerate resample).
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSpec {
    pub preprocessor: PreprocessorSpec,
    pub classifier: ClassifierSpec,
}

impl MemberSpec {
    pub fn new(preprocessor: PreprocessorSpec, classifier: ClassifierSpec) -> Self {
        Self { preprocessor, classifier }
    }

    pub fn name(&self) -> String {
        format!("{}+{}", self.preprocessor.id(), self.classifier.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<FittedPipeline>,
    pub combiner: Combiner,
    pub meta: Option<LogisticModel>,
    pub seed: u64,
}

/// Combined prediction plus the number of rows decided by the tie rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub prediction: Prediction,
    pub ties: usize,
}

/// Per-row modal vote. An exact tie is broken by the mean member
/// probability (`>= 0.5` predicts 1); the returned probability is that mean.
pub fn majority_vote(member_labels: &[Vec<u8>], member_probas: &[Vec<f64>]) -> Result<Vote> {
    if member_labels.len() < 2 || member_labels.len() != member_probas.len() {
        return Err(Error::LengthMismatch(format!(
            "need at least two members with labels and probabilities, got {} and {}",
            member_labels.len(),
            member_probas.len()
        )));
    }
    let n = member_labels[0].len();
    if member_labels.iter().any(|l| l.len() != n) || member_probas.iter().any(|p| p.len() != n) {
        return Err(Error::LengthMismatch("member outputs differ in length".into()));
    }
    let m = member_labels.len();
    let mut labels = Vec::with_capacity(n);
    let mut proba = Vec::with_capacity(n);
    let mut ties = 0;
    for i in 0..n {
        let ones = member_labels.iter().filter(|l| l[i] == 1).count();
        let mean = member_probas.iter().map(|p| p[i]).sum::<f64>() / m as f64;
        let label = if 2 * ones > m {
            1
        } else if 2 * ones < m {
            0
        } else {
            ties += 1;
            u8::from(mean >= DEFAULT_THRESHOLD)
        };
        labels.push(label);
        proba.push(mean);
    }
    Ok(Vote {
        prediction: Prediction { proba, labels },
        ties,
    })
}

fn member_error(index: usize, spec: &MemberSpec, source: Error) -> Error {
    Error::Member {
        index,
        name: spec.name(),
        source: Box::new(source),
    }
}

fn validate(members: &[MemberSpec]) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::InvalidParameter("an ensemble needs at least two members".into()));
    }
    if members.iter().any(|m| m.classifier != members[0].classifier) {
        return Err(Error::InvalidParameter("ensemble members must share one classifier spec".into()));
    }
    Ok(())
}

/// Weighted bootstrap of a transformed training set: `n` draws with
/// probability proportional to the row weights; drawn rows get unit weight.
pub fn bootstrap_resample(data: &TabularDataset, seed: u64) -> Result<TabularDataset> {
    let n = data.n_rows();
    let mut cum = Vec::with_capacity(n);
    let mut total = 0.0;
    for &w in data.w() {
        total += w;
        cum.push(total);
    }
    let mut rng = rng_from(seed);
    let idx: Vec<usize> = (0..n)
        .map(|_| {
            let u = rng.gen_range(0.0..total);
            cum.partition_point(|&c| c <= u).min(n - 1)
        })
        .collect();
    data.select(&idx).with_weights(vec![1.0; n])
}

fn meta_dataset(features: Array2<f64>, y: &[u8], s: &[u8]) -> Result<TabularDataset> {
    let schema = (0..features.ncols())
        .map(|j| Column {
            name: format!("member_{j}"),
            kind: EncodedKind::Continuous,
        })
        .collect();
    TabularDataset::unweighted(features, y.to_vec(), s.to_vec(), schema)
}

/// Out-of-fold member probabilities over `train` (`n x members`), from
/// `STACKING_FOLDS` seeded folds.
pub fn stacking_features(train: &TabularDataset, members: &[MemberSpec], seed: u64) -> Result<Array2<f64>> {
    let n = train.n_rows();
    if n < STACKING_FOLDS {
        return Err(Error::InvalidDataset(format!("stacking needs at least {STACKING_FOLDS} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from(derive_seed(seed, "stack-folds"));
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut out = Array2::<f64>::zeros((n, members.len()));
    for fold in 0..STACKING_FOLDS {
        let mut held: Vec<usize> = order.iter().copied().skip(fold).step_by(STACKING_FOLDS).collect();
        held.sort_unstable();
        let mut fit_idx: Vec<usize> = (0..n).filter(|i| held.binary_search(i).is_err()).collect();
        fit_idx.sort_unstable();
        let fit_part = train.select(&fit_idx);
        let held_part = train.select(&held);
        for (j, spec) in members.iter().enumerate() {
            let pipe = FittedPipeline::fit(&spec.preprocessor, &spec.classifier, &fit_part, seed)
                .map_err(|e| member_error(j, spec, e))?;
            let pred = pipe.predict(&held_part).map_err(|e| member_error(j, spec, e))?;
            for (&row, p) in held.iter().zip(pred.proba) {
                out[[row, j]] = p;
            }
        }
    }
    Ok(out)
}

pub fn ensemble_fit(train: &TabularDataset, members: &[MemberSpec], combiner: Combiner, seed: u64) -> Result<EnsembleModel> {
    ensemble_fit_with(train, members, combiner, seed, Bootstrap::Weighted)
}

/// Members share `seed` for their own fits, so a majority member equals the
/// single pipeline fitted with the same seed. Bagging draws member `i`'s
/// resample from `seed + i`.
pub fn ensemble_fit_with(
    train: &TabularDataset,
    members: &[MemberSpec],
    combiner: Combiner,
    seed: u64,
    bootstrap: Bootstrap,
) -> Result<EnsembleModel> {
    validate(members)?;
    let mut fitted = Vec::with_capacity(members.len());
    for (i, spec) in members.iter().enumerate() {
        let fit = || -> Result<FittedPipeline> {
            if combiner != Combiner::Bagging {
                return FittedPipeline::fit(&spec.preprocessor, &spec.classifier, train, seed);
            }
            let (transform, data) = FittedTransform::fit(&spec.preprocessor, train, seed)?;
            let data = match bootstrap {
                Bootstrap::Weighted => bootstrap_resample(&data, seed.wrapping_add(i as u64))?,
                Bootstrap::Identity => data,
            };
            let classifier = spec.classifier.fit(&data, derive_seed(seed, "model"))?;
            Ok(FittedPipeline {
                preprocessor: spec.preprocessor.clone(),
                transform,
                classifier,
            })
        };
        fitted.push(fit().map_err(|e| member_error(i, spec, e))?);
    }
    let meta = if combiner == Combiner::Stacking {
        let features = stacking_features(train, members, seed)?;
        let data = meta_dataset(features, train.y(), train.s())?;
        Some(LogisticModel::fit(&data, &LogisticConfig { l2: META_L2, ..LogisticConfig::default() })?)
    } else {
        None
    };
    Ok(EnsembleModel { members: fitted, combiner, meta, seed })
}

impl EnsembleModel {
    /// Ensemble over already fitted members (majority or bagging semantics
    /// at prediction time).
    pub fn from_members(members: Vec<FittedPipeline>, combiner: Combiner, seed: u64) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidParameter("an ensemble needs at least two members".into()));
        }
        if combiner == Combiner::Stacking {
            return Err(Error::InvalidParameter("stacking needs a fitted meta model".into()));
        }
        Ok(Self { members, combiner, meta: None, seed })
    }

    pub fn predict(&self, ds: &TabularDataset) -> Result<Prediction> {
        Ok(self.predict_vote(ds)?.prediction)
    }

    /// Prediction with the tie counter (always 0 for stacking).
    pub fn predict_vote(&self, ds: &TabularDataset) -> Result<Vote> {
        let mut labels = Vec::with_capacity(self.members.len());
        let mut probas = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let p = m.predict(ds)?;
            labels.push(p.labels);
            probas.push(p.proba);
        }
        match self.combiner {
            Combiner::Majority | Combiner::Bagging => majority_vote(&labels, &probas),
            Combiner::Stacking => {
                let meta = self
                    .meta
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("stacking ensemble has no meta model".into()))?;
                let x = Array2::from_shape_fn((ds.n_rows(), probas.len()), |(i, j)| probas[j][i]);
                Ok(Vote {
                    prediction: Prediction::from_proba(meta.predict_proba(&x)?, DEFAULT_THRESHOLD),
                    ties: 0,
                })
            }
        }
    }
}

pub fn ensemble_predict(model: &EnsembleModel, ds: &TabularDataset) -> Result<Prediction> {
    model.predict(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support;
    use crate::models::LogisticConfig;

    fn toy(n: usize) -> TabularDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        let s = (0..n).map(|i| (i % 2) as u8).collect();
        test_support::dataset(rows, y, s)
    }

    fn logistic() -> ClassifierSpec {
        ClassifierSpec::Logistic(LogisticConfig::default())
    }

    #[test]
    fn vote_examples() {
        let p = vec![vec![0.5]; 3];
        assert_eq!(majority_vote(&[vec![1], vec![1], vec![0]], &p).unwrap().prediction.labels, vec![1]);
        assert_eq!(majority_vote(&[vec![0], vec![0], vec![0]], &p).unwrap().prediction.labels, vec![0]);
        let v = majority_vote(&[vec![1], vec![0]], &[vec![0.9], vec![0.2]]).unwrap();
        assert_eq!(v.prediction.labels, vec![1]);
        assert_eq!(v.ties, 1);
        assert!((v.prediction.proba[0] - 0.55).abs() < 1e-12);
        assert!(majority_vote(&[vec![1], vec![0, 1]], &[vec![0.5], vec![0.5, 0.5]]).is_err());
        assert!(majority_vote(&[vec![1]], &[vec![0.5]]).is_err());
    }

    #[test]
    fn duplicate_members_match_single() {
        let ds = toy(40);
        let spec = MemberSpec::new(PreprocessorSpec::None, logistic());
        let model = ensemble_fit(&ds, &[spec.clone(), spec.clone()], Combiner::Majority, 4).unwrap();
        let single = FittedPipeline::fit(&spec.preprocessor, &spec.classifier, &ds, 4).unwrap();
        assert_eq!(model.predict(&ds).unwrap().labels, single.predict(&ds).unwrap().labels);
    }

    #[test]
    fn identity_bootstrap_is_majority() {
        let ds = toy(40);
        let members = [
            MemberSpec::new(PreprocessorSpec::None, logistic()),
            MemberSpec::new(PreprocessorSpec::Rw, logistic()),
        ];
        let bag = ensemble_fit_with(&ds, &members, Combiner::Bagging, 2, Bootstrap::Identity).unwrap();
        let maj = ensemble_fit(&ds, &members, Combiner::Majority, 2).unwrap();
        assert_eq!(bag.predict(&ds).unwrap(), maj.predict(&ds).unwrap());
    }

    #[test]
    fn stacking_meta_features_shape() {
        let ds = toy(10);
        let members = [
            MemberSpec::new(PreprocessorSpec::None, logistic()),
            MemberSpec::new(PreprocessorSpec::None, logistic()),
        ];
        let f = stacking_features(&ds, &members, 1).unwrap();
        assert_eq!(f.dim(), (10, 2));
        assert!(f.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn zero_meta_model_predicts_one() {
        let ds = toy(30);
        let members = [
            MemberSpec::new(PreprocessorSpec::None, logistic()),
            MemberSpec::new(PreprocessorSpec::Rw, logistic()),
        ];
        let mut model = ensemble_fit(&ds, &members, Combiner::Stacking, 0).unwrap();
        let meta = model.meta.as_mut().unwrap();
        meta.coefficients.iter_mut().for_each(|c| *c = 0.0);
        meta.intercept = 0.0;
        assert!(model.predict(&ds).unwrap().labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn mixed_classifiers_rejected() {
        let ds = toy(20);
        let members = [
            MemberSpec::new(PreprocessorSpec::None, logistic()),
            MemberSpec::new(PreprocessorSpec::None, ClassifierSpec::Forest(Default::default())),
        ];
        assert!(ensemble_fit(&ds, &members, Combiner::Majority, 0).is_err());
    }
}
