//! A pipeline is one pre-processor followed by one classifier. Training data
//! flows raw -> (discretize) -> pre-process -> one-hot -> classifier; test
//! data only goes through the feature mapping the classifier was trained on.

use serde::{Deserialize, Serialize};

use crate::dataset::{Discretizer, EncodedKind, OneHotEncoder, TabularDataset};
use crate::error::Result;
use crate::models::{ClassifierSpec, FittedClassifier, Prediction, DEFAULT_THRESHOLD};
use crate::preprocess::{
    lfr_fit, op_fit, op_transform, reweigh_fit, FittedPreprocessor, PreprocessorSpec,
};
use crate::rng::derive_seed;

/// Quantile bins per continuous column when OP needs a discrete domain.
pub const OP_BINS: usize = 4;

/// Everything needed to map raw test rows into the classifier's feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub preprocessor: FittedPreprocessor,
    pub discretizer: Option<Discretizer>,
    pub encoder: OneHotEncoder,
}

impl FittedTransform {
    /// Fits the pre-processor on `train` and returns the materialized,
    /// model-ready training set.
    pub fn fit(spec: &PreprocessorSpec, train: &TabularDataset, seed: u64) -> Result<(Self, TabularDataset)> {
        match spec {
            PreprocessorSpec::None => {
                let encoder = OneHotEncoder::fit(train.schema());
                let data = encoder.transform(train)?;
                Ok((Self { preprocessor: FittedPreprocessor::None, discretizer: None, encoder }, data))
            }
            PreprocessorSpec::Rw => {
                let model = reweigh_fit(train)?;
                let encoder = OneHotEncoder::fit(train.schema());
                let data = encoder.transform(&model.apply(train)?)?;
                Ok((Self { preprocessor: FittedPreprocessor::Rw(model), discretizer: None, encoder }, data))
            }
            PreprocessorSpec::Lfr(params) => {
                let encoder = OneHotEncoder::fit(train.schema());
                let encoded = encoder.transform(train)?;
                let model = lfr_fit(&encoded, params, derive_seed(seed, "lfr"))?;
                let data = model.transform_training(&encoded)?;
                Ok((Self { preprocessor: FittedPreprocessor::Lfr(model), discretizer: None, encoder }, data))
            }
            PreprocessorSpec::Op(params) => {
                let needs_bins = train.schema().iter().any(|c| matches!(c.kind, EncodedKind::Continuous));
                let discretizer = if needs_bins { Some(Discretizer::fit(train, OP_BINS)?) } else { None };
                let discrete = match &discretizer {
                    Some(d) => d.transform(train)?,
                    None => train.clone(),
                };
                let model = op_fit(&discrete, params)?;
                let transformed = op_transform(&model, &discrete, derive_seed(seed, "op-sample"))?;
                let encoder = OneHotEncoder::fit(discrete.schema());
                let data = encoder.transform(&transformed)?;
                Ok((Self { preprocessor: FittedPreprocessor::Op(model), discretizer, encoder }, data))
            }
        }
    }

    /// Test-time features. Labels, groups and weights are left as given;
    /// only LFR changes the feature values.
    pub fn features(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        let discrete = match &self.discretizer {
            Some(d) => d.transform(ds)?,
            None => ds.clone(),
        };
        let encoded = self.encoder.transform(&discrete)?;
        match &self.preprocessor {
            FittedPreprocessor::Lfr(model) => model.transform_features(&encoded),
            _ => Ok(encoded),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub preprocessor: PreprocessorSpec,
    pub transform: FittedTransform,
    pub classifier: FittedClassifier,
}

impl FittedPipeline {
    pub fn fit(
        preprocessor: &PreprocessorSpec,
        classifier: &ClassifierSpec,
        train: &TabularDataset,
        seed: u64,
    ) -> Result<Self> {
        let (transform, data) = FittedTransform::fit(preprocessor, train, seed)?;
        let classifier = classifier.fit(&data, derive_seed(seed, "model"))?;
        Ok(Self { preprocessor: preprocessor.clone(), transform, classifier })
    }

    pub fn predict(&self, ds: &TabularDataset) -> Result<Prediction> {
        let features = self.transform.features(ds)?;
        self.classifier.predict(features.x(), DEFAULT_THRESHOLD)
    }
}
