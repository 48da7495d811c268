//! Bundled dataset specs for the German credit, COMPAS and Adult census
//! benchmarks, matching the CSVs produced by `scripts/prepare_datasets.py`.
//!
//! Feature lists are the reduced, fully categorical sets commonly used with
//! these benchmarks, so that every pre-processor (including the discrete
//! optimized transformation) runs on the same representation:
//!
//! * German: credit history (paid / delay / other), savings (<500 / 500+ /
//!   unknown), employment length (unemployed / 1-4 / 4+ years), age > 25,
//!   and sex. Label: good credit. Privileged: male.
//! * COMPAS: age category, race (Caucasian / other), prior count (0 / 1-3 /
//!   more than 3), charge degree, and sex. Label: no two-year recidivism.
//!   Privileged: female.
//! * Adult: age decade, years of education (<6, 6..12, >12), race (White /
//!   other), and sex. Label: income above 50K. Privileged: male.

use std::collections::BTreeMap;

use super::schema::{ColumnSchema, DatasetSpec, MissingPolicy};

fn spec(
    name: &str,
    label: &str,
    remap: &[(&str, u8)],
    favorable: &str,
    protected: &str,
    privileged: &str,
    columns: Vec<ColumnSchema>,
) -> DatasetSpec {
    DatasetSpec {
        name: name.into(),
        label_column: label.into(),
        favorable_label_raw: favorable.into(),
        protected_column: protected.into(),
        privileged_value_raw: privileged.into(),
        columns,
        label_remap: remap.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        protected_as_feature: true,
        weight_column: None,
        missing: MissingPolicy::Drop,
        missing_tokens: vec!["".into(), "?".into(), "NA".into()],
    }
}

pub fn german() -> DatasetSpec {
    spec(
        "german",
        "credit",
        &[("1", 1), ("2", 0)],
        "1",
        "sex",
        "male",
        vec![
            ColumnSchema::categorical("credit_history", &["None/Paid", "Delay", "Other"]).with_recode(&[
                ("A30", "None/Paid"),
                ("A31", "None/Paid"),
                ("A32", "None/Paid"),
                ("A33", "Delay"),
                ("A34", "Other"),
            ]),
            ColumnSchema::categorical("savings", &["<500", "500+", "Unknown/None"]).with_recode(&[
                ("A61", "<500"),
                ("A62", "<500"),
                ("A63", "500+"),
                ("A64", "500+"),
                ("A65", "Unknown/None"),
            ]),
            ColumnSchema::categorical("employment", &["Unemployed", "1-4 years", "4+ years"]).with_recode(&[
                ("A71", "Unemployed"),
                ("A72", "1-4 years"),
                ("A73", "1-4 years"),
                ("A74", "4+ years"),
                ("A75", "4+ years"),
            ]),
            ColumnSchema::binary("age", "<=25", ">25").with_buckets(&[26.0]),
        ],
    )
}

pub fn compas() -> DatasetSpec {
    spec(
        "compas",
        "two_year_recid",
        &[("0", 1), ("1", 0)],
        "0",
        "sex",
        "Female",
        vec![
            ColumnSchema::categorical("age_cat", &["Less than 25", "25 - 45", "Greater than 45"]),
            ColumnSchema::binary("race", "Other", "Caucasian")
                .with_recode(&[("Caucasian", "Caucasian"), ("*", "Other")]),
            ColumnSchema::categorical("priors_count", &["0", "1 to 3", "More than 3"]).with_buckets(&[1.0, 4.0]),
            ColumnSchema::binary("c_charge_degree", "M", "F"),
        ],
    )
}

pub fn adult() -> DatasetSpec {
    spec(
        "adult",
        "income",
        &[(">50K", 1), ("<=50K", 0)],
        ">50K",
        "sex",
        "Male",
        vec![
            ColumnSchema::categorical("age", &["10", "20", "30", "40", "50", "60", "70"])
                .with_buckets(&[20.0, 30.0, 40.0, 50.0, 60.0, 70.0]),
            ColumnSchema::categorical(
                "education_num",
                &["<6", "6", "7", "8", "9", "10", "11", "12", ">12"],
            )
            .with_buckets(&[6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0]),
            ColumnSchema::binary("race", "Other", "White").with_recode(&[("White", "White"), ("*", "Other")]),
        ],
    )
}

/// Preset by name (`german`, `compas`, `adult`).
pub fn by_name(name: &str) -> Option<DatasetSpec> {
    match name {
        "german" => Some(german()),
        "compas" => Some(compas()),
        "adult" => Some(adult()),
        _ => None,
    }
}
