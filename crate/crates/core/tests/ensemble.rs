use fairboost::dataset::{Column, EncodedKind, TabularDataset};
use fairboost::ensemble::{ensemble_fit, majority_vote, Combiner, MemberSpec};
use fairboost::models::{ClassifierSpec, ForestConfig, LogisticConfig};
use fairboost::preprocess::PreprocessorSpec;
use ndarray::Array2;
use proptest::prelude::*;

fn brute_mode(votes: &[Vec<u8>], row: usize) -> u8 {
    let ones = votes.iter().filter(|v| v[row] == 1).count();
    u8::from(ones * 2 > votes.len())
}

#[test]
fn three_member_majority_matches_mode() {
    let labels = vec![
        vec![1, 0, 1, 0, 1],
        vec![1, 1, 0, 0, 0],
        vec![0, 1, 1, 0, 1],
    ];
    let probas: Vec<Vec<f64>> = labels.iter().map(|l| l.iter().map(|&v| f64::from(v)).collect()).collect();
    let vote = majority_vote(&labels, &probas).unwrap();
    let expected: Vec<u8> = (0..5).map(|i| brute_mode(&labels, i)).collect();
    assert_eq!(vote.prediction.labels, expected);
    assert_eq!(vote.ties, 0);
}

proptest! {
    #[test]
    fn odd_votes_never_tie_and_permutation_invariant(
        m in prop::sample::select(vec![3usize, 5, 7]),
        rows in 1usize..30,
        seed in any::<u64>(),
    ) {
        let mut state = seed | 1;
        let mut next = || { state ^= state << 13; state ^= state >> 7; state ^= state << 17; state };
        let labels: Vec<Vec<u8>> = (0..m).map(|_| (0..rows).map(|_| (next() % 2) as u8).collect()).collect();
        let probas: Vec<Vec<f64>> = (0..m).map(|_| (0..rows).map(|_| (next() % 1000) as f64 / 999.0).collect()).collect();
        let vote = majority_vote(&labels, &probas).unwrap();
        prop_assert_eq!(vote.ties, 0);
        for i in 0..rows {
            prop_assert_eq!(vote.prediction.labels[i], brute_mode(&labels, i));
        }
        let mut l2 = labels.clone();
        let mut p2 = probas.clone();
        l2.reverse();
        p2.reverse();
        prop_assert_eq!(majority_vote(&l2, &p2).unwrap().prediction.labels, vote.prediction.labels);
    }
}

fn toy(n: usize) -> TabularDataset {
    let x = Array2::from_shape_fn((n, 3), |(i, j)| match j {
        0 => (i % 7) as f64,
        1 => ((i * 3) % 5) as f64,
        _ => (i % 2) as f64,
    });
    let y = (0..n).map(|i| u8::from((i % 7) + (i % 2) * 2 >= 4)).collect();
    let s = (0..n).map(|i| (i % 2) as u8).collect();
    let schema = vec![
        Column { name: "a".into(), kind: EncodedKind::Continuous },
        Column { name: "b".into(), kind: EncodedKind::Continuous },
        Column { name: "sex".into(), kind: EncodedKind::Protected },
    ];
    TabularDataset::unweighted(x, y, s, schema).unwrap()
}

#[test]
fn ensemble_member_order_does_not_matter() {
    let ds = toy(60);
    let clf = ClassifierSpec::Forest(ForestConfig { n_trees: 15, ..ForestConfig::default() });
    let members = vec![
        MemberSpec::new(PreprocessorSpec::None, clf.clone()),
        MemberSpec::new(PreprocessorSpec::Rw, clf.clone()),
        MemberSpec::new(PreprocessorSpec::Op(Default::default()), clf.clone()),
    ];
    let mut reversed = members.clone();
    reversed.reverse();
    let a = ensemble_fit(&ds, &members, Combiner::Majority, 11).unwrap();
    let b = ensemble_fit(&ds, &reversed, Combiner::Majority, 11).unwrap();
    assert_eq!(a.predict(&ds).unwrap().labels, b.predict(&ds).unwrap().labels);
    let vote = a.predict_vote(&ds).unwrap();
    assert_eq!(vote.ties, 0);
}

#[test]
fn ensemble_fit_is_deterministic() {
    let ds = toy(50);
    let clf = ClassifierSpec::Logistic(LogisticConfig::default());
    let members = vec![
        MemberSpec::new(PreprocessorSpec::None, clf.clone()),
        MemberSpec::new(PreprocessorSpec::Rw, clf.clone()),
    ];
    for combiner in [Combiner::Majority, Combiner::Bagging, Combiner::Stacking] {
        let a = ensemble_fit(&ds, &members, combiner, 5).unwrap();
        let b = ensemble_fit(&ds, &members, combiner, 5).unwrap();
        assert_eq!(a, b, "{combiner:?}");
    }
}

#[test]
fn agreeing_members_pass_through() {
    let ds = toy(40);
    let clf = ClassifierSpec::Logistic(LogisticConfig::default());
    let member = MemberSpec::new(PreprocessorSpec::None, clf);
    let model = ensemble_fit(&ds, &[member.clone(), member.clone(), member], Combiner::Majority, 0).unwrap();
    let single = model.members[0].predict(&ds).unwrap();
    assert_eq!(model.predict(&ds).unwrap().labels, single.labels);
}

#[test]
fn member_failure_names_member() {
    // Only one group present in the positive class: reweighing cannot fit.
    let mut ds = toy(40);
    let y: Vec<u8> = ds.s().iter().map(|&s| s).collect();
    ds = ds.with_labels(y).unwrap();
    let clf = ClassifierSpec::Logistic(LogisticConfig::default());
    let members = [
        MemberSpec::new(PreprocessorSpec::None, clf.clone()),
        MemberSpec::new(PreprocessorSpec::Rw, clf),
    ];
    let err = ensemble_fit(&ds, &members, Combiner::Majority, 0).unwrap_err();
    assert!(err.to_string().contains("rw+logistic"), "{err}");
}
