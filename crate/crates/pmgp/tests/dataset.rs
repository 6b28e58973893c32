use std::io::Write;
use std::path::PathBuf;

use pmgp::dataset::{column_moments, load_dataset, load_test_dataset, DatasetSpec, LabelRule, Normalization};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn preset(name: &str) -> DatasetSpec {
    DatasetSpec::preset(name).unwrap()
}

#[test]
fn pima_training_set() {
    let l = load_dataset(&fixture("pima_tr.csv"), &preset("pima")).unwrap();
    assert_eq!((l.data.n(), l.data.d()), (200, 7));
    assert!(l.rejected.is_empty());
    let positives = l.data.y().iter().filter(|&&v| v == 1.0).count();
    assert_eq!(positives, 68);
    let (m, s) = column_moments(l.data.x());
    for j in 0..7 {
        assert!(m[j].abs() < 1e-12, "mean {j}: {}", m[j]);
        assert!((s[j] - 1.0).abs() < 1e-12, "sd {j}: {}", s[j]);
    }
}

#[test]
fn breast_rows_with_missing_values_are_rejected() {
    let l = load_dataset(&fixture("breast.csv"), &preset("breast")).unwrap();
    assert_eq!(l.data.n(), 683);
    assert_eq!(l.rejected.len(), 16);
    assert_eq!(l.data.d(), 9);
    assert_eq!(l.data.y().iter().filter(|&&v| v == 1.0).count(), 239);
}

#[test]
fn glass_window_against_non_window() {
    let l = load_dataset(&fixture("glass.csv"), &preset("glass")).unwrap();
    assert_eq!((l.data.n(), l.data.d()), (214, 9));
    // 70 + 76 + 17 window, 13 + 9 + 29 other
    assert_eq!(l.data.y().iter().filter(|&&v| v == 1.0).count(), 163);
}

#[test]
fn test_set_uses_training_scale() {
    let train = load_dataset(&fixture("pima_tr.csv"), &preset("pima")).unwrap();
    let norm = Normalization::of(&train.data);
    let test = load_test_dataset(&fixture("pima_te.csv"), &preset("pima"), &norm).unwrap();
    assert_eq!(test.data.n(), 332);
    assert_eq!(test.data.feature_means(), train.data.feature_means());
    // first test row: 6,148,72,35,33.6,0.627,50
    let x0 = test.data.x().row(0);
    assert!((x0[1] - (148.0 - norm.means[1]) / norm.sds[1]).abs() < 1e-12);
}

#[test]
fn missing_tokens_constant_columns_and_labels() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "# comment\na,b,c,label\n1,5,2,yes\n2,5,?,no\n3,5,NA,yes\n 4 ,5,1,no\n").unwrap();
    let spec = DatasetSpec { labels: LabelRule::Positive(vec!["yes".into()]), ..DatasetSpec::default() };
    let l = load_dataset(f.path(), &spec).unwrap();
    assert_eq!(l.data.n(), 2);
    assert_eq!(l.rejected.iter().map(|r| r.record).collect::<Vec<_>>(), [2, 3]);
    assert_eq!(l.constant_features, ["b"]);
    assert_eq!(l.data.y(), [1.0, -1.0]);
    assert_eq!(l.data.x().row(0)[1], 0.0);

    let spec = DatasetSpec {
        label_column: Some("a".into()),
        drop_columns: vec!["label".into()],
        normalize: false,
        ..DatasetSpec::default()
    };
    let l = load_dataset(f.path(), &spec).unwrap();
    assert_eq!(l.feature_names, ["b", "c"]);
    assert_eq!(l.data.y(), [1.0, -1.0]);
    assert_eq!(l.data.x().row(1), [5.0, 1.0]);
}

#[test]
fn unknown_glass_class_is_rejected() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "x,type\n1,WinF\n2,Mystery\n3,Head").unwrap();
    let l = load_dataset(f.path(), &DatasetSpec { labels: LabelRule::Glass, ..DatasetSpec::default() }).unwrap();
    assert_eq!(l.data.y(), [1.0, -1.0]);
    assert_eq!(l.rejected.len(), 1);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(load_dataset(&fixture("missing.csv"), &DatasetSpec::default()).is_err());
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "x,y\nNA,1").unwrap();
    assert!(load_dataset(f.path(), &DatasetSpec::default()).is_err());
    let spec = DatasetSpec { label_column: Some("z".into()), ..DatasetSpec::default() };
    assert!(load_dataset(f.path(), &spec).is_err());
}
