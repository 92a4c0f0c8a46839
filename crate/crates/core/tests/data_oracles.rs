use freqx::data::{generate_synthetic, read_csv, split_dataset, write_csv, CsvOptions, SyntheticSpec};
use freqx::nn::LabeledDataset;
use freqx::report::{emit_report, CsvTable, LinePlot, Report};

/// Plain binary logistic regression by full-batch gradient descent.
fn logistic_accuracy(train: &LabeledDataset, test: &LabeledDataset, features: &[usize]) -> f64 {
    let mut w = vec![0.0; features.len()];
    let mut b = 0.0;
    let n = train.len() as f64;
    let logit = |w: &[f64], b: f64, x: &[f64]| features.iter().zip(w).map(|(&j, wj)| wj * x[j]).sum::<f64>() + b;
    for _ in 0..500 {
        let mut gw = vec![0.0; features.len()];
        let mut gb = 0.0;
        for (x, &y) in train.samples().iter().zip(train.labels()) {
            let p = 1.0 / (1.0 + (-logit(&w, b, x)).exp());
            let err = p - y as f64;
            for (g, &j) in gw.iter_mut().zip(features) {
                *g += err * x[j];
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= 0.5 * g / n;
        }
        b -= 0.5 * gb / n;
    }
    let hits = test
        .samples()
        .iter()
        .zip(test.labels())
        .filter(|(x, &y)| usize::from(logit(&w, b, x) > 0.0) == y)
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn planted_signal_lives_in_the_informative_features() {
    let data = generate_synthetic(&SyntheticSpec::planted_signal(1000, 50, 10, 0.5), 0).unwrap();
    let (train, test) = split_dataset(&data, 0.3, 1).unwrap();
    let informative: Vec<usize> = (0..10).collect();
    let rest: Vec<usize> = (10..50).collect();
    let on_signal = logistic_accuracy(&train, &test, &informative);
    let on_rest = logistic_accuracy(&train, &test, &rest);
    assert!(on_signal >= 0.9, "informative accuracy {on_signal}");
    assert!(on_rest <= 0.6, "complement accuracy {on_rest}");
}

#[test]
fn generation_is_seeded() {
    let spec = SyntheticSpec::planted_signal(100, 8, 3, 0.5);
    assert_eq!(generate_synthetic(&spec, 4).unwrap(), generate_synthetic(&spec, 4).unwrap());
    assert_ne!(generate_synthetic(&spec, 4).unwrap(), generate_synthetic(&spec, 5).unwrap());
}

#[test]
fn csv_round_trip_preserves_values() {
    let data = generate_synthetic(&SyntheticSpec::planted_signal(30, 4, 2, 0.5), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&data, &path).unwrap();
    let back = read_csv(&path, &CsvOptions::default()).unwrap();
    assert_eq!(back.data.samples(), data.samples());
    assert_eq!(back.data.labels(), data.labels());
}

#[test]
fn plots_are_well_formed_svg_and_curves_keep_every_point() {
    let points: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 / 10.0, 1.0 - i as f64 / 10.0)).collect();
    let plot = LinePlot::new("a < b & c", "fraction", "p").with_series("FreqX", points.clone());
    let svg = plot.to_svg();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 1);

    let mut table = CsvTable::new(["fraction", "mean_prob"]);
    for (f, p) in &points {
        table.push(vec![f.to_string(), p.to_string()]);
    }
    let mut report = Report::default();
    report.table("curve", table);
    report.plot("curve", plot);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let text = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(text.lines().count(), 12);
}
