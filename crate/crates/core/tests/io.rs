use std::fs;

use periodic_secretary::stream::{generate_periodic_stream, ingest_csv, write_csv, CsvSchema};
use periodic_secretary::{Error, GpHyperparams, ObservationStream, PeriodicStreamSpec, Waveform};

fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[test]
fn csv_round_trip_keeps_twelve_significant_digits() {
    let spec = PeriodicStreamSpec::isotropic(20, 3, 0.35, Waveform::Seasonal { offset: 1e-3 });
    let stream = generate_periodic_stream(&spec, 5).unwrap();
    let qoi: Vec<f64> = (0..stream.len())
        .map(|i| (i as f64 * 0.37).sin() * 1e5 + 1e-7)
        .collect();
    let stream = stream.with_qoi(qoi.clone()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_csv(&stream, &path).unwrap();
    let schema = CsvSchema::infer(&path).unwrap();
    assert_eq!(schema, CsvSchema::default_for(2, true));
    let back = ingest_csv(&path, &schema).unwrap();

    assert_eq!(back.len(), stream.len());
    for (a, b) in stream.observations().iter().zip(back.observations()) {
        assert_eq!(a.index, b.index);
        for (x, y) in a.features.iter().zip(&b.features) {
            assert!(relative_error(*x, *y) < 5e-12, "{x} vs {y}");
        }
    }
    for (x, y) in qoi.iter().zip(back.qoi_values().unwrap()) {
        assert!(relative_error(*x, y) < 5e-12, "{x} vs {y}");
    }

    // Writing what was read reproduces the file byte for byte.
    let again = dir.path().join("t.csv");
    write_csv(&back, &again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn ingest_keeps_file_order_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(
        &path,
        "date,temp,x0,qoi\n2006-01-02,9.5,1.5,10\n2006-01-01,9.0,-0.5,12\n",
    )
    .unwrap();
    let s = ingest_csv(&path, &CsvSchema::new("date", &["temp", "x0"], Some("qoi"))).unwrap();
    assert_eq!(s.labels().unwrap(), ["2006-01-02", "2006-01-01"]);
    assert_eq!(s.observations()[1].features, vec![9.0, -0.5]);
    assert_eq!(s.qoi_values().unwrap(), vec![10.0, 12.0]);

    let inferred = CsvSchema::infer(&path).unwrap();
    assert_eq!(inferred.features, ["x0"]);
    assert_eq!(inferred.qoi.as_deref(), Some("qoi"));
}

#[test]
fn ingest_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");

    fs::write(&path, "t,x0\n0,1.0\n").unwrap();
    match ingest_csv(&path, &CsvSchema::default_for(1, true)) {
        Err(Error::MissingColumn(c)) => assert_eq!(c, "qoi"),
        other => panic!("{other:?}"),
    }

    fs::write(&path, "t,x0\n0,1.0\n1,oops\n").unwrap();
    match ingest_csv(&path, &CsvSchema::default_for(1, false)) {
        Err(e @ Error::Malformed { line: 3, .. }) => assert!(e.to_string().contains("oops")),
        other => panic!("{other:?}"),
    }

    fs::write(&path, "t,x0\n").unwrap();
    assert!(ingest_csv(&path, &CsvSchema::default_for(1, false)).is_err());
}

#[test]
fn hyperparameters_round_trip_through_toml() {
    let h = GpHyperparams::new(vec![0.5, 1.25], 2.0, 0.1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gp.toml");
    h.save(&path).unwrap();
    assert_eq!(GpHyperparams::load(&path).unwrap(), h);
    assert!(
        GpHyperparams::from_toml_str("lengthscales = [1.0]\nsignal_variance = -1.0\nnoise_variance = 0.1\n").is_err()
    );
}

#[test]
fn streams_reject_mismatched_qoi() {
    let s = ObservationStream::from_features(vec![vec![0.0], vec![1.0]]).unwrap();
    assert!(s.with_qoi(vec![1.0]).is_err());
}
