use motif_forge_core::error::Error;
use motif_forge_core::rng;
use motif_forge_core::signal::*;
use rand::Rng as _;

fn session_csv(days: usize) -> String {
    let mut s = String::from("patient_id,session_id,timestamp,value\n");
    for t in 0..days * 288 {
        let m = t * 5;
        s.push_str(&format!(
            "P1,S1,2024-03-{:02}T{:02}:{:02}:00,{:.1}\n",
            1 + m / 1440,
            (m % 1440) / 60,
            m % 60,
            120.0 + 30.0 * (t as f64 / 40.0).sin()
        ));
    }
    s
}

#[test]
fn three_day_session_gives_three_full_days() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cgm.csv");
    std::fs::write(&path, session_csv(3)).unwrap();
    let signals = load_signals(&path, &LoadOptions::default()).unwrap();
    assert_eq!(signals.len(), 1);
    assert_eq!(signals[0].len(), 864);
    let split = segment_days(&interpolate_gaps(&signals[0]), 30).unwrap();
    assert_eq!(split.segments.len(), 3);
    assert!(split.segments.iter().all(|d| d.len() == 288));
    assert!(split.report.iter().all(|r| r.kept));
}

#[test]
fn reading_below_sensor_range_names_its_line() {
    let mut text = session_csv(1);
    let lines: Vec<&str> = text.lines().collect();
    let mut edited: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    edited[7] = "P1,S1,2024-03-01T00:30:00,39".into();
    text = edited.join("\n");
    match parse_csv(&text, &LoadOptions::default()) {
        Err(Error::OutOfRange { line, .. }) => assert_eq!(line, 8),
        other => panic!("expected out-of-range error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_signals(std::path::Path::new("/nonexistent/cgm.csv"), &LoadOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}

#[test]
fn window_counts_match_closed_form() {
    let v: Vec<f64> = (0..288).map(|t| t as f64).collect();
    for (len, stride) in [(8, 8), (288, 1), (8, 1), (12, 5)] {
        let expected = (288 - len) / stride + 1;
        assert_eq!(windows(&v, len, stride).unwrap().len(), expected, "len {len} stride {stride}");
    }
    assert_eq!(windows(&v, 8, 8).unwrap().len(), 36);
    assert_eq!(windows(&v, 288, 1).unwrap().len(), 1);
    assert_eq!(windows(&v, 8, 1).unwrap().len(), 281);
    assert!(windows(&v, 289, 1).is_err());
}

#[test]
fn sax_is_invariant_to_positive_affine_maps() {
    let cfg = SaxConfig { alphabet_size: 7, paa_width: 4 };
    let mut r = rng::from_seed(5);
    for _ in 0..50 {
        let v: Vec<f64> = (0..48).map(|_| r.random::<f64>() * 200.0 + 40.0).collect();
        let a = 0.1 + 10.0 * r.random::<f64>();
        let b = 500.0 * (r.random::<f64>() - 0.5);
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        assert_eq!(sax_discretize(&v, &cfg).unwrap(), sax_discretize(&w, &cfg).unwrap());
    }
}

#[test]
fn constant_segment_maps_to_middle_symbol() {
    for alphabet_size in [3, 5, 9] {
        let cfg = SaxConfig { alphabet_size, paa_width: 2 };
        let s = sax_discretize(&[150.0; 24], &cfg).unwrap();
        assert!(s.symbols.iter().all(|&x| x as usize == alphabet_size / 2));
    }
}

#[test]
fn paa_averages_blocks() {
    let v: Vec<f64> = (0..12).map(|t| t as f64).collect();
    assert_eq!(paa(&v, 3), vec![1.0, 4.0, 7.0, 10.0]);
}
