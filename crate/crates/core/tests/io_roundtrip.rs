use vbmap::io::{
    csv_rounded, read_spectrum_csv, read_sweep_csv, read_sweep_json, write_spectrum_csv, write_sweep_csv,
    write_sweep_json, FileMetadata, SPECTRUM_SCHEMA, SWEEP_COLUMNS, SWEEP_SCHEMA,
};
use vbmap::sweep::{LineAxis, SweepRow};
use vbmap::{default_vb_system, run_sweep, spectrum_sweep, Quantity, Selector, SweepDataset, SweepGrid, SweepSettings};

fn dataset() -> SweepDataset {
    let grid = SweepGrid::PolarArc {
        b0: 7.5,
        theta_min: 0.0,
        theta_max: 1.5,
        phi: 0.3,
        n: 3,
    };
    run_sweep(
        &default_vb_system(),
        &grid,
        &[Quantity::Gradient, Quantity::Curvature, Quantity::T2, Quantity::Eminence],
        &Selector::default(),
        &SweepSettings {
            workers: 2,
            ..Default::default()
        },
    )
    .unwrap()
}

fn meta() -> FileMetadata {
    FileMetadata::new(SWEEP_SCHEMA, serde_json::json!({"note": "test"}))
}

fn rounded(r: &SweepRow) -> SweepRow {
    let o = |x: Option<f64>| x.map(csv_rounded);
    SweepRow {
        b0: csv_rounded(r.b0),
        theta: csv_rounded(r.theta),
        phi: csv_rounded(r.phi),
        f: o(r.f),
        probability: o(r.probability),
        grad: o(r.grad),
        curv: o(r.curv),
        t2: o(r.t2),
        eminence: o(r.eminence),
        ..r.clone()
    }
}

#[test]
fn csv_round_trip_to_twelve_digits() {
    let ds = dataset();
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &ds, &meta()).unwrap();
    let (m, rows) = read_sweep_csv(buf.as_slice()).unwrap();
    assert_eq!(m, meta());
    assert_eq!(rows.len(), ds.rows.len());
    for (a, b) in ds.rows.iter().zip(&rows) {
        assert_eq!(&rounded(a), b);
        if let (Some(x), Some(y)) = (a.f, b.f) {
            assert!(((x - y) / x).abs() <= 5e-12);
        }
    }
    // A second pass is a fixed point.
    let again = SweepDataset {
        metadata: ds.metadata.clone(),
        rows,
    };
    let mut buf2 = Vec::new();
    write_sweep_csv(&mut buf2, &again, &meta()).unwrap();
    assert_eq!(buf, buf2);
}

#[test]
fn json_round_trip_is_exact() {
    let ds = dataset();
    let mut buf = Vec::new();
    write_sweep_json(&mut buf, &ds, &meta()).unwrap();
    let (m, rows) = read_sweep_json(buf.as_slice()).unwrap();
    assert_eq!(m, meta());
    assert_eq!(rows, ds.rows);
}

#[test]
fn csv_header_is_the_versioned_schema() {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &dataset(), &meta()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: vbmap-sweep/1"));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, SWEEP_COLUMNS.join(","));
    assert!(!text.contains("NaN") && !text.contains("inf"));
}

#[test]
fn schema_and_column_mismatches_are_rejected() {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &dataset(), &meta()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let wrong_schema = text.replace("vbmap-sweep/1", "vbmap-sweep/0");
    assert!(read_sweep_csv(wrong_schema.as_bytes()).is_err());
    let wrong_column = text.replace(",t2_us,", ",T2,");
    let err = read_sweep_csv(wrong_column.as_bytes()).unwrap_err().to_string();
    assert!(err.contains("t2_us") && err.contains("T2"), "{err}");
}

#[test]
fn spectrum_shape_and_round_trip() {
    let grid = SweepGrid::line(LineAxis::Parallel, 0.0, 6.0, 4);
    let ds = spectrum_sweep(&default_vb_system(), &grid, 2).unwrap();
    let mut buf = Vec::new();
    write_spectrum_csv(&mut buf, &ds, &FileMetadata::new(SPECTRUM_SCHEMA, serde_json::Value::Null)).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split(',').count(), 3 + 81 + 1);
    let (_, rows) = read_spectrum_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    for (a, b) in ds.rows.iter().zip(&rows) {
        let ea = a.energies.as_ref().unwrap();
        let eb = b.energies.as_ref().unwrap();
        assert_eq!(eb.len(), 81);
        for (x, y) in ea.iter().zip(eb) {
            assert_eq!(csv_rounded(*x), *y);
        }
    }
}
