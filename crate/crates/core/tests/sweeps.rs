use std::f64::consts::PI;

use vbmap::hamiltonian::GAMMA_E_MHZ_PER_MT;
use vbmap::io::{write_sweep_csv, FileMetadata, SWEEP_SCHEMA};
use vbmap::sweep::{sweep_line, sweep_polar_arc, LineAxis, SweepRow};
use vbmap::{default_vb_system, run_sweep, spectrum_sweep, Flags, FieldPoint, Quantity, Selector, SweepGrid, SweepSettings};

fn settings(workers: usize) -> SweepSettings {
    SweepSettings {
        workers,
        ..Default::default()
    }
}

fn csv_bytes(rows: &vbmap::SweepDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, rows, &FileMetadata::new(SWEEP_SCHEMA, serde_json::Value::Null)).unwrap();
    buf
}

#[test]
fn output_identical_across_worker_counts() {
    let grid = SweepGrid::SphereShell {
        b0: 7.5,
        n_theta: 4,
        n_phi: 3,
    };
    let q = [Quantity::Gradient, Quantity::Curvature, Quantity::T2, Quantity::Eminence];
    let sys = default_vb_system();
    let reference = csv_bytes(&run_sweep(&sys, &grid, &q, &Selector::default(), &settings(1)).unwrap());
    for w in [2, 8] {
        let other = csv_bytes(&run_sweep(&sys, &grid, &q, &Selector::default(), &settings(w)).unwrap());
        assert_eq!(reference, other, "workers = {w}");
    }
}

#[test]
fn decoupled_sweep_matches_zeeman_lines() {
    let sys = default_vb_system().decoupled();
    let grid = SweepGrid::Custom {
        points: vec![
            FieldPoint::along_z(0.0),
            FieldPoint::along_z(3.3),
            FieldPoint::along_z(20.0),
            FieldPoint::new(12.0, 0.0, 1.0),
        ],
    };
    let ds = run_sweep(&sys, &grid, &[Quantity::Transitions], &Selector::All, &settings(2)).unwrap();
    assert_eq!(ds.rows.len(), 4 * 1458);
    for r in &ds.rows {
        let ms = f64::from(r.ms_final.unwrap());
        let want = sys.zfs + ms * sys.gamma_e * r.b0;
        let got = r.f.unwrap();
        // Nuclear Zeeman cancels for equal nuclear projections only.
        let nuclear = sys.nuclei[0].gamma_n * r.b0 * 6.0;
        assert!((got - want).abs() <= 1e-6 + nuclear, "B = {} ms = {ms}: {got} vs {want}", r.b0);
    }
    let spec = spectrum_sweep(&sys, &SweepGrid::line(LineAxis::Parallel, 0.0, 1.0, 2), 1).unwrap();
    let e0 = spec.rows[0].energies.as_ref().unwrap();
    let mut distinct: Vec<f64> = Vec::new();
    for &e in e0 {
        if distinct.iter().all(|d| (d - e).abs() > 1e-6) {
            distinct.push(e);
        }
    }
    assert_eq!(distinct.len(), 2);
}

#[test]
fn phi_periodicity() {
    let sys = default_vb_system();
    let grid = SweepGrid::Custom {
        points: vec![FieldPoint::new(15.0, 1.1, 0.0), FieldPoint::new(15.0, 1.1, 2.0 * PI)],
    };
    let ds = run_sweep(&sys, &grid, &[Quantity::Gradient], &Selector::default(), &settings(1)).unwrap();
    let (a, b) = (&ds.rows[0], &ds.rows[1]);
    assert_eq!((a.initial, a.fin), (b.initial, b.fin));
    assert!((a.f.unwrap() - b.f.unwrap()).abs() < 1e-8);
    assert!((a.grad.unwrap() - b.grad.unwrap()).abs() < 1e-6);
}

#[test]
fn exact_c3_tensors_give_threefold_symmetry() {
    let sys = default_vb_system().with_exact_c3_tensors();
    let third = 2.0 * PI / 3.0;
    let mut points = Vec::new();
    for (theta, phi) in [(0.7, 0.2), (1.3, 1.0), (1.9, 0.4)] {
        points.push(FieldPoint::new(15.0, theta, phi));
        points.push(FieldPoint::new(15.0, theta, phi + third));
    }
    let ds = run_sweep(&sys, &SweepGrid::Custom { points }, &[Quantity::Gradient], &Selector::default(), &settings(2)).unwrap();
    for pair in ds.rows.chunks(2) {
        let d = (pair[0].grad.unwrap() - pair[1].grad.unwrap()).abs();
        assert!(d < 1e-6, "C3 deviation {d} MHz/mT");
        assert!((pair[0].f.unwrap() - pair[1].f.unwrap()).abs() < 1e-6);
    }
}

#[test]
fn verbatim_tensors_break_c3_by_a_finite_amount() {
    let sys = default_vb_system();
    let points = vec![FieldPoint::new(15.0, 1.3, 1.0), FieldPoint::new(15.0, 1.3, 1.0 + 2.0 * PI / 3.0)];
    let ds = run_sweep(&sys, &SweepGrid::Custom { points }, &[Quantity::Gradient], &Selector::default(), &settings(1)).unwrap();
    let d = (ds.rows[0].grad.unwrap() - ds.rows[1].grad.unwrap()).abs();
    println!("verbatim C3 deviation at 15 mT: {d:.3e} MHz/mT");
    assert!(d.is_finite());
}

#[test]
fn two_point_sweep_is_schema_valid() {
    let ds = sweep_line(
        &default_vb_system(),
        LineAxis::Parallel,
        1.0,
        2.0,
        2,
        &[Quantity::Gradient],
        &Selector::default(),
        &settings(1),
    )
    .unwrap();
    assert_eq!(ds.rows.len(), 2);
    let text = String::from_utf8(csv_bytes(&ds)).unwrap();
    let (_, rows) = vbmap::io::read_sweep_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 2);
}

#[test]
fn transverse_gradient_rate_suppressed_relative_to_parallel() {
    let ds = sweep_line(
        &default_vb_system(),
        LineAxis::Transverse,
        7.5,
        23.5,
        2,
        &[Quantity::Gradient],
        &Selector::default(),
        &settings(2),
    )
    .unwrap();
    let low = ds.rows[0].grad.unwrap();
    let high = ds.rows[1].grad.unwrap();
    println!("transverse grad: {low:.3} MHz/mT at 7.5 mT, {high:.3} MHz/mT at 23.5 mT");
    // Along z every pure transition moves at γe; across z the shift is
    // second order and its slope stays well below γe.
    assert!(low < 0.5 * GAMMA_E_MHZ_PER_MT);
    assert!(high < 0.75 * GAMMA_E_MHZ_PER_MT);
    assert!((high - low) / (23.5 - 7.5) < 0.05 * GAMMA_E_MHZ_PER_MT);
}

#[test]
fn levels_vary_weakly_with_angle_at_first_dip() {
    let ds = vbmap::spectrum_sweep(
        &default_vb_system(),
        &SweepGrid::PolarArc {
            b0: 1.7184,
            theta_min: 0.0,
            theta_max: PI / 2.0,
            phi: 0.0,
            n: 5,
        },
        2,
    )
    .unwrap();
    let first = ds.rows[0].energies.as_ref().unwrap();
    let last = ds.rows[4].energies.as_ref().unwrap();
    let spread = first.iter().zip(last).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // Bounded by the electron Zeeman scale γe·B0 ≈ 48 MHz, far below D.
    assert!(spread < 1.2 * GAMMA_E_MHZ_PER_MT * 1.7184, "spread {spread}");
}

#[test]
fn failing_points_are_annotated_not_fatal() {
    let sel = Selector::Pair { initial: 0, fin: 500 };
    let ds = sweep_polar_arc(&default_vb_system(), 5.0, (0.0, 1.0), 0.0, 3, &[Quantity::Gradient], &sel, &settings(2)).unwrap();
    assert_eq!(ds.rows.len(), 3);
    for r in &ds.rows {
        assert!(r.flags.contains(Flags::SOLVER));
        assert!(r.f.is_none() && r.grad.is_none());
    }
}

#[test]
fn row_count_is_points_times_selected() {
    let grid = SweepGrid::line(LineAxis::Parallel, 10.0, 12.0, 3);
    let ds = run_sweep(&default_vb_system(), &grid, &[Quantity::Probability], &Selector::All, &settings(2)).unwrap();
    assert_eq!(ds.rows.len(), 3 * 1458);
    assert_eq!(ds.point_count(), 3);
    assert!(ds.rows.iter().all(|r: &SweepRow| r.probability.unwrap().is_finite()));
}
