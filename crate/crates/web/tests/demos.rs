use mrdmoc_web::{free_vibration, frequencies, slew};

#[test]
fn frequencies_start_with_the_rigid_mode() {
    let f = frequencies(5).unwrap();
    assert_eq!(f.len(), 6);
    assert!(f[0].abs() < 1e-6);
    assert!((f[1] - 6.454).abs() < 0.05);
    assert!(f.windows(2).all(|w| w[1] > w[0]));
    assert!(frequencies(0).is_err());
}

#[test]
fn free_vibration_conserves_energy_closely() {
    let c = free_vibration(0.05, 2.0, 1e-4, 5, 3).unwrap();
    assert_eq!(c.count(), 3);
    assert_eq!(c.time().len(), c.column(0).len());
    let worst = c.column(2).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-5, "{worst:e}");
    assert!(c.summary().contains("energy"));
}

#[test]
fn slew_ends_at_the_target_angle() {
    let c = slew(20.0, 1.5, 1e-3, 3, 3).unwrap();
    let theta = c.column(0);
    assert!(theta[0].abs() < 1e-9);
    assert!((theta[theta.len() - 1] - 20.0).abs() < 1e-6);
    assert!(c.column(1).last().unwrap().abs() < 1e-8);
}

#[test]
fn oversized_requests_are_rejected() {
    assert!(slew(20.0, 60.0, 1e-3, 1, 3).unwrap_err().contains("demo limit"));
    assert!(free_vibration(0.05, 1.0, 1e-3, 7, 3).is_err());
}
