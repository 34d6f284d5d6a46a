use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use dynscene_core::{evaluate, PoseSE3, Trajectory};

fn trajectory(points: &[[f64; 3]]) -> Trajectory {
    let mut t = Trajectory::new();
    for (i, p) in points.iter().enumerate() {
        let q = UnitQuaternion::from_euler_angles(0.01 * i as f64, 0.0, 0.02 * i as f64);
        t.push(i as f64 * 0.05, PoseSE3::from_quaternion(&q, Vector3::from(*p))).unwrap();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn error_ignores_rigid_motion_of_the_estimate(
        gt in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 4..40),
        noise in prop::collection::vec(prop::array::uniform3(-0.1f64..0.1), 40),
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in 0.0f64..3.0,
        shift in prop::array::uniform3(-10.0f64..10.0),
    ) {
        let est: Vec<[f64; 3]> = gt.iter().zip(&noise).map(|(g, n)| [g[0] + n[0], g[1] + n[1], g[2] + n[2]]).collect();
        let (gt, est) = (trajectory(&gt), trajectory(&est));
        let Ok(base) = evaluate(&est, &gt, 0.02) else { return Ok(()) };
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 0.1);
        let t = PoseSE3::from_quaternion(&UnitQuaternion::from_scaled_axis(axis.normalize() * angle), Vector3::from(shift));
        let moved = evaluate(&est.transformed(&t), &gt, 0.02).unwrap();
        prop_assert!(base.rmse >= 0.0);
        prop_assert!((base.rmse - moved.rmse).abs() < 1e-9, "{} vs {}", base.rmse, moved.rmse);
    }
}

#[test]
fn zero_only_when_positions_coincide() {
    let pts: Vec<[f64; 3]> = (0..20).map(|i| [i as f64 * 0.1, (i as f64 * 0.3).sin(), 0.2 * i as f64]).collect();
    let gt = trajectory(&pts);
    assert!(evaluate(&gt, &gt, 0.02).unwrap().rmse < 1e-12);
    let mut bent = pts.clone();
    bent[7][1] += 0.05;
    assert!(evaluate(&trajectory(&bent), &gt, 0.02).unwrap().rmse > 1e-3);
}
