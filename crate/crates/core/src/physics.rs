//! Rigid-body quadrotor dynamics.
//!
//! Each airframe is an X-configuration quadrotor. Rotor thrust and yaw moment
//! are quadratic in rotor speed, drag is linear in inertial velocity, and a
//! ground-effect term augments thrust near the surface. States are advanced
//! at a fixed step with a semi-implicit scheme: rates first, then pose from
//! the updated rates.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid UAV parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("simulation fault: non-finite {quantity} ({detail})")]
    NonFinite {
        quantity: &'static str,
        detail: String,
    },
}

/// Airframe, rotor and environment constants for one UAV type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavParams {
    pub mass_kg: f64,
    /// Principal moments of inertia (kg·m²).
    pub inertia_diag: [f64; 3],
    pub arm_length_m: f64,
    /// Thrust coefficient (N/RPM²).
    pub thrust_coeff: f64,
    /// Yaw-moment coefficient (N·m/RPM²).
    pub torque_coeff: f64,
    /// Linear drag coefficients (N·s/m), inertial axes.
    pub drag_diag: [f64; 3],
    pub ground_effect_coeff: f64,
    pub prop_radius_m: f64,
    pub rpm_min: f64,
    pub rpm_max: f64,
    pub gravity_mps2: f64,
    /// Altitude floor used by the ground-effect term.
    pub min_ground_altitude_m: f64,
    /// First-order motor lag; zero means rotors track commands instantly.
    pub motor_time_constant_s: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        let mass_kg = 1.5;
        let gravity_mps2 = 9.81;
        let rpm_max = 25_000.0;
        // Hover at half of the maximum rotor speed.
        let hover_rpm = 0.5 * rpm_max;
        let thrust_coeff = mass_kg * gravity_mps2 / (4.0 * hover_rpm * hover_rpm);
        Self {
            mass_kg,
            inertia_diag: [0.029, 0.029, 0.055],
            arm_length_m: 0.35,
            thrust_coeff,
            torque_coeff: 0.01 * thrust_coeff,
            drag_diag: [0.1, 0.1, 0.1],
            ground_effect_coeff: 2.0,
            prop_radius_m: 0.12,
            rpm_min: 0.0,
            rpm_max,
            gravity_mps2,
            min_ground_altitude_m: 0.01,
            motor_time_constant_s: 0.0,
        }
    }
}

impl UavParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        fn positive(field: &'static str, v: f64) -> Result<(), PhysicsError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PhysicsError::InvalidParams {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        }
        positive("mass_kg", self.mass_kg)?;
        for v in self.inertia_diag {
            positive("inertia_diag", v)?;
        }
        positive("arm_length_m", self.arm_length_m)?;
        positive("thrust_coeff", self.thrust_coeff)?;
        positive("torque_coeff", self.torque_coeff)?;
        for v in self.drag_diag {
            positive("drag_diag", v)?;
        }
        positive("ground_effect_coeff", self.ground_effect_coeff)?;
        positive("prop_radius_m", self.prop_radius_m)?;
        positive("rpm_max", self.rpm_max)?;
        positive("gravity_mps2", self.gravity_mps2)?;
        positive("min_ground_altitude_m", self.min_ground_altitude_m)?;
        if !(self.rpm_min >= 0.0 && self.rpm_min < self.rpm_max) {
            return Err(PhysicsError::InvalidParams {
                field: "rpm_min",
                reason: format!(
                    "need 0 <= rpm_min < rpm_max, got {} / {}",
                    self.rpm_min, self.rpm_max
                ),
            });
        }
        if !(self.motor_time_constant_s >= 0.0) {
            return Err(PhysicsError::InvalidParams {
                field: "motor_time_constant_s",
                reason: "must be >= 0".into(),
            });
        }
        Ok(())
    }

    pub fn inertia(&self) -> Vec3 {
        Vec3::from(self.inertia_diag)
    }

    pub fn weight_n(&self) -> f64 {
        self.mass_kg * self.gravity_mps2
    }

    /// Thrust multiplier `1 + k_G (r_P / 4h)²` at body altitude `h`.
    pub fn ground_effect_factor(&self, altitude_m: f64) -> f64 {
        let h = altitude_m.max(self.min_ground_altitude_m);
        let ratio = self.prop_radius_m / (4.0 * h);
        1.0 + self.ground_effect_coeff * ratio * ratio
    }

    /// Uniform rotor speed that balances gravity at `altitude_m`, ground effect included.
    pub fn hover_rpm(&self, altitude_m: f64) -> f64 {
        (self.weight_n() / (4.0 * self.thrust_coeff * self.ground_effect_factor(altitude_m))).sqrt()
    }

    pub fn clamp_rpm(&self, rpm: [f64; 4]) -> [f64; 4] {
        let mut out = rpm;
        for p in out.iter_mut() {
            let c = p.clamp(self.rpm_min, self.rpm_max);
            if c != *p {
                log::warn!("rotor command {p:.1} RPM saturated to {c:.1}");
                *p = c;
            }
        }
        out
    }
}

/// Full kinematic truth of one UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub position_m: Vec3,
    pub velocity_mps: Vec3,
    /// Body-to-inertial rotation.
    pub attitude: UnitQuaternion<f64>,
    /// Body-frame angular rate.
    pub angular_rate_radps: Vec3,
    pub rotor_rpm: [f64; 4],
}

impl RigidBodyState {
    /// Level, motionless state at `position_m` with rotors at hover speed.
    pub fn hovering(position_m: Vec3, yaw_rad: f64, params: &UavParams) -> Self {
        let p = params.hover_rpm(position_m.z);
        Self {
            position_m,
            velocity_mps: Vec3::zeros(),
            attitude: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw_rad),
            angular_rate_radps: Vec3::zeros(),
            rotor_rpm: [p; 4],
        }
    }

    /// (roll, pitch, yaw) in radians, ZYX convention.
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        self.attitude.euler_angles()
    }

    pub fn is_finite(&self) -> bool {
        self.position_m.iter().all(|v| v.is_finite())
            && self.velocity_mps.iter().all(|v| v.is_finite())
            && self.angular_rate_radps.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.rotor_rpm.iter().all(|v| v.is_finite())
    }
}

/// Net force (inertial frame) and torque (body frame) acting on the airframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceTorque {
    pub force_n: Vec3,
    pub torque_nm: Vec3,
}

/// Per-rotor thrust and yaw moment, both quadratic in rotor speed.
pub fn motor_forces(rpm: [f64; 4], params: &UavParams) -> ([f64; 4], [f64; 4]) {
    let rpm = params.clamp_rpm(rpm);
    let thrust = rpm.map(|p| params.thrust_coeff * p * p);
    let moment = rpm.map(|p| params.torque_coeff * p * p);
    (thrust, moment)
}

/// Body torques of an X-configuration frame.
pub fn body_torques(thrust: [f64; 4], moment: [f64; 4], params: &UavParams) -> Vec3 {
    let [f1, f2, f3, f4] = thrust;
    let [m1, m2, m3, m4] = moment;
    let lever = params.arm_length_m / std::f64::consts::SQRT_2;
    Vec3::new(
        lever * (f1 - f2 - f3 + f4),
        lever * (f1 + f2 - f3 - f4),
        m1 - m2 + m3 - m4,
    )
}

/// Per-rotor thrust augmentation near the ground. Altitudes below the
/// configured floor are clamped to it.
pub fn ground_effect(rpm: [f64; 4], altitudes_m: [f64; 4], params: &UavParams) -> [f64; 4] {
    let rpm = params.clamp_rpm(rpm);
    let mut out = [0.0; 4];
    for k in 0..4 {
        let h = altitudes_m[k].max(params.min_ground_altitude_m);
        let ratio = params.prop_radius_m / (4.0 * h);
        out[k] = params.ground_effect_coeff * params.thrust_coeff * ratio * ratio * rpm[k] * rpm[k];
    }
    out
}

/// Net wrench for the given rotor speeds. Ground effect uses body altitude for
/// every rotor.
pub fn wrench(state: &RigidBodyState, rpm: [f64; 4], params: &UavParams) -> ForceTorque {
    let (mut thrust, moment) = motor_forces(rpm, params);
    let gain = ground_effect(rpm, [state.position_m.z; 4], params);
    for k in 0..4 {
        thrust[k] += gain[k];
    }
    let total: f64 = thrust.iter().sum();
    let thrust_inertial = state.attitude * Vec3::new(0.0, 0.0, total);
    let gravity = Vec3::new(0.0, 0.0, params.weight_n());
    let drag = Vec3::from(params.drag_diag).component_mul(&state.velocity_mps);
    ForceTorque {
        force_n: thrust_inertial - gravity - drag,
        torque_nm: body_torques(thrust, moment, params),
    }
}

/// Linear acceleration (inertial) and angular acceleration (body).
pub fn derivatives(
    state: &RigidBodyState,
    rpm: [f64; 4],
    params: &UavParams,
) -> Result<(Vec3, Vec3), PhysicsError> {
    let ft = wrench(state, rpm, params);
    let accel = ft.force_n / params.mass_kg;
    let j = params.inertia();
    let omega = state.angular_rate_radps;
    let gyro = omega.cross(&j.component_mul(&omega));
    let ang_accel = (ft.torque_nm - gyro).component_div(&j);
    if !(accel.iter().all(|v| v.is_finite()) && ang_accel.iter().all(|v| v.is_finite())) {
        return Err(PhysicsError::NonFinite {
            quantity: "derivative",
            detail: format!("accel={accel:?} ang_accel={ang_accel:?}"),
        });
    }
    Ok((accel, ang_accel))
}

/// Advance one UAV by `dt_s`.
///
/// Velocity and body rate are updated from the derivatives first; position
/// then moves with the mean of the old and new velocity and attitude rotates
/// by the new body rate. The quaternion is renormalized every step.
pub fn step(
    state: &RigidBodyState,
    rpm_command: [f64; 4],
    dt_s: f64,
    params: &UavParams,
) -> Result<RigidBodyState, PhysicsError> {
    let command = params.clamp_rpm(rpm_command);
    let rotor_rpm = if params.motor_time_constant_s > 0.0 {
        let blend = (dt_s / params.motor_time_constant_s).min(1.0);
        let mut r = state.rotor_rpm;
        for k in 0..4 {
            r[k] += (command[k] - r[k]) * blend;
        }
        r
    } else {
        command
    };

    let (accel, ang_accel) = derivatives(state, rotor_rpm, params)?;
    let velocity = state.velocity_mps + accel * dt_s;
    let omega = state.angular_rate_radps + ang_accel * dt_s;
    let position = state.position_m + (state.velocity_mps + velocity) * (0.5 * dt_s);
    let rotated = state.attitude * UnitQuaternion::from_scaled_axis(omega * dt_s);
    let attitude = UnitQuaternion::new_normalize(rotated.into_inner());

    let next = RigidBodyState {
        position_m: position,
        velocity_mps: velocity,
        attitude,
        angular_rate_radps: omega,
        rotor_rpm,
    };
    if !next.is_finite() {
        return Err(PhysicsError::NonFinite {
            quantity: "state",
            detail: format!("{next:?}"),
        });
    }
    Ok(next)
}

/// Closest pair among a set of positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub distance_m: f64,
    pub pair: Option<(usize, usize)>,
}

/// Minimum pairwise distance; `+inf` with no pair for fewer than two UAVs.
pub fn min_separation<'a, I>(positions: I) -> Separation
where
    I: IntoIterator<Item = &'a Vec3>,
{
    let pts: Vec<&Vec3> = positions.into_iter().collect();
    let mut best = Separation {
        distance_m: f64::INFINITY,
        pair: None,
    };
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let d = (pts[i] - pts[j]).norm();
            if d < best.distance_m {
                best = Separation {
                    distance_m: d,
                    pair: Some((i, j)),
                };
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn level_at(z: f64) -> RigidBodyState {
        RigidBodyState::hovering(Vec3::new(0.0, 0.0, z), 0.0, &UavParams::default())
    }

    #[test]
    fn default_thrust_coeff_puts_hover_mid_range() {
        let p = UavParams::default();
        assert_relative_eq!(p.thrust_coeff, 2.3544e-8, max_relative = 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn zero_rpm_gives_zero_thrust() {
        let (f, m) = motor_forces([0.0; 4], &UavParams::default());
        assert_eq!(f, [0.0; 4]);
        assert_eq!(m, [0.0; 4]);
    }

    #[test]
    fn hover_rpm_total_thrust_matches_weight() {
        let p = UavParams::default();
        let ph = (p.weight_n() / (4.0 * p.thrust_coeff)).sqrt();
        let (f, _) = motor_forces([ph; 4], &p);
        assert_relative_eq!(f.iter().sum::<f64>(), 14.715, max_relative = 1e-12);
    }

    #[test]
    fn doubling_rpm_quadruples_thrust() {
        let p = UavParams::default();
        let (a, _) = motor_forces([5000.0, 0.0, 0.0, 0.0], &p);
        let (b, _) = motor_forces([10000.0, 0.0, 0.0, 0.0], &p);
        assert_relative_eq!(b[0], 4.0 * a[0], max_relative = 1e-12);
    }

    #[test]
    fn out_of_range_rpm_is_clamped() {
        let p = UavParams::default();
        let (f, _) = motor_forces([-10.0, 1e9, 0.0, 0.0], &p);
        assert_eq!(f[0], 0.0);
        assert_relative_eq!(f[1], p.thrust_coeff * p.rpm_max * p.rpm_max);
    }

    #[test]
    fn torques_examples() {
        let p = UavParams::default();
        let t = body_torques([2.0; 4], [0.3, 0.3, 0.3, 0.3], &p);
        assert_eq!(t, Vec3::zeros());

        let p2 = UavParams {
            arm_length_m: std::f64::consts::SQRT_2,
            ..UavParams::default()
        };
        let t = body_torques([1.0, 0.0, 0.0, 0.0], [0.0; 4], &p2);
        assert_relative_eq!(t, Vec3::new(1.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn ground_effect_examples() {
        let p = UavParams::default();
        let rpm = [12_000.0; 4];
        let (f, _) = motor_forces(rpm, &p);

        let g = ground_effect(rpm, [p.prop_radius_m / 4.0; 4], &p);
        assert_relative_eq!(g[0], p.ground_effect_coeff * f[0], max_relative = 1e-12);

        let far = ground_effect(rpm, [1000.0 * p.prop_radius_m; 4], &p);
        assert!(far[0] / f[0] < 1e-6);

        assert_eq!(ground_effect([0.0; 4], [1.0; 4], &p), [0.0; 4]);

        // Below the floor the altitude is clamped.
        let clamped = ground_effect(rpm, [0.0; 4], &p);
        let floor = ground_effect(rpm, [p.min_ground_altitude_m; 4], &p);
        assert_eq!(clamped, floor);
    }

    #[test]
    fn hover_derivatives_vanish() {
        let p = UavParams::default();
        let s = level_at(100.0);
        let (a, w) = derivatives(&s, s.rotor_rpm, &p).unwrap();
        assert!(a.norm() < 1e-9, "{a:?}");
        assert!(w.norm() < 1e-9);
    }

    #[test]
    fn free_fall_and_drag() {
        let p = UavParams::default();
        let mut s = level_at(100.0);
        let (a, _) = derivatives(&s, [0.0; 4], &p).unwrap();
        assert_relative_eq!(a, Vec3::new(0.0, 0.0, -p.gravity_mps2), epsilon = 1e-12);

        let v = 3.0;
        s.velocity_mps = Vec3::new(v, 0.0, 0.0);
        let (a, _) = derivatives(&s, s.rotor_rpm, &p).unwrap();
        assert_relative_eq!(a.x, -p.drag_diag[0] * v / p.mass_kg, epsilon = 1e-9);
        assert!(a.y.abs() < 1e-12 && a.z.abs() < 1e-9);
    }

    #[test]
    fn hover_step_is_fixed_point() {
        let p = UavParams::default();
        let s0 = level_at(100.0);
        let mut s = s0.clone();
        for _ in 0..20 {
            let n = step(&s, s0.rotor_rpm, 0.05, &p).unwrap();
            assert!((n.position_m - s.position_m).norm() < 1e-9);
            assert!((n.velocity_mps - s.velocity_mps).norm() < 1e-9);
            s = n;
        }
    }

    #[test]
    fn motor_lag_approaches_command() {
        let p = UavParams {
            motor_time_constant_s: 0.1,
            ..UavParams::default()
        };
        let s = level_at(100.0);
        let n = step(&s, [20_000.0; 4], 0.05, &p).unwrap();
        assert!(n.rotor_rpm[0] > s.rotor_rpm[0] && n.rotor_rpm[0] < 20_000.0);
    }

    #[test]
    fn min_separation_examples() {
        let a = Vec3::new(0.0, 0.0, 100.0);
        let b = Vec3::new(3.0, 4.0, 100.0);
        let s = min_separation([&a, &b]);
        assert_relative_eq!(s.distance_m, 5.0);
        assert_eq!(s.pair, Some((0, 1)));
        assert_eq!(min_separation([&a, &a]).distance_m, 0.0);
        let none = min_separation([&a]);
        assert!(none.distance_m.is_infinite() && none.pair.is_none());
    }

    #[test]
    fn min_separation_matches_all_pairs() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(10.0, 2.0, 1.0),
        ];
        let s = min_separation(pts.iter());
        let mut best = f64::INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    best = best.min((pts[i] - pts[j]).norm());
                }
            }
        }
        assert_eq!(s.distance_m, best);
        assert_eq!(s.pair, Some((1, 2)));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = UavParams {
            rpm_min: 30_000.0,
            ..UavParams::default()
        };
        assert!(p.validate().is_err());
        let p = UavParams {
            mass_kg: 0.0,
            ..UavParams::default()
        };
        assert!(p.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rpm4() -> impl Strategy<Value = [f64; 4]> {
            proptest::array::uniform4(9_000.0..16_000.0f64)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn attitude_stays_orthonormal(cmds in proptest::collection::vec(rpm4(), 1..60), yaw in -3.0..3.0f64) {
                let p = UavParams::default();
                let mut s = RigidBodyState::hovering(Vec3::new(0.0, 0.0, 150.0), yaw, &p);
                for c in cmds {
                    s = step(&s, c, 0.05, &p).unwrap();
                    let r = s.attitude.to_rotation_matrix().into_inner();
                    let err = (r.transpose() * r - nalgebra::Matrix3::identity()).abs().max();
                    prop_assert!(err < 1e-6, "{err}");
                }
            }

            #[test]
            fn ballistic_energy_is_conserved(v in proptest::array::uniform3(-10.0..10.0f64), z in 200.0..400.0f64) {
                let p = UavParams { drag_diag: [0.0; 3], rpm_min: 0.0, ..UavParams::default() };
                let mut s = RigidBodyState::hovering(Vec3::new(0.0, 0.0, z), 0.0, &p);
                s.velocity_mps = Vec3::from(v);
                let energy = |s: &RigidBodyState| 0.5 * p.mass_kg * s.velocity_mps.norm_squared() + p.weight_n() * s.position_m.z;
                let e0 = energy(&s);
                for _ in 0..100 {
                    s = step(&s, [0.0; 4], 0.05, &p).unwrap();
                }
                prop_assert!((energy(&s) - e0).abs() <= 5e-3 * e0.abs());
            }

            #[test]
            fn ground_effect_falls_with_altitude(rpm in 1_000.0..25_000.0f64, h in 0.02..50.0f64, dh in 0.01..10.0f64) {
                let p = UavParams::default();
                let low = ground_effect([rpm; 4], [h; 4], &p)[0];
                let high = ground_effect([rpm; 4], [h + dh; 4], &p)[0];
                prop_assert!(high < low);
            }

            #[test]
            fn thrust_grows_with_rpm(rpm in 0.0..24_000.0f64, d in 1.0..1_000.0f64, z in 0.5..300.0f64) {
                let p = UavParams::default();
                let s = RigidBodyState::hovering(Vec3::new(0.0, 0.0, z), 0.0, &p);
                let lo = wrench(&s, [rpm; 4], &p).force_n.z;
                let hi = wrench(&s, [(rpm + d).min(p.rpm_max); 4], &p).force_n.z;
                prop_assert!(hi > lo);
            }
        }
    }
}
