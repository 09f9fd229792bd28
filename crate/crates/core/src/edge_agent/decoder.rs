//! Semantic directive to rotor speeds.
//!
//! A directive is first turned into a velocity and yaw setpoint, latched
//! until the next directive. A cascaded controller then maps velocity error
//! to a desired acceleration, the acceleration to a thrust direction and
//! collective thrust, attitude error to body torques, and the wrench back to
//! per-rotor speeds through the inverse of the X-frame mixer.

use serde::{Deserialize, Serialize};

use crate::channel::wrap_angle;
use crate::cognition::{Magnitude, Maneuver, SemanticDirective};
use crate::config::ConfigError;
use crate::env::LocalObservation;
use crate::physics::{UavParams, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// Horizontal speed for GENTLE, NORMAL, AGGRESSIVE.
    pub speeds_mps: [f64; 3],
    pub vertical_speed_mps: f64,
    /// Fractional speed change of ACCELERATE and DECELERATE.
    pub speed_change_frac: f64,
    /// Below this speed ACCELERATE starts along the heading instead.
    pub min_scalable_speed_mps: f64,
    /// Speed ACCELERATE commands when starting from (near) rest.
    pub start_speed_mps: f64,
    pub max_speed_mps: f64,
    pub velocity_kp: f64,
    /// Damping on the filtered acceleration estimate.
    pub velocity_kd: f64,
    pub vertical_kp: f64,
    /// EMA weight of the newest acceleration sample.
    pub accel_filter: f64,
    pub max_tilt_deg: f64,
    /// Vertical acceleration command bounds.
    pub max_climb_accel_mps2: f64,
    pub max_sink_accel_mps2: f64,
    /// Roll/pitch and yaw gains of the attitude loop (rad/s² per rad).
    pub tilt_kp: f64,
    pub tilt_kd: f64,
    pub yaw_kp: f64,
    pub yaw_kd: f64,
    /// Floor on cos(roll)·cos(pitch) in the thrust compensation.
    pub min_tilt_cosine: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            speeds_mps: [2.0, 5.0, 10.0],
            vertical_speed_mps: 2.0,
            speed_change_frac: 0.25,
            min_scalable_speed_mps: 1.0,
            start_speed_mps: 2.0,
            max_speed_mps: 15.0,
            velocity_kp: 2.0,
            velocity_kd: 0.5,
            vertical_kp: 2.0,
            accel_filter: 0.3,
            max_tilt_deg: 14.5,
            max_climb_accel_mps2: 4.0,
            max_sink_accel_mps2: 4.0,
            tilt_kp: 64.0,
            tilt_kd: 16.0,
            yaw_kp: 4.0,
            yaw_kd: 4.0,
            min_tilt_cosine: 0.5,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |f: &str, r: &str| Err(ConfigError::new(format!("agent.decoder.{f}"), r));
        if self.speeds_mps.iter().any(|s| !(*s >= 0.0)) {
            return bad("speeds_mps", "must be >= 0");
        }
        if !(self.max_speed_mps > 0.0) {
            return bad("max_speed_mps", "must be > 0");
        }
        if !(self.max_tilt_deg > 0.0 && self.max_tilt_deg < 60.0) {
            return bad("max_tilt_deg", "must lie in (0, 60)");
        }
        if !(self.accel_filter > 0.0 && self.accel_filter <= 1.0) {
            return bad("accel_filter", "must lie in (0, 1]");
        }
        if !(self.min_tilt_cosine > 0.0 && self.min_tilt_cosine <= 1.0) {
            return bad("min_tilt_cosine", "must lie in (0, 1]");
        }
        for (f, v) in [
            ("velocity_kp", self.velocity_kp),
            ("vertical_kp", self.vertical_kp),
            ("tilt_kp", self.tilt_kp),
            ("yaw_kp", self.yaw_kp),
        ] {
            if !(v > 0.0) {
                return bad(f, "must be > 0");
            }
        }
        for (f, v) in [
            ("velocity_kd", self.velocity_kd),
            ("tilt_kd", self.tilt_kd),
            ("yaw_kd", self.yaw_kd),
            ("speed_change_frac", self.speed_change_frac),
            ("max_climb_accel_mps2", self.max_climb_accel_mps2),
            ("max_sink_accel_mps2", self.max_sink_accel_mps2),
        ] {
            if !(v >= 0.0) {
                return bad(f, "must be >= 0");
            }
        }
        Ok(())
    }
}

/// Velocity (inertial) and heading the controller tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSetpoint {
    pub target_velocity_mps: [f64; 3],
    pub target_yaw_rad: f64,
}

fn magnitude_speed(m: Magnitude, cfg: &DecoderConfig) -> f64 {
    cfg.speeds_mps[m.index()]
}

/// Setpoint for `directive` given the current velocity and heading.
/// Translations are taken in the heading frame; the heading is held.
pub fn directive_setpoint(
    directive: SemanticDirective,
    velocity_mps: [f64; 3],
    yaw_rad: f64,
    cfg: &DecoderConfig,
) -> MotionSetpoint {
    let (c, s) = (yaw_rad.cos(), yaw_rad.sin());
    let speed = magnitude_speed(directive.magnitude, cfg);
    let heading = |fwd: f64, left: f64| {
        [
            speed * (fwd * c - left * s),
            speed * (fwd * s + left * c),
            0.0,
        ]
    };
    let v = velocity_mps;
    let current = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut target = match directive.maneuver {
        Maneuver::Forward => heading(1.0, 0.0),
        Maneuver::Back => heading(-1.0, 0.0),
        Maneuver::Left => heading(0.0, 1.0),
        Maneuver::Right => heading(0.0, -1.0),
        Maneuver::Ascend => [0.0, 0.0, cfg.vertical_speed_mps],
        Maneuver::Descend => [0.0, 0.0, -cfg.vertical_speed_mps],
        Maneuver::Hover => [0.0; 3],
        Maneuver::Accelerate => {
            if current < cfg.min_scalable_speed_mps {
                [cfg.start_speed_mps * c, cfg.start_speed_mps * s, 0.0]
            } else {
                v.map(|x| x * (1.0 + cfg.speed_change_frac))
            }
        }
        Maneuver::Decelerate => {
            if current < cfg.min_scalable_speed_mps {
                [0.0; 3]
            } else {
                v.map(|x| x * (1.0 - cfg.speed_change_frac))
            }
        }
    };
    let norm = (target[0] * target[0] + target[1] * target[1] + target[2] * target[2]).sqrt();
    if norm > cfg.max_speed_mps {
        target = target.map(|x| x * cfg.max_speed_mps / norm);
    }
    MotionSetpoint {
        target_velocity_mps: target,
        target_yaw_rad: yaw_rad,
    }
}

/// Cascaded velocity/attitude controller with its filter state.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionDecoder {
    cfg: DecoderConfig,
    params: UavParams,
    dt_s: f64,
    setpoint: MotionSetpoint,
    prev_velocity: Option<Vec3>,
    accel_est: Vec3,
}

/// Per-step controller output, kept for logging and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub rotor_rpm: [f64; 4],
    pub thrust_n: f64,
    pub torque_nm: [f64; 3],
    pub desired_roll_rad: f64,
    pub desired_pitch_rad: f64,
}

impl MotionDecoder {
    pub fn new(cfg: DecoderConfig, params: UavParams, dt_s: f64) -> Self {
        Self {
            cfg,
            params,
            dt_s,
            setpoint: MotionSetpoint {
                target_velocity_mps: [0.0; 3],
                target_yaw_rad: 0.0,
            },
            prev_velocity: None,
            accel_est: Vec3::zeros(),
        }
    }

    pub fn setpoint(&self) -> MotionSetpoint {
        self.setpoint
    }

    /// Latch a new setpoint for `directive` from the current observation.
    pub fn set_directive(&mut self, directive: SemanticDirective, obs: &LocalObservation) {
        self.setpoint =
            directive_setpoint(directive, obs.velocity_mps, obs.euler_rad[2], &self.cfg);
    }

    pub fn set_setpoint(&mut self, sp: MotionSetpoint) {
        self.setpoint = sp;
    }

    /// Rotor speeds for this step.
    pub fn control(&mut self, obs: &LocalObservation) -> ControlOutput {
        let cfg = &self.cfg;
        let p = &self.params;
        let g = p.gravity_mps2;
        let v = Vec3::from(obs.velocity_mps);

        if let Some(prev) = self.prev_velocity {
            let raw = (v - prev) / self.dt_s;
            self.accel_est += (raw - self.accel_est) * cfg.accel_filter;
        }
        self.prev_velocity = Some(v);

        // Velocity loop with drag feed-forward.
        let sp = Vec3::from(self.setpoint.target_velocity_mps);
        let drag = Vec3::from(p.drag_diag).component_mul(&v) / p.mass_kg;
        let mut a = (sp - v) * cfg.velocity_kp - self.accel_est * cfg.velocity_kd + drag;
        a.z = (sp.z - v.z) * cfg.vertical_kp - self.accel_est.z * cfg.velocity_kd + drag.z;
        a.z =
            a.z.clamp(-cfg.max_sink_accel_mps2, cfg.max_climb_accel_mps2);
        let max_h = (g + a.z) * cfg.max_tilt_deg.to_radians().tan();
        let h = a.x.hypot(a.y);
        if h > max_h {
            a.x *= max_h / h;
            a.y *= max_h / h;
        }

        // Thrust direction in the heading frame gives the desired roll/pitch.
        let yaw_sp = self.setpoint.target_yaw_rad;
        let (c, s) = (yaw_sp.cos(), yaw_sp.sin());
        let d = Vec3::new(a.x, a.y, g + a.z).normalize();
        let dx = c * d.x + s * d.y;
        let dy = -s * d.x + c * d.y;
        let roll_des = (-dy).clamp(-1.0, 1.0).asin();
        let pitch_des = dx.atan2(d.z);

        let [roll, pitch, yaw] = obs.euler_rad;
        let tilt_cos = (roll.cos() * pitch.cos()).max(cfg.min_tilt_cosine);
        let thrust = p.mass_kg * (g + a.z) / tilt_cos;

        // Attitude loop with gyroscopic compensation.
        let w = Vec3::from(obs.angular_rate_radps);
        let j = p.inertia();
        let ang_acc = Vec3::new(
            cfg.tilt_kp * wrap_angle(roll_des - roll) - cfg.tilt_kd * w.x,
            cfg.tilt_kp * wrap_angle(pitch_des - pitch) - cfg.tilt_kd * w.y,
            cfg.yaw_kp * wrap_angle(yaw_sp - yaw) - cfg.yaw_kd * w.z,
        );
        let torque = j.component_mul(&ang_acc) + w.cross(&j.component_mul(&w));

        let rotor_rpm = mix(thrust, torque, obs.position_m[2], p);
        ControlOutput {
            rotor_rpm,
            thrust_n: thrust,
            torque_nm: torque.into(),
            desired_roll_rad: roll_des,
            desired_pitch_rad: pitch_des,
        }
    }
}

/// Invert the X-frame mixer: collective thrust and body torques to rotor
/// speeds, clamped to the rotor limits.
pub fn mix(thrust_n: f64, torque_nm: Vec3, altitude_m: f64, p: &UavParams) -> [f64; 4] {
    let gf = p.ground_effect_factor(altitude_m);
    let lever = p.arm_length_m / std::f64::consts::SQRT_2;
    let yaw_arm = p.torque_coeff / (p.thrust_coeff * gf);
    let t = thrust_n / 4.0;
    let x = torque_nm.x / (4.0 * lever);
    let y = torque_nm.y / (4.0 * lever);
    let z = torque_nm.z / (4.0 * yaw_arm);
    let forces = [t + x + y + z, t - x + y - z, t - x - y + z, t + x - y - z];
    forces.map(|f| {
        let rpm = (f.max(0.0) / (p.thrust_coeff * gf)).sqrt();
        if rpm.is_finite() {
            rpm.clamp(p.rpm_min, p.rpm_max)
        } else {
            p.rpm_min
        }
    })
}
