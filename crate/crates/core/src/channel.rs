//! Radio link layer.
//!
//! Terrestrial base stations (TBS) use a sectorized antenna element pattern
//! plus a vertical uniform linear array, a probabilistic LoS/NLoS path-loss
//! mixture, and interference from every other TBS. The HAPS link is free
//! space with Rician small-scale fading and an equal bandwidth split.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::Vec3;

pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;

/// Floor on the array-factor amplitude before the dB conversion.
pub const ARRAY_FACTOR_FLOOR: f64 = 1e-6;
/// Below this denominator argument the array factor takes its boresight limit.
pub const ARRAY_FACTOR_SINGULAR_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("channel domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TbsConfig {
    /// Antenna position; z is the mast height.
    pub position_m: [f64; 3],
    pub tx_power_dbm: f64,
    pub num_antennas: u32,
    /// Boresight elevation of the vertical array (negative tilts down).
    pub downtilt_rad: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub peak_element_gain_dbi: f64,
    pub sidelobe_limit_db: f64,
    pub sla_db: f64,
    pub half_power_beamwidth_rad: f64,
    /// Number of equally spaced sectors; the first points along +x.
    pub num_sectors: u32,
    pub quota: usize,
}

impl Default for TbsConfig {
    fn default() -> Self {
        Self {
            position_m: [250.0, 250.0, 25.0],
            tx_power_dbm: 40.0,
            num_antennas: 8,
            downtilt_rad: -6f64.to_radians(),
            bandwidth_hz: 10e6,
            carrier_hz: 2.1e9,
            peak_element_gain_dbi: 8.0,
            sidelobe_limit_db: 30.0,
            sla_db: 30.0,
            half_power_beamwidth_rad: 65f64.to_radians(),
            num_sectors: 3,
            quota: 5,
        }
    }
}

impl TbsConfig {
    pub fn at(x: f64, y: f64) -> Self {
        let mut c = Self::default();
        c.position_m[0] = x;
        c.position_m[1] = y;
        c
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position_m)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.bandwidth_hz > 0.0) {
            return Err("bandwidth_hz must be > 0".into());
        }
        if !(self.carrier_hz > 0.0) {
            return Err("carrier_hz must be > 0".into());
        }
        if self.num_antennas == 0 {
            return Err("num_antennas must be >= 1".into());
        }
        if !(self.half_power_beamwidth_rad > 0.0 && self.half_power_beamwidth_rad < PI) {
            return Err("half_power_beamwidth_rad must lie in (0, pi)".into());
        }
        if self.num_sectors == 0 {
            return Err("num_sectors must be >= 1".into());
        }
        if self.quota == 0 {
            return Err("quota must be >= 1".into());
        }
        if !self.tx_power_dbm.is_finite() {
            return Err("tx_power_dbm must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapsConfig {
    pub position_m: [f64; 3],
    pub total_bandwidth_hz: f64,
    pub antenna_gain_linear: f64,
    pub carrier_hz: f64,
    pub rician_k_db: f64,
    pub max_uav_tx_power_dbm: f64,
    pub capacity_limit_bps: f64,
    pub quota: usize,
}

impl Default for HapsConfig {
    fn default() -> Self {
        Self {
            position_m: [500.0, 500.0, 20_000.0],
            total_bandwidth_hz: 20e6,
            antenna_gain_linear: 10.0,
            carrier_hz: 2e9,
            rician_k_db: 15.0,
            max_uav_tx_power_dbm: 23.0,
            capacity_limit_bps: 100e6,
            quota: 5,
        }
    }
}

impl HapsConfig {
    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position_m)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.total_bandwidth_hz > 0.0) {
            return Err("total_bandwidth_hz must be > 0".into());
        }
        if !(self.capacity_limit_bps > 0.0) {
            return Err("capacity_limit_bps must be > 0".into());
        }
        if !(self.antenna_gain_linear > 0.0 && self.carrier_hz > 0.0) {
            return Err("antenna_gain_linear and carrier_hz must be > 0".into());
        }
        if self.quota == 0 {
            return Err("quota must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub noise_psd_dbm_per_hz: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            noise_psd_dbm_per_hz: -174.0,
        }
    }
}

impl NoiseModel {
    pub fn power_mw(&self, bandwidth_hz: f64) -> f64 {
        dbm_to_mw(self.noise_psd_dbm_per_hz) * bandwidth_hz
    }
}

/// `L = intercept + (distance_coeff + altitude_distance_coeff·log10 h)·log10 d
///      + frequency_coeff·log10 f_GHz`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogDistanceLoss {
    pub intercept_db: f64,
    pub distance_coeff: f64,
    pub altitude_distance_coeff: f64,
    pub frequency_coeff: f64,
}

impl LogDistanceLoss {
    pub fn loss_db(&self, distance_m: f64, altitude_m: f64, carrier_hz: f64) -> f64 {
        let slope = self.distance_coeff + self.altitude_distance_coeff * altitude_m.log10();
        self.intercept_db
            + slope * distance_m.log10()
            + self.frequency_coeff * (carrier_hz / 1e9).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossModel {
    pub los: LogDistanceLoss,
    pub nlos: LogDistanceLoss,
    /// Force LoS probability to 1 inside `los_band_m`.
    pub assume_los_band: bool,
    pub los_band_m: [f64; 2],
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            los: LogDistanceLoss {
                intercept_db: 28.0,
                distance_coeff: 22.0,
                altitude_distance_coeff: 0.0,
                frequency_coeff: 20.0,
            },
            // 20·log10(40π f/3) split into a constant and a frequency term.
            nlos: LogDistanceLoss {
                intercept_db: -17.5 + 20.0 * (40.0 * PI / 3.0).log10(),
                distance_coeff: 46.0,
                altitude_distance_coeff: -7.0,
                frequency_coeff: 20.0,
            },
            assume_los_band: true,
            los_band_m: [100.0, 300.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub noise: NoiseModel,
    pub path_loss: PathLossModel,
    /// Rate penalty applied on a handover step.
    pub handover_rate_penalty: f64,
    /// Scale fading so that E|h|² = 1.
    pub normalize_fading: bool,
    pub tbs: Vec<TbsConfig>,
    pub haps: HapsConfig,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            noise: NoiseModel::default(),
            path_loss: PathLossModel::default(),
            handover_rate_penalty: 0.2,
            normalize_fading: false,
            tbs: vec![
                TbsConfig::at(250.0, 250.0),
                TbsConfig::at(750.0, 250.0),
                TbsConfig::at(250.0, 750.0),
                TbsConfig::at(750.0, 750.0),
            ],
            haps: HapsConfig::default(),
        }
    }
}

/// Instantaneous RF quantities of one UAV-node link.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkSample {
    pub distance_m: f64,
    pub azimuth_rad: f64,
    pub elevation_rad: f64,
    pub gain_linear: f64,
    pub sinr_linear: f64,
    pub rate_bps: f64,
    pub weighted_rate_bps: f64,
    pub los_prob: f64,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Combined element gain in dB for angles relative to the sector boresight.
pub fn element_gain_db(azimuth_rad: f64, elevation_rad: f64, cfg: &TbsConfig) -> f64 {
    let az = (azimuth_rad / cfg.half_power_beamwidth_rad).powi(2);
    let el = (elevation_rad / cfg.half_power_beamwidth_rad).powi(2);
    let a_az = (12.0 * az).min(cfg.sidelobe_limit_db);
    let a_el = (12.0 * el).min(cfg.sla_db);
    cfg.peak_element_gain_dbi - (a_az + a_el).min(cfg.sidelobe_limit_db)
}

/// Vertical array factor amplitude, normalized so that boresight gives √N.
pub fn array_factor_amplitude(elevation_rad: f64, cfg: &TbsConfig) -> f64 {
    let n = f64::from(cfg.num_antennas);
    let delta = elevation_rad.sin() - cfg.downtilt_rad.sin();
    let half = 0.5 * PI * delta;
    if half.abs() < ARRAY_FACTOR_SINGULAR_EPS {
        return n.sqrt();
    }
    (n * half).sin() / (n.sqrt() * half.sin())
}

/// Element gain plus array gain, dB.
pub fn pattern_gain_db(azimuth_rad: f64, elevation_rad: f64, cfg: &TbsConfig) -> f64 {
    let af = array_factor_amplitude(elevation_rad, cfg)
        .abs()
        .max(ARRAY_FACTOR_FLOOR);
    element_gain_db(azimuth_rad, elevation_rad, cfg) + 20.0 * af.log10()
}

/// Probability of line of sight between a UAV at altitude `h` and a TBS at
/// horizontal-or-3D distance `d`.
pub fn los_probability(
    distance_m: f64,
    altitude_m: f64,
    model: &PathLossModel,
) -> Result<f64, ChannelError> {
    if !(altitude_m > 0.0) {
        return Err(ChannelError::Domain(format!(
            "altitude must be > 0, got {altitude_m}"
        )));
    }
    if !(distance_m > 0.0) {
        return Err(ChannelError::Domain(format!(
            "distance must be > 0, got {distance_m}"
        )));
    }
    if model.assume_los_band
        && altitude_m >= model.los_band_m[0]
        && altitude_m <= model.los_band_m[1]
    {
        return Ok(1.0);
    }
    let lh = altitude_m.log10();
    let d1 = (460.0 * lh - 700.0).max(18.0);
    if distance_m <= d1 {
        return Ok(1.0);
    }
    let p1 = 4300.0 * lh - 3800.0;
    let scatter = if p1 > 0.0 {
        (-distance_m / p1).exp()
    } else {
        0.0
    };
    let ratio = d1 / distance_m;
    Ok((ratio + scatter * (1.0 - ratio)).clamp(0.0, 1.0))
}

pub fn mixture_path_loss_db(los_db: f64, nlos_db: f64, los_prob: f64) -> f64 {
    los_db * los_prob + nlos_db * (1.0 - los_prob)
}

/// Mean path loss with its LoS probability.
pub fn mean_path_loss_db(
    distance_m: f64,
    altitude_m: f64,
    carrier_hz: f64,
    model: &PathLossModel,
) -> Result<(f64, f64), ChannelError> {
    let p = los_probability(distance_m, altitude_m, model)?;
    let l_los = model.los.loss_db(distance_m, altitude_m, carrier_hz);
    let l_nlos = model.nlos.loss_db(distance_m, altitude_m, carrier_hz);
    Ok((mixture_path_loss_db(l_los, l_nlos, p), p))
}

/// Geometry of a UAV relative to a TBS: 3D distance, azimuth relative to the
/// closest sector boresight, elevation above the antenna horizon.
pub fn tbs_geometry(uav_pos: &Vec3, tbs: &TbsConfig) -> (f64, f64, f64) {
    let rel = uav_pos - tbs.position();
    let horizontal = rel.x.hypot(rel.y);
    let distance = rel.norm();
    let bearing = rel.y.atan2(rel.x);
    let width = TAU / f64::from(tbs.num_sectors);
    let mut azimuth = f64::INFINITY;
    for s in 0..tbs.num_sectors {
        let off = wrap_angle(bearing - width * f64::from(s));
        if off.abs() < azimuth.abs() {
            azimuth = off;
        }
    }
    let elevation = rel.z.atan2(horizontal);
    (distance, azimuth, elevation)
}

/// Large-scale gain and geometry of one UAV-TBS link (no SINR yet).
pub fn tbs_link(
    uav_pos: &Vec3,
    tbs: &TbsConfig,
    model: &PathLossModel,
) -> Result<LinkSample, ChannelError> {
    let (distance, azimuth, elevation) = tbs_geometry(uav_pos, tbs);
    let (loss, p) = mean_path_loss_db(distance, uav_pos.z, tbs.carrier_hz, model)?;
    let pattern = pattern_gain_db(azimuth, elevation, tbs);
    Ok(LinkSample {
        distance_m: distance,
        azimuth_rad: azimuth,
        elevation_rad: elevation,
        gain_linear: db_to_linear(pattern - loss),
        los_prob: p,
        ..LinkSample::default()
    })
}

/// Downlink SINR from `all_tbs[serving]`, every other TBS interfering.
pub fn g2a_sinr(
    uav_pos: &Vec3,
    serving: usize,
    all_tbs: &[TbsConfig],
    model: &PathLossModel,
    noise: &NoiseModel,
) -> Result<LinkSample, ChannelError> {
    if all_tbs.is_empty() {
        return Err(ChannelError::Domain("no terrestrial base stations".into()));
    }
    let Some(cfg) = all_tbs.get(serving) else {
        return Err(ChannelError::Domain(format!(
            "serving index {serving} out of range"
        )));
    };
    let mut link = tbs_link(uav_pos, cfg, model)?;
    let mut interference = 0.0;
    for (b, other) in all_tbs.iter().enumerate() {
        if b != serving {
            let g = tbs_link(uav_pos, other, model)?.gain_linear;
            interference += dbm_to_mw(other.tx_power_dbm) * g;
        }
    }
    let signal = dbm_to_mw(cfg.tx_power_dbm) * link.gain_linear;
    link.sinr_linear = signal / (noise.power_mw(cfg.bandwidth_hz) + interference);
    link.rate_bps = shannon_rate(cfg.bandwidth_hz, link.sinr_linear);
    Ok(link)
}

pub fn shannon_rate(bandwidth_hz: f64, sinr_linear: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr_linear).log2()
}

/// Analytic mean of |h|² for the fading model below.
pub fn rician_mean_power(k_db: f64, normalize: bool) -> f64 {
    if normalize {
        return 1.0;
    }
    let k = db_to_linear(k_db);
    (k + 2.0) / (2.0 * (k + 1.0))
}

/// One Rician small-scale fading coefficient.
pub fn rician_sample<R: Rng + ?Sized>(k_db: f64, normalize: bool, rng: &mut R) -> Complex<f64> {
    let k = db_to_linear(k_db);
    let theta = rng.gen::<f64>() * TAU;
    let gi: f64 = StandardNormal.sample(rng);
    let gq: f64 = StandardNormal.sample(rng);
    let los = (k / (k + 1.0)).sqrt();
    let scatter = (1.0 / (k + 1.0)).sqrt();
    let h = Complex::new(
        FRAC_1_SQRT_2 * (los * theta.cos() + scatter * gi),
        FRAC_1_SQRT_2 * (los * theta.sin() + scatter * gq),
    );
    if normalize {
        h / rician_mean_power(k_db, false).sqrt()
    } else {
        h
    }
}

/// Free-space HAPS gain scaled by the fading power.
pub fn haps_channel_gain(distance_m: f64, fading_power: f64, cfg: &HapsConfig) -> f64 {
    let fspl = SPEED_OF_LIGHT_MPS / (4.0 * PI * distance_m * cfg.carrier_hz);
    cfg.antenna_gain_linear * fspl * fspl * fading_power
}

/// Achievable uplink rate for a bandwidth share `b` and power share `p`.
pub fn haps_rate(
    bandwidth_frac: f64,
    power_frac: f64,
    gain: f64,
    cfg: &HapsConfig,
    noise: &NoiseModel,
) -> f64 {
    if bandwidth_frac <= 0.0 {
        return 0.0;
    }
    let bw = bandwidth_frac * cfg.total_bandwidth_hz;
    let snr = power_frac * dbm_to_mw(cfg.max_uav_tx_power_dbm) * gain / noise.power_mw(bw);
    shannon_rate(bw, snr)
}

/// Rate share with the per-node user divisor and handover penalty.
pub fn weighted_rate(rate_bps: f64, quota: usize, load: usize, handover: bool, gamma: f64) -> f64 {
    let divisor = quota.min(load).max(1) as f64;
    let penalty = if handover { 1.0 - gamma } else { 1.0 };
    rate_bps / divisor * penalty
}
