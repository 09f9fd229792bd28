use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{linear_to_db, weighted_rate};
use crate::config::ScenarioConfig;

use super::types::{HapsObservation, HapsUserView, LocalObservation, Neighbor, NodeId};
use super::WorldState;

fn noisy<R: Rng + ?Sized, const N: usize>(v: [f64; N], sigma: f64, rng: &mut R) -> [f64; N] {
    if sigma <= 0.0 {
        return v;
    }
    let dist = Normal::new(0.0, sigma).expect("finite sigma");
    v.map(|x| x + dist.sample(rng))
}

/// Noisy onboard view of UAV `m`. Zero sigmas give the ground truth.
pub fn observe_local<R: Rng + ?Sized>(
    world: &WorldState,
    m: usize,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> LocalObservation {
    let s = &world.uavs[m];
    let sc = &cfg.sensors;
    let (roll, pitch, yaw) = s.euler_angles();

    let position = noisy(s.position_m.into(), sc.position_sigma_m, rng);
    let velocity = noisy(s.velocity_mps.into(), sc.velocity_sigma_mps, rng);
    let euler = noisy([roll, pitch, yaw], sc.attitude_sigma_rad, rng);
    let rate = noisy(
        s.angular_rate_radps.into(),
        sc.angular_rate_sigma_radps,
        rng,
    );

    let mut neighbors = Vec::new();
    for (j, other) in world.uavs.iter().enumerate() {
        if j == m {
            continue;
        }
        let true_rel = other.position_m - s.position_m;
        let d = true_rel.norm();
        if d > sc.perception_radius_m {
            continue;
        }
        let rel_p = [0, 1, 2].map(|i| other.position_m[i] - position[i]);
        let rel_v = [0, 1, 2].map(|i| other.velocity_mps[i] - velocity[i]);
        neighbors.push(Neighbor {
            uav: j,
            rel_position_m: rel_p,
            rel_velocity_mps: rel_v,
            distance_m: rel_p.iter().map(|x| x * x).sum::<f64>().sqrt(),
        });
    }

    let link = &world.links[m];
    LocalObservation {
        uav: m,
        t: world.t,
        position_m: position,
        velocity_mps: velocity,
        euler_rad: euler,
        angular_rate_radps: rate,
        rotor_rpm: s.rotor_rpm,
        neighbors,
        serving: world.serving[m],
        serving_distance_m: link.distance_m,
        serving_sinr_db: linear_to_db(link.sinr_linear.max(1e-30)),
        node_sinr_db: world.node_sinr[m]
            .iter()
            .map(|s| linear_to_db(s.max(1e-30)))
            .collect(),
        target_position_m: world.targets[m].into(),
        haps_eligible: !world.offloaded.contains(&m),
    }
}

/// Exact HAPS-tier aggregates.
pub fn observe_haps(world: &WorldState, cfg: &ScenarioConfig) -> HapsObservation {
    let haps = &cfg.channel.haps;
    let hp = haps.position();
    let n_h = world.load(NodeId::Haps);
    let users = (0..world.num_uavs())
        .map(|m| {
            let associated = world.serving[m].is_haps();
            let rate = if associated {
                world.haps_rate_bps[m]
            } else {
                0.0
            };
            HapsUserView {
                uav: m,
                distance_m: (world.uavs[m].position_m - hp).norm(),
                associated,
                offloaded: world.offloaded.contains(&m),
                rate_bps: rate,
                weighted_rate_bps: if associated {
                    weighted_rate(
                        rate,
                        haps.quota,
                        n_h,
                        world.handover[m],
                        cfg.channel.handover_rate_penalty,
                    )
                } else {
                    0.0
                },
            }
        })
        .collect();
    HapsObservation {
        t: world.t,
        haps_load_bps: world.haps_load_bps,
        capacity_bps: haps.capacity_limit_bps,
        remaining_capacity_bps: (haps.capacity_limit_bps - world.haps_load_bps).max(0.0),
        quota: haps.quota,
        users,
    }
}
