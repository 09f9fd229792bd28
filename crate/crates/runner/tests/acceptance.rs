//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits nonzero if any check fails.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use skylane::channel::{
    element_gain_db, g2a_sinr, rician_sample, weighted_rate, ChannelConfig, TbsConfig,
};
use skylane::cognition::policy::{
    CallCounts, HeuristicPolicy, Metered, PolicyTier, ScriptedPolicy,
};
use skylane::cognition::{
    BackendMode, EpisodicMemory, MemoryRecord, RecordReward, SemanticDirective, SemanticPolicy,
};
use skylane::edge_agent::learner::td_loss_and_grad;
use skylane::edge_agent::{
    DecoderConfig, Mlp, MotionDecoder, QLearner, QLearnerConfig, TelecomPolicyKind, Transition,
};
use skylane::env::{
    Env, Event, JointAction, LocalObservation, MetaAction, NodeId, TelecomAction, UavSpawn,
};
use skylane::meta_controller::{MetaController, MetaMode};
use skylane::physics::{self, RigidBodyState, UavParams, Vec3};
use skylane::ScenarioConfig;
use skylane_runner::{run, MemorySink, PolicySet, Session};

// Pinned tolerances.
const HOVER_DERIVATIVE_TOL: f64 = 1e-9;
const FREE_FALL_REL_TOL: f64 = 0.02;
const YAW_REL_TOL: f64 = 1e-9;
const ENERGY_REL_TOL: f64 = 0.005;
const PHYSICS_BUDGET: Duration = Duration::from_secs(1);
const CHANNEL_REL_TOL: f64 = 1e-9;
const CHANNEL_GEOMETRIES: usize = 50;
const RICIAN_SAMPLES: usize = 1_000_000;
const RICIAN_REL_TOL: f64 = 0.005;
const RICIAN_BUDGET: Duration = Duration::from_secs(5);
const WEIGHTED_RATE_REL_TOL: f64 = 1e-15;
const OFFLOAD_BUDGET: Duration = Duration::from_secs(10);
const ABLATION_SEEDS: u64 = 5;
const VIOLATION_OFF_MIN: f64 = 0.5;
const INVARIANT_SEEDS: u64 = 5;
const DDQN_SEEDS: u64 = 5;
const DDQN_STEPS: usize = 20_000;
const DDQN_WINDOW: usize = 1_000;
const DDQN_MIN_RATIO: f64 = 1.5;
const GRADIENT_REL_TOL: f64 = 1e-4;
const DDQN_BUDGET: Duration = Duration::from_secs(120);
const TILT_LIMIT_DEG: f64 = 15.0;
const HOLD_S: f64 = 10.0;
const RETRIEVAL_FIXTURES: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn base_config(num_uavs: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.airspace.num_uavs = num_uavs;
    cfg
}

// 1 -----------------------------------------------------------------------

fn physics_oracles() -> Outcome {
    let p = UavParams::default();
    let dt = 0.05;
    let mut notes = Vec::new();
    let mut ok = true;

    let started = Instant::now();
    let hover = RigidBodyState::hovering(Vec3::new(0.0, 0.0, 100.0), 0.4, &p);
    let (a, w) = physics::derivatives(&hover, hover.rotor_rpm, &p).unwrap();
    let norm = a.norm().max(w.norm());
    ok &= norm < HOVER_DERIVATIVE_TOL && started.elapsed() < PHYSICS_BUDGET;
    notes.push(format!("hover |d/dt|={norm:.1e}"));

    // Free fall from rest with rotors off and drag off for 1 s.
    let started = Instant::now();
    let still = UavParams {
        drag_diag: [0.0; 3],
        ..p.clone()
    };
    let mut s = RigidBodyState::hovering(Vec3::new(0.0, 0.0, 200.0), 0.0, &still);
    s.rotor_rpm = [0.0; 4];
    for _ in 0..20 {
        s = physics::step(&s, [0.0; 4], dt, &still).unwrap();
    }
    let fell = 200.0 - s.position_m.z;
    let expected = 0.5 * 9.81 * 1.0 * 1.0;
    let err = (fell - expected).abs() / expected;
    ok &= err <= FREE_FALL_REL_TOL && started.elapsed() < PHYSICS_BUDGET;
    notes.push(format!("free fall {fell:.4} m vs {expected:.4} m"));

    // Yaw spin-up from rotors split ±δ around hover: τ_z = 8·k_T·P·δ, so
    // after N semi-implicit steps ψ = α·dt²·N(N+1)/2.
    let started = Instant::now();
    let ph = p.hover_rpm(150.0);
    let delta = 200.0;
    let cmd = [ph + delta, ph - delta, ph + delta, ph - delta];
    let alpha = 8.0 * p.torque_coeff * ph * delta / p.inertia_diag[2];
    let mut s = RigidBodyState::hovering(Vec3::new(0.0, 0.0, 150.0), 0.0, &p);
    let n = 10u32;
    for _ in 0..n {
        s = physics::step(&s, cmd, dt, &p).unwrap();
    }
    let nf = f64::from(n);
    let psi_expected = alpha * dt * dt * nf * (nf + 1.0) / 2.0;
    let psi = s.euler_angles().2;
    let spin_err = (psi - psi_expected).abs() / psi_expected;
    // Constant body rate with balanced rotors: ψ(t) = r·t.
    let mut s = RigidBodyState::hovering(Vec3::new(0.0, 0.0, 150.0), 0.0, &p);
    s.angular_rate_radps = Vec3::new(0.0, 0.0, 0.7);
    for _ in 0..20 {
        s = physics::step(&s, s.rotor_rpm, dt, &p).unwrap();
    }
    let rate_err = (s.euler_angles().2 - 0.7).abs() / 0.7;
    ok &= spin_err < YAW_REL_TOL && rate_err < YAW_REL_TOL && started.elapsed() < PHYSICS_BUDGET;
    notes.push(format!("yaw err {:.1e}", spin_err.max(rate_err)));

    // Ballistic flight with drag off conserves kinetic + potential energy.
    let started = Instant::now();
    let mut s = RigidBodyState::hovering(Vec3::new(0.0, 0.0, 250.0), 0.0, &still);
    s.velocity_mps = Vec3::new(6.0, -3.0, 8.0);
    s.rotor_rpm = [0.0; 4];
    let energy = |s: &RigidBodyState| {
        0.5 * still.mass_kg * s.velocity_mps.norm_squared() + still.mass_kg * 9.81 * s.position_m.z
    };
    let e0 = energy(&s);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        s = physics::step(&s, [0.0; 4], dt, &still).unwrap();
        worst = worst.max((energy(&s) - e0).abs() / e0);
    }
    ok &= worst <= ENERGY_REL_TOL && started.elapsed() < PHYSICS_BUDGET;
    notes.push(format!("energy drift {worst:.1e}"));

    outcome(ok, notes.join(", "))
}

// 2 -----------------------------------------------------------------------

/// Straight-line link budget with every constant written out.
fn link_budget_by_hand(uav: [f64; 3], serving: usize) -> (f64, f64) {
    let sites = [
        [250.0, 250.0],
        [750.0, 250.0],
        [250.0, 750.0],
        [750.0, 750.0],
    ];
    let mast = 25.0;
    let p_tx_mw = 10f64.powf(40.0 / 10.0);
    let n_ant: f64 = 8.0;
    let tilt = -6.0 * PI / 180.0;
    let bw = 10e6;
    let f_ghz: f64 = 2.1;
    let hpbw = 65.0 * PI / 180.0;
    let noise_mw = 10f64.powf(-174.0 / 10.0) * bw;

    let gain = |site: [f64; 2]| -> f64 {
        let dx = uav[0] - site[0];
        let dy = uav[1] - site[1];
        let dz = uav[2] - mast;
        let horiz = (dx * dx + dy * dy).sqrt();
        let d = (horiz * horiz + dz * dz).sqrt();
        let bearing = dy.atan2(dx);
        let mut az = f64::INFINITY;
        for sector in 0..3 {
            let mut off = (bearing - sector as f64 * TAU / 3.0) % TAU;
            if off > PI {
                off -= TAU;
            }
            if off <= -PI {
                off += TAU;
            }
            if off.abs() < az.abs() {
                az = off;
            }
        }
        let el = dz.atan2(horiz);
        let a_az = (12.0 * (az / hpbw) * (az / hpbw)).min(30.0);
        let a_el = (12.0 * (el / hpbw) * (el / hpbw)).min(30.0);
        let element = 8.0 - (a_az + a_el).min(30.0);
        let x = FRAC_PI_2 * (el.sin() - tilt.sin());
        let af = if x.abs() < 1e-9 {
            n_ant.sqrt()
        } else {
            (n_ant * x).sin() / (n_ant.sqrt() * x.sin())
        };
        let pattern = element + 20.0 * af.abs().max(1e-6).log10();

        let h = uav[2];
        let p_los = if (100.0..=300.0).contains(&h) {
            1.0
        } else {
            let d1 = (460.0 * h.log10() - 700.0).max(18.0);
            if d <= d1 {
                1.0
            } else {
                let p1 = 4300.0 * h.log10() - 3800.0;
                let e = if p1 > 0.0 { (-d / p1).exp() } else { 0.0 };
                (d1 / d + e * (1.0 - d1 / d)).clamp(0.0, 1.0)
            }
        };
        let l_los = 28.0 + 22.0 * d.log10() + 20.0 * f_ghz.log10();
        let l_nlos =
            -17.5 + (46.0 - 7.0 * h.log10()) * d.log10() + 20.0 * (40.0 * PI * f_ghz / 3.0).log10();
        let loss = p_los * l_los + (1.0 - p_los) * l_nlos;
        10f64.powf((pattern - loss) / 10.0)
    };

    let signal = p_tx_mw * gain(sites[serving]);
    let interference: f64 = (0..4)
        .filter(|&b| b != serving)
        .map(|b| p_tx_mw * gain(sites[b]))
        .sum();
    let sinr = signal / (noise_mw + interference);
    (sinr, bw * (1.0 + sinr).log2())
}

fn channel_oracle() -> Outcome {
    let ch = ChannelConfig::default();
    let boresight = element_gain_db(0.0, 0.0, &TbsConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..CHANNEL_GEOMETRIES {
        let uav = [
            rng.gen_range(0.0..1000.0),
            rng.gen_range(0.0..1000.0),
            rng.gen_range(10.0..300.0),
        ];
        for b in 0..4 {
            let got = g2a_sinr(&Vec3::from(uav), b, &ch.tbs, &ch.path_loss, &ch.noise).unwrap();
            let (sinr, rate) = link_budget_by_hand(uav, b);
            worst = worst
                .max((got.sinr_linear - sinr).abs() / sinr)
                .max((got.rate_bps - rate).abs() / rate);
        }
    }
    outcome(
        worst <= CHANNEL_REL_TOL && boresight == 8.0,
        format!("{CHANNEL_GEOMETRIES} geometries x 4 serving sites, max rel err {worst:.1e}; boresight {boresight} dB"),
    )
}

// 3 -----------------------------------------------------------------------

fn rician_statistics() -> Outcome {
    let started = Instant::now();
    let k = 10f64.powf(1.5);
    let expected = (k + 2.0) / (2.0 * (k + 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let sum: f64 = (0..RICIAN_SAMPLES)
        .map(|_| rician_sample(15.0, false, &mut rng).norm_sqr())
        .sum();
    let mean = sum / RICIAN_SAMPLES as f64;
    let err = (mean - expected).abs() / expected;
    let took = started.elapsed();
    outcome(
        err <= RICIAN_REL_TOL && took < RICIAN_BUDGET,
        format!(
            "E|h|^2 = {mean:.5} vs {expected:.5} (rel {err:.1e}) in {:.2} s",
            took.as_secs_f64()
        ),
    )
}

// 4 -----------------------------------------------------------------------

fn weighted_rate_table() -> Outcome {
    let rate = 37.5e6;
    let (quota, gamma) = (5usize, 0.2);
    let mut rows = 0;
    let mut bad = Vec::new();
    for n in 0..=10usize {
        for ho in [false, true] {
            let share = match n {
                0 => 1.0,
                n if n > quota => quota as f64,
                n => n as f64,
            };
            let expected = rate / share * if ho { 1.0 - gamma } else { 1.0 };
            let got = weighted_rate(rate, quota, n, ho, gamma);
            if (got - expected).abs() > WEIGHTED_RATE_REL_TOL * expected {
                bad.push(format!("n={n} ho={ho}: {got} vs {expected}"));
            }
            rows += 1;
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{rows} rows match")
        } else {
            bad.join("; ")
        },
    )
}

// 5 -----------------------------------------------------------------------

/// `m` UAVs all on the HAPS after one greedy step, then one HAPS-tier decision.
fn offload_size(m: usize, mode: MetaMode) -> usize {
    let mut cfg = base_config(m);
    cfg.ablation.meta_controller = false;
    cfg.timing.horizon_steps = 10;
    let (mut env, _) = Env::reset(&cfg, 11).unwrap();
    let actions: Vec<JointAction> = env
        .world()
        .uavs
        .iter()
        .map(|s| JointAction {
            rotor_rpm: [cfg.uav.hover_rpm(s.position_m.z); 4],
            telecom: TelecomAction::RequestHaps,
        })
        .collect();
    env.step(&actions, &[]).unwrap();
    let obs = env.observe_haps();
    assert_eq!(
        obs.num_associated(),
        m,
        "greedy admission should put every UAV on the HAPS"
    );

    cfg.ablation.meta_controller = true;
    let mut meta = MetaController::new(mode, &cfg);
    let mut heuristic = HeuristicPolicy;
    let policy: Option<&mut dyn SemanticPolicy> = match mode {
        MetaMode::Rule => None,
        MetaMode::Semantic => Some(&mut heuristic),
    };
    let (decision, _) = meta.decide(&obs, policy);
    match decision.action {
        MetaAction::Offload(ids) => ids.len(),
        _ => 0,
    }
}

fn offload_cardinality() -> Outcome {
    let started = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    for (mode, name) in [(MetaMode::Rule, "rule"), (MetaMode::Semantic, "mock")] {
        let sizes: Vec<usize> = [4, 7, 10].iter().map(|&m| offload_size(m, mode)).collect();
        let again: Vec<usize> = [4, 7, 10].iter().map(|&m| offload_size(m, mode)).collect();
        ok &= sizes == [0, 2, 5] && sizes == again;
        notes.push(format!("{name} {sizes:?}"));
    }
    let took = started.elapsed();
    ok &= took < OFFLOAD_BUDGET;
    outcome(
        ok,
        format!(
            "M=4,7,10 -> {} in {:.2} s",
            notes.join(", "),
            took.as_secs_f64()
        ),
    )
}

// 6 -----------------------------------------------------------------------

fn violation_fraction(meta_on: bool, seed: u64) -> f64 {
    let mut cfg = base_config(10);
    cfg.agent.telecom_policy = TelecomPolicyKind::GreedyHaps;
    cfg.ablation.meta_controller = meta_on;
    run(&cfg, seed, None).unwrap()[0].capacity_violation_fraction
}

fn capacity_ablation() -> Outcome {
    let on: Vec<f64> = (0..ABLATION_SEEDS)
        .into_par_iter()
        .map(|s| violation_fraction(true, s))
        .collect();
    let off: Vec<f64> = (0..ABLATION_SEEDS)
        .into_par_iter()
        .map(|s| violation_fraction(false, s))
        .collect();
    let ok = on.iter().all(|&f| f == 0.0) && off.iter().all(|&f| f > VIOLATION_OFF_MIN);
    outcome(ok, format!("meta on {on:?}, meta off {off:?}"))
}

// 7 -----------------------------------------------------------------------

struct InvariantTally {
    steps: usize,
    handovers_events: usize,
    handovers_cost: f64,
    problems: Vec<String>,
}

fn invariants_for_seed(seed: u64) -> InvariantTally {
    let m = 10;
    let cfg = base_config(m);
    let num_tbs = cfg.channel.tbs.len();
    let policies = PolicySet::from_config(&cfg.backend).unwrap();
    let mut session = Session::new(&cfg, seed, policies).unwrap();
    let mut sink = MemorySink::default();
    session.run_episode(&mut sink).unwrap();

    let mut tally = InvariantTally {
        steps: 0,
        handovers_events: 0,
        handovers_cost: 0.0,
        problems: Vec::new(),
    };
    for step in sink.steps.chunks(m) {
        let t = step[0].t;
        tally.steps += 1;
        // C1: one serving node per UAV per step.
        let ids: Vec<usize> = step.iter().map(|r| r.uav).collect();
        if ids != (0..m).collect::<Vec<_>>() || step.iter().any(|r| r.t != t) {
            tally
                .problems
                .push(format!("seed {seed} t {t}: malformed step"));
        }
        let mut loads = vec![0usize; num_tbs + 1];
        for r in step {
            match r.serving {
                NodeId::Tbs(b) if b < num_tbs => loads[b] += 1,
                NodeId::Haps => loads[num_tbs] += 1,
                other => tally
                    .problems
                    .push(format!("seed {seed} t {t}: invalid node {other}")),
            }
        }
        // C2: accepted HAPS associations stay within quota and capacity.
        if loads[num_tbs] > cfg.channel.haps.quota {
            tally
                .problems
                .push(format!("seed {seed} t {t}: HAPS quota exceeded"));
        }
        if step[0].capacity_violation || step[0].haps_load_bps > cfg.channel.haps.capacity_limit_bps
        {
            tally.problems.push(format!(
                "seed {seed} t {t}: HAPS load {:.1} Mbps",
                step[0].haps_load_bps / 1e6
            ));
        }
        let overflow = step.iter().any(|r| {
            r.events
                .iter()
                .any(|e| matches!(e, Event::QuotaOverflow { .. }))
        });
        for (b, &l) in loads.iter().take(num_tbs).enumerate() {
            if l > cfg.channel.tbs[b].quota && !overflow {
                tally.problems.push(format!(
                    "seed {seed} t {t}: TBS {b} quota exceeded without overflow event"
                ));
            }
        }
        // Handover parity between events, flags and cost.
        for r in step {
            let events = r
                .events
                .iter()
                .filter(|e| matches!(e, Event::Handover { uav, .. } if *uav == r.uav))
                .count();
            let cost_units = r.reward.c_ho / cfg.rewards.handover_cost;
            if events > 1
                || (events == 1) != r.handover
                || (cost_units - events as f64).abs() > 1e-12
            {
                tally.problems.push(format!(
                    "seed {seed} t {t} uav {}: handover mismatch",
                    r.uav
                ));
            }
            tally.handovers_events += events;
            tally.handovers_cost += r.reward.c_ho;
        }
    }
    tally
}

fn constraint_invariants() -> Outcome {
    let tallies: Vec<InvariantTally> = (0..INVARIANT_SEEDS)
        .into_par_iter()
        .map(invariants_for_seed)
        .collect();
    let steps: usize = tallies.iter().map(|t| t.steps).sum();
    let events: usize = tallies.iter().map(|t| t.handovers_events).sum();
    let cost: f64 = tallies.iter().map(|t| t.handovers_cost).sum();
    let problems: Vec<&String> = tallies.iter().flat_map(|t| &t.problems).collect();
    let ok = problems.is_empty()
        && steps == INVARIANT_SEEDS as usize * 400
        && (cost - events as f64).abs() < 1e-6;
    let detail = if problems.is_empty() {
        format!("{steps} steps x 10 UAVs, {events} handovers, c_ho total {cost}")
    } else {
        format!("{} problems, first: {}", problems.len(), problems[0])
    };
    outcome(ok, detail)
}

// 8 -----------------------------------------------------------------------

/// Three candidate nodes; one dominates each step. Reward is the spectral
/// efficiency of the chosen node.
fn ddqn_toy(seed: u64) -> (f64, f64) {
    let cfg = QLearnerConfig {
        hidden_layers: vec![32, 32],
        learning_rate: 1e-3,
        epsilon_decay_steps: 10_000,
        batch_size: 32,
        warmup_transitions: 500,
        target_sync_steps: 200,
        replay_capacity: 20_000,
        ..QLearnerConfig::default()
    };
    let mut weights = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = QLearner::new(
        cfg,
        3,
        3,
        &mut weights,
        ChaCha8Rng::seed_from_u64(seed + 100),
    );
    let mut world = ChaCha8Rng::seed_from_u64(seed + 200);
    let mut explore = ChaCha8Rng::seed_from_u64(seed + 300);
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        let best = rng.gen_range(0..3);
        let mut db = [0.0; 3];
        for (k, v) in db.iter_mut().enumerate() {
            *v = if k == best {
                rng.gen_range(15.0..25.0)
            } else {
                rng.gen_range(-5.0..5.0)
            };
        }
        db
    };
    let features = |db: &[f64; 3]| db.iter().map(|d| (d + 20.0) / 60.0).collect::<Vec<f64>>();
    let mut rewards = Vec::with_capacity(DDQN_STEPS);
    let mut db = draw(&mut world);
    for _ in 0..DDQN_STEPS {
        let state = features(&db);
        let a = learner.select(&state, &mut explore);
        let reward = (1.0 + 10f64.powf(db[a] / 10.0)).log2();
        let next = draw(&mut world);
        learner.push(Transition {
            state,
            action: a,
            reward,
            next_state: features(&next),
            terminal: true,
        });
        learner.learn_step();
        rewards.push(reward);
        db = next;
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    (
        mean(&rewards[..DDQN_WINDOW]),
        mean(&rewards[DDQN_STEPS - DDQN_WINDOW..]),
    )
}

fn gradient_check() -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let net = Mlp::new(&[6, 16, 16, 4], &mut r);
    let batch: Vec<Transition> = (0..8)
        .map(|i| Transition {
            state: (0..6).map(|_| r.gen_range(-1.0..1.0)).collect(),
            action: i % 4,
            reward: r.gen_range(-2.0..2.0),
            next_state: vec![0.0; 6],
            terminal: true,
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let targets: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let (_, grad) = td_loss_and_grad(&net, &refs, &targets);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let fd = (td_loss_and_grad(&plus, &refs, &targets).0
            - td_loss_and_grad(&minus, &refs, &targets).0)
            / (2.0 * h);
        let scale = grad[i].abs().max(fd.abs());
        if scale > 1e-7 {
            worst = worst.max((grad[i] - fd).abs() / scale);
        }
    }
    worst
}

fn ddqn_learning() -> Outcome {
    let started = Instant::now();
    let runs: Vec<(f64, f64)> = (0..DDQN_SEEDS).into_par_iter().map(ddqn_toy).collect();
    let ratios: Vec<f64> = runs.iter().map(|(first, last)| last / first).collect();
    let grad_err = gradient_check();
    let took = started.elapsed();
    let ok = ratios.iter().all(|&r| r >= DDQN_MIN_RATIO)
        && grad_err < GRADIENT_REL_TOL
        && took < DDQN_BUDGET;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    outcome(
        ok,
        format!(
            "last/first reward ratios [{}], gradient rel err {grad_err:.1e}, {:.1} s",
            shown.join(", "),
            took.as_secs_f64()
        ),
    )
}

// 9 -----------------------------------------------------------------------

fn truth_observation(s: &RigidBodyState) -> LocalObservation {
    let (r, p, y) = s.euler_angles();
    LocalObservation {
        uav: 0,
        t: 0,
        position_m: s.position_m.into(),
        velocity_mps: s.velocity_mps.into(),
        euler_rad: [r, p, y],
        angular_rate_radps: s.angular_rate_radps.into(),
        rotor_rpm: s.rotor_rpm,
        neighbors: vec![],
        serving: NodeId::Tbs(0),
        serving_distance_m: 0.0,
        serving_sinr_db: 0.0,
        node_sinr_db: vec![],
        target_position_m: [0.0; 3],
        haps_eligible: true,
    }
}

fn flight_envelope() -> Outcome {
    let params = UavParams::default();
    let dt = 0.05;
    let steps = (HOLD_S / dt).round() as usize;
    let results: Vec<(SemanticDirective, f64, bool)> = SemanticDirective::all()
        .map(|d| {
            let mut s = RigidBodyState::hovering(Vec3::new(500.0, 500.0, 150.0), 0.3, &params);
            let mut dec = MotionDecoder::new(DecoderConfig::default(), params.clone(), dt);
            dec.set_directive(d, &truth_observation(&s));
            let mut worst: f64 = 0.0;
            for _ in 0..steps {
                let out = dec.control(&truth_observation(&s));
                if !out.rotor_rpm.iter().all(|v| v.is_finite()) {
                    return (d, worst, false);
                }
                match physics::step(&s, out.rotor_rpm, dt, &params) {
                    Ok(n) => s = n,
                    Err(_) => return (d, worst, false),
                }
                let (r, p, _) = s.euler_angles();
                worst = worst.max(r.abs()).max(p.abs());
            }
            (d, worst, s.is_finite())
        })
        .collect();
    let limit = TILT_LIMIT_DEG.to_radians();
    let failed: Vec<String> = results
        .iter()
        .filter(|(_, tilt, finite)| !finite || *tilt >= limit)
        .map(|(d, tilt, _)| format!("{d} ({:.2} deg)", tilt.to_degrees()))
        .collect();
    let max_tilt = results.iter().map(|r| r.1).fold(0.0, f64::max).to_degrees();
    outcome(
        results.len() == 27 && failed.is_empty(),
        if failed.is_empty() {
            format!("{} directives, max tilt {max_tilt:.2} deg", results.len())
        } else {
            format!("out of envelope: {}", failed.join(", "))
        },
    )
}

// 10 ----------------------------------------------------------------------

fn scheduler_gating() -> Outcome {
    let m = 4;
    let mut cfg = base_config(m);
    cfg.backend.mode = BackendMode::Mock;
    cfg.agent.telecom_policy = TelecomPolicyKind::Stay;
    let (policies, counts): (PolicySet, CallCounts) =
        PolicySet::from_config(&cfg.backend).unwrap().metered();
    let mut session = Session::new(&cfg, 3, policies).unwrap();
    let mut sink = MemorySink::default();
    session.run_episode(&mut sink).unwrap();

    let llm_gates = sink
        .steps
        .iter()
        .filter(|r| r.uav == 0 && r.llm_gate)
        .count();
    let haps_gates = sink.meta.len();
    let gate_times_ok = sink.meta.iter().all(|r| r.t % 100 == 0)
        && sink
            .steps
            .iter()
            .filter(|r| r.llm_gate)
            .all(|r| r.t % 20 == 0);
    let uav_calls = counts.get(PolicyTier::Uav);
    let haps_calls = counts.get(PolicyTier::Haps);
    let ok = sink.steps.len() == 400 * m
        && llm_gates == 20
        && haps_gates == 4
        && gate_times_ok
        && uav_calls == (20 * m) as u64
        && haps_calls == 4;
    outcome(
        ok,
        format!(
            "{llm_gates} semantic gates, {haps_gates} HAPS gates; UAV-tier calls {uav_calls} (= gates x {m} UAVs), HAPS-tier calls {haps_calls}; reflection calls {}",
            counts.get(PolicyTier::Reflection)
        ),
    )
}

// 11 ----------------------------------------------------------------------

fn determinism() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for mode in [BackendMode::Rule, BackendMode::Mock] {
        let mut cfg = base_config(4);
        cfg.backend.mode = mode;
        let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
        for d in &dirs {
            run(&cfg, 42, Some(d.path())).unwrap();
        }
        for file in ["trajectory.jsonl", "meta.jsonl"] {
            let a = std::fs::read(dirs[0].path().join(file)).unwrap();
            let b = std::fs::read(dirs[1].path().join(file)).unwrap();
            let same = a == b && !a.is_empty();
            ok &= same;
            notes.push(format!(
                "{mode:?} {file} {} bytes {}",
                a.len(),
                if same { "identical" } else { "DIFFER" }
            ));
        }
    }
    outcome(ok, notes.join(", "))
}

// 12 ----------------------------------------------------------------------

fn retrieval_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mismatches = 0;
    let mut largest = 0;
    for fixture in 0..RETRIEVAL_FIXTURES {
        let n = if fixture % 10 == 0 {
            10_000
        } else {
            rng.gen_range(0..2_000)
        };
        let dims = rng.gen_range(1..6);
        let k = rng.gen_range(0..=10);
        // Coarse grid values so that exact distance ties occur.
        let levels = if fixture % 2 == 0 { 4.0 } else { 1e6 };
        let mut mem = EpisodicMemory::new(n.max(1));
        let mut stored = Vec::with_capacity(n);
        for _ in 0..n {
            let e: Vec<f64> = (0..dims)
                .map(|_| (rng.gen::<f64>() * levels).floor() / levels)
                .collect();
            stored.push(e.clone());
            mem.push(MemoryRecord {
                seq: 0,
                embedding: e,
                observation: String::new(),
                action: String::new(),
                reward: RecordReward::Scalar(0.0),
                next_observation: String::new(),
                correction: String::new(),
            });
        }
        let query: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();

        // Exhaustive oracle: full sort by distance, newer first on ties.
        let mut all: Vec<(f64, usize)> = stored
            .iter()
            .enumerate()
            .map(|(i, e)| {
                (
                    e.iter()
                        .zip(&query)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    i,
                )
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.cmp(&a.1)));
        let expected: Vec<u64> = all.iter().take(k).map(|(_, i)| *i as u64).collect();
        let got: Vec<u64> = mem
            .retrieve_top_k(&query, k)
            .iter()
            .map(|r| r.seq)
            .collect();
        if got != expected {
            mismatches += 1;
        }
        largest = largest.max(n);
    }
    outcome(
        mismatches == 0,
        format!(
            "{RETRIEVAL_FIXTURES} fixtures (N up to {largest}, k <= 10), {mismatches} mismatches"
        ),
    )
}

// 13 ----------------------------------------------------------------------

fn reflection_gating() -> Outcome {
    let mut cfg = base_config(3);
    cfg.agent.telecom_policy = TelecomPolicyKind::Stay;
    cfg.sensors.position_sigma_m = 0.0;
    cfg.sensors.velocity_sigma_mps = 0.0;
    cfg.sensors.attitude_sigma_rad = 0.0;
    cfg.sensors.angular_rate_sigma_radps = 0.0;
    // Two UAVs head at each other along y = 500; the third stays clear.
    cfg.airspace.uavs = vec![
        UavSpawn {
            origin_m: [400.0, 500.0, 150.0],
            target_m: [900.0, 500.0, 150.0],
            yaw_rad: Some(0.0),
        },
        UavSpawn {
            origin_m: [500.0, 500.0, 150.0],
            target_m: [100.0, 500.0, 150.0],
            yaw_rad: Some(PI),
        },
        UavSpawn {
            origin_m: [200.0, 150.0, 150.0],
            target_m: [800.0, 150.0, 150.0],
            yaw_rad: Some(0.0),
        },
    ];
    let (reflection, counts) = Metered::new(HeuristicPolicy);
    let policies = PolicySet {
        uav: Some(Box::new(ScriptedPolicy::always("DIRECTIVE FORWARD"))),
        haps: None,
        reflection: Some(Box::new(reflection)),
    };
    let mut session = Session::new(&cfg, 7, policies).unwrap();
    let mut sink = MemorySink::default();
    session.run_episode(&mut sink).unwrap();

    let crash_steps = sink.steps.iter().filter(|r| r.reward.c_safe > 0.0).count();
    let crash_ok = sink
        .steps
        .iter()
        .filter(|r| r.reward.c_safe > 0.0)
        .all(|r| !r.correction.is_empty());
    let nominal_ok = sink
        .steps
        .iter()
        .filter(|r| r.reward.c_safe == 0.0)
        .all(|r| r.correction.is_empty());
    let uninvolved_ok = sink
        .steps
        .iter()
        .filter(|r| r.uav == 2)
        .all(|r| r.correction.is_empty());
    let ok =
        sink.steps.len() == 3 * 400 && crash_steps > 0 && crash_ok && nominal_ok && uninvolved_ok;
    outcome(
        ok,
        format!(
            "{crash_steps} crash UAV-steps all corrected, {} nominal UAV-steps uncorrected; {} reflection calls",
            sink.steps.len() - crash_steps,
            counts.get(PolicyTier::Reflection)
        ),
    )
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 13] = [
        ("physics oracles", physics_oracles),
        ("channel oracle equivalence", channel_oracle),
        ("rician statistics", rician_statistics),
        ("weighted-rate truth table", weighted_rate_table),
        ("offload cardinality", offload_cardinality),
        ("capacity-violation ablation", capacity_ablation),
        ("constraint invariants", constraint_invariants),
        ("ddqn learning and gradient", ddqn_learning),
        ("decoder flight envelope", flight_envelope),
        ("scheduler gating", scheduler_gating),
        ("determinism", determinism),
        ("retrieval exactness", retrieval_exactness),
        ("reflection gating", reflection_gating),
    ];
    let mut failures = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failures += 1;
        }
        println!(
            "{} [{:02}] {name}: {} ({:.2} s)",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        checks.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
