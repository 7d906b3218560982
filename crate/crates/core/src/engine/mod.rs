//! Seeded discrete-event engine.
//!
//! Each platoon member beacons every period. A beacon closes the member's
//! previous round (reception reports, reward, transition, training step) and
//! opens a new one with a freshly selected mode. Frames, acknowledgments and
//! mobility/channel ticks are queued events; all randomness comes from
//! per-purpose streams derived from the run seed.

mod events;
mod run;
mod stats;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use events::{ms_to_time, time_to_ms, Event, EventKind, EventQueue, SimTime};
pub use run::{
    load_agents, new_agents, run_evaluation, run_training, save_agents, selector_policy, trained_policy, weights_path,
};
pub use stats::{mean_std, moving_average, moving_std, AgentGameStats, Aggregate, GameStats};

use crate::agent::{
    compute_reward, link_quality_delta, performance_satisfaction, DqnAgent, Observations, StateVec, Transition,
};
use crate::baselines::{static_select, topsis_select, StaticPolicy, TopsisWeights};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hybrid::{
    complete_copies, transmit, AckRecord, CommMode, Message, MessageId, ReceptionVector, SegmentMask, SrRule,
    Transmission,
};
use crate::radio::{
    channel_load, delivery_outcome, fading_gain_db, path_loss_db_from, snir_db, OccupancyProcess, RatKind,
    RatParams, LATENCY_CLAMP_MS,
};
use crate::rng::{stream, stream_rng, SimRng};
use crate::scenario::{init_scenario, ScenarioState, VehicleId};

/// Test hook replacing the channel's delivery decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelOverride {
    #[default]
    None,
    /// Every frame is decoded.
    Perfect,
    /// No frame is decoded.
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub beacon_period_ms: f64,
    pub ack_delay_ms: f64,
    /// Probability an acknowledgment is lost on its way back.
    pub ack_loss_probability: f64,
    /// EMA weight of new SNIR measurements.
    pub snir_smoothing: f64,
    /// EMA weight of new per-link delivery outcomes.
    pub prr_smoothing: f64,
    /// Per-tick channel sensing of both RATs, independent of the mode in use.
    pub sensing: bool,
    pub sr_rule: SrRule,
    pub channel_override: ChannelOverride,
    /// A game aborts once a vehicle sends this many times the SR target.
    pub max_rounds_factor: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            beacon_period_ms: 100.0,
            ack_delay_ms: 0.5,
            ack_loss_probability: 0.0,
            snir_smoothing: 0.5,
            prr_smoothing: 0.1,
            sensing: true,
            sr_rule: SrRule::AtLeastOne,
            channel_override: ChannelOverride::None,
            max_rounds_factor: 100,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("engine: {msg}")));
        if !(self.beacon_period_ms > 0.0) {
            return bad("beacon_period_ms must be > 0");
        }
        if !(self.ack_delay_ms >= 0.0) || LATENCY_CLAMP_MS + self.ack_delay_ms >= self.beacon_period_ms {
            return bad("latency clamp plus ack_delay_ms must stay below beacon_period_ms");
        }
        if !(0.0..=1.0).contains(&self.ack_loss_probability) {
            return bad("ack_loss_probability must be in [0, 1]");
        }
        for (name, v) in [("snir_smoothing", self.snir_smoothing), ("prr_smoothing", self.prr_smoothing)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("engine: {name} must be in (0, 1]")));
            }
        }
        if self.max_rounds_factor == 0 {
            return bad("max_rounds_factor must be >= 1");
        }
        Ok(())
    }
}

/// How platoon members pick their communication mode.
pub enum Policy {
    /// One agent per member, or a single shared agent. `learning` enables
    /// exploration, replay and training.
    Drl { agents: Vec<DqnAgent>, learning: bool },
    Static(StaticPolicy),
    Topsis(TopsisWeights),
}

impl Policy {
    fn select(
        &mut self,
        member: usize,
        active: bool,
        state: &StateVec,
        obs: &Observations,
        run: &RunConfig,
    ) -> Result<CommMode> {
        match self {
            Policy::Static(p) => Ok(static_select(*p)),
            Policy::Topsis(w) => topsis_select(obs, &run.radio, w),
            Policy::Drl { agents, learning } => {
                let n = agents.len();
                let agent = &mut agents[member % n];
                if *learning && active {
                    let mode = agent.act(state)?;
                    agent.decay_epsilon();
                    Ok(mode)
                } else {
                    agent.act_greedy(state)
                }
            }
        }
    }

    fn epsilon(&self, member: usize) -> f64 {
        match self {
            Policy::Drl { agents, learning: true } => agents[member % agents.len()].epsilon(),
            _ => 0.0,
        }
    }

    pub fn agents(&self) -> &[DqnAgent] {
        match self {
            Policy::Drl { agents, .. } => agents,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone)]
struct Round {
    message: Message,
    state: StateVec,
    send_time: SimTime,
    snir_at_send: [Option<f64>; 2],
    snir_first_rx: Option<[Option<f64>; 2]>,
    expected: Vec<VehicleId>,
}

/// Receiver-side progress of the latest message from one sender.
#[derive(Debug, Clone, Copy)]
struct Inbound {
    message: MessageId,
    mask: SegmentMask,
    first_copy_latency_ms: Option<f64>,
}

#[derive(Debug, Clone)]
struct Member {
    obs: Observations,
    mode: CommMode,
    round: Option<Round>,
    rv: ReceptionVector,
    stats: AgentGameStats,
    active: bool,
    sequence: u64,
    inbox: Vec<Option<Inbound>>,
}

pub struct Engine {
    run: RunConfig,
    scenario: ScenarioState,
    queue: EventQueue,
    now: SimTime,
    occupancy: [OccupancyProcess; 2],
    members: Vec<Member>,
    policy: Policy,
    radio_rng: SimRng,
    beacon_rng: SimRng,
    occupancy_rng: SimRng,
    sensing_rng: SimRng,
    ack_rng: SimRng,
    next_message: u64,
    games_played: usize,
}

impl Engine {
    pub fn new(run: &RunConfig, policy: Policy) -> Result<Self> {
        run.validate()?;
        if let Policy::Drl { agents, .. } = &policy {
            let n = run.scenario.platoon_size;
            if agents.len() != 1 && agents.len() != n {
                return Err(Error::Config(format!("{} agents for a platoon of {n}", agents.len())));
            }
        }
        let seed = run.seed;
        let mut scenario_config = run.scenario.clone();
        scenario_config.seed = seed;
        let scenario = init_scenario(scenario_config, &mut stream_rng(seed, stream::SCENARIO))?;
        let n = run.scenario.platoon_size;
        let member = Member {
            obs: Observations::default(),
            mode: CommMode::SingleItsG5,
            round: None,
            rv: ReceptionVector::new(),
            stats: AgentGameStats::default(),
            active: true,
            sequence: 0,
            inbox: vec![None; n],
        };
        Ok(Self {
            run: run.clone(),
            scenario,
            queue: EventQueue::new(),
            now: 0,
            occupancy: Default::default(),
            members: vec![member; n],
            policy,
            radio_rng: stream_rng(seed, stream::RADIO),
            beacon_rng: stream_rng(seed, stream::BEACON),
            occupancy_rng: stream_rng(seed, stream::OCCUPANCY),
            sensing_rng: stream_rng(seed, stream::SENSING),
            ack_rng: stream_rng(seed, stream::ACK),
            next_message: 0,
            games_played: 0,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    pub fn now_ms(&self) -> f64 {
        time_to_ms(self.now)
    }

    pub fn scenario(&self) -> &ScenarioState {
        &self.scenario
    }

    pub fn games_played(&self) -> usize {
        self.games_played
    }

    fn period(&self) -> SimTime {
        ms_to_time(self.run.engine.beacon_period_ms)
    }

    /// Plays one game: every member beacons until its SR counter reaches the
    /// target; the game closes when the slowest member finishes.
    pub fn run_game(&mut self) -> Result<GameStats> {
        let started = Instant::now();
        self.begin_game();
        loop {
            let ev = self
                .queue
                .pop()
                .ok_or_else(|| Error::Fault("event queue drained before the game ended".into()))?;
            if ev.time < self.now {
                return Err(Error::Fault(format!("event at {} before current time {}", ev.time, self.now)));
            }
            self.now = ev.time;
            match ev.kind {
                EventKind::BeaconDue(k) => {
                    if self.on_beacon(k)? {
                        break;
                    }
                }
                EventKind::Delivery {
                    tx,
                    receiver,
                    send_time,
                    snir_db,
                    decoded,
                } => self.on_delivery(tx, receiver, send_time, snir_db, decoded),
                EventKind::Ack { sender, ack, message } => self.on_ack(sender, ack, message),
                EventKind::MobilityTick => self.on_tick(),
            }
        }
        self.queue.clear();
        let sr_target = self.run.agent.sr_target;
        let mut agents = Vec::with_capacity(self.members.len());
        for (k, m) in self.members.iter().enumerate() {
            let mut s = m.stats.clone();
            s.epsilon = self.policy.epsilon(k);
            s.check(sr_target)?;
            agents.push(s);
        }
        let stats = GameStats {
            game: self.games_played,
            agents,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        self.games_played += 1;
        Ok(stats)
    }

    fn begin_game(&mut self) {
        self.queue.clear();
        let period = self.period();
        for k in 0..self.members.len() {
            let m = &mut self.members[k];
            m.round = None;
            m.rv.reset();
            m.stats = AgentGameStats::default();
            m.active = true;
            m.inbox.iter_mut().for_each(|slot| *slot = None);
            let offset = self.beacon_rng.random_range(0..period);
            self.queue.push(self.now + offset, EventKind::BeaconDue(k));
        }
        self.queue.push(self.now + period, EventKind::MobilityTick);
    }

    /// Returns true when the game is over.
    fn on_beacon(&mut self, k: usize) -> Result<bool> {
        if let Some(round) = self.members[k].round.take() {
            self.finalize(k, round)?;
        }
        if self.members.iter().all(|m| !m.active) {
            return Ok(true);
        }
        let limit = self.run.engine.max_rounds_factor as u64 * self.run.agent.sr_target as u64;
        let m = &self.members[k];
        if m.active && m.stats.n_sent >= limit {
            return Err(Error::Fault(format!(
                "{} sent {} messages with SR {} of {}; aborting game {}",
                VehicleId(k as u32),
                m.stats.n_sent,
                m.rv.sr_counter(),
                self.run.agent.sr_target,
                self.games_played
            )));
        }
        let state = m.obs.state(&self.run.requirements)?;
        let (active, obs) = (m.active, m.obs);
        let mode = self.policy.select(k, active, &state, &obs, &self.run)?;
        self.send(k, mode, state)?;
        let next = self.now + self.period();
        self.queue.push(next, EventKind::BeaconDue(k));
        Ok(false)
    }

    fn finalize(&mut self, k: usize, round: Round) -> Result<()> {
        let req = self.run.requirements;
        let reward_cfg = self.run.agent.reward();
        let prr_smoothing = self.run.engine.prr_smoothing;
        let sr_target = self.run.agent.sr_target;
        let m = &mut self.members[k];
        let mode = round.message.mode;

        let acks: Vec<AckRecord> = m.rv.acks().copied().collect();
        for id in &round.expected {
            let mask = acks.iter().find(|a| a.receiver == *id).map_or(SegmentMask::default(), |a| a.segments);
            for (i, seg) in round.message.segments.iter().enumerate() {
                m.obs.record_delivery(seg.rat, mask.contains(i as u8), prr_smoothing);
            }
        }
        let ps = performance_satisfaction(&acks, &round.expected, &req);
        let outcome = m.rv.finalize_round(mode, &round.expected, self.run.engine.sr_rule);
        if !m.active {
            return Ok(());
        }
        for a in acks.iter().filter(|a| round.expected.contains(&a.receiver)) {
            m.stats.duplicates.add(a.copies);
        }
        let snir_now = m.obs.snir_pair();
        let lq = link_quality_delta(
            snir_now,
            round.snir_first_rx.unwrap_or(round.snir_at_send),
            reward_cfg.lq_deadband_db,
        );
        let reports: Vec<_> = outcome.reports.iter().map(|&(_, r)| r).collect();
        let reward = compute_reward(&reports, ps, lq, &reward_cfg);
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        m.stats.reward_sum += reward;
        m.stats.sr = m.rv.sr_counter();
        let terminal = m.stats.sr >= sr_target;
        if terminal {
            m.active = false;
            m.stats.prr = crate::hybrid::prr_game(sr_target, m.stats.n_sent)?;
        }
        let next_state = m.obs.state(&req)?;

        if let Policy::Drl { agents, learning: true } = &mut self.policy {
            let n = agents.len();
            let agent = &mut agents[k % n];
            agent.remember(Transition {
                state: round.state,
                action: mode,
                reward,
                next_state,
                terminal,
            })?;
            agent.train()?;
        }
        Ok(())
    }

    fn platoon_users(&self, rat: RatKind) -> usize {
        self.members.iter().filter(|m| m.mode.uses(rat)).count()
    }

    fn load_at(&self, position: f64, rat: RatKind) -> f64 {
        let range = self.run.scenario.comm_range;
        let active = self.scenario.background_in_range(position, range) + self.platoon_users(rat);
        channel_load(active, self.run.radio.get(rat).capacity)
    }

    fn send(&mut self, k: usize, mode: CommMode, state: StateVec) -> Result<()> {
        let id = MessageId(self.next_message);
        self.next_message += 1;
        let sequence = self.members[k].sequence;
        self.members[k].sequence += 1;
        self.members[k].mode = mode;
        let msg = Message::new(id, VehicleId(k as u32), sequence, mode, self.now_ms());
        let txs = transmit(&msg)?;

        let range = self.run.scenario.comm_range;
        let sender_pos = self.scenario.vehicles()[k].position;
        let receivers: Vec<(usize, f64)> = self
            .scenario
            .neighbors_in_range(VehicleId(k as u32), range)?
            .into_iter()
            .filter(|v| v.is_platoon_member)
            .map(|v| (v.id.0 as usize, v.position))
            .collect();

        for tx in &txs {
            let params = *self.run.radio.get(tx.rat);
            let interference: Vec<f64> = self.occupancy[tx.rat.index()].interference(&params).into_iter().collect();
            for &(j, pos) in &receivers {
                let load = self.load_at(pos, tx.rat);
                let distance = (pos - sender_pos).abs();
                let rx = received_power(&params, distance, &mut self.radio_rng);
                let snir = snir_db(rx, params.background_noise_dbm, &interference);
                let sample = delivery_outcome(&params, rx, snir, load, tx.payload_fraction, &mut self.radio_rng);
                let decoded = match self.run.engine.channel_override {
                    ChannelOverride::None => sample.delivered,
                    ChannelOverride::Perfect => true,
                    ChannelOverride::Blocked => false,
                };
                if decoded || rx >= params.energy_detection_dbm {
                    self.queue.push(
                        self.now + ms_to_time(sample.latency_ms),
                        EventKind::Delivery {
                            tx: *tx,
                            receiver: j,
                            send_time: self.now,
                            snir_db: snir,
                            decoded,
                        },
                    );
                }
            }
        }

        let m = &mut self.members[k];
        if m.active {
            m.stats.n_sent += 1;
            m.stats.mode_counts[mode.index()] += 1;
        }
        m.round = Some(Round {
            message: msg,
            state,
            send_time: self.now,
            snir_at_send: m.obs.snir_pair(),
            snir_first_rx: None,
            expected: receivers.iter().map(|&(j, _)| VehicleId(j as u32)).collect(),
        });
        Ok(())
    }

    fn on_delivery(&mut self, tx: Transmission, r: usize, send_time: SimTime, snir: f64, decoded: bool) {
        let smoothing = self.run.engine.snir_smoothing;
        let now = self.now;
        let m = &mut self.members[r];
        m.obs.record_snir(tx.rat, snir, smoothing);
        if !decoded {
            return;
        }
        let sender = tx.sender.0 as usize;
        let latency = time_to_ms(now - send_time);
        let slot = &mut m.inbox[sender];
        let mut inbound = match *slot {
            Some(i) if i.message == tx.message => i,
            _ => Inbound {
                message: tx.message,
                mask: SegmentMask::default(),
                first_copy_latency_ms: None,
            },
        };
        let mode = if tx.payload_fraction < 1.0 {
            CommMode::HybridDivision
        } else {
            CommMode::HybridRedundant
        };
        inbound.mask = inbound.mask.with(tx.segment_index);
        let copies = complete_copies(mode, inbound.mask);
        if copies > 0 && inbound.first_copy_latency_ms.is_none() {
            inbound.first_copy_latency_ms = Some(latency);
        }
        *slot = Some(inbound);

        if let Some(round) = m.round.as_mut() {
            if round.snir_first_rx.is_none() && now > round.send_time {
                round.snir_first_rx = Some(m.obs.snir_pair());
            }
        }

        let lost = self.run.engine.ack_loss_probability > 0.0
            && self.ack_rng.random::<f64>() < self.run.engine.ack_loss_probability;
        if !lost {
            let ack = AckRecord {
                receiver: VehicleId(r as u32),
                message: tx.message,
                copies,
                first_copy_latency_ms: inbound.first_copy_latency_ms.unwrap_or(latency),
                segments: inbound.mask,
            };
            self.queue.push(
                now + ms_to_time(self.run.engine.ack_delay_ms),
                EventKind::Ack {
                    sender,
                    ack,
                    message: tx.message,
                },
            );
        }
    }

    fn on_ack(&mut self, sender: usize, ack: AckRecord, message: MessageId) {
        let m = &mut self.members[sender];
        // Acks for an already closed round are dropped.
        if m.round.as_ref().is_some_and(|r| r.message.id == message) {
            m.rv.record_ack(ack);
        }
    }

    fn on_tick(&mut self) {
        let period = self.period();
        let dt_ms = time_to_ms(period);
        self.scenario.step_mobility(dt_ms / 1000.0);
        let center = self.scenario.platoon_center();
        for rat in RatKind::ALL {
            let load = self.load_at(center, rat);
            let params = *self.run.radio.get(rat);
            self.occupancy[rat.index()].step(&params, load, dt_ms, &mut self.occupancy_rng);
        }
        if self.run.engine.sensing {
            self.sense();
        }
        self.queue.push(self.now + period, EventKind::MobilityTick);
    }

    /// Each member measures both RATs as a frame from its nearest platoon
    /// neighbour would see them.
    fn sense(&mut self) {
        let smoothing = self.run.engine.snir_smoothing;
        let platoon: Vec<f64> = self.scenario.platoon().iter().map(|v| v.position).collect();
        for (k, &pos) in platoon.iter().enumerate() {
            let nearest = platoon
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, p)| (p - pos).abs())
                .fold(f64::INFINITY, f64::min);
            if !nearest.is_finite() {
                continue;
            }
            for rat in RatKind::ALL {
                let params = *self.run.radio.get(rat);
                let rx = received_power(&params, nearest, &mut self.sensing_rng);
                let interference: Vec<f64> = self.occupancy[rat.index()].interference(&params).into_iter().collect();
                let snir = snir_db(rx, params.background_noise_dbm, &interference);
                self.members[k].obs.record_snir(rat, snir, smoothing);
            }
        }
    }
}

fn received_power(params: &RatParams, distance: f64, rng: &mut SimRng) -> f64 {
    let loss = path_loss_db_from(
        distance,
        params.center_frequency_hz,
        params.path_loss_exponent,
        params.reference_distance_m,
    );
    params.tx_power_dbm - loss + fading_gain_db(params.fading, rng)
}
