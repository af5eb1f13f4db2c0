//! Synthetic matches with known outcomes, plus anomaly injection.
//!
//! Each round plays out as a chain of duels. The CT side wins a duel with
//! probability `sigmoid(2 * skill_gap + BETA_ALIVE * aliveDiff + BETA_EQ * eqDiff / 1000)`,
//! the loser of each duel dies, and the side left standing wins the round.
//! The end reason is then drawn from the winner's reason weights and the
//! kill sequence, bomb timeline, and round clock are laid out to match it.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::EsdmHeader;
use crate::math::{secs_to_ticks, sigmoid};
use crate::model::{
    ActionCounts, BombDefuse, BombPlant, BombSite, Damage, EventBody, Flash, GameEvent, GrenadeThrow, GrenadeType,
    Kill, Phase, PlayerFlags, PlayerInfo, PlayerState, RoundEndReason, ServerVars, Side, Vec3, Weapon, WeaponFire,
};

pub const BETA_ALIVE: f64 = 0.9;
pub const BETA_EQ: f64 = 0.12;
pub const MAP_EXTENT: f32 = 2000.0;
pub const MAX_SPEED: f32 = 250.0;
pub const BOMB_ZONE_RADIUS: f32 = 400.0;

const SITE_A: Vec3 = Vec3 { x: 1200.0, y: -1200.0, z: 0.0 };
const SITE_B: Vec3 = Vec3 { x: -1200.0, y: 1200.0, z: 0.0 };

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnomalyError {
    #[error("unsupported anomaly kind {0:?}")]
    UnsupportedKind(String),
    #[error("stream has no complete round to corrupt")]
    NoRounds,
}

/// Expected actions per live second of play.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Intensities {
    pub weapon_fires: f64,
    pub damages: f64,
    pub grenades: f64,
    pub flashes: f64,
}

impl Intensities {
    pub const ZERO: Intensities = Intensities { weapon_fires: 0.0, damages: 0.0, grenades: 0.0, flashes: 0.0 };
}

impl Default for Intensities {
    fn default() -> Self {
        Intensities { weapon_fires: 1.93, damages: 0.27, grenades: 0.28, flashes: 0.17 }
    }
}

/// Relative weights of round end reasons given the winner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReasonWeights {
    pub elimination_of_t: f64,
    pub bomb_defused: f64,
    pub target_saved: f64,
    pub bomb_exploded: f64,
    pub elimination_of_ct: f64,
}

impl ReasonWeights {
    pub const ELIMINATION_ONLY: ReasonWeights = ReasonWeights {
        elimination_of_t: 1.0,
        bomb_defused: 0.0,
        target_saved: 0.0,
        bomb_exploded: 0.0,
        elimination_of_ct: 1.0,
    };
}

impl Default for ReasonWeights {
    fn default() -> Self {
        ReasonWeights {
            elimination_of_t: 37.0,
            bomb_defused: 12.0,
            target_saved: 5.0,
            bomb_exploded: 19.0,
            elimination_of_ct: 27.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RoundTarget {
    /// Exactly this many rounds; no side clinches before the last one.
    Fixed(u16),
    PlayToClinch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenConfig {
    pub seed: u64,
    pub rounds: RoundTarget,
    pub tick_rate: u16,
    pub map_name: String,
    pub intensities: Intensities,
    pub reason_weights: ReasonWeights,
    pub skill_gap: f64,
    pub vars: ServerVars,
    /// Ticks between player updates.
    pub update_interval: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            rounds: RoundTarget::PlayToClinch,
            tick_rate: 128,
            map_name: "de_synthetic".to_string(),
            intensities: Intensities::default(),
            reason_weights: ReasonWeights::default(),
            skill_gap: 0.0,
            vars: ServerVars::default(),
            update_interval: 16,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = GenError::InvalidConfig;
        self.vars.validate().map_err(|_| bad("server vars"))?;
        if self.vars.max_regulation_rounds != self.vars.side_switch_after * 2 {
            return Err(bad("regulation length must be twice the half length"));
        }
        if self.tick_rate == 0 {
            return Err(bad("tick rate must be positive"));
        }
        if self.update_interval == 0 {
            return Err(bad("update interval must be positive"));
        }
        if self.map_name.is_empty() || self.map_name.len() > 255 {
            return Err(bad("map name must be 1..=255 bytes"));
        }
        if !(-1.0..=1.0).contains(&self.skill_gap) {
            return Err(bad("skill gap must lie in [-1, 1]"));
        }
        let i = &self.intensities;
        if [i.weapon_fires, i.damages, i.grenades, i.flashes].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(bad("intensities must be finite and non-negative"));
        }
        let w = &self.reason_weights;
        let all = [w.elimination_of_t, w.bomb_defused, w.target_saved, w.bomb_exploded, w.elimination_of_ct];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(bad("reason weights must be finite and non-negative"));
        }
        if all[..3].iter().sum::<f64>() <= 0.0 || all[3..].iter().sum::<f64>() <= 0.0 {
            return Err(bad("each side needs a positive reason weight"));
        }
        if let RoundTarget::Fixed(n) = self.rounds {
            if n == 0 || n > self.vars.max_regulation_rounds {
                return Err(bad("fixed round count must be in 1..=maxRegulationRounds"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundTruth {
    pub round_num: u16,
    pub winner: Side,
    pub reason: RoundEndReason,
    pub ct_score: u16,
    pub t_score: u16,
    pub counts: ActionCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerTruth {
    pub player_id: u8,
    pub kills: u32,
    pub deaths: u32,
    pub headshots: u32,
    pub damage: u32,
    pub flashes_thrown: u32,
    pub grenades_thrown: u32,
    pub bomb_plants: u32,
    pub bomb_defuses: u32,
    pub rounds_played: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub rounds: Vec<RoundTruth>,
    pub players: Vec<PlayerTruth>,
    pub final_score: (u16, u16),
}

/// Player table used by every generated match: ids 1-5 start CT, 6-10 start T.
pub fn default_players() -> Vec<PlayerInfo> {
    (1..=10u8)
        .map(|id| PlayerInfo {
            id,
            name: alloc::format!("player{id}"),
            start_side: if id <= 5 { Side::CT } else { Side::T },
        })
        .collect()
}

pub fn generate_match(cfg: &GenConfig) -> Result<(EsdmHeader, Vec<GameEvent>, GroundTruth), GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let header = EsdmHeader::new(&cfg.map_name, cfg.tick_rate, &cfg.vars, default_players());
    let mut events = vec![GameEvent::new(0, EventBody::MatchStart)];
    let mut truth = GroundTruth {
        rounds: Vec::new(),
        players: (1..=10).map(|id| PlayerTruth { player_id: id, ..Default::default() }).collect(),
        final_score: (0, 0),
    };
    let clinch = cfg.vars.clinch_score();
    let max_rounds = match cfg.rounds {
        RoundTarget::Fixed(n) => n,
        RoundTarget::PlayToClinch => cfg.vars.max_regulation_rounds,
    };
    let mut tick = u32::from(cfg.tick_rate);
    let (mut ct, mut t) = (0u16, 0u16);

    for round_num in 1..=max_rounds {
        let ct_first = round_num <= cfg.vars.side_switch_after;
        let plan = loop {
            let plan = plan_round(&mut rng, cfg);
            let (nct, nt) = match plan.winner {
                Side::CT => (ct + 1, t),
                Side::T => (ct, t + 1),
            };
            let early = nct.max(nt) >= clinch && round_num < max_rounds;
            if matches!(cfg.rounds, RoundTarget::Fixed(_)) && early {
                continue;
            }
            break plan;
        };
        match plan.winner {
            Side::CT => ct += 1,
            Side::T => t += 1,
        }
        let (round_events, counts, next_tick) =
            emit_round(&mut rng, cfg, &plan, round_num, tick, ct_first, &mut truth.players);
        events.extend(round_events);
        tick = next_tick;
        truth.rounds.push(RoundTruth {
            round_num,
            winner: plan.winner,
            reason: plan.reason,
            ct_score: ct,
            t_score: t,
            counts,
        });
        if ct >= clinch || t >= clinch {
            break;
        }
    }
    truth.final_score = (ct, t);
    Ok((header, events, truth))
}

#[derive(Debug, Clone, Copy)]
struct Loadout {
    eq_val: u16,
    armor: u8,
    helmet: bool,
    kit: bool,
    grenades: u8,
    weapon: Weapon,
}

struct RoundPlan {
    winner: Side,
    reason: RoundEndReason,
    /// Per slot: slots 0-4 are the CT side, 5-9 the T side.
    loadouts: [Loadout; 10],
    /// Victim slots in death order.
    deaths: Vec<usize>,
    /// Number of deaths before the bomb is planted, if it is.
    plant_after: Option<usize>,
}

fn buy(rng: &mut ChaCha8Rng, side: Side) -> [Loadout; 5] {
    let level = match rng.random_range(0..4) {
        0 => 0,
        1 => 1,
        _ => 2,
    };
    core::array::from_fn(|_| {
        let (lo, hi, weapon) = [(800, 1500, 2), (2500, 3800, 3), (4700, 6000, 7)][level];
        let kit = side == Side::CT && rng.random_bool([0.0, 0.4, 0.8][level]);
        Loadout {
            eq_val: rng.random_range(lo..=hi),
            armor: if level == 0 { 0 } else { 100 },
            helmet: level == 2 || (level == 1 && rng.random_bool(0.5)),
            kit,
            grenades: rng.random_range([0, 1, 2][level]..=[1, 2, 4][level]),
            weapon: Weapon(weapon),
        }
    })
}

fn plan_round(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> RoundPlan {
    let ct = buy(rng, Side::CT);
    let t = buy(rng, Side::T);
    let loadouts: [Loadout; 10] = core::array::from_fn(|i| if i < 5 { ct[i] } else { t[i - 5] });
    let mut alive = [true; 10];
    let mut deaths = Vec::new();
    loop {
        let count = |r: core::ops::Range<usize>| r.filter(|&i| alive[i]).count();
        let eq =
            |r: core::ops::Range<usize>| r.filter(|&i| alive[i]).map(|i| f64::from(loadouts[i].eq_val)).sum::<f64>();
        let (a_ct, a_t) = (count(0..5), count(5..10));
        if a_ct == 0 || a_t == 0 {
            break;
        }
        let logit =
            2.0 * cfg.skill_gap + BETA_ALIVE * (a_ct as f64 - a_t as f64) + BETA_EQ * (eq(0..5) - eq(5..10)) / 1000.0;
        let loser = if rng.random_bool(sigmoid(logit)) { 5..10 } else { 0..5 };
        let pool: Vec<usize> = loser.filter(|&i| alive[i]).collect();
        let victim = *pool.choose(rng).expect("loser has a survivor");
        alive[victim] = false;
        deaths.push(victim);
    }
    let winner = if alive[..5].iter().any(|a| *a) { Side::CT } else { Side::T };
    let w = &cfg.reason_weights;
    let reason = match winner {
        Side::CT => pick(
            rng,
            &[
                (w.elimination_of_t, RoundEndReason::EliminationOfT),
                (w.bomb_defused, RoundEndReason::BombDefused),
                (w.target_saved, RoundEndReason::TargetSaved),
            ],
        ),
        Side::T => pick(
            rng,
            &[(w.bomb_exploded, RoundEndReason::BombExploded), (w.elimination_of_ct, RoundEndReason::EliminationOfCT)],
        ),
    };
    if matches!(reason, RoundEndReason::TargetSaved | RoundEndReason::BombExploded) {
        deaths.pop();
    }
    let plant_after = match reason {
        RoundEndReason::BombDefused => Some(rng.random_range(0..deaths.len())),
        RoundEndReason::BombExploded => Some(rng.random_range(0..=deaths.len())),
        RoundEndReason::EliminationOfCT if rng.random_bool(0.35) => Some(rng.random_range(0..deaths.len())),
        _ => None,
    };
    RoundPlan { winner, reason, loadouts, deaths, plant_after }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, options: &[(f64, T)]) -> T {
    let total: f64 = options.iter().map(|o| o.0).sum();
    let mut x = rng.random_range(0.0..total);
    for (w, v) in options {
        if x < *w {
            return *v;
        }
        x -= w;
    }
    options.iter().rev().find(|o| o.0 > 0.0).expect("positive weight").1
}

/// Timed occurrences inside a round, before actors are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Intent {
    Fire,
    Damage,
    Grenade,
    Flash,
    Plant,
    Kill(usize),
    Defuse,
}

/// Stream position of an event within its tick: lower sorts first.
fn order_class(body: &EventBody) -> u8 {
    match body {
        EventBody::RoundStart { .. } => 0,
        EventBody::PhaseChange(Phase::Freeze | Phase::Default) => 1,
        EventBody::RoundEnd { .. } => 4,
        EventBody::PhaseChange(Phase::RoundEnd) => 5,
        EventBody::PlayerUpdate(_) => 6,
        EventBody::BombDefuse(_) | EventBody::BombExplode => 3,
        _ => 2,
    }
}

struct Slot {
    id: u8,
    side: Side,
    load: Loadout,
    hp: u8,
    grenades: u8,
    pos: Vec3,
    vel: Vec3,
    yaw: f32,
    pitch: f32,
    money: u16,
    ping: u16,
    blinded_until: u32,
}

fn near(a: Vec3, b: Vec3, r: f32) -> bool {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    dx * dx + dy * dy <= r * r
}

fn clamp_to_map(v: f32) -> f32 {
    v.clamp(-MAP_EXTENT, MAP_EXTENT)
}

fn reflect(p: &mut f32, v: &mut f32) {
    if *p > MAP_EXTENT {
        *p = 2.0 * MAP_EXTENT - *p;
        *v = -*v;
    } else if *p < -MAP_EXTENT {
        *p = -2.0 * MAP_EXTENT - *p;
        *v = -*v;
    }
    *p = clamp_to_map(*p);
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|d| d.sample(rng) as u32).unwrap_or(0)
}

/// Uniform in `lo..hi`, or `lo` when the range is empty.
fn between(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> u32 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// `n` sorted ticks uniform in `lo..hi` (or all `lo` when the range is empty).
fn ticks_in(rng: &mut ChaCha8Rng, n: usize, lo: u32, hi: u32) -> Vec<u32> {
    let mut v: Vec<u32> = (0..n).map(|_| between(rng, lo, hi)).collect();
    v.sort_unstable();
    v
}

#[allow(clippy::too_many_arguments)]
fn emit_round(
    rng: &mut ChaCha8Rng,
    cfg: &GenConfig,
    plan: &RoundPlan,
    round_num: u16,
    t0: u32,
    ct_first: bool,
    stats: &mut [PlayerTruth],
) -> (Vec<GameEvent>, ActionCounts, u32) {
    let rate = cfg.tick_rate;
    let secs = |s: f64| secs_to_ticks(s, rate);
    let vars = &cfg.vars;
    let fe = t0 + secs(f64::from(vars.freeze_time_secs));
    let round_ticks = secs(f64::from(vars.round_time_secs));
    let bomb_ticks = secs(f64::from(vars.bomb_timer_secs));
    let one = secs(1.0).max(1);

    // Timeline: kill ticks, plant tick, and end tick.
    let k = plan.deaths.len();
    let mut kill_ticks: Vec<u32>;
    let mut plant = None;
    let mut defuse = None;
    let end;
    match plan.plant_after {
        None if plan.reason == RoundEndReason::TargetSaved => {
            end = fe + round_ticks;
            kill_ticks = ticks_in(rng, k, fe + 1, end - one);
        }
        None => {
            end = fe + between(rng, secs(10.0).min(round_ticks), round_ticks.saturating_sub(secs(3.0)));
            kill_ticks = ticks_in(rng, k.saturating_sub(1), fe + 1, end);
            kill_ticks.push(end);
        }
        Some(j) => {
            let p = fe + between(rng, secs(5.0).min(round_ticks), round_ticks.saturating_sub(secs(5.0)));
            plant = Some(p);
            kill_ticks = ticks_in(rng, j, fe + 1, p);
            let after = k - j;
            match plan.reason {
                RoundEndReason::BombDefused => {
                    let d = p + between(rng, secs(8.0).min(bomb_ticks / 2), bomb_ticks.saturating_sub(one)).max(1);
                    kill_ticks.extend(ticks_in(rng, after, p + 1, d));
                    defuse = Some(d);
                    end = d;
                }
                RoundEndReason::BombExploded => {
                    end = p + bomb_ticks;
                    kill_ticks.extend(ticks_in(rng, after, p + 1, end - one));
                }
                _ => {
                    let e =
                        p + between(rng, secs(3.0).min(bomb_ticks / 2), bomb_ticks.saturating_sub(secs(3.0))).max(1);
                    kill_ticks.extend(ticks_in(rng, after.saturating_sub(1), p + 1, e));
                    kill_ticks.push(e);
                    end = e;
                }
            }
        }
    }
    let next_start = end + secs(f64::from(vars.round_end_secs));

    // Players.
    let mut slots: Vec<Slot> = (0..10)
        .map(|s| {
            let side = if s < 5 { Side::CT } else { Side::T };
            let id = match (ct_first, s < 5) {
                (true, true) | (false, false) => (s % 5) as u8 + 1,
                _ => (s % 5) as u8 + 6,
            };
            let spawn_y = if side == Side::CT { 1500.0 } else { -1500.0 };
            let load = plan.loadouts[s];
            Slot {
                id,
                side,
                load,
                hp: 100,
                grenades: load.grenades,
                pos: Vec3::new(rng.random_range(-300.0..300.0), spawn_y + rng.random_range(-200.0..200.0), 0.0),
                vel: Vec3::ZERO,
                yaw: rng.random_range(0.0..360.0),
                pitch: 0.0,
                money: rng.random_range(0..=16000),
                ping: rng.random_range(5..=80),
                blinded_until: 0,
            }
        })
        .collect();
    let planter = plant.map(|_| {
        let dead_before: Vec<usize> = plan.deaths[..plan.plant_after.unwrap_or(0)].to_vec();
        let alive_t: Vec<usize> = (5..10).filter(|s| !dead_before.contains(s)).collect();
        *alive_t.choose(rng).expect("a T survives until the plant")
    });
    let carrier = planter.unwrap_or_else(|| rng.random_range(5..10));
    let site = if rng.random_bool(0.5) { BombSite::A } else { BombSite::B };
    let site_pos = if site == BombSite::A { SITE_A } else { SITE_B };

    // Intents sorted by tick; kills carry their victim slot.
    let live = f64::from(end - fe) / f64::from(rate);
    let mut intents: Vec<(u32, Intent)> = Vec::new();
    for (tick, victim) in kill_ticks.iter().zip(&plan.deaths) {
        intents.push((*tick, Intent::Kill(*victim)));
    }
    if let Some(p) = plant {
        intents.push((p, Intent::Plant));
    }
    if let Some(d) = defuse {
        intents.push((d, Intent::Defuse));
    }
    let i = &cfg.intensities;
    for (lambda, kind) in [
        (i.weapon_fires, Intent::Fire),
        (i.damages, Intent::Damage),
        (i.grenades, Intent::Grenade),
        (i.flashes, Intent::Flash),
    ] {
        let n = poisson(rng, lambda * live) as usize;
        for tick in ticks_in(rng, n, fe, end) {
            intents.push((tick, kind));
        }
    }
    intents.sort();

    let mut out: Vec<GameEvent> = vec![
        GameEvent::new(t0, EventBody::RoundStart { round_num }),
        GameEvent::new(t0, EventBody::PhaseChange(Phase::Freeze)),
        GameEvent::new(fe, EventBody::PhaseChange(Phase::Default)),
    ];
    let mut counts = ActionCounts::default();
    let stat = |stats: &mut [PlayerTruth], id: u8| -> usize { usize::from(id - 1).min(stats.len() - 1) };
    for s in &slots {
        let k = stat(stats, s.id);
        stats[k].rounds_played += 1;
    }

    let dt = cfg.update_interval as f32 / f32::from(rate);
    let mut planted = false;
    let mut cursor = 0;
    let mut tick = t0;
    while tick < next_start {
        let last = tick + cfg.update_interval >= next_start;
        while let Some(&(at, intent)) = intents.get(cursor).filter(|x| last || x.0 <= tick) {
            cursor += 1;
            let alive = |slots: &[Slot], side: Option<Side>| -> Vec<usize> {
                (0..10).filter(|&s| slots[s].hp > 0 && side.is_none_or(|sd| slots[s].side == sd)).collect()
            };
            match intent {
                Intent::Kill(victim) => {
                    let opp = slots[victim].side.opponent();
                    let Some(&attacker) = alive(&slots, Some(opp)).choose(rng) else {
                        continue;
                    };
                    let headshot = rng.random_bool(0.4);
                    let (a, v) = (&slots[attacker], &slots[victim]);
                    out.push(GameEvent::new(
                        at,
                        EventBody::Damage(Damage {
                            attacker_id: a.id,
                            victim_id: v.id,
                            attacker_pos: a.pos,
                            victim_pos: v.pos,
                            hp_damage: v.hp,
                            weapon: a.load.weapon,
                        }),
                    ));
                    out.push(GameEvent::new(
                        at,
                        EventBody::Kill(Kill {
                            attacker_id: a.id,
                            victim_id: v.id,
                            attacker_pos: a.pos,
                            victim_pos: v.pos,
                            weapon: a.load.weapon,
                            headshot,
                        }),
                    ));
                    counts.damages += 1;
                    counts.kills += 1;
                    let (ai, vi) = (stat(stats, a.id), stat(stats, v.id));
                    stats[ai].damage += u32::from(v.hp);
                    stats[ai].kills += 1;
                    stats[ai].headshots += u32::from(headshot);
                    stats[vi].deaths += 1;
                    slots[victim].hp = 0;
                    slots[victim].vel = Vec3::ZERO;
                }
                Intent::Damage => {
                    let victims: Vec<usize> = alive(&slots, None).into_iter().filter(|&s| slots[s].hp >= 2).collect();
                    let Some(&victim) = victims.choose(rng) else {
                        continue;
                    };
                    let Some(&attacker) = alive(&slots, Some(slots[victim].side.opponent())).choose(rng) else {
                        continue;
                    };
                    let dmg = rng.random_range(1..=(slots[victim].hp - 1).min(60));
                    let (a, v) = (&slots[attacker], &slots[victim]);
                    out.push(GameEvent::new(
                        at,
                        EventBody::Damage(Damage {
                            attacker_id: a.id,
                            victim_id: v.id,
                            attacker_pos: a.pos,
                            victim_pos: v.pos,
                            hp_damage: dmg,
                            weapon: a.load.weapon,
                        }),
                    ));
                    counts.damages += 1;
                    let ai = stat(stats, a.id);
                    stats[ai].damage += u32::from(dmg);
                    slots[victim].hp -= dmg;
                }
                Intent::Flash => {
                    let pool = alive(&slots, None);
                    if pool.len() < 2 {
                        continue;
                    }
                    let mut two: Vec<usize> = pool.choose_multiple(rng, 2).copied().collect();
                    two.shuffle(rng);
                    let secs_blind: f32 = rng.random_range(0.5..4.0);
                    out.push(GameEvent::new(
                        at,
                        EventBody::Flash(Flash {
                            attacker_id: slots[two[0]].id,
                            victim_id: slots[two[1]].id,
                            flash_duration_secs: secs_blind,
                        }),
                    ));
                    counts.flashes += 1;
                    slots[two[1]].blinded_until = at + secs_to_ticks(f64::from(secs_blind), rate);
                }
                Intent::Grenade => {
                    let pool: Vec<usize> = alive(&slots, None).into_iter().filter(|&s| slots[s].grenades > 0).collect();
                    let Some(&thrower) = pool.choose(rng) else {
                        continue;
                    };
                    let kind = *GrenadeType::ALL.choose(rng).expect("non-empty");
                    let s = &mut slots[thrower];
                    s.grenades -= 1;
                    let land = Vec3::new(
                        clamp_to_map(s.pos.x + rng.random_range(-600.0..600.0)),
                        clamp_to_map(s.pos.y + rng.random_range(-600.0..600.0)),
                        0.0,
                    );
                    out.push(GameEvent::new(
                        at,
                        EventBody::GrenadeThrow(GrenadeThrow {
                            player_id: s.id,
                            grenade_type: kind,
                            throw_pos: s.pos,
                            land_pos: land,
                        }),
                    ));
                    counts.grenades += 1;
                    let ti = stat(stats, s.id);
                    stats[ti].grenades_thrown += 1;
                    stats[ti].flashes_thrown += u32::from(kind == GrenadeType::Flashbang);
                }
                Intent::Fire => {
                    let Some(&shooter) = alive(&slots, None).choose(rng) else {
                        continue;
                    };
                    let s = &slots[shooter];
                    out.push(GameEvent::new(
                        at,
                        EventBody::WeaponFire(WeaponFire { player_id: s.id, pos: s.pos, weapon: s.load.weapon }),
                    ));
                    counts.weapon_fires += 1;
                }
                Intent::Plant => {
                    let p = planter.expect("plant has a planter");
                    slots[p].pos = site_pos;
                    slots[p].vel = Vec3::ZERO;
                    out.push(GameEvent::new(
                        at,
                        EventBody::BombPlant(BombPlant { player_id: slots[p].id, site, pos: site_pos }),
                    ));
                    out.push(GameEvent::new(at, EventBody::PhaseChange(Phase::BombPlanted)));
                    counts.bomb_events += 1;
                    let pi = stat(stats, slots[p].id);
                    stats[pi].bomb_plants += 1;
                    planted = true;
                }
                Intent::Defuse => {
                    let Some(&d) = alive(&slots, Some(Side::CT)).choose(rng) else {
                        continue;
                    };
                    slots[d].pos = site_pos;
                    out.push(GameEvent::new(at, EventBody::BombDefuse(BombDefuse { player_id: slots[d].id })));
                    counts.bomb_events += 1;
                    let di = stat(stats, slots[d].id);
                    stats[di].bomb_defuses += 1;
                }
            }
        }

        let moving = tick >= fe && tick < end;
        for (n, s) in slots.iter_mut().enumerate() {
            if s.hp > 0 && moving {
                s.vel.x += rng.random_range(-120.0..120.0);
                s.vel.y += rng.random_range(-120.0..120.0);
                let speed = libm::sqrtf(s.vel.x * s.vel.x + s.vel.y * s.vel.y);
                if speed > MAX_SPEED {
                    s.vel.x *= MAX_SPEED / speed;
                    s.vel.y *= MAX_SPEED / speed;
                }
                s.pos.x += s.vel.x * dt;
                s.pos.y += s.vel.y * dt;
                reflect(&mut s.pos.x, &mut s.vel.x);
                reflect(&mut s.pos.y, &mut s.vel.y);
                s.yaw += rng.random_range(-30.0..30.0);
                if s.yaw < 0.0 {
                    s.yaw += 360.0;
                }
                if s.yaw >= 360.0 {
                    s.yaw -= 360.0;
                }
                s.pitch = rng.random_range(-20.0..20.0);
            } else {
                s.vel = Vec3::ZERO;
            }
            let alive = s.hp > 0;
            out.push(GameEvent::new(
                tick,
                EventBody::PlayerUpdate(PlayerState {
                    player_id: s.id,
                    side: s.side,
                    pos: s.pos,
                    vel: s.vel,
                    view_yaw: s.yaw,
                    view_pitch: s.pitch,
                    hp: s.hp,
                    armor: if alive { s.load.armor } else { 0 },
                    money: s.money,
                    eq_val: if alive { s.load.eq_val } else { 0 },
                    active_weapon: s.load.weapon,
                    ping: s.ping,
                    flags: PlayerFlags {
                        alive,
                        blinded: alive && tick < s.blinded_until,
                        in_bomb_zone: alive
                            && (near(s.pos, SITE_A, BOMB_ZONE_RADIUS) || near(s.pos, SITE_B, BOMB_ZONE_RADIUS)),
                        has_helmet: alive && s.load.helmet,
                        has_defuse_kit: alive && s.load.kit,
                        has_bomb: alive && n == carrier && !planted,
                    },
                    grenades_remaining: if alive { s.grenades } else { 0 },
                }),
            ));
        }
        tick += cfg.update_interval;
    }
    debug_assert_eq!(cursor, intents.len());

    if plan.reason == RoundEndReason::BombExploded {
        out.push(GameEvent::new(end, EventBody::BombExplode));
        counts.bomb_events += 1;
    }
    out.push(GameEvent::new(end, EventBody::RoundEnd { winner: plan.winner, reason: plan.reason }));
    out.push(GameEvent::new(end, EventBody::PhaseChange(Phase::RoundEnd)));
    out.sort_by_key(|e| (e.tick, order_class(&e.body)));
    (out, counts, next_start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AnomalyKind {
    Restart,
    DuplicateRoundEnd,
    Truncation,
}

impl FromStr for AnomalyKind {
    type Err = AnomalyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "restart" => Ok(AnomalyKind::Restart),
            "duplicateRoundEnd" | "duplicate-round-end" => Ok(AnomalyKind::DuplicateRoundEnd),
            "truncation" => Ok(AnomalyKind::Truncation),
            other => Err(AnomalyError::UnsupportedKind(other.to_string())),
        }
    }
}

fn round_spans(events: &[GameEvent]) -> Vec<(usize, usize)> {
    let starts: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.body, EventBody::RoundStart { .. }))
        .map(|(i, _)| i)
        .collect();
    starts.iter().enumerate().map(|(n, &s)| (s, starts.get(n + 1).copied().unwrap_or(events.len()))).collect()
}

/// Corrupts a well-formed stream in a way the cleaner should undo.
///
/// * `Restart` prepends a copy of the first few rounds (the last one cut
///   short) as warmup junk, then replays the original stream after it.
/// * `DuplicateRoundEnd` repeats one round's end record with the opposite
///   winner right after the real one.
/// * `Truncation` appends a partial round with no end record.
pub fn inject_anomalies(events: Vec<GameEvent>, kind: AnomalyKind, seed: u64) -> Result<Vec<GameEvent>, AnomalyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a0a1);
    let spans = round_spans(&events);
    if spans.is_empty() {
        return Err(AnomalyError::NoRounds);
    }
    match kind {
        AnomalyKind::Restart => {
            let full = rng.random_range(0..spans.len().min(3));
            let (ps, pe) = spans[full];
            let cut = rng.random_range(ps + 1..pe);
            let (junk_start, _) = spans[0];
            let junk: Vec<GameEvent> = events[junk_start..cut].to_vec();
            let offset = junk.last().map_or(0, |e| e.tick + 1);
            let mut out = junk;
            out.push(GameEvent::new(offset, EventBody::RestartMarker));
            out.extend(events.into_iter().map(|mut e| {
                e.tick += offset;
                e
            }));
            Ok(out)
        }
        AnomalyKind::DuplicateRoundEnd => {
            let ends: Vec<usize> = events
                .iter()
                .enumerate()
                .filter(|(_, e)| matches!(e.body, EventBody::RoundEnd { .. }))
                .map(|(i, _)| i)
                .collect();
            let &at = ends.choose(&mut rng).ok_or(AnomalyError::NoRounds)?;
            let mut dup = events[at].clone();
            if let EventBody::RoundEnd { winner, reason } = &mut dup.body {
                *winner = winner.opponent();
                *reason = match winner {
                    Side::CT => RoundEndReason::EliminationOfT,
                    Side::T => RoundEndReason::EliminationOfCT,
                };
            }
            let mut out = events;
            out.insert(at + 1, dup);
            Ok(out)
        }
        AnomalyKind::Truncation => {
            let &(s, e) = spans.choose(&mut rng).expect("non-empty");
            let end_at =
                events[s..e].iter().position(|x| matches!(x.body, EventBody::RoundEnd { .. })).map_or(e, |p| s + p);
            let cut = rng.random_range(s + 1..end_at.max(s + 2));
            let base = events[s].tick;
            let offset = events.last().map_or(0, |x| x.tick + 1);
            let next_num = spans.len() as u16 + 1;
            let partial: Vec<GameEvent> = events[s..cut]
                .iter()
                .map(|x| {
                    let mut x = x.clone();
                    x.tick = x.tick - base + offset;
                    if let EventBody::RoundStart { round_num } = &mut x.body {
                        *round_num = next_num;
                    }
                    x
                })
                .collect();
            let mut out = events;
            out.extend(partial);
            Ok(out)
        }
    }
}

/// Random well-formed header and event stream for codec testing. Events obey
/// field ranges but not game logic.
pub fn random_stream(seed: u64, max_events: usize) -> (EsdmHeader, Vec<GameEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = ServerVars {
        freeze_time_secs: rng.random_range(1..=60),
        round_time_secs: rng.random_range(1..=300),
        bomb_timer_secs: rng.random_range(1..=90),
        round_end_secs: rng.random_range(1..=10),
        side_switch_after: rng.random_range(1..=20),
        ..ServerVars::default()
    };
    let map_len = rng.random_range(1..=24);
    let map: String = (0..map_len).map(|_| char::from(rng.random_range(b'a'..=b'z'))).collect();
    let mut ids: Vec<u8> = (0..=255u8).collect();
    ids.shuffle(&mut rng);
    ids.truncate(10);
    let players: Vec<PlayerInfo> = ids
        .iter()
        .enumerate()
        .map(|(n, &id)| {
            let len = rng.random_range(0..=12);
            PlayerInfo {
                id,
                name: (0..len).map(|_| char::from(rng.random_range(b' '..=b'~'))).collect(),
                start_side: if n < 5 { Side::CT } else { Side::T },
            }
        })
        .collect();
    let header = EsdmHeader::new(&map, rng.random_range(1..=256), &vars, players);

    let n = rng.random_range(0..=max_events);
    let mut tick = rng.random_range(0..1000u32);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        tick += rng.random_range(0..50);
        events.push(GameEvent::new(tick, random_body(&mut rng, &ids)));
    }
    (header, events)
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.random_range(-4096.0..4096.0), rng.random_range(-4096.0..4096.0), rng.random_range(-512.0..512.0))
}

fn random_body(rng: &mut ChaCha8Rng, ids: &[u8]) -> EventBody {
    let pair = |rng: &mut ChaCha8Rng| {
        let two: Vec<u8> = ids.choose_multiple(rng, 2).copied().collect();
        (two[0], two[1])
    };
    let side = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            Side::CT
        } else {
            Side::T
        }
    };
    match rng.random_range(0..14) {
        0 => {
            let (a, v) = pair(rng);
            EventBody::Damage(Damage {
                attacker_id: a,
                victim_id: v,
                attacker_pos: random_vec(rng),
                victim_pos: random_vec(rng),
                hp_damage: rng.random_range(1..=100),
                weapon: Weapon(rng.random()),
            })
        }
        1 => {
            let (a, v) = pair(rng);
            EventBody::Kill(Kill {
                attacker_id: a,
                victim_id: v,
                attacker_pos: random_vec(rng),
                victim_pos: random_vec(rng),
                weapon: Weapon(rng.random()),
                headshot: rng.random(),
            })
        }
        2 => {
            let (a, v) = pair(rng);
            EventBody::Flash(Flash { attacker_id: a, victim_id: v, flash_duration_secs: rng.random_range(0.0..10.0) })
        }
        3 => EventBody::BombPlant(BombPlant {
            player_id: *ids.choose(rng).expect("ids"),
            site: if rng.random_bool(0.5) { BombSite::A } else { BombSite::B },
            pos: random_vec(rng),
        }),
        4 => EventBody::BombDefuse(BombDefuse { player_id: *ids.choose(rng).expect("ids") }),
        5 => EventBody::BombExplode,
        6 => EventBody::GrenadeThrow(GrenadeThrow {
            player_id: *ids.choose(rng).expect("ids"),
            grenade_type: GrenadeType::from_code(rng.random_range(0..5)).expect("valid code"),
            throw_pos: random_vec(rng),
            land_pos: random_vec(rng),
        }),
        7 => EventBody::WeaponFire(WeaponFire {
            player_id: *ids.choose(rng).expect("ids"),
            pos: random_vec(rng),
            weapon: Weapon(rng.random()),
        }),
        8 => {
            let hp = if rng.random_bool(0.2) { 0 } else { rng.random_range(1..=100) };
            let alive = hp > 0;
            let s = side(rng);
            EventBody::PlayerUpdate(PlayerState {
                player_id: *ids.choose(rng).expect("ids"),
                side: s,
                pos: random_vec(rng),
                vel: if alive { random_vec(rng) } else { Vec3::ZERO },
                view_yaw: rng.random_range(0.0..360.0),
                view_pitch: rng.random_range(-90.0..=90.0),
                hp,
                armor: rng.random_range(0..=100),
                money: rng.random(),
                eq_val: rng.random(),
                active_weapon: Weapon(rng.random()),
                ping: rng.random(),
                flags: PlayerFlags {
                    alive,
                    blinded: rng.random(),
                    in_bomb_zone: rng.random(),
                    has_helmet: rng.random(),
                    has_defuse_kit: rng.random(),
                    has_bomb: s == Side::T && rng.random(),
                },
                grenades_remaining: rng.random_range(0..=4),
            })
        }
        9 => EventBody::PhaseChange(Phase::from_code(rng.random_range(0..4)).expect("valid code")),
        10 => EventBody::RoundStart { round_num: rng.random() },
        11 => {
            let reason = RoundEndReason::from_code(rng.random_range(0..5)).expect("valid code");
            EventBody::RoundEnd { winner: reason.winner(), reason }
        }
        12 => EventBody::MatchStart,
        _ => EventBody::RestartMarker,
    }
}
