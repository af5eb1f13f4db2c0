//! Frame sampling and trajectory extraction.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{
    BombSite, BombState, Effect, EventBody, Frame, GameEvent, GameRound, GrenadeType, ParserParams, Phase, PlayerState,
    ServerVars, Side, TeamState, Trajectory, TrajectorySample, Vec3,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("round {round_num}: no player update at all for player {player_id}")]
    NoPlayerState { round_num: u16, player_id: u8 },
    #[error("round {round_num}: expected 5 players per side, found {ct} CT and {t} T")]
    IncompleteRoster { round_num: u16, ct: usize, t: usize },
}

/// Team equipment value at `tick`: the sum of `eqVal` over each side's latest
/// player updates at or before `tick`.
pub fn start_equipment(events: &[GameEvent], tick: u32) -> (u32, u32) {
    let mut latest: BTreeMap<u8, &PlayerState> = BTreeMap::new();
    for e in events.iter().take_while(|e| e.tick <= tick) {
        if let EventBody::PlayerUpdate(p) = &e.body {
            latest.insert(p.player_id, p);
        }
    }
    latest.values().fold((0, 0), |(ct, t), p| match p.side {
        Side::CT => (ct + u32::from(p.eq_val), t),
        Side::T => (ct, t + u32::from(p.eq_val)),
    })
}

/// Ticks at which frames are taken: `start + k * stride` while `<= end`.
pub fn frame_ticks(start_tick: u32, end_tick: u32, stride: u32) -> impl Iterator<Item = u32> {
    (0u32..)
        .map(move |k| start_tick as u64 + u64::from(k) * u64::from(stride))
        .take_while(move |t| *t <= u64::from(end_tick))
        .map(|t| t as u32)
}

/// Downsamples a round's events into frames at the parse rate.
///
/// `events` is the round's whole span in tick order. Each frame carries the
/// latest update of every rostered player at or before the frame tick; a
/// player with no update yet takes their first update of the round.
pub fn sample_frames(
    events: &[GameEvent],
    round: &GameRound,
    vars: &ServerVars,
    params: &ParserParams,
    tick_rate: u16,
) -> Result<Vec<Frame>, FrameError> {
    let mut roster: Vec<u8> = round.ct_players.iter().chain(&round.t_players).copied().collect();
    if roster.is_empty() {
        roster = events
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::PlayerUpdate(p) => Some(p.player_id),
                _ => None,
            })
            .collect();
        roster.sort_unstable();
        roster.dedup();
    }

    let mut first_seen: BTreeMap<u8, &PlayerState> = BTreeMap::new();
    for e in events {
        if let EventBody::PlayerUpdate(p) = &e.body {
            first_seen.entry(p.player_id).or_insert(p);
        }
    }
    for id in &roster {
        if !first_seen.contains_key(id) {
            return Err(FrameError::NoPlayerState { round_num: round.round_num, player_id: *id });
        }
    }

    let fire_ticks = ServerVars::ticks(vars.fire_lifetime_secs, tick_rate);
    let smoke_ticks = ServerVars::ticks(vars.smoke_lifetime_secs, tick_rate);
    let stride = params.frame_stride(tick_rate);

    let mut latest: BTreeMap<u8, &PlayerState> = BTreeMap::new();
    let mut phase = Phase::Freeze;
    let mut phase_start = round.start_tick;
    let mut planted: Option<(BombSite, u32, Vec3)> = None;
    let mut fires: Vec<Effect> = Vec::new();
    let mut smokes: Vec<Effect> = Vec::new();
    let mut cursor = 0;
    let mut frames = Vec::new();

    for tick in frame_ticks(round.start_tick, round.end_tick, stride) {
        while let Some(e) = events.get(cursor).filter(|e| e.tick <= tick) {
            match &e.body {
                EventBody::PlayerUpdate(p) => {
                    latest.insert(p.player_id, p);
                }
                EventBody::PhaseChange(next) => {
                    phase = *next;
                    phase_start = e.tick;
                }
                EventBody::BombPlant(b) => planted = Some((b.site, e.tick, b.pos)),
                EventBody::GrenadeThrow(g) => match g.grenade_type {
                    GrenadeType::Molotov => fires.push(Effect { pos: g.land_pos, expiry_tick: e.tick + fire_ticks }),
                    GrenadeType::Smoke => smokes.push(Effect { pos: g.land_pos, expiry_tick: e.tick + smoke_ticks }),
                    _ => {}
                },
                _ => {}
            }
            cursor += 1;
        }
        fires.retain(|f| f.expiry_tick >= tick);
        smokes.retain(|s| s.expiry_tick >= tick);

        let mut ct = Vec::with_capacity(5);
        let mut t = Vec::with_capacity(5);
        for id in &roster {
            let p = latest.get(id).or_else(|| first_seen.get(id)).copied().cloned();
            if let Some(p) = p {
                match p.side {
                    Side::CT => ct.push(p),
                    Side::T => t.push(p),
                }
            }
        }
        if ct.len() != 5 || t.len() != 5 {
            return Err(FrameError::IncompleteRoster { round_num: round.round_num, ct: ct.len(), t: t.len() });
        }

        let bomb = match planted {
            Some((site, plant_tick, pos)) => {
                BombState { carrier_id: None, planted_site: Some(site), plant_tick: Some(plant_tick), pos: Some(pos) }
            }
            None => match t.iter().find(|p| p.is_alive() && p.flags.has_bomb) {
                Some(c) => {
                    BombState { carrier_id: Some(c.player_id), planted_site: None, plant_tick: None, pos: Some(c.pos) }
                }
                None => BombState::default(),
            },
        };

        let phase_len = match phase {
            Phase::Freeze => vars.freeze_time_secs,
            Phase::Default => vars.round_time_secs,
            Phase::BombPlanted => vars.bomb_timer_secs,
            Phase::RoundEnd => vars.round_end_secs,
        };
        let seconds_in_phase = f64::from(tick - phase_start.min(tick)) / f64::from(tick_rate);
        let clock_secs = (f64::from(phase_len) - seconds_in_phase).max(0.0);

        frames.push(Frame {
            tick,
            phase,
            clock_secs,
            seconds_in_phase,
            bomb,
            fires: fires.clone(),
            smokes: smokes.clone(),
            ct: TeamState::new(Side::CT, ct).expect("sides partitioned above"),
            t: TeamState::new(Side::T, t).expect("sides partitioned above"),
        });
    }
    Ok(frames)
}

/// One trajectory per rostered player, sampled from frames where the player
/// is alive.
pub fn extract_trajectories(round: &GameRound) -> Vec<Trajectory> {
    let mut ids: Vec<u8> = round.ct_players.iter().chain(&round.t_players).copied().collect();
    if ids.is_empty() {
        if let Some(f) = round.frames.first() {
            ids = f.players().map(|p| p.player_id).collect();
        }
    }
    ids.sort_unstable();
    ids.into_iter()
        .map(|player_id| Trajectory {
            player_id,
            round_num: round.round_num,
            samples: round
                .frames
                .iter()
                .filter_map(|f| {
                    f.players()
                        .find(|p| p.player_id == player_id && p.is_alive())
                        .map(|p| TrajectorySample { tick: f.tick, pos: p.pos })
                })
                .collect(),
        })
        .collect()
}
