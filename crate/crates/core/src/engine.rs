//! Round engine: segments the event stream into rounds, validates each round
//! against the game's win conditions, and reconciles scores and sides.

use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{
    BombEvent, BombEventKind, EventBody, GameEvent, GameRound, InvalidReason, Phase, RoundEndReason, ServerVars, Side,
    Timed,
};

/// Slack allowed on every phase length check, in seconds.
pub const DURATION_TOLERANCE_SECS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("stream ended inside round {round_num} with no round end")]
    MissingRoundEnd { round_num: u16 },
    #[error("no valid rounds to reconcile")]
    EmptyMatch,
}

/// Live state of the round currently being played.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMachineState {
    pub current_phase: Phase,
    pub round_num: u16,
    pub phase_start_tick: u32,
    pub bomb_planted: bool,
    pub plant_tick: Option<u32>,
    pub defused: bool,
    pub alive_ct: u8,
    pub alive_t: u8,
    pub pending_events: Vec<GameEvent>,
    /// Rounds won so far by the CT side and the T side.
    pub scores: (u16, u16),
    pub tick_rate: u16,
}

impl RoundMachineState {
    pub fn new(tick_rate: u16) -> Self {
        RoundMachineState {
            current_phase: Phase::RoundEnd,
            round_num: 0,
            phase_start_tick: 0,
            bomb_planted: false,
            plant_tick: None,
            defused: false,
            alive_ct: 5,
            alive_t: 5,
            pending_events: Vec::new(),
            scores: (0, 0),
            tick_rate,
        }
    }

    fn start_round(&mut self, round_num: u16, tick: u32) {
        self.round_num = round_num;
        self.phase_start_tick = tick;
        self.bomb_planted = false;
        self.plant_tick = None;
        self.defused = false;
        self.alive_ct = 5;
        self.alive_t = 5;
        self.pending_events.clear();
    }

    fn record_death(&mut self, side: Side) {
        match side {
            Side::CT => self.alive_ct = self.alive_ct.saturating_sub(1),
            Side::T => self.alive_t = self.alive_t.saturating_sub(1),
        }
    }
}

/// Returns the win condition met at `tick`, if any.
///
/// Simultaneous conditions resolve as BombDefused > BombExploded >
/// eliminations > TargetSaved.
pub fn check_win_condition(state: &RoundMachineState, tick: u32, vars: &ServerVars) -> Option<(Side, RoundEndReason)> {
    if state.defused {
        return Some((Side::CT, RoundEndReason::BombDefused));
    }
    if let (true, Some(plant)) = (state.bomb_planted, state.plant_tick) {
        let detonation = plant + ServerVars::ticks(f64::from(vars.bomb_timer_secs), state.tick_rate);
        if tick >= detonation {
            return Some((Side::T, RoundEndReason::BombExploded));
        }
    }
    if state.alive_ct == 0 {
        return Some((Side::T, RoundEndReason::EliminationOfCT));
    }
    if state.alive_t == 0 && !state.bomb_planted {
        return Some((Side::CT, RoundEndReason::EliminationOfT));
    }
    if !state.bomb_planted && state.current_phase == Phase::Default {
        let expiry = state.phase_start_tick + ServerVars::ticks(f64::from(vars.round_time_secs), state.tick_rate);
        if tick >= expiry {
            return Some((Side::CT, RoundEndReason::TargetSaved));
        }
    }
    None
}

/// A segmented round plus every event in its span, including player updates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRound {
    pub round: GameRound,
    pub events: Vec<GameEvent>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segmentation {
    pub rounds: Vec<RawRound>,
    pub orphan_round_ends: u32,
    pub duplicate_round_ends: u32,
    pub incomplete_rounds_dropped: u32,
    pub illegal_phase_transitions: u32,
    /// Rounds discarded because a later MatchStart or RestartMarker reset the match.
    pub rounds_before_restart: u32,
}

struct OpenRound {
    round_num: u16,
    start_tick: u32,
    end: Option<(u32, Side, RoundEndReason)>,
    scores_after: (u16, u16),
    events: Vec<GameEvent>,
}

/// Incremental segmenter; feed events in stream order.
pub struct Segmenter {
    vars: ServerVars,
    drop_incomplete: bool,
    state: RoundMachineState,
    sides: [Option<Side>; 256],
    open: Option<OpenRound>,
    out: Segmentation,
}

impl Segmenter {
    pub fn new(vars: &ServerVars, tick_rate: u16, drop_incomplete: bool) -> Self {
        Segmenter {
            vars: vars.clone(),
            drop_incomplete,
            state: RoundMachineState::new(tick_rate),
            sides: [None; 256],
            open: None,
            out: Segmentation::default(),
        }
    }

    pub fn push(&mut self, event: GameEvent) -> Result<(), EngineError> {
        let tick = event.tick;
        match &event.body {
            EventBody::MatchStart | EventBody::RestartMarker => {
                self.close(tick, false)?;
                self.out.rounds_before_restart += self.out.rounds.len() as u32;
                self.out.rounds.clear();
                self.state.scores = (0, 0);
                return Ok(());
            }
            EventBody::RoundStart { round_num } => {
                self.close(tick, false)?;
                self.state.start_round(*round_num, tick);
                self.open = Some(OpenRound {
                    round_num: *round_num,
                    start_tick: tick,
                    end: None,
                    scores_after: self.state.scores,
                    events: Vec::new(),
                });
            }
            EventBody::RoundEnd { winner, reason } => match &mut self.open {
                None => {
                    self.out.orphan_round_ends += 1;
                    return Ok(());
                }
                Some(open) if open.end.is_some() => {
                    self.out.duplicate_round_ends += 1;
                    return Ok(());
                }
                Some(open) => {
                    open.end = Some((tick, *winner, *reason));
                    match winner {
                        Side::CT => self.state.scores.0 += 1,
                        Side::T => self.state.scores.1 += 1,
                    }
                    open.scores_after = self.state.scores;
                }
            },
            EventBody::PhaseChange(next) => {
                let current = self.state.current_phase;
                if current != *next && !current.can_transition_to(*next) {
                    self.out.illegal_phase_transitions += 1;
                }
                self.state.current_phase = *next;
                self.state.phase_start_tick = tick;
            }
            EventBody::PlayerUpdate(p) => self.sides[usize::from(p.player_id)] = Some(p.side),
            EventBody::Kill(k) => {
                if let Some(side) = self.sides[usize::from(k.victim_id)] {
                    self.state.record_death(side);
                }
            }
            EventBody::BombPlant(_) => {
                self.state.bomb_planted = true;
                self.state.plant_tick = Some(tick);
            }
            EventBody::BombDefuse(_) => self.state.defused = true,
            _ => {}
        }
        if let Some(open) = &mut self.open {
            open.events.push(event);
        }
        Ok(())
    }

    /// Closes the open round at `tick` (the tick of whatever ended the span).
    fn close(&mut self, tick: u32, at_eof: bool) -> Result<(), EngineError> {
        let Some(open) = self.open.take() else {
            return Ok(());
        };
        let Some((end_tick, winner, reason)) = open.end else {
            if at_eof && !self.drop_incomplete {
                return Err(EngineError::MissingRoundEnd { round_num: open.round_num });
            }
            self.out.incomplete_rounds_dropped += 1;
            return Ok(());
        };
        let tick_rate = self.state.tick_rate;
        let official_end_tick = if at_eof {
            end_tick + ServerVars::ticks(f64::from(self.vars.round_end_secs), tick_rate)
        } else {
            tick.max(end_tick)
        };
        let round = build_round(
            &open.events,
            open.round_num,
            open.start_tick,
            (end_tick, official_end_tick),
            (winner, reason),
            open.scores_after,
            &self.sides,
            &self.vars,
            tick_rate,
        );
        self.out.rounds.push(RawRound { round, events: open.events });
        Ok(())
    }

    pub fn finish(mut self) -> Result<Segmentation, EngineError> {
        self.close(0, true)?;
        Ok(self.out)
    }
}

#[allow(clippy::too_many_arguments)]
fn build_round(
    events: &[GameEvent],
    round_num: u16,
    start_tick: u32,
    (end_tick, official_end_tick): (u32, u32),
    (winner, reason): (Side, RoundEndReason),
    (ct_score, t_score): (u16, u16),
    sides: &[Option<Side>; 256],
    vars: &ServerVars,
    tick_rate: u16,
) -> GameRound {
    let mut round = GameRound {
        round_num,
        start_tick,
        freeze_end_tick: 0,
        bomb_plant_tick: None,
        end_tick,
        official_end_tick,
        winner,
        reason,
        ct_score,
        t_score,
        ct_start_eq_val: 0,
        t_start_eq_val: 0,
        ct_players: Vec::new(),
        t_players: Vec::new(),
        invalid_reasons: Vec::new(),
        damages: Vec::new(),
        kills: Vec::new(),
        flashes: Vec::new(),
        bomb_events: Vec::new(),
        grenades: Vec::new(),
        weapon_fires: Vec::new(),
        frames: Vec::new(),
    };
    let mut freeze_end = None;
    for e in events {
        let tick = e.tick;
        match &e.body {
            EventBody::PhaseChange(Phase::Default) if freeze_end.is_none() => freeze_end = Some(tick),
            EventBody::Damage(d) => round.damages.push(Timed { tick, event: d.clone() }),
            EventBody::Kill(k) => round.kills.push(Timed { tick, event: k.clone() }),
            EventBody::Flash(f) => round.flashes.push(Timed { tick, event: f.clone() }),
            EventBody::GrenadeThrow(g) => round.grenades.push(Timed { tick, event: g.clone() }),
            EventBody::WeaponFire(w) => round.weapon_fires.push(Timed { tick, event: w.clone() }),
            EventBody::BombPlant(p) => {
                if round.bomb_plant_tick.is_none() {
                    round.bomb_plant_tick = Some(tick);
                }
                round.bomb_events.push(Timed {
                    tick,
                    event: BombEvent {
                        kind: BombEventKind::Plant,
                        player_id: Some(p.player_id),
                        site: Some(p.site),
                        pos: Some(p.pos),
                    },
                });
            }
            EventBody::BombDefuse(d) => round.bomb_events.push(Timed {
                tick,
                event: BombEvent { kind: BombEventKind::Defuse, player_id: Some(d.player_id), site: None, pos: None },
            }),
            EventBody::BombExplode => round.bomb_events.push(Timed {
                tick,
                event: BombEvent { kind: BombEventKind::Explode, player_id: None, site: None, pos: None },
            }),
            _ => {}
        }
    }
    round.freeze_end_tick = freeze_end
        .unwrap_or_else(|| (start_tick + ServerVars::ticks(f64::from(vars.freeze_time_secs), tick_rate)).min(end_tick));
    for (id, side) in sides.iter().enumerate() {
        match side {
            Some(Side::CT) => round.ct_players.push(id as u8),
            Some(Side::T) => round.t_players.push(id as u8),
            None => {}
        }
    }
    let (ct_eq, t_eq) = crate::frames::start_equipment(events, round.freeze_end_tick);
    round.ct_start_eq_val = ct_eq;
    round.t_start_eq_val = t_eq;
    round
}

/// Splits `events` into rounds. Only rounds after the last MatchStart (or
/// RestartMarker) survive.
pub fn segment_rounds<I>(
    events: I,
    vars: &ServerVars,
    tick_rate: u16,
    drop_incomplete: bool,
) -> Result<Segmentation, EngineError>
where
    I: IntoIterator<Item = GameEvent>,
{
    let mut seg = Segmenter::new(vars, tick_rate, drop_incomplete);
    for e in events {
        seg.push(e)?;
    }
    seg.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidityVerdict {
    Valid,
    Invalid(Vec<InvalidReason>),
}

impl ValidityVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ValidityVerdict::Valid)
    }
}

/// Replays the round's kills and bomb events up to its end tick.
pub fn replay_round_state(round: &GameRound, tick_rate: u16) -> RoundMachineState {
    let mut state = RoundMachineState::new(tick_rate);
    state.start_round(round.round_num, round.start_tick);
    let roster = |side: Side| match side {
        Side::CT => round.ct_players.len(),
        Side::T => round.t_players.len(),
    };
    state.alive_ct = if roster(Side::CT) == 0 { 5 } else { roster(Side::CT) as u8 };
    state.alive_t = if roster(Side::T) == 0 { 5 } else { roster(Side::T) as u8 };
    for k in round.kills.iter().filter(|k| k.tick <= round.end_tick) {
        if let Some(side) = round.side_of(k.event.victim_id) {
            state.record_death(side);
        }
    }
    let plant = round.bomb_events.iter().find(|b| b.event.kind == BombEventKind::Plant && b.tick <= round.end_tick);
    state.defused = round.bomb_events.iter().any(|b| b.event.kind == BombEventKind::Defuse && b.tick <= round.end_tick);
    match plant {
        Some(p) => {
            state.bomb_planted = true;
            state.plant_tick = Some(p.tick);
            state.current_phase = Phase::BombPlanted;
            state.phase_start_tick = p.tick;
        }
        None => {
            state.current_phase = Phase::Default;
            state.phase_start_tick = round.freeze_end_tick;
        }
    }
    state
}

/// Outcome implied by the round's events, evaluated at its end tick plus the
/// duration tolerance.
pub fn recompute_outcome(round: &GameRound, vars: &ServerVars, tick_rate: u16) -> Option<(Side, RoundEndReason)> {
    let state = replay_round_state(round, tick_rate);
    let tol = ServerVars::ticks(DURATION_TOLERANCE_SECS, tick_rate);
    check_win_condition(&state, round.end_tick.saturating_add(tol), vars)
}

/// Checks one segmented round against game logic. Total: never fails.
pub fn validate_round(round: &GameRound, vars: &ServerVars, tick_rate: u16) -> ValidityVerdict {
    let ticks = |secs: u16| ServerVars::ticks(f64::from(secs), tick_rate);
    let tol = ServerVars::ticks(DURATION_TOLERANCE_SECS, tick_rate);
    let mut reasons = Vec::new();

    let freeze_len = round.freeze_end_tick.saturating_sub(round.start_tick);
    let mut duration_ok = round.start_tick < round.freeze_end_tick
        && round.freeze_end_tick <= round.end_tick
        && round.end_tick <= round.official_end_tick
        && freeze_len.abs_diff(ticks(vars.freeze_time_secs)) <= tol;
    match round.bomb_plant_tick {
        Some(plant) => {
            duration_ok &= plant.saturating_sub(round.freeze_end_tick) <= ticks(vars.round_time_secs) + tol;
            duration_ok &= round.end_tick.saturating_sub(plant) <= ticks(vars.bomb_timer_secs) + tol;
            if round.reason == RoundEndReason::BombExploded {
                duration_ok &= round.end_tick.saturating_sub(plant) + tol >= ticks(vars.bomb_timer_secs);
            }
        }
        None => {
            let live = round.end_tick.saturating_sub(round.freeze_end_tick);
            duration_ok &= live <= ticks(vars.round_time_secs) + tol;
            if round.reason == RoundEndReason::TargetSaved {
                duration_ok &= live + tol >= ticks(vars.round_time_secs);
            }
        }
    }
    duration_ok &=
        round.official_end_tick - round.end_tick.min(round.official_end_tick) <= ticks(vars.round_end_secs) + tol;
    if !duration_ok {
        reasons.push(InvalidReason::DurationOutOfBounds);
    }

    let state = replay_round_state(round, tick_rate);
    match round.reason {
        RoundEndReason::EliminationOfT if state.alive_t > 0 => reasons.push(InvalidReason::InconsistentEliminations),
        RoundEndReason::EliminationOfCT if state.alive_ct > 0 => reasons.push(InvalidReason::InconsistentEliminations),
        r if r.requires_plant() && !state.bomb_planted => reasons.push(InvalidReason::BombReasonWithoutPlant),
        _ => {}
    }
    if reasons.is_empty() && recompute_outcome(round, vars, tick_rate).is_none() {
        reasons.push(InvalidReason::NoWinCondition);
    }

    let winner_score = match round.winner {
        Side::CT => round.ct_score,
        Side::T => round.t_score,
    };
    if winner_score == 0 {
        reasons.push(InvalidReason::ScoreRegression);
    }

    if reasons.is_empty() {
        ValidityVerdict::Valid
    } else {
        reasons.sort();
        ValidityVerdict::Invalid(reasons)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconciled {
    pub rounds: Vec<GameRound>,
    pub score_repairs: u32,
    pub side_repairs: u32,
    pub rounds_after_clinch: u32,
}

/// Renumbers rounds, recomputes cumulative side scores from the winner
/// sequence, applies the halftime side swap, and stops at the clinch.
pub fn reconcile_match(rounds: Vec<GameRound>, vars: &ServerVars) -> Result<Reconciled, EngineError> {
    let first = rounds.first().ok_or(EngineError::EmptyMatch)?;
    let start_ct = first.ct_players.clone();
    let start_t = first.t_players.clone();
    let clinch = vars.clinch_score();
    let total = rounds.len();

    let mut out =
        Reconciled { rounds: Vec::with_capacity(total), score_repairs: 0, side_repairs: 0, rounds_after_clinch: 0 };
    let (mut ct, mut t) = (0u16, 0u16);
    for (i, mut round) in rounds.into_iter().enumerate() {
        let num = (i + 1) as u16;
        round.round_num = num;
        match round.winner {
            Side::CT => ct += 1,
            Side::T => t += 1,
        }
        if (round.ct_score, round.t_score) != (ct, t) {
            out.score_repairs += 1;
            round.ct_score = ct;
            round.t_score = t;
        }
        let (exp_ct, exp_t) = if num > vars.side_switch_after { (&start_t, &start_ct) } else { (&start_ct, &start_t) };
        if round.ct_players != *exp_ct || round.t_players != *exp_t {
            if !(round.ct_players.is_empty() && round.t_players.is_empty()) {
                out.side_repairs += 1;
            }
            round.ct_players = exp_ct.clone();
            round.t_players = exp_t.clone();
        }
        out.rounds.push(round);
        if ct >= clinch || t >= clinch {
            out.rounds_after_clinch = (total - i - 1) as u32;
            break;
        }
    }
    Ok(out)
}
