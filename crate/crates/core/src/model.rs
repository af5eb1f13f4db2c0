//! Domain types shared by the codec, round engine, frame sampler, analytics,
//! and the win-probability bench.
//!
//! All types are plain value data. JSON field names are lowerCamelCase.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("team players have mixed sides")]
    InvalidTeam,
    #[error("invalid server vars: {0}")]
    InvalidServerVars(&'static str),
    #[error("invalid parser parameters: {0}")]
    InvalidParserParams(&'static str),
    #[error("invalid match metadata: {0}")]
    InvalidMeta(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    CT,
    T,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::CT, Side::T];

    pub fn opponent(self) -> Side {
        match self {
            Side::CT => Side::T,
            Side::T => Side::CT,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Side::CT => 0,
            Side::T => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Side> {
        match code {
            0 => Some(Side::CT),
            1 => Some(Side::T),
            _ => None,
        }
    }
}

/// In-round game phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Freeze,
    Default,
    BombPlanted,
    RoundEnd,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Freeze, Phase::Default, Phase::BombPlanted, Phase::RoundEnd];

    /// The five legal edges of the phase graph.
    pub fn can_transition_to(self, next: Phase) -> bool {
        matches!(
            (self, next),
            (Phase::Freeze, Phase::Default)
                | (Phase::Default, Phase::BombPlanted)
                | (Phase::Default, Phase::RoundEnd)
                | (Phase::BombPlanted, Phase::RoundEnd)
                | (Phase::RoundEnd, Phase::Freeze)
        )
    }

    pub fn code(self) -> u8 {
        match self {
            Phase::Freeze => 0,
            Phase::Default => 1,
            Phase::BombPlanted => 2,
            Phase::RoundEnd => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Phase> {
        Phase::ALL.get(usize::from(code)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoundEndReason {
    /// All T players dead; CT wins.
    EliminationOfT,
    /// All CT players dead; T wins.
    EliminationOfCT,
    BombDefused,
    BombExploded,
    /// Round clock ran out without a plant.
    TargetSaved,
}

impl RoundEndReason {
    pub const ALL: [RoundEndReason; 5] = [
        RoundEndReason::EliminationOfT,
        RoundEndReason::EliminationOfCT,
        RoundEndReason::BombDefused,
        RoundEndReason::BombExploded,
        RoundEndReason::TargetSaved,
    ];

    pub fn winner(self) -> Side {
        match self {
            RoundEndReason::EliminationOfT | RoundEndReason::BombDefused | RoundEndReason::TargetSaved => Side::CT,
            RoundEndReason::EliminationOfCT | RoundEndReason::BombExploded => Side::T,
        }
    }

    pub fn requires_plant(self) -> bool {
        matches!(self, RoundEndReason::BombDefused | RoundEndReason::BombExploded)
    }

    pub fn code(self) -> u8 {
        match self {
            RoundEndReason::EliminationOfT => 0,
            RoundEndReason::EliminationOfCT => 1,
            RoundEndReason::BombDefused => 2,
            RoundEndReason::BombExploded => 3,
            RoundEndReason::TargetSaved => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<RoundEndReason> {
        RoundEndReason::ALL.get(usize::from(code)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BombSite {
    A,
    B,
}

impl BombSite {
    pub fn code(self) -> u8 {
        match self {
            BombSite::A => 0,
            BombSite::B => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<BombSite> {
        match code {
            0 => Some(BombSite::A),
            1 => Some(BombSite::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GrenadeType {
    HE,
    Smoke,
    Molotov,
    Flashbang,
    Decoy,
}

impl GrenadeType {
    pub const ALL: [GrenadeType; 5] =
        [GrenadeType::HE, GrenadeType::Smoke, GrenadeType::Molotov, GrenadeType::Flashbang, GrenadeType::Decoy];

    pub fn code(self) -> u8 {
        match self {
            GrenadeType::HE => 0,
            GrenadeType::Smoke => 1,
            GrenadeType::Molotov => 2,
            GrenadeType::Flashbang => 3,
            GrenadeType::Decoy => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<GrenadeType> {
        GrenadeType::ALL.get(usize::from(code)).copied()
    }
}

/// Opaque weapon code. No weapon tables are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weapon(pub u8);

/// A point or velocity in abstract map units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f32, y: f32, z: f32) -> Self {
        Vec3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerFlags {
    pub alive: bool,
    pub blinded: bool,
    pub in_bomb_zone: bool,
    pub has_helmet: bool,
    pub has_defuse_kit: bool,
    pub has_bomb: bool,
}

impl PlayerFlags {
    /// Bit order: alive=0, blinded=1, inBombZone=2, hasHelmet=3, hasDefuseKit=4, hasBomb=5.
    pub fn bits(&self) -> u8 {
        u8::from(self.alive)
            | u8::from(self.blinded) << 1
            | u8::from(self.in_bomb_zone) << 2
            | u8::from(self.has_helmet) << 3
            | u8::from(self.has_defuse_kit) << 4
            | u8::from(self.has_bomb) << 5
    }

    /// `None` when either reserved high bit is set.
    pub fn from_bits(bits: u8) -> Option<PlayerFlags> {
        if bits & 0b1100_0000 != 0 {
            return None;
        }
        Some(PlayerFlags {
            alive: bits & 1 != 0,
            blinded: bits & (1 << 1) != 0,
            in_bomb_zone: bits & (1 << 2) != 0,
            has_helmet: bits & (1 << 3) != 0,
            has_defuse_kit: bits & (1 << 4) != 0,
            has_bomb: bits & (1 << 5) != 0,
        })
    }
}

/// Full per-player state at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerState {
    pub player_id: u8,
    pub side: Side,
    pub pos: Vec3,
    pub vel: Vec3,
    pub view_yaw: f32,
    pub view_pitch: f32,
    pub hp: u8,
    pub armor: u8,
    pub money: u16,
    pub eq_val: u16,
    pub active_weapon: Weapon,
    pub ping: u16,
    pub flags: PlayerFlags,
    pub grenades_remaining: u8,
}

impl PlayerState {
    pub fn is_alive(&self) -> bool {
        self.hp > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TeamAggregates {
    pub alive_count: u8,
    pub total_hp: u32,
    pub total_armor: u32,
    pub total_eq_val: u32,
    pub helmets: u8,
    pub defuse_kits: u8,
    pub grenades: u32,
    pub players_in_bomb_zone: u8,
}

/// Aggregates over the alive players of one team. Dead players contribute
/// nothing, so the result is independent of player order.
pub fn recompute_team_aggregates(players: &[PlayerState]) -> Result<TeamAggregates, ModelError> {
    if let Some(first) = players.first() {
        if players.iter().any(|p| p.side != first.side) {
            return Err(ModelError::InvalidTeam);
        }
    }
    let mut agg = TeamAggregates::default();
    for p in players.iter().filter(|p| p.is_alive()) {
        agg.alive_count += 1;
        agg.total_hp += u32::from(p.hp);
        agg.total_armor += u32::from(p.armor);
        agg.total_eq_val += u32::from(p.eq_val);
        agg.helmets += u8::from(p.flags.has_helmet);
        agg.defuse_kits += u8::from(p.flags.has_defuse_kit);
        agg.grenades += u32::from(p.grenades_remaining);
        agg.players_in_bomb_zone += u8::from(p.flags.in_bomb_zone);
    }
    Ok(agg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TeamState {
    pub side: Side,
    pub players: Vec<PlayerState>,
    #[serde(flatten)]
    pub aggregates: TeamAggregates,
}

impl TeamState {
    /// Builds a team state, sorting players by id.
    pub fn new(side: Side, mut players: Vec<PlayerState>) -> Result<Self, ModelError> {
        if players.iter().any(|p| p.side != side) {
            return Err(ModelError::InvalidTeam);
        }
        players.sort_by_key(|p| p.player_id);
        let aggregates = recompute_team_aggregates(&players)?;
        Ok(TeamState { side, players, aggregates })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchMeta {
    pub map_name: String,
    pub tick_rate: u16,
    pub demo_version: u16,
    pub source_file: String,
}

impl MatchMeta {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.tick_rate == 0 {
            return Err(ModelError::InvalidMeta("tickRate must be at least 1"));
        }
        if self.map_name.is_empty() {
            return Err(ModelError::InvalidMeta("mapName must be non-empty"));
        }
        Ok(())
    }
}

/// Game-rule timings. Fire and smoke lifetimes are extensions not carried
/// in the demo header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServerVars {
    pub freeze_time_secs: u16,
    pub round_time_secs: u16,
    pub bomb_timer_secs: u16,
    pub round_end_secs: u16,
    pub max_regulation_rounds: u16,
    pub side_switch_after: u16,
    pub fire_lifetime_secs: f64,
    pub smoke_lifetime_secs: f64,
}

impl Default for ServerVars {
    fn default() -> Self {
        ServerVars {
            freeze_time_secs: 20,
            round_time_secs: 115,
            bomb_timer_secs: 40,
            round_end_secs: 5,
            max_regulation_rounds: 30,
            side_switch_after: 15,
            fire_lifetime_secs: 7.0,
            smoke_lifetime_secs: 18.0,
        }
    }
}

impl ServerVars {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.freeze_time_secs == 0
            || self.round_time_secs == 0
            || self.bomb_timer_secs == 0
            || self.round_end_secs == 0
            || self.max_regulation_rounds == 0
            || self.side_switch_after == 0
        {
            return Err(ModelError::InvalidServerVars("all timings and counts must be positive"));
        }
        if self.side_switch_after >= self.max_regulation_rounds {
            return Err(ModelError::InvalidServerVars("sideSwitchAfter must be below maxRegulationRounds"));
        }
        if !(self.fire_lifetime_secs > 0.0 && self.smoke_lifetime_secs > 0.0) {
            return Err(ModelError::InvalidServerVars("effect lifetimes must be positive"));
        }
        Ok(())
    }

    /// Score that wins the match in regulation.
    pub fn clinch_score(&self) -> u16 {
        self.max_regulation_rounds / 2 + 1
    }

    pub fn ticks(secs: f64, tick_rate: u16) -> u32 {
        math::secs_to_ticks(secs, tick_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParserParams {
    pub parse_rate: u16,
    pub drop_incomplete_rounds: bool,
}

impl Default for ParserParams {
    fn default() -> Self {
        ParserParams { parse_rate: 2, drop_incomplete_rounds: true }
    }
}

impl ParserParams {
    pub fn validate(&self, tick_rate: u16) -> Result<(), ModelError> {
        if self.parse_rate == 0 || self.parse_rate > tick_rate {
            return Err(ModelError::InvalidParserParams("parseRate must be in 1..=tickRate"));
        }
        Ok(())
    }

    /// Tick stride between frames: `round(tickRate / parseRate)`, at least 1.
    pub fn frame_stride(&self, tick_rate: u16) -> u32 {
        let stride = math::round(f64::from(tick_rate) / f64::from(self.parse_rate.max(1)));
        (stride as u32).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerInfo {
    pub id: u8,
    pub name: String,
    pub start_side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Damage {
    pub attacker_id: u8,
    pub victim_id: u8,
    pub attacker_pos: Vec3,
    pub victim_pos: Vec3,
    pub hp_damage: u8,
    pub weapon: Weapon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Kill {
    pub attacker_id: u8,
    pub victim_id: u8,
    pub attacker_pos: Vec3,
    pub victim_pos: Vec3,
    pub weapon: Weapon,
    pub headshot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Flash {
    pub attacker_id: u8,
    pub victim_id: u8,
    pub flash_duration_secs: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BombPlant {
    pub player_id: u8,
    pub site: BombSite,
    pub pos: Vec3,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BombDefuse {
    pub player_id: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GrenadeThrow {
    pub player_id: u8,
    pub grenade_type: GrenadeType,
    pub throw_pos: Vec3,
    pub land_pos: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeaponFire {
    pub player_id: u8,
    pub pos: Vec3,
    pub weapon: Weapon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventBody {
    Damage(Damage),
    Kill(Kill),
    Flash(Flash),
    BombPlant(BombPlant),
    BombDefuse(BombDefuse),
    BombExplode,
    GrenadeThrow(GrenadeThrow),
    WeaponFire(WeaponFire),
    PlayerUpdate(PlayerState),
    PhaseChange(Phase),
    RoundStart { round_num: u16 },
    RoundEnd { winner: Side, reason: RoundEndReason },
    MatchStart,
    RestartMarker,
}

impl EventBody {
    /// True for the six player action categories.
    pub fn is_action(&self) -> bool {
        matches!(
            self,
            EventBody::Damage(_)
                | EventBody::Kill(_)
                | EventBody::Flash(_)
                | EventBody::BombPlant(_)
                | EventBody::BombDefuse(_)
                | EventBody::BombExplode
                | EventBody::GrenadeThrow(_)
                | EventBody::WeaponFire(_)
        )
    }
}

/// A tick-stamped event from the demo stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEvent {
    pub tick: u32,
    pub body: EventBody,
}

impl GameEvent {
    pub fn new(tick: u32, body: EventBody) -> Self {
        GameEvent { tick, body }
    }
}

/// An action together with the tick it happened on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timed<T> {
    pub tick: u32,
    #[serde(flatten)]
    pub event: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BombEventKind {
    Plant,
    Defuse,
    Explode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BombEvent {
    pub kind: BombEventKind,
    pub player_id: Option<u8>,
    pub site: Option<BombSite>,
    pub pos: Option<Vec3>,
}

/// A grenade effect (fire or smoke) that lasts until `expiry_tick` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Effect {
    pub pos: Vec3,
    pub expiry_tick: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BombState {
    pub carrier_id: Option<u8>,
    pub planted_site: Option<BombSite>,
    pub plant_tick: Option<u32>,
    /// Carrier position or plant position, when known.
    pub pos: Option<Vec3>,
}

/// Snapshot of the whole game at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Frame {
    pub tick: u32,
    pub phase: Phase,
    /// Seconds remaining in the current phase.
    pub clock_secs: f64,
    /// Seconds elapsed since the last phase change.
    pub seconds_in_phase: f64,
    pub bomb: BombState,
    pub fires: Vec<Effect>,
    pub smokes: Vec<Effect>,
    pub ct: TeamState,
    pub t: TeamState,
}

impl Frame {
    pub fn team(&self, side: Side) -> &TeamState {
        match side {
            Side::CT => &self.ct,
            Side::T => &self.t,
        }
    }

    pub fn players(&self) -> impl Iterator<Item = &PlayerState> {
        self.ct.players.iter().chain(self.t.players.iter())
    }
}

/// Why a segmented round failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InvalidReason {
    DurationOutOfBounds,
    NoWinCondition,
    InconsistentEliminations,
    BombReasonWithoutPlant,
    ScoreRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameRound {
    pub round_num: u16,
    pub start_tick: u32,
    pub freeze_end_tick: u32,
    pub bomb_plant_tick: Option<u32>,
    pub end_tick: u32,
    pub official_end_tick: u32,
    pub winner: Side,
    pub reason: RoundEndReason,
    pub ct_score: u16,
    pub t_score: u16,
    pub ct_start_eq_val: u32,
    pub t_start_eq_val: u32,
    pub ct_players: Vec<u8>,
    pub t_players: Vec<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalid_reasons: Vec<InvalidReason>,
    pub damages: Vec<Timed<Damage>>,
    pub kills: Vec<Timed<Kill>>,
    pub flashes: Vec<Timed<Flash>>,
    pub bomb_events: Vec<Timed<BombEvent>>,
    pub grenades: Vec<Timed<GrenadeThrow>>,
    pub weapon_fires: Vec<Timed<WeaponFire>>,
    pub frames: Vec<Frame>,
}

impl GameRound {
    /// Round 1 with no events, won by CT through elimination.
    pub fn empty() -> Self {
        GameRound {
            round_num: 1,
            start_tick: 0,
            freeze_end_tick: 0,
            bomb_plant_tick: None,
            end_tick: 0,
            official_end_tick: 0,
            winner: Side::CT,
            reason: RoundEndReason::EliminationOfT,
            ct_score: 0,
            t_score: 0,
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
        }
    }

    /// Side a player is on this round, from the round roster.
    pub fn side_of(&self, player_id: u8) -> Option<Side> {
        if self.ct_players.contains(&player_id) {
            Some(Side::CT)
        } else if self.t_players.contains(&player_id) {
            Some(Side::T)
        } else {
            None
        }
    }

    pub fn action_counts(&self) -> ActionCounts {
        ActionCounts {
            damages: self.damages.len() as u64,
            kills: self.kills.len() as u64,
            flashes: self.flashes.len() as u64,
            bomb_events: self.bomb_events.len() as u64,
            grenades: self.grenades.len() as u64,
            weapon_fires: self.weapon_fires.len() as u64,
        }
    }

    pub fn has_plant(&self) -> bool {
        self.bomb_events.iter().any(|b| b.event.kind == BombEventKind::Plant)
    }
}

/// Counts of the six action categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionCounts {
    pub damages: u64,
    pub kills: u64,
    pub flashes: u64,
    pub bomb_events: u64,
    pub grenades: u64,
    pub weapon_fires: u64,
}

impl ActionCounts {
    pub fn total(&self) -> u64 {
        self.damages + self.kills + self.flashes + self.bomb_events + self.grenades + self.weapon_fires
    }

    pub fn add(&mut self, other: &ActionCounts) {
        self.damages += other.damages;
        self.kills += other.kills;
        self.flashes += other.flashes;
        self.bomb_events += other.bomb_events;
        self.grenades += other.grenades;
        self.weapon_fires += other.weapon_fires;
    }

    /// Category counts in the fixed order damages, kills, flashes,
    /// bombEvents, grenades, weaponFires.
    pub fn as_array(&self) -> [u64; 6] {
        [self.damages, self.kills, self.flashes, self.bomb_events, self.grenades, self.weapon_fires]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectorySample {
    pub tick: u32,
    pub pos: Vec3,
}

/// Track of one player through one round while alive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trajectory {
    pub player_id: u8,
    pub round_num: u16,
    pub samples: Vec<TrajectorySample>,
}

/// Counters describing what the cleaning stages removed or repaired.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CleaningReport {
    pub rounds_segmented: u32,
    pub invalid_rounds_dropped: u32,
    pub invalid_rounds_kept: u32,
    pub incomplete_rounds_dropped: u32,
    pub orphan_round_ends: u32,
    pub duplicate_round_ends: u32,
    pub illegal_phase_transitions: u32,
    pub winner_conflicts: u32,
    pub score_repairs: u32,
    pub side_repairs: u32,
    pub rounds_after_clinch: u32,
    pub unknown_records_skipped: u64,
}

/// A fully parsed and cleaned match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoDocument {
    #[serde(flatten)]
    pub meta: MatchMeta,
    pub parser_parameters: ParserParams,
    pub server_vars: ServerVars,
    pub players: Vec<PlayerInfo>,
    pub cleaning: CleaningReport,
    pub game_rounds: Vec<GameRound>,
}

impl DemoDocument {
    /// A match with no rounds and default settings.
    pub fn empty() -> Self {
        DemoDocument {
            meta: MatchMeta {
                map_name: "unknown".to_string(),
                tick_rate: 128,
                demo_version: 1,
                source_file: String::new(),
            },
            parser_parameters: ParserParams::default(),
            server_vars: ServerVars::default(),
            players: Vec::new(),
            cleaning: CleaningReport::default(),
            game_rounds: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn player(id: u8, side: Side, hp: u8, armor: u8) -> PlayerState {
        PlayerState {
            player_id: id,
            side,
            pos: Vec3::ZERO,
            vel: Vec3::ZERO,
            view_yaw: 0.0,
            view_pitch: 0.0,
            hp,
            armor,
            money: 800,
            eq_val: if hp > 0 { 1000 } else { 0 },
            active_weapon: Weapon(1),
            ping: 10,
            flags: PlayerFlags { alive: hp > 0, has_helmet: true, ..Default::default() },
            grenades_remaining: 2,
        }
    }

    #[test]
    fn full_health_team() {
        let players: Vec<_> = (1..=5).map(|i| player(i, Side::CT, 100, 100)).collect();
        let agg = recompute_team_aggregates(&players).unwrap();
        assert_eq!(agg.alive_count, 5);
        assert_eq!(agg.total_hp, 500);
    }

    #[test]
    fn wiped_team_is_all_zero() {
        let players: Vec<_> = (1..=5).map(|i| player(i, Side::T, 0, 100)).collect();
        let agg = recompute_team_aggregates(&players).unwrap();
        assert_eq!(agg, TeamAggregates::default());
    }

    #[test]
    fn partial_team_sums_alive_subset() {
        let hp = [37, 0, 100, 12, 0];
        let armor = [50, 100, 0, 25, 0];
        let players: Vec<_> = (0..5).map(|i| player(i as u8, Side::CT, hp[i], armor[i])).collect();
        let agg = recompute_team_aggregates(&players).unwrap();
        assert_eq!(agg.alive_count, 3);
        assert_eq!(agg.total_hp, 149);
        assert_eq!(agg.total_armor, 75);
    }

    #[test]
    fn mixed_sides_rejected() {
        let players = vec![player(1, Side::CT, 100, 0), player(2, Side::T, 100, 0)];
        assert_eq!(recompute_team_aggregates(&players), Err(ModelError::InvalidTeam));
        assert!(TeamState::new(Side::CT, players).is_err());
    }

    #[test]
    fn phase_graph_has_five_edges() {
        let edges = Phase::ALL
            .iter()
            .flat_map(|a| Phase::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition_to(*b))
            .count();
        assert_eq!(edges, 5);
    }

    #[test]
    fn every_reason_has_one_winner() {
        let ct: Vec<_> = RoundEndReason::ALL.iter().filter(|r| r.winner() == Side::CT).collect();
        assert_eq!(ct.len(), 3);
        assert_eq!(RoundEndReason::BombExploded.winner(), Side::T);
        assert_eq!(RoundEndReason::EliminationOfCT.winner(), Side::T);
    }

    #[test]
    fn flag_bits_round_trip() {
        for bits in 0u8..64 {
            assert_eq!(PlayerFlags::from_bits(bits).unwrap().bits(), bits);
        }
        assert!(PlayerFlags::from_bits(0x40).is_none());
    }

    #[test]
    fn default_vars_are_valid() {
        let vars = ServerVars::default();
        vars.validate().unwrap();
        assert_eq!(vars.clinch_score(), 16);
        let bad = ServerVars { side_switch_after: 30, ..ServerVars::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn frame_stride_rounds() {
        let p = ParserParams::default();
        assert_eq!(p.frame_stride(128), 64);
        assert_eq!(ParserParams { parse_rate: 3, ..p.clone() }.frame_stride(128), 43);
        assert_eq!(ParserParams { parse_rate: 128, ..p }.frame_stride(128), 1);
    }
}
