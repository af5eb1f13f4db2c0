//! Reader and writer for the ESDM v1 binary demo format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header  := "ESDM" version:u16 tickRate:u16 mapLen:u8 map[mapLen]
//!            freeze:u16 round:u16 bomb:u16 roundEnd:u16 sideSwitchAfter:u16
//!            playerCount:u8 { id:u8 nameLen:u8 name[nameLen] startSide:u8 }*
//! record  := tick:u32 type:u8 payloadLen:u16 payload[payloadLen]
//! ```
//!
//! The stream ends with a record of type `0xFF` and an empty payload. The
//! tick field of that sentinel holds the CRC-32 of every byte that precedes
//! it, so corruption anywhere in the file surfaces as an error.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{
    BombDefuse, BombPlant, BombSite, Damage, EventBody, Flash, GameEvent, GrenadeThrow, GrenadeType, Kill, Phase,
    PlayerFlags, PlayerInfo, PlayerState, RoundEndReason, ServerVars, Side, Vec3, Weapon, WeaponFire,
};

pub const MAGIC: [u8; 4] = *b"ESDM";
pub const VERSION: u16 = 1;
pub const RECORD_HEADER_LEN: usize = 7;
pub const END_OF_STREAM: u8 = 0xFF;

/// Record type codes.
pub mod code {
    pub const DAMAGE: u8 = 0x01;
    pub const KILL: u8 = 0x02;
    pub const FLASH: u8 = 0x03;
    pub const BOMB_PLANT: u8 = 0x04;
    pub const BOMB_DEFUSE: u8 = 0x05;
    pub const BOMB_EXPLODE: u8 = 0x06;
    pub const GRENADE_THROW: u8 = 0x07;
    pub const WEAPON_FIRE: u8 = 0x08;
    pub const PLAYER_UPDATE: u8 = 0x10;
    pub const PHASE_CHANGE: u8 = 0x11;
    pub const ROUND_START: u8 = 0x12;
    pub const ROUND_END: u8 = 0x13;
    pub const MATCH_START: u8 = 0x14;
    pub const RESTART_MARKER: u8 = 0x15;
}

/// Fixed payload size for a known type code.
pub fn payload_len(type_code: u8) -> Option<u16> {
    Some(match type_code {
        code::DAMAGE => 28,
        code::KILL => 28,
        code::FLASH => 6,
        code::BOMB_PLANT => 14,
        code::BOMB_DEFUSE => 1,
        code::BOMB_EXPLODE => 0,
        code::GRENADE_THROW => 26,
        code::WEAPON_FIRE => 14,
        code::PLAYER_UPDATE => 45,
        code::PHASE_CHANGE => 1,
        code::ROUND_START => 2,
        code::ROUND_END => 2,
        code::MATCH_START => 0,
        code::RESTART_MARKER => 0,
        _ => return None,
    })
}

pub fn type_code(body: &EventBody) -> u8 {
    match body {
        EventBody::Damage(_) => code::DAMAGE,
        EventBody::Kill(_) => code::KILL,
        EventBody::Flash(_) => code::FLASH,
        EventBody::BombPlant(_) => code::BOMB_PLANT,
        EventBody::BombDefuse(_) => code::BOMB_DEFUSE,
        EventBody::BombExplode => code::BOMB_EXPLODE,
        EventBody::GrenadeThrow(_) => code::GRENADE_THROW,
        EventBody::WeaponFire(_) => code::WEAPON_FIRE,
        EventBody::PlayerUpdate(_) => code::PLAYER_UPDATE,
        EventBody::PhaseChange(_) => code::PHASE_CHANGE,
        EventBody::RoundStart { .. } => code::ROUND_START,
        EventBody::RoundEnd { .. } => code::ROUND_END,
        EventBody::MatchStart => code::MATCH_START,
        EventBody::RestartMarker => code::RESTART_MARKER,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("bad magic {0:?}, expected \"ESDM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("header truncated")]
    TruncatedHeader,
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
    #[error("record truncated at byte offset {offset}")]
    TruncatedRecord { offset: u64 },
    #[error("tick regression: {tick} after {previous}")]
    TickRegression { previous: u32, tick: u32 },
    #[error("record type {type_code:#04x} has payload length {actual}, expected {expected}")]
    PayloadLengthMismatch { type_code: u8, expected: u16, actual: u16 },
    #[error("invalid payload for record type {type_code:#04x}: {what}")]
    InvalidPayload { type_code: u8, what: &'static str },
    #[error("end-of-stream checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("event cannot be encoded: {0}")]
    UnencodableEvent(&'static str),
    #[error("io error: {0}")]
    Io(String),
}

/// Errors a [`ByteSource`] can report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceError {
    UnexpectedEof,
    Io(String),
}

/// Minimal pull interface so the decoder works over slices without std and
/// over `std::io::Read` in the companion crate.
pub trait ByteSource {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), SourceError>;
}

/// A [`ByteSource`] over an in-memory buffer.
#[derive(Debug, Clone)]
pub struct SliceSource<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        SliceSource { data, pos: 0 }
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

impl ByteSource for SliceSource<'_> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), SourceError> {
        let end = self.pos.checked_add(buf.len()).ok_or(SourceError::UnexpectedEof)?;
        let src = self.data.get(self.pos..end).ok_or(SourceError::UnexpectedEof)?;
        buf.copy_from_slice(src);
        self.pos = end;
        Ok(())
    }
}

/// Decoded file header. The magic is implied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EsdmHeader {
    pub version: u16,
    pub tick_rate: u16,
    pub map_name: String,
    pub freeze_time_secs: u16,
    pub round_time_secs: u16,
    pub bomb_timer_secs: u16,
    pub round_end_secs: u16,
    pub side_switch_after: u16,
    pub players: Vec<PlayerInfo>,
}

impl EsdmHeader {
    /// Header with default timings taken from `vars`.
    pub fn new(map_name: &str, tick_rate: u16, vars: &ServerVars, players: Vec<PlayerInfo>) -> Self {
        EsdmHeader {
            version: VERSION,
            tick_rate,
            map_name: map_name.to_string(),
            freeze_time_secs: vars.freeze_time_secs,
            round_time_secs: vars.round_time_secs,
            bomb_timer_secs: vars.bomb_timer_secs,
            round_end_secs: vars.round_end_secs,
            side_switch_after: vars.side_switch_after,
            players,
        }
    }

    /// Server vars described by the header. Regulation length is twice the
    /// half length; effect lifetimes take their defaults.
    pub fn server_vars(&self) -> ServerVars {
        ServerVars {
            freeze_time_secs: self.freeze_time_secs,
            round_time_secs: self.round_time_secs,
            bomb_timer_secs: self.bomb_timer_secs,
            round_end_secs: self.round_end_secs,
            max_regulation_rounds: self.side_switch_after.saturating_mul(2),
            side_switch_after: self.side_switch_after,
            ..ServerVars::default()
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.version != VERSION {
            return Err("version must be 1");
        }
        if self.tick_rate == 0 {
            return Err("tick rate must be positive");
        }
        if self.map_name.is_empty() || self.map_name.len() > 255 {
            return Err("map name must be 1..=255 bytes");
        }
        if [
            self.freeze_time_secs,
            self.round_time_secs,
            self.bomb_timer_secs,
            self.round_end_secs,
            self.side_switch_after,
        ]
        .contains(&0)
        {
            return Err("server vars must be positive");
        }
        if self.players.len() != 10 {
            return Err("player table must have 10 entries");
        }
        let ct = self.players.iter().filter(|p| p.start_side == Side::CT).count();
        if ct != 5 {
            return Err("player table must have 5 players per side");
        }
        for (i, p) in self.players.iter().enumerate() {
            if p.name.len() > 255 {
                return Err("player name longer than 255 bytes");
            }
            if self.players[..i].iter().any(|q| q.id == p.id) {
                return Err("duplicate player id");
            }
        }
        Ok(())
    }

    /// Serialized length in bytes.
    pub fn encoded_len(&self) -> usize {
        4 + 2 + 2 + 1 + self.map_name.len() + 10 + 1 + self.players.iter().map(|p| 3 + p.name.len()).sum::<usize>()
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.tick_rate.to_le_bytes());
        out.push(self.map_name.len() as u8);
        out.extend_from_slice(self.map_name.as_bytes());
        for v in [
            self.freeze_time_secs,
            self.round_time_secs,
            self.bomb_timer_secs,
            self.round_end_secs,
            self.side_switch_after,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.players.len() as u8);
        for p in &self.players {
            out.push(p.id);
            out.push(p.name.len() as u8);
            out.extend_from_slice(p.name.as_bytes());
            out.push(p.start_side.code());
        }
    }
}

/// Streaming encoder. Records are appended to an in-memory buffer.
#[derive(Debug)]
pub struct DemoEncoder {
    buf: Vec<u8>,
    last_tick: Option<u32>,
}

impl DemoEncoder {
    pub fn new(header: &EsdmHeader) -> Result<Self, CodecError> {
        header.validate().map_err(CodecError::InvalidHeader)?;
        let mut buf = Vec::with_capacity(header.encoded_len() + 4096);
        header.encode_into(&mut buf);
        Ok(DemoEncoder { buf, last_tick: None })
    }

    fn check_tick(&mut self, tick: u32) -> Result<(), CodecError> {
        if let Some(previous) = self.last_tick {
            if tick < previous {
                return Err(CodecError::TickRegression { previous, tick });
            }
        }
        self.last_tick = Some(tick);
        Ok(())
    }

    pub fn push(&mut self, event: &GameEvent) -> Result<(), CodecError> {
        validate_body(&event.body).map_err(CodecError::UnencodableEvent)?;
        self.check_tick(event.tick)?;
        let type_code = type_code(&event.body);
        let len = payload_len(type_code).unwrap_or(0);
        self.buf.extend_from_slice(&event.tick.to_le_bytes());
        self.buf.push(type_code);
        self.buf.extend_from_slice(&len.to_le_bytes());
        let before = self.buf.len();
        encode_payload(&event.body, &mut self.buf);
        debug_assert_eq!(self.buf.len() - before, usize::from(len));
        Ok(())
    }

    /// Appends an arbitrary record, e.g. a plugin message with a type code
    /// this format does not define.
    pub fn push_raw(&mut self, tick: u32, type_code: u8, payload: &[u8]) -> Result<(), CodecError> {
        if type_code == END_OF_STREAM {
            return Err(CodecError::UnencodableEvent("type 0xFF is reserved for end of stream"));
        }
        let len = u16::try_from(payload.len())
            .map_err(|_| CodecError::UnencodableEvent("payload longer than 65535 bytes"))?;
        if let Some(expected) = payload_len(type_code) {
            if expected != len {
                return Err(CodecError::PayloadLengthMismatch { type_code, expected, actual: len });
            }
        }
        self.check_tick(tick)?;
        self.buf.extend_from_slice(&tick.to_le_bytes());
        self.buf.push(type_code);
        self.buf.extend_from_slice(&len.to_le_bytes());
        self.buf.extend_from_slice(payload);
        Ok(())
    }

    /// Appends the checksummed sentinel and returns the file bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf.push(END_OF_STREAM);
        self.buf.extend_from_slice(&0u16.to_le_bytes());
        self.buf
    }
}

/// Encodes a whole demo in one call.
pub fn write_demo<'a, I>(header: &EsdmHeader, events: I) -> Result<Vec<u8>, CodecError>
where
    I: IntoIterator<Item = &'a GameEvent>,
{
    let mut enc = DemoEncoder::new(header)?;
    for e in events {
        enc.push(e)?;
    }
    Ok(enc.finish())
}

/// Decodes a whole in-memory demo, returning the header, the events, and the
/// number of skipped unknown records.
pub fn read_demo(bytes: &[u8]) -> Result<(EsdmHeader, Vec<GameEvent>, u64), CodecError> {
    let mut dec = DemoDecoder::new(SliceSource::new(bytes))?;
    let mut events = Vec::new();
    while let Some(e) = dec.next_event()? {
        events.push(e);
    }
    let skipped = dec.skipped_unknown();
    Ok((dec.into_header(), events, skipped))
}

/// Lazy decoder: the header is read on construction, records on demand.
pub struct DemoDecoder<S: ByteSource> {
    source: S,
    header: EsdmHeader,
    crc: crc32fast::Hasher,
    payload: Vec<u8>,
    offset: u64,
    last_tick: Option<u32>,
    skipped_unknown: u64,
    finished: bool,
}

impl<S: ByteSource> DemoDecoder<S> {
    pub fn new(source: S) -> Result<Self, CodecError> {
        let mut dec = DemoDecoder {
            source,
            header: EsdmHeader {
                version: 0,
                tick_rate: 0,
                map_name: String::new(),
                freeze_time_secs: 0,
                round_time_secs: 0,
                bomb_timer_secs: 0,
                round_end_secs: 0,
                side_switch_after: 0,
                players: Vec::new(),
            },
            crc: crc32fast::Hasher::new(),
            payload: Vec::new(),
            offset: 0,
            last_tick: None,
            skipped_unknown: 0,
            finished: false,
        };
        dec.header = dec.read_header()?;
        Ok(dec)
    }

    pub fn header(&self) -> &EsdmHeader {
        &self.header
    }

    pub fn into_header(self) -> EsdmHeader {
        self.header
    }

    /// Records with unknown type codes that were skipped so far.
    pub fn skipped_unknown(&self) -> u64 {
        self.skipped_unknown
    }

    /// Bytes consumed from the source so far.
    pub fn bytes_read(&self) -> u64 {
        self.offset
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<(), SourceError> {
        self.source.read_exact(buf)?;
        self.crc.update(buf);
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn header_bytes<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let mut b = [0u8; N];
        self.fill(&mut b).map_err(header_err)?;
        Ok(b)
    }

    fn header_string(&mut self) -> Result<String, CodecError> {
        let [len] = self.header_bytes::<1>()?;
        let mut raw = vec![0u8; usize::from(len)];
        self.fill(&mut raw).map_err(header_err)?;
        String::from_utf8(raw).map_err(|_| CodecError::InvalidHeader("string is not UTF-8"))
    }

    fn read_header(&mut self) -> Result<EsdmHeader, CodecError> {
        let magic = self.header_bytes::<4>()?;
        if magic != MAGIC {
            return Err(CodecError::BadMagic(magic));
        }
        let version = u16::from_le_bytes(self.header_bytes::<2>()?);
        if version != VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let tick_rate = u16::from_le_bytes(self.header_bytes::<2>()?);
        let map_name = self.header_string()?;
        let mut vars = [0u16; 5];
        for v in &mut vars {
            *v = u16::from_le_bytes(self.header_bytes::<2>()?);
        }
        let [count] = self.header_bytes::<1>()?;
        let mut players = Vec::with_capacity(usize::from(count));
        for _ in 0..count {
            let [id] = self.header_bytes::<1>()?;
            let name = self.header_string()?;
            let [side] = self.header_bytes::<1>()?;
            let start_side = Side::from_code(side).ok_or(CodecError::InvalidHeader("bad side code"))?;
            players.push(PlayerInfo { id, name, start_side });
        }
        let header = EsdmHeader {
            version,
            tick_rate,
            map_name,
            freeze_time_secs: vars[0],
            round_time_secs: vars[1],
            bomb_timer_secs: vars[2],
            round_end_secs: vars[3],
            side_switch_after: vars[4],
            players,
        };
        header.validate().map_err(CodecError::InvalidHeader)?;
        Ok(header)
    }

    /// Next event, `Ok(None)` after the verified end-of-stream sentinel.
    pub fn next_event(&mut self) -> Result<Option<GameEvent>, CodecError> {
        loop {
            if self.finished {
                return Ok(None);
            }
            let record_offset = self.offset;
            let truncated = |_| CodecError::TruncatedRecord { offset: record_offset };
            let computed = self.crc.clone().finalize();
            let mut head = [0u8; RECORD_HEADER_LEN];
            self.fill(&mut head).map_err(|e| source_err(e, truncated))?;
            let tick = u32::from_le_bytes([head[0], head[1], head[2], head[3]]);
            let type_code = head[4];
            let len = u16::from_le_bytes([head[5], head[6]]);

            if type_code == END_OF_STREAM {
                self.finished = true;
                if len != 0 {
                    return Err(CodecError::PayloadLengthMismatch { type_code, expected: 0, actual: len });
                }
                if tick != computed {
                    return Err(CodecError::ChecksumMismatch { stored: tick, computed });
                }
                return Ok(None);
            }

            let mut payload = core::mem::take(&mut self.payload);
            payload.resize(usize::from(len), 0);
            let filled = self.fill(&mut payload);
            self.payload = payload;
            if let Err(e) = filled {
                self.finished = true;
                return Err(source_err(e, truncated));
            }

            if let Some(previous) = self.last_tick {
                if tick < previous {
                    self.finished = true;
                    return Err(CodecError::TickRegression { previous, tick });
                }
            }
            self.last_tick = Some(tick);

            let Some(expected) = payload_len(type_code) else {
                self.skipped_unknown += 1;
                continue;
            };
            if expected != len {
                self.finished = true;
                return Err(CodecError::PayloadLengthMismatch { type_code, expected, actual: len });
            }
            let body = match decode_payload(type_code, &self.payload) {
                Ok(body) => body,
                Err(what) => {
                    self.finished = true;
                    return Err(CodecError::InvalidPayload { type_code, what });
                }
            };
            if let Err(what) = validate_body(&body) {
                self.finished = true;
                return Err(CodecError::InvalidPayload { type_code, what });
            }
            return Ok(Some(GameEvent { tick, body }));
        }
    }
}

impl<S: ByteSource> Iterator for DemoDecoder<S> {
    type Item = Result<GameEvent, CodecError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_event() {
            Ok(Some(e)) => Some(Ok(e)),
            Ok(None) => None,
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

fn header_err(e: SourceError) -> CodecError {
    match e {
        SourceError::UnexpectedEof => CodecError::TruncatedHeader,
        SourceError::Io(msg) => CodecError::Io(msg),
    }
}

fn source_err(e: SourceError, eof: impl FnOnce(()) -> CodecError) -> CodecError {
    match e {
        SourceError::UnexpectedEof => eof(()),
        SourceError::Io(msg) => CodecError::Io(msg),
    }
}

/// Range checks shared by encoder and decoder, so anything written can be read
/// back and anything read could have been written.
pub fn validate_body(body: &EventBody) -> Result<(), &'static str> {
    match body {
        EventBody::Damage(d) => {
            if d.attacker_id == d.victim_id {
                return Err("damage attacker and victim must differ");
            }
            if !(1..=100).contains(&d.hp_damage) {
                return Err("hpDamage must be in 1..=100");
            }
            finite_all(&[d.attacker_pos, d.victim_pos])
        }
        EventBody::Kill(k) => {
            if k.attacker_id == k.victim_id {
                return Err("kill attacker and victim must differ");
            }
            finite_all(&[k.attacker_pos, k.victim_pos])
        }
        EventBody::Flash(f) => {
            if !(f.flash_duration_secs.is_finite() && f.flash_duration_secs >= 0.0) {
                return Err("flash duration must be finite and non-negative");
            }
            Ok(())
        }
        EventBody::BombPlant(p) => finite_all(&[p.pos]),
        EventBody::GrenadeThrow(g) => finite_all(&[g.throw_pos, g.land_pos]),
        EventBody::WeaponFire(w) => finite_all(&[w.pos]),
        EventBody::PlayerUpdate(p) => {
            finite_all(&[p.pos, p.vel])?;
            if !(p.view_yaw.is_finite() && (0.0..360.0).contains(&p.view_yaw)) {
                return Err("viewYaw must be in [0, 360)");
            }
            if !(p.view_pitch.is_finite() && (-90.0..=90.0).contains(&p.view_pitch)) {
                return Err("viewPitch must be in [-90, 90]");
            }
            if p.hp > 100 || p.armor > 100 {
                return Err("hp and armor must be at most 100");
            }
            if p.grenades_remaining > 4 {
                return Err("grenadesRemaining must be at most 4");
            }
            Ok(())
        }
        EventBody::BombDefuse(_)
        | EventBody::BombExplode
        | EventBody::PhaseChange(_)
        | EventBody::RoundStart { .. }
        | EventBody::RoundEnd { .. }
        | EventBody::MatchStart
        | EventBody::RestartMarker => Ok(()),
    }
}

fn finite_all(v: &[Vec3]) -> Result<(), &'static str> {
    if v.iter().all(Vec3::is_finite) {
        Ok(())
    } else {
        Err("positions must be finite")
    }
}

fn put_vec3(out: &mut Vec<u8>, v: Vec3) {
    out.extend_from_slice(&v.x.to_le_bytes());
    out.extend_from_slice(&v.y.to_le_bytes());
    out.extend_from_slice(&v.z.to_le_bytes());
}

fn encode_payload(body: &EventBody, out: &mut Vec<u8>) {
    match body {
        EventBody::Damage(d) => {
            out.push(d.attacker_id);
            out.push(d.victim_id);
            put_vec3(out, d.attacker_pos);
            put_vec3(out, d.victim_pos);
            out.push(d.hp_damage);
            out.push(d.weapon.0);
        }
        EventBody::Kill(k) => {
            out.push(k.attacker_id);
            out.push(k.victim_id);
            put_vec3(out, k.attacker_pos);
            put_vec3(out, k.victim_pos);
            out.push(k.weapon.0);
            out.push(u8::from(k.headshot));
        }
        EventBody::Flash(f) => {
            out.push(f.attacker_id);
            out.push(f.victim_id);
            out.extend_from_slice(&f.flash_duration_secs.to_le_bytes());
        }
        EventBody::BombPlant(p) => {
            out.push(p.player_id);
            out.push(p.site.code());
            put_vec3(out, p.pos);
        }
        EventBody::BombDefuse(d) => out.push(d.player_id),
        EventBody::BombExplode | EventBody::MatchStart | EventBody::RestartMarker => {}
        EventBody::GrenadeThrow(g) => {
            out.push(g.player_id);
            out.push(g.grenade_type.code());
            put_vec3(out, g.throw_pos);
            put_vec3(out, g.land_pos);
        }
        EventBody::WeaponFire(w) => {
            out.push(w.player_id);
            put_vec3(out, w.pos);
            out.push(w.weapon.0);
        }
        EventBody::PlayerUpdate(p) => {
            out.push(p.player_id);
            out.push(p.side.code());
            put_vec3(out, p.pos);
            put_vec3(out, p.vel);
            out.extend_from_slice(&p.view_yaw.to_le_bytes());
            out.extend_from_slice(&p.view_pitch.to_le_bytes());
            out.push(p.hp);
            out.push(p.armor);
            out.extend_from_slice(&p.money.to_le_bytes());
            out.extend_from_slice(&p.eq_val.to_le_bytes());
            out.push(p.active_weapon.0);
            out.extend_from_slice(&p.ping.to_le_bytes());
            out.push(p.flags.bits());
            out.push(p.grenades_remaining);
        }
        EventBody::PhaseChange(phase) => out.push(phase.code()),
        EventBody::RoundStart { round_num } => out.extend_from_slice(&round_num.to_le_bytes()),
        EventBody::RoundEnd { winner, reason } => {
            out.push(winner.code());
            out.push(reason.code());
        }
    }
}

/// Cursor over a payload whose length was already checked.
struct Payload<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Payload<'_> {
    fn u8(&mut self) -> u8 {
        let v = self.data[self.pos];
        self.pos += 1;
        v
    }

    fn u16(&mut self) -> u16 {
        let v = u16::from_le_bytes([self.data[self.pos], self.data[self.pos + 1]]);
        self.pos += 2;
        v
    }

    fn f32(&mut self) -> f32 {
        let b = &self.data[self.pos..self.pos + 4];
        self.pos += 4;
        f32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }

    fn vec3(&mut self) -> Vec3 {
        Vec3 { x: self.f32(), y: self.f32(), z: self.f32() }
    }

    fn bool(&mut self) -> Result<bool, &'static str> {
        match self.u8() {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err("boolean byte must be 0 or 1"),
        }
    }

    fn side(&mut self) -> Result<Side, &'static str> {
        Side::from_code(self.u8()).ok_or("bad side code")
    }
}

fn decode_payload(type_code: u8, data: &[u8]) -> Result<EventBody, &'static str> {
    let mut p = Payload { data, pos: 0 };
    Ok(match type_code {
        code::DAMAGE => EventBody::Damage(Damage {
            attacker_id: p.u8(),
            victim_id: p.u8(),
            attacker_pos: p.vec3(),
            victim_pos: p.vec3(),
            hp_damage: p.u8(),
            weapon: Weapon(p.u8()),
        }),
        code::KILL => EventBody::Kill(Kill {
            attacker_id: p.u8(),
            victim_id: p.u8(),
            attacker_pos: p.vec3(),
            victim_pos: p.vec3(),
            weapon: Weapon(p.u8()),
            headshot: p.bool()?,
        }),
        code::FLASH => EventBody::Flash(Flash { attacker_id: p.u8(), victim_id: p.u8(), flash_duration_secs: p.f32() }),
        code::BOMB_PLANT => EventBody::BombPlant(BombPlant {
            player_id: p.u8(),
            site: BombSite::from_code(p.u8()).ok_or("bad bomb site code")?,
            pos: p.vec3(),
        }),
        code::BOMB_DEFUSE => EventBody::BombDefuse(BombDefuse { player_id: p.u8() }),
        code::BOMB_EXPLODE => EventBody::BombExplode,
        code::GRENADE_THROW => EventBody::GrenadeThrow(GrenadeThrow {
            player_id: p.u8(),
            grenade_type: GrenadeType::from_code(p.u8()).ok_or("bad grenade type code")?,
            throw_pos: p.vec3(),
            land_pos: p.vec3(),
        }),
        code::WEAPON_FIRE => {
            EventBody::WeaponFire(WeaponFire { player_id: p.u8(), pos: p.vec3(), weapon: Weapon(p.u8()) })
        }
        code::PLAYER_UPDATE => EventBody::PlayerUpdate(PlayerState {
            player_id: p.u8(),
            side: p.side()?,
            pos: p.vec3(),
            vel: p.vec3(),
            view_yaw: p.f32(),
            view_pitch: p.f32(),
            hp: p.u8(),
            armor: p.u8(),
            money: p.u16(),
            eq_val: p.u16(),
            active_weapon: Weapon(p.u8()),
            ping: p.u16(),
            flags: PlayerFlags::from_bits(p.u8()).ok_or("reserved flag bits set")?,
            grenades_remaining: p.u8(),
        }),
        code::PHASE_CHANGE => EventBody::PhaseChange(Phase::from_code(p.u8()).ok_or("bad phase code")?),
        code::ROUND_START => EventBody::RoundStart { round_num: p.u16() },
        code::ROUND_END => EventBody::RoundEnd {
            winner: p.side()?,
            reason: RoundEndReason::from_code(p.u8()).ok_or("bad round end reason code")?,
        },
        code::MATCH_START => EventBody::MatchStart,
        code::RESTART_MARKER => EventBody::RestartMarker,
        _ => return Err("unknown type code"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn header() -> EsdmHeader {
        let players = (1..=10)
            .map(|id| PlayerInfo {
                id,
                name: alloc::format!("player{id}"),
                start_side: if id <= 5 { Side::CT } else { Side::T },
            })
            .collect();
        EsdmHeader::new("de_test", 128, &ServerVars::default(), players)
    }

    #[test]
    fn empty_stream_is_header_plus_sentinel() {
        let h = header();
        let bytes = write_demo(&h, &[]).unwrap();
        assert_eq!(bytes.len(), h.encoded_len() + RECORD_HEADER_LEN);
        let (h2, events, skipped) = read_demo(&bytes).unwrap();
        assert_eq!(h2, h);
        assert!(events.is_empty());
        assert_eq!(skipped, 0);
    }

    #[test]
    fn single_weapon_fire_uses_its_type_code() {
        let e = GameEvent::new(
            0,
            EventBody::WeaponFire(WeaponFire { player_id: 3, pos: Vec3::new(1.0, 2.0, 3.0), weapon: Weapon(7) }),
        );
        let h = header();
        let bytes = write_demo(&h, [&e]).unwrap();
        let rec = &bytes[h.encoded_len()..];
        assert_eq!(&rec[..4], &0u32.to_le_bytes());
        assert_eq!(rec[4], code::WEAPON_FIRE);
        assert_eq!(u16::from_le_bytes([rec[5], rec[6]]), 14);
        let (_, events, _) = read_demo(&bytes).unwrap();
        assert_eq!(events, [e]);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = write_demo(&header(), &[]).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_demo(&bytes), Err(CodecError::BadMagic(m)) if &m == b"XSDM"));
    }

    #[test]
    fn unsupported_version_rejected() {
        let mut bytes = write_demo(&header(), &[]).unwrap();
        bytes[4] = 2;
        assert_eq!(read_demo(&bytes).unwrap_err(), CodecError::UnsupportedVersion(2));
    }

    #[test]
    fn unknown_records_skipped_and_counted() {
        let h = header();
        let mut enc = DemoEncoder::new(&h).unwrap();
        enc.push(&GameEvent::new(5, EventBody::MatchStart)).unwrap();
        enc.push_raw(6, 0x42, &[1, 2, 3]).unwrap();
        enc.push(&GameEvent::new(7, EventBody::RestartMarker)).unwrap();
        let (_, events, skipped) = read_demo(&enc.finish()).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(events.len(), 2);
    }

    #[test]
    fn truncated_payload_detected() {
        let e = GameEvent::new(1, EventBody::BombDefuse(BombDefuse { player_id: 2 }));
        let h = header();
        let bytes = write_demo(&h, [&e]).unwrap();
        let cut = &bytes[..h.encoded_len() + RECORD_HEADER_LEN];
        assert!(matches!(read_demo(cut), Err(CodecError::TruncatedRecord { .. })));
    }

    #[test]
    fn tick_regression_detected_on_read_and_write() {
        let h = header();
        let mut enc = DemoEncoder::new(&h).unwrap();
        enc.push(&GameEvent::new(10, EventBody::MatchStart)).unwrap();
        assert!(matches!(
            enc.push(&GameEvent::new(9, EventBody::MatchStart)),
            Err(CodecError::TickRegression { previous: 10, tick: 9 })
        ));
        // Hand-build a regressing file with a valid checksum.
        let mut raw = Vec::new();
        h.encode_into(&mut raw);
        for tick in [10u32, 9] {
            raw.extend_from_slice(&tick.to_le_bytes());
            raw.push(code::MATCH_START);
            raw.extend_from_slice(&0u16.to_le_bytes());
        }
        let crc = crc32fast::hash(&raw);
        raw.extend_from_slice(&crc.to_le_bytes());
        raw.push(END_OF_STREAM);
        raw.extend_from_slice(&0u16.to_le_bytes());
        assert!(matches!(read_demo(&raw), Err(CodecError::TickRegression { .. })));
    }

    #[test]
    fn out_of_range_fields_unencodable() {
        let h = header();
        let bad = GameEvent::new(
            0,
            EventBody::Damage(Damage {
                attacker_id: 1,
                victim_id: 2,
                attacker_pos: Vec3::ZERO,
                victim_pos: Vec3::ZERO,
                hp_damage: 0,
                weapon: Weapon(1),
            }),
        );
        assert!(matches!(write_demo(&h, [&bad]), Err(CodecError::UnencodableEvent(_))));
        let nan = GameEvent::new(
            0,
            EventBody::WeaponFire(WeaponFire { player_id: 1, pos: Vec3::new(f32::NAN, 0.0, 0.0), weapon: Weapon(1) }),
        );
        assert!(matches!(write_demo(&h, [&nan]), Err(CodecError::UnencodableEvent(_))));
    }

    #[test]
    fn checksum_catches_tick_corruption() {
        let h = header();
        let events = [GameEvent::new(100, EventBody::MatchStart), GameEvent::new(200, EventBody::RestartMarker)];
        let mut bytes = write_demo(&h, &events).unwrap();
        bytes[h.encoded_len()] ^= 0x01;
        assert!(matches!(read_demo(&bytes), Err(CodecError::ChecksumMismatch { .. })));
    }

    #[test]
    fn decoding_is_lazy() {
        let h = header();
        let events: Vec<_> =
            (0..1000).map(|t| GameEvent::new(t, EventBody::BombDefuse(BombDefuse { player_id: 1 }))).collect();
        let bytes = write_demo(&h, &events).unwrap();
        let mut dec = DemoDecoder::new(SliceSource::new(&bytes)).unwrap();
        for _ in 0..3 {
            dec.next_event().unwrap().unwrap();
        }
        assert_eq!(dec.bytes_read() as usize, h.encoded_len() + 3 * (RECORD_HEADER_LEN + 1));
    }
}
