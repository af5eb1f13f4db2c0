//! CSV exports.

use std::path::Path;

use demoforge_core::analytics::PlayerStatLine;
use demoforge_core::bench::{CalibrationReport, EpochLog};
use serde::Serialize;

use crate::files::{write_bytes, FileError};

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize into memory");
    }
    w.into_inner().expect("in-memory writer")
}

/// Stat lines as CSV with a header row, one row per (document, player).
pub fn stats_csv<'a>(lines: impl IntoIterator<Item = (&'a str, &'a PlayerStatLine)>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "source",
        "playerId",
        "name",
        "kills",
        "deaths",
        "headshots",
        "damage",
        "flashesThrown",
        "grenadesThrown",
        "bombPlants",
        "bombDefuses",
        "roundsPlayed",
        "adr",
    ])
    .expect("in-memory");
    for (source, l) in lines {
        w.write_record([
            source.to_string(),
            l.player_id.to_string(),
            l.name.clone(),
            l.kills.to_string(),
            l.deaths.to_string(),
            l.headshots.to_string(),
            l.damage.to_string(),
            l.flashes_thrown.to_string(),
            l.grenades_thrown.to_string(),
            l.bomb_plants.to_string(),
            l.bomb_defuses.to_string(),
            l.rounds_played.to_string(),
            l.adr.to_string(),
        ])
        .expect("in-memory");
    }
    w.into_inner().expect("in-memory writer")
}

pub fn calibration_csv(report: &CalibrationReport) -> Vec<u8> {
    to_csv(&report.bins)
}

#[derive(Serialize)]
struct CurveRow {
    tick: u32,
    probability: f64,
}

pub fn curve_csv(points: &[(u32, f64)]) -> Vec<u8> {
    to_csv(points.iter().map(|&(tick, probability)| CurveRow { tick, probability }))
}

pub fn training_log_csv(log: &[EpochLog]) -> Vec<u8> {
    to_csv(log)
}

pub fn write_csv(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    write_bytes(path, bytes)
}
