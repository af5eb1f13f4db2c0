//! Decode, segment, clean, reconcile, and sample a demo into a document.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::codec::{ByteSource, CodecError, DemoDecoder, SliceSource};
use crate::engine::{self, EngineError, Segmenter, ValidityVerdict};
use crate::frames::{self, FrameError};
use crate::model::{CleaningReport, DemoDocument, MatchMeta, ModelError, ParserParams};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("invalid parser parameters: {0}")]
    Params(#[from] ModelError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub params: ParserParams,
    /// Keep rounds that fail validation, flagged with their reasons.
    pub keep_invalid: bool,
    pub source_file: String,
}

/// Parses an in-memory demo.
pub fn parse_bytes(bytes: &[u8], opts: &ParseOptions) -> Result<DemoDocument, ParseError> {
    parse_source(SliceSource::new(bytes), opts)
}

/// Parses a demo from any byte source, streaming events into the segmenter.
pub fn parse_source<S: ByteSource>(source: S, opts: &ParseOptions) -> Result<DemoDocument, ParseError> {
    let mut decoder = DemoDecoder::new(source)?;
    let header = decoder.header().clone();
    let vars = header.server_vars();
    let tick_rate = header.tick_rate;
    opts.params.validate(tick_rate)?;

    let mut seg = Segmenter::new(&vars, tick_rate, opts.params.drop_incomplete_rounds);
    while let Some(event) = decoder.next_event()? {
        seg.push(event)?;
    }
    let segmentation = seg.finish()?;

    let mut cleaning = CleaningReport {
        rounds_segmented: segmentation.rounds.len() as u32,
        incomplete_rounds_dropped: segmentation.incomplete_rounds_dropped,
        orphan_round_ends: segmentation.orphan_round_ends,
        duplicate_round_ends: segmentation.duplicate_round_ends,
        illegal_phase_transitions: segmentation.illegal_phase_transitions,
        unknown_records_skipped: decoder.skipped_unknown(),
        ..CleaningReport::default()
    };

    let mut rounds = Vec::with_capacity(segmentation.rounds.len());
    for raw in segmentation.rounds {
        let mut round = raw.round;
        if let ValidityVerdict::Invalid(reasons) = engine::validate_round(&round, &vars, tick_rate) {
            if !opts.keep_invalid {
                cleaning.invalid_rounds_dropped += 1;
                continue;
            }
            cleaning.invalid_rounds_kept += 1;
            round.invalid_reasons = reasons;
        } else if let Some((winner, _)) = engine::recompute_outcome(&round, &vars, tick_rate) {
            if winner != round.winner {
                cleaning.winner_conflicts += 1;
            }
        }
        round.frames = frames::sample_frames(&raw.events, &round, &vars, &opts.params, tick_rate)?;
        rounds.push(round);
    }

    let game_rounds = if rounds.is_empty() {
        Vec::new()
    } else {
        let rec = engine::reconcile_match(rounds, &vars)?;
        cleaning.score_repairs = rec.score_repairs;
        cleaning.side_repairs = rec.side_repairs;
        cleaning.rounds_after_clinch = rec.rounds_after_clinch;
        rec.rounds
    };

    Ok(DemoDocument {
        meta: MatchMeta {
            map_name: header.map_name.to_string(),
            tick_rate,
            demo_version: header.version,
            source_file: opts.source_file.clone(),
        },
        parser_parameters: opts.params.clone(),
        server_vars: vars,
        players: header.players.clone(),
        cleaning,
        game_rounds,
    })
}
