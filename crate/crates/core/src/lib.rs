//! Core library for round-based tactical FPS demo logs.
//!
//! Everything in this crate is `no_std` + `alloc`: decoding and encoding the
//! ESDM binary demo format, segmenting an event stream into cleaned rounds,
//! downsampling player state into frames, match analytics and SVG output, a
//! synthetic match generator, and the win-probability benchmark models.
//! File IO, JSON, and the command line live in the `demoforge` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analytics;
pub mod bench;
pub mod codec;
pub mod engine;
pub mod frames;
pub mod matchgen;
pub mod model;
pub mod pipeline;

mod math;

pub use codec::{CodecError, DemoDecoder, DemoEncoder, EsdmHeader};
pub use model::{
    DemoDocument, EventBody, Frame, GameEvent, GameRound, Phase, PlayerState, RoundEndReason, ServerVars, Side,
};
