use demoforge::{emit_json, parse_json};
use demoforge_core::codec::write_demo;
use demoforge_core::matchgen::{generate_match, inject_anomalies, AnomalyKind, GenConfig, Intensities, RoundTarget};
use demoforge_core::model::{InvalidReason, ParserParams, ServerVars};
use demoforge_core::pipeline::{parse_bytes, ParseOptions};

fn demo_bytes(seed: u64, rounds: u16, interval: u32) -> Vec<u8> {
    let cfg = GenConfig { seed, rounds: RoundTarget::Fixed(rounds), update_interval: interval, ..GenConfig::default() };
    let (h, ev, _) = generate_match(&cfg).unwrap();
    write_demo(&h, &ev).unwrap()
}

#[test]
fn reparsing_emitted_json_is_a_fixpoint() {
    for seed in 1..=5 {
        let doc = parse_bytes(&demo_bytes(seed, 16 + seed as u16, 32), &ParseOptions::default()).unwrap();
        let text = emit_json(&doc);
        let back = parse_json(&text).unwrap();
        assert_eq!(back, doc, "seed {seed}");
        assert_eq!(emit_json(&back), text);
    }
}

#[test]
fn kept_invalid_rounds_survive_json() {
    let cfg = GenConfig { seed: 3, rounds: RoundTarget::Fixed(18), ..GenConfig::default() };
    let (h, ev, _) = generate_match(&cfg).unwrap();
    let ev = inject_anomalies(ev, AnomalyKind::DuplicateRoundEnd, 3).unwrap();
    let opts = ParseOptions { keep_invalid: true, ..ParseOptions::default() };
    let doc = parse_bytes(&write_demo(&h, &ev).unwrap(), &opts).unwrap();
    assert_eq!(parse_json(&emit_json(&doc)).unwrap(), doc);
}

#[test]
fn round_objects_carry_event_arrays_and_frames() {
    let doc = parse_bytes(&demo_bytes(2, 3, 64), &ParseOptions::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&emit_json(&doc)).unwrap();
    let r = &v["gameRounds"][0];
    for k in ["damages", "kills", "flashes", "bombEvents", "grenades", "weaponFires", "frames"] {
        assert!(r[k].is_array(), "{k}");
    }
    for k in ["roundNum", "winner", "reason", "ctScore", "tScore", "startTick", "endTick"] {
        assert!(!r[k].is_null(), "{k}");
    }
    assert_eq!(v["parserParameters"]["parseRate"], 2);
}

#[test]
fn golden_document() {
    let vars = ServerVars {
        freeze_time_secs: 1,
        round_time_secs: 6,
        bomb_timer_secs: 4,
        round_end_secs: 1,
        ..ServerVars::default()
    };
    let cfg = GenConfig {
        seed: 7,
        rounds: RoundTarget::Fixed(2),
        vars,
        intensities: Intensities { weapon_fires: 0.5, ..Intensities::ZERO },
        update_interval: 64,
        ..GenConfig::default()
    };
    let (h, ev, _) = generate_match(&cfg).unwrap();
    let opts = ParseOptions {
        params: ParserParams { parse_rate: 1, ..ParserParams::default() },
        source_file: "golden.esdm".into(),
        ..ParseOptions::default()
    };
    let doc = parse_bytes(&write_demo(&h, &ev).unwrap(), &opts).unwrap();
    assert_eq!(doc.game_rounds.len(), 2);
    let text = emit_json(&doc) + "\n";
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(path).unwrap());
}

#[test]
fn emitted_documents_match_shipped_schema() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../../../docs/demo-document.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let mut docs = Vec::new();
    for (seed, anomaly) in [(4, None), (5, Some(AnomalyKind::Restart)), (6, Some(AnomalyKind::DuplicateRoundEnd))] {
        let cfg = GenConfig { seed, rounds: RoundTarget::Fixed(20), update_interval: 32, ..GenConfig::default() };
        let (h, ev, _) = generate_match(&cfg).unwrap();
        let ev = match anomaly {
            Some(k) => inject_anomalies(ev, k, seed).unwrap(),
            None => ev,
        };
        let opts = ParseOptions { keep_invalid: true, ..ParseOptions::default() };
        docs.push(parse_bytes(&write_demo(&h, &ev).unwrap(), &opts).unwrap());
    }
    docs[0].game_rounds[0].invalid_reasons = vec![InvalidReason::NoWinCondition];
    for doc in &docs {
        let v: serde_json::Value = serde_json::from_str(&emit_json(doc)).unwrap();
        let errors: Vec<String> =
            validator.iter_errors(&v).map(|e| format!("{} at {}", e, e.instance_path)).take(5).collect();
        assert!(errors.is_empty(), "{errors:#?}");
    }
    let mut broken: serde_json::Value = serde_json::from_str(&emit_json(&docs[1])).unwrap();
    broken["gameRounds"][0]["winner"] = "Spectator".into();
    assert!(!validator.is_valid(&broken));
}
