//! Player statistics, corpus summaries, action heatmaps, and SVG rendering.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{cos, ln, sin};
use crate::model::{
    ActionCounts, BombEventKind, DemoDocument, Frame, GameRound, PlayerInfo, RoundEndReason, Side, Vec3,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("unknown action type {0:?}")]
    UnknownActionType(String),
    #[error("unknown coordinate selector {0:?}")]
    UnknownSelector(String),
    #[error("{action:?} events have no {selector:?} coordinate")]
    UnsupportedSelector { action: ActionKind, selector: CoordSelector },
    #[error("grid needs at least one bin per axis and a non-empty extent")]
    InvalidGrid,
    #[error("corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlayerStatLine {
    pub player_id: u8,
    pub name: String,
    pub kills: u32,
    pub deaths: u32,
    pub headshots: u32,
    pub damage: u32,
    pub flashes_thrown: u32,
    pub grenades_thrown: u32,
    pub bomb_plants: u32,
    pub bomb_defuses: u32,
    pub rounds_played: u32,
    pub adr: f64,
}

/// Running per-player totals. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatAccumulator {
    lines: BTreeMap<u8, PlayerStatLine>,
}

impl StatAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn line(&mut self, id: u8) -> &mut PlayerStatLine {
        self.lines.entry(id).or_insert_with(|| PlayerStatLine { player_id: id, ..Default::default() })
    }

    pub fn add_round(&mut self, round: &GameRound) {
        let mut present: Vec<u8> = round.ct_players.iter().chain(&round.t_players).copied().collect();
        for d in &round.damages {
            let e = &d.event;
            present.extend([e.attacker_id, e.victim_id]);
            self.line(e.attacker_id).damage += u32::from(e.hp_damage);
        }
        for k in &round.kills {
            let e = &k.event;
            present.extend([e.attacker_id, e.victim_id]);
            let a = self.line(e.attacker_id);
            a.kills += 1;
            a.headshots += u32::from(e.headshot);
            self.line(e.victim_id).deaths += 1;
        }
        for f in &round.flashes {
            present.extend([f.event.attacker_id, f.event.victim_id]);
        }
        for g in &round.grenades {
            present.push(g.event.player_id);
            let l = self.line(g.event.player_id);
            l.grenades_thrown += 1;
            l.flashes_thrown += u32::from(g.event.grenade_type == crate::model::GrenadeType::Flashbang);
        }
        for w in &round.weapon_fires {
            present.push(w.event.player_id);
        }
        for b in &round.bomb_events {
            if let Some(id) = b.event.player_id {
                present.push(id);
                match b.event.kind {
                    BombEventKind::Plant => self.line(id).bomb_plants += 1,
                    BombEventKind::Defuse => self.line(id).bomb_defuses += 1,
                    BombEventKind::Explode => {}
                }
            }
        }
        present.sort_unstable();
        present.dedup();
        for id in present {
            self.line(id).rounds_played += 1;
        }
    }

    pub fn merge(mut self, other: StatAccumulator) -> StatAccumulator {
        for (id, o) in other.lines {
            let l = self.line(id);
            l.kills += o.kills;
            l.deaths += o.deaths;
            l.headshots += o.headshots;
            l.damage += o.damage;
            l.flashes_thrown += o.flashes_thrown;
            l.grenades_thrown += o.grenades_thrown;
            l.bomb_plants += o.bomb_plants;
            l.bomb_defuses += o.bomb_defuses;
            l.rounds_played += o.rounds_played;
        }
        self
    }

    /// Final stat lines sorted by player id, named from `players` where known.
    pub fn finish(self, players: &[PlayerInfo]) -> Vec<PlayerStatLine> {
        self.lines
            .into_values()
            .map(|mut l| {
                l.adr = if l.rounds_played == 0 { 0.0 } else { f64::from(l.damage) / f64::from(l.rounds_played) };
                if let Some(p) = players.iter().find(|p| p.id == l.player_id) {
                    l.name = p.name.clone();
                }
                l
            })
            .collect()
    }
}

pub fn player_stats(rounds: &[GameRound], players: &[PlayerInfo]) -> Vec<PlayerStatLine> {
    let mut acc = StatAccumulator::new();
    for r in rounds {
        acc.add_round(r);
    }
    acc.finish(players)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusSummary {
    pub documents: u64,
    pub rounds: u64,
    pub frames: u64,
    pub actions: ActionCounts,
    pub actions_per_round: f64,
    /// Share of each action type, ordered damages, kills, flashes, bombEvents, grenades, weaponFires.
    pub action_mix: [f64; 6],
    pub frames_per_round: f64,
    pub bomb_plant_rate: f64,
    /// Share of each end reason, ordered EliminationOfT, EliminationOfCT, BombDefused, BombExploded, TargetSaved.
    pub reason_mix: [f64; 5],
    pub ct_win_rate: f64,
    pub mean_round_secs: f64,
}

/// Additive corpus counters; `summary` turns them into rates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusTotals {
    pub documents: u64,
    pub rounds: u64,
    pub frames: u64,
    pub actions: ActionCounts,
    pub plants: u64,
    pub ct_wins: u64,
    pub reasons: [u64; 5],
    pub round_secs: f64,
}

impl CorpusTotals {
    pub fn add_document(&mut self, doc: &DemoDocument) {
        self.documents += 1;
        let rate = f64::from(doc.meta.tick_rate.max(1));
        for r in &doc.game_rounds {
            self.rounds += 1;
            self.frames += r.frames.len() as u64;
            self.actions.add(&r.action_counts());
            self.plants += u64::from(r.has_plant());
            self.ct_wins += u64::from(r.winner == Side::CT);
            self.reasons[usize::from(r.reason.code())] += 1;
            self.round_secs += f64::from(r.end_tick.saturating_sub(r.start_tick)) / rate;
        }
    }

    pub fn merge(mut self, o: CorpusTotals) -> CorpusTotals {
        self.documents += o.documents;
        self.rounds += o.rounds;
        self.frames += o.frames;
        self.actions.add(&o.actions);
        self.plants += o.plants;
        self.ct_wins += o.ct_wins;
        for (a, b) in self.reasons.iter_mut().zip(o.reasons) {
            *a += b;
        }
        self.round_secs += o.round_secs;
        self
    }

    pub fn summary(&self) -> Result<CorpusSummary, AnalyticsError> {
        if self.documents == 0 {
            return Err(AnalyticsError::EmptyCorpus);
        }
        let per = |x: f64, n: u64| if n == 0 { 0.0 } else { x / n as f64 };
        let total = self.actions.total();
        Ok(CorpusSummary {
            documents: self.documents,
            rounds: self.rounds,
            frames: self.frames,
            actions: self.actions,
            actions_per_round: per(total as f64, self.rounds),
            action_mix: self.actions.as_array().map(|c| per(c as f64, total)),
            frames_per_round: per(self.frames as f64, self.rounds),
            bomb_plant_rate: per(self.plants as f64, self.rounds),
            reason_mix: self.reasons.map(|c| per(c as f64, self.rounds)),
            ct_win_rate: per(self.ct_wins as f64, self.rounds),
            mean_round_secs: per(self.round_secs, self.rounds),
        })
    }
}

pub fn corpus_summary(docs: &[DemoDocument]) -> Result<CorpusSummary, AnalyticsError> {
    let mut t = CorpusTotals::default();
    for d in docs {
        t.add_document(d);
    }
    t.summary()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActionKind {
    Damage,
    Kill,
    Flash,
    BombPlant,
    Grenade,
    WeaponFire,
}

impl FromStr for ActionKind {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "damage" => ActionKind::Damage,
            "kill" => ActionKind::Kill,
            "flash" => ActionKind::Flash,
            "bombPlant" | "bomb-plant" => ActionKind::BombPlant,
            "grenade" => ActionKind::Grenade,
            "weaponFire" | "weapon-fire" => ActionKind::WeaponFire,
            other => return Err(AnalyticsError::UnknownActionType(other.to_string())),
        })
    }
}

/// Which position of an action to bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CoordSelector {
    /// Attacker, shooter, thrower, or planter.
    Actor,
    Victim,
    /// Grenade landing position.
    Land,
}

impl FromStr for CoordSelector {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "actor" | "attacker" | "shooter" => CoordSelector::Actor,
            "victim" => CoordSelector::Victim,
            "land" => CoordSelector::Land,
            other => return Err(AnalyticsError::UnknownSelector(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Bounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Bounds {
    /// Extent of generated maps.
    pub const DEFAULT: Bounds = Bounds { xmin: -2000.0, xmax: 2000.0, ymin: -2000.0, ymax: 2000.0 };

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.xmin..=self.xmax).contains(&x) && (self.ymin..=self.ymax).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HeatmapGrid {
    pub bounds: Bounds,
    pub nx: usize,
    pub ny: usize,
    /// Row-major counts, `counts[iy * nx + ix]`.
    pub counts: Vec<u64>,
    pub out_of_bounds: u64,
}

impl HeatmapGrid {
    pub fn new(bounds: Bounds, nx: usize, ny: usize) -> Result<Self, AnalyticsError> {
        if nx == 0 || ny == 0 || !(bounds.xmax > bounds.xmin && bounds.ymax > bounds.ymin) {
            return Err(AnalyticsError::InvalidGrid);
        }
        Ok(HeatmapGrid { bounds, nx, ny, counts: vec![0; nx * ny], out_of_bounds: 0 })
    }

    /// Bins one point. The upper edges are inclusive.
    pub fn add(&mut self, x: f64, y: f64) {
        let b = &self.bounds;
        if !b.contains(x, y) {
            self.out_of_bounds += 1;
            return;
        }
        let ix = (((x - b.xmin) / (b.xmax - b.xmin)) * self.nx as f64) as usize;
        let iy = (((y - b.ymin) / (b.ymax - b.ymin)) * self.ny as f64) as usize;
        let (ix, iy) = (ix.min(self.nx - 1), iy.min(self.ny - 1));
        self.counts[iy * self.nx + ix] += 1;
    }

    pub fn get(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.nx + ix]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Display intensity in [0, 1]: `ln(1 + c) / ln(1 + max)`.
    pub fn intensity(&self, ix: usize, iy: usize) -> f64 {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return 0.0;
        }
        ln(1.0 + self.get(ix, iy) as f64) / ln(1.0 + max as f64)
    }

    /// Pearson chi-square statistic against a uniform spread over the bins,
    /// with `nx * ny - 1` degrees of freedom.
    pub fn chi_square_uniform(&self) -> f64 {
        let n = self.total() as f64;
        let k = self.counts.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let expected = n / k;
        self.counts.iter().map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected).sum()
    }
}

fn selected_points(round: &GameRound, action: ActionKind, sel: CoordSelector) -> Result<Vec<Vec3>, AnalyticsError> {
    use ActionKind as A;
    use CoordSelector as C;
    let unsupported = Err(AnalyticsError::UnsupportedSelector { action, selector: sel });
    Ok(match (action, sel) {
        (A::Damage, C::Actor) => round.damages.iter().map(|d| d.event.attacker_pos).collect(),
        (A::Damage, C::Victim) => round.damages.iter().map(|d| d.event.victim_pos).collect(),
        (A::Kill, C::Actor) => round.kills.iter().map(|k| k.event.attacker_pos).collect(),
        (A::Kill, C::Victim) => round.kills.iter().map(|k| k.event.victim_pos).collect(),
        (A::Grenade, C::Actor) => round.grenades.iter().map(|g| g.event.throw_pos).collect(),
        (A::Grenade, C::Land) => round.grenades.iter().map(|g| g.event.land_pos).collect(),
        (A::WeaponFire, C::Actor) => round.weapon_fires.iter().map(|w| w.event.pos).collect(),
        (A::BombPlant, C::Actor) => round
            .bomb_events
            .iter()
            .filter(|b| b.event.kind == BombEventKind::Plant)
            .filter_map(|b| b.event.pos)
            .collect(),
        _ => return unsupported,
    })
}

pub fn action_heatmap(
    docs: &[DemoDocument],
    action: ActionKind,
    sel: CoordSelector,
    bounds: Bounds,
    nx: usize,
    ny: usize,
) -> Result<HeatmapGrid, AnalyticsError> {
    let mut grid = HeatmapGrid::new(bounds, nx, ny)?;
    let probe = GameRound::empty();
    selected_points(&probe, action, sel)?;
    for doc in docs {
        for r in &doc.game_rounds {
            for p in selected_points(r, action, sel)? {
                grid.add(f64::from(p.x), f64::from(p.y));
            }
        }
    }
    Ok(grid)
}

const CANVAS: f64 = 800.0;
const CT_COLOR: &str = "#00FFFF";
const T_COLOR: &str = "#FFA500";

fn to_canvas(b: &Bounds, x: f64, y: f64) -> (f64, f64) {
    ((x - b.xmin) / (b.xmax - b.xmin) * CANVAS, (b.ymax - y) / (b.ymax - b.ymin) * CANVAS)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<title>{}</title>\n",
        escape(title)
    );
}

pub fn render_frame_svg(frame: &Frame, map_name: &str) -> String {
    render_frame_svg_in(frame, map_name, &Bounds::DEFAULT)
}

/// Top-down frame: one glyph per alive player with an HP bar and a view line,
/// the bomb as a white triangle, fires as red circles, smokes as gray circles.
pub fn render_frame_svg_in(frame: &Frame, map_name: &str, b: &Bounds) -> String {
    let mut s = String::new();
    svg_open(&mut s, CANVAS, CANVAS, &alloc::format!("{} tick {}", map_name, frame.tick));
    let _ = writeln!(
        s,
        "<rect class=\"background\" x=\"0\" y=\"0\" width=\"{CANVAS:.0}\" height=\"{CANVAS:.0}\" fill=\"#2B2B2B\"/>"
    );
    for f in &frame.smokes {
        let (x, y) = to_canvas(b, f64::from(f.pos.x), f64::from(f.pos.y));
        let _ = writeln!(
            s,
            "<circle class=\"smoke\" cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"18.0\" fill=\"#808080\" fill-opacity=\"0.6\"/>"
        );
    }
    for f in &frame.fires {
        let (x, y) = to_canvas(b, f64::from(f.pos.x), f64::from(f.pos.y));
        let _ = writeln!(
            s,
            "<circle class=\"fire\" cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"12.0\" fill=\"#FF0000\" fill-opacity=\"0.6\"/>"
        );
    }
    for p in frame.players().filter(|p| p.is_alive()) {
        let (x, y) = to_canvas(b, f64::from(p.pos.x), f64::from(p.pos.y));
        let (class, color) = match p.side {
            Side::CT => ("ct", CT_COLOR),
            Side::T => ("t", T_COLOR),
        };
        let yaw = f64::from(p.view_yaw).to_radians();
        let (dx, dy) = (cos(yaw) * 16.0, -sin(yaw) * 16.0);
        let _ = writeln!(
            s,
            "<line class=\"view\" x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#000000\" stroke-width=\"2\"/>",
            x + dx,
            y + dy
        );
        let _ = writeln!(s, "<circle class=\"player {class}\" cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"7.0\" fill=\"{color}\" stroke=\"#000000\"/>");
        let bar = 20.0 * f64::from(p.hp) / 100.0;
        let _ = writeln!(
            s,
            "<rect class=\"hp-bar\" x=\"{:.1}\" y=\"{:.1}\" width=\"{bar:.1}\" height=\"3.0\" fill=\"#00C000\"/>",
            x - 10.0,
            y - 14.0
        );
    }
    if let Some(pos) = frame.bomb.pos {
        let (x, y) = to_canvas(b, f64::from(pos.x), f64::from(pos.y));
        let _ = writeln!(
            s,
            "<polygon class=\"bomb\" points=\"{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}\" fill=\"#FFFFFF\" stroke=\"#000000\"/>",
            x,
            y - 8.0,
            x - 7.0,
            y + 6.0,
            x + 7.0,
            y + 6.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_heatmap_svg(grid: &HeatmapGrid, title: &str) -> String {
    let mut s = String::new();
    svg_open(&mut s, CANVAS, CANVAS, title);
    let _ = writeln!(
        s,
        "<rect class=\"background\" x=\"0\" y=\"0\" width=\"{CANVAS:.0}\" height=\"{CANVAS:.0}\" fill=\"#000000\"/>"
    );
    let (cw, ch) = (CANVAS / grid.nx as f64, CANVAS / grid.ny as f64);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v = grid.intensity(ix, iy);
            if v == 0.0 {
                continue;
            }
            let y = CANVAS - (iy + 1) as f64 * ch;
            let _ = writeln!(
                s,
                "<rect class=\"bin\" x=\"{:.2}\" y=\"{y:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"#FFD700\" fill-opacity=\"{v:.4}\"/>",
                ix as f64 * cw
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One named polyline on a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1F77B4", "#FF7F0E", "#2CA02C", "#D62728", "#9467BD", "#8C564B"];

/// Line chart with a fixed y range of [0, 1] and x scaled to the data.
pub fn render_line_chart_svg(title: &str, x_label: &str, series: &[Series], diagonal: bool) -> String {
    let (w, h, m) = (640.0, 400.0, 48.0);
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in xs {
        x0 = x0.min(x);
        x1 = x1.max(x);
    }
    if diagonal || !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - y.clamp(0.0, 1.0) * (h - 2.0 * m);

    let mut s = String::new();
    svg_open(&mut s, w, h, title);
    let _ =
        writeln!(s, "<rect class=\"background\" x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"#FFFFFF\"/>");
    let _ = writeln!(
        s,
        "<rect class=\"axes\" x=\"{m:.1}\" y=\"{m:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#000000\"/>",
        w - 2.0 * m,
        h - 2.0 * m
    );
    for k in 0..=4 {
        let y = f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            "<text class=\"tick\" x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{y:.2}</text>",
            m - 4.0,
            py(y) + 3.0
        );
    }
    let _ = writeln!(
        s,
        "<text class=\"label\" x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text class=\"title\" x=\"{:.1}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        escape(title)
    );
    if diagonal {
        let _ = writeln!(
            s,
            "<line class=\"diagonal\" x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999999\" stroke-dasharray=\"4 4\"/>",
            px(0.0),
            py(0.0),
            px(1.0),
            py(1.0)
        );
    }
    for (n, ser) in series.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let mut pts = String::new();
        for (i, (x, y)) in ser.points.iter().enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{:.1},{:.1}", px(*x), py(*y));
        }
        let _ = writeln!(
            s,
            "<polyline class=\"series\" points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>"
        );
        let _ = writeln!(
            s,
            "<text class=\"legend\" x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"{color}\">{}</text>",
            m + 8.0,
            m + 14.0 + 14.0 * n as f64,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Share of rounds ending for each reason, in code order.
pub fn reason_share(rounds: &[GameRound]) -> [f64; 5] {
    let mut c = [0u64; 5];
    for r in rounds {
        c[usize::from(r.reason.code())] += 1;
    }
    let n = rounds.len().max(1) as f64;
    c.map(|x| x as f64 / n)
}

pub fn reason_label(r: RoundEndReason) -> &'static str {
    match r {
        RoundEndReason::EliminationOfT => "EliminationOfT",
        RoundEndReason::EliminationOfCT => "EliminationOfCT",
        RoundEndReason::BombDefused => "BombDefused",
        RoundEndReason::BombExploded => "BombExploded",
        RoundEndReason::TargetSaved => "TargetSaved",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BombEvent, BombSite, BombState, Damage, Effect, GrenadeThrow, GrenadeType, Kill, Phase, PlayerFlags,
        PlayerState, TeamState, Timed, Weapon, WeaponFire,
    };

    fn v(x: f32, y: f32) -> Vec3 {
        Vec3::new(x, y, 0.0)
    }

    #[test]
    fn no_rounds_no_lines() {
        assert!(player_stats(&[], &[]).is_empty());
    }

    #[test]
    fn singleton_kill_and_damage() {
        let mut r = GameRound::empty();
        r.damages.push(Timed {
            tick: 1,
            event: Damage {
                attacker_id: 1,
                victim_id: 2,
                attacker_pos: v(0.0, 0.0),
                victim_pos: v(1.0, 1.0),
                hp_damage: 100,
                weapon: Weapon(1),
            },
        });
        r.kills.push(Timed {
            tick: 1,
            event: Kill {
                attacker_id: 1,
                victim_id: 2,
                attacker_pos: v(0.0, 0.0),
                victim_pos: v(1.0, 1.0),
                weapon: Weapon(1),
                headshot: false,
            },
        });
        let lines = player_stats(&[r], &[]);
        assert_eq!(lines.len(), 2);
        let (a, b) = (&lines[0], &lines[1]);
        assert_eq!((a.player_id, a.kills, a.damage, a.adr), (1, 1, 100, 100.0));
        assert_eq!((b.player_id, b.deaths, b.kills), (2, 1, 0));
    }

    #[test]
    fn merge_is_order_free() {
        let mut r1 = GameRound::empty();
        r1.ct_players = vec![1];
        r1.grenades.push(Timed {
            tick: 0,
            event: GrenadeThrow {
                player_id: 1,
                grenade_type: GrenadeType::Flashbang,
                throw_pos: Vec3::ZERO,
                land_pos: Vec3::ZERO,
            },
        });
        let mut r2 = GameRound::empty();
        r2.t_players = vec![6];
        r2.bomb_events.push(Timed {
            tick: 0,
            event: BombEvent {
                kind: BombEventKind::Plant,
                player_id: Some(6),
                site: Some(BombSite::A),
                pos: Some(Vec3::ZERO),
            },
        });
        let mut a = StatAccumulator::new();
        a.add_round(&r1);
        let mut b = StatAccumulator::new();
        b.add_round(&r2);
        let ab = a.clone().merge(b.clone()).finish(&[]);
        let ba = b.merge(a).finish(&[]);
        assert_eq!(ab, ba);
        assert_eq!(ab[0].flashes_thrown, 1);
        assert_eq!(ab[1].bomb_plants, 1);
    }

    #[test]
    fn uniform_mix_with_one_event_each() {
        let mut r = GameRound::empty();
        r.damages.push(Timed {
            tick: 0,
            event: Damage {
                attacker_id: 1,
                victim_id: 2,
                attacker_pos: Vec3::ZERO,
                victim_pos: Vec3::ZERO,
                hp_damage: 5,
                weapon: Weapon(1),
            },
        });
        r.kills.push(Timed {
            tick: 0,
            event: Kill {
                attacker_id: 1,
                victim_id: 2,
                attacker_pos: Vec3::ZERO,
                victim_pos: Vec3::ZERO,
                weapon: Weapon(1),
                headshot: true,
            },
        });
        r.flashes.push(Timed {
            tick: 0,
            event: crate::model::Flash { attacker_id: 1, victim_id: 2, flash_duration_secs: 1.0 },
        });
        r.bomb_events.push(Timed {
            tick: 0,
            event: BombEvent { kind: BombEventKind::Explode, player_id: None, site: None, pos: None },
        });
        r.grenades.push(Timed {
            tick: 0,
            event: GrenadeThrow {
                player_id: 1,
                grenade_type: GrenadeType::HE,
                throw_pos: Vec3::ZERO,
                land_pos: Vec3::ZERO,
            },
        });
        r.weapon_fires.push(Timed { tick: 0, event: WeaponFire { player_id: 1, pos: Vec3::ZERO, weapon: Weapon(1) } });
        let mut doc = DemoDocument::empty();
        doc.game_rounds.push(r);
        let s = corpus_summary(&[doc]).unwrap();
        for share in s.action_mix {
            assert!((share - 1.0 / 6.0).abs() < 1e-12);
        }
        assert_eq!(s.actions_per_round, 6.0);
        assert_eq!(corpus_summary(&[]), Err(AnalyticsError::EmptyCorpus));
    }

    #[test]
    fn heatmap_binning() {
        let mut g = HeatmapGrid::new(Bounds::DEFAULT, 10, 10).unwrap();
        assert_eq!(g.total(), 0);
        g.add(0.0, 0.0);
        assert_eq!(g.get(5, 5), 1);
        g.add(2000.0, 2000.0);
        assert_eq!(g.get(9, 9), 1);
        g.add(2000.5, 0.0);
        assert_eq!((g.total(), g.out_of_bounds), (2, 1));
        assert_eq!(HeatmapGrid::new(Bounds::DEFAULT, 0, 3), Err(AnalyticsError::InvalidGrid));
    }

    #[test]
    fn heatmap_rejects_bad_selectors() {
        assert_eq!("smoke".parse::<ActionKind>(), Err(AnalyticsError::UnknownActionType("smoke".into())));
        let err = action_heatmap(&[], ActionKind::Flash, CoordSelector::Actor, Bounds::DEFAULT, 4, 4).unwrap_err();
        assert!(matches!(err, AnalyticsError::UnsupportedSelector { .. }));
        let empty = action_heatmap(&[], ActionKind::WeaponFire, CoordSelector::Actor, Bounds::DEFAULT, 4, 4).unwrap();
        assert!(empty.counts.iter().all(|&c| c == 0));
    }

    fn player(id: u8, side: Side, hp: u8) -> PlayerState {
        PlayerState {
            player_id: id,
            side,
            pos: v(f32::from(id) * 100.0 - 500.0, 50.0),
            vel: Vec3::ZERO,
            view_yaw: f32::from(id) * 30.0,
            view_pitch: 0.0,
            hp,
            armor: 0,
            money: 0,
            eq_val: 1000,
            active_weapon: Weapon(1),
            ping: 10,
            flags: PlayerFlags { alive: hp > 0, ..Default::default() },
            grenades_remaining: 0,
        }
    }

    pub(crate) fn frame(planted: bool) -> Frame {
        let ct = (1..=5).map(|i| player(i, Side::CT, 100)).collect();
        let t = (6..=10).map(|i| player(i, Side::T, 20 * (i - 5))).collect();
        Frame {
            tick: 640,
            phase: if planted { Phase::BombPlanted } else { Phase::Default },
            clock_secs: 30.0,
            seconds_in_phase: 10.0,
            bomb: if planted {
                BombState {
                    carrier_id: None,
                    planted_site: Some(BombSite::A),
                    plant_tick: Some(600),
                    pos: Some(v(1200.0, -1200.0)),
                }
            } else {
                BombState::default()
            },
            fires: if planted { vec![Effect { pos: v(0.0, 0.0), expiry_tick: 700 }] } else { vec![] },
            smokes: if planted { vec![Effect { pos: v(100.0, 0.0), expiry_tick: 900 }] } else { vec![] },
            ct: TeamState::new(Side::CT, ct).unwrap(),
            t: TeamState::new(Side::T, t).unwrap(),
        }
    }

    #[test]
    fn frame_svg_counts() {
        let s = render_frame_svg(&frame(false), "de_test");
        assert_eq!(s.matches("class=\"player ").count(), 10);
        assert_eq!(s.matches("class=\"hp-bar\"").count(), 10);
        assert_eq!(s.matches("class=\"view\"").count(), 10);
        assert_eq!(s.matches("<polygon").count(), 0);
        assert_eq!(s.matches(CT_COLOR).count(), 5);

        let s = render_frame_svg(&frame(true), "de_test");
        assert_eq!(s.matches("<polygon class=\"bomb\"").count(), 1);
        assert_eq!(s.matches("fill=\"#FF0000\"").count(), 1);
        assert_eq!(s.matches("fill=\"#808080\"").count(), 1);
        assert_eq!(s, render_frame_svg(&frame(true), "de_test"));
    }

    #[test]
    fn line_chart_is_deterministic() {
        let ser = [Series { label: "m".into(), points: vec![(0.0, 0.2), (1.0, 0.8)] }];
        let a = render_line_chart_svg("t", "tick", &ser, false);
        assert_eq!(a, render_line_chart_svg("t", "tick", &ser, false));
        assert_eq!(a.matches("<polyline").count(), 1);
    }
}
