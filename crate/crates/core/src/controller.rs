//! The iterative encode → decode → measure loop and its quality profiles.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{FrameStats, SensitivityMap};
use crate::codec::{self, Bitstream, CodecError, CompressionParams};
use crate::frame::{Frame, FrameMetadata};
use crate::grid::Grid;
use crate::metrics::{self, MetricsError, Psnr, QualityScore, SsimParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProfileId {
    C0,
    C1,
    C2,
}

impl ProfileId {
    pub const ALL: [ProfileId; 3] = [ProfileId::C0, ProfileId::C1, ProfileId::C2];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileId::C0 => "C0",
            ProfileId::C1 => "C1",
            ProfileId::C2 => "C2",
        }
    }

    /// Case-insensitive.
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C0" => Some(ProfileId::C0),
            "C1" => Some(ProfileId::C1),
            "C2" => Some(ProfileId::C2),
            _ => None,
        }
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: ProfileId,
    pub ssim_min: f64,
    pub psnr_min_db: f64,
    /// Tiles whose local SSIM falls below this floor get one refinement pass.
    pub local_ssim_min: f64,
    pub max_iterations: u32,
    pub lossless_fallback: bool,
    pub q_bounds: (f64, f64),
    /// Skip the search and emit the reversible stream.
    #[serde(default)]
    pub force_lossless: bool,
}

impl Profile {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("ssim_min", self.ssim_min), ("local_ssim_min", self.local_ssim_min)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{}: {name} {v} outside [0, 1]", self.id));
            }
        }
        if !self.psnr_min_db.is_finite() || self.psnr_min_db < 0.0 {
            return Err(format!("{}: psnr_min_db must be a non-negative number", self.id));
        }
        if self.max_iterations == 0 {
            return Err(format!("{}: max_iterations must be at least 1", self.id));
        }
        let (lo, hi) = self.q_bounds;
        if !(0.0 <= lo && lo <= hi && hi <= 100.0) {
            return Err(format!("{}: q_bounds ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 100", self.id));
        }
        Ok(())
    }

    /// Global thresholds only; the local floor steers refinement.
    pub fn is_met_by(&self, score: &QualityScore) -> bool {
        score.ssim >= self.ssim_min && score.psnr.meets(self.psnr_min_db)
    }
}

pub fn default_profiles() -> ProfileTable {
    let p = |id, ssim_min, psnr_min_db, local_ssim_min, max_iterations, q_lo| Profile {
        id,
        ssim_min,
        psnr_min_db,
        local_ssim_min,
        max_iterations,
        lossless_fallback: true,
        q_bounds: (q_lo, 100.0),
        force_lossless: false,
    };
    ProfileTable(BTreeMap::from([
        (ProfileId::C0, p(ProfileId::C0, 0.99, 41.0, 0.97, 8, 64.0)),
        (ProfileId::C1, p(ProfileId::C1, 0.95, 39.0, 0.90, 12, 68.0)),
        (ProfileId::C2, p(ProfileId::C2, 0.90, 33.0, 0.82, 12, 79.0)),
    ]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable(BTreeMap<ProfileId, Profile>);

impl Default for ProfileTable {
    fn default() -> Self {
        default_profiles()
    }
}

impl ProfileTable {
    pub fn get(&self, id: ProfileId) -> &Profile {
        &self.0[&id]
    }

    pub fn get_mut(&mut self, id: ProfileId) -> &mut Profile {
        self.0.get_mut(&id).expect("table holds every profile id")
    }

    pub fn iter(&self) -> impl Iterator<Item = &Profile> {
        self.0.values()
    }
}

/// User choice wins; otherwise banding risk or a black-and-white flag picks
/// C0 and everything else C1. C2 is never chosen automatically.
pub fn select_profile(
    metadata: &FrameMetadata,
    stats: &FrameStats,
    user_choice: Option<ProfileId>,
    table: &ProfileTable,
) -> Profile {
    let id = user_choice.unwrap_or(if stats.banding_risk || metadata.is_bw() { ProfileId::C0 } else { ProfileId::C1 });
    table.get(id).clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    RaiseQ,
    LowerQ,
    TileRefine,
    Accept,
    FallbackLossless,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::RaiseQ => "RAISE_Q",
            Action::LowerQ => "LOWER_Q",
            Action::TileRefine => "TILE_REFINE",
            Action::Accept => "ACCEPT",
            Action::FallbackLossless => "FALLBACK_LOSSLESS",
        }
    }
}

/// One row of the trace. Every row except a closing `ACCEPT` is a measured
/// encode/decode cycle; `ACCEPT` repeats the metrics of the chosen cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: u32,
    pub q: f64,
    pub ssim: f64,
    pub psnr_db: Psnr,
    pub size_bytes: u64,
    pub action: Action,
    /// Search interval `(passing, failing)` after a bisection step.
    pub bracket: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub entries: Vec<TraceEntry>,
    /// Encode/decode/measure cycles run, including ones whose result was
    /// accepted without a separate row.
    pub cycles: u32,
}

impl IterationTrace {
    pub fn cycles(&self) -> u32 {
        self.cycles
    }

    pub fn last_action(&self) -> Option<Action> {
        self.entries.last().map(|e| e.action)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub stream: Bitstream,
    pub score: QualityScore,
    pub trace: IterationTrace,
    pub q: f64,
    pub lossless: bool,
}

impl Outcome {
    pub fn accepted(&self) -> bool {
        self.trace.last_action() == Some(Action::Accept)
    }

    pub fn fell_back(&self) -> bool {
        self.trace.last_action() == Some(Action::FallbackLossless)
    }
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("sensitivity map does not match the frame's tile grid")]
    MapMismatch,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("profile thresholds unattainable (best ssim {:.6}, psnr {} dB)", .0.score.ssim, .0.score.psnr)]
    Unattainable(Box<Outcome>),
}

/// Bisection stops once the bracket is this narrow (in q units).
pub const Q_TOLERANCE: f64 = 1.0;

/// Step multiplier applied to tiles below the local SSIM floor.
pub const REFINE_MODULATION: f64 = 0.5;

/// Seed for the search: `q_hi − 30·contrast − 2·min(sigma, 10)`, clamped.
pub fn seed_q(profile: &Profile, stats: &FrameStats) -> f64 {
    let (lo, hi) = profile.q_bounds;
    (hi - 30.0 * stats.contrast_index - 2.0 * stats.noise_sigma.min(10.0)).clamp(lo, hi)
}

struct Candidate {
    q: f64,
    stream: Bitstream,
    score: QualityScore,
}

struct Search<'a> {
    frame: &'a Frame,
    map: &'a SensitivityMap,
    params: SsimParams,
    cycles: u32,
    trace: IterationTrace,
}

impl Search<'_> {
    fn measure(&mut self, q: f64, modulation: Option<Grid<f64>>) -> Result<Candidate, ControllerError> {
        let mut params = CompressionParams::new(q);
        params.tile_modulation = modulation;
        let stream = codec::encode(self.frame, &params, (q > 0.0).then_some(self.map))?;
        let decoded = codec::decode(stream.as_bytes())?;
        let score = metrics::ssim(self.frame, &decoded, &self.params)?;
        self.cycles += 1;
        self.trace.cycles = self.cycles;
        Ok(Candidate { q, stream, score })
    }

    fn record(&mut self, c: &Candidate, action: Action, bracket: Option<(f64, f64)>) {
        self.trace.entries.push(TraceEntry {
            iteration: self.trace.entries.len() as u32 + 1,
            q: c.q,
            ssim: c.score.ssim,
            psnr_db: c.score.psnr,
            size_bytes: c.stream.len() as u64,
            action,
            bracket,
        });
    }

    fn finish(self, c: Candidate, lossless: bool) -> Outcome {
        Outcome { stream: c.stream, score: c.score, trace: self.trace, q: c.q, lossless }
    }
}

/// Finds the largest q in the profile's bounds whose decoded output meets
/// the profile, refines weak tiles once, and falls back to the reversible
/// stream when nothing in bounds passes.
pub fn compress_to_target(
    frame: &Frame,
    profile: &Profile,
    stats: &FrameStats,
    map: &SensitivityMap,
) -> Result<Outcome, ControllerError> {
    profile.validate().map_err(ControllerError::InvalidProfile)?;
    if !map.matches(frame) || map.tile_size != codec::TILE_SIZE {
        return Err(ControllerError::MapMismatch);
    }
    let mut s = Search { frame, map, params: SsimParams::default(), cycles: 0, trace: IterationTrace::default() };

    if profile.force_lossless {
        let c = s.measure(0.0, None)?;
        s.record(&c, Action::Accept, None);
        return Ok(s.finish(c, true));
    }

    let max = profile.max_iterations;
    let fallback_reserve = u32::from(profile.lossless_fallback);
    // Cycles left for searching and refining.
    let search_budget = |s: &Search| max.saturating_sub(s.cycles + fallback_reserve);
    let (q_lo, q_hi) = profile.q_bounds;
    let mut best: Option<Candidate> = None;
    let mut closest: Option<Candidate> = None;

    // Phase 1: probe q_hi, then the seed, then bisect between the largest
    // passing and smallest failing q.
    if search_budget(&s) > 0 {
        let top = s.measure(q_hi, None)?;
        if profile.is_met_by(&top.score) {
            best = Some(top);
        } else {
            s.record(&top, Action::LowerQ, None);
            closest = Some(top);
        }
    }
    if best.is_none() && q_lo < q_hi && search_budget(&s) > 0 {
        let mut failing = q_hi;
        let mut passing: Option<f64> = None;
        let seed = seed_q(profile, stats);
        let mut next = if seed < q_hi { seed } else { (q_lo + q_hi) / 2.0 };
        loop {
            let c = s.measure(next, None)?;
            let ok = profile.is_met_by(&c.score);
            if ok {
                passing = Some(next);
            } else {
                failing = next;
            }
            let lower = passing.unwrap_or(q_lo);
            let action = if ok { Action::RaiseQ } else { Action::LowerQ };
            s.record(&c, action, Some((lower, failing)));
            if ok {
                best = Some(c);
            } else if closest.as_ref().is_none_or(|b| c.score.ssim > b.score.ssim) {
                closest = Some(c);
            }
            if passing.is_none() && next <= q_lo {
                break;
            }
            // Keep one cycle for refinement once something passes.
            let reserve = u32::from(passing.is_some());
            if search_budget(&s) <= reserve {
                break;
            }
            if failing - lower <= Q_TOLERANCE {
                if passing.is_some() {
                    break;
                }
                // Nothing passed yet: the remaining candidate is q_lo itself.
                next = q_lo;
            } else if passing.is_none() && search_budget(&s) == 1 {
                // Last probe: settle whether anything in bounds can pass.
                next = q_lo;
            } else {
                next = (lower + failing) / 2.0;
            }
        }
    }

    if let Some(mut chosen) = best {
        // Phase 2: halve the step on tiles below the local floor, once.
        let weak: Vec<bool> = chosen
            .score
            .local_ssim_map
            .values
            .iter()
            .map(|v| v.is_some_and(|v| v < profile.local_ssim_min))
            .collect();
        if weak.iter().any(|&w| w) && search_budget(&s) > 0 && chosen.q > 0.0 {
            let grid = &chosen.score.local_ssim_map;
            let modulation = Grid {
                cols: grid.cols,
                rows: grid.rows,
                values: weak.iter().map(|&w| if w { REFINE_MODULATION } else { 1.0 }).collect(),
            };
            let refined = s.measure(chosen.q, Some(modulation))?;
            s.record(&refined, Action::TileRefine, None);
            if profile.is_met_by(&refined.score) {
                chosen = refined;
            }
        }
        s.record(&chosen, Action::Accept, None);
        return Ok(s.finish(chosen, false));
    }

    // Phase 3.
    if profile.lossless_fallback {
        let c = s.measure(0.0, None)?;
        s.record(&c, Action::FallbackLossless, None);
        return Ok(s.finish(c, true));
    }
    let c = match closest {
        Some(c) => c,
        None => s.measure(q_hi, None)?,
    };
    Err(ControllerError::Unattainable(Box::new(s.finish(c, false))))
}
