//! Deterministic synthesis of GNSS snapshots in the time-frequency plane.
//!
//! A snapshot is a 1024-channel x 34-bin magnitude map in dB. It is built
//! from two layers:
//!
//! * a noise floor, i.i.d. Gaussian in dB around [`NOISE_FLOOR_DB`], that is
//!   a pure function of the spec's seed, and
//! * an interference layer holding linear excess power relative to the mean
//!   floor power, rendered from the [`JammerSpec`] and then passed through
//!   the multipath channel for the spec's scenario.
//!
//! Cells combine by power: `floor + 10 log10(10^(n/10) + j)`. Cells with no
//! interference carry the noise value unchanged. Because the noise layer is
//! reproducible from the seed, the interference layer can always be
//! recovered from a labeled snapshot (see [`Snapshot::interference_power`]).

mod dataset;
mod file;
mod shapes;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dataset::{
    generate_dataset, generate_snapshots, Dataset, DatasetConfig, DatasetManifest, ManifestEntry,
    MANIFEST_FORMAT_VERSION,
};
pub use file::{read_snapshot, snapshot_from_bytes, snapshot_to_bytes, write_snapshot, SNAPSHOT_FORMAT_VERSION};

pub const CHANNELS: usize = 1024;
pub const TIME_BINS: usize = 34;
pub const CELLS: usize = CHANNELS * TIME_BINS;

/// Span covered by the 1024 channels, in MHz.
pub const SPAN_MHZ: f64 = 100.0;
pub const NOISE_FLOOR_DB: f64 = -100.0;
pub const NOISE_SIGMA_DB: f64 = 2.0;
/// Noise deviations are truncated at +-2.5 sigma so clean snapshots stay
/// below `floor + 6 dB`.
pub const NOISE_CLIP_DB: f64 = 5.0;
/// Interference peak sits this far above the floor at power 0.
pub const INTERFERENCE_HEADROOM_DB: f64 = 20.0;

pub const BANDWIDTH_RANGE: (f64, f64) = (0.1, 60.0);
pub const POWER_RANGE: (f64, f64) = (-10.0, 10.0);
pub const SCENARIO_RANGE: (u8, u8) = (1, 8);

pub const ECHO_DELAY_BINS: usize = 2;
pub const ECHO_GAIN: f64 = 0.3;
const ATTENUATION_STEP: f64 = 0.08;

/// Excess below this fraction of the local noise power is treated as noise
/// when recovering the interference layer (absorbs f32 storage rounding).
const RECOVERY_THRESHOLD: f64 = 1e-5;

const NOISE_STREAM: u64 = 0;
const SHAPE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InterferenceType {
    None,
    Chirp,
    FreqHopper,
    Modulated,
    Multitone,
    Pulsed,
    Noise,
}

impl InterferenceType {
    pub const ALL: [InterferenceType; 7] = [
        InterferenceType::None,
        InterferenceType::Chirp,
        InterferenceType::FreqHopper,
        InterferenceType::Modulated,
        InterferenceType::Multitone,
        InterferenceType::Pulsed,
        InterferenceType::Noise,
    ];

    pub const JAMMERS: [InterferenceType; 6] = [
        InterferenceType::Chirp,
        InterferenceType::FreqHopper,
        InterferenceType::Modulated,
        InterferenceType::Multitone,
        InterferenceType::Pulsed,
        InterferenceType::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InterferenceType::None => "None",
            InterferenceType::Chirp => "Chirp",
            InterferenceType::FreqHopper => "FreqHopper",
            InterferenceType::Modulated => "Modulated",
            InterferenceType::Multitone => "Multitone",
            InterferenceType::Pulsed => "Pulsed",
            InterferenceType::Noise => "Noise",
        }
    }

    /// Lower-case prose name used in generated descriptions.
    pub fn prose(self) -> &'static str {
        match self {
            InterferenceType::None => "no interference",
            InterferenceType::Chirp => "chirp",
            InterferenceType::FreqHopper => "frequency hopper",
            InterferenceType::Modulated => "modulated",
            InterferenceType::Multitone => "multitone",
            InterferenceType::Pulsed => "pulsed",
            InterferenceType::Noise => "noise",
        }
    }

    pub fn is_jammer(self) -> bool {
        self != InterferenceType::None
    }
}

impl fmt::Display for InterferenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterferenceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lowered = s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "");
        let ty = match lowered.as_str() {
            "none" | "clean" => InterferenceType::None,
            "chirp" => InterferenceType::Chirp,
            "freqhopper" | "frequencyhopper" => InterferenceType::FreqHopper,
            "modulated" => InterferenceType::Modulated,
            "multitone" => InterferenceType::Multitone,
            "pulsed" => InterferenceType::Pulsed,
            "noise" => InterferenceType::Noise,
            _ => return Err(Error::param("intf_type", format!("unknown interference type {s:?}"))),
        };
        Ok(ty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BandwidthBucket {
    /// [0.1, 2]
    Narrow,
    /// (2, 20]
    Medium,
    /// (20, 60]
    Wide,
}

impl BandwidthBucket {
    pub fn of(bandwidth: f64) -> Self {
        if bandwidth <= 2.0 {
            BandwidthBucket::Narrow
        } else if bandwidth <= 20.0 {
            BandwidthBucket::Medium
        } else {
            BandwidthBucket::Wide
        }
    }

    fn name(self) -> &'static str {
        match self {
            BandwidthBucket::Narrow => "narrow",
            BandwidthBucket::Medium => "medium",
            BandwidthBucket::Wide => "wide",
        }
    }
}

/// Finer label beneath the interference type: type x bandwidth bucket,
/// 18 jammer classes plus the clean class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subjammer {
    pub intf_type: InterferenceType,
    pub bucket: Option<BandwidthBucket>,
}

impl fmt::Display for Subjammer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bucket {
            Some(bucket) => write!(f, "{}/{}", self.intf_type, bucket.name()),
            None => write!(f, "{}", self.intf_type),
        }
    }
}

impl FromStr for Subjammer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (ty, bucket) = match s.split_once('/') {
            Some((ty, bucket)) => (ty, Some(bucket)),
            None => (s, None),
        };
        let intf_type: InterferenceType = ty.parse()?;
        let bucket = match bucket.map(str::trim) {
            None => None,
            Some("narrow") => Some(BandwidthBucket::Narrow),
            Some("medium") => Some(BandwidthBucket::Medium),
            Some("wide") => Some(BandwidthBucket::Wide),
            Some(other) => {
                return Err(Error::param("subjammer", format!("unknown bandwidth bucket {other:?}")))
            }
        };
        if intf_type.is_jammer() != bucket.is_some() {
            return Err(Error::param("subjammer", format!("malformed subjammer label {s:?}")));
        }
        Ok(Subjammer { intf_type, bucket })
    }
}

impl Serialize for Subjammer {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subjammer {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Generator input and dataset label record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JammerSpec {
    pub intf_type: InterferenceType,
    /// MHz over the 100 MHz span; ignored for the clean class.
    pub bandwidth: f64,
    /// dB relative to the nominal interference level; ignored for the clean class.
    pub power: f64,
    pub scenario: u8,
    pub seed: u64,
}

impl JammerSpec {
    pub fn new(
        intf_type: InterferenceType,
        bandwidth: f64,
        power: f64,
        scenario: u8,
        seed: u64,
    ) -> Result<Self> {
        let spec = JammerSpec {
            intf_type,
            bandwidth,
            power,
            scenario,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn clean(scenario: u8, seed: u64) -> Result<Self> {
        Self::new(InterferenceType::None, 0.0, 0.0, scenario, seed)
    }

    pub fn validate(&self) -> Result<()> {
        validate_scenario(self.scenario)?;
        if !self.bandwidth.is_finite() {
            return Err(Error::param("bandwidth", "must be finite"));
        }
        if !self.power.is_finite() {
            return Err(Error::param("power", "must be finite"));
        }
        if self.intf_type.is_jammer() {
            let (lo, hi) = BANDWIDTH_RANGE;
            if !(lo..=hi).contains(&self.bandwidth) {
                return Err(Error::param(
                    "bandwidth",
                    format!("{} outside [{lo}, {hi}]", self.bandwidth),
                ));
            }
            let (lo, hi) = POWER_RANGE;
            if !(lo..=hi).contains(&self.power) {
                return Err(Error::param(
                    "power",
                    format!("{} outside [{lo}, {hi}]", self.power),
                ));
            }
        }
        Ok(())
    }

    pub fn subjammer(&self) -> Subjammer {
        Subjammer {
            intf_type: self.intf_type,
            bucket: self
                .intf_type
                .is_jammer()
                .then(|| BandwidthBucket::of(self.bandwidth)),
        }
    }

    /// Number of channels the declared bandwidth occupies.
    pub fn occupied_channels(&self) -> usize {
        occupied_channels(self.bandwidth)
    }

    /// Channel range of the declared band, centered on the middle channel.
    /// Empty for the clean class.
    pub fn band(&self) -> Range<usize> {
        if !self.intf_type.is_jammer() {
            return 0..0;
        }
        channel_band(self.occupied_channels())
    }

    /// Linear peak interference power relative to the mean floor power.
    pub fn peak_power(&self) -> f64 {
        db_to_linear(INTERFERENCE_HEADROOM_DB + self.power)
    }
}

pub(crate) fn validate_scenario(scenario: u8) -> Result<()> {
    let (lo, hi) = SCENARIO_RANGE;
    if (lo..=hi).contains(&scenario) {
        Ok(())
    } else {
        Err(Error::param("scenario", format!("{scenario} outside [{lo}, {hi}]")))
    }
}

pub fn occupied_channels(bandwidth: f64) -> usize {
    let channels = (bandwidth / SPAN_MHZ * CHANNELS as f64).round();
    (channels as usize).clamp(1, CHANNELS)
}

pub fn channel_band(width: usize) -> Range<usize> {
    let lo = (CHANNELS as f64 / 2.0 - width as f64 / 2.0).round() as usize;
    lo..lo + width
}

/// Multipath amplitude factor for a scenario; 1 for the open environment.
pub fn attenuation(scenario: u8) -> f64 {
    1.0 - ATTENUATION_STEP * (f64::from(scenario) - 1.0)
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// A 1024 x 34 dB magnitude map stored row-major by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub id: u64,
    /// Ground truth; absent for unlabeled snapshots submitted for query.
    pub meta: Option<JammerSpec>,
    data: Vec<f64>,
}

impl Snapshot {
    pub fn new(id: u64, data: Vec<f64>, meta: Option<JammerSpec>) -> Result<Self> {
        if data.len() != CELLS {
            return Err(Error::Dimension {
                expected: CELLS,
                received: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::DataIntegrity(format!(
                "non-finite value at channel {}, bin {}",
                pos / TIME_BINS,
                pos % TIME_BINS
            )));
        }
        if let Some(meta) = &meta {
            meta.validate()?;
        }
        Ok(Snapshot { id, meta, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, channel: usize, bin: usize) -> f64 {
        self.data[channel * TIME_BINS + bin]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.data[channel * TIME_BINS..(channel + 1) * TIME_BINS]
    }

    pub fn max_db(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spec(&self) -> Result<&JammerSpec> {
        self.meta
            .as_ref()
            .ok_or_else(|| Error::State(format!("snapshot {} carries no metadata", self.id)))
    }

    /// Recovers the interference layer (linear excess power relative to the
    /// mean floor power, per cell) by regenerating the seed's noise floor.
    pub fn interference_power(&self) -> Result<Vec<f64>> {
        let spec = self.spec()?;
        let noise = noise_offsets(spec.seed);
        Ok(self
            .data
            .iter()
            .zip(&noise)
            .map(|(&value, &n)| {
                let noise_power = db_to_linear(n);
                let excess = db_to_linear(value - NOISE_FLOOR_DB) - noise_power;
                if excess > RECOVERY_THRESHOLD * noise_power {
                    excess
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Peak of the interference layer in dB, `None` when there is none.
    pub fn peak_interference_db(&self) -> Result<Option<f64>> {
        let peak = self
            .interference_power()?
            .into_iter()
            .fold(0.0f64, f64::max);
        Ok((peak > 0.0).then(|| NOISE_FLOOR_DB + linear_to_db(peak)))
    }
}

/// Noise deviations from the floor, in dB, for every cell. Pure in `seed`.
pub fn noise_offsets(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    let normal = Normal::new(0.0, NOISE_SIGMA_DB).expect("valid sigma");
    (0..CELLS)
        .map(|_| normal.sample(&mut rng).clamp(-NOISE_CLIP_DB, NOISE_CLIP_DB))
        .collect()
}

fn compose(id: u64, meta: JammerSpec, noise: &[f64], interference: &[f64]) -> Snapshot {
    let data = noise
        .iter()
        .zip(interference)
        .map(|(&n, &j)| {
            if j == 0.0 {
                NOISE_FLOOR_DB + n
            } else {
                NOISE_FLOOR_DB + linear_to_db(db_to_linear(n) + j)
            }
        })
        .collect();
    Snapshot {
        id,
        meta: Some(meta),
        data,
    }
}

/// Synthesizes the snapshot for `spec`. The snapshot id is the spec's seed.
pub fn generate_snapshot(spec: &JammerSpec) -> Result<Snapshot> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SHAPE_STREAM);
    let direct = shapes::render(spec, &mut rng);
    let received = multipath_layer(&direct, spec.scenario);
    Ok(compose(spec.seed, *spec, &noise_offsets(spec.seed), &received))
}

/// Passes the interference layer of `snap` through the multipath channel of
/// `scenario`: attenuation by `attenuation(scenario)` plus a single echo
/// delayed by two bins at gain 0.3. Scenario 1 is the identity. The noise
/// floor is left untouched.
pub fn apply_multipath(snap: &Snapshot, scenario: u8) -> Result<Snapshot> {
    validate_scenario(scenario)?;
    if scenario == 1 {
        return Ok(snap.clone());
    }
    let spec = *snap.spec()?;
    let interference = snap.interference_power()?;
    let received = multipath_layer(&interference, scenario);
    let meta = JammerSpec { scenario, ..spec };
    Ok(compose(snap.id, meta, &noise_offsets(spec.seed), &received))
}

fn multipath_layer(direct: &[f64], scenario: u8) -> Vec<f64> {
    if scenario == 1 {
        return direct.to_vec();
    }
    let amp2 = attenuation(scenario).powi(2);
    let echo2 = ECHO_GAIN * ECHO_GAIN;
    let mut out = vec![0.0; direct.len()];
    for (row_out, row_in) in out.chunks_exact_mut(TIME_BINS).zip(direct.chunks_exact(TIME_BINS)) {
        for t in 0..TIME_BINS {
            let echo = if t >= ECHO_DELAY_BINS {
                row_in[t - ECHO_DELAY_BINS]
            } else {
                0.0
            };
            let total = row_in[t] + echo2 * echo;
            row_out[t] = if total == 0.0 { 0.0 } else { amp2 * total };
        }
    }
    out
}
