//! Interference layer rendering, one model per jammer family.
//!
//! All layers are linear excess power relative to the mean floor power,
//! row-major by channel, and confined to the declared band except for the
//! switching splatter of pulsed jammers.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{InterferenceType, JammerSpec, CELLS, CHANNELS, TIME_BINS};

const HOP_DWELL_BINS: usize = 4;
/// One hop slot per dwell, so a snapshot visits every slot once.
const HOP_SLOTS: usize = TIME_BINS.div_ceil(HOP_DWELL_BINS);
const PULSE_RUN_BINS: usize = 3;
/// Switching splatter next to the band edges, relative to the in-band
/// level, at pulse edges only.
const PULSE_SPLATTER: f64 = 0.1;
/// Channels over which the splatter falls off by a factor of four.
const PULSE_SKIRT_CHANNELS: f64 = 8.0;
/// Splatter reaches this many channels past each band edge.
const PULSE_SKIRT_REACH: usize = 64;
/// Spread (dB) of the per-cell level of a noise jammer below its envelope.
const NOISE_JAMMER_SPREAD_DB: f64 = 1.5;
/// Standard deviation of the noise jammer's Gaussian spectral envelope, as
/// a fraction of the band.
const NOISE_ENVELOPE_SIGMA: f64 = 1.0 / 6.0;

struct Layer {
    cells: Vec<f64>,
}

impl Layer {
    fn new() -> Self {
        Layer {
            cells: vec![0.0; CELLS],
        }
    }

    fn set_max(&mut self, channel: usize, bin: usize, value: f64) {
        let cell = &mut self.cells[channel * TIME_BINS + bin];
        *cell = cell.max(value);
    }

    /// Fills the real-valued channel interval `[lo, hi)` at one bin, weighting
    /// partially covered channels by their covered fraction.
    fn fill_interval(&mut self, lo: f64, hi: f64, bin: usize, level: f64) {
        let first = lo.floor().max(0.0) as usize;
        let last = (hi.ceil() as usize).min(CHANNELS);
        for channel in first..last {
            let c = channel as f64;
            let covered = hi.min(c + 1.0) - lo.max(c);
            if covered > 0.0 {
                self.set_max(channel, bin, level * covered.min(1.0));
            }
        }
    }

    fn fill_channels(&mut self, channels: std::ops::Range<usize>, bins: std::ops::Range<usize>, level: f64) {
        for channel in channels {
            for bin in bins.clone() {
                self.set_max(channel, bin, level);
            }
        }
    }
}

pub(super) fn render(spec: &JammerSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut layer = Layer::new();
    if !spec.intf_type.is_jammer() {
        return layer.cells;
    }
    let band = spec.band();
    let width = band.len();
    let lo = band.start as f64;
    let peak = spec.peak_power();
    let all_bins = 0..TIME_BINS;

    match spec.intf_type {
        InterferenceType::None => {}
        InterferenceType::Chirp => {
            // A quarter-band instantaneous occupancy sweeps linearly across
            // the band, up or down depending on the seed.
            let inst = (width as f64 / 4.0).max(1.0);
            let travel = width as f64 - inst;
            let rising = rng.random::<bool>();
            for bin in all_bins {
                let frac = bin as f64 / (TIME_BINS - 1) as f64;
                let frac = if rising { frac } else { 1.0 - frac };
                let start = lo + travel * frac;
                layer.fill_interval(start, start + inst, bin, peak);
            }
        }
        InterferenceType::FreqHopper => {
            // The hop set is HOP_SLOTS evenly spaced slots; each snapshot
            // visits them in a seeded random order.
            let hop = ((width as f64 / 20.0).round() as usize).max(1);
            let spacing = width as f64 / HOP_SLOTS as f64;
            let mut order: Vec<usize> = (0..HOP_SLOTS).collect();
            order.shuffle(rng);
            for (dwell, &slot) in order.iter().enumerate() {
                let center = lo + (slot as f64 + 0.5) * spacing;
                let start = (center - hop as f64 / 2.0).round().clamp(lo, (band.end - hop) as f64) as usize;
                let bins = dwell * HOP_DWELL_BINS..((dwell + 1) * HOP_DWELL_BINS).min(TIME_BINS);
                layer.fill_channels(start..start + hop, bins, peak);
            }
        }
        InterferenceType::Modulated => {
            // Carrier plus two sidebands at +-band/4, 3 dB down.
            let line = (width as f64 / 16.0).round().max(1.0);
            let center = lo + width as f64 / 2.0;
            let offset = width as f64 / 4.0;
            for (position, level) in [
                (center, peak),
                (center - offset, peak / 2.0),
                (center + offset, peak / 2.0),
            ] {
                let start = (position - line / 2.0).round().clamp(lo, band.end as f64 - line);
                let start = start as usize;
                layer.fill_channels(start..start + line as usize, all_bins.clone(), level);
            }
        }
        InterferenceType::Multitone => {
            for tone in 0..4 {
                let position = lo + (tone as f64 + 0.5) * width as f64 / 4.0;
                let channel = (position.floor() as usize).min(band.end - 1);
                layer.fill_channels(channel..channel + 1, all_bins.clone(), peak);
            }
        }
        InterferenceType::Pulsed => {
            for bin in all_bins {
                if (bin / PULSE_RUN_BINS) % 2 != 0 {
                    continue;
                }
                layer.fill_channels(band.clone(), bin..bin + 1, peak);
                let edge = bin % PULSE_RUN_BINS == 0
                    || bin % PULSE_RUN_BINS == PULSE_RUN_BINS - 1
                    || bin == TIME_BINS - 1;
                if edge {
                    let below = band.start.saturating_sub(PULSE_SKIRT_REACH)..band.start;
                    let above = band.end..(band.end + PULSE_SKIRT_REACH).min(CHANNELS);
                    for channel in below.chain(above) {
                        let distance = if channel < band.start {
                            band.start - channel
                        } else {
                            channel + 1 - band.end
                        } as f64;
                        let skirt = PULSE_SPLATTER / (1.0 + distance / PULSE_SKIRT_CHANNELS).powi(2);
                        layer.set_max(channel, bin, peak * skirt);
                    }
                }
            }
        }
        InterferenceType::Noise => {
            let center = lo + width as f64 / 2.0;
            let sigma = width as f64 * NOISE_ENVELOPE_SIGMA;
            for channel in band {
                let x = (channel as f64 + 0.5 - center) / sigma;
                let envelope = peak * (-0.5 * x * x).exp();
                for bin in all_bins.clone() {
                    let z: f64 = StandardNormal.sample(rng);
                    let level = envelope * super::db_to_linear(-NOISE_JAMMER_SPREAD_DB * z.abs());
                    layer.set_max(channel, bin, level);
                }
            }
        }
    }
    layer.cells
}
