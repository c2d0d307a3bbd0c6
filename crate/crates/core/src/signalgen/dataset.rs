//! Labeled dataset generation and the on-disk dataset layout.
//!
//! ```text
//! <root>/manifest.json
//! <root>/snapshots/<id>.gsnp
//! <root>/snapshots/<id>.json
//! ```
//!
//! Entry `i` (classes in canonical order) gets seed and id `base_seed + i`;
//! its bandwidth, power and scenario are drawn from the grids by an RNG
//! keyed on that seed, so every entry is reproducible on its own.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_snapshot, read_snapshot, validate_scenario, write_snapshot, InterferenceType, JammerSpec, Snapshot};
use crate::error::io_at;
use crate::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
const PARAM_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub counts: BTreeMap<InterferenceType, usize>,
    pub bandwidths: Vec<f64>,
    pub powers: Vec<f64>,
    pub scenarios: Vec<u8>,
    pub base_seed: u64,
}

impl DatasetConfig {
    pub const DEFAULT_BANDWIDTHS: [f64; 6] = [2.0, 5.0, 10.0, 20.0, 40.0, 60.0];
    pub const DEFAULT_POWERS: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];
    pub const DEFAULT_SCENARIOS: [u8; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

    /// `per_class` entries for each of the seven classes over the default grids.
    pub fn uniform(per_class: usize, base_seed: u64) -> Self {
        DatasetConfig {
            counts: InterferenceType::ALL.iter().map(|&t| (t, per_class)).collect(),
            bandwidths: Self::DEFAULT_BANDWIDTHS.to_vec(),
            powers: Self::DEFAULT_POWERS.to_vec(),
            scenarios: Self::DEFAULT_SCENARIOS.to_vec(),
            base_seed,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let needs_jammer_grid = self
            .counts
            .iter()
            .any(|(t, &n)| t.is_jammer() && n > 0);
        if self.total() > 0 && self.scenarios.is_empty() {
            return Err(Error::param("scenarios", "grid is empty"));
        }
        for &s in &self.scenarios {
            validate_scenario(s)?;
        }
        if needs_jammer_grid {
            if self.bandwidths.is_empty() {
                return Err(Error::param("bandwidths", "grid is empty"));
            }
            if self.powers.is_empty() {
                return Err(Error::param("powers", "grid is empty"));
            }
            for &bandwidth in &self.bandwidths {
                JammerSpec::new(InterferenceType::Chirp, bandwidth, 0.0, 1, 0)?;
            }
            for &power in &self.powers {
                JammerSpec::new(InterferenceType::Chirp, 1.0, power, 1, 0)?;
            }
        }
        Ok(())
    }

    /// The labeled specs this configuration expands to, in entry order.
    pub fn specs(&self) -> Result<Vec<JammerSpec>> {
        self.validate()?;
        let mut specs = Vec::with_capacity(self.total());
        for ty in InterferenceType::ALL {
            let count = self.counts.get(&ty).copied().unwrap_or(0);
            for _ in 0..count {
                let seed = self.base_seed.wrapping_add(specs.len() as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(PARAM_STREAM);
                let scenario = *self.scenarios.choose(&mut rng).expect("validated non-empty");
                let spec = if ty.is_jammer() {
                    let bandwidth = *self.bandwidths.choose(&mut rng).expect("validated non-empty");
                    let power = *self.powers.choose(&mut rng).expect("validated non-empty");
                    JammerSpec::new(ty, bandwidth, power, scenario, seed)?
                } else {
                    JammerSpec::clean(scenario, seed)?
                };
                specs.push(spec);
            }
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub spec: JammerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub entries: Vec<ManifestEntry>,
    pub counts: BTreeMap<InterferenceType, usize>,
}

impl DatasetManifest {
    pub fn from_specs(specs: &[JammerSpec]) -> Self {
        let mut counts = BTreeMap::new();
        for spec in specs {
            *counts.entry(spec.intf_type).or_insert(0) += 1;
        }
        DatasetManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            entries: specs
                .iter()
                .map(|&spec| ManifestEntry { id: spec.seed, spec })
                .collect(),
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Contract(format!(
                "unsupported manifest format_version {}",
                self.format_version
            )));
        }
        let declared: usize = self.counts.values().sum();
        if declared != self.entries.len() {
            return Err(Error::Contract(format!(
                "manifest declares {declared} entries in its class counts but lists {}",
                self.entries.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        let mut tally: BTreeMap<InterferenceType, usize> = BTreeMap::new();
        for entry in &self.entries {
            if !seen.insert(entry.id) {
                return Err(Error::DuplicateId(entry.id));
            }
            entry.spec.validate()?;
            *tally.entry(entry.spec.intf_type).or_insert(0) += 1;
        }
        let declared: BTreeMap<_, _> = self.counts.iter().filter(|(_, &n)| n > 0).map(|(&t, &n)| (t, n)).collect();
        if tally != declared {
            return Err(Error::Contract("per-class counts disagree with entries".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(io_at(path))?;
        let manifest: DatasetManifest = serde_json::from_slice(&raw)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(io_at(path))
    }
}

/// Synthesizes every entry of `config` in memory, in entry order.
pub fn generate_snapshots(config: &DatasetConfig) -> Result<Vec<Snapshot>> {
    config.specs()?.par_iter().map(generate_snapshot).collect()
}

/// Writes the dataset described by `config` under `root` and returns its
/// manifest.
pub fn generate_dataset(config: &DatasetConfig, root: &Path) -> Result<DatasetManifest> {
    let specs = config.specs()?;
    let manifest = DatasetManifest::from_specs(&specs);
    let dir = root.join(Dataset::SNAPSHOT_DIR);
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    specs.par_iter().try_for_each(|spec| {
        let snap = generate_snapshot(spec)?;
        write_snapshot(&Dataset::snapshot_path_in(root, snap.id), &snap)
    })?;
    manifest.save(&root.join(Dataset::MANIFEST_FILE))?;
    Ok(manifest)
}

/// A dataset directory opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

impl Dataset {
    pub const MANIFEST_FILE: &'static str = "manifest.json";
    pub const SNAPSHOT_DIR: &'static str = "snapshots";

    pub fn open(root: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(&root.join(Self::MANIFEST_FILE))?;
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn contains(&self, id: u64) -> bool {
        self.manifest.entries.iter().any(|e| e.id == id)
    }

    fn snapshot_path_in(root: &Path, id: u64) -> PathBuf {
        root.join(Self::SNAPSHOT_DIR).join(format!("{id}.gsnp"))
    }

    pub fn snapshot_path(&self, id: u64) -> PathBuf {
        Self::snapshot_path_in(&self.root, id)
    }

    pub fn load(&self, id: u64) -> Result<Snapshot> {
        read_snapshot(&self.snapshot_path(id))
    }

    pub fn load_all(&self) -> Result<Vec<Snapshot>> {
        self.manifest.entries.par_iter().map(|e| self.load(e.id)).collect()
    }
}
