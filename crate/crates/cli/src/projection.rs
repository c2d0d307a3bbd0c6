//! t-SNE view of dataset embeddings, written as CSV, JSON and SVG.

use std::fs;
use std::path::{Path, PathBuf};

use gnssrag_core::projection::{tsne_labeled, ProjectedPoints, RunReport, TsneParams};
use gnssrag_core::signalgen::{Dataset, InterferenceType};

use crate::error::{AppError, AtStage, Stage};
use crate::indexing::embed_records;
use crate::pipeline::Embedder;

/// Classes shown when none are requested.
pub const DEFAULT_CLASSES: [InterferenceType; 4] = [
    InterferenceType::Chirp,
    InterferenceType::FreqHopper,
    InterferenceType::Pulsed,
    InterferenceType::Noise,
];

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionJob {
    pub classes: Vec<InterferenceType>,
    pub per_class: usize,
    pub params: TsneParams,
}

impl Default for ProjectionJob {
    fn default() -> Self {
        ProjectionJob {
            classes: DEFAULT_CLASSES.to_vec(),
            per_class: 100,
            params: TsneParams::default(),
        }
    }
}

impl ProjectionJob {
    fn note(&self) -> String {
        let names: Vec<&str> = self.classes.iter().map(|c| c.name()).collect();
        let mut note = format!(
            "{} snapshots per class from {}",
            self.per_class,
            names.join(", ")
        );
        if self.classes == DEFAULT_CLASSES {
            note.push_str("; four synthetic interference types stand in for a four-class view whose classes are unnamed");
        }
        note
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOutput {
    pub points: ProjectedPoints,
    pub report: RunReport,
}

/// Embeds the first `per_class` snapshots of every requested class and
/// projects them.
pub fn project_dataset(dataset: &Dataset, embedder: &Embedder, job: &ProjectionJob) -> Result<ProjectionOutput, AppError> {
    if job.classes.is_empty() {
        return Err(AppError::Usage("no classes selected".into()));
    }
    let ids: Vec<u64> = job
        .classes
        .iter()
        .flat_map(|class| {
            dataset
                .manifest()
                .entries
                .iter()
                .filter(move |e| e.spec.intf_type == *class)
                .take(job.per_class)
                .map(|e| e.id)
        })
        .collect();
    let records = embed_records(dataset, &ids, embedder)?;
    let vectors: Vec<&[f32]> = records.iter().map(|r| r.vector.as_slice()).collect();
    let labels = records.iter().map(|r| r.spec.intf_type.name().to_string()).collect();
    let points = tsne_labeled(&vectors, ids, labels, &job.params).at(Stage::Project)?;
    let report = points.report(&job.params, job.note());
    Ok(ProjectionOutput { points, report })
}

/// Writes `tsne.csv`, `tsne.json` and `tsne.svg` under `dir` and returns
/// their paths.
pub fn write_outputs(output: &ProjectionOutput, dir: &Path) -> Result<Vec<PathBuf>, AppError> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let csv_path = dir.join("tsne.csv");
    let file = fs::File::create(&csv_path).map_err(|e| AppError::io(&csv_path, e))?;
    output.points.write_csv(file).at(Stage::Write)?;
    let json_path = dir.join("tsne.json");
    let json = serde_json::to_string_pretty(&output.report).expect("report serializes");
    fs::write(&json_path, json + "\n").map_err(|e| AppError::io(&json_path, e))?;
    let svg_path = dir.join("tsne.svg");
    fs::write(&svg_path, output.points.to_svg()).map_err(|e| AppError::io(&svg_path, e))?;
    Ok(vec![csv_path, json_path, svg_path])
}
