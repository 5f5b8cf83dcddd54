use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    discovery_trajectory_visual, generate_intensity_datasets, monotonicity_score, peak_order,
    project_2d, windowed_intersection, DatasetLabel, DiscoveryCurves, IntensityDatasets,
    IntensityPrompts, PeakOrder, Projection, TrajectorySource, DEFAULT_DATASET_SIZE,
    DEFAULT_MIN_PEAK, DEFAULT_WINDOW,
};
use crate::catalog::PromptBank;
use crate::direction::{build_direction, DirectionVector, SnrOptions, DEFAULT_CLASS_SIZE};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::index::KnnIndex;
use crate::traversal::{drift_series, traverse, TraversalConfig, TraversalPath};
use crate::vector::EmbeddingVector;

/// Which pair of prompts the direction is estimated from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionFrom {
    /// neutral prompt as the neutral set, positive prompt as exemplars
    #[default]
    NeuPos,
    /// negative prompt as the neutral set, neutral prompt as exemplars
    NegNeu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetup {
    pub prompts: IntensityPrompts,
    /// Defaults to the top product retrieved for the negative prompt.
    pub seed_id: Option<String>,
    pub dataset_size: usize,
    pub window: usize,
    pub min_peak: usize,
    pub class_size: usize,
    pub direction_from: DirectionFrom,
    pub snr: SnrOptions,
    pub traversal: TraversalConfig,
}

impl EvalSetup {
    pub fn new(negative: &str, neutral: &str, positive: &str) -> Self {
        Self {
            prompts: IntensityPrompts {
                negative: negative.to_string(),
                neutral: neutral.to_string(),
                positive: positive.to_string(),
            },
            seed_id: None,
            dataset_size: DEFAULT_DATASET_SIZE,
            window: DEFAULT_WINDOW,
            min_peak: DEFAULT_MIN_PEAK,
            class_size: DEFAULT_CLASS_SIZE,
            direction_from: DirectionFrom::default(),
            snr: SnrOptions::default(),
            traversal: TraversalConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub setup: EvalSetup,
    pub seed_id: String,
    pub datasets: IntensityDatasets,
    pub direction: DirectionVector,
    pub path: TraversalPath,
    pub gradrec_trajectory: Vec<String>,
    pub visual_trajectory: Vec<String>,
    pub gradrec_curves: DiscoveryCurves,
    pub visual_curves: DiscoveryCurves,
    pub gradrec_peaks: PeakOrder,
    pub visual_peaks: PeakOrder,
    /// Only with ground-truth intensities.
    pub gradrec_monotonicity: Option<f64>,
    pub visual_monotonicity: Option<f64>,
    pub drift: Vec<f64>,
    /// Rows: negative, neutral then positive dataset; path starts at the seed.
    pub projection: Projection,
}

pub fn run_eval(
    index: &KnnIndex,
    bank: &PromptBank,
    setup: &EvalSetup,
    alpha: Option<&BTreeMap<String, f64>>,
) -> Result<EvalReport> {
    setup.traversal.validate()?;
    let p = &setup.prompts;
    let datasets = generate_intensity_datasets(
        index,
        bank,
        &p.negative,
        &p.neutral,
        &p.positive,
        setup.dataset_size,
    )?;

    let seed_id = match &setup.seed_id {
        Some(s) => s.clone(),
        None => index.retrieve_by_prompt(bank, &p.negative, 1)?[0]
            .product_id
            .clone(),
    };
    let seed_row = index
        .row_of(&seed_id)
        .ok_or_else(|| Error::UnknownSeed(seed_id.clone()))?;

    let (neutral, exemplar) = match setup.direction_from {
        DirectionFrom::NeuPos => (&p.neutral, &p.positive),
        DirectionFrom::NegNeu => (&p.negative, &p.neutral),
    };
    let direction = build_direction(
        index,
        bank,
        neutral,
        exemplar,
        setup.class_size,
        setup.class_size,
        &setup.snr,
    )?;

    let path = traverse(&seed_id, &direction, index, &setup.traversal)?;
    let gradrec_trajectory = path.discovered();
    let visual_trajectory = discovery_trajectory_visual(&seed_id, index, gradrec_trajectory.len())?;

    let gradrec_curves = windowed_intersection(
        &gradrec_trajectory,
        &datasets,
        setup.window,
        TrajectorySource::GradRec,
    )?;
    let visual_curves = windowed_intersection(
        &visual_trajectory,
        &datasets,
        setup.window,
        TrajectorySource::VisualSimilarity,
    )?;
    let gradrec_peaks = peak_order(&gradrec_curves, DatasetLabel::Negative, setup.min_peak)?;
    let visual_peaks = peak_order(&visual_curves, DatasetLabel::Negative, setup.min_peak)?;

    let (gradrec_monotonicity, visual_monotonicity) = match alpha {
        Some(a) => (
            Some(monotonicity_score(&gradrec_trajectory, a)?),
            Some(monotonicity_score(&visual_trajectory, a)?),
        ),
        None => (None, None),
    };

    let catalog = index.catalog();
    let mut points = Vec::new();
    for label in DatasetLabel::ALL {
        for id in datasets.get(label) {
            let row = index.row_of(id).expect("dataset ids come from the index");
            points.push(catalog.products()[row].image_vec.clone());
        }
    }
    let mut path_points = vec![EmbeddingVector::new(index.vector(seed_row).to_vec())?];
    path_points.extend(path.steps.iter().map(|s| s.position.clone()));
    let projection = project_2d(&points, Some(&path_points))?;

    Ok(EvalReport {
        setup: setup.clone(),
        seed_id,
        drift: drift_series(&path),
        datasets,
        direction,
        path,
        gradrec_trajectory,
        visual_trajectory,
        gradrec_curves,
        visual_curves,
        gradrec_peaks,
        visual_peaks,
        gradrec_monotonicity,
        visual_monotonicity,
        projection,
    })
}

impl EvalReport {
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "setup": self.setup,
            "seed_id": self.seed_id,
            "datasets": {
                "size": self.setup.dataset_size,
                "prompts": self.datasets.prompts,
                "overlap": self.datasets.overlap,
            },
            "direction": {
                "provenance": self.direction.provenance,
                "v_c": self.direction.v_c,
            },
            "traversal": {
                "steps": self.path.steps.len(),
                "stop_reason": self.path.stop_reason,
                "discovered": self.gradrec_trajectory.len(),
            },
            "gradrec": {
                "peaks": self.gradrec_peaks,
                "too_short": self.gradrec_curves.too_short,
                "monotonicity": self.gradrec_monotonicity,
            },
            "visual_similarity": {
                "peaks": self.visual_peaks,
                "too_short": self.visual_curves.too_short,
                "monotonicity": self.visual_monotonicity,
            },
            "drift": self.drift,
            "explained_variance": self.projection.explained_variance,
        })
    }
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .and_then(|_| fill(&mut w))
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

/// Writes `curves.csv`, `trajectory.csv`, `baseline_trajectory.csv`,
/// `projection.csv` and `summary.json` into `out_dir`.
pub fn write_artifacts(report: &EvalReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let curves = csv_bytes(&["source", "dataset", "window_start", "count"], |w| {
        for c in [&report.gradrec_curves, &report.visual_curves] {
            for label in DatasetLabel::ALL {
                for (t, n) in c.get(label).iter().enumerate() {
                    w.write_record([
                        c.source.as_str(),
                        label.as_str(),
                        &t.to_string(),
                        &n.to_string(),
                    ])?;
                }
            }
        }
        Ok(())
    })?;
    write_atomic(dir.join("curves.csv"), &curves)?;

    let trajectory = csv_bytes(&["position", "product_id", "step", "rank"], |w| {
        let mut pos = 0;
        for (s, st) in report.path.steps.iter().enumerate() {
            for (r, n) in st.recommendations.iter().enumerate() {
                w.write_record([
                    &pos.to_string(),
                    &n.product_id,
                    &s.to_string(),
                    &r.to_string(),
                ])?;
                pos += 1;
            }
        }
        Ok(())
    })?;
    write_atomic(dir.join("trajectory.csv"), &trajectory)?;

    let baseline = csv_bytes(&["position", "product_id", "step", "rank"], |w| {
        for (i, id) in report.visual_trajectory.iter().enumerate() {
            w.write_record([&i.to_string(), id, "0", &i.to_string()])?;
        }
        Ok(())
    })?;
    write_atomic(dir.join("baseline_trajectory.csv"), &baseline)?;

    let projection = csv_bytes(&["id_or_path_index", "x", "y", "kind"], |w| {
        let mut points = report.projection.points.iter();
        for label in DatasetLabel::ALL {
            for id in report.datasets.get(label) {
                let p = points.next().expect("one point per dataset row");
                w.write_record([id, &p[0].to_string(), &p[1].to_string(), label.as_str()])?;
            }
        }
        for (i, p) in report.projection.path.iter().enumerate() {
            w.write_record([&i.to_string(), &p[0].to_string(), &p[1].to_string(), "path"])?;
        }
        Ok(())
    })?;
    write_atomic(dir.join("projection.csv"), &projection)?;

    let summary = serde_json::to_string_pretty(&report.summary()).expect("summary serializes");
    write_atomic(dir.join("summary.json"), (summary + "\n").as_bytes())
}
