//! On-disk formats: decomposition sidecars, JSON-lines ANN fields and
//! probability maps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use superpatch_core::{AnnField, Decomposition, ImageGrid, LabelFusionMap, Match};

use crate::error::{CliError, CliResult};
use crate::io::{load_labelmap, read_file, save_image, save_labelmap, write_file};

/// JSON written next to a decomposition's label PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSidecar {
    pub n: usize,
    pub barycenters: Vec<[f64; 2]>,
    pub adjacency: Vec<[usize; 2]>,
    pub scan_order: Vec<usize>,
}

impl DecompositionSidecar {
    pub fn from_decomposition(decomp: &Decomposition) -> Self {
        Self {
            n: decomp.len(),
            barycenters: decomp
                .superpixels()
                .iter()
                .map(|s| [s.barycenter.0, s.barycenter.1])
                .collect(),
            adjacency: decomp.edges().map(|(i, j)| [i, j]).collect(),
            scan_order: decomp.scan_order().to_vec(),
        }
    }
}

pub fn sidecar_path(label_png: &Path) -> PathBuf {
    label_png.with_extension("json")
}

/// Writes `label_png` (16-bit superpixel indices) and its JSON sidecar.
pub fn export_decomposition(decomp: &Decomposition, label_png: &Path) -> CliResult<()> {
    save_labelmap(&decomp.label_map(), label_png)?;
    let sidecar = DecompositionSidecar::from_decomposition(decomp);
    let json = serde_json::to_string(&sidecar).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&sidecar_path(label_png), json.as_bytes())
}

/// Imports a label image; when a sidecar is present it must agree with the
/// geometry recomputed from the labels.
pub fn import_decomposition(label_png: &Path) -> CliResult<Decomposition> {
    let decomp = Decomposition::from_label_map(&load_labelmap(label_png)?)?;
    let side = sidecar_path(label_png);
    if side.exists() {
        let bytes = read_file(&side)?;
        let stored: DecompositionSidecar = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::format(&side, e.to_string()))?;
        let fresh = DecompositionSidecar::from_decomposition(&decomp);
        let close = stored.barycenters.len() == fresh.barycenters.len()
            && stored
                .barycenters
                .iter()
                .zip(&fresh.barycenters)
                .all(|(a, b)| (a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6);
        if stored.n != fresh.n
            || !close
            || stored.adjacency != fresh.adjacency
            || stored.scan_order != fresh.scan_order
        {
            return Err(CliError::format(&side, "sidecar does not match its label image"));
        }
    }
    Ok(decomp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatchRecord {
    img: usize,
    sp: usize,
    d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AnnRecord {
    i: usize,
    matches: Vec<MatchRecord>,
}

/// One JSON object per test superpixel: `{"i":..,"matches":[{"img","sp","d"},..]}`.
pub fn ann_field_jsonl(field: &AnnField) -> String {
    matches_jsonl(&field.matches)
}

/// [`ann_field_jsonl`] for bare match lists, e.g. exhaustive-search results.
pub fn matches_jsonl(matches: &[Vec<Match>]) -> String {
    let mut out = String::new();
    for (i, ms) in matches.iter().enumerate() {
        let rec = AnnRecord {
            i,
            matches: ms
                .iter()
                .map(|m| MatchRecord {
                    img: m.image,
                    sp: m.superpixel,
                    d: m.distance,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

/// Parses [`ann_field_jsonl`] output back into `matches[i][run]`.
pub fn parse_ann_field(text: &str) -> CliResult<Vec<Vec<Match>>> {
    let mut rows: Vec<Vec<Match>> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: AnnRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("ANN line {}: {e}", n + 1)))?;
        if rec.i != rows.len() {
            return Err(CliError::Validation(format!(
                "ANN line {}: expected superpixel {}, found {}",
                n + 1,
                rows.len(),
                rec.i
            )));
        }
        rows.push(
            rec.matches
                .into_iter()
                .map(|m| Match {
                    image: m.img,
                    superpixel: m.sp,
                    distance: m.d,
                })
                .collect(),
        );
    }
    Ok(rows)
}

/// `superpixel,p0,p1,...` header plus one row per superpixel.
pub fn probabilities_csv(map: &LabelFusionMap) -> String {
    let mut out = String::from("superpixel");
    for l in 0..map.label_count() {
        let _ = write!(out, ",p{l}");
    }
    out.push('\n');
    for i in 0..map.len() {
        let _ = write!(out, "{i}");
        for p in map.row(i) {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

/// Writes `prob_<label>.png` (16-bit, probability scaled to full range) for
/// every label plus `probabilities.csv` into `dir`.
pub fn export_probability_maps(map: &LabelFusionMap, decomp: &Decomposition, dir: &Path) -> CliResult<()> {
    for l in 0..map.label_count() {
        let img = ImageGrid::from_fn(decomp.width(), decomp.height(), 1, |x, y, px| {
            px[0] = map.get(decomp.superpixel_at(x, y), l);
        })?;
        save_image(&img, &dir.join(format!("prob_{l}.png")), true)?;
    }
    write_file(&dir.join("probabilities.csv"), probabilities_csv(map).as_bytes())
}
