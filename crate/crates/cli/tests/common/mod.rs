#![allow(dead_code)]

use std::path::PathBuf;

use trajspace_cli::projection::{export_csv, import_csv};
use trajspace_core::StateDataset;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../domains/tests/fixtures")
        .join(name)
}

/// Exports, re-imports and lists every difference in coordinates (bitwise),
/// trajectory structure, labels and point metadata.
pub fn csv_round_trip(ds: &StateDataset, coords: &[[f64; 2]]) -> Vec<String> {
    let mut buf = Vec::new();
    export_csv(&mut buf, ds, coords).expect("export");
    let back = match import_csv(buf.as_slice()) {
        Ok(p) => p,
        Err(e) => return vec![format!("import failed: {e}")],
    };
    let mut diffs = Vec::new();
    let (a, b) = (ds.trajectories(), back.dataset.trajectories());
    if a.len() != b.len() {
        diffs.push(format!("{} trajectories became {}", a.len(), b.len()));
        return diffs;
    }
    for (ta, tb) in a.iter().zip(b) {
        if ta.id != tb.id {
            diffs.push(format!("trajectory {} became {}", ta.id, tb.id));
        }
        if ta.labels != tb.labels {
            diffs.push(format!(
                "labels of {}: {:?} vs {:?}",
                ta.id, ta.labels, tb.labels
            ));
        }
        if ta.len() != tb.len() {
            diffs.push(format!(
                "{} has {} points, read back {}",
                ta.id,
                ta.len(),
                tb.len()
            ));
            continue;
        }
        for (pa, pb) in ta.points.iter().zip(&tb.points) {
            if pa.step_index != pb.step_index
                || pa.metadata != pb.metadata
                || pa.trajectory_id != pb.trajectory_id
            {
                diffs.push(format!(
                    "{} step {}: {:?} vs {:?}",
                    ta.id, pa.step_index, pa.metadata, pb.metadata
                ));
            }
        }
    }
    if back.coords.len() != coords.len() {
        diffs.push(format!(
            "{} coordinates became {}",
            coords.len(),
            back.coords.len()
        ));
    } else {
        let bad = coords
            .iter()
            .zip(&back.coords)
            .filter(|(p, q)| p[0].to_bits() != q[0].to_bits() || p[1].to_bits() != q[1].to_bits())
            .count();
        if bad > 0 {
            diffs.push(format!("{bad} coordinates changed"));
        }
    }
    diffs.truncate(5);
    diffs
}
