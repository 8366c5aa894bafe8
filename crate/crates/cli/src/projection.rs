//! Projection CSV: one row per point with `x, y, line, step` followed by
//! metadata columns in alphabetical order.
//!
//! Point metadata keeps its key as column name. Trajectory labels are written
//! as `line.<key>` and repeated on every row of the trajectory. An empty cell
//! means the key is absent. A column is numeric when every non-empty cell
//! parses as a number, categorical otherwise.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use thiserror::Error;
use trajspace_core::model::is_anchor;
use trajspace_core::{
    DatasetError, Encoding, MetaValue, Metadata, State, StateDataset, StatePoint, Trajectory,
};

pub const LABEL_PREFIX: &str = "line.";
const FIXED: [&str; 4] = ["x", "y", "line", "step"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing required column '{0}'")]
    MissingColumn(&'static str),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("line '{line}' has step {step} twice")]
    DuplicateStep { line: String, step: u64 },
    #[error("{coords} coordinates for {points} points")]
    Misaligned { coords: usize, points: usize },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("metadata key '{0}' collides with a reserved column")]
    ReservedKey(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Coordinates plus a dataset whose states are [`State::Absent`].
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub dataset: StateDataset,
}

fn cell(v: Option<&MetaValue>) -> String {
    match v {
        None => String::new(),
        Some(MetaValue::Number(x)) => x.to_string(),
        Some(MetaValue::Text(s)) => s.clone(),
    }
}

/// Writes one row per point in global order.
pub fn export_csv<W: Write>(
    out: W,
    dataset: &StateDataset,
    coords: &[[f64; 2]],
) -> Result<(), CsvError> {
    if coords.len() != dataset.len() {
        return Err(CsvError::Misaligned {
            coords: coords.len(),
            points: dataset.len(),
        });
    }
    if let Some(i) = coords
        .iter()
        .position(|c| !(c[0].is_finite() && c[1].is_finite()))
    {
        return Err(CsvError::NonFinite(i));
    }
    let mut point_keys = BTreeSet::new();
    let mut label_keys = BTreeSet::new();
    for t in dataset.trajectories() {
        label_keys.extend(t.labels.keys().cloned());
        for p in &t.points {
            point_keys.extend(p.metadata.keys().cloned());
        }
    }
    for k in &point_keys {
        if FIXED.contains(&k.as_str()) || k.starts_with(LABEL_PREFIX) {
            return Err(CsvError::ReservedKey(k.clone()));
        }
    }
    let mut columns: Vec<(String, bool, String)> = point_keys
        .into_iter()
        .map(|k| (k.clone(), false, k))
        .chain(
            label_keys
                .into_iter()
                .map(|k| (format!("{LABEL_PREFIX}{k}"), true, k)),
        )
        .collect();
    columns.sort_by(|a, b| a.0.cmp(&b.0));
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = FIXED
        .iter()
        .copied()
        .chain(columns.iter().map(|c| c.0.as_str()))
        .collect();
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    let mut global = 0;
    for t in dataset.trajectories() {
        for p in &t.points {
            let [x, y] = coords[global];
            row.clear();
            row.push(x.to_string());
            row.push(y.to_string());
            row.push(t.id.clone());
            row.push(p.step_index.to_string());
            for (_, is_label, key) in &columns {
                let source = if *is_label { &t.labels } else { &p.metadata };
                row.push(cell(source.get(key)));
            }
            w.write_record(&row)?;
            global += 1;
        }
    }
    w.flush()?;
    Ok(())
}

struct Row {
    x: f64,
    y: f64,
    step: Option<u64>,
    cells: Vec<String>,
    number: usize,
}

/// Reads a projection CSV. Trajectories appear in order of first occurrence;
/// single-point lines are accepted only as anchors (`line.kind = anchor`).
pub fn import_csv<R: Read>(input: R) -> Result<Projection, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &'static str| header.iter().position(|h| h == name);
    let xi = find("x").ok_or(CsvError::MissingColumn("x"))?;
    let yi = find("y").ok_or(CsvError::MissingColumn("y"))?;
    let li = find("line").ok_or(CsvError::MissingColumn("line"))?;
    let si = find("step");
    let meta_columns: Vec<usize> = (0..header.len())
        .filter(|&i| ![Some(xi), Some(yi), Some(li), si].contains(&Some(i)))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut lines: HashMap<String, Vec<Row>> = HashMap::new();
    let mut numeric = vec![true; meta_columns.len()];
    for (k, record) in reader.records().enumerate() {
        let number = k + 2;
        let record = record?;
        let bad = |reason: String| CsvError::Row {
            row: number,
            reason,
        };
        if record.len() != header.len() {
            return Err(bad(format!(
                "{} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let coord = |i: usize, name: &str| -> Result<f64, CsvError> {
            let v: f64 = record[i]
                .trim()
                .parse()
                .map_err(|_| bad(format!("{name} '{}' is not a number", &record[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{name} is not finite")))
            }
        };
        let x = coord(xi, "x")?;
        let y = coord(yi, "y")?;
        let line = record[li].to_string();
        if line.is_empty() {
            return Err(bad("empty line identifier".into()));
        }
        let step = match si {
            Some(i) => Some(record[i].trim().parse::<u64>().map_err(|_| {
                bad(format!(
                    "step '{}' is not a non-negative integer",
                    &record[i]
                ))
            })?),
            None => None,
        };
        let cells: Vec<String> = meta_columns
            .iter()
            .map(|&i| record[i].to_string())
            .collect();
        for (flag, c) in numeric.iter_mut().zip(&cells) {
            if !c.is_empty() && c.parse::<f64>().is_err() {
                *flag = false;
            }
        }
        if !lines.contains_key(&line) {
            order.push(line.clone());
        }
        lines.entry(line).or_default().push(Row {
            x,
            y,
            step,
            cells,
            number,
        });
    }

    let value = |column: usize, text: &str| -> Option<MetaValue> {
        if text.is_empty() {
            None
        } else if numeric[column] {
            Some(MetaValue::Number(text.parse().expect("checked numeric")))
        } else {
            Some(MetaValue::Text(text.to_string()))
        }
    };
    let mut regular = Vec::new();
    let mut anchors = Vec::new();
    let mut coords_of: BTreeMap<String, Vec<[f64; 2]>> = BTreeMap::new();
    for id in order {
        let mut rows = lines.remove(&id).expect("line recorded");
        if rows.iter().all(|r| r.step.is_some()) {
            rows.sort_by_key(|r| r.step);
            for w in rows.windows(2) {
                if w[0].step == w[1].step {
                    return Err(CsvError::DuplicateStep {
                        line: id,
                        step: w[0].step.expect("step present"),
                    });
                }
            }
        }
        let mut labels = Metadata::new();
        let mut points = Vec::with_capacity(rows.len());
        for (k, r) in rows.iter().enumerate() {
            let mut metadata = Metadata::new();
            for (c, &hi) in meta_columns.iter().enumerate() {
                let name = &header[hi];
                let Some(v) = value(c, &r.cells[c]) else {
                    if let Some(key) = name.strip_prefix(LABEL_PREFIX) {
                        if labels.contains_key(key) {
                            return Err(CsvError::Row {
                                row: r.number,
                                reason: format!("label '{key}' missing on one row of line '{id}'"),
                            });
                        }
                    }
                    continue;
                };
                match name.strip_prefix(LABEL_PREFIX) {
                    Some(key) => {
                        if k == 0 {
                            labels.insert(key.to_string(), v);
                        } else if labels.get(key) != Some(&v) {
                            return Err(CsvError::Row {
                                row: r.number,
                                reason: format!("label '{key}' differs within line '{id}'"),
                            });
                        }
                    }
                    None => {
                        metadata.insert(name.clone(), v);
                    }
                }
            }
            points.push(StatePoint {
                trajectory_id: id.clone(),
                step_index: r.step.unwrap_or(k as u64),
                state: State::Absent,
                metadata,
            });
        }
        coords_of.insert(id.clone(), rows.iter().map(|r| [r.x, r.y]).collect());
        let t = Trajectory { id, points, labels };
        if t.len() == 1 && is_anchor(&t) {
            anchors.push(t);
        } else {
            regular.push(t);
        }
    }
    let mut dataset = StateDataset::build("projection", Encoding::Absent, regular)?;
    for a in anchors {
        dataset = dataset.with_anchor(a)?;
    }
    let coords = dataset
        .trajectories()
        .iter()
        .flat_map(|t| coords_of[&t.id].iter().copied())
        .collect();
    Ok(Projection { coords, dataset })
}
