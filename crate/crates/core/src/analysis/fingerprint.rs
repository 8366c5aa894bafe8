use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::model::State;

/// Modal category of one dimension within a selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub category: u8,
    pub count: usize,
    /// `count / selection size`.
    pub support: f64,
    pub constant: bool,
    /// Another category had the same count; the smallest one was taken.
    pub tied: bool,
}

/// Per-dimension summary of a set of categorical states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub selection_size: usize,
    pub dimensions: Vec<DimensionSummary>,
}

impl Fingerprint {
    pub fn constant_count(&self) -> usize {
        self.dimensions.iter().filter(|d| d.constant).count()
    }

    pub fn constant_fraction(&self) -> f64 {
        self.constant_count() as f64 / self.dimensions.len() as f64
    }
}

/// Most prevalent category per dimension over the selected states.
pub fn fingerprint<'a>(
    selection: impl IntoIterator<Item = &'a State>,
) -> Result<Fingerprint, AnalysisError> {
    let mut counts: Vec<Vec<usize>> = Vec::new();
    let mut size = 0;
    for state in selection {
        let State::Symbols(symbols) = state else {
            return Err(AnalysisError::NotCategorical(state.kind()));
        };
        if size == 0 {
            counts = vec![Vec::new(); symbols.len()];
        } else if symbols.len() != counts.len() {
            return Err(AnalysisError::Degenerate(format!(
                "selection mixes lengths {} and {}",
                counts.len(),
                symbols.len()
            )));
        }
        for (slot, &s) in counts.iter_mut().zip(symbols) {
            if slot.len() <= s as usize {
                slot.resize(s as usize + 1, 0);
            }
            slot[s as usize] += 1;
        }
        size += 1;
    }
    if size == 0 {
        return Err(AnalysisError::EmptySelection);
    }
    let dimensions = counts
        .iter()
        .map(|slot| {
            let best = slot.iter().copied().max().unwrap_or(0);
            let category = slot.iter().position(|&c| c == best).unwrap_or(0);
            DimensionSummary {
                category: category as u8,
                count: best,
                support: best as f64 / size as f64,
                constant: best == size,
                tied: slot.iter().filter(|&&c| c == best).count() > 1,
            }
        })
        .collect();
    Ok(Fingerprint {
        selection_size: size,
        dimensions,
    })
}
