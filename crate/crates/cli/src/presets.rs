//! Named embedding configurations, stored as TOML.

use std::path::Path;

use thiserror::Error;
use trajspace_core::EmbeddingConfig;

pub const PRESETS: [(&str, &str); 4] = [
    ("sorting-fig2", include_str!("../presets/sorting-fig2.tsne")),
    ("rubik-200", include_str!("../presets/rubik-200.tsne")),
    ("rubik-2", include_str!("../presets/rubik-2.tsne")),
    ("nn", include_str!("../presets/nn.tsne")),
];

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset '{name}'; available: {}", names().join(", "))]
    Unknown { name: String },
    #[error("preset {name}: {message}")]
    Invalid { name: String, message: String },
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn parse_config(name: &str, text: &str) -> Result<EmbeddingConfig, PresetError> {
    toml::from_str(text).map_err(|e| PresetError::Invalid {
        name: name.into(),
        message: e.to_string(),
    })
}

/// A built-in preset by name, or a TOML file when `source` names an existing path.
pub fn load(source: &str) -> Result<EmbeddingConfig, PresetError> {
    if let Some((name, text)) = PRESETS.iter().find(|(n, _)| *n == source) {
        return parse_config(name, text);
    }
    if Path::new(source).is_file() {
        let text = std::fs::read_to_string(source).map_err(|e| PresetError::Invalid {
            name: source.into(),
            message: e.to_string(),
        })?;
        return parse_config(source, &text);
    }
    Err(PresetError::Unknown {
        name: source.into(),
    })
}
