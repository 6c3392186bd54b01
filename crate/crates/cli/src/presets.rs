//! Shipped experiment configurations.

use std::path::Path;

use crate::config::{parse_config, parse_config_str, ExperimentConfig};
use crate::error::CliError;

pub const PRESETS: [(&str, &str); 9] = [
    ("fig4A", include_str!("../presets/fig4A.json")),
    ("fig4B", include_str!("../presets/fig4B.json")),
    ("fig5", include_str!("../presets/fig5.json")),
    ("fig6A", include_str!("../presets/fig6A.json")),
    ("fig6B", include_str!("../presets/fig6B.json")),
    ("fig7A", include_str!("../presets/fig7A.json")),
    ("fig7B", include_str!("../presets/fig7B.json")),
    ("validate-toric", include_str!("../presets/validate-toric.json")),
    ("bound-sweep", include_str!("../presets/bound-sweep.json")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let text = preset_text(name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
    parse_config_str(text)
}

/// A config file path, or a preset name when no such file exists.
pub fn load(arg: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        return parse_config(path);
    }
    match preset_text(arg) {
        Some(text) => parse_config_str(text),
        None => Err(CliError::Config(format!("{arg}: no such config file or preset"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_resolves() {
        for (name, _) in PRESETS {
            let cfg = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.id, name);
            assert!(!cfg.resolve().unwrap().entries.is_empty());
        }
    }

    #[test]
    fn preset_round_trips() {
        for (name, _) in PRESETS {
            let cfg = preset(name).unwrap();
            let again = parse_config_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(cfg, again, "{name}");
        }
    }
}
