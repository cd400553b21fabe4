//! Model configuration files: TOML with flat `key=value` overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use neuflow_core::NeuFlowConfig;

/// Builds a config from a preset name (`default` or `tiny`), an optional
/// TOML file (which wins over the preset), and `key=value` overrides applied
/// last. Override values use TOML syntax, e.g.
/// `per_level_channels=[24,24,24,24,24]` or `feature_dim=90`.
pub fn resolve_config(
    preset: &str,
    file: Option<&Path>,
    overrides: &[String],
) -> Result<NeuFlowConfig> {
    let base = match preset {
        "default" | "paper" => NeuFlowConfig::default(),
        "tiny" => NeuFlowConfig::tiny(),
        other => bail!("unknown preset {other:?}; expected \"default\" or \"tiny\""),
    };
    let mut table = toml::Table::try_from(&base).context("serializing preset")?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let file_table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        for (k, v) in file_table {
            if !table.contains_key(&k) {
                bail!("unknown configuration key {k:?} in {}", path.display());
            }
            table.insert(k, v);
        }
    }
    for entry in overrides {
        let Some((key, value)) = entry.split_once('=') else {
            bail!("override {entry:?} is not of the form key=value");
        };
        let key = key.trim();
        if !table.contains_key(key) {
            bail!("unknown configuration key {key:?}");
        }
        let parsed: toml::Table = format!("x = {}", value.trim())
            .parse()
            .with_context(|| format!("parsing override value {value:?}"))?;
        table.insert(key.to_string(), parsed["x"].clone());
    }
    let cfg: NeuFlowConfig = table.try_into().context("assembling configuration")?;
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn presets_resolve() {
        assert_eq!(
            resolve_config("default", None, &[]).unwrap(),
            NeuFlowConfig::default()
        );
        assert_eq!(
            resolve_config("tiny", None, &[]).unwrap(),
            NeuFlowConfig::tiny()
        );
        assert!(resolve_config("huge", None, &[]).is_err());
    }

    #[test]
    fn overrides_apply_with_toml_values() {
        let cfg = resolve_config(
            "tiny",
            None,
            &[
                "feature_dim=12".to_string(),
                "seed=99".to_string(),
                "per_level_channels=[6,6,6,6,6]".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.feature_dim, 12);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.per_level_channels, vec![6, 6, 6, 6, 6]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(resolve_config("tiny", None, &["featur_dim=12".into()]).is_err());
    }

    #[test]
    fn config_file_overrides_preset_and_is_validated() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "feature_dim = 16\nrefinement_depth = 3").unwrap();
        let cfg = resolve_config("tiny", Some(f.path()), &[]).unwrap();
        assert_eq!(cfg.feature_dim, 16);
        assert_eq!(cfg.refinement_depth, 3);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "correlation_radius = 0").unwrap();
        assert!(resolve_config("tiny", Some(bad.path()), &[]).is_err());
    }
}
