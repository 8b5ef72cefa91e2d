//! Configuration assembly: preset, then file, then command-line flags.
//!
//! The file format is one `key = value` per line using the field names of
//! [`PipelineConfig`]; `#` starts a comment.

use crate::error::{CliError, CliResult};
use colorseg::pipeline::{PipelineConfig, PRESET_NAMES};
use std::path::Path;

/// Values given on the command line; `None` keeps the lower layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub sigma0: Option<f64>,
    pub sigma_g: Option<f64>,
    pub delta_l: Option<f64>,
    pub mu_b: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub f_r: Option<f64>,
    pub g_s: Option<f64>,
    pub radius: Option<usize>,
    pub radius_cap: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut cfg.sigma0, self.sigma0);
        set(&mut cfg.sigma_g, self.sigma_g);
        set(&mut cfg.delta_l, self.delta_l);
        set(&mut cfg.mu_b, self.mu_b);
        set(&mut cfg.a, self.a);
        set(&mut cfg.b, self.b);
        set(&mut cfg.f_r, self.f_r);
        set(&mut cfg.g_s, self.g_s);
        if self.radius.is_some() {
            cfg.radius = self.radius;
        }
        if let Some(c) = self.radius_cap {
            cfg.radius_cap = c;
        }
    }
}

pub fn preset(name: &str) -> CliResult<PipelineConfig> {
    PipelineConfig::preset(name).ok_or_else(|| {
        CliError::Config(format!("unknown preset `{name}`, expected one of {}", PRESET_NAMES.join(", ")))
    })
}

pub fn parse_file_text(text: &str) -> CliResult<Overrides> {
    let mut o = Overrides::default();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::Config(format!("line {}: {msg}", no + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let real = || value.parse::<f64>().map_err(|_| bad(format!("`{value}` is not a number")));
        let count = || value.parse::<usize>().map_err(|_| bad(format!("`{value}` is not a non-negative integer")));
        match key {
            "sigma0" => o.sigma0 = Some(real()?),
            "sigma_g" => o.sigma_g = Some(real()?),
            "delta_l" => o.delta_l = Some(real()?),
            "mu_b" => o.mu_b = Some(real()?),
            "a" => o.a = Some(real()?),
            "b" => o.b = Some(real()?),
            "f_r" => o.f_r = Some(real()?),
            "g_s" => o.g_s = Some(real()?),
            "radius" => o.radius = Some(count()?),
            "radius_cap" => o.radius_cap = Some(count()?),
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
    }
    Ok(o)
}

pub fn parse_file(path: &Path) -> CliResult<Overrides> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_file_text(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Preset (default `selected-sfu`) < config file < flags, then validated.
pub fn resolve(preset_name: Option<&str>, file: Option<&Path>, flags: &Overrides) -> CliResult<PipelineConfig> {
    let mut cfg = preset(preset_name.unwrap_or(PRESET_NAMES[0]))?;
    if let Some(path) = file {
        parse_file(path)?.apply(&mut cfg);
    }
    flags.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let o = parse_file_text("# tuned\nsigma0 = 7.5\n\nb=0.5  # brighter\nradius = 4\n").unwrap();
        assert_eq!(o.sigma0, Some(7.5));
        assert_eq!(o.b, Some(0.5));
        assert_eq!(o.radius, Some(4));
        assert_eq!(o.mu_b, None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(parse_file_text("sigma = 3").is_err());
        assert!(parse_file_text("sigma0 = ten").is_err());
        assert!(parse_file_text("sigma0").is_err());
        assert!(parse_file_text("radius = -1").is_err());
    }

    #[test]
    fn layers_override_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.conf");
        std::fs::write(&file, "sigma0 = 7\nmu_b = 200\n").unwrap();
        let flags = Overrides {
            sigma0: Some(9.0),
            ..Default::default()
        };
        let cfg = resolve(Some("iitp-close"), Some(&file), &flags).unwrap();
        assert_eq!(cfg.sigma0, 9.0);
        assert_eq!(cfg.mu_b, 200.0);
        assert_eq!(cfg.delta_l, 25.0);
    }

    #[test]
    fn invalid_result_is_a_config_error() {
        let flags = Overrides {
            b: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(resolve(None, None, &flags), Err(CliError::Config(_))));
        assert!(matches!(resolve(Some("x"), None, &Overrides::default()), Err(CliError::Config(_))));
    }
}
