//! Data-directory configuration: which features this installation enables,
//! stored as canonical key/value text so installs diff cleanly.

use std::fmt;
use std::path::Path;

use bigsur_core::{Error, Result};

pub const CONFIG_FILE: &str = "config";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Catalog,
    Query,
    Lineage,
    Scheduler,
    Federation,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::Catalog,
        Feature::Query,
        Feature::Lineage,
        Feature::Scheduler,
        Feature::Federation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Feature::Catalog => "catalog",
            Feature::Query => "query",
            Feature::Lineage => "lineage",
            Feature::Scheduler => "scheduler",
            Feature::Federation => "federation",
        }
    }

    pub fn parse(s: &str) -> Result<Feature> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature `{s}`")))
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pick and choose features per installation; a bare electronic notebook is
/// catalog-only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureConfig {
    pub catalog: bool,
    pub query: bool,
    pub lineage: bool,
    pub scheduler: bool,
    pub federation: bool,
    pub listen_address: Option<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            catalog: true,
            query: true,
            lineage: true,
            scheduler: true,
            federation: true,
            listen_address: None,
        }
    }
}

impl FeatureConfig {
    pub fn enabled(&self, feature: Feature) -> bool {
        match feature {
            Feature::Catalog => self.catalog,
            Feature::Query => self.query,
            Feature::Lineage => self.lineage,
            Feature::Scheduler => self.scheduler,
            Feature::Federation => self.federation,
        }
    }

    pub fn disable(&mut self, feature: Feature) {
        match feature {
            Feature::Catalog => self.catalog = false,
            Feature::Query => self.query = false,
            Feature::Lineage => self.lineage = false,
            Feature::Scheduler => self.scheduler = false,
            Feature::Federation => self.federation = false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.catalog || self.query || self.lineage || self.scheduler || self.federation) {
            return Err(Error::InvalidConfig("all features disabled".to_string()));
        }
        if (self.query || self.lineage) && !self.catalog {
            return Err(Error::InvalidConfig(
                "query and lineage require catalog".to_string(),
            ));
        }
        if self.federation && !self.catalog {
            return Err(Error::InvalidConfig("federation requires catalog".to_string()));
        }
        Ok(())
    }
}

/// The whole on-disk configuration: site identity plus features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    /// Site token used as the origin half of every local id.
    pub site: String,
    /// Id of the site record describing this installation.
    pub site_record: String,
    pub features: FeatureConfig,
}

impl Config {
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("catalog={}", self.features.catalog),
            format!("federation={}", self.features.federation),
            format!("lineage={}", self.features.lineage),
        ];
        if let Some(addr) = &self.features.listen_address {
            lines.push(format!("listen_address={addr}"));
        }
        lines.push(format!("query={}", self.features.query));
        lines.push(format!("scheduler={}", self.features.scheduler));
        lines.push(format!("site={}", self.site));
        lines.push(format!("site_record={}", self.site_record));
        lines.join("\n") + "\n"
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut site = None;
        let mut site_record = None;
        let mut features = FeatureConfig::default();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: missing `=`", n + 1)))?;
            let parse_bool = || {
                value.parse::<bool>().map_err(|_| {
                    Error::InvalidConfig(format!("line {}: `{key}` expects true/false", n + 1))
                })
            };
            match key {
                "catalog" => features.catalog = parse_bool()?,
                "query" => features.query = parse_bool()?,
                "lineage" => features.lineage = parse_bool()?,
                "scheduler" => features.scheduler = parse_bool()?,
                "federation" => features.federation = parse_bool()?,
                "listen_address" => features.listen_address = Some(value.to_string()),
                "site" => site = Some(value.to_string()),
                "site_record" => site_record = Some(value.to_string()),
                other => {
                    return Err(Error::InvalidConfig(format!("line {}: unknown key `{other}`", n + 1)))
                }
            }
        }
        let config = Config {
            site: site.ok_or_else(|| Error::InvalidConfig("missing site".to_string()))?,
            site_record: site_record
                .ok_or_else(|| Error::InvalidConfig("missing site_record".to_string()))?,
            features,
        };
        config.features.validate()?;
        Ok(config)
    }

    pub fn load(home: &Path) -> Result<Config> {
        let path = home.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            Error::InvalidConfig(format!("no configuration at {}; run `bigsur init`", path.display()))
        })?;
        Config::parse(&text)
    }

    pub fn save(&self, home: &Path) -> Result<()> {
        std::fs::write(home.join(CONFIG_FILE), self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let config = Config {
            site: "berkeley".into(),
            site_record: "berkeley/site-1".into(),
            features: FeatureConfig {
                scheduler: false,
                listen_address: Some("127.0.0.1:7171".into()),
                ..FeatureConfig::default()
            },
        };
        let text = config.to_text();
        assert_eq!(Config::parse(&text).unwrap(), config);
        // keys are sorted
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn invalid_feature_combinations() {
        let f = FeatureConfig {
            catalog: false,
            ..FeatureConfig::default()
        };
        assert!(f.validate().is_err()); // query/lineage need catalog
        let all_off = FeatureConfig {
            catalog: false,
            query: false,
            lineage: false,
            scheduler: false,
            federation: false,
            listen_address: None,
        };
        assert_eq!(all_off.validate().unwrap_err().code(), "InvalidConfig");
        // scheduler-only is a legal install
        let scheduler_only = FeatureConfig {
            catalog: false,
            query: false,
            lineage: false,
            scheduler: true,
            federation: false,
            listen_address: None,
        };
        assert!(scheduler_only.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("site=x\nsite_record=x/y\ncolor=blue\n").is_err());
    }
}
