use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Globally unique identifier: `site/local`. The site half names the origin
/// site so records can travel between sites without renumbering.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    site: String,
    local: String,
}

fn check_token(token: &str, what: &str) -> Result<(), String> {
    if token.is_empty() {
        return Err(format!("{what} is empty"));
    }
    if let Some(c) = token.chars().find(|c| c.is_whitespace() || *c == '/') {
        return Err(format!("{what} contains forbidden character {c:?}"));
    }
    Ok(())
}

impl EntityId {
    pub fn new(site: impl Into<String>, local: impl Into<String>) -> Result<Self, Error> {
        let site = site.into();
        let local = local.into();
        check_token(&site, "site")
            .and_then(|_| check_token(&local, "local"))
            .map_err(|m| Error::MalformedId(format!("{site}/{local}"), m))?;
        Ok(EntityId { site, local })
    }

    pub fn site(&self) -> &str {
        &self.site
    }

    pub fn local(&self) -> &str {
        &self.local
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.site, self.local)
    }
}

impl FromStr for EntityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (site, local) = s
            .split_once('/')
            .ok_or_else(|| Error::MalformedId(s.to_string(), "missing `/`".to_string()))?;
        EntityId::new(site, local)
    }
}

impl Serialize for EntityId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|e: Error| D::Error::custom(e.to_string()))
    }
}

/// Version stamp for a stored record. `rev` starts at 1 and only the origin
/// site may advance it; superseded revisions are retained forever.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub rev: u64,
    pub origin: String,
}

impl Revision {
    pub fn new(rev: u64, origin: impl Into<String>) -> Self {
        Revision {
            rev,
            origin: origin.into(),
        }
    }
}

/// Timestamps are RFC 3339 UTC strings throughout; kept as text so canonical
/// serialization is byte-stable.
pub fn is_rfc3339(value: &str) -> bool {
    chrono::DateTime::parse_from_rfc3339(value).is_ok()
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
