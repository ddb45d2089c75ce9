//! Leveled password groups with exclusions.
//!
//! Each method belongs to exactly one group. A password unlocks its own
//! group and every group at a strictly lower level that its group does not
//! exclude. Groups on the same level never unlock each other.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::service::MethodTable;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccessError {
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("method {0:?} is not assigned to any access group")]
    UncoveredMethod(String),
    #[error("invalid access config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Grant,
    Deny,
}

impl Decision {
    pub fn is_grant(self) -> bool {
        self == Decision::Grant
    }
}

/// SHA-256 of a password. Only hashes are kept in memory and config files.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PasswordHash([u8; 32]);

impl PasswordHash {
    pub fn of(password: &str) -> Self {
        PasswordHash(Sha256::digest(password.as_bytes()).into())
    }

    pub fn from_hex(s: &str) -> Result<Self, AccessError> {
        let bytes = hex::decode(s).map_err(|e| AccessError::InvalidConfig(format!("bad password hash: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| AccessError::InvalidConfig("password hash must be 32 bytes".into()))?;
        Ok(PasswordHash(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn ct_eq(&self, other: &PasswordHash) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }
}

impl std::fmt::Debug for PasswordHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PasswordHash(..)")
    }
}

impl From<PasswordHash> for String {
    fn from(h: PasswordHash) -> String {
        h.to_hex()
    }
}

impl TryFrom<String> for PasswordHash {
    type Error = AccessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        PasswordHash::from_hex(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessGroup {
    pub group_id: String,
    pub level: u32,
    pub password_hash: PasswordHash,
    pub excluded: BTreeSet<String>,
}

impl AccessGroup {
    pub fn new(group_id: impl Into<String>, level: u32, password: &str) -> Self {
        AccessGroup {
            group_id: group_id.into(),
            level,
            password_hash: PasswordHash::of(password),
            excluded: BTreeSet::new(),
        }
    }

    pub fn excluding<I, S>(mut self, groups: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.excluded.extend(groups.into_iter().map(Into::into));
        self
    }

    /// Whether holding this group's password unlocks `other`.
    pub fn unlocks(&self, other: &AccessGroup) -> bool {
        self.group_id == other.group_id
            || (self.level > other.level && !self.excluded.contains(&other.group_id))
    }
}

/// An immutable, validated access configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAccessConfig", into = "RawAccessConfig")]
pub struct AccessConfig {
    groups: IndexMap<String, AccessGroup>,
    method_group: IndexMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct RawAccessConfig {
    groups: Vec<AccessGroup>,
    method_group: IndexMap<String, String>,
}

impl TryFrom<RawAccessConfig> for AccessConfig {
    type Error = AccessError;

    fn try_from(raw: RawAccessConfig) -> Result<Self, Self::Error> {
        AccessConfig::new(raw.groups, raw.method_group)
    }
}

impl From<AccessConfig> for RawAccessConfig {
    fn from(c: AccessConfig) -> Self {
        RawAccessConfig {
            groups: c.groups.into_values().collect(),
            method_group: c.method_group,
        }
    }
}

impl AccessConfig {
    pub fn new<M, K, V>(groups: Vec<AccessGroup>, method_group: M) -> Result<Self, AccessError>
    where
        M: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut by_id = IndexMap::new();
        for g in groups {
            if by_id.contains_key(&g.group_id) {
                return Err(AccessError::InvalidConfig(format!("duplicate group id {:?}", g.group_id)));
            }
            by_id.insert(g.group_id.clone(), g);
        }
        for g in by_id.values() {
            if g.excluded.contains(&g.group_id) {
                return Err(AccessError::InvalidConfig(format!("group {:?} excludes itself", g.group_id)));
            }
            if let Some(missing) = g.excluded.iter().find(|e| !by_id.contains_key(*e)) {
                return Err(AccessError::InvalidConfig(format!(
                    "group {:?} excludes unknown group {missing:?}",
                    g.group_id
                )));
            }
        }
        let mut methods = IndexMap::new();
        for (m, g) in method_group {
            let (m, g) = (m.into(), g.into());
            if !by_id.contains_key(&g) {
                return Err(AccessError::InvalidConfig(format!("method {m:?} mapped to unknown group {g:?}")));
            }
            if methods.insert(m.clone(), g).is_some() {
                return Err(AccessError::InvalidConfig(format!("method {m:?} mapped twice")));
            }
        }
        Ok(AccessConfig {
            groups: by_id,
            method_group: methods,
        })
    }

    pub fn groups(&self) -> impl Iterator<Item = &AccessGroup> {
        self.groups.values()
    }

    pub fn group(&self, id: &str) -> Option<&AccessGroup> {
        self.groups.get(id)
    }

    pub fn method_groups(&self) -> impl Iterator<Item = (&str, &str)> {
        self.method_group.iter().map(|(m, g)| (m.as_str(), g.as_str()))
    }

    pub fn group_of(&self, method: &str) -> Option<&AccessGroup> {
        self.method_group.get(method).and_then(|g| self.groups.get(g))
    }

    /// Groups whose password hash equals that of `presented`. Every group is
    /// compared, whatever the outcome.
    fn matching(&self, presented: &str) -> Vec<&AccessGroup> {
        let hash = PasswordHash::of(presented);
        let mut out = Vec::new();
        for g in self.groups.values() {
            if g.password_hash.ct_eq(&hash) {
                out.push(g);
            }
        }
        out
    }

    pub fn authorize(&self, method: &str, presented: Option<&str>) -> Result<Decision, AccessError> {
        let target = self
            .group_of(method)
            .ok_or_else(|| AccessError::UnknownMethod(method.to_owned()))?;
        let Some(presented) = presented else {
            return Ok(Decision::Deny);
        };
        let granted = self.matching(presented).iter().any(|g| g.unlocks(target));
        Ok(if granted { Decision::Grant } else { Decision::Deny })
    }

    /// Ids of all groups the presented password unlocks.
    pub fn effective_levels(&self, presented: &str) -> BTreeSet<String> {
        let holders = self.matching(presented);
        self.groups
            .values()
            .filter(|h| holders.iter().any(|g| g.unlocks(h)))
            .map(|h| h.group_id.clone())
            .collect()
    }

    /// Checks that the config maps exactly the methods of `table`.
    pub fn check_coverage(&self, table: &MethodTable) -> Result<(), AccessError> {
        if let Some(m) = table.names().find(|m| !self.method_group.contains_key(*m)) {
            return Err(AccessError::UncoveredMethod(m.to_owned()));
        }
        if let Some(m) = self.method_group.keys().find(|m| !table.contains(m)) {
            return Err(AccessError::InvalidConfig(format!("config names unknown method {m:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levels() -> AccessConfig {
        AccessConfig::new(
            vec![
                AccessGroup::new("g0", 0, "p0"),
                AccessGroup::new("g1", 1, "p1"),
                AccessGroup::new("g2", 2, "p2").excluding(["g0"]),
                AccessGroup::new("g3", 3, "p3"),
                AccessGroup::new("g3x", 3, "p3x").excluding(["g1"]),
            ],
            [("m0", "g0"), ("m1", "g1"), ("m2", "g2"), ("m3", "g3"), ("m3x", "g3x")],
        )
        .unwrap()
    }

    #[test]
    fn higher_password_grants_lower_methods() {
        let c = levels();
        assert_eq!(c.authorize("m1", Some("p3")).unwrap(), Decision::Grant);
        assert_eq!(c.authorize("m0", Some("p3")).unwrap(), Decision::Grant);
    }

    #[test]
    fn exclusions_deny() {
        let c = levels();
        assert_eq!(c.authorize("m1", Some("p3x")).unwrap(), Decision::Deny);
        assert_eq!(c.authorize("m0", Some("p3x")).unwrap(), Decision::Grant);
        assert_eq!(c.authorize("m0", Some("p2")).unwrap(), Decision::Deny);
    }

    #[test]
    fn no_upward_or_sideways_access() {
        let c = levels();
        assert_eq!(c.authorize("m2", Some("p1")).unwrap(), Decision::Deny);
        assert_eq!(c.authorize("m3x", Some("p3")).unwrap(), Decision::Deny);
        assert_eq!(c.authorize("m3", Some("p3x")).unwrap(), Decision::Deny);
        assert_eq!(c.authorize("m3", None).unwrap(), Decision::Deny);
        assert_eq!(c.authorize("nope", Some("p3")), Err(AccessError::UnknownMethod("nope".into())));
    }

    #[test]
    fn effective_level_sets() {
        let c = levels();
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(c.effective_levels("p3"), set(&["g0", "g1", "g2", "g3"]));
        assert_eq!(c.effective_levels("p2"), set(&["g1", "g2"]));
        assert!(c.effective_levels("unknown").is_empty());
    }

    #[test]
    fn invalid_configs() {
        let self_ex = AccessConfig::new(vec![AccessGroup::new("a", 1, "x").excluding(["a"])], [("m", "a")]);
        assert!(matches!(self_ex, Err(AccessError::InvalidConfig(_))));
        let missing = AccessConfig::new(vec![AccessGroup::new("a", 1, "x").excluding(["zz"])], [("m", "a")]);
        assert!(matches!(missing, Err(AccessError::InvalidConfig(_))));
        let dup = AccessConfig::new(
            vec![AccessGroup::new("a", 1, "x"), AccessGroup::new("a", 2, "y")],
            Vec::<(String, String)>::new(),
        );
        assert!(matches!(dup, Err(AccessError::InvalidConfig(_))));
    }

    #[test]
    fn hashes_round_trip_through_hex() {
        let h = PasswordHash::of("secret");
        assert_eq!(PasswordHash::from_hex(&h.to_hex()).unwrap(), h);
        assert!(PasswordHash::from_hex("abcd").is_err());
    }
}
