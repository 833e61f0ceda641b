//! Feature model of the adaptable store.
//!
//! A [`Configuration`] picks one variant in each of four dimensions. The WebUI
//! is mandatory and therefore not a dimension. Two cross-dimension rules apply:
//!
//! - **C1**: an active Auth service (standard or restrictive) needs the
//!   external persistence provider, because user records only live there.
//! - **C2**: the full recommender needs Auth, since it scores per user.
//!
//! The space is small (54 combinations) so every query here is answered by
//! exhaustive enumeration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    /// Placeholder images served by the local static image service.
    LocalStatic,
    /// External provider without resizing, fronted by the local image cache.
    ExternalLite,
    /// External provider with resizing, fronted by the local image cache.
    ExternalFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersistenceSource {
    LocalStatic,
    /// External database provider, fronted by the local DB cache.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMode {
    Absent,
    Standard,
    /// Rate-limited logins. Only entered by the adaptation engine under hostile traffic.
    Restrictive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommenderMode {
    Disabled,
    /// Popularity fallback only.
    LowPower,
    Full,
}

impl ImageSource {
    pub const ALL: [ImageSource; 3] = [Self::LocalStatic, Self::ExternalLite, Self::ExternalFull];

    pub fn is_external(self) -> bool {
        !matches!(self, Self::LocalStatic)
    }
}

impl PersistenceSource {
    pub const ALL: [PersistenceSource; 2] = [Self::LocalStatic, Self::External];

    pub fn is_external(self) -> bool {
        matches!(self, Self::External)
    }
}

impl AuthMode {
    pub const ALL: [AuthMode; 3] = [Self::Absent, Self::Standard, Self::Restrictive];

    pub fn is_active(self) -> bool {
        !matches!(self, Self::Absent)
    }

    /// Preference used when the completion search has to pick an auth mode
    /// nobody asked for. Standard beats restrictive beats absent.
    pub fn functionality_rank(self) -> u8 {
        match self {
            Self::Absent => 0,
            Self::Restrictive => 1,
            Self::Standard => 2,
        }
    }
}

impl RecommenderMode {
    pub const ALL: [RecommenderMode; 3] = [Self::Disabled, Self::LowPower, Self::Full];

    pub fn is_active(self) -> bool {
        !matches!(self, Self::Disabled)
    }

    pub fn functionality_rank(self) -> u8 {
        match self {
            Self::Disabled => 0,
            Self::LowPower => 1,
            Self::Full => 2,
        }
    }
}

macro_rules! snake_display {
    ($($ty:ty),*) => {$(
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(v.as_str().unwrap_or_default())
            }
        }

        impl FromStr for $ty {
            type Err = VariabilityError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                serde_json::from_value(serde_json::Value::String(s.to_owned()))
                    .map_err(|_| VariabilityError::UnknownVariant(s.to_owned()))
            }
        }
    )*};
}

snake_display!(ImageSource, PersistenceSource, AuthMode, RecommenderMode);

/// One point in the feature space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    pub image: ImageSource,
    pub persistence: PersistenceSource,
    pub auth: AuthMode,
    pub recommender: RecommenderMode,
}

impl Configuration {
    pub const fn new(
        image: ImageSource,
        persistence: PersistenceSource,
        auth: AuthMode,
        recommender: RecommenderMode,
    ) -> Self {
        Self { image, persistence, auth, recommender }
    }

    /// All 54 combinations, valid or not, in dimension-then-variant order.
    pub fn all() -> impl Iterator<Item = Configuration> {
        ImageSource::ALL.into_iter().flat_map(|image| {
            PersistenceSource::ALL.into_iter().flat_map(move |persistence| {
                AuthMode::ALL.into_iter().flat_map(move |auth| {
                    RecommenderMode::ALL
                        .into_iter()
                        .map(move |recommender| Configuration::new(image, persistence, auth, recommender))
                })
            })
        })
    }

    pub fn get(&self, dimension: Dimension) -> DimensionValue {
        match dimension {
            Dimension::Image => DimensionValue::Image(self.image),
            Dimension::Persistence => DimensionValue::Persistence(self.persistence),
            Dimension::Auth => DimensionValue::Auth(self.auth),
            Dimension::Recommender => DimensionValue::Recommender(self.recommender),
        }
    }

    pub fn set(&mut self, value: DimensionValue) {
        match value {
            DimensionValue::Image(v) => self.image = v,
            DimensionValue::Persistence(v) => self.persistence = v,
            DimensionValue::Auth(v) => self.auth = v,
            DimensionValue::Recommender(v) => self.recommender = v,
        }
    }

    pub fn with(mut self, value: DimensionValue) -> Self {
        self.set(value);
        self
    }

    pub fn is_valid(&self) -> bool {
        validate(self).valid
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.image, self.persistence, self.auth, self.recommender)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Image,
    Persistence,
    Auth,
    Recommender,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Self::Image, Self::Persistence, Self::Auth, Self::Recommender];
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Image => "image",
            Self::Persistence => "persistence",
            Self::Auth => "auth",
            Self::Recommender => "recommender",
        })
    }
}

/// A value for one dimension, tagged with the dimension it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "dimension", content = "value", rename_all = "snake_case")]
pub enum DimensionValue {
    Image(ImageSource),
    Persistence(PersistenceSource),
    Auth(AuthMode),
    Recommender(RecommenderMode),
}

impl DimensionValue {
    pub fn dimension(&self) -> Dimension {
        match self {
            Self::Image(_) => Dimension::Image,
            Self::Persistence(_) => Dimension::Persistence,
            Self::Auth(_) => Dimension::Auth,
            Self::Recommender(_) => Dimension::Recommender,
        }
    }
}

impl fmt::Display for DimensionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Image(v) => v.fmt(f),
            Self::Persistence(v) => v.fmt(f),
            Self::Auth(v) => v.fmt(f),
            Self::Recommender(v) => v.fmt(f),
        }
    }
}

/// A reconfiguration request that may leave dimensions unspecified.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfiguration {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persistence: Option<PersistenceSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<AuthMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommender: Option<RecommenderMode>,
}

impl PartialConfiguration {
    pub fn is_empty(&self) -> bool {
        self.image.is_none()
            && self.persistence.is_none()
            && self.auth.is_none()
            && self.recommender.is_none()
    }

    pub fn requested(&self, dimension: Dimension) -> Option<DimensionValue> {
        match dimension {
            Dimension::Image => self.image.map(DimensionValue::Image),
            Dimension::Persistence => self.persistence.map(DimensionValue::Persistence),
            Dimension::Auth => self.auth.map(DimensionValue::Auth),
            Dimension::Recommender => self.recommender.map(DimensionValue::Recommender),
        }
    }

    pub fn set(&mut self, value: DimensionValue) {
        match value {
            DimensionValue::Image(v) => self.image = Some(v),
            DimensionValue::Persistence(v) => self.persistence = Some(v),
            DimensionValue::Auth(v) => self.auth = Some(v),
            DimensionValue::Recommender(v) => self.recommender = Some(v),
        }
    }

    /// Whether `config` agrees with every requested dimension.
    pub fn honored_by(&self, config: &Configuration) -> bool {
        Dimension::ALL
            .iter()
            .all(|d| self.requested(*d).is_none_or(|v| config.get(*d) == v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintId {
    C1,
    C2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn constraint_ids(&self) -> Vec<ConstraintId> {
        self.violations.iter().map(|v| v.constraint).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub dimension: Dimension,
    pub from: DimensionValue,
    pub to: DimensionValue,
}

/// Per-dimension difference between two configurations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigDelta {
    pub changes: Vec<Change>,
}

impl ConfigDelta {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn apply(&self, base: &Configuration) -> Configuration {
        self.changes.iter().fold(*base, |c, ch| c.with(ch.to))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "L0_barebone")]
    L0Barebone,
    #[serde(rename = "L1_barebone_rec")]
    L1BareboneRec,
    #[serde(rename = "L2_full")]
    L2Full,
}

impl Level {
    pub const ALL: [Level; 3] = [Self::L0Barebone, Self::L1BareboneRec, Self::L2Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::L0Barebone => "L0_barebone",
            Self::L1BareboneRec => "L1_barebone_rec",
            Self::L2Full => "L2_full",
        }
    }
}

impl FromStr for Level {
    type Err = VariabilityError;

    /// Accepts the full level name or the short `L0`/`L1`/`L2` form.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L0_barebone" | "L0" => Ok(Self::L0Barebone),
            "L1_barebone_rec" | "L1" => Ok(Self::L1BareboneRec),
            "L2_full" | "L2" => Ok(Self::L2Full),
            other => Err(VariabilityError::UnknownLevel(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VariabilityError {
    #[error("unknown configuration level `{0}`")]
    UnknownLevel(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("no valid configuration honors the request {request:?}")]
    Unsatisfiable { request: PartialConfiguration },
}

/// Checks every constraint and reports all violations.
pub fn validate(config: &Configuration) -> ValidationResult {
    let mut violations = Vec::new();
    if config.auth.is_active() && !config.persistence.is_external() {
        violations.push(Violation {
            constraint: ConstraintId::C1,
            message: format!(
                "auth `{}` needs user data from the external persistence provider, got persistence `{}`",
                config.auth, config.persistence
            ),
        });
    }
    if config.recommender == RecommenderMode::Full && !config.auth.is_active() {
        violations.push(Violation {
            constraint: ConstraintId::C2,
            message: "full recommender needs an active auth service for user data".to_owned(),
        });
    }
    ValidationResult { valid: violations.is_empty(), violations }
}

pub fn enumerate_valid() -> Vec<Configuration> {
    Configuration::all().filter(Configuration::is_valid).collect()
}

pub fn canonical_level(level: Level) -> Configuration {
    use AuthMode as A;
    use ImageSource as I;
    use PersistenceSource as P;
    use RecommenderMode as R;
    match level {
        Level::L0Barebone => Configuration::new(I::LocalStatic, P::LocalStatic, A::Absent, R::Disabled),
        Level::L1BareboneRec => Configuration::new(I::LocalStatic, P::LocalStatic, A::Absent, R::LowPower),
        Level::L2Full => Configuration::new(I::ExternalFull, P::External, A::Standard, R::Full),
    }
}

pub fn canonical_level_by_name(name: &str) -> Result<Configuration, VariabilityError> {
    name.parse().map(canonical_level)
}

pub fn diff(from: &Configuration, to: &Configuration) -> ConfigDelta {
    let changes = Dimension::ALL
        .iter()
        .filter_map(|&dimension| {
            let (a, b) = (from.get(dimension), to.get(dimension));
            (a != b).then_some(Change { dimension, from: a, to: b })
        })
        .collect();
    ConfigDelta { changes }
}

/// Completes a partial reconfiguration request into a valid configuration.
///
/// Among valid configurations honoring every requested dimension, picks the one
/// changing the fewest dimensions of `current`. Ties go to the higher
/// recommender rank, then the higher auth rank, then the lowest
/// dimension-then-variant ordinal. Restrictive auth is never introduced unless
/// requested or already current.
pub fn complete_request(
    request: &PartialConfiguration,
    current: &Configuration,
) -> Result<Configuration, VariabilityError> {
    Configuration::all()
        .filter(|c| c.is_valid() && request.honored_by(c))
        .filter(|c| {
            c.auth != AuthMode::Restrictive
                || request.auth == Some(AuthMode::Restrictive)
                || current.auth == AuthMode::Restrictive
        })
        .min_by_key(|c| {
            (
                diff(current, c).len(),
                std::cmp::Reverse(c.recommender.functionality_rank()),
                std::cmp::Reverse(c.auth.functionality_rank()),
                *c,
            )
        })
        .ok_or(VariabilityError::Unsatisfiable { request: *request })
}
