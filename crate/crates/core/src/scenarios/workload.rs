//! Client arrival generation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::services::data::{CategoryId, ProductId, UserId, CATEGORY_COUNT, PRODUCT_COUNT, SEED_PASSWORD, USER_COUNT};
use crate::services::webui::RequestKind;
use crate::simnet::SimTime;

/// Weights per request kind; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestMix {
    pub product_page: f64,
    pub category_page: f64,
    pub login: f64,
    pub add_to_cart: f64,
}

impl RequestMix {
    pub const BASELINE: Self = Self { product_page: 0.6, category_page: 0.25, login: 0.05, add_to_cart: 0.1 };
    pub const LOGIN_ONLY: Self = Self { product_page: 0.0, category_page: 0.0, login: 1.0, add_to_cart: 0.0 };

    fn weights(&self) -> [(RequestKind, f64); 4] {
        [
            (RequestKind::ProductPage, self.product_page),
            (RequestKind::CategoryPage, self.category_page),
            (RequestKind::Login, self.login),
            (RequestKind::AddToCart, self.add_to_cart),
        ]
    }

    /// The kind with the largest weight; ties go to the earlier kind.
    pub fn dominant(&self) -> RequestKind {
        self.weights().into_iter().fold((RequestKind::ProductPage, f64::MIN), |b, w| if w.1 > b.1 { w } else { b }).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub name: String,
    pub rate_per_s: f64,
    pub mix: RequestMix,
    pub session_pool: u32,
    /// Flood from at most three sessions, all of one request kind, with
    /// guessed passwords.
    #[serde(default)]
    pub malicious: bool,
    /// If set, each arrival opens a new session with this probability and
    /// otherwise continues the most recently opened one.
    #[serde(default)]
    pub session_diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("arrival rate must be positive")]
    Rate,
    #[error("request mix weights must be non-negative and sum to 1")]
    Mix,
    #[error("session pool must be non-empty")]
    Pool,
    #[error("session diversity must be in (0, 1]")]
    Diversity,
}

impl WorkloadProfile {
    pub fn baseline() -> Self {
        Self {
            name: "baseline".into(),
            rate_per_s: 5.0,
            mix: RequestMix::BASELINE,
            session_pool: 20,
            malicious: false,
            session_diversity: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(self.rate_per_s > 0.0 && self.rate_per_s.is_finite()) {
            return Err(ProfileError::Rate);
        }
        let w = self.mix.weights();
        if w.iter().any(|(_, x)| *x < 0.0 || !x.is_finite()) || (w.iter().map(|(_, x)| x).sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ProfileError::Mix);
        }
        if self.session_pool == 0 {
            return Err(ProfileError::Pool);
        }
        if self.session_diversity.is_some_and(|d| !(d > 0.0 && d <= 1.0)) {
            return Err(ProfileError::Diversity);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start_ms: SimTime,
    pub end_ms: SimTime,
    pub profile: WorkloadProfile,
}

/// One scheduled client request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub t: SimTime,
    pub session: String,
    pub kind: RequestKind,
    pub product: ProductId,
    pub category: CategoryId,
    pub user: UserId,
    pub password: String,
}

/// Arrivals in `[start, end)` from an exponential inter-arrival process.
pub fn generate_workload<R: Rng + ?Sized>(
    profile: &WorkloadProfile,
    start: SimTime,
    end: SimTime,
    rng: &mut R,
) -> Result<Vec<Arrival>, ProfileError> {
    profile.validate()?;
    let gap = Exp::new(profile.rate_per_s / 1000.0).map_err(|_| ProfileError::Rate)?;
    let kinds = profile.mix.weights();
    let pick = WeightedIndex::new(kinds.iter().map(|(_, w)| *w)).map_err(|_| ProfileError::Mix)?;
    let pool = if profile.malicious { profile.session_pool.min(3) } else { profile.session_pool };
    let mut out = Vec::new();
    let mut opened = 0u32;
    let mut next_in_pool = 0u32;
    let mut t = start as f64;
    loop {
        t += gap.sample(rng);
        if t >= end as f64 {
            break;
        }
        let index = match profile.session_diversity {
            Some(d) if opened == 0 || rng.random_bool(d) => {
                opened += 1;
                opened - 1
            }
            Some(_) => opened - 1,
            None => {
                let i = next_in_pool % pool;
                next_in_pool += 1;
                i
            }
        };
        let kind = if profile.malicious { profile.mix.dominant() } else { kinds[pick.sample(rng)].0 };
        let product = ProductId(rng.random_range(0..PRODUCT_COUNT));
        let (user, password) = if profile.malicious {
            (UserId(1), format!("guess{}", rng.random_range(0..1_000_000u32)))
        } else {
            (UserId(index % USER_COUNT + 1), SEED_PASSWORD.to_owned())
        };
        out.push(Arrival {
            t: t as SimTime,
            session: format!("{}-{index}", profile.name),
            kind,
            product,
            category: CategoryId(product.0 / (PRODUCT_COUNT / CATEGORY_COUNT)),
            user,
            password,
        });
    }
    Ok(out)
}

/// Arrivals of all phases, merged in time order. Phases are generated in
/// order from the same generator; equal times keep phase order.
pub fn generate_phases<R: Rng + ?Sized>(phases: &[Phase], rng: &mut R) -> Result<Vec<Arrival>, ProfileError> {
    let mut all = Vec::new();
    for p in phases {
        all.extend(generate_workload(&p.profile, p.start_ms, p.end_ms, rng)?);
    }
    all.sort_by_key(|a| a.t);
    Ok(all)
}
