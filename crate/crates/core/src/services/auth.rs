//! Stateless authentication.
//!
//! Sessions travel with the client and carry a SHA-512 signature over their
//! fields and the server secret; validation needs nothing else. The only
//! server-side state is the login attempt history used by restrictive mode.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha512};
use thiserror::Error;

use super::data::{ProductId, User, UserId};
use crate::simnet::SimTime;
use crate::variability::AuthMode;

/// Rounds of salted SHA-512 for stored passwords. Kept low on purpose; the
/// simulated cost of verification is the auth service time.
pub const PASSWORD_ROUNDS: u32 = 16;
pub const RATE_LIMIT_ATTEMPTS: usize = 3;
pub const RATE_LIMIT_WINDOW_MS: SimTime = 10_000;

pub fn hash_password(password: &str, salt: &str) -> String {
    let mut digest = Sha512::digest(format!("{salt}:{password}").as_bytes());
    for _ in 1..PASSWORD_ROUNDS {
        let mut h = Sha512::new();
        h.update(salt.as_bytes());
        h.update(digest);
        digest = h.finalize();
    }
    hex::encode(digest)
}

pub fn verify_password(user: &User, password: &str) -> bool {
    hash_password(password, &user.salt) == user.password_hash
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub user: Option<UserId>,
    pub cart: Vec<ProductId>,
    pub logged_in: bool,
    pub issued_at: SimTime,
    pub signature: String,
}

#[derive(Serialize)]
struct SignedFields<'a> {
    user: Option<UserId>,
    cart: &'a [ProductId],
    logged_in: bool,
    issued_at: SimTime,
}

impl Session {
    fn digest(&self, secret: &str) -> String {
        let fields = SignedFields {
            user: self.user,
            cart: &self.cart,
            logged_in: self.logged_in,
            issued_at: self.issued_at,
        };
        let mut h = Sha512::new();
        h.update(serde_json::to_vec(&fields).expect("fields serialize"));
        h.update(b"|");
        h.update(secret.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn to_token(&self) -> String {
        serde_json::to_string(self).expect("session serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum AuthError {
    #[error("bad credentials")]
    BadCredentials,
    #[error("too many login attempts")]
    RateLimited,
    #[error("authentication is disabled")]
    AuthDisabled,
}

#[derive(Debug, Clone)]
pub struct AuthService {
    secret: String,
    attempts: BTreeMap<String, VecDeque<SimTime>>,
}

impl AuthService {
    pub fn new(secret: impl Into<String>) -> Self {
        Self { secret: secret.into(), attempts: BTreeMap::new() }
    }

    pub fn sign(&self, user: Option<UserId>, cart: Vec<ProductId>, logged_in: bool, issued_at: SimTime) -> Session {
        let mut s = Session { user, cart, logged_in, issued_at, signature: String::new() };
        s.signature = s.digest(&self.secret);
        s
    }

    pub fn validate(&self, session: &Session) -> bool {
        session.digest(&self.secret) == session.signature
    }

    /// Validates a serialized session. Anything unparsable is invalid.
    pub fn validate_token(&self, token: &str) -> bool {
        serde_json::from_str::<Session>(token).is_ok_and(|s| self.validate(&s))
    }

    /// Records an attempt from `client` and applies the rate rule when `mode`
    /// is restrictive. Must run before credentials are checked.
    pub fn admit_attempt(&mut self, now: SimTime, client: &str, mode: AuthMode) -> Result<(), AuthError> {
        if mode == AuthMode::Absent {
            return Err(AuthError::AuthDisabled);
        }
        let history = self.attempts.entry(client.to_owned()).or_default();
        while history.front().is_some_and(|t| now.saturating_sub(*t) >= RATE_LIMIT_WINDOW_MS) {
            history.pop_front();
        }
        history.push_back(now);
        if mode == AuthMode::Restrictive && history.len() > RATE_LIMIT_ATTEMPTS {
            return Err(AuthError::RateLimited);
        }
        Ok(())
    }

    /// Checks credentials against a user record fetched from persistence.
    pub fn verify(&self, now: SimTime, user: Option<&User>, password: &str) -> Result<Session, AuthError> {
        match user {
            Some(u) if verify_password(u, password) => Ok(self.sign(Some(u.id), Vec::new(), true, now)),
            _ => Err(AuthError::BadCredentials),
        }
    }

    /// Full login: rate rule, then credential check.
    pub fn login(
        &mut self,
        now: SimTime,
        client: &str,
        mode: AuthMode,
        user: Option<&User>,
        password: &str,
    ) -> Result<Session, AuthError> {
        self.admit_attempt(now, client, mode)?;
        self.verify(now, user, password)
    }

    /// Returns a re-signed session with `product` appended to the cart.
    pub fn add_to_cart(&self, session: &Session, product: ProductId, now: SimTime) -> Option<Session> {
        if !self.validate(session) {
            return None;
        }
        let mut cart = session.cart.clone();
        cart.push(product);
        Some(self.sign(session.user, cart, session.logged_in, now))
    }
}
