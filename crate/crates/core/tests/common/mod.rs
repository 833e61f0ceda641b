//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teastore_core::recommender::{predict_slope_one, train_matrix, RatingMatrix, Variant};
use teastore_core::services::data::{Dataset, OrderId, Order, ProductId, UserId, USER_COUNT};
use teastore_core::services::lfu::LfuCache;
use teastore_core::services::persistence::{scan, PersistenceCluster, Query, Write};
use teastore_core::variability::{AuthMode, Configuration, ImageSource, PersistenceSource, RecommenderMode};

// ---- configuration space ----

/// Brute-force validity straight from the constraint table.
pub fn oracle_valid(c: &Configuration) -> bool {
    let c1 = !(c.auth != AuthMode::Absent && c.persistence != PersistenceSource::External);
    let c2 = !(c.recommender == RecommenderMode::Full && c.auth == AuthMode::Absent);
    c1 && c2
}

pub fn all_54() -> Vec<Configuration> {
    let mut out = Vec::new();
    for i in [ImageSource::LocalStatic, ImageSource::ExternalLite, ImageSource::ExternalFull] {
        for p in [PersistenceSource::LocalStatic, PersistenceSource::External] {
            for a in [AuthMode::Absent, AuthMode::Standard, AuthMode::Restrictive] {
                for r in [RecommenderMode::Disabled, RecommenderMode::LowPower, RecommenderMode::Full] {
                    out.push(Configuration::new(i, p, a, r));
                }
            }
        }
    }
    out
}

// ---- LFU ----

#[derive(Debug, Clone, Copy)]
pub enum CacheOp {
    Get(u8),
    Insert(u8, u32),
}

/// Linear-scan LFU: entries are (key, value, frequency, last access).
pub struct RefLfu {
    cap: usize,
    clock: u64,
    entries: Vec<(u8, u32, u64, u64)>,
}

impl RefLfu {
    pub fn new(cap: usize) -> Self {
        Self { cap, clock: 0, entries: Vec::new() }
    }

    pub fn get(&mut self, k: u8) -> Option<u32> {
        self.clock += 1;
        let e = self.entries.iter_mut().find(|e| e.0 == k)?;
        e.2 += 1;
        e.3 = self.clock;
        Some(e.1)
    }

    pub fn insert(&mut self, k: u8, v: u32) -> Option<(u8, u32)> {
        self.clock += 1;
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == k) {
            e.1 = v;
            e.2 += 1;
            e.3 = self.clock;
            return None;
        }
        if self.cap == 0 {
            return Some((k, v));
        }
        let mut evicted = None;
        if self.entries.len() >= self.cap {
            let min_f = self.entries.iter().map(|e| e.2).min().unwrap();
            let victim = self.entries.iter().enumerate().filter(|(_, e)| e.2 == min_f).min_by_key(|(_, e)| e.3).unwrap().0;
            let e = self.entries.remove(victim);
            evicted = Some((e.0, e.1));
        }
        self.clock += 1;
        self.entries.push((k, v, 1, self.clock));
        evicted
    }

    /// Frequencies and recency of the current entries, for victim checks.
    pub fn snapshot(&self) -> Vec<(u8, u64, u64)> {
        self.entries.iter().map(|e| (e.0, e.2, e.3)).collect()
    }
}

pub fn random_trace(rng: &mut ChaCha8Rng, len: usize, keys: u8) -> Vec<CacheOp> {
    (0..len)
        .map(|i| {
            let k = rng.random_range(0..keys);
            if rng.random_bool(0.5) { CacheOp::Get(k) } else { CacheOp::Insert(k, i as u32) }
        })
        .collect()
}

/// Replays `trace` on the cache and the reference. Returns the number of
/// evictions, or a description of the first disagreement.
pub fn check_lfu_trace(trace: &[CacheOp], cap: usize) -> Result<usize, String> {
    let mut cache: LfuCache<u8, u32> = LfuCache::new(cap);
    let mut reference = RefLfu::new(cap);
    let mut evictions = 0;
    for (step, op) in trace.iter().enumerate() {
        match *op {
            CacheOp::Get(k) => {
                let got = cache.get(&k).copied();
                let want = reference.get(k);
                if got != want {
                    return Err(format!("step {step}: get({k}) = {got:?}, reference {want:?}"));
                }
            }
            CacheOp::Insert(k, v) => {
                let before = reference.snapshot();
                let got = cache.insert(k, v);
                let want = reference.insert(k, v);
                if got != want {
                    return Err(format!("step {step}: insert({k}) evicted {got:?}, reference {want:?}"));
                }
                if let Some((victim, _)) = got.filter(|_| cap > 0) {
                    evictions += 1;
                    let (_, vf, vt) = *before.iter().find(|e| e.0 == victim).unwrap();
                    let min_f = before.iter().map(|e| e.1).min().unwrap();
                    let oldest = before.iter().filter(|e| e.1 == min_f).map(|e| e.2).min().unwrap();
                    if vf != min_f || vt != oldest {
                        return Err(format!("step {step}: victim {victim} has frequency {vf}, minimum is {min_f}"));
                    }
                }
            }
        }
        if cache.len() > cap {
            return Err(format!("step {step}: {} entries over capacity {cap}", cache.len()));
        }
    }
    Ok(evictions)
}

// ---- Slope One ----

pub type Ratings = BTreeMap<u32, BTreeMap<u32, f64>>;

pub fn random_matrix(rng: &mut ChaCha8Rng) -> Ratings {
    let users = rng.random_range(1..=8u32);
    let items = rng.random_range(1..=8u32);
    let mut m = Ratings::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(0.6) {
                m.entry(u).or_default().insert(i, f64::from(rng.random_range(1..=5u32)));
            }
        }
    }
    m
}

/// Direct Slope One from the definition: dev(j,i) is the mean of r_j − r_i
/// over users who rated both.
pub fn brute_force_predict(m: &Ratings, user: u32, target: u32, weighted: bool) -> Option<f64> {
    let mine = m.get(&user)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (&i, &ri) in mine {
        if i == target {
            continue;
        }
        let diffs: Vec<f64> = m.values().filter_map(|r| Some(r.get(&target)? - r.get(&i)?)).collect();
        if diffs.is_empty() {
            continue;
        }
        let dev = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let w = if weighted { diffs.len() as f64 } else { 1.0 };
        num += w * (dev + ri);
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

/// Compares both variants against the brute force on every (user, item)
/// pair. Returns the number of predictions compared and the largest error.
pub fn check_slope_one(m: &Ratings) -> Result<(usize, f64), String> {
    let matrix = RatingMatrix::from_entries(
        m.iter().flat_map(|(u, r)| r.iter().map(move |(i, v)| (UserId(*u), ProductId(*i), *v))),
    );
    let model = train_matrix(&matrix);
    let items: Vec<u32> = m.values().flat_map(|r| r.keys().copied()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let (mut compared, mut worst) = (0, 0.0f64);
    for (&u, ratings) in m {
        let user: BTreeMap<ProductId, f64> = ratings.iter().map(|(i, v)| (ProductId(*i), *v)).collect();
        for &j in &items {
            for (variant, weighted) in [(Variant::Plain, false), (Variant::Weighted, true)] {
                let got = predict_slope_one(&model, &user, ProductId(j), variant).ok();
                let want = brute_force_predict(m, u, j, weighted);
                match (got, want) {
                    (Some(g), Some(w)) => {
                        worst = worst.max((g - w).abs());
                        compared += 1;
                    }
                    (None, None) => {}
                    _ => return Err(format!("user {u} item {j} {variant:?}: got {got:?}, oracle {want:?}")),
                }
            }
        }
    }
    Ok((compared, worst))
}

// ---- persistence coherence ----

fn apply(oracle: &mut Dataset, w: &Write) {
    match w.clone() {
        Write::Order { user, products, timestamp } => {
            let id = OrderId(oracle.orders.len() as u32);
            oracle.orders.push(Order { id, user, products, timestamp });
        }
        Write::UserPassword { user, salt, password_hash } => {
            let u = oracle.users.iter_mut().find(|u| u.id == user).unwrap();
            u.salt = salt;
            u.password_hash = password_hash;
        }
    }
}

/// One seeded interleaving of writes and reads over two instances. Every
/// read must equal a scan of the store with all acknowledged writes applied.
pub fn coherence_trial(seed: u64, ops: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cluster = PersistenceCluster::new(seed, 2, 16);
    cluster.seed();
    let mut oracle = Dataset::generate(seed);
    let mut reads = 0;
    for step in 0..ops {
        let instance = rng.random_range(0..2usize);
        if rng.random_bool(0.3) {
            let w = if rng.random_bool(0.5) {
                let user = UserId(rng.random_range(1..=USER_COUNT));
                let products = vec![ProductId(rng.random_range(0..50))];
                Write::Order { user, products, timestamp: step as u64 }
            } else {
                let user = UserId(rng.random_range(1..=USER_COUNT));
                Write::UserPassword { user, salt: format!("s{step}"), password_hash: format!("h{step}") }
            };
            cluster.write(instance, w.clone()).map_err(|e| e.to_string())?;
            apply(&mut oracle, &w);
        } else {
            let q = match rng.random_range(0..4) {
                0 => Query::AllOrders,
                1 => Query::UserByName { name: format!("user{}", rng.random_range(1..=USER_COUNT)) },
                2 => Query::ProductById { id: ProductId(rng.random_range(0..50)) },
                _ => Query::Categories,
            };
            let got = cluster.read(instance, &q).map_err(|e| e.to_string())?;
            if got != scan(&oracle, &q) {
                return Err(format!("seed {seed} step {step}: stale read of {q:?} on instance {instance}"));
            }
            reads += 1;
        }
    }
    Ok(reads)
}
