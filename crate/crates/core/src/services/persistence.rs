//! Persistence over a shared store with a per-instance cache.
//!
//! All instances read and write one [`Dataset`]. Each instance caches query
//! results; a write evicts every cached query touching the written table in
//! every instance before it is acknowledged, so no instance can serve a
//! stale read afterwards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::data::{CategoryId, Dataset, Order, Product, ProductId, SeedCounts, User, UserId};
use super::lfu::LfuCache;

pub const DEFAULT_CACHE_CAPACITY: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum Query {
    ProductById { id: ProductId },
    ByCategory { category: CategoryId },
    Categories,
    AllOrders,
    UserByName { name: String },
}

impl Query {
    fn touches(&self, table: Table) -> bool {
        matches!(
            (self, table),
            (Query::AllOrders, Table::Orders) | (Query::UserByName { .. }, Table::Users)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rows", content = "data", rename_all = "snake_case")]
pub enum Rows {
    Products(Vec<Product>),
    Categories(Vec<super::data::Category>),
    Orders(Vec<Order>),
    User(Option<User>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Products(v) => v.len(),
            Rows::Categories(v) => v.len(),
            Rows::Orders(v) => v.len(),
            Rows::User(u) => usize::from(u.is_some()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Table {
    Orders,
    Users,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entity", rename_all = "snake_case")]
pub enum Write {
    Order { user: UserId, products: Vec<ProductId>, timestamp: u64 },
    UserPassword { user: UserId, salt: String, password_hash: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PersistenceError {
    #[error("store not seeded yet")]
    NotSeeded,
    #[error("unknown persistence instance {0}")]
    UnknownInstance(usize),
    #[error("order must contain at least one product")]
    EmptyOrder,
    #[error("unknown user {0:?}")]
    UnknownUser(UserId),
}

/// Evaluates a query directly against a dataset. Also the oracle for tests.
pub fn scan(store: &Dataset, query: &Query) -> Rows {
    match query {
        Query::ProductById { id } => Rows::Products(store.products.iter().filter(|p| p.id == *id).cloned().collect()),
        Query::ByCategory { category } => {
            Rows::Products(store.products.iter().filter(|p| p.category == *category).cloned().collect())
        }
        Query::Categories => Rows::Categories(store.categories.clone()),
        Query::AllOrders => Rows::Orders(store.orders.clone()),
        Query::UserByName { name } => Rows::User(store.users.iter().find(|u| u.name == *name).cloned()),
    }
}

#[derive(Debug, Clone)]
pub struct PersistenceCluster {
    seed: u64,
    store: Option<Dataset>,
    caches: Vec<LfuCache<Query, Rows>>,
    store_reads: u64,
}

impl PersistenceCluster {
    pub fn new(seed: u64, instances: usize, cache_capacity: usize) -> Self {
        Self {
            seed,
            store: None,
            caches: (0..instances).map(|_| LfuCache::new(cache_capacity)).collect(),
            store_reads: 0,
        }
    }

    /// Populates the store on the first call; later calls change nothing.
    pub fn seed(&mut self) -> SeedCounts {
        self.store.get_or_insert_with(|| Dataset::generate(self.seed)).counts()
    }

    pub fn is_seeded(&self) -> bool {
        self.store.is_some()
    }

    pub fn store(&self) -> Option<&Dataset> {
        self.store.as_ref()
    }

    pub fn instances(&self) -> usize {
        self.caches.len()
    }

    /// Adds an instance with an empty cache and returns its index.
    pub fn add_instance(&mut self) -> usize {
        let cap = self.caches.first().map_or(DEFAULT_CACHE_CAPACITY, LfuCache::capacity);
        self.caches.push(LfuCache::new(cap));
        self.caches.len() - 1
    }

    /// Number of times a query had to go to the store.
    pub fn store_reads(&self) -> u64 {
        self.store_reads
    }

    pub fn read(&mut self, instance: usize, query: &Query) -> Result<Rows, PersistenceError> {
        let store = self.store.as_ref().ok_or(PersistenceError::NotSeeded)?;
        let cache = self.caches.get_mut(instance).ok_or(PersistenceError::UnknownInstance(instance))?;
        if let Some(rows) = cache.get(query) {
            return Ok(rows.clone());
        }
        self.store_reads += 1;
        let rows = scan(store, query);
        cache.insert(query.clone(), rows.clone());
        Ok(rows)
    }

    pub fn write(&mut self, instance: usize, write: Write) -> Result<(), PersistenceError> {
        if instance >= self.caches.len() {
            return Err(PersistenceError::UnknownInstance(instance));
        }
        let store = self.store.as_mut().ok_or(PersistenceError::NotSeeded)?;
        let table = match write {
            Write::Order { user, products, timestamp } => {
                if products.is_empty() {
                    return Err(PersistenceError::EmptyOrder);
                }
                let id = super::data::OrderId(store.orders.len() as u32);
                store.orders.push(Order { id, user, products, timestamp });
                Table::Orders
            }
            Write::UserPassword { user, salt, password_hash } => {
                let u = store.users.iter_mut().find(|u| u.id == user).ok_or(PersistenceError::UnknownUser(user))?;
                u.salt = salt;
                u.password_hash = password_hash;
                Table::Users
            }
        };
        for cache in &mut self.caches {
            cache.retain(|q| !q.touches(table));
        }
        Ok(())
    }
}
