//! Store data model and the deterministic seed dataset.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::auth::hash_password;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub id: ProductId,
    pub category: CategoryId,
    pub name: String,
    /// Integer cents.
    pub price: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub name: String,
    pub salt: String,
    pub password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub user: UserId,
    /// Never empty.
    pub products: Vec<ProductId>,
    pub timestamp: u64,
}

pub const PRODUCT_COUNT: u32 = 50;
pub const CATEGORY_COUNT: u32 = 5;
pub const USER_COUNT: u32 = 20;
pub const ORDER_COUNT: u32 = 200;
/// Every seeded user shares this password.
pub const SEED_PASSWORD: &str = "password";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCounts {
    pub products: usize,
    pub users: usize,
    pub orders: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub categories: Vec<Category>,
    pub products: Vec<Product>,
    pub users: Vec<User>,
    pub orders: Vec<Order>,
}

pub fn user_name(id: UserId) -> String {
    format!("user{}", id.0)
}

impl Dataset {
    /// Generates the seed dataset. Sizes are fixed; contents depend on `seed`.
    /// Purchases are skewed so that popularity rankings are meaningful.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7ea5_70fe);
        let per_category = PRODUCT_COUNT / CATEGORY_COUNT;
        let categories = (0..CATEGORY_COUNT)
            .map(|c| Category { id: CategoryId(c), name: format!("Category {}", c + 1) })
            .collect();
        let products: Vec<Product> = (0..PRODUCT_COUNT)
            .map(|i| Product {
                id: ProductId(i),
                category: CategoryId(i / per_category),
                name: format!("Tea {i:02}"),
                price: rng.random_range(199..=4999),
            })
            .collect();
        let users = (1..=USER_COUNT)
            .map(|i| {
                let salt = format!("{:016x}", rng.random::<u64>());
                let id = UserId(i);
                User { id, name: user_name(id), password_hash: hash_password(SEED_PASSWORD, &salt), salt }
            })
            .collect();

        let mut popularity: Vec<u32> = (0..PRODUCT_COUNT).collect();
        popularity.shuffle(&mut rng);
        let weights: Vec<f64> = {
            let mut w = vec![0.0; PRODUCT_COUNT as usize];
            for (rank, p) in popularity.iter().enumerate() {
                w[*p as usize] = 1.0 / (rank as f64 + 1.0);
            }
            w
        };
        let pick = WeightedIndex::new(&weights).expect("weights are positive");
        let orders = (0..ORDER_COUNT)
            .map(|i| {
                let n = rng.random_range(1..=3);
                let mut items: Vec<ProductId> = Vec::with_capacity(n);
                while items.len() < n {
                    let p = ProductId(pick.sample(&mut rng) as u32);
                    if !items.contains(&p) {
                        items.push(p);
                    }
                }
                Order {
                    id: OrderId(i),
                    user: UserId(rng.random_range(1..=USER_COUNT)),
                    products: items,
                    timestamp: u64::from(i) * 1000,
                }
            })
            .collect();
        Self { categories, products, users, orders }
    }

    pub fn counts(&self) -> SeedCounts {
        SeedCounts { products: self.products.len(), users: self.users.len(), orders: self.orders.len() }
    }

    /// Catalog-only copy used by the local static DB: no users, no orders.
    pub fn static_catalog(&self) -> Self {
        Self { categories: self.categories.clone(), products: self.products.clone(), ..Self::default() }
    }

    pub fn product(&self, id: ProductId) -> Option<&Product> {
        self.products.iter().find(|p| p.id == id)
    }
}
