//! Slope One (plain and weighted), popularity fallback, and the training
//! state each recommender instance keeps.
//!
//! Ratings are implicit: the rating of an item by a user is how many times
//! the user bought it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::services::data::{Order, ProductId, UserId};
use crate::variability::RecommenderMode;

pub const DEFAULT_K: usize = 3;
/// New orders accumulated before the model is rebuilt.
pub const RETRAIN_BATCH: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub ratings: BTreeMap<UserId, BTreeMap<ProductId, f64>>,
}

impl RatingMatrix {
    pub fn from_orders(orders: &[Order]) -> Self {
        let mut ratings: BTreeMap<UserId, BTreeMap<ProductId, f64>> = BTreeMap::new();
        for o in orders {
            let row = ratings.entry(o.user).or_default();
            for p in &o.products {
                *row.entry(*p).or_default() += 1.0;
            }
        }
        Self { ratings }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (UserId, ProductId, f64)>) -> Self {
        let mut ratings: BTreeMap<UserId, BTreeMap<ProductId, f64>> = BTreeMap::new();
        for (u, i, r) in entries {
            ratings.entry(u).or_default().insert(i, r);
        }
        Self { ratings }
    }

    pub fn user(&self, user: UserId) -> Option<&BTreeMap<ProductId, f64>> {
        self.ratings.get(&user)
    }

    pub fn items(&self) -> BTreeSet<ProductId> {
        self.ratings.values().flat_map(|r| r.keys().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub dev: f64,
    pub count: u32,
}

/// Average deviations for every ordered pair of distinct co-rated items.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviationModel {
    pairs: BTreeMap<(ProductId, ProductId), Deviation>,
}

impl DeviationModel {
    /// `dev(j, i)`: how much `j` is rated above `i` on average.
    pub fn get(&self, j: ProductId, i: ProductId) -> Option<Deviation> {
        self.pairs.get(&(j, i)).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(ProductId, ProductId), &Deviation)> {
        self.pairs.iter()
    }
}

pub fn train_matrix(matrix: &RatingMatrix) -> DeviationModel {
    let mut sums: BTreeMap<(ProductId, ProductId), (f64, u32)> = BTreeMap::new();
    for row in matrix.ratings.values() {
        for (&j, &rj) in row {
            for (&i, &ri) in row {
                if i != j {
                    let e = sums.entry((j, i)).or_default();
                    e.0 += rj - ri;
                    e.1 += 1;
                }
            }
        }
    }
    let pairs = sums.into_iter().map(|(k, (s, c))| (k, Deviation { dev: s / f64::from(c), count: c })).collect();
    DeviationModel { pairs }
}

pub fn train_slope_one(history: &[Order]) -> DeviationModel {
    train_matrix(&RatingMatrix::from_orders(history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no rated item shares a pair with the target")]
pub struct NoData;

pub fn predict_slope_one(
    model: &DeviationModel,
    user: &BTreeMap<ProductId, f64>,
    target: ProductId,
    variant: Variant,
) -> Result<f64, NoData> {
    let (mut num, mut den, mut terms) = (0.0, 0.0, 0u32);
    for (&i, &ri) in user {
        if i == target {
            continue;
        }
        let Some(d) = model.get(target, i) else { continue };
        let w = match variant {
            Variant::Plain => 1.0,
            Variant::Weighted => f64::from(d.count),
        };
        num += w * (ri + d.dev);
        den += w;
        terms += 1;
    }
    if terms == 0 {
        return Err(NoData);
    }
    Ok(num / den)
}

/// Ranked `(item, score)` pairs, score descending then id ascending.
pub type Recommendation = Vec<(ProductId, f64)>;

fn rank(mut scored: Recommendation, k: usize) -> Recommendation {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn popularity_topk(history: &[Order], k: usize, exclusions: &BTreeSet<ProductId>) -> Recommendation {
    let mut counts: BTreeMap<ProductId, u32> = BTreeMap::new();
    for o in history {
        for p in &o.products {
            *counts.entry(*p).or_default() += 1;
        }
    }
    let scored = counts.into_iter().filter(|(p, _)| !exclusions.contains(p)).map(|(p, c)| (p, f64::from(c))).collect();
    rank(scored, k)
}

/// Training state of one recommender instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub history: Vec<Order>,
    pub matrix: RatingMatrix,
    pub model: DeviationModel,
    pending: usize,
}

impl TrainingState {
    pub fn train(history: Vec<Order>) -> Self {
        let matrix = RatingMatrix::from_orders(&history);
        let model = train_matrix(&matrix);
        Self { history, matrix, model, pending: 0 }
    }

    /// Appends new orders; the model is rebuilt once a full batch has
    /// accumulated. Returns whether a retrain happened.
    pub fn observe_orders(&mut self, orders: impl IntoIterator<Item = Order>) -> bool {
        for o in orders {
            self.history.push(o);
            self.pending += 1;
        }
        if self.pending < RETRAIN_BATCH {
            return false;
        }
        *self = Self::train(std::mem::take(&mut self.history));
        true
    }

    pub fn pending(&self) -> usize {
        self.pending
    }
}

/// A fresh copy of the peer's training data, for a newly started instance.
pub fn sync_training_data(peer: &TrainingState) -> TrainingState {
    peer.clone()
}

pub fn recommend(
    mode: RecommenderMode,
    state: &TrainingState,
    user: Option<UserId>,
    cart: &[ProductId],
    viewed: Option<ProductId>,
    k: usize,
) -> Recommendation {
    let mut exclusions: BTreeSet<ProductId> = cart.iter().copied().collect();
    exclusions.extend(viewed);
    if mode == RecommenderMode::Full {
        if let Some(ratings) = user.and_then(|u| state.matrix.user(u)) {
            let scored: Recommendation = state
                .matrix
                .items()
                .into_iter()
                .filter(|i| !exclusions.contains(i) && !ratings.contains_key(i))
                .filter_map(|i| predict_slope_one(&state.model, ratings, i, Variant::Weighted).ok().map(|s| (i, s)))
                .collect();
            if !scored.is_empty() {
                return rank(scored, k);
            }
        }
    }
    popularity_topk(&state.history, k, &exclusions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::data::OrderId;

    fn order(id: u32, user: u32, items: &[u32]) -> Order {
        Order { id: OrderId(id), user: UserId(user), products: items.iter().map(|&p| ProductId(p)).collect(), timestamp: 0 }
    }

    fn worked_example() -> RatingMatrix {
        RatingMatrix::from_entries([
            (UserId(1), ProductId(1), 1.0),
            (UserId(1), ProductId(2), 1.5),
            (UserId(2), ProductId(1), 2.0),
        ])
    }

    #[test]
    fn worked_example_deviation_and_prediction() {
        let m = train_matrix(&worked_example());
        assert_eq!(m.get(ProductId(2), ProductId(1)), Some(Deviation { dev: 0.5, count: 1 }));
        assert_eq!(m.get(ProductId(1), ProductId(2)).unwrap().dev, -0.5);
        let u2 = worked_example().user(UserId(2)).unwrap().clone();
        assert_eq!(predict_slope_one(&m, &u2, ProductId(2), Variant::Plain), Ok(2.5));
        assert_eq!(predict_slope_one(&m, &u2, ProductId(2), Variant::Weighted), Ok(2.5));
        assert_eq!(predict_slope_one(&m, &u2, ProductId(9), Variant::Plain), Err(NoData));
    }

    #[test]
    fn empty_history_gives_empty_model() {
        assert!(train_slope_one(&[]).is_empty());
        assert!(popularity_topk(&[], 3, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn popularity_counts_and_breaks_ties_by_id() {
        let h = [order(0, 1, &[1, 2]), order(1, 2, &[1, 3]), order(2, 3, &[1, 2])];
        assert_eq!(popularity_topk(&h, 2, &BTreeSet::new()), vec![(ProductId(1), 3.0), (ProductId(2), 2.0)]);
        let tie = [order(0, 1, &[3]), order(1, 1, &[2])];
        assert_eq!(popularity_topk(&tie, 2, &BTreeSet::new())[0].0, ProductId(2));
        let ex: BTreeSet<_> = [ProductId(1)].into();
        assert_eq!(popularity_topk(&h, 2, &ex), vec![(ProductId(2), 2.0), (ProductId(3), 1.0)]);
    }

    #[test]
    fn recommend_excludes_cart_and_viewed() {
        let h = [order(0, 1, &[1, 2, 3]), order(1, 2, &[1, 4]), order(2, 3, &[5, 1])];
        let s = TrainingState::train(h.to_vec());
        for mode in [RecommenderMode::LowPower, RecommenderMode::Full] {
            let r = recommend(mode, &s, Some(UserId(2)), &[ProductId(2)], Some(ProductId(5)), 3);
            assert!(r.len() <= 3);
            assert!(r.iter().all(|(p, _)| *p != ProductId(2) && *p != ProductId(5)));
        }
    }

    #[test]
    fn anonymous_full_mode_falls_back_to_popularity() {
        let h = [order(0, 1, &[1, 2]), order(1, 2, &[1])];
        let s = TrainingState::train(h.to_vec());
        assert_eq!(
            recommend(RecommenderMode::Full, &s, None, &[], None, 3),
            recommend(RecommenderMode::LowPower, &s, None, &[], None, 3)
        );
    }

    #[test]
    fn retrain_after_a_batch() {
        let mut s = TrainingState::train(vec![]);
        assert!(!s.observe_orders((0..9).map(|i| order(i, 1, &[1, 2]))));
        assert!(s.model.is_empty());
        assert!(s.observe_orders([order(9, 1, &[1, 2])]));
        assert_eq!(s.pending(), 0);
        assert!(!s.model.is_empty());
    }

    #[test]
    fn sync_copies_peer() {
        let peer = TrainingState::train(vec![order(0, 1, &[1, 2]), order(1, 2, &[2, 3])]);
        let copy = sync_training_data(&peer);
        assert_eq!(copy, peer);
        assert_eq!(
            recommend(RecommenderMode::Full, &copy, Some(UserId(1)), &[], None, 3),
            recommend(RecommenderMode::Full, &peer, Some(UserId(1)), &[], None, 3)
        );
        assert!(sync_training_data(&TrainingState::default()).model.is_empty());
    }
}
