#![allow(dead_code)]

use std::cmp::Ordering;

use clipse_core::{Embedding, ImageRecord, ModelRef, SearchIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MODEL_ID: &str = "test/random";

/// A random index of `n` records at dimension `d`. Roughly one record in
/// eight reuses an earlier vector, and some vectors are small integers, so
/// exact score ties are common.
pub fn random_index(seed: u64, n: usize, d: usize) -> SearchIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors: Vec<Vec<f32>> = Vec::with_capacity(n);
    for _ in 0..n {
        let v = if !vectors.is_empty() && rng.random_ratio(1, 8) {
            vectors[rng.random_range(0..vectors.len())].clone()
        } else if rng.random_ratio(1, 8) {
            let mut v: Vec<f32> = (0..d).map(|_| rng.random_range(-2..=2) as f32).collect();
            v[0] = 1.0;
            v
        } else {
            (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect()
        };
        vectors.push(v);
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let records = vectors
        .into_iter()
        .zip(ids)
        .map(|(v, id)| {
            let dir = ["", "a/", "b/c/"][id % 3];
            ImageRecord::new(format!("{dir}img{id:05}.png"), Embedding::new(v).unwrap())
        })
        .collect();
    SearchIndex::new(ModelRef::new(MODEL_ID, d).unwrap(), records, None).unwrap()
}

pub fn random_query(seed: u64, d: usize) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Embedding::new((0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Brute force: every score computed on its own, everything sorted, first
/// `k` kept. Returns `(path, score)` pairs.
pub fn naive_top_k(index: &SearchIndex, q: &Embedding, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = index
        .records()
        .iter()
        .map(|r| {
            let mut s = 0.0f64;
            for (a, b) in r.embedding.as_slice().iter().zip(q.as_slice()) {
                s += f64::from(*a) * f64::from(*b);
            }
            (r.path.clone(), s)
        })
        .collect();
    all.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    all.truncate(k);
    all
}
