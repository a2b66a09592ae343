//! Corpus data model and synthetic planted-alignment generation.
//!
//! Items are modality-tagged token-feature sequences; an image and its
//! captions are noisy views of a shared latent vector, which gives the
//! retrieval task a tunable difficulty knob (the noise level) and a known
//! optimum. Splits operate at the image level so captions never leak
//! across partitions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::{Error, Result};

/// Which side of the cross-modal pairing an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Modality {
    Image,
    Caption,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Image => 0,
            Modality::Caption => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Image),
            1 => Some(Modality::Caption),
            _ => None,
        }
    }
}

/// One retrievable item: a sequence of token feature vectors.
///
/// Tokens are stored row-major as `token_count x dim` little f32 values,
/// matching the on-disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: u32,
    pub modality: Modality,
    dim: usize,
    tokens: Vec<f32>,
}

impl Item {
    pub fn new(id: u32, modality: Modality, dim: usize, tokens: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec(format!("item {id}: zero feature dim")));
        }
        if tokens.is_empty() || !tokens.len().is_multiple_of(dim) {
            return Err(Error::InvalidSpec(format!(
                "item {id}: token payload of {} values is not a positive multiple of dim {dim}",
                tokens.len()
            )));
        }
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { id });
        }
        Ok(Item {
            id,
            modality,
            dim,
            tokens,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len() / self.dim
    }

    pub fn token(&self, t: usize) -> &[f32] {
        &self.tokens[t * self.dim..(t + 1) * self.dim]
    }

    pub fn raw_tokens(&self) -> &[f32] {
        &self.tokens
    }

    /// Arithmetic mean of the raw token vectors, in f64.
    pub fn mean_token(&self) -> Vec<f64> {
        let t = self.token_count() as f64;
        let mut out = alloc::vec![0.0; self.dim];
        for row in 0..self.token_count() {
            for (acc, v) in out.iter_mut().zip(self.token(row)) {
                *acc += *v as f64;
            }
        }
        for acc in &mut out {
            *acc /= t;
        }
        out
    }
}

/// A set of items plus the gold cross-modal alignment.
#[derive(Debug, Clone)]
pub struct Corpus {
    feature_dim: usize,
    items: Vec<Item>,
    /// Sorted, deduplicated (image_id, caption_id) pairs.
    gold: Vec<(u32, u32)>,
    by_id: BTreeMap<u32, usize>,
    captions_of: BTreeMap<u32, Vec<u32>>,
    images_of: BTreeMap<u32, Vec<u32>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.feature_dim == other.feature_dim
            && self.items == other.items
            && self.gold == other.gold
    }
}

impl Corpus {
    /// Validates items and gold pairs and builds the lookup tables.
    pub fn new(feature_dim: usize, items: Vec<Item>, mut gold: Vec<(u32, u32)>) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidSpec("feature_dim must be >= 1".into()));
        }
        let mut by_id = BTreeMap::new();
        for (idx, item) in items.iter().enumerate() {
            if item.dim != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    actual: item.dim,
                });
            }
            if by_id.insert(item.id, idx).is_some() {
                return Err(Error::DuplicateId { id: item.id });
            }
        }
        gold.sort_unstable();
        gold.dedup();
        let mut captions_of: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        let mut images_of: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &(image_id, caption_id) in &gold {
            let image = items
                .get(*by_id.get(&image_id).ok_or(Error::DanglingGoldId { id: image_id })?)
                .expect("index from by_id");
            let caption = items
                .get(
                    *by_id
                        .get(&caption_id)
                        .ok_or(Error::DanglingGoldId { id: caption_id })?,
                )
                .expect("index from by_id");
            if image.modality != Modality::Image || caption.modality != Modality::Caption {
                return Err(Error::GoldModality {
                    image_id,
                    caption_id,
                });
            }
            captions_of.entry(image_id).or_default().push(caption_id);
            images_of.entry(caption_id).or_default().push(image_id);
        }
        Ok(Corpus {
            feature_dim,
            items,
            gold,
            by_id,
            captions_of,
            images_of,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn gold(&self) -> &[(u32, u32)] {
        &self.gold
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: u32) -> Option<&Item> {
        self.by_id.get(&id).map(|&idx| &self.items[idx])
    }

    pub fn is_gold(&self, image_id: u32, caption_id: u32) -> bool {
        self.gold.binary_search(&(image_id, caption_id)).is_ok()
    }

    pub fn gold_captions(&self, image_id: u32) -> &[u32] {
        self.captions_of.get(&image_id).map_or(&[], |v| v)
    }

    pub fn gold_images(&self, caption_id: u32) -> &[u32] {
        self.images_of.get(&caption_id).map_or(&[], |v| v)
    }

    pub fn ids_of(&self, modality: Modality) -> Vec<u32> {
        self.items
            .iter()
            .filter(|it| it.modality == modality)
            .map(|it| it.id)
            .collect()
    }

    /// Absorbs foreign items (e.g. distractors), remapping their ids past the
    /// current maximum. Returns the new ids in input order.
    pub fn absorb_items(&mut self, foreign: &[Item]) -> Result<Vec<u32>> {
        let first_free = self.items.iter().map(|it| it.id).max().map_or(0, |m| m + 1);
        let mut new_ids = Vec::with_capacity(foreign.len());
        for (offset, item) in foreign.iter().enumerate() {
            if item.dim != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim,
                    actual: item.dim,
                });
            }
            let id = first_free + offset as u32;
            let mut cloned = item.clone();
            cloned.id = id;
            self.by_id.insert(id, self.items.len());
            self.items.push(cloned);
            new_ids.push(id);
        }
        Ok(new_ids)
    }
}

/// Recipe for a synthetic planted-alignment corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub n_pairs: usize,
    pub tokens_per_item: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub captions_per_image: usize,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::InvalidSpec("n_pairs must be >= 1".into()));
        }
        if self.tokens_per_item == 0 {
            return Err(Error::InvalidSpec("tokens_per_item must be >= 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidSpec("feature_dim must be >= 1".into()));
        }
        if self.captions_per_image == 0 {
            return Err(Error::InvalidSpec("captions_per_image must be >= 1".into()));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidSpec("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Generates a corpus where image `j` and its captions are noisy views of a
/// shared latent vector drawn from a standard normal.
///
/// Image ids are `0..n_pairs`; caption ids follow, grouped by image. The
/// layout and every drawn value are fully determined by `spec.seed`.
pub fn generate_planted(spec: &PlantedSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let d = spec.feature_dim;
    let t = spec.tokens_per_item;
    let cpi = spec.captions_per_image;
    let n = spec.n_pairs;

    let mut items = Vec::with_capacity(n * (1 + cpi));
    let mut captions: Vec<Item> = Vec::with_capacity(n * cpi);
    let mut gold = Vec::with_capacity(n * cpi);
    let mut latent = alloc::vec![0.0f64; d];

    for j in 0..n {
        for z in latent.iter_mut() {
            *z = rng.normal();
        }
        let mut image_tokens = Vec::with_capacity(t * d);
        for _ in 0..t {
            for &z in &latent {
                image_tokens.push((z + spec.noise_sigma * rng.normal()) as f32);
            }
        }
        items.push(Item::new(j as u32, Modality::Image, d, image_tokens)?);
        for c in 0..cpi {
            let caption_id = (n + j * cpi + c) as u32;
            let mut caption_tokens = Vec::with_capacity(t * d);
            for _ in 0..t {
                for &z in &latent {
                    caption_tokens.push((z + spec.noise_sigma * rng.normal()) as f32);
                }
            }
            captions.push(Item::new(caption_id, Modality::Caption, d, caption_tokens)?);
            gold.push((j as u32, caption_id));
        }
    }
    items.append(&mut captions);
    Corpus::new(d, items, gold)
}

/// Splits a corpus at the image level into (train, dev, test).
///
/// All captions of an image travel with it; the partitions are disjoint and
/// exhaustive and the assignment is determined by `seed`. Items keep their
/// original ids.
pub fn split(
    corpus: &Corpus,
    train_frac: f64,
    dev_frac: f64,
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    if !(train_frac > 0.0 && train_frac < 1.0 && dev_frac > 0.0 && dev_frac < 1.0) {
        return Err(Error::InvalidSpec("split fractions must lie in (0, 1)".into()));
    }
    if train_frac + dev_frac >= 1.0 {
        return Err(Error::InvalidSpec("split fractions must sum below 1".into()));
    }
    let mut image_ids = corpus.ids_of(Modality::Image);
    let n = image_ids.len();
    let n_train = (n as f64 * train_frac) as usize;
    let n_dev = (n as f64 * dev_frac) as usize;
    let n_test = n - n_train - n_dev;
    if n_train == 0 || n_dev == 0 || n_test == 0 {
        return Err(Error::EmptySplit);
    }
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut image_ids);

    let take = |slice: &[u32]| -> Result<Corpus> {
        let chosen: BTreeSet<u32> = slice.iter().copied().collect();
        let mut keep: BTreeSet<u32> = chosen.clone();
        for &img in &chosen {
            keep.extend(corpus.gold_captions(img).iter().copied());
        }
        let items: Vec<Item> = corpus
            .items()
            .iter()
            .filter(|it| keep.contains(&it.id))
            .cloned()
            .collect();
        let gold: Vec<(u32, u32)> = corpus
            .gold()
            .iter()
            .filter(|(img, _)| chosen.contains(img))
            .copied()
            .collect();
        Corpus::new(corpus.feature_dim(), items, gold)
    };

    let train = take(&image_ids[..n_train])?;
    let dev = take(&image_ids[n_train..n_train + n_dev])?;
    let test = take(&image_ids[n_train + n_dev..])?;
    Ok((train, dev, test))
}
