//! Image provider with LFU cache, in lite (no resizing) and full flavors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::data::ProductId;
use super::lfu::LfuCache;
use crate::simnet::SimTime;

pub const DEFAULT_IMAGE_CACHE_CAPACITY: usize = 64;
pub const CACHED_SERVICE_MS: SimTime = 3;
pub const RESIZE_SERVICE_MS: SimTime = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeLabel {
    #[serde(rename = "64")]
    S64,
    #[serde(rename = "128")]
    S128,
    #[serde(rename = "256")]
    S256,
    #[serde(rename = "full")]
    Full,
}

impl SizeLabel {
    pub const ALL: [SizeLabel; 4] = [Self::S64, Self::S128, Self::S256, Self::Full];

    pub fn byte_len(self) -> usize {
        match self {
            Self::S64 => 4 * 1024,
            Self::S128 => 16 * 1024,
            Self::S256 => 64 * 1024,
            Self::Full => 256 * 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFlavor {
    Lite,
    Full,
}

/// Synthetic image; the bytes are generated on demand from the metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBlob {
    pub product: ProductId,
    pub size: SizeLabel,
    pub placeholder: bool,
}

impl ImageBlob {
    pub fn byte_len(&self) -> usize {
        self.size.byte_len()
    }

    pub fn bytes(&self) -> Vec<u8> {
        let seed = self.product.0.wrapping_mul(31).wrapping_add(u32::from(self.placeholder));
        (0..self.byte_len()).map(|i| (seed as usize ^ i) as u8).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unknown product {0:?}")]
pub struct UnknownProduct(pub ProductId);

#[derive(Debug, Clone)]
pub struct ImageProvider {
    pub flavor: ImageFlavor,
    products: u32,
    cache: LfuCache<(ProductId, SizeLabel), ImageBlob>,
    resizes: u64,
}

impl ImageProvider {
    /// Serves product ids `0..products`.
    pub fn new(flavor: ImageFlavor, products: u32, cache_capacity: usize) -> Self {
        Self { flavor, products, cache: LfuCache::new(cache_capacity), resizes: 0 }
    }

    pub fn resizes(&self) -> u64 {
        self.resizes
    }

    pub fn cache(&self) -> &LfuCache<(ProductId, SizeLabel), ImageBlob> {
        &self.cache
    }

    /// Returns the blob and the simulated service time. The lite flavor
    /// ignores the requested size and always delivers the original.
    pub fn get(&mut self, product: ProductId, size: SizeLabel) -> Result<(ImageBlob, SimTime), UnknownProduct> {
        if product.0 >= self.products {
            return Err(UnknownProduct(product));
        }
        let delivered = match self.flavor {
            ImageFlavor::Lite => SizeLabel::Full,
            ImageFlavor::Full => size,
        };
        let key = (product, delivered);
        if let Some(blob) = self.cache.get(&key) {
            return Ok((blob.clone(), CACHED_SERVICE_MS));
        }
        let blob = ImageBlob { product, size: delivered, placeholder: false };
        self.cache.insert(key, blob.clone());
        let service = if delivered == SizeLabel::Full {
            // The original needs no resize.
            CACHED_SERVICE_MS
        } else {
            self.resizes += 1;
            RESIZE_SERVICE_MS
        };
        Ok((blob, service))
    }
}

/// Placeholder image served by the local static image service.
pub fn placeholder(product: ProductId, size: SizeLabel) -> ImageBlob {
    ImageBlob { product, size, placeholder: true }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_flavor_resizes_once_then_hits_cache() {
        let mut p = ImageProvider::new(ImageFlavor::Full, 50, DEFAULT_IMAGE_CACHE_CAPACITY);
        let (b, t) = p.get(ProductId(1), SizeLabel::S64).unwrap();
        assert_eq!((b.size, t, p.resizes()), (SizeLabel::S64, RESIZE_SERVICE_MS, 1));
        let (_, t) = p.get(ProductId(1), SizeLabel::S64).unwrap();
        assert_eq!((t, p.resizes()), (CACHED_SERVICE_MS, 1));
    }

    #[test]
    fn lite_flavor_returns_original_size() {
        let mut p = ImageProvider::new(ImageFlavor::Lite, 50, DEFAULT_IMAGE_CACHE_CAPACITY);
        for size in SizeLabel::ALL {
            let (b, _) = p.get(ProductId(1), size).unwrap();
            assert_eq!(b.size, SizeLabel::Full);
            assert!(!b.placeholder);
        }
        assert_eq!(p.resizes(), 0);
        assert!(p.cache().contains(&(ProductId(1), SizeLabel::Full)));
    }

    #[test]
    fn unknown_product() {
        let mut p = ImageProvider::new(ImageFlavor::Full, 50, 4);
        assert_eq!(p.get(ProductId(50), SizeLabel::S64), Err(UnknownProduct(ProductId(50))));
    }

    #[test]
    fn blob_bytes_have_size_dependent_length() {
        let b = placeholder(ProductId(2), SizeLabel::S128);
        assert!(b.placeholder);
        assert_eq!(b.bytes().len(), 16 * 1024);
        assert_eq!(serde_json::to_string(&SizeLabel::S64).unwrap(), "\"64\"");
    }
}
