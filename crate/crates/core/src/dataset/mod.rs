//! Dataset vocabulary, the JSONL manifest, the normal-only training guard and
//! the synthetic corpus generator.

mod category;
mod manifest;
pub mod synth;

pub use category::{DefectFamily, Material, WeldCategory, WeldType};
pub use manifest::{validate_manifest, Manifest, ManifestEntry, ValidationReport};
pub use synth::{generate_corpus, Generator, SynthSample, SynthSpec};

use crate::error::{Error, Result};

/// Training items that are guaranteed to come from good welds.
///
/// The only constructor checks every category, so a value of this type is
/// proof that no defect sample can reach an autoencoder's training loop.
#[derive(Debug, Clone)]
pub struct NormalCorpus<T> {
    ids: Vec<String>,
    items: Vec<T>,
}

impl<T> NormalCorpus<T> {
    pub fn new<I, S>(labeled: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, WeldCategory, T)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut items = Vec::new();
        for (id, category, item) in labeled {
            let id = id.into();
            if !category.is_good() {
                return Err(Error::AnomalousTrainingData {
                    id,
                    category: category.id().to_string(),
                });
            }
            ids.push(id);
            items.push(item);
        }
        Ok(NormalCorpus { ids, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}
