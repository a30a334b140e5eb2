use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;

use super::choice::extract_choice;
use super::records::QARecord;
use crate::curation::client::{ChatClient, Message};
use crate::error::{Error, Result};
use crate::language_model::GenerateConfig;
use crate::model::SlideChat;
use crate::numerics::SeedStream;
use crate::slide_io::{Raster, TissueFilter, THUMBNAIL_SIDE};
use crate::training::encode_slide;

pub const MAJORITY_VOTE_PATCHES: usize = 30;

/// A model answering a question about an image, or about nothing for
/// text-only protocols.
pub trait VqaModel: Sync {
    fn reply(&self, image: Option<&Raster>, prompt: &str) -> Result<String>;
}

/// Plurality letter; ties go to the alphabetically first. `None` votes
/// are ignored.
pub fn plurality(votes: &[Option<char>]) -> Option<char> {
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    for v in votes.iter().flatten() {
        *counts.entry(*v).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|&(_, c)| c == best).map(|(l, _)| l)
}

/// Indices of the patches sampled without replacement, seeded; all of
/// them when fewer than `k`, in ascending order.
pub fn sample_patches(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut idx = sample(&mut SeedStream::new(seed).rng("majority-vote"), n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Answers on up to `k` sampled patches and returns the plurality letter.
pub fn majority_vote_baseline(
    patches: &[Raster],
    record: &QARecord,
    model: &dyn VqaModel,
    k: usize,
    seed: u64,
) -> Result<Option<char>> {
    if patches.is_empty() {
        return Err(Error::usage(format!("slide {} has no tissue patches", record.slide_id)));
    }
    let prompt = record.prompt();
    let votes = sample_patches(patches.len(), k, seed)
        .into_iter()
        .map(|i| Ok(extract_choice(&model.reply(Some(&patches[i]), &prompt)?, &record.options)))
        .collect::<Result<Vec<_>>>()?;
    Ok(plurality(&votes))
}

/// One call on the slide's 1024-pixel thumbnail.
pub fn thumbnail_baseline(thumbnail: &Path, record: &QARecord, model: &dyn VqaModel) -> Result<Option<char>> {
    let thumb = Raster::read(thumbnail)?;
    if thumb.width() != THUMBNAIL_SIDE || thumb.height() != THUMBNAIL_SIDE {
        return Err(Error::usage(format!(
            "thumbnail {} is {}x{}, expected {THUMBNAIL_SIDE}x{THUMBNAIL_SIDE}",
            thumbnail.display(),
            thumb.width(),
            thumb.height()
        )));
    }
    Ok(extract_choice(&model.reply(Some(&thumb), &record.prompt())?, &record.options))
}

/// Question and options only.
pub fn text_only_baseline(record: &QARecord, model: &dyn VqaModel) -> Result<Option<char>> {
    Ok(extract_choice(&model.reply(None, &record.prompt())?, &record.options))
}

/// Text-only model backed by a chat client.
pub struct ChatModel<'a>(pub &'a dyn ChatClient);

impl VqaModel for ChatModel<'_> {
    fn reply(&self, image: Option<&Raster>, prompt: &str) -> Result<String> {
        if image.is_some() {
            return Err(Error::usage(format!("{} is a text-only model", self.0.model())));
        }
        self.0.complete(&[Message::user(prompt)])
    }
}

/// The trained model answering from tiled and encoded images.
pub struct SlideChatModel<'a> {
    pub model: &'a SlideChat,
    pub filter: TissueFilter,
    pub generate: GenerateConfig,
}

impl VqaModel for SlideChatModel<'_> {
    fn reply(&self, image: Option<&Raster>, prompt: &str) -> Result<String> {
        let image = image.ok_or_else(|| Error::usage("this model needs an image"))?;
        let (_, slide) = encode_slide(self.model, image, &self.filter)?;
        Ok(self.model.respond(&slide, prompt, &self.generate)?.text)
    }
}
