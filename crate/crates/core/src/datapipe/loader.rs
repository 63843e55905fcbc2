use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{read_container, FrameRecord, IMAGE_BYTES, IMAGE_SIDE};
use super::scale::{check_consecutive, scale_label, scale_pixel};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoaderConfig {
    pub seq_len: usize,
    pub batch_size: usize,
    /// Passes over the data in evaluation mode; ignored when training.
    pub epochs: usize,
    pub training: bool,
    pub seed: u64,
}

impl LoaderConfig {
    pub fn training(seq_len: usize, batch_size: usize, seed: u64) -> Self {
        Self { seq_len, batch_size, epochs: 1, training: true, seed }
    }

    pub fn evaluation(seq_len: usize, batch_size: usize) -> Self {
        Self { seq_len, batch_size, epochs: 1, training: false, seed: 0 }
    }

    pub fn buffer_size(&self) -> usize {
        10 * self.batch_size * self.seq_len
    }

    pub fn threshold(&self) -> usize {
        15 * self.seq_len
    }

    fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.batch_size == 0 {
            return Err(Error::Contract("sequence length and batch size must be at least 1".into()));
        }
        if !self.training && self.epochs == 0 {
            return Err(Error::Contract("evaluation needs at least one epoch".into()));
        }
        Ok(())
    }
}

/// Records of one or more containers, concatenated in the order given.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    records: Vec<FrameRecord>,
}

impl Dataset {
    pub fn open<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut records = Vec::new();
        for p in paths {
            records.extend(read_container(p.as_ref())?);
        }
        Ok(Self { records })
    }

    pub fn from_records(records: Vec<FrameRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Record indices after the repeat stage: `0..n` over and over, forever
/// when `epochs` is `None`.
#[derive(Clone, Debug)]
pub struct RepeatStream {
    n: usize,
    epochs: Option<usize>,
    epoch: usize,
    pos: usize,
}

impl RepeatStream {
    pub fn new(n: usize, epochs: Option<usize>) -> Self {
        Self { n, epochs, epoch: 0, pos: 0 }
    }
}

impl Iterator for RepeatStream {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.n == 0 || self.epochs.is_some_and(|e| self.epoch >= e) {
            return None;
        }
        let i = self.pos;
        self.pos += 1;
        if self.pos == self.n {
            self.pos = 0;
            self.epoch += 1;
        }
        Some(i)
    }
}

/// Model-ready batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    /// `B` rows of `L` frame ids.
    pub ids: Vec<Vec<String>>,
    /// `B×L×96×96×3` in `[−1, 1]`.
    pub images: Tensor<f32>,
    /// `B×L×2` (valence, arousal) in `[−1, 1]`.
    pub labels: Tensor<f32>,
}

impl SequenceBatch {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }
}

/// parse → repeat → window → consecutiveness filter → shuffle (training
/// only) → batch.
pub struct Loader {
    data: Arc<Dataset>,
    config: LoaderConfig,
    stream: RepeatStream,
    buffer: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
    pixels: [f32; 256],
}

impl Loader {
    /// Fails with [`Error::EmptyDataset`] unless one pass over the data
    /// contains at least one valid window.
    pub fn new(data: Arc<Dataset>, config: LoaderConfig) -> Result<Self> {
        config.validate()?;
        let mut probe = RepeatStream::new(data.len(), Some(1));
        let mut any = false;
        while let Some(w) = next_window(&mut probe, &data, config.seq_len)? {
            if w.is_some() {
                any = true;
                break;
            }
        }
        if !any {
            return Err(Error::EmptyDataset);
        }
        let epochs = (!config.training).then_some(config.epochs);
        Ok(Self {
            stream: RepeatStream::new(data.len(), epochs),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            buffer: Vec::new(),
            pixels: std::array::from_fn(|p| scale_pixel(p as u8)),
            data,
            config,
        })
    }

    pub fn config(&self) -> &LoaderConfig {
        &self.config
    }

    /// Next window passing the filter, or `None` once the stream ends.
    fn next_valid(&mut self) -> Result<Option<Vec<usize>>> {
        while let Some(w) = next_window(&mut self.stream, &self.data, self.config.seq_len)? {
            if let Some(w) = w {
                return Ok(Some(w));
            }
        }
        Ok(None)
    }

    fn next_shuffled(&mut self) -> Result<Option<Vec<usize>>> {
        if !self.config.training {
            return self.next_valid();
        }
        while self.buffer.len() < self.config.buffer_size() {
            match self.next_valid()? {
                Some(w) => self.buffer.push(w),
                None => break,
            }
        }
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let i = self.rng.random_range(0..self.buffer.len());
        Ok(Some(match self.next_valid()? {
            Some(w) => std::mem::replace(&mut self.buffer[i], w),
            None => self.buffer.swap_remove(i),
        }))
    }

    fn assemble(&self, windows: &[Vec<usize>]) -> Result<SequenceBatch> {
        let (b, l) = (windows.len(), self.config.seq_len);
        let mut images = Vec::with_capacity(b * l * IMAGE_BYTES);
        let mut labels = Vec::with_capacity(b * l * 2);
        let mut ids = Vec::with_capacity(b);
        for w in windows {
            let mut row = Vec::with_capacity(l);
            for &i in w {
                let r = &self.data.records()[i];
                images.extend(r.image.iter().map(|&p| self.pixels[p as usize]));
                labels.extend([scale_label(r.valence), scale_label(r.arousal)]);
                row.push(r.id.clone());
            }
            ids.push(row);
        }
        Ok(SequenceBatch {
            ids,
            images: Tensor::new(&[b, l, IMAGE_SIDE, IMAGE_SIDE, 3], images)?,
            labels: Tensor::new(&[b, l, 2], labels)?,
        })
    }
}

/// Pulls `len` indices; `None` when the stream ends first (the partial
/// window is dropped), `Some(None)` for a window failing the filter.
fn next_window(stream: &mut RepeatStream, data: &Dataset, len: usize) -> Result<Option<Option<Vec<usize>>>> {
    let w: Vec<usize> = stream.by_ref().take(len).collect();
    if w.len() < len {
        return Ok(None);
    }
    let ids: Vec<&str> = w.iter().map(|&i| data.records()[i].id.as_str()).collect();
    Ok(Some(check_consecutive(&ids)?.then_some(w)))
}

impl Iterator for Loader {
    type Item = Result<SequenceBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut windows = Vec::with_capacity(self.config.batch_size);
        while windows.len() < self.config.batch_size {
            match self.next_shuffled() {
                Ok(Some(w)) => windows.push(w),
                Ok(None) => break,
                Err(e) => return Some(Err(e)),
            }
        }
        if windows.is_empty() || (self.config.training && windows.len() < self.config.batch_size) {
            return None;
        }
        Some(self.assemble(&windows))
    }
}
