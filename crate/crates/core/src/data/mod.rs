//! Corpus ingestion, frame preprocessing, the synthetic corpus generator and
//! batching.

mod batch;
mod blur;
mod ingest;
mod resize;
pub mod synth;

pub use batch::{images_to_tensor, BatchIterator, BatchState};
pub use blur::{
    clean_sequence, filter_blurred, sharpness_quantile, subsample_frames, variance_of_laplacian,
    Frame, FrameSequence,
};
pub use ingest::{ingest_folder, read_manifest, write_corpus, ManifestRecord, MANIFEST_FILE};
pub use resize::resize_image;
pub use synth::{synth_generate, SynthConfig};

use crate::datamodel::{check_patient_disjoint, DatasetSplit, SplitName};
use crate::error::Result;

/// The three splits of one corpus, with split invariants checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: DatasetSplit,
    pub validation: DatasetSplit,
    pub test: DatasetSplit,
}

impl Corpus {
    pub fn new(train: DatasetSplit, validation: DatasetSplit, test: DatasetSplit) -> Result<Self> {
        for split in [&train, &validation, &test] {
            split.check_labels()?;
        }
        check_patient_disjoint(&[&train, &validation, &test])?;
        Ok(Self {
            train,
            validation,
            test,
        })
    }

    pub fn split(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
