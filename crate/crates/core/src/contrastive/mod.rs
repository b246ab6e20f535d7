//! NT-Xent objective and contrastive pre-training.

mod ntxent;
mod pretrain;

pub use ntxent::{nt_xent_loss, NtXentOutput};
pub use pretrain::{
    embed_tracks, pretrain, EpochLog, NtXentConfig, PretrainConfig, PretrainData, PretrainedEncoder, Warmup,
};
