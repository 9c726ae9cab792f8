//! File formats: MOTChallenge CSV, sequence metadata, configuration and
//! engine checkpoints.

mod checkpoint;
mod mot;
mod seqinfo;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointTrack};
pub use mot::{
    format_results, normalize_scores, normalize_stream, read_detections, read_ground_truth,
    read_results, write_detections, write_ground_truth, write_results, DetectionStream,
    LabeledBox, LabeledFrames, ResultRow,
};
pub use seqinfo::{load_config, parse_config, read_seqinfo, write_seqinfo, SequenceMeta};
