//! Engine checkpoints: the configuration as text plus every live track's
//! branch parameters as tensor files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::branch::Branch;
use crate::domain::TargetState;
use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::features::{read_feature_file, write_feature_file};
use crate::tensor::{LayerParams, Tensor3};

const LAYERS: [&str; 5] = ["vis_conv", "vis_fc", "att", "cls_conv", "cls_fc"];

#[derive(Debug, Clone)]
pub struct CheckpointTrack {
    pub id: u64,
    pub state: TargetState,
    pub branch: Branch,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: EngineConfig,
    pub frame: Option<u32>,
    pub tracks: Vec<CheckpointTrack>,
}

fn vector(v: &[f64]) -> Result<Tensor3> {
    Tensor3::from_vec(v.len().max(1), 1, 1, if v.is_empty() { vec![0.0] } else { v.to_vec() })
}

/// Writes `config.txt`, `tracks.txt` and `track_<id>_<layer>_{w,b}.fmap`
/// under `dir`. Tensor payloads are 32-bit, so restored weights are
/// rounded to single precision.
pub fn save_checkpoint(engine: &Engine, frame: Option<u32>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("config.txt");
    fs::write(&p, engine.config().to_text()).map_err(|e| Error::io(&p, e))?;
    let mut index = String::new();
    if let Some(f) = frame {
        let _ = writeln!(index, "frame {f}");
    }
    for t in engine.tracks() {
        let s = t.state;
        let g = t.branch.temporal;
        let _ = writeln!(
            index,
            "track {} {} {} {} {} {} {} {}",
            t.id.0, s.x, s.y, s.w, s.h, g.gamma, g.beta, g.bias
        );
        for (name, layer) in LAYERS.iter().zip(t.branch.layers()) {
            write_feature_file(&dir.join(format!("track_{}_{name}_w.fmap", t.id.0)), &vector(&layer.weights)?)?;
            write_feature_file(&dir.join(format!("track_{}_{name}_b.fmap", t.id.0)), &vector(&layer.bias)?)?;
        }
    }
    let p = dir.join("tracks.txt");
    fs::write(&p, index).map_err(|e| Error::io(&p, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let cp = dir.join("config.txt");
    let text = fs::read_to_string(&cp).map_err(|e| Error::io(&cp, e))?;
    let config = super::parse_config(&text, &cp, EngineConfig::default())?;
    let tp = dir.join("tracks.txt");
    let index = fs::read_to_string(&tp).map_err(|e| Error::io(&tp, e))?;
    let mut frame = None;
    let mut tracks = Vec::new();
    for (i, line) in index.lines().enumerate() {
        let err = |m: &str| Error::Parse {
            path: tp.clone(),
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.first() {
            None => continue,
            Some(&"frame") => {
                frame = Some(f.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| err("bad frame line"))?);
            }
            Some(&"track") if f.len() == 9 => {
                let id: u64 = f[1].parse().map_err(|_| err("bad track id"))?;
                let n: Vec<f64> = f[2..]
                    .iter()
                    .map(|v| v.parse().map_err(|_| err("bad number")))
                    .collect::<Result<_>>()?;
                let state = TargetState::new(n[0], n[1], n[2], n[3])?;
                let mut branch = Branch::zeros(config.geometry, config.history_cap);
                branch.temporal.gamma = n[4];
                branch.temporal.beta = n[5];
                branch.temporal.bias = n[6];
                for (name, layer) in LAYERS.iter().zip(branch.layers_mut()) {
                    let w = read_feature_file(&dir.join(format!("track_{id}_{name}_w.fmap")))?.into_vec();
                    let b = read_feature_file(&dir.join(format!("track_{id}_{name}_b.fmap")))?.into_vec();
                    let (wl, bl) = (layer.weights.len(), layer.bias.len());
                    *layer = LayerParams::from_parts(layer.shape(), w[..wl.min(w.len())].to_vec(), b[..bl.min(b.len())].to_vec())?;
                }
                tracks.push(CheckpointTrack { id, state, branch });
            }
            Some(_) => return Err(err("expected `frame` or `track` line")),
        }
    }
    Ok(Checkpoint { config, frame, tracks })
}
