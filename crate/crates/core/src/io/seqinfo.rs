use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::engine::EngineConfig;
use crate::error::{Error, Result};

/// Sequence metadata from `seqinfo.ini`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub name: String,
    pub frame_count: u32,
    pub frame_rate: f64,
    pub width: u32,
    pub height: u32,
    /// Image directory relative to the sequence, if any.
    pub image_dir: Option<String>,
    /// Precomputed feature directory relative to the sequence, if any.
    pub feature_dir: Option<String>,
    pub feature_stride: Option<f64>,
    pub feature_channels: Option<usize>,
}

fn parse_ini(path: &Path) -> Result<HashMap<(String, String), String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut section = String::new();
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim_end_matches('\r').trim();
        if l.is_empty() || l.starts_with(';') || l.starts_with('#') {
            continue;
        }
        if let Some(rest) = l.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("unterminated section header `{l}`"),
                });
            };
            section = name.trim().to_string();
            continue;
        }
        let Some((k, v)) = l.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `key=value`, found `{l}`"),
            });
        };
        out.insert((section.clone(), k.trim().to_string()), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_seqinfo(path: &Path) -> Result<SequenceMeta> {
    let ini = parse_ini(path)?;
    let get = |k: &str| ini.get(&("Sequence".to_string(), k.to_string()));
    let required = |k: &str| {
        get(k).ok_or_else(|| Error::MissingKey {
            path: path.to_path_buf(),
            key: k.to_string(),
        })
    };
    fn num<T: std::str::FromStr>(path: &Path, k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{k}: cannot parse `{v}`"),
        })
    }
    let frame_rate: f64 = num(path, "frameRate", required("frameRate")?)?;
    let frame_count: u32 = num(path, "seqLength", required("seqLength")?)?;
    let width: u32 = num(path, "imWidth", required("imWidth")?)?;
    let height: u32 = num(path, "imHeight", required("imHeight")?)?;
    if !(frame_rate > 0.0 && frame_rate.is_finite()) || width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "{}: frame rate and image size must be positive",
            path.display()
        )));
    }
    let name = get("name").cloned().unwrap_or_else(|| {
        path.parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(SequenceMeta {
        name,
        frame_count,
        frame_rate,
        width,
        height,
        image_dir: get("imDir").cloned(),
        feature_dir: get("featureDir").cloned(),
        feature_stride: get("featureStride").map(|v| num(path, "featureStride", v)).transpose()?,
        feature_channels: get("featureChannels")
            .map(|v| num(path, "featureChannels", v))
            .transpose()?,
    })
}

pub fn write_seqinfo(meta: &SequenceMeta, path: &Path) -> Result<()> {
    let mut s = String::from("[Sequence]\n");
    let _ = writeln!(s, "name={}", meta.name);
    if let Some(d) = &meta.image_dir {
        let _ = writeln!(s, "imDir={d}");
    }
    let _ = writeln!(s, "frameRate={}", meta.frame_rate);
    let _ = writeln!(s, "seqLength={}", meta.frame_count);
    let _ = writeln!(s, "imWidth={}", meta.width);
    let _ = writeln!(s, "imHeight={}", meta.height);
    if let Some(d) = &meta.feature_dir {
        let _ = writeln!(s, "featureDir={d}");
    }
    if let Some(v) = meta.feature_stride {
        let _ = writeln!(s, "featureStride={v}");
    }
    if let Some(v) = meta.feature_channels {
        let _ = writeln!(s, "featureChannels={v}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Applies `key = value` lines from `text` on top of `base`. Unknown keys
/// are reported with a warning and ignored.
pub fn parse_config(text: &str, path: &Path, mut base: EngineConfig) -> Result<EngineConfig> {
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim_end_matches('\r');
        let l = l.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{l}`")))?;
        match base.set(k.trim(), v) {
            Ok(true) => {}
            Ok(false) => log::warn!("{}:{}: unknown key `{}` ignored", path.display(), i + 1, k.trim()),
            Err(e) => return Err(err(e.to_string())),
        }
    }
    base.validate()?;
    Ok(base)
}

/// Loads a configuration file over the defaults in `base`; `None` keeps
/// `base` unchanged.
pub fn load_config(path: Option<&Path>, base: EngineConfig) -> Result<EngineConfig> {
    match path {
        None => {
            base.validate()?;
            Ok(base)
        }
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text, p, base)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seqinfo_round_trip_and_constants() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("seqinfo.ini");
        fs::write(
            &p,
            "[Sequence]\r\nname=ETH\nimDir=img1\nframeRate=30\nseqLength=100\nimWidth=640\nimHeight=480\nimExt=.jpg\n",
        )
        .unwrap();
        let m = read_seqinfo(&p).unwrap();
        assert_eq!((m.frame_count, m.width, m.height), (100, 640, 480));
        let c = EngineConfig {
            frame_rate: m.frame_rate,
            ..EngineConfig::default()
        };
        assert_eq!((c.t_init(), c.t_term(), c.t_gap()), (6, 60, 9));
        let q = d.path().join("out.ini");
        write_seqinfo(&m, &q).unwrap();
        assert_eq!(read_seqinfo(&q).unwrap(), m);
    }

    #[test]
    fn seqinfo_errors() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("a.ini");
        fs::write(&p, "[Sequence]\nframeRate=30\nseqLength 100\n").unwrap();
        assert!(matches!(read_seqinfo(&p), Err(Error::Parse { line: 3, .. })));
        fs::write(&p, "[Sequence]\nframeRate=30\nseqLength=100\nimWidth=5\n").unwrap();
        match read_seqinfo(&p) {
            Err(Error::MissingKey { key, .. }) => assert_eq!(key, "imHeight"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_file() {
        let c = load_config(None, EngineConfig::default()).unwrap();
        assert_eq!(c, EngineConfig::default());
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("c.txt");
        fs::write(&p, "# comment\np0 = 0.6\nmystery = 3\nablation = p2  # trailing\n").unwrap();
        let c = load_config(Some(&p), EngineConfig::default()).unwrap();
        assert_eq!(c.p0, 0.6);
        assert!(c.flags.motion && !c.flags.spatial_attention);
        fs::write(&p, "p0 0.6\n").unwrap();
        assert!(matches!(load_config(Some(&p), EngineConfig::default()), Err(Error::Parse { line: 1, .. })));
        fs::write(&p, "p0 = 2\n").unwrap();
        assert!(load_config(Some(&p), EngineConfig::default()).is_err());
    }
}
