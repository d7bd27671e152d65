//! Dataset assembly: episode-ordered manifests, the blank/previous-frame
//! condition sampling protocol, and training-sample materialization.
//!
//! The condition draw for a given (epoch, index) is a pure function of the
//! master seed, so samples can be materialized in parallel or replayed after
//! a checkpoint resume without disturbing any other draw.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    blank_frame, load_png, resize, synthesize_lineart, to_greyscale, CannyParams, Frame,
};
use crate::num::Scalar;
use crate::rng::{stream, tag};

/// Input style: synthesized line art or plain luminance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lineart,
    Greyscale,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lineart => "lineart",
            Mode::Greyscale => "greyscale",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "lineart" => Some(Mode::Lineart),
            "greyscale" => Some(Mode::Greyscale),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One frame entry: episode id plus path relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub episode: String,
    pub relative_path: PathBuf,
    pub frame_number: u64,
}

/// Ordered list of frames for one split, never interleaving episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: String,
    pub mode: Mode,
    pub image_size: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when `index` is the first frame of its episode.
    pub fn is_episode_first(&self, index: usize) -> bool {
        index == 0 || self.entries[index].episode != self.entries[index - 1].episode
    }

    /// Serialize as the line-oriented manifest format: a header line
    /// `split<TAB>mode<TAB>image_size`, then one `episode<TAB>path` per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\t{}\t{}\n", self.split, self.mode, self.image_size);
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\n",
                e.episode,
                e.relative_path.to_string_lossy()
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<DatasetManifest> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::ManifestParse {
            line: 1,
            reason: "empty manifest".into(),
        })?;
        let mut parts = header.split('\t');
        let split = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or(Error::ManifestParse {
                line: 1,
                reason: "missing split name".into(),
            })?
            .to_string();
        let mode = parts
            .next()
            .and_then(Mode::parse)
            .ok_or(Error::ManifestParse {
                line: 1,
                reason: "missing or unknown mode".into(),
            })?;
        let image_size: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::ManifestParse {
                line: 1,
                reason: "missing image size".into(),
            })?;
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (episode, path) = line.split_once('\t').ok_or(Error::ManifestParse {
                line: i + 1,
                reason: "expected episode<TAB>path".into(),
            })?;
            let relative_path = PathBuf::from(path);
            let frame_number = parse_frame_number(&relative_path)
                .ok_or_else(|| Error::UnparsableFrameName(relative_path.clone()))?;
            entries.push(ManifestEntry {
                episode: episode.to_string(),
                relative_path,
                frame_number,
            });
        }
        Ok(DatasetManifest {
            split,
            mode,
            image_size,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path)?;
        DatasetManifest::from_text(&text)
    }
}

/// How episodes are assigned to splits.
#[derive(Debug, Clone)]
pub enum SplitSpec {
    /// Explicit episode lists per split name, e.g. {"train": [e1], "val": [e2]}.
    Episodes(BTreeMap<String, Vec<String>>),
    /// Fractions per split name in declaration order; episodes are assigned
    /// contiguously in sorted order. Fractions must sum to 1 (±1e-6).
    Fractions(Vec<(String, f64)>),
}

fn parse_frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    digits.parse().ok()
}

/// PNG files of one directory in frame-number order.
pub fn ordered_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let number = parse_frame_number(&path)
            .ok_or_else(|| Error::UnparsableFrameName(path.clone()))?;
        frames.push((number, path));
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Scan `root/<episode>/<frame>.png` and build one deterministic manifest
/// per split. Splits never share an episode, so validation and test material
/// stays unseen by training.
///
/// Dot-directories and the reserved `prepared` output directory are not
/// episodes; any other frame-less directory is an error.
pub fn build_manifest(
    root: &Path,
    split_spec: &SplitSpec,
    mode: Mode,
    image_size: usize,
) -> Result<Vec<DatasetManifest>> {
    if image_size == 0 {
        return Err(Error::InvalidSize("image size 0".into()));
    }
    let mut episodes: BTreeMap<String, Vec<ManifestEntry>> = BTreeMap::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n != "prepared" && !n.starts_with('.'))
        })
        .collect();
    dirs.sort();
    for dir in dirs {
        let episode = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidConfig(format!("bad episode dir {dir:?}")))?
            .to_string();
        let mut frames: Vec<ManifestEntry> = Vec::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("png") {
                continue;
            }
            let frame_number = parse_frame_number(&path)
                .ok_or_else(|| Error::UnparsableFrameName(path.clone()))?;
            let relative_path = PathBuf::from(&episode).join(path.file_name().unwrap());
            frames.push(ManifestEntry {
                episode: episode.clone(),
                relative_path,
                frame_number,
            });
        }
        if frames.is_empty() {
            return Err(Error::EmptyEpisode(episode));
        }
        frames.sort_by_key(|f| f.frame_number);
        episodes.insert(episode, frames);
    }
    if episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let assignment: Vec<(String, Vec<String>)> = match split_spec {
        SplitSpec::Episodes(map) => {
            for eps in map.values() {
                for ep in eps {
                    if !episodes.contains_key(ep) {
                        return Err(Error::InvalidConfig(format!("unknown episode {ep:?}")));
                    }
                }
            }
            map.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
        }
        SplitSpec::Fractions(fracs) => {
            let total: f64 = fracs.iter().map(|(_, f)| *f).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "split fractions sum to {total}, expected 1"
                )));
            }
            let names: Vec<String> = episodes.keys().cloned().collect();
            let n = names.len();
            let mut out = Vec::new();
            let mut start = 0usize;
            let mut acc = 0.0;
            for (i, (split, frac)) in fracs.iter().enumerate() {
                acc += frac;
                let end = if i + 1 == fracs.len() {
                    n
                } else {
                    (acc * n as f64).round() as usize
                };
                out.push((split.clone(), names[start..end.min(n)].to_vec()));
                start = end.min(n);
            }
            out
        }
    };

    // an episode may appear in at most one split
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (split, eps) in &assignment {
        for ep in eps {
            if let Some(prev) = seen.insert(ep.as_str(), split.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "episode {ep:?} assigned to both {prev:?} and {split:?}"
                )));
            }
        }
    }

    Ok(assignment
        .into_iter()
        .map(|(split, eps)| {
            let mut entries = Vec::new();
            for ep in eps {
                entries.extend(episodes[&ep].iter().cloned());
            }
            DatasetManifest {
                split,
                mode,
                image_size,
                entries,
            }
        })
        .collect())
}

/// Loads manifest frames from disk, resizing to the manifest size, with an
/// optional pre-synthesized line-art cache.
#[derive(Debug, Clone)]
pub struct FrameStore {
    pub root: PathBuf,
    pub lineart_cache: Option<PathBuf>,
    pub canny: CannyParams,
}

impl FrameStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FrameStore {
            root: root.into(),
            lineart_cache: None,
            canny: CannyParams::default(),
        }
    }

    pub fn with_lineart_cache(mut self, cache: impl Into<PathBuf>) -> Self {
        self.lineart_cache = Some(cache.into());
        self
    }

    /// Ground-truth color frame at `index`, resized, in storage space.
    pub fn color_frame<T: Scalar>(
        &self,
        manifest: &DatasetManifest,
        index: usize,
    ) -> Result<Frame<T>> {
        let entry = manifest
            .entries
            .get(index)
            .ok_or(Error::IndexOutOfRange {
                index,
                len: manifest.len(),
            })?;
        let frame = load_png::<T>(&self.root.join(&entry.relative_path))?;
        let frame = if frame.channels() == 1 {
            crate::imaging::replicate_grey(&frame)?
        } else {
            frame
        };
        resize(&frame, manifest.image_size, manifest.image_size)
    }

    /// Network input frame (line art or greyscale), storage space.
    pub fn input_frame<T: Scalar>(
        &self,
        manifest: &DatasetManifest,
        index: usize,
    ) -> Result<Frame<T>> {
        match manifest.mode {
            Mode::Greyscale => to_greyscale(&self.color_frame(manifest, index)?),
            Mode::Lineart => {
                if let Some(cache) = &self.lineart_cache {
                    let entry = &manifest.entries[index];
                    let path = cache.join(&entry.relative_path);
                    if path.exists() {
                        let cached = load_png::<T>(&path)?;
                        if cached.height() == manifest.image_size
                            && cached.width() == manifest.image_size
                        {
                            return Ok(cached);
                        }
                    }
                }
                synthesize_lineart(&self.color_frame(manifest, index)?, &self.canny)
            }
        }
    }
}

/// One training triple in model space.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    /// 1-channel line art or greyscale input.
    pub input: Frame<T>,
    /// 3-channel previous color frame, or blank.
    pub condition: Frame<T>,
    /// 3-channel ground-truth color frame.
    pub target: Frame<T>,
    pub index: usize,
}

/// Probability that a non-first condition is blanked during training.
pub const DEFAULT_BLANK_PROBABILITY: f64 = 0.5;

/// True when the Bernoulli draw for (seed, epoch, index) selects blank.
pub fn blank_draw(seed: u64, epoch: u64, index: usize, probability: f64) -> bool {
    let mut rng = stream(seed, &[tag::CONDITION_DRAW, epoch, index as u64]);
    rng.gen::<f64>() < probability
}

/// Training-time condition: blank for an episode's first frame, otherwise a
/// Bernoulli draw between blank and the previous ground-truth color frame.
pub fn sample_condition<T: Scalar>(
    store: &FrameStore,
    manifest: &DatasetManifest,
    index: usize,
    seed: u64,
    epoch: u64,
    blank_probability: f64,
) -> Result<Frame<T>> {
    if index >= manifest.len() {
        return Err(Error::IndexOutOfRange {
            index,
            len: manifest.len(),
        });
    }
    let size = manifest.image_size;
    if manifest.is_episode_first(index) || blank_draw(seed, epoch, index, blank_probability) {
        blank_frame(3, size, size)
    } else {
        Ok(store.color_frame::<T>(manifest, index - 1)?.to_model())
    }
}

/// Materialize the full (input, condition, target) triple in model space.
pub fn make_sample<T: Scalar>(
    store: &FrameStore,
    manifest: &DatasetManifest,
    index: usize,
    seed: u64,
    epoch: u64,
    blank_probability: f64,
) -> Result<Sample<T>> {
    let condition = sample_condition(store, manifest, index, seed, epoch, blank_probability)?;
    let input = store.input_frame::<T>(manifest, index)?.to_model();
    let target = store.color_frame::<T>(manifest, index)?.to_model();
    Ok(Sample {
        input,
        condition,
        target,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{save_png, Space};
    use crate::tensor::Tensor;

    fn write_toy_corpus(root: &Path, episodes: &[(&str, usize)]) {
        for (ep, n) in episodes {
            for i in 0..*n {
                let shade = (i as f64 + 1.0) / (*n as f64 + 1.0);
                let mut t = Tensor::zeros(&[3, 8, 8]);
                for y in 0..8 {
                    for x in 0..8 {
                        t.set3(0, y, x, shade);
                        t.set3(1, y, x, 1.0 - shade);
                        t.set3(2, y, x, if x >= 4 { 1.0 } else { 0.0 });
                    }
                }
                let f = Frame::new(t, Space::Storage).unwrap();
                save_png(&f, &root.join(ep).join(format!("{i:03}.png"))).unwrap();
            }
        }
    }

    fn tmpdir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("tcvc_ds_{name}_{}", std::process::id()));
        std::fs::remove_dir_all(&dir).ok();
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn by_episode(splits: &[(&str, &[&str])]) -> SplitSpec {
        SplitSpec::Episodes(
            splits
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        )
    }

    #[test]
    fn manifests_are_disjoint_and_deterministic() {
        let root = tmpdir("disjoint");
        write_toy_corpus(&root, &[("e1", 10), ("e2", 10)]);
        let spec = by_episode(&[("train", &["e1"]), ("val", &["e2"])]);
        let a = build_manifest(&root, &spec, Mode::Lineart, 8).unwrap();
        let b = build_manifest(&root, &spec, Mode::Lineart, 8).unwrap();
        assert_eq!(a, b);
        let train = a.iter().find(|m| m.split == "train").unwrap();
        let val = a.iter().find(|m| m.split == "val").unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(val.len(), 10);
        for e in &train.entries {
            assert!(!val.entries.contains(e));
        }
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn empty_episode_errors() {
        let root = tmpdir("empty");
        write_toy_corpus(&root, &[("e1", 3)]);
        std::fs::create_dir_all(root.join("e2")).unwrap();
        let spec = by_episode(&[("train", &["e1"])]);
        assert!(matches!(
            build_manifest(&root, &spec, Mode::Lineart, 8),
            Err(Error::EmptyEpisode(_))
        ));
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn manifest_text_round_trip() {
        let root = tmpdir("roundtrip");
        write_toy_corpus(&root, &[("e1", 4), ("e2", 2)]);
        let spec = by_episode(&[("train", &["e1", "e2"])]);
        let m = build_manifest(&root, &spec, Mode::Greyscale, 16)
            .unwrap()
            .remove(0);
        let back = DatasetManifest::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn frame_order_is_numeric_and_episodes_do_not_interleave() {
        let root = tmpdir("order");
        write_toy_corpus(&root, &[("e1", 12)]);
        let spec = by_episode(&[("train", &["e1"])]);
        let m = build_manifest(&root, &spec, Mode::Lineart, 8)
            .unwrap()
            .remove(0);
        let numbers: Vec<u64> = m.entries.iter().map(|e| e.frame_number).collect();
        let mut sorted = numbers.clone();
        sorted.sort_unstable();
        assert_eq!(numbers, sorted);
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn fractional_split_covers_all_episodes() {
        let root = tmpdir("frac");
        write_toy_corpus(&root, &[("e1", 2), ("e2", 2), ("e3", 2), ("e4", 2)]);
        let spec = SplitSpec::Fractions(vec![("train".into(), 0.75), ("val".into(), 0.25)]);
        let ms = build_manifest(&root, &spec, Mode::Lineart, 8).unwrap();
        let total: usize = ms.iter().map(|m| m.len()).sum();
        assert_eq!(total, 8);
        assert!(ms.iter().all(|m| !m.is_empty()));
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn first_frame_condition_is_always_blank() {
        let root = tmpdir("first");
        write_toy_corpus(&root, &[("e1", 3), ("e2", 3)]);
        let spec = by_episode(&[("train", &["e1", "e2"])]);
        let m = build_manifest(&root, &spec, Mode::Lineart, 8)
            .unwrap()
            .remove(0);
        let store = FrameStore::new(&root);
        // index 0 and index 3 (first of e2) are blank under every seed
        for seed in [0u64, 1, 99] {
            for &idx in &[0usize, 3] {
                let c = sample_condition::<f32>(&store, &m, idx, seed, 0, 0.0).unwrap();
                assert!(c.tensor().iter().all(|&v| v == 0.0), "seed {seed} idx {idx}");
            }
        }
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn degenerate_bernoulli_returns_previous_frame_exactly() {
        let root = tmpdir("prev");
        write_toy_corpus(&root, &[("e1", 4)]);
        let spec = by_episode(&[("train", &["e1"])]);
        let m = build_manifest(&root, &spec, Mode::Lineart, 8)
            .unwrap()
            .remove(0);
        let store = FrameStore::new(&root);
        let c = sample_condition::<f32>(&store, &m, 3, 7, 0, 0.0).unwrap();
        let prev = store.color_frame::<f32>(&m, 2).unwrap().to_model();
        assert_eq!(c.tensor().data(), prev.tensor().data());
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn blank_fraction_is_near_half() {
        let n = 10_000;
        let blanks = (0..n).filter(|&i| blank_draw(123, 0, i, 0.5)).count();
        let fraction = blanks as f64 / n as f64;
        assert!((0.48..=0.52).contains(&fraction), "fraction {fraction}");
    }

    #[test]
    fn sample_assembly_follows_mode() {
        let root = tmpdir("assembly");
        write_toy_corpus(&root, &[("e1", 4)]);
        for mode in [Mode::Lineart, Mode::Greyscale] {
            let spec = by_episode(&[("train", &["e1"])]);
            let m = build_manifest(&root, &spec, mode, 8).unwrap().remove(0);
            let store = FrameStore::new(&root);
            let s = make_sample::<f32>(&store, &m, 0, 5, 0, 0.5).unwrap();
            assert_eq!(s.input.channels(), 1);
            assert_eq!(s.condition.channels(), 3);
            assert_eq!(s.target.channels(), 3);
            // first-frame rule
            assert!(s.condition.tensor().iter().all(|&v| v == 0.0));
            let expected = match mode {
                Mode::Lineart => synthesize_lineart(
                    &store.color_frame::<f32>(&m, 0).unwrap(),
                    &CannyParams::default(),
                )
                .unwrap()
                .to_model(),
                Mode::Greyscale => to_greyscale(&store.color_frame::<f32>(&m, 0).unwrap())
                    .unwrap()
                    .to_model(),
            };
            assert_eq!(s.input.tensor().data(), expected.tensor().data());
        }
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn sample_stream_is_reproducible() {
        let root = tmpdir("repro");
        write_toy_corpus(&root, &[("e1", 6)]);
        let spec = by_episode(&[("train", &["e1"])]);
        let m = build_manifest(&root, &spec, Mode::Lineart, 8)
            .unwrap()
            .remove(0);
        let store = FrameStore::new(&root);
        for index in 0..m.len() {
            let a = make_sample::<f32>(&store, &m, index, 11, 2, 0.5).unwrap();
            let b = make_sample::<f32>(&store, &m, index, 11, 2, 0.5).unwrap();
            assert_eq!(a.condition.tensor().data(), b.condition.tensor().data());
            assert_eq!(a.input.tensor().data(), b.input.tensor().data());
        }
        std::fs::remove_dir_all(&root).ok();
    }

    #[test]
    fn out_of_range_index_errors() {
        let root = tmpdir("oob");
        write_toy_corpus(&root, &[("e1", 2)]);
        let spec = by_episode(&[("train", &["e1"])]);
        let m = build_manifest(&root, &spec, Mode::Lineart, 8)
            .unwrap()
            .remove(0);
        let store = FrameStore::new(&root);
        assert!(matches!(
            sample_condition::<f32>(&store, &m, 5, 0, 0, 0.5),
            Err(Error::IndexOutOfRange { .. })
        ));
        std::fs::remove_dir_all(&root).ok();
    }
}
