//! Directory layouts of stereo datasets and deterministic pair listing.
//!
//! | layout             | left                                | right              | ground truth                     |
//! |--------------------|-------------------------------------|--------------------|----------------------------------|
//! | `flat-pairs`       | `left/NAME`                         | `right/NAME`       | `disp/STEM.{pfm,png}`            |
//! | `kitti`            | `image_2/NAME`                      | `image_3/NAME`     | `disp_occ_0/NAME`                |
//! | `sceneflow`        | `frames_*/.../left/NAME`            | sibling `right/`   | `disparity/.../left/STEM.pfm`    |
//! | `middlebury-style` | `SCENE/im0.png`                     | `SCENE/im1.png`    | `SCENE/disp0GT.pfm`              |
//!
//! Optional semantic rasters are looked up at `semantic/STEM.png` under the root
//! for the flat and KITTI layouts.

use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use walkdir::WalkDir;

use super::extension;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetLayout {
    #[default]
    FlatPairs,
    Kitti,
    SceneFlow,
    MiddleburyStyle,
}

impl FromStr for DatasetLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat-pairs" => Ok(Self::FlatPairs),
            "kitti" => Ok(Self::Kitti),
            "sceneflow" => Ok(Self::SceneFlow),
            "middlebury-style" => Ok(Self::MiddleburyStyle),
            other => Err(Error::InvalidConfig(format!(
                "unknown layout `{other}` (expected flat-pairs, kitti, sceneflow or middlebury-style)"
            ))),
        }
    }
}

impl fmt::Display for DatasetLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FlatPairs => "flat-pairs",
            Self::Kitti => "kitti",
            Self::SceneFlow => "sceneflow",
            Self::MiddleburyStyle => "middlebury-style",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub layout: DatasetLayout,
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEntry {
    pub left: PathBuf,
    pub right: PathBuf,
    pub gt: Option<PathBuf>,
    pub semantic: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Listing {
    pub pairs: Vec<PairEntry>,
    /// Left images whose right counterpart is missing.
    pub skipped: usize,
}

const IMAGE_EXTENSIONS: [&str; 2] = ["png", "pfm"];

fn is_image(path: &Path) -> bool {
    path.is_file() && IMAGE_EXTENSIONS.contains(&extension(path).as_str())
}

/// Sorted image files directly inside `dir`; a missing directory yields none.
fn images_in(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

fn first_existing(candidates: impl IntoIterator<Item = PathBuf>) -> Option<PathBuf> {
    candidates.into_iter().find(|p| p.is_file())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

/// Lists stereo pairs in lexicographic order of the left path. Pairs without
/// a right image are skipped with a warning and counted.
pub fn list_pairs(spec: &DatasetSpec) -> Result<Listing> {
    if !spec.root.is_dir() {
        return Err(Error::Io {
            path: spec.root.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        });
    }
    let root = &spec.root;
    let mut listing = Listing::default();
    let mut push = |entry: PairEntry| {
        if entry.right.is_file() {
            listing.pairs.push(entry);
        } else {
            log::warn!(
                "skipping {}: missing right image {}",
                entry.left.display(),
                entry.right.display()
            );
            listing.skipped += 1;
        }
    };
    match spec.layout {
        DatasetLayout::FlatPairs | DatasetLayout::Kitti => {
            let (l, r, g) = if spec.layout == DatasetLayout::Kitti {
                ("image_2", "image_3", "disp_occ_0")
            } else {
                ("left", "right", "disp")
            };
            for left in images_in(&root.join(l))? {
                let name = left.file_name().expect("listed file has a name").to_owned();
                let s = stem(&left);
                let gt = if spec.layout == DatasetLayout::Kitti {
                    first_existing([root.join(g).join(&name)])
                } else {
                    first_existing([
                        root.join(g).join(format!("{s}.pfm")),
                        root.join(g).join(format!("{s}.png")),
                    ])
                };
                push(PairEntry {
                    right: root.join(r).join(&name),
                    gt,
                    semantic: first_existing([root.join("semantic").join(format!("{s}.png"))]),
                    left,
                });
            }
        }
        DatasetLayout::SceneFlow => {
            let mut lefts: Vec<PathBuf> = WalkDir::new(root)
                .sort_by_file_name()
                .into_iter()
                .filter_map(|e| e.ok())
                .map(|e| e.into_path())
                .filter(|p| is_image(p) && sceneflow_left(root, p))
                .collect();
            lefts.sort();
            for left in lefts {
                let dir = left.parent().expect("left image has a parent");
                let right = dir.with_file_name("right").join(left.file_name().expect("file name"));
                let gt = sceneflow_gt(root, &left);
                push(PairEntry {
                    left,
                    right,
                    gt: gt.filter(|p| p.is_file()),
                    semantic: None,
                });
            }
        }
        DatasetLayout::MiddleburyStyle => {
            let mut scenes: Vec<PathBuf> = fs::read_dir(root)
                .map_err(|source| Error::Io {
                    path: root.clone(),
                    source,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            scenes.sort();
            for scene in scenes {
                let left = scene.join("im0.png");
                if !left.is_file() {
                    continue;
                }
                push(PairEntry {
                    right: scene.join("im1.png"),
                    gt: first_existing([scene.join("disp0GT.pfm")]),
                    semantic: None,
                    left,
                });
            }
        }
    }
    Ok(listing)
}

/// `frames_*/.../left/NAME` below the root.
fn sceneflow_left(root: &Path, path: &Path) -> bool {
    let Ok(rel) = path.strip_prefix(root) else {
        return false;
    };
    let parts: Vec<&str> = rel
        .components()
        .filter_map(|c| match c {
            Component::Normal(s) => s.to_str(),
            _ => None,
        })
        .collect();
    parts.len() >= 3 && parts[0].starts_with("frames_") && parts[parts.len() - 2] == "left"
}

/// Replaces the leading `frames_*` component with `disparity` and the extension with `pfm`.
fn sceneflow_gt(root: &Path, left: &Path) -> Option<PathBuf> {
    let rel = left.strip_prefix(root).ok()?;
    let mut comps = rel.components();
    comps.next()?;
    Some(root.join("disparity").join(comps.as_path()).with_extension("pfm"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, b"").unwrap();
    }

    fn spec(layout: DatasetLayout, root: &Path) -> DatasetSpec {
        DatasetSpec {
            layout,
            root: root.to_path_buf(),
        }
    }

    #[test]
    fn flat_pairs_single() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("left/000.png"));
        touch(&dir.path().join("right/000.png"));
        touch(&dir.path().join("left/001.png"));
        touch(&dir.path().join("disp/000.pfm"));
        let l = list_pairs(&spec(DatasetLayout::FlatPairs, dir.path())).unwrap();
        assert_eq!(l.pairs.len(), 1);
        assert_eq!(l.skipped, 1);
        assert_eq!(l.pairs[0].gt, Some(dir.path().join("disp/000.pfm")));
    }

    #[test]
    fn kitti_with_gt_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["000001_10.png", "000000_10.png"] {
            touch(&dir.path().join("image_2").join(n));
            touch(&dir.path().join("image_3").join(n));
            touch(&dir.path().join("disp_occ_0").join(n));
        }
        let l = list_pairs(&spec(DatasetLayout::Kitti, dir.path())).unwrap();
        let names: Vec<String> = l.pairs.iter().map(|p| stem(&p.left)).collect();
        assert_eq!(names, vec!["000000_10", "000001_10"]);
        assert!(l.pairs.iter().all(|p| p.gt.is_some()));
    }

    #[test]
    fn sceneflow_tree() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        touch(&r.join("frames_cleanpass/TRAIN/A/0000/left/0006.png"));
        touch(&r.join("frames_cleanpass/TRAIN/A/0000/right/0006.png"));
        touch(&r.join("disparity/TRAIN/A/0000/left/0006.pfm"));
        touch(&r.join("frames_cleanpass/TRAIN/A/0000/right/0007.png"));
        let l = list_pairs(&spec(DatasetLayout::SceneFlow, r)).unwrap();
        assert_eq!(l.pairs.len(), 1);
        assert_eq!(l.pairs[0].gt, Some(r.join("disparity/TRAIN/A/0000/left/0006.pfm")));
    }

    #[test]
    fn middlebury_scenes() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("Adirondack/im0.png"));
        touch(&dir.path().join("Adirondack/im1.png"));
        touch(&dir.path().join("Adirondack/disp0GT.pfm"));
        touch(&dir.path().join("Broken/im0.png"));
        let l = list_pairs(&spec(DatasetLayout::MiddleburyStyle, dir.path())).unwrap();
        assert_eq!(l.pairs.len(), 1);
        assert_eq!(l.skipped, 1);
    }

    #[test]
    fn empty_and_missing_roots() {
        let dir = tempfile::tempdir().unwrap();
        for layout in [
            DatasetLayout::FlatPairs,
            DatasetLayout::Kitti,
            DatasetLayout::SceneFlow,
            DatasetLayout::MiddleburyStyle,
        ] {
            assert_eq!(list_pairs(&spec(layout, dir.path())).unwrap(), Listing::default());
            assert_eq!(layout.to_string().parse::<DatasetLayout>().unwrap(), layout);
        }
        assert!(list_pairs(&spec(DatasetLayout::FlatPairs, &dir.path().join("nope"))).is_err());
    }
}
