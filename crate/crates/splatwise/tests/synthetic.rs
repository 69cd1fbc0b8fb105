use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use splatwise::dataio::{gen_synthetic, generate, load_map, PosedDataset, SyntheticConfig};
use splatwise::trainer::render_trajectory;
use splatwise_core::losses::mse;

/// Hash of every file under `root`, keyed by relative path.
fn tree_digest(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                let hash = Sha256::digest(fs::read(&path).unwrap());
                out.push((rel, format!("{hash:x}")));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = SyntheticConfig::new(40, 3, 24, 11);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_synthetic(&cfg, a.path()).unwrap();
    gen_synthetic(&cfg, b.path()).unwrap();
    let da = tree_digest(a.path());
    assert!(da.iter().any(|(p, _)| p == "gt_map.ply"));
    assert!(da.iter().any(|(p, _)| p.ends_with(".png")));
    assert_eq!(da, tree_digest(b.path()));

    let c = tempfile::tempdir().unwrap();
    gen_synthetic(&SyntheticConfig { seed: 12, ..cfg }, c.path()).unwrap();
    assert_ne!(da, tree_digest(c.path()));
}

#[test]
fn single_frame_scene() {
    let scene = generate(&SyntheticConfig::new(20, 1, 16, 0)).unwrap();
    assert_eq!(scene.frames.len(), 1);
    assert_eq!(scene.truth.len(), 20);
    assert!(!scene.frames[0].points.is_empty());
}

#[test]
fn invalid_configs_rejected() {
    assert!(SyntheticConfig::new(0, 5, 32, 0).validate().is_err());
    assert!(SyntheticConfig::new(10, 0, 32, 0).validate().is_err());
    assert!(SyntheticConfig::new(10, 5, 2, 0).validate().is_err());
}

#[test]
fn stored_truth_reproduces_stored_images() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&SyntheticConfig::new(80, 4, 48, 5), dir.path()).unwrap();
    let map = load_map(&dir.path().join("gt_map.ply")).unwrap();
    let ds = PosedDataset::open(dir.path()).unwrap();
    assert_eq!(ds.len(), 4);
    let renders = render_trajectory(&map, &ds.cameras().unwrap(), 3).unwrap();
    for (i, img) in renders.iter().enumerate() {
        let stored = ds.load_frame(i).unwrap().image;
        let e = mse(img, &stored).unwrap();
        assert!(e <= 1e-10, "frame {i}: mse {e:e}");
    }
}

#[test]
fn points_lie_in_front_of_their_camera() {
    let scene = generate(&SyntheticConfig::new(60, 3, 32, 2)).unwrap();
    for f in &scene.frames {
        assert_eq!(f.points.len(), 8);
        for p in &f.points {
            let pc = f.camera.pose.transform(&p.position);
            assert!(pc[2] > 0.0);
            assert!(p.color.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }
}
