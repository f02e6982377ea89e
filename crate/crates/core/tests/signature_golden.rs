mod common;

use std::path::PathBuf;

use ceb_core::grid::Grid;
use ceb_core::pipeline::{analyze_frame, PipelineConfig};
use ceb_core::raster::{read_raster, write_raster};
use ceb_core::signature::find_endpoints;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Set CEB_BLESS=1 to rewrite the golden rasters from the current code.
#[test]
fn golden_rasters_are_bit_exact() {
    let bless = std::env::var_os("CEB_BLESS").is_some();
    let cfg = PipelineConfig::default();
    for (i, (w, h, disks)) in common::golden_scenes().into_iter().enumerate() {
        let a = analyze_frame(&common::dome_map(w, h, &disks), 0, &cfg).unwrap();
        let rec = a
            .signatures
            .first()
            .unwrap_or_else(|| panic!("scene {i} has no boundary"));
        let path = golden_dir().join(format!("scene{i:02}.pgm"));
        if bless {
            std::fs::create_dir_all(golden_dir()).unwrap();
            write_raster(&rec.raster, &path).unwrap();
        }
        let want = read_raster(&path).unwrap();
        assert_eq!(rec.raster, want, "scene {i}");
    }
}

#[test]
fn translation_keeps_rasters() {
    let cfg = PipelineConfig::default();
    for (w, h, disks) in common::golden_scenes() {
        let p = common::dome_map(w, h, &disks);
        let a = analyze_frame(&p, 0, &cfg).unwrap();
        let b = analyze_frame(&common::translate(&p, 3, 5, 4), 0, &cfg).unwrap();
        assert_eq!(a.signatures.len(), b.signatures.len());
        for (x, y) in a.signatures.iter().zip(&b.signatures) {
            assert_eq!(x.key, y.key);
            assert_eq!(x.raster, y.raster);
        }
    }
}

#[test]
fn endpoints_agree_with_floyd_warshall() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = Grid::new(10, 10);
    for _ in 0..100 {
        let n = rng.gen_range(1..=30);
        let set = common::random_connected_set(&mut rng, 10, n);
        let e = find_endpoints(grid, &set).unwrap();
        let (s, t, d) = common::floyd_endpoints(10, &set);
        assert!(!e.disconnected);
        assert_eq!((e.n1, e.n2), (s, t));
        assert!((e.distance.value() - d).abs() < 1e-9);
    }
}
