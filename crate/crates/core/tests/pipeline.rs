use std::fs;
use std::path::Path;

use cats::pipeline::{Pipeline, PipelineConfig, Stage};

fn tiny() -> PipelineConfig {
    let text = "
        seed = 3
        grid.cells = 8
        world.users = 10
        world.days = 6
        k = 2
        sample_size = 6
        generator.encoding_dim = 8
        generator.heads = 2
        critic.encoding_dim = 8
        critic.heads = 2
        critic.conv_channels = 4
        critic.cond_dim = 8
        critic.head_hidden = 8
        train.epochs = 1
        train.n_critic = 1
        train.batch = 2
        tul.embedding_dim = 8
        tul.hidden = 8
        tul.epochs = 2
        fm.epochs = 2
    ";
    PipelineConfig::parse_text("tiny", text).unwrap()
}

fn bundle(dir: &Path, cfg: &PipelineConfig) -> Vec<(String, Vec<u8>)> {
    let layout = cats::pipeline::Layout::new(dir);
    layout
        .bundle(cfg)
        .into_iter()
        .map(|p| (p.display().to_string(), fs::read(dir.join(&p)).unwrap()))
        .collect()
}

#[test]
fn full_run_is_deterministic_and_resumable() {
    let cfg = tiny();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let p = Pipeline::open(cfg.clone(), dir).unwrap();
        assert_eq!(p.run_all().unwrap(), Stage::ALL.to_vec());
    }
    let (ba, bb) = (bundle(a.path(), &cfg), bundle(b.path(), &cfg));
    assert_eq!(ba.len(), bb.len());
    for ((na, xa), (nb, xb)) in ba.iter().zip(&bb) {
        assert_eq!(na, nb);
        assert!(xa == xb, "{na} differs between runs");
    }

    let hash = cfg.hash();
    for (name, bytes) in &ba {
        if name.ends_with(".csv") {
            let text = String::from_utf8(bytes.clone()).unwrap();
            assert!(text.starts_with("# config_hash="), "{name} lacks provenance");
            assert!(text.contains(&hash), "{name} lacks config hash");
        }
    }

    let collective = fs::read_to_string(a.path().join("reports/collective.csv")).unwrap();
    let header = collective.lines().nth(1).unwrap();
    assert_eq!(header, "metric,raw,rp,gg,ldp,tdp,tka,cats");

    let p = Pipeline::open(cfg.clone(), a.path()).unwrap();
    assert!(p.run_all().unwrap().is_empty());
    fs::remove_file(a.path().join("reports/tul.csv")).unwrap();
    assert_eq!(p.run_all().unwrap(), vec![Stage::Attack]);
    drop(p);
    assert_eq!(bundle(a.path(), &cfg), bb);
}

#[test]
fn lock_blocks_second_writer() {
    let dir = tempfile::tempdir().unwrap();
    let _p = Pipeline::open(tiny(), dir.path()).unwrap();
    assert!(Pipeline::open(tiny(), dir.path()).is_err());
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.set("k", "20").unwrap();
    let p = Pipeline::open(cfg, dir.path()).unwrap();
    let e = p.run_all().unwrap_err();
    assert!(e.to_string().contains("stage 'kama'"), "{e}");
    assert!(e.is_validation());
}
