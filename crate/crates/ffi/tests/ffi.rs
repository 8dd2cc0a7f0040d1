use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use cats_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cats_last_error()) }.to_string_lossy().into_owned()
}

fn toy_grid() -> *mut CatsGrid {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { cats_grid_new(0.0, 1.0, 0.0, 1.0, 8, 24, &mut g) }, CatsStatus::Ok);
    g
}

#[test]
fn grid_handle_and_errors() {
    let g = toy_grid();
    let (mut r, mut c) = (0u32, 0u32);
    unsafe {
        assert_eq!(cats_grid_encode(g, 0.99, 0.01, &mut r, &mut c), CatsStatus::Ok);
        assert_eq!((r, c), (7, 0));
        assert_eq!(cats_grid_encode(g, 2.0, 0.5, &mut r, &mut c), CatsStatus::OutOfBounds);
        assert!(last_error().contains("outside"));
        assert_eq!(cats_grid_encode(ptr::null(), 0.5, 0.5, &mut r, &mut c), CatsStatus::NullPointer);
        cats_grid_free(g);
        cats_grid_free(ptr::null_mut());

        let mut bad = ptr::null_mut();
        assert_eq!(cats_grid_new(1.0, 0.0, 0.0, 1.0, 8, 24, &mut bad), CatsStatus::ConfigInvalid);
        assert!(bad.is_null());
    }
}

#[test]
fn world_mask_kama_round_trip() {
    let g = toy_grid();
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("w.csv").to_str().unwrap()).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(cats_world_generate(g, 10, 3, 0.0, 1, &mut ds), CatsStatus::Ok);
        assert_eq!(cats_dataset_len(ds), 30);
        assert_eq!(cats_dataset_point_count(ds), 720);
        assert_eq!(cats_dataset_write_csv(ds, path.as_ptr()), CatsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(cats_dataset_read_csv(path.as_ptr(), 24, &mut back), CatsStatus::Ok);
        assert_eq!(cats_dataset_point_count(back), 720);

        let mut masked = ptr::null_mut();
        let gg = CString::new("gg").unwrap();
        assert_eq!(cats_mask(ds, gg.as_ptr(), 4, &mut masked), CatsStatus::Ok);
        assert_eq!(cats_dataset_point_count(masked), 720);
        let bogus = CString::new("zz").unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(cats_mask(ds, bogus.as_ptr(), 4, &mut none), CatsStatus::ConfigInvalid);

        let mut set = ptr::null_mut();
        assert_eq!(cats_kama(ds, g, 5, 0, 2, &mut set), CatsStatus::Ok);
        assert_eq!(cats_matrix_set_cluster_count(set), 1);
        assert!(cats_matrix_set_min_cluster_size(set) >= 5);
        let mut infeasible = ptr::null_mut();
        assert_eq!(cats_kama(ds, g, 11, 0, 2, &mut infeasible), CatsStatus::Infeasible);

        cats_matrix_set_free(set);
        cats_dataset_free(masked);
        cats_dataset_free(back);
        cats_dataset_free(ds);
        cats_grid_free(g);
    }
}

#[test]
fn numeric_entry_points() {
    unsafe {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let mut perm = [0usize; 3];
        let mut total = 0.0;
        assert_eq!(cats_lsa_solve(cost.as_ptr(), 3, perm.as_mut_ptr(), &mut total), CatsStatus::Ok);
        assert_eq!(perm, [1, 0, 2]);
        assert_eq!(total, 5.0);

        let (a, b) = ([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]);
        let mut w = 0.0;
        assert_eq!(cats_wasserstein2(a.as_ptr(), b.as_ptr(), 2, &mut w), CatsStatus::Ok);
        assert!((w - 2f64.sqrt()).abs() < 1e-12);
        let mut j = 0.0;
        assert_eq!(cats_jsd(a.as_ptr(), b.as_ptr(), 4, &mut j), CatsStatus::Ok);
        assert!((j - 1.0).abs() < 1e-12);
        let z = [0.0; 4];
        assert_eq!(cats_jsd(z.as_ptr(), b.as_ptr(), 4, &mut j), CatsStatus::ZeroMass);
        assert!((cats_haversine_km(0.0, 0.0, 0.0, 1.0) - 111.195).abs() < 0.01);
        assert!(!CStr::from_ptr(cats_version()).to_bytes().is_empty());
    }
}

#[test]
fn pipeline_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "k = 0\n").unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cats_pipeline_run(c.as_ptr(), out.as_ptr(), 0) }, CatsStatus::ConfigInvalid);
    assert_eq!(unsafe { cats_pipeline_run(ptr::null(), ptr::null(), 0) }, CatsStatus::NullPointer);
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cats.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["cats_grid_new", "cats_kama", "cats_last_error", "CATS_STATUS_INFEASIBLE = 13"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let lib = target_dir().join("libcats_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C link check: no cc or {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        r#"#include "cats.h"
#include <stdio.h>
int main(void) {
    CatsGrid *g = NULL;
    if (cats_grid_new(0, 1, 0, 1, 4, 24, &g) != CATS_STATUS_OK) return 1;
    uint32_t r, c;
    if (cats_grid_encode(g, 5, 5, &r, &c) != CATS_STATUS_OUT_OF_BOUNDS) return 2;
    printf("%s\n", cats_last_error());
    cats_grid_free(g);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("t");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("outside the grid"));
}
