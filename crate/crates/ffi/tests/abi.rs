use std::ffi::CStr;
use std::ptr;

use freqmerge_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fm_last_error()) }.to_string_lossy().into_owned()
}

fn grid(h: usize, w: usize, c: usize, data: &[f64]) -> *mut FmGrid {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { fm_grid_new(h, w, c, data.as_ptr(), &mut g) }, FmStatus::FM_OK);
    g
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(fm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn grid_round_trip_and_shape() {
    let data: Vec<f64> = (0..12).map(f64::from).collect();
    let g = grid(2, 3, 2, &data);
    let (mut h, mut w, mut c) = (0, 0, 0);
    unsafe {
        assert_eq!(fm_grid_shape(g, &mut h, &mut w, &mut c), FmStatus::FM_OK);
        assert_eq!((h, w, c), (2, 3, 2));
        let mut back = vec![0.0; 12];
        assert_eq!(fm_grid_read(g, back.as_mut_ptr(), 12), FmStatus::FM_OK);
        assert_eq!(back, data);
        assert_eq!(fm_grid_read(g, back.as_mut_ptr(), 11), FmStatus::FM_DIMENSION);
        fm_grid_free(g);
    }
}

#[test]
fn errors_map_to_codes() {
    let mut g = ptr::null_mut();
    let bad = [f64::NAN];
    unsafe {
        assert_eq!(fm_grid_new(1, 1, 1, bad.as_ptr(), &mut g), FmStatus::FM_NON_FINITE);
        assert!(g.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(fm_grid_new(1, 1, 1, ptr::null(), &mut g), FmStatus::FM_NULL_POINTER);
        let mut b = 0.0;
        assert_eq!(fm_cantelli_bound(-1.0, 1.0, 5, &mut b), FmStatus::FM_DOMAIN);
        assert_eq!(fm_cantelli_bound(1.0, 1.0, 1, &mut b), FmStatus::FM_OK);
        assert_eq!(b, 0.5);
        assert!(last_error().is_empty());
        let one = grid(1, 1, 1, &[1.0]);
        let mut s = [0.0];
        assert_eq!(fm_score_tokens(one, 99, s.as_mut_ptr(), 1), FmStatus::FM_CONFIG);
        fm_grid_free(one);
        fm_grid_free(ptr::null_mut());
    }
}

#[test]
fn l2_score_through_the_abi() {
    let g = grid(1, 1, 2, &[3.0, 4.0]);
    let mut s = [0.0];
    unsafe {
        assert_eq!(
            fm_score_tokens(g, FmScoringMethod::FM_L2_NORM as u32, s.as_mut_ptr(), 1),
            FmStatus::FM_OK
        );
        fm_grid_free(g);
    }
    assert_eq!(s[0], 5.0);
}

#[test]
fn kvd_block_of_constant_grid() {
    let g = grid(4, 4, 1, &[2.0; 16]);
    let mut small = ptr::null_mut();
    unsafe {
        assert_eq!(fm_ie_kvd(g, 2, 0.9, &mut small), FmStatus::FM_OK);
        let mut vals = [0.0; 4];
        assert_eq!(fm_grid_read(small, vals.as_mut_ptr(), 4), FmStatus::FM_OK);
        for v in vals {
            assert!((v - 2.0).abs() < 1e-12);
        }
        fm_grid_free(small);
        fm_grid_free(g);
    }
}

#[test]
fn plan_merge_unmerge_preserves_constant_grid() {
    let data = vec![1.5; 4 * 4 * 3];
    let g = grid(4, 4, 3, &data);
    let mut plan = ptr::null_mut();
    unsafe {
        assert_eq!(
            fm_lgtm_plan(g, FmScoringMethod::FM_LAPLACIAN_L1 as u32, 2, 0.5, &mut plan),
            FmStatus::FM_OK
        );
        let (mut n, mut nr) = (0, 0);
        assert_eq!(fm_plan_counts(plan, &mut n, &mut nr), FmStatus::FM_OK);
        assert_eq!((n, nr), (16, 8));
        let mut reduced = vec![0.0; nr * 3];
        assert_eq!(fm_plan_merge(plan, g, reduced.as_mut_ptr(), reduced.len()), FmStatus::FM_OK);
        let mut back = ptr::null_mut();
        assert_eq!(
            fm_plan_unmerge(plan, reduced.as_ptr(), reduced.len(), 3, 4, 4, &mut back),
            FmStatus::FM_OK
        );
        let mut vals = vec![0.0; 48];
        assert_eq!(fm_grid_read(back, vals.as_mut_ptr(), 48), FmStatus::FM_OK);
        assert!(vals.iter().all(|v| (v - 1.5).abs() < 1e-12));
        fm_grid_free(back);
        fm_plan_free(plan);
        fm_grid_free(g);
    }
}

#[test]
fn improvement_and_flops() {
    let mut rep = FmImprovementReport::default();
    let mut f = FmFlopReport::default();
    unsafe {
        assert_eq!(fm_theorem1_check(1.0, 1.0, 0.0, 0.5, 10, &mut rep), FmStatus::FM_OK);
        assert_eq!(fm_flop_model(2, 2, 1, 1, 1, &mut f), FmStatus::FM_OK);
    }
    assert!(rep.exact_condition_holds);
    assert!(rep.cantelli_after < rep.cantelli_before);
    assert_eq!(f.qk_flops, 8);
    assert_eq!(f.total, f.qk_flops + f.av_flops + f.softmax_flops + f.projection_flops);
}

#[test]
fn header_is_checked_in_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/freqmerge.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["fm_grid_new", "fm_lgtm_plan", "fm_theorem1_check", "FM_PANIC", "typedef struct FmGrid FmGrid"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-Wall", "-Werror", header])
        .status()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(status.success());
}

#[test]
fn c_client_links_against_staticlib() {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libfreqmerge_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; link check skipped", lib.display());
        return;
    }
    let dir = env!("CARGO_MANIFEST_DIR");
    let exe = std::env::temp_dir().join(format!("fm_c_client_{}", std::process::id()));
    let Ok(status) = std::process::Command::new("cc")
        .arg(format!("{dir}/tests/c_client.c"))
        .arg(format!("-I{dir}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
    else {
        eprintln!("no C compiler; link check skipped");
        return;
    };
    assert!(status.success(), "C client failed to build");
    let out = std::process::Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_file(&exe);
    assert!(out.status.success(), "C client exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
