use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use gaga_ffi::*;

/// Two groups of four arrays; genes 0..3 shifted by a factor 4 in group 2.
fn data() -> (Vec<f64>, Vec<usize>, usize) {
    let n = 40;
    let mut v = Vec::new();
    for i in 0..n {
        let base = 5.0 + i as f64;
        for j in 0..8 {
            let wobble = 1.0 + 0.03 * (((i * 7 + j * 3) % 5) as f64 - 2.0);
            let shift = if i < 4 && j >= 4 { 4.0 } else { 1.0 };
            v.push(base * wobble * shift);
        }
    }
    (v, vec![0, 0, 0, 0, 1, 1, 1, 1], n)
}

fn last_error() -> String {
    let p = gaga_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handles {
    data: *mut GagaDataset,
    pats: *mut GagaPatterns,
    fit: *mut GagaFit,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            gaga_fit_free(self.fit);
            gaga_patterns_free(self.pats);
            gaga_dataset_free(self.data);
        }
    }
}

fn fitted() -> (Handles, usize) {
    let (v, labels, n) = data();
    let mut h = Handles { data: ptr::null_mut(), pats: ptr::null_mut(), fit: ptr::null_mut() };
    unsafe {
        assert_eq!(gaga_dataset_new(v.as_ptr(), n, 8, labels.as_ptr(), &mut h.data), GagaStatus::Ok);
        assert_eq!(gaga_patterns_two_group(&mut h.pats), GagaStatus::Ok);
        assert_eq!(gaga_fit(h.data, h.pats, ptr::null(), &mut h.fit), GagaStatus::Ok);
    }
    (h, n)
}

#[test]
fn fit_posterior_and_find_genes() {
    let (h, n) = fitted();
    unsafe {
        let (mut genes, mut groups) = (0, 0);
        assert_eq!(gaga_dataset_shape(h.data, &mut genes, &mut groups), GagaStatus::Ok);
        assert_eq!((genes, groups), (n, 2));

        let mut post = vec![0.0; n * 2];
        assert_eq!(gaga_posterior(h.fit, h.data, post.as_mut_ptr(), post.len()), GagaStatus::Ok);
        for row in post.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
        assert!(post[1] > 0.9, "shifted gene posterior {}", post[1]);

        let mut declared = vec![0u8; n];
        let mut pattern = vec![0usize; n];
        let mut count = 0;
        let st = gaga_find_genes(h.fit, h.data, 0.05, declared.as_mut_ptr(), pattern.as_mut_ptr(), n, &mut count);
        assert_eq!(st, GagaStatus::Ok);
        assert_eq!(count, declared.iter().filter(|&&d| d == 1).count());
        assert!(declared[..4].iter().all(|&d| d == 1));
        for (d, p) in declared.iter().zip(&pattern) {
            assert_eq!(*d == 1, *p == 1);
        }

        let (mut ll, mut it, mut conv) = (0.0, 0, -1);
        assert_eq!(gaga_fit_summary(h.fit, &mut ll, &mut it, &mut conv), GagaStatus::Ok);
        assert!(ll.is_finite() && it >= 1 && (conv == 0 || conv == 1));
    }
}

#[test]
fn save_load_round_trip() {
    let (h, n) = fitted();
    let dir = std::env::temp_dir().join(format!("gaga-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = CString::new(dir.join("fit.json").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(gaga_fit_save(h.fit, file.as_ptr()), GagaStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(gaga_fit_load(file.as_ptr(), &mut loaded), GagaStatus::Ok);
        let mut a = vec![0.0; n * 2];
        let mut b = vec![0.0; n * 2];
        gaga_posterior(h.fit, h.data, a.as_mut_ptr(), a.len());
        gaga_posterior(loaded, h.data, b.as_mut_ptr(), b.len());
        assert_eq!(a, b);
        let mut np = 0;
        assert_eq!(gaga_fit_n_patterns(loaded, &mut np), GagaStatus::Ok);
        assert_eq!(np, 2);
        gaga_fit_free(loaded);

        let missing = CString::new(dir.join("absent.json").to_str().unwrap()).unwrap();
        assert_eq!(gaga_fit_load(missing.as_ptr(), &mut loaded), GagaStatus::IoError);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn error_codes() {
    let (v, labels, n) = data();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(gaga_dataset_new(ptr::null(), n, 8, labels.as_ptr(), &mut d), GagaStatus::NullPointer);
        assert!(last_error().contains("values"));

        let mut bad = v.clone();
        bad[3] = -1.0;
        assert_eq!(gaga_dataset_new(bad.as_ptr(), n, 8, labels.as_ptr(), &mut d), GagaStatus::DataError);
        assert!(last_error().contains("non-positive"));
        assert!(d.is_null());

        let mut p = ptr::null_mut();
        let codes = [0usize, 1, 0, 0];
        assert_eq!(gaga_patterns_new(codes.as_ptr(), 2, 2, &mut p), GagaStatus::DataError);

        let (h, _) = fitted();
        let mut small = vec![0.0; 3];
        assert_eq!(gaga_posterior(h.fit, h.data, small.as_mut_ptr(), 3), GagaStatus::InvalidArgument);
        let mut out = 0;
        assert_eq!(
            gaga_find_genes(h.fit, h.data, 1.5, ptr::null_mut(), ptr::null_mut(), n, &mut out),
            GagaStatus::InvalidArgument
        );
        assert_eq!(gaga_fit_summary(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), GagaStatus::NullPointer);
    }
}

#[test]
fn gas_normalizer_reduces_to_gamma() {
    let mut out = 0.0;
    unsafe {
        let st = gaga_gas_log_norm_const(ptr::null(), ptr::null(), 0, 2.5, 1.5, 1.0, 1.0, &mut out);
        assert_eq!(st, GagaStatus::Ok);
    }
    // Γ(5/2) = (3/4)√π
    let exact = 2.5 * 1.5f64.ln() - (0.75 * std::f64::consts::PI.sqrt()).ln();
    assert!((out - exact).abs() < 1e-14, "{out} vs {exact}");

    // c + Σ a ln(s/a) < 0 here
    let (a, s) = ([3.0, 4.0], [2.0, 3.0]);
    unsafe {
        let st = gaga_gas_log_norm_const(a.as_ptr(), s.as_ptr(), 2, 2.0, 0.1, 1.5, 1.0, &mut out);
        assert_eq!(st, GagaStatus::NumericError);
    }
    assert!(last_error().contains("integrability"));
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let include = here.join("include");
    assert!(include.join("gaga.h").exists());
    let lib = target_dir().join("libgaga_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C link check: no C compiler or static library");
        return;
    }
    let exe = std::env::temp_dir().join(format!("gaga-ffi-smoke-{}", std::process::id()));
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(here.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_file(&exe);
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
