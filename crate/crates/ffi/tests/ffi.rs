use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use biteuler_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bit_last_error()) }.to_string_lossy().into_owned()
}

fn model(id: &str) -> *mut BitModel {
    let id = CString::new(id).unwrap();
    let mut m = ptr::null_mut();
    let s = unsafe { bit_model_new(id.as_ptr(), ptr::null(), ptr::null(), 0, 1.0, &mut m) };
    assert_eq!(s, BitStatus::Ok, "{}", last_error());
    m
}

#[test]
fn model_lifecycle_and_dims() {
    let m = model("vdp");
    let (mut d, mut k) = (0, 0);
    assert_eq!(unsafe { bit_model_dims(m, &mut d, &mut k) }, BitStatus::Ok);
    assert_eq!((d, k), (2, 1));
    let mut x0 = [9.0; 2];
    assert_eq!(unsafe { bit_model_default_x0(m, x0.as_mut_ptr()) }, BitStatus::Ok);
    assert_eq!(x0, [1.0, 0.0]);
    unsafe { bit_model_free(m) };
    unsafe { bit_model_free(ptr::null_mut()) };
}

#[test]
fn unknown_model_and_parameter_report_errors() {
    let id = CString::new("lorenz").unwrap();
    let mut m = ptr::null_mut();
    let s = unsafe { bit_model_new(id.as_ptr(), ptr::null(), ptr::null(), 0, 1.0, &mut m) };
    assert_eq!(s, BitStatus::UnknownModel);
    assert!(last_error().contains("lorenz"));
    assert!(m.is_null());

    let id = CString::new("gbm").unwrap();
    let name = CString::new("zeta").unwrap();
    let names = [name.as_ptr()];
    let s = unsafe { bit_model_new(id.as_ptr(), names.as_ptr(), [1.0].as_ptr(), 1, 1.0, &mut m) };
    assert_eq!(s, BitStatus::InvalidArgument);
    assert!(last_error().contains("zeta"));
}

#[test]
fn null_pointers_rejected() {
    let mut out = [0.0];
    assert_eq!(unsafe { bit_tame(0.1, ptr::null(), 1, out.as_mut_ptr()) }, BitStatus::NullPointer);
    assert_eq!(unsafe { bit_model_dims(ptr::null(), ptr::null_mut(), ptr::null_mut()) }, BitStatus::NullPointer);
    assert_eq!(unsafe { bit_error_table_len(ptr::null()) }, 0);
}

#[test]
fn taming_matches_closed_form() {
    let (h, x) = (0.5, [0.3, -1.2]);
    let mut t = [0.0; 2];
    let mut j = [0.0; 2];
    let mut l = [0.0; 2];
    unsafe {
        assert_eq!(bit_tame(h, x.as_ptr(), 2, t.as_mut_ptr()), BitStatus::Ok);
        assert_eq!(bit_tame_jacobian_diag(h, x.as_ptr(), 2, j.as_mut_ptr()), BitStatus::Ok);
        assert_eq!(bit_tame_laplacian(h, x.as_ptr(), 2, l.as_mut_ptr()), BitStatus::Ok);
    }
    for i in 0..2 {
        let e = (-x[i].powi(4) / h).exp();
        assert!((t[i] - x[i] * e).abs() < 1e-15);
        assert!((j[i] - (1.0 - 4.0 * x[i].powi(4) / h) * e).abs() < 1e-14);
        let x3 = x[i].powi(3);
        let expected = (-20.0 * x3 / h + 16.0 * x3 * x[i].powi(4) / (h * h)) * e;
        assert!((l[i] - expected).abs() < 1e-13);
    }
    assert_eq!(unsafe { bit_tame(0.0, x.as_ptr(), 2, t.as_mut_ptr()) }, BitStatus::InvalidArgument);
    assert!((bit_stopping_threshold(64, 1.0) - (64f64.ln().sqrt()).exp()).abs() < 1e-12);
}

#[test]
fn run_path_matches_library() {
    let m = model("ginzburg-landau");
    let n = 32;
    let mut states = vec![0.0; n + 1];
    let mut tau = 0;
    let s = unsafe { bit_run_path(m, BIT_SCHEME_STOPPED, 1.0, n, [1.0].as_ptr(), 5, 2, states.as_mut_ptr(), &mut tau) };
    assert_eq!(s, BitStatus::Ok, "{}", last_error());
    let entry = biteuler::models::catalog_entry("ginzburg-landau", &[], 1.0).unwrap();
    let path = biteuler::brownian::generate_path(1.0, n, 1, 5, 2).unwrap();
    let grid = biteuler::GridSpec::new(1.0, n).unwrap();
    let run =
        biteuler::schemes::run_path(biteuler::SchemeKind::StoppedBit, &entry.model, &grid, &[1.0], &path).unwrap();
    assert_eq!(states, run.states);
    assert_eq!(tau, run.tau_index);
    assert_eq!(
        unsafe { bit_run_path(m, 7, 1.0, n, [1.0].as_ptr(), 5, 2, states.as_mut_ptr(), ptr::null_mut()) },
        BitStatus::InvalidArgument
    );
    unsafe { bit_model_free(m) };
}

#[test]
fn strong_error_table_accessors() {
    let m = model("gbm");
    let ns = [8usize, 16, 32, 64];
    let mut table = ptr::null_mut();
    let s = unsafe {
        bit_strong_error(
            m,
            BIT_SCHEME_EULER_MARUYAMA,
            -1,
            2.0,
            1.0,
            ns.as_ptr(),
            ns.len(),
            64,
            200,
            3,
            ptr::null(),
            &mut table,
        )
    };
    assert_eq!(s, BitStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { bit_error_table_len(table) }, 4);
    let mut row = BitErrorRow::default();
    assert_eq!(unsafe { bit_error_table_row(table, 1, &mut row) }, BitStatus::Ok);
    assert_eq!((row.n, row.paths, row.seed), (16, 200, 3));
    assert!(row.sup_error > 0.0 && row.sup_error < 0.1);
    assert_eq!(unsafe { bit_error_table_row(table, 4, &mut row) }, BitStatus::OutOfRange);
    let mut fit = BitRateFit::default();
    assert_eq!(unsafe { bit_error_table_fit(table, &mut fit) }, BitStatus::Ok);
    assert!(fit.slope > 0.2 && fit.slope < 1.5, "{}", fit.slope);
    unsafe { bit_error_table_free(table) };

    // 48 does not divide 64
    let bad = [16usize, 48];
    let s = unsafe {
        bit_strong_error(m, BIT_SCHEME_STOPPED, -1, 2.0, 1.0, bad.as_ptr(), 2, 64, 200, 3, ptr::null(), &mut table)
    };
    assert_eq!(s, BitStatus::NotDivisible);

    let gl = model("ginzburg-landau");
    let s = unsafe {
        bit_strong_error(gl, BIT_SCHEME_STOPPED, -1, 2.0, 1.0, ns.as_ptr(), 4, 64, 200, 3, ptr::null(), &mut table)
    };
    assert_eq!(s, BitStatus::NoExactSolution);
    unsafe {
        bit_model_free(m);
        bit_model_free(gl);
    }
}

#[test]
fn analysis_constants() {
    let mut eps = 0.0;
    assert_eq!(unsafe { bit_epsilon_n(1.0, 1, 1.0, 1, 1 << 20, &mut eps) }, BitStatus::Ok);
    let k = biteuler::diagnostics::AnalysisConstants::new(1.0, 1, 1.0, 1, 0.0, 1 << 20).unwrap();
    assert_eq!(eps, biteuler::diagnostics::epsilon_n(&k));
    assert_eq!(unsafe { bit_epsilon_n(0.5, 1, 1.0, 1, 16, &mut eps) }, BitStatus::Inadmissible);

    let mut b = 0.0;
    assert_eq!(unsafe { bit_moment_bound(1.5, 2, 1.0, 1, 0.5, 64, 0.0, 3.0, &mut b) }, BitStatus::Ok);
    assert!((b - 3.0).abs() < 1e-12, "bound at t = 0 is E[U(Y_0)]: {b}");
    assert_eq!(unsafe { bit_moment_bound(1.5, 2, 1.0, 1, 0.5, 64, 2.0, 3.0, &mut b) }, BitStatus::OutOfRange);
}

#[test]
fn header_is_valid_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/biteuler.h");
    assert!(header.exists());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"biteuler.h\"\n\
         int main(void) {\n\
           BitModel *m = 0; BitErrorRow row; BitRateFit fit; double x = 0.1, y;\n\
           BitStatus s = bit_model_new(\"gbm\", 0, 0, 0, 1.0, &m);\n\
           s = bit_tame(0.1, &x, 1, &y);\n\
           (void)row; (void)fit; (void)s; bit_model_free(m);\n\
           return BIT_STATUS_OK + BIT_SCHEME_STOPPED - 2;\n\
         }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
        .expect("a C compiler on PATH");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
