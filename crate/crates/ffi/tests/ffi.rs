// SPDX-License-Identifier: Apache-2.0

use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use equilibria_ffi::*;

fn last_error() -> Option<String> {
    let p = eq_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn new_model(n: usize, p: usize, q: usize, feedback: bool) -> *mut EqModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { eq_model_new_implicit(n, p, q, feedback, 11, &mut m) }, EqStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(eq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn predict_agrees_with_solve_and_readout() {
    let m = new_model(6, 3, 2, true);
    let u = [0.5, -1.0, 2.0];
    let (mut y, mut x) = ([0.0; 2], [0.0; 6]);
    let (mut it_p, mut it_s) = (0usize, 0usize);
    unsafe {
        assert_eq!(eq_model_predict(m, u.as_ptr(), 3, y.as_mut_ptr(), 2, &mut it_p), EqStatus::Ok);
        assert_eq!(eq_model_solve(m, u.as_ptr(), 3, x.as_mut_ptr(), 6, &mut it_s), EqStatus::Ok);
    }
    assert_eq!(it_p, it_s);
    assert!(x.iter().all(|v| *v >= 0.0));
    let (mut n, mut p, mut q) = (0, 0, 0);
    unsafe {
        assert_eq!(eq_model_dims(m, &mut n, &mut p, &mut q), EqStatus::Ok);
        eq_model_free(m);
    }
    assert_eq!((n, p, q), (6, 3, 2));
}

#[test]
fn wrong_buffer_length_sets_error_and_status() {
    let m = new_model(4, 2, 1, true);
    let u = [1.0, 2.0, 3.0];
    let mut y = [0.0; 1];
    let status = unsafe { eq_model_predict(m, u.as_ptr(), 3, y.as_mut_ptr(), 1, ptr::null_mut()) };
    assert_eq!(status, EqStatus::DimensionMismatch);
    assert!(last_error().unwrap().contains("dimension"));
    let ok = unsafe { eq_model_predict(m, u.as_ptr(), 2, y.as_mut_ptr(), 1, ptr::null_mut()) };
    assert_eq!(ok, EqStatus::Ok);
    assert_eq!(last_error(), None, "success clears the last error");
    unsafe { eq_model_free(m) };
}

#[test]
fn null_handles_are_rejected() {
    let mut norm = 0.0;
    assert_eq!(unsafe { eq_model_inf_norm(ptr::null(), &mut norm) }, EqStatus::NullPointer);
    assert_eq!(
        unsafe { eq_model_new_implicit(2, 2, 2, true, 0, ptr::null_mut()) },
        EqStatus::NullPointer
    );
    unsafe { eq_model_free(ptr::null_mut()) };
}

#[test]
fn invalid_dimensions_map_to_parameter_status() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { eq_model_new_implicit(0, 2, 2, true, 0, &mut m) },
        EqStatus::InvalidParameter
    );
    assert!(m.is_null());
}

#[test]
fn last_error_is_thread_local() {
    let mut norm = 0.0;
    unsafe { eq_model_inf_norm(ptr::null(), &mut norm) };
    assert!(last_error().is_some());
    std::thread::spawn(|| assert_eq!(last_error(), None)).join().unwrap();
}

#[test]
fn gradient_step_keeps_constraints_and_mask() {
    let (n, p, q) = (5, 3, 2);
    let m = new_model(n, p, q, false);
    let u = [1.0, -0.5, 0.25];
    let g = [1.0, -2.0];
    let (mut da, mut db, mut dc, mut dd) = (vec![0.0; n * n], vec![0.0; n * p], vec![0.0; q * n], vec![0.0; q * p]);
    let status = unsafe {
        eq_model_gradients(
            m,
            u.as_ptr(),
            p,
            g.as_ptr(),
            q,
            da.as_mut_ptr(),
            da.len(),
            db.as_mut_ptr(),
            db.len(),
            dc.as_mut_ptr(),
            dc.len(),
            dd.as_mut_ptr(),
            dd.len(),
        )
    };
    assert_eq!(status, EqStatus::Ok);
    for r in 0..n {
        for c in 0..=r {
            assert_eq!(da[r * n + c], 0.0);
        }
    }
    // dD = dL/dy uᵀ.
    assert_eq!(dd, vec![1.0, -0.5, 0.25, -2.0, 1.0, -0.5]);
    let mut norm = 0.0;
    unsafe {
        // Large negative step pushes A well outside the ball before projection.
        assert_eq!(
            eq_model_sgd_step(m, -100.0, da.as_ptr(), db.as_ptr(), dc.as_ptr(), dd.as_ptr()),
            EqStatus::Ok
        );
        assert_eq!(eq_model_inf_norm(m, &mut norm), EqStatus::Ok);
        eq_model_free(m);
    }
    assert!(norm <= 0.95 + 1e-12, "{norm}");
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    let m = new_model(4, 2, 3, true);
    let u = [0.3, -0.7];
    let (mut y1, mut y2) = ([0.0; 3], [0.0; 3]);
    let mut back = ptr::null_mut();
    let (mut inp, mut outp, mut count) = (0, 0, 0);
    unsafe {
        assert_eq!(eq_model_save(m, path.as_ptr()), EqStatus::Ok);
        assert_eq!(eq_model_load(path.as_ptr(), &mut back), EqStatus::Ok);
        assert_eq!(eq_model_io_len(back, &mut inp, &mut outp), EqStatus::Ok);
        assert_eq!(eq_model_parameter_count(back, &mut count), EqStatus::Ok);
        eq_model_predict(m, u.as_ptr(), 2, y1.as_mut_ptr(), 3, ptr::null_mut());
        eq_model_predict(back, u.as_ptr(), 2, y2.as_mut_ptr(), 3, ptr::null_mut());
        eq_model_free(m);
        eq_model_free(back);
    }
    assert_eq!((inp, outp), (2, 3));
    assert_eq!(count, 16 + 8 + 12 + 6);
    assert_eq!(y1, y2);

    let missing = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { eq_model_load(missing.as_ptr(), &mut h) }, EqStatus::Io);
}

#[test]
fn generated_header_compiles_as_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(header_dir.join("equilibria.h").exists(), "build.rs writes the header");
    let src = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(
        src.path(),
        "#include \"equilibria.h\"\n\
         int main(void) {\n\
           EqModel *m = 0;\n\
           EqStatus s = eq_model_new_implicit(3, 2, 1, true, 0, &m);\n\
           eq_model_free(m);\n\
           return s == EQ_STATUS_OK ? 0 : (int)s;\n\
         }\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(&header_dir)
        .arg(src.path())
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            return;
        }
    };
    assert!(status.success());
}
