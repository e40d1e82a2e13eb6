use std::ffi::{CStr, CString};
use std::ptr;

use cvp_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(cvp_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

fn lattice(rows: usize, cols: usize) -> *mut CvpInstance {
    let ext = [rows, cols];
    let per = [1usize];
    let mut h = ptr::null_mut();
    let s = unsafe {
        cvp_instance_generate_lattice(2, ext.as_ptr(), 1.0, 1.5, 1.0, per.as_ptr(), 1, 1.0, &mut h)
    };
    assert_eq!(s, CvpStatus::Ok, "{}", last_error());
    h
}

#[test]
fn critical_weights_zero_ell() {
    let h = lattice(8, 4);
    let mut crit = ptr::null_mut();
    unsafe {
        assert_eq!(cvp_critical_weights(h, &mut crit), CvpStatus::Ok);
        let (mut n, mut b) = (0, 0);
        assert_eq!(cvp_instance_shape(crit, &mut n, &mut b), CvpStatus::Ok);
        assert_eq!((n, b), (32, 3));
        let mut ell = vec![1.0; n];
        let mut grad = vec![0.0; 2 * n];
        assert_eq!(
            cvp_eval_ell(crit, ell.as_mut_ptr(), grad.as_mut_ptr()),
            CvpStatus::Ok
        );
        assert!(ell.iter().all(|x| x.abs() < 1e-12));
        // spatial gradients vanish by the periodic symmetry
        assert!(grad.chunks(2).all(|g| g[1].abs() < 1e-12));
        let mut s = 0.0;
        assert_eq!(cvp_eval_action(crit, &mut s), CvpStatus::Ok);
        assert!(s > 0.0);
        cvp_instance_free(crit);
        cvp_instance_free(h);
    }
}

#[test]
fn json_round_trip_and_delta() {
    let h = lattice(6, 4);
    unsafe {
        let mut js = ptr::null_mut();
        assert_eq!(cvp_instance_to_json(h, &mut js), CvpStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(cvp_instance_from_json(js, &mut back), CvpStatus::Ok);
        cvp_string_free(js);

        // Δ is linear: Δ(2v) = 2Δv, and agrees between the two handles
        let len = 24 * 3;
        let v: Vec<f64> = (0..len)
            .map(|k| ((k * 7 % 11) as f64 - 5.0) / 5.0)
            .collect();
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let mut a = vec![0.0; len];
        let mut b = vec![0.0; len];
        assert_eq!(
            cvp_apply_delta(h, v.as_ptr(), len, a.as_mut_ptr()),
            CvpStatus::Ok
        );
        assert_eq!(
            cvp_apply_delta(back, v2.as_ptr(), len, b.as_mut_ptr()),
            CvpStatus::Ok
        );
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        cvp_instance_free(back);
        cvp_instance_free(h);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut h = ptr::null_mut();
        let bad = CString::new("{\"dim\": 1").unwrap();
        assert_eq!(
            cvp_instance_from_json(bad.as_ptr(), &mut h),
            CvpStatus::Parse
        );
        assert!(last_error().contains("line 1"));
        assert!(h.is_null());

        let ext = [2usize, 2];
        let per = [1usize];
        let s = cvp_instance_generate_lattice(
            2,
            ext.as_ptr(),
            1.0,
            1.5,
            1.0,
            per.as_ptr(),
            1,
            1.0,
            &mut h,
        );
        assert_eq!(s, CvpStatus::InvalidArgument);
        assert!(last_error().contains("periodic"));

        assert_eq!(
            cvp_instance_from_json(ptr::null(), &mut h),
            CvpStatus::NullPointer
        );
        let mut x = 0.0;
        assert_eq!(cvp_eval_action(ptr::null(), &mut x), CvpStatus::NullPointer);

        let g = lattice(4, 4);
        let mut short = vec![0.0; 5];
        assert_eq!(
            cvp_apply_delta(g, short.as_ptr(), 5, short.as_mut_ptr()),
            CvpStatus::InvalidArgument
        );
        let (mut pass, mut worst) = (true, 0.0);
        assert_eq!(
            cvp_check_el(g, -1.0, &mut pass, &mut worst),
            CvpStatus::InvalidArgument
        );
        cvp_instance_free(g);
    }
}

#[test]
fn el_check_on_critical_torus() {
    let ext = [6usize, 6];
    let per = [0usize, 1];
    let mut h = ptr::null_mut();
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(
            cvp_instance_generate_lattice(
                2,
                ext.as_ptr(),
                1.0,
                1.5,
                1.0,
                per.as_ptr(),
                2,
                1.0,
                &mut h
            ),
            CvpStatus::Ok
        );
        assert_eq!(cvp_critical_weights(h, &mut c), CvpStatus::Ok);
        let (mut pass, mut worst) = (false, 1.0);
        assert_eq!(cvp_check_el(c, 1e-10, &mut pass, &mut worst), CvpStatus::Ok);
        assert!(pass, "worst {worst}");
        assert_eq!(last_error(), "");
        cvp_instance_free(c);
        cvp_instance_free(h);
    }
}

#[test]
fn header_is_valid_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/cvp.h");
    let text = std::fs::read_to_string(&header).expect("generated header");
    for f in [
        "cvp_instance_load",
        "cvp_apply_delta",
        "cvp_check_el",
        "cvp_instance_free",
        "CVP_STATUS_PANIC",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    // syntax check when a C compiler is around
    let src = std::env::temp_dir().join("cvp_header_check.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ return CVP_STATUS_OK; }}\n",
            header.display()
        ),
    )
    .unwrap();
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror"])
        .arg(&src)
        .output()
    {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
