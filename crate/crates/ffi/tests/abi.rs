use std::ffi::{CStr, CString};
use std::ptr;

use attnsep_ffi::*;

fn last_error() -> String {
    let p = attnsep_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_spec(family: AttnsepFamily, param: &str, values: &[f64]) -> *mut AttnsepSweepSpec {
    let name = CString::new(param).unwrap();
    let mut spec = ptr::null_mut();
    let status = unsafe {
        attnsep_sweep_spec_new(
            family,
            name.as_ptr(),
            values.as_ptr(),
            values.len(),
            &mut spec,
        )
    };
    assert_eq!(status, AttnsepStatus::Ok);
    spec
}

fn run(spec: *const AttnsepSweepSpec, threads: u32) -> *mut AttnsepSweepResult {
    let mut result = ptr::null_mut();
    assert_eq!(
        unsafe { attnsep_sweep_run(spec, threads, &mut result) },
        AttnsepStatus::Ok
    );
    result
}

#[test]
fn sweep_round_trip_matches_csv() {
    let spec = new_spec(AttnsepFamily::Cross, "d", &[5.0, 11.0, 12.0]);
    unsafe {
        assert_eq!(attnsep_sweep_spec_set_trials(spec, 25), AttnsepStatus::Ok);
        assert_eq!(attnsep_sweep_spec_set_seed(spec, 9), AttnsepStatus::Ok);
    }
    let result = run(spec, 2);
    unsafe {
        assert_eq!(attnsep_sweep_result_len(result), 2);
        assert_eq!(attnsep_sweep_result_skipped(result), 1);
        let mut row = AttnsepSweepRow::default();
        assert_eq!(
            attnsep_sweep_result_row(result, 1, &mut row),
            AttnsepStatus::Ok
        );
        assert_eq!(row.swept_value, 11.0);
        assert_eq!(row.trials, 25);
        assert_eq!(row.seed, 9);
        assert_eq!(row.ratio, row.successes as f64 / 25.0);
        assert_eq!(
            attnsep_sweep_result_row(result, 2, &mut row),
            AttnsepStatus::InvalidArgument
        );
        assert!(last_error().contains("out of range"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cross.csv");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(
            attnsep_sweep_result_write_csv(result, cpath.as_ptr()),
            AttnsepStatus::Ok
        );
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("cross,d,11,25,"));

        // Same seed on a different thread count gives the same rows.
        let again = run(spec, 1);
        let mut other = AttnsepSweepRow::default();
        attnsep_sweep_result_row(again, 1, &mut other);
        attnsep_sweep_result_row(result, 1, &mut row);
        assert_eq!(row, other);
        attnsep_sweep_result_free(again);
        attnsep_sweep_result_free(result);
        attnsep_sweep_spec_free(spec);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    unsafe {
        let mut spec = ptr::null_mut();
        let bad = CString::new("zeta").unwrap();
        let status = attnsep_sweep_spec_new(
            AttnsepFamily::Toy,
            bad.as_ptr(),
            [1.0].as_ptr(),
            1,
            &mut spec,
        );
        assert_eq!(status, AttnsepStatus::InvalidArgument);
        assert!(last_error().contains("zeta"));
        assert!(spec.is_null());

        let status =
            attnsep_sweep_spec_new(AttnsepFamily::Toy, ptr::null(), ptr::null(), 0, &mut spec);
        assert_eq!(status, AttnsepStatus::NullPointer);

        let empty = new_spec(AttnsepFamily::Toy, "n", &[]);
        let mut result = ptr::null_mut();
        assert_eq!(
            attnsep_sweep_run(empty, 1, &mut result),
            AttnsepStatus::InvalidConfig
        );
        assert!(result.is_null());

        let name = CString::new("n").unwrap();
        assert_eq!(
            attnsep_sweep_spec_set(empty, name.as_ptr(), 2.5),
            AttnsepStatus::InvalidConfig
        );
        assert_eq!(
            attnsep_sweep_spec_set(ptr::null_mut(), name.as_ptr(), 2.0),
            AttnsepStatus::NullPointer
        );
        attnsep_sweep_spec_free(empty);

        assert_eq!(attnsep_sweep_result_len(ptr::null()), 0);
        attnsep_sweep_result_free(ptr::null_mut());
        attnsep_sweep_spec_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_last_error() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(
            attnsep_tensor_trick_residual(ptr::null(), ptr::null(), ptr::null(), 2, 2, &mut out),
            AttnsepStatus::NullPointer
        );
        assert!(!attnsep_last_error_message().is_null());
        let a1 = [0.5, -0.2, 0.1, 0.3];
        let a2 = [0.4, 0.7, -0.6, 0.2];
        let x = [1.0, 0.0, 0.5, -1.0];
        assert_eq!(
            attnsep_tensor_trick_residual(a1.as_ptr(), a2.as_ptr(), x.as_ptr(), 2, 2, &mut out),
            AttnsepStatus::Ok
        );
        assert!(out <= 1e-12);
        assert!(attnsep_last_error_message().is_null());
    }
}

#[test]
fn verify_through_abi() {
    let (mut passed, mut total) = (0usize, 0usize);
    assert_eq!(
        unsafe { attnsep_verify(true, &mut passed, &mut total) },
        AttnsepStatus::Ok
    );
    assert!(total >= 30);
    assert_eq!(passed, total);
}
