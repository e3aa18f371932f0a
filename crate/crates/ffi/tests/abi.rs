use std::ffi::{CStr, CString};
use std::ptr;

use tpfc_ffi::*;

fn preset(name: &str) -> *mut TpfcScenario {
    let name = CString::new(name).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tpfc_scenario_load(name.as_ptr(), &mut s) }, TpfcStatus::Ok);
    assert!(!s.is_null());
    s
}

fn last_error() -> String {
    let p = tpfc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn car_plan_round_trip() {
    let s = preset("car4_table2");
    let (mut nx, mut nu, mut n) = (0, 0, 0);
    unsafe {
        assert_eq!(tpfc_scenario_dims(s, &mut nx, &mut nu, &mut n), TpfcStatus::Ok);
    }
    assert_eq!((nx, nu, n), (4, 2, 229));

    let mut buf = [0 as std::ffi::c_char; 8];
    let full = unsafe { tpfc_scenario_name(s, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(full, "car4_table2".len());
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "car4_ta");

    let mut plan = ptr::null_mut();
    assert_eq!(unsafe { tpfc_plan_compute(s, &mut plan) }, TpfcStatus::Ok);
    let mut cost = 0.0;
    assert_eq!(unsafe { tpfc_plan_nominal_cost(plan, &mut cost) }, TpfcStatus::Ok);
    assert!(cost > 0.0);

    // At the nominal state the policy returns the nominal control.
    let mut x = [0.0; 4];
    let mut u_nom = [0.0; 2];
    let mut u = [0.0; 2];
    unsafe {
        assert_eq!(tpfc_plan_nominal_state(plan, 10, x.as_mut_ptr(), 4), TpfcStatus::Ok);
        assert_eq!(
            tpfc_plan_nominal_control(plan, 10, u_nom.as_mut_ptr(), 2),
            TpfcStatus::Ok
        );
        for c in [TpfcController::Tpfc, TpfcController::Tlqr, TpfcController::Ilqg] {
            assert_eq!(
                tpfc_policy_eval(plan, c, 10, x.as_ptr(), 4, u.as_mut_ptr(), 2),
                TpfcStatus::Ok
            );
            assert_eq!(u, u_nom);
        }
    }

    let mut out = TpfcRolloutSummary::default();
    assert_eq!(
        unsafe { tpfc_rollout(plan, TpfcController::Tpfc, 0.0, 1, &mut out) },
        TpfcStatus::Ok
    );
    assert!(((out.cost - cost) / cost).abs() < 1e-8);
    assert_eq!(out.replans, 0);

    unsafe {
        tpfc_plan_free(plan);
        tpfc_scenario_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut s = ptr::null_mut();
    let bad = CString::new("no_such_preset").unwrap();
    assert_eq!(unsafe { tpfc_scenario_load(bad.as_ptr(), &mut s) }, TpfcStatus::Io);
    assert!(s.is_null());

    let json = CString::new("{\"name\": \"x\"}").unwrap();
    assert_eq!(
        unsafe { tpfc_scenario_from_json(json.as_ptr(), &mut s) },
        TpfcStatus::Scenario
    );
    assert!(last_error().contains("missing field"), "{}", last_error());

    assert_eq!(
        unsafe { tpfc_scenario_load(ptr::null(), &mut s) },
        TpfcStatus::NullPointer
    );
    assert_eq!(
        unsafe { tpfc_scenario_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        TpfcStatus::NullPointer
    );

    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { tpfc_scenario_load(invalid.as_ptr().cast(), &mut s) },
        TpfcStatus::InvalidUtf8
    );

    // Freeing null is a no-op.
    unsafe {
        tpfc_scenario_free(ptr::null_mut());
        tpfc_plan_free(ptr::null_mut());
    }
}

#[test]
fn policy_rejects_bad_shapes() {
    let s = preset("car4_table2");
    let mut plan = ptr::null_mut();
    assert_eq!(unsafe { tpfc_plan_compute(s, &mut plan) }, TpfcStatus::Ok);
    let x = [0.0; 4];
    let mut u = [0.0; 2];
    unsafe {
        assert_eq!(
            tpfc_policy_eval(plan, TpfcController::Tpfc, 0, x.as_ptr(), 3, u.as_mut_ptr(), 2),
            TpfcStatus::Dimension
        );
        assert_eq!(
            tpfc_policy_eval(plan, TpfcController::Tpfc, 229, x.as_ptr(), 4, u.as_mut_ptr(), 2),
            TpfcStatus::InvalidArgument
        );
        assert_eq!(
            tpfc_policy_eval(plan, TpfcController::Nmpc, 0, x.as_ptr(), 4, u.as_mut_ptr(), 2),
            TpfcStatus::InvalidArgument
        );
        assert!(last_error().contains("NMPC"));
        let mut out = TpfcRolloutSummary::default();
        assert_eq!(
            tpfc_rollout(plan, TpfcController::Tpfc, -1.0, 0, &mut out),
            TpfcStatus::InvalidArgument
        );
        tpfc_plan_free(plan);
        tpfc_scenario_free(s);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/tpfc.h");
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .status()
        .unwrap();
    assert!(status.success());
}
